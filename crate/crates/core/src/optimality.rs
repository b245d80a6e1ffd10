//! Euler–Lagrange, transversality and Hamiltonian-form residuals of discrete
//! paths.
//!
//! Momenta `Z[j] = ∇_v L(γ[j], v[j])` live on the intervals of the forward
//! difference; the time derivative of `Z` at node `j` is the backward quotient
//! `(Z[j] - Z[j-1]) / dt`. With this staggering the collective residual is the
//! gradient of the discrete total cost divided by `-dt/N`.

use serde::Serialize;

use crate::ensemble::{velocity, NodeField, SinglePath, TrajectoryGrid};
use crate::error::{check_dim, Error, Result};
use crate::model::{PotentialSpec, ProblemSpec};
use crate::scalar::{dot, Scalar};

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport<T> {
    pub label: String,
    #[serde(skip)]
    pub per_node: NodeField<T>,
    /// Largest absolute component.
    pub sup_norm: T,
    /// `sqrt(Σ |r_node|² / node count)`.
    pub l2_norm: T,
}

impl<T: Scalar> ResidualReport<T> {
    fn new(label: &str, per_node: NodeField<T>) -> Self {
        let nodes = (per_node.rows * per_node.players).max(1);
        let sq: T = per_node.data.iter().map(|&x| x * x).sum();
        Self {
            label: label.to_string(),
            sup_norm: per_node.sup_norm(),
            l2_norm: (sq / T::from_usize_lossy(nodes)).sqrt(),
            per_node,
        }
    }
}

/// `scale · Σ_k ∇Π(x - y_k)` over the atoms of `slice`, added into `out`.
fn add_field<T: Scalar>(pot: &PotentialSpec<T>, x: &[T], slice: &[T], scale: T, out: &mut [T]) {
    if pot.is_zero() {
        return;
    }
    let d = x.len();
    let mut z = vec![T::zero(); d];
    for y in slice.chunks(d) {
        for c in 0..d {
            z[c] = x[c] - y[c];
        }
        pot.add_gradient(&z, scale, out);
    }
}

fn check<T: Scalar>(gamma: &TrajectoryGrid<T>, spec: &ProblemSpec<T>) -> Result<()> {
    check_dim("trajectory dimension", spec.dimension, gamma.dim)?;
    spec.validate()?;
    if gamma.time.steps < 2 {
        return Err(Error::InvalidArgument("residuals need at least two time steps".into()));
    }
    Ok(())
}

/// Node-aligned momenta `Z[j][i]`, `j = 0..M-1`.
fn momenta<T: Scalar>(gamma: &TrajectoryGrid<T>, spec: &ProblemSpec<T>) -> NodeField<T> {
    let v = velocity(gamma);
    let mut z = NodeField::zeros(v.rows, v.players, v.dim);
    for j in 0..v.rows {
        for i in 0..v.players {
            spec.lagrangian
                .add_grad_v(gamma.node(j, i), v.at(j, i), T::one(), z.at_mut(j, i));
        }
    }
    z
}

/// `(Z[j] - Z[j-1])/dt - ∇_q L(γ[j], v[j]) - (1/N) Σ_k ∇Φ(γ[j][i] - γ[j][k])`
/// at interior nodes `j = 1..M-1` (row `j-1`).
pub fn el_residual_collective<T: Scalar>(
    gamma: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
) -> Result<ResidualReport<T>> {
    check(gamma, spec)?;
    let (m, n, d) = (gamma.time.steps, gamma.players.count, gamma.dim);
    let dt = gamma.time.dt();
    let w = gamma.players.weight::<T>();
    let v = velocity(gamma);
    let z = momenta(gamma, spec);
    let mut out = NodeField::zeros(m - 1, n, d);
    for j in 1..m {
        for i in 0..n {
            let q = gamma.node(j, i);
            let r = out.at_mut(j - 1, i);
            for c in 0..d {
                r[c] = (z.at(j, i)[c] - z.at(j - 1, i)[c]) / dt;
            }
            spec.lagrangian.add_grad_q(q, v.at(j, i), -T::one(), r);
            add_field(&spec.phi, q, gamma.slice(j), -w, r);
        }
    }
    Ok(ResidualReport::new("el_collective", out))
}

/// `(1/N) Σ_k ∇Ψ(γ[0][i] - γ[0][k]) - Z[0][i]`, one row.
pub fn boundary_residual<T: Scalar>(gamma: &TrajectoryGrid<T>, spec: &ProblemSpec<T>) -> Result<ResidualReport<T>> {
    check(gamma, spec)?;
    let (n, d) = (gamma.players.count, gamma.dim);
    let w = gamma.players.weight::<T>();
    let z = momenta(gamma, spec);
    let mut out = NodeField::zeros(1, n, d);
    for i in 0..n {
        let r = out.at_mut(0, i);
        add_field(&spec.psi, gamma.node(0, i), gamma.slice(0), w, r);
        for c in 0..d {
            r[c] -= z.at(0, i)[c];
        }
    }
    Ok(ResidualReport::new("el_boundary", out))
}

/// Path together with its momenta `Z = ∇_v L(γ, v)` on the forward-difference intervals.
#[derive(Clone, Debug)]
pub struct HamiltonianState<T> {
    pub gamma: TrajectoryGrid<T>,
    pub z: NodeField<T>,
}

impl<T: Scalar> HamiltonianState<T> {
    /// `max |v - ∇_p H(γ, Z)|` over all nodes.
    pub fn reconstruction_error(&self, spec: &ProblemSpec<T>) -> T {
        let v = velocity(&self.gamma);
        let mut worst = T::zero();
        for j in 0..self.z.rows {
            for i in 0..self.z.players {
                let back = spec.lagrangian.velocity_from_momentum(self.gamma.node(j, i), self.z.at(j, i));
                worst = worst.max(crate::scalar::sup_distance(&back, v.at(j, i)));
            }
        }
        worst
    }

    /// `max |L(γ, v) + H(γ, Z) - <v, Z>|` over all nodes.
    pub fn duality_closure(&self, spec: &ProblemSpec<T>) -> T {
        let v = velocity(&self.gamma);
        let mut worst = T::zero();
        for j in 0..self.z.rows {
            for i in 0..self.z.players {
                let (q, vv, p) = (self.gamma.node(j, i), v.at(j, i), self.z.at(j, i));
                let gap = spec.lagrangian.value(q, vv) + spec.lagrangian.hamiltonian_value(q, p) - dot(vv, p);
                worst = worst.max(gap.abs());
            }
        }
        worst
    }
}

pub fn to_hamiltonian<T: Scalar>(gamma: &TrajectoryGrid<T>, spec: &ProblemSpec<T>) -> Result<HamiltonianState<T>> {
    check_dim("trajectory dimension", spec.dimension, gamma.dim)?;
    spec.validate()?;
    Ok(HamiltonianState {
        gamma: gamma.clone(),
        z: momenta(gamma, spec),
    })
}

/// `(Z[j] - Z[j-1])/dt + ∇_q H(γ[j], Z[j]) - (1/N) Σ_k ∇Φ(γ[j][i] - γ[j][k])`
/// at interior nodes.
pub fn hamiltonian_residual<T: Scalar>(state: &HamiltonianState<T>, spec: &ProblemSpec<T>) -> Result<ResidualReport<T>> {
    let gamma = &state.gamma;
    check(gamma, spec)?;
    let (m, n, d) = (gamma.time.steps, gamma.players.count, gamma.dim);
    if state.z.rows != m || state.z.players != n || state.z.dim != d {
        return Err(Error::GridMismatch("momentum grid does not match the trajectory".into()));
    }
    let dt = gamma.time.dt();
    let w = gamma.players.weight::<T>();
    let mut out = NodeField::zeros(m - 1, n, d);
    for j in 1..m {
        for i in 0..n {
            let q = gamma.node(j, i);
            let p = state.z.at(j, i);
            let r = out.at_mut(j - 1, i);
            for c in 0..d {
                r[c] = (p[c] - state.z.at(j - 1, i)[c]) / dt;
            }
            spec.lagrangian.add_hamiltonian_grad_q(q, p, T::one(), r);
            add_field(&spec.phi, q, gamma.slice(j), -w, r);
        }
    }
    Ok(ResidualReport::new("hamiltonian", out))
}

#[derive(Clone, Debug, Serialize)]
pub struct IndividualResiduals<T> {
    pub interior: ResidualReport<T>,
    pub boundary: ResidualReport<T>,
}

/// Euler–Lagrange residual of one path against a frozen ensemble on the same
/// grid, with the initial transversality residual reported separately.
pub fn el_residual_individual<T: Scalar>(
    r: &SinglePath<T>,
    frozen: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
) -> Result<IndividualResiduals<T>> {
    check(frozen, spec)?;
    check_dim("path dimension", spec.dimension, r.dim)?;
    if r.time != frozen.time {
        return Err(Error::GridMismatch("path and frozen ensemble use different time grids".into()));
    }
    let (m, d) = (r.time.steps, r.dim);
    let dt = r.time.dt();
    let w = frozen.players.weight::<T>();
    let v = r.velocity();
    let z: Vec<T> = (0..m)
        .flat_map(|j| spec.lagrangian.momentum(r.node(j), &v[j * d..(j + 1) * d]))
        .collect();
    let mut interior = NodeField::zeros(m - 1, 1, d);
    for j in 1..m {
        let q = r.node(j);
        let out = interior.at_mut(j - 1, 0);
        for c in 0..d {
            out[c] = (z[j * d + c] - z[(j - 1) * d + c]) / dt;
        }
        spec.lagrangian.add_grad_q(q, &v[j * d..(j + 1) * d], -T::one(), out);
        add_field(&spec.phi, q, frozen.slice(j), -w, out);
    }
    let mut boundary = NodeField::zeros(1, 1, d);
    {
        let out = boundary.at_mut(0, 0);
        add_field(&spec.psi, r.node(0), frozen.slice(0), w, out);
        for c in 0..d {
            out[c] -= z[c];
        }
    }
    Ok(IndividualResiduals {
        interior: ResidualReport::new("el_individual", interior),
        boundary: ResidualReport::new("el_individual_boundary", boundary),
    })
}
