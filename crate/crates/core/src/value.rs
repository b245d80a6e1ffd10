//! Value functions by inner minimization, their space and time derivatives,
//! and the Hamilton–Jacobi residuals of the collective and individual problems.
//!
//! `Û(t, X)` is the minimal total cost over paths on `[0, t]` ending at `X`;
//! `û(t, q; γ)` is one player's minimal cost against a frozen ensemble `γ` on
//! `[0, t]`. Shorter horizons reuse the time step of the full grid, so the
//! value functions of different `t` belong to one discrete family.

use rayon::prelude::*;
use serde::Serialize;

use crate::descent::SolverOptions;
use crate::ensemble::{PlayerGrid, SinglePath, TimeGrid, TrajectoryGrid};
use crate::error::{check_dim, Error, Result};
use crate::model::ProblemSpec;
use crate::scalar::{norm_sq, Scalar};
use crate::variational::{ensure_admissible, minimize_action_from, minimize_individual};

/// Discretization shared by every value probe.
#[derive(Clone, Debug)]
pub struct ValueSettings<T> {
    /// Steps on the full horizon `spec.horizon`.
    pub steps: usize,
    pub solver: SolverOptions<T>,
}

impl<T: Scalar> ValueSettings<T> {
    pub fn new(steps: usize, solver: SolverOptions<T>) -> Self {
        Self { steps, solver }
    }

    fn dt(&self, spec: &ProblemSpec<T>) -> T {
        spec.horizon / T::from_usize_lossy(self.steps)
    }

    /// `max(8, round(M t / T))`.
    pub fn steps_for(&self, t: T, spec: &ProblemSpec<T>) -> usize {
        let m = (t / self.dt(spec)).round().to_usize().unwrap_or(0);
        m.max(8)
    }

    /// Nearest grid time to `t` and its index.
    fn snap(&self, t: T, spec: &ProblemSpec<T>) -> (usize, T) {
        let j = (t / self.dt(spec)).round().to_usize().unwrap_or(0);
        (j, T::from_usize_lossy(j) * self.dt(spec))
    }
}

#[derive(Clone, Debug)]
pub struct ValueProbe<T, P> {
    pub t: T,
    /// `X` for the collective value, `q` for the individual one.
    pub point: Vec<T>,
    pub value: T,
    pub converged: bool,
    pub minimizer: P,
}

pub type CollectiveProbe<T> = ValueProbe<T, TrajectoryGrid<T>>;
/// The minimizer is absent at `t = 0`, where the path is the point `q`.
pub type IndividualProbe<T> = ValueProbe<T, Option<SinglePath<T>>>;

fn players_of<T: Scalar>(x: &[T], spec: &ProblemSpec<T>) -> Result<PlayerGrid> {
    let d = spec.dimension;
    if d == 0 || x.is_empty() || x.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            argument: "X",
            expected: d,
            found: x.len(),
        });
    }
    PlayerGrid::new(x.len() / d)
}

/// `Û(t, X)`. A warm start is used when its grid has the step count this
/// horizon needs (or more, with the same step).
pub fn value_collective<T: Scalar>(
    t: T,
    x: &[T],
    spec: &ProblemSpec<T>,
    settings: &ValueSettings<T>,
    warm: Option<&TrajectoryGrid<T>>,
) -> Result<CollectiveProbe<T>> {
    if !(t > T::zero()) {
        return Err(Error::InvalidArgument(format!("value horizon must be positive, got {t}")));
    }
    let players = players_of(x, spec)?;
    let sub = spec.with_horizon(t);
    let m = settings.steps_for(t, spec);
    let time = TimeGrid::new(t, m)?;
    let init = match warm {
        Some(w) if w.players == players && w.dim == spec.dimension && w.time.steps >= m => {
            let base = if w.time.steps == m { w.clone() } else { w.truncated(m)? };
            let base = base.with_terminal(x)?;
            TrajectoryGrid::new(time, players, spec.dimension, base.values().to_vec())?
        }
        _ => TrajectoryGrid::constant(time, players, spec.dimension, x)?,
    };
    let res = minimize_action_from(&init, &sub, &settings.solver)?;
    Ok(ValueProbe {
        t,
        point: x.to_vec(),
        value: res.action.total,
        converged: res.converged,
        minimizer: res.trajectory,
    })
}

/// `(1/N) Σ_k Ψ(q - γ[0][k])`, the individual cost of a path of zero length.
pub fn individual_initial_cost<T: Scalar>(q: &[T], frozen: &TrajectoryGrid<T>, spec: &ProblemSpec<T>) -> Result<T> {
    check_dim("q", frozen.dim, q.len())?;
    let d = q.len();
    let mut z = vec![T::zero(); d];
    let mut acc = T::zero();
    for y in frozen.slice(0).chunks(d) {
        for c in 0..d {
            z[c] = q[c] - y[c];
        }
        acc += spec.psi.value(&z);
    }
    Ok(acc * frozen.players.weight::<T>())
}

fn grid_index<T: Scalar>(t: T, frozen: &TrajectoryGrid<T>) -> Result<usize> {
    let dt = frozen.time.dt();
    let j = (t / dt).round();
    let tol = T::lit(1e-9) * frozen.time.horizon;
    if t < -tol || (t - j * dt).abs() > tol || j.to_usize().is_none_or(|j| j > frozen.time.steps) {
        return Err(Error::InvalidArgument(format!(
            "t = {t} is not a node of the frozen time grid"
        )));
    }
    Ok(j.to_usize().unwrap_or(0))
}

/// `û(t, q; γ)` with `γ` the frozen ensemble; `t` must be a node of its grid.
pub fn value_individual<T: Scalar>(
    t: T,
    q: &[T],
    frozen: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    solver: &SolverOptions<T>,
    warm: Option<&SinglePath<T>>,
) -> Result<IndividualProbe<T>> {
    check_dim("q", spec.dimension, q.len())?;
    check_dim("frozen dimension", spec.dimension, frozen.dim)?;
    let j = grid_index(t, frozen)?;
    if j == 0 {
        return Ok(ValueProbe {
            t: T::zero(),
            point: q.to_vec(),
            value: individual_initial_cost(q, frozen, spec)?,
            converged: true,
            minimizer: None,
        });
    }
    let sub_frozen = if j == frozen.time.steps {
        frozen.clone()
    } else {
        frozen.truncated(j)?
    };
    let sub = spec.with_horizon(sub_frozen.time.horizon);
    ensure_admissible(&sub, solver)?;
    let warm = warm.filter(|w| w.time == sub_frozen.time);
    let res = minimize_individual(q, &sub_frozen, &sub, solver, warm)?;
    Ok(ValueProbe {
        t: sub_frozen.time.horizon,
        point: q.to_vec(),
        value: res.cost,
        converged: res.converged,
        minimizer: Some(res.path),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ValueGradient<T> {
    /// Central differences of the discrete value in each coordinate of `X`.
    pub finite_difference: Vec<T>,
    /// `(1/N) ∇_v L` at the last interval of the minimizer (discrete-exact derivative).
    pub formula: Vec<T>,
    /// Per-player momenta `∇_v L`, i.e. `N ·` the weighted gradient.
    pub momentum: Vec<T>,
    /// `max |finite_difference - formula|`.
    pub max_abs_diff: T,
    pub h: T,
    pub converged: bool,
}

/// `∇_v L(γ[M-1], v[M-1])` per player of a collective minimizer.
pub fn terminal_momenta<T: Scalar>(gamma: &TrajectoryGrid<T>, spec: &ProblemSpec<T>) -> Vec<T> {
    let m = gamma.time.steps;
    let dt = gamma.time.dt();
    let d = gamma.dim;
    let mut out = Vec::with_capacity(gamma.slice_width());
    let mut v = vec![T::zero(); d];
    for i in 0..gamma.players.count {
        let (a, b) = (gamma.node(m - 1, i), gamma.node(m, i));
        for c in 0..d {
            v[c] = (b[c] - a[c]) / dt;
        }
        out.extend(spec.lagrangian.momentum(a, &v));
    }
    out
}

fn terminal_momentum_single<T: Scalar>(r: &SinglePath<T>, spec: &ProblemSpec<T>) -> Vec<T> {
    let m = r.time.steps;
    let dt = r.time.dt();
    let v: Vec<T> = r
        .terminal()
        .iter()
        .zip(r.node(m - 1))
        .map(|(&b, &a)| (b - a) / dt)
        .collect();
    spec.lagrangian.momentum(r.node(m - 1), &v)
}

pub fn default_space_step<T: Scalar>(x: &[T]) -> T {
    T::lit(1e-4) * (T::one() + crate::scalar::sup_norm(x))
}

/// Both branches of `∇_X Û(t, X)`.
pub fn grad_value_collective<T: Scalar>(
    t: T,
    x: &[T],
    spec: &ProblemSpec<T>,
    settings: &ValueSettings<T>,
    h: T,
    warm: Option<&TrajectoryGrid<T>>,
) -> Result<ValueGradient<T>> {
    let base = value_collective(t, x, spec, settings, warm)?;
    let w = base.minimizer.players.weight::<T>();
    let momentum = terminal_momenta(&base.minimizer, spec);
    let formula: Vec<T> = momentum.iter().map(|&p| w * p).collect();
    let shifted = |k: usize, s: T| -> Result<CollectiveProbe<T>> {
        let mut y = x.to_vec();
        y[k] += s;
        value_collective(t, &y, spec, settings, Some(&base.minimizer))
    };
    let pairs = (0..x.len())
        .into_par_iter()
        .map(|k| Ok((shifted(k, h)?, shifted(k, -h)?)))
        .collect::<Result<Vec<_>>>()?;
    let converged = base.converged && pairs.iter().all(|(a, b)| a.converged && b.converged);
    let finite_difference: Vec<T> = pairs
        .iter()
        .map(|(p, m)| (p.value - m.value) / (T::lit(2.0) * h))
        .collect();
    let max_abs_diff = crate::scalar::sup_distance(&finite_difference, &formula);
    Ok(ValueGradient {
        finite_difference,
        formula,
        momentum,
        max_abs_diff,
        h,
        converged,
    })
}

/// Both branches of `∇_q û(t, q; γ)`; the formula branch is `∇_v L` at the
/// last interval, or `∇G(q)` at `t = 0`.
pub fn grad_value_individual<T: Scalar>(
    t: T,
    q: &[T],
    frozen: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    solver: &SolverOptions<T>,
    h: T,
) -> Result<ValueGradient<T>> {
    let base = value_individual(t, q, frozen, spec, solver, None)?;
    let formula = match &base.minimizer {
        Some(r) => terminal_momentum_single(r, spec),
        None => initial_cost_gradient(q, frozen, spec),
    };
    let mut finite_difference = Vec::with_capacity(q.len());
    let mut converged = base.converged;
    for k in 0..q.len() {
        let mut y = q.to_vec();
        y[k] += h;
        let p = value_individual(t, &y, frozen, spec, solver, base.minimizer.as_ref())?;
        y[k] -= h + h;
        let m = value_individual(t, &y, frozen, spec, solver, base.minimizer.as_ref())?;
        converged = converged && p.converged && m.converged;
        finite_difference.push((p.value - m.value) / (T::lit(2.0) * h));
    }
    let max_abs_diff = crate::scalar::sup_distance(&finite_difference, &formula);
    Ok(ValueGradient {
        finite_difference,
        momentum: formula.clone(),
        formula,
        max_abs_diff,
        h,
        converged,
    })
}

/// `∇_q [(1/N) Σ_k Ψ(q - γ[0][k])]`.
pub(crate) fn initial_cost_gradient<T: Scalar>(q: &[T], frozen: &TrajectoryGrid<T>, spec: &ProblemSpec<T>) -> Vec<T> {
    let d = q.len();
    let w = frozen.players.weight::<T>();
    let mut out = vec![T::zero(); d];
    let mut z = vec![T::zero(); d];
    for y in frozen.slice(0).chunks(d) {
        for c in 0..d {
            z[c] = q[c] - y[c];
        }
        spec.psi.add_gradient(&z, w, &mut out);
    }
    out
}

/// Where the momentum in the Hamiltonian term comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MomentumSource<T> {
    /// `∇_v L` at the last interval of the minimizer.
    Formula,
    /// Central differences of the value in space with this step.
    FiniteDifference(T),
}

#[derive(Clone, Copy, Debug)]
pub struct HjeOptions<T> {
    /// Time step of the difference quotient; rounded up to a multiple of the grid step.
    pub h_time: T,
    pub momentum: MomentumSource<T>,
}

impl<T: Scalar> HjeOptions<T> {
    /// `h_time = max(2 dt, 1e-3 T)`, formula momenta.
    pub fn defaults(spec: &ProblemSpec<T>, steps: usize) -> Self {
        let dt = spec.horizon / T::from_usize_lossy(steps);
        Self {
            h_time: (T::lit(2.0) * dt).max(T::lit(1e-3) * spec.horizon),
            momentum: MomentumSource::Formula,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HjeReport<T> {
    pub t: T,
    /// Estimate of the time derivative of the value.
    pub dt_term: T,
    pub hamiltonian_term: T,
    pub interaction_term: T,
    /// `dt_term + hamiltonian_term - interaction_term`.
    pub residual: T,
    pub h_time: T,
    /// Zero when the momenta come from the formula branch.
    pub h_space: T,
    pub one_sided: bool,
    pub converged: bool,
}

impl<T: Scalar> HjeReport<T> {
    fn assemble(t: T, dt_term: T, hamiltonian_term: T, interaction_term: T, h_time: T, h_space: T, one_sided: bool, converged: bool) -> Self {
        Self {
            t,
            dt_term,
            hamiltonian_term,
            interaction_term,
            residual: dt_term + hamiltonian_term - interaction_term,
            h_time,
            h_space,
            one_sided,
            converged,
        }
    }
}

/// Time stencil around node `j` with offset `k` nodes: central when
/// `j + k <= M`, otherwise second-order backward.
fn time_stencil(j: usize, k: usize, m: usize) -> Result<(Vec<(usize, f64)>, bool)> {
    if j + k <= m && j >= k {
        Ok((vec![(j + k, 0.5), (j - k, -0.5)], false))
    } else if j >= 2 * k {
        Ok((vec![(j, 1.5), (j - k, -2.0), (j - 2 * k, 0.5)], true))
    } else {
        Err(Error::InvalidArgument(format!(
            "no room for a time difference of {k} steps at node {j} of {m}"
        )))
    }
}

/// Residual of `∂ₜÛ + (1/N) Σ_i H(X_i, P_i) - ½ (1/N²) Σ_{i,k} Φ(X_i - X_k)`
/// at the grid time nearest `t`.
pub fn hje_residual_collective<T: Scalar>(
    t: T,
    x: &[T],
    spec: &ProblemSpec<T>,
    settings: &ValueSettings<T>,
    hje: &HjeOptions<T>,
) -> Result<HjeReport<T>> {
    let dt = settings.dt(spec);
    let (j, t) = settings.snap(t, spec);
    let k = (hje.h_time / dt).ceil().to_usize().unwrap_or(1).max(1);
    let h = T::from_usize_lossy(k) * dt;
    let (stencil, one_sided) = time_stencil(j, k, settings.steps)?;
    let base = value_collective(t, x, spec, settings, None)?;
    let mut converged = base.converged;
    let mut dt_term = T::zero();
    for (node, c) in stencil {
        let probe = if node == j {
            base.clone()
        } else {
            value_collective(T::from_usize_lossy(node) * dt, x, spec, settings, Some(&base.minimizer))?
        };
        converged = converged && probe.converged;
        dt_term += T::lit(c) * probe.value / h;
    }
    let (momentum, h_space) = match hje.momentum {
        MomentumSource::Formula => (terminal_momenta(&base.minimizer, spec), T::zero()),
        MomentumSource::FiniteDifference(hs) => {
            let g = grad_value_collective(t, x, spec, settings, hs, Some(&base.minimizer))?;
            converged = converged && g.converged;
            let n = T::from_usize_lossy(base.minimizer.players.count);
            (g.finite_difference.iter().map(|&v| v * n).collect(), hs)
        }
    };
    let d = spec.dimension;
    let w = base.minimizer.players.weight::<T>();
    let hamiltonian_term: T = x
        .chunks(d)
        .zip(momentum.chunks(d))
        .map(|(q, p)| spec.lagrangian.hamiltonian_value(q, p))
        .sum::<T>()
        * w;
    let interaction_term = crate::variational::initial_cost(x, d, &spec.phi)?;
    Ok(HjeReport::assemble(t, dt_term, hamiltonian_term, interaction_term, h, h_space, one_sided, converged))
}

/// Residual of `∂ₜu + H(q, ∇_q u) - (1/N) Σ_k Φ(q - γ(t)[k])` with
/// `u(t, q) = û(t, q; γ)` and `γ` the frozen collective minimizer.
pub fn hje_residual_individual<T: Scalar>(
    t: T,
    q: &[T],
    frozen: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    solver: &SolverOptions<T>,
    hje: &HjeOptions<T>,
) -> Result<HjeReport<T>> {
    let dt = frozen.time.dt();
    let j = (t / dt).round().to_usize().unwrap_or(0);
    let t = frozen.time.node(j);
    let k = (hje.h_time / dt).ceil().to_usize().unwrap_or(1).max(1);
    let h = T::from_usize_lossy(k) * dt;
    let (stencil, one_sided) = time_stencil(j, k, frozen.time.steps)?;
    let base = value_individual(t, q, frozen, spec, solver, None)?;
    let mut converged = base.converged;
    let mut dt_term = T::zero();
    for (node, c) in stencil {
        let value = if node == j {
            base.value
        } else {
            let p = value_individual(frozen.time.node(node), q, frozen, spec, solver, None)?;
            converged = converged && p.converged;
            p.value
        };
        dt_term += T::lit(c) * value / h;
    }
    let (momentum, h_space) = match hje.momentum {
        MomentumSource::Formula => (
            match &base.minimizer {
                Some(r) => terminal_momentum_single(r, spec),
                None => initial_cost_gradient(q, frozen, spec),
            },
            T::zero(),
        ),
        MomentumSource::FiniteDifference(hs) => {
            let g = grad_value_individual(t, q, frozen, spec, solver, hs)?;
            converged = converged && g.converged;
            (g.finite_difference, hs)
        }
    };
    let hamiltonian_term = spec.lagrangian.hamiltonian_value(q, &momentum);
    let d = q.len();
    let mut z = vec![T::zero(); d];
    let mut interaction_term = T::zero();
    for y in frozen.slice(j).chunks(d) {
        for c in 0..d {
            z[c] = q[c] - y[c];
        }
        interaction_term += spec.phi.value(&z);
    }
    interaction_term *= frozen.players.weight::<T>();
    Ok(HjeReport::assemble(t, dt_term, hamiltonian_term, interaction_term, h, h_space, one_sided, converged))
}

/// `u(0, q)` against the initial cost, which it must equal exactly.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundaryIdentity<T> {
    pub value: T,
    pub initial_cost: T,
    pub difference: T,
}

pub fn individual_boundary_identity<T: Scalar>(
    q: &[T],
    frozen: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    solver: &SolverOptions<T>,
) -> Result<BoundaryIdentity<T>> {
    let value = value_individual(T::zero(), q, frozen, spec, solver, None)?.value;
    let initial_cost = individual_initial_cost(q, frozen, spec)?;
    Ok(BoundaryIdentity {
        value,
        initial_cost,
        difference: (value - initial_cost).abs(),
    })
}

/// `t/3 (C_L + C_F) + C_L / t` with `C_L` the curvature bound of the
/// Lagrangian and `C_F = |∇²Φ|`.
pub fn curvature_envelope<T: Scalar>(t: T, spec: &ProblemSpec<T>) -> T {
    let cl = spec.lagrangian.curvature_sup();
    let cf = spec.phi.hessian_sup();
    t / T::lit(3.0) * (cl + cf) + cl / t
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SecondDifference<T> {
    /// `V(x + h) + V(x - h) - 2 V(x)`.
    pub value: T,
    /// `|h|²`, in the player-weighted norm for the collective value.
    pub h_norm_sq: T,
    /// Envelope constant (`C_t` or `c_t`).
    pub constant: T,
    pub converged: bool,
}

impl<T: Scalar> SecondDifference<T> {
    pub fn upper_bound(&self) -> T {
        self.constant * self.h_norm_sq
    }
}

pub fn second_difference_collective<T: Scalar>(
    t: T,
    x: &[T],
    h: &[T],
    spec: &ProblemSpec<T>,
    settings: &ValueSettings<T>,
) -> Result<SecondDifference<T>> {
    check_dim("h", x.len(), h.len())?;
    let base = value_collective(t, x, spec, settings, None)?;
    let shift = |s: T| {
        let y: Vec<T> = x.iter().zip(h).map(|(&a, &b)| a + s * b).collect();
        value_collective(t, &y, spec, settings, Some(&base.minimizer))
    };
    let (p, m) = (shift(T::one())?, shift(-T::one())?);
    let w = base.minimizer.players.weight::<T>();
    Ok(SecondDifference {
        value: p.value + m.value - T::lit(2.0) * base.value,
        h_norm_sq: w * norm_sq(h),
        constant: curvature_envelope(base.t, spec),
        converged: base.converged && p.converged && m.converged,
    })
}

pub fn second_difference_individual<T: Scalar>(
    t: T,
    q: &[T],
    h: &[T],
    frozen: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    solver: &SolverOptions<T>,
) -> Result<SecondDifference<T>> {
    check_dim("h", q.len(), h.len())?;
    let base = value_individual(t, q, frozen, spec, solver, None)?;
    if base.minimizer.is_none() {
        return Err(Error::InvalidArgument("second difference needs t > 0".into()));
    }
    let shift = |s: T| {
        let y: Vec<T> = q.iter().zip(h).map(|(&a, &b)| a + s * b).collect();
        value_individual(t, &y, frozen, spec, solver, base.minimizer.as_ref())
    };
    let (p, m) = (shift(T::one())?, shift(-T::one())?);
    Ok(SecondDifference {
        value: p.value + m.value - T::lit(2.0) * base.value,
        h_norm_sq: norm_sq(h),
        constant: curvature_envelope(base.t, spec),
        converged: base.converged && p.converged && m.converged,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DpConsistency<T> {
    /// `Û(t, γ(t)) - Û(s, γ(s))`.
    pub value_increment: T,
    /// Running cost accrued by the minimizer on `[s, t]`.
    pub running_cost: T,
    pub difference: T,
}

/// Compares value increments along a full-horizon minimizer `gamma` between
/// grid nodes `s_node < t_node` with the running cost it accrues in between.
pub fn dp_consistency<T: Scalar>(
    gamma: &TrajectoryGrid<T>,
    s_node: usize,
    t_node: usize,
    spec: &ProblemSpec<T>,
    settings: &ValueSettings<T>,
) -> Result<DpConsistency<T>> {
    if !(s_node < t_node && t_node <= gamma.time.steps) || s_node < 8 {
        return Err(Error::InvalidArgument(format!(
            "need 8 <= s < t <= M, got s = {s_node}, t = {t_node}"
        )));
    }
    if gamma.time.steps != settings.steps {
        return Err(Error::GridMismatch("minimizer and value settings use different grids".into()));
    }
    let time = gamma.time;
    let vt = value_collective(time.node(t_node), gamma.slice(t_node), spec, settings, Some(gamma))?;
    let vs = value_collective(time.node(s_node), gamma.slice(s_node), spec, settings, Some(gamma))?;
    let full = crate::variational::action(&gamma.truncated(t_node)?, &spec.with_horizon(time.node(t_node)))?;
    let head = crate::variational::action(&gamma.truncated(s_node)?, &spec.with_horizon(time.node(s_node)))?;
    let running_cost = full.running_lagrangian + full.running_interaction - head.running_lagrangian - head.running_interaction;
    let value_increment = vt.value - vs.value;
    Ok(DpConsistency {
        value_increment,
        running_cost,
        difference: (value_increment - running_cost).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LagrangianSpec, PotentialSpec};
    use crate::variational::minimize_action;

    fn quad(phi: f64, psi: f64) -> ProblemSpec<f64> {
        ProblemSpec::new(1, 0.5, LagrangianSpec::kinetic(), PotentialSpec::quadratic(phi), PotentialSpec::quadratic(psi))
            .unwrap()
    }

    fn forced(steps: usize) -> ValueSettings<f64> {
        ValueSettings::new(
            steps,
            SolverOptions {
                force: true,
                ..SolverOptions::default()
            },
        )
    }

    /// `½ γ̇₁(T)` for the two-player quadratic instance at `X = (-1, 1)`.
    fn oracle_value(phi: f64, psi: f64, horizon: f64) -> f64 {
        let r = phi.sqrt();
        let a = 1.0 / ((r * horizon).cosh() + psi / r * (r * horizon).sinh());
        let b = psi * a / r;
        0.5 * (a * r * (r * horizon).sinh() + b * r * (r * horizon).cosh())
    }

    #[test]
    fn zero_potentials_have_zero_value() {
        let spec = ProblemSpec::new(1, 1.0, LagrangianSpec::kinetic(), PotentialSpec::zero(), PotentialSpec::zero()).unwrap();
        let s = ValueSettings::new(16, SolverOptions::default());
        let p = value_collective(0.5, &[1.0, -2.0], &spec, &s, None).unwrap();
        assert_eq!(p.value, 0.0);
        let g = grad_value_collective(1.0, &[1.0, -2.0], &spec, &s, 1e-4, None).unwrap();
        assert!(g.max_abs_diff < 1e-12 && crate::scalar::sup_norm(&g.formula) == 0.0);
        let hje = hje_residual_collective(0.5, &[1.0, -2.0], &spec, &s, &HjeOptions::defaults(&spec, 16)).unwrap();
        assert_eq!(hje.residual, 0.0);
    }

    #[test]
    fn quadratic_value_matches_closed_form() {
        let spec = quad(1.0, 1.0);
        let exact = oracle_value(1.0, 1.0, 0.5);
        let mut errs = Vec::new();
        for m in [32, 64, 128] {
            let p = value_collective(0.5, &[-1.0, 1.0], &spec, &forced(m), None).unwrap();
            errs.push((p.value - exact).abs());
        }
        assert!(errs[2] < errs[0] / 3.0, "{errs:?}");
        // doubling ψ cannot lower the value
        let a = value_collective(0.5, &[-1.0, 1.0], &spec, &forced(32), None).unwrap().value;
        let b = value_collective(0.5, &[-1.0, 1.0], &quad(1.0, 2.0), &forced(32), None).unwrap().value;
        assert!(b >= a);
    }

    #[test]
    fn gradient_branches_agree() {
        let spec = quad(1.0, 1.0);
        let g = grad_value_collective(0.5, &[-1.0, 1.0], &spec, &forced(64), 1e-4, None).unwrap();
        assert!(g.max_abs_diff < 1e-6, "{g:?}");
        for (a, b) in g.momentum.iter().zip(&g.formula) {
            assert!((a * 0.5 - b).abs() < 1e-15);
        }
    }

    #[test]
    fn individual_value_reproduces_collective_path() {
        let spec = quad(1.0, 1.0);
        let s = forced(64);
        let res = minimize_action(&[-1.0, 1.0], 64, &spec, &s.solver).unwrap();
        let p = value_individual(0.5, res.trajectory.node(64, 1), &res.trajectory, &spec, &s.solver, None).unwrap();
        let path = p.minimizer.unwrap();
        assert!(path.sup_distance(&res.trajectory.player_path(1)) < 1e-6);
        let b = individual_boundary_identity(&[0.3], &res.trajectory, &spec, &s.solver).unwrap();
        assert!(b.difference <= 1e-12);
        assert!(value_individual(0.013, &[0.0], &res.trajectory, &spec, &s.solver, None).is_err());
    }

    #[test]
    fn hje_residuals_shrink_under_refinement() {
        let spec = quad(1.0, 1.0);
        let mut coll = Vec::new();
        let mut ind = Vec::new();
        for m in [32, 64, 128] {
            let s = forced(m);
            let opts = HjeOptions {
                h_time: 4.0 * 0.5 / m as f64,
                momentum: MomentumSource::Formula,
            };
            coll.push(hje_residual_collective(0.25, &[-1.0, 1.0], &spec, &s, &opts).unwrap().residual.abs());
            let res = minimize_action(&[-1.0, 1.0], m, &spec, &s.solver).unwrap();
            ind.push(hje_residual_individual(0.25, &[0.4], &res.trajectory, &spec, &s.solver, &opts).unwrap().residual.abs());
        }
        for w in coll.windows(2).chain(ind.windows(2)) {
            assert!(w[0] / w[1] >= 1.5, "{coll:?} {ind:?}");
        }
    }

    #[test]
    fn second_differences_within_envelope() {
        let spec = quad(1.0, 1.0);
        let s = forced(64);
        let sd = second_difference_collective(0.5, &[-1.0, 1.0], &[0.05, -0.02], &spec, &s).unwrap();
        assert!(sd.value >= -1e-8);
        assert!(sd.value <= sd.upper_bound() + 1e-6 * sd.h_norm_sq);
        let res = minimize_action(&[-1.0, 1.0], 64, &spec, &s.solver).unwrap();
        let si = second_difference_individual(0.25, &[0.3], &[0.01], &res.trajectory, &spec, &s.solver).unwrap();
        assert!(si.value >= -1e-8 && si.value <= si.upper_bound() + 1e-6 * si.h_norm_sq);
    }

    #[test]
    fn dynamic_programming_increment() {
        let spec = ProblemSpec::new(
            1,
            0.1,
            LagrangianSpec::kinetic(),
            PotentialSpec::cosine(1.0, vec![1.0]),
            PotentialSpec::cosine(0.1, vec![2.0]),
        )
        .unwrap();
        let s = ValueSettings::new(64, SolverOptions::default());
        let x: Vec<f64> = (0..8).map(|i| (i as f64 - 3.5) / 4.0).collect();
        let res = minimize_action(&x, 64, &spec, &s.solver).unwrap();
        let dp = dp_consistency(&res.trajectory, 16, 48, &spec, &s).unwrap();
        assert!(dp.difference < 1e-8, "{dp:?}");
    }
}
