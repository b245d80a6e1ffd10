//! Analytic ingredients of the game: the running Lagrangian and its
//! Hamiltonian, the even interaction potentials, the Legendre-transform
//! oracle and the small-time admissibility check.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{dot, norm_sq, Scalar};

/// Even interaction (or position) potential with analytic curvature bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec<T> {
    Zero,
    /// `a/2 |z|^2`. Gradient is unbounded, so this kind is outside the
    /// bounded-derivative assumptions; it is kept for its closed-form oracles.
    Quadratic { a: T },
    /// `beta cos(k . z)`, with `k` a wave vector in `R^d`.
    Cosine { beta: T, k: Vec<T> },
}

impl<T: Scalar> PotentialSpec<T> {
    pub fn zero() -> Self {
        PotentialSpec::Zero
    }

    pub fn quadratic(a: T) -> Self {
        PotentialSpec::Quadratic { a }
    }

    pub fn cosine(beta: T, k: Vec<T>) -> Self {
        PotentialSpec::Cosine { beta, k }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            PotentialSpec::Zero => Ok(()),
            PotentialSpec::Quadratic { a } => {
                if a.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument("quadratic coefficient must be finite".into()))
                }
            }
            PotentialSpec::Cosine { beta, k } => {
                check_dim("k", dim, k.len())?;
                if !beta.is_finite() || *beta < T::zero() {
                    return Err(Error::InvalidArgument(
                        "cosine amplitude beta must be finite and nonnegative".into(),
                    ));
                }
                if k.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidArgument("wave vector must be finite".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PotentialSpec::Zero => true,
            PotentialSpec::Quadratic { a } => *a == T::zero(),
            PotentialSpec::Cosine { beta, k } => *beta == T::zero() || k.iter().all(|x| x.is_zero()),
        }
    }

    #[inline]
    pub fn value(&self, z: &[T]) -> T {
        match self {
            PotentialSpec::Zero => T::zero(),
            PotentialSpec::Quadratic { a } => *a * norm_sq(z) / T::lit(2.0),
            PotentialSpec::Cosine { beta, k } => *beta * dot(k, z).cos(),
        }
    }

    /// Adds `scale * grad(z)` into `out`.
    #[inline]
    pub fn add_gradient(&self, z: &[T], scale: T, out: &mut [T]) {
        match self {
            PotentialSpec::Zero => {}
            PotentialSpec::Quadratic { a } => {
                let s = scale * *a;
                for (o, &zc) in out.iter_mut().zip(z) {
                    *o += s * zc;
                }
            }
            PotentialSpec::Cosine { beta, k } => {
                let s = -scale * *beta * dot(k, z).sin();
                for (o, &kc) in out.iter_mut().zip(k) {
                    *o += s * kc;
                }
            }
        }
    }

    pub fn gradient(&self, z: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); z.len()];
        self.add_gradient(z, T::one(), &mut out);
        out
    }

    /// Hessian-vector product `∇²(z) h`, added into `out` with `scale`.
    pub fn add_hessian_vec(&self, z: &[T], h: &[T], scale: T, out: &mut [T]) {
        match self {
            PotentialSpec::Zero => {}
            PotentialSpec::Quadratic { a } => {
                for (o, &hc) in out.iter_mut().zip(h) {
                    *o += scale * *a * hc;
                }
            }
            PotentialSpec::Cosine { beta, k } => {
                let s = -scale * *beta * dot(k, z).cos() * dot(k, h);
                for (o, &kc) in out.iter_mut().zip(k) {
                    *o += s * kc;
                }
            }
        }
    }

    /// Lower Hessian bound `c` with `c I <= ∇²`.
    pub fn hessian_lower(&self) -> T {
        match self {
            PotentialSpec::Zero => T::zero(),
            PotentialSpec::Quadratic { a } => *a,
            PotentialSpec::Cosine { beta, k } => -*beta * norm_sq(k),
        }
    }

    /// `sup |∇²|` (operator norm).
    pub fn hessian_sup(&self) -> T {
        match self {
            PotentialSpec::Zero => T::zero(),
            PotentialSpec::Quadratic { a } => a.abs(),
            PotentialSpec::Cosine { beta, k } => *beta * norm_sq(k),
        }
    }

    /// `sup |∇|`, infinite for the quadratic kind.
    pub fn gradient_sup(&self) -> T {
        match self {
            PotentialSpec::Zero => T::zero(),
            PotentialSpec::Quadratic { a } if a.is_zero() => T::zero(),
            PotentialSpec::Quadratic { .. } => T::infinity(),
            PotentialSpec::Cosine { beta, k } => *beta * norm_sq(k).sqrt(),
        }
    }

    /// `inf` of the potential (`-inf` for a concave quadratic).
    pub fn infimum(&self) -> T {
        match self {
            PotentialSpec::Zero => T::zero(),
            PotentialSpec::Quadratic { a } if *a >= T::zero() => T::zero(),
            PotentialSpec::Quadratic { .. } => T::neg_infinity(),
            PotentialSpec::Cosine { beta, k } if k.iter().all(|x| x.is_zero()) => *beta,
            PotentialSpec::Cosine { beta, .. } => -*beta,
        }
    }

    /// Whether the potential satisfies the bounded-derivative assumptions.
    pub fn assumption_compliant(&self) -> bool {
        !matches!(self, PotentialSpec::Quadratic { a } if !a.is_zero())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PotentialSpec::Zero => "zero",
            PotentialSpec::Quadratic { .. } => "quadratic",
            PotentialSpec::Cosine { .. } => "cosine",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagrangianKind {
    /// `L(q, v) = |v|^2 / 2 + g(q)`.
    #[default]
    KineticPlusPosition,
}

/// Running cost of one player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar"))]
pub struct LagrangianSpec<T> {
    #[serde(default)]
    pub kind: LagrangianKind,
    #[serde(default = "PotentialSpec::zero")]
    pub position: PotentialSpec<T>,
}

impl<T: Scalar> Default for LagrangianSpec<T> {
    fn default() -> Self {
        Self::kinetic()
    }
}

impl<T: Scalar> LagrangianSpec<T> {
    pub fn kinetic() -> Self {
        Self {
            kind: LagrangianKind::KineticPlusPosition,
            position: PotentialSpec::Zero,
        }
    }

    pub fn with_position(position: PotentialSpec<T>) -> Self {
        Self {
            kind: LagrangianKind::KineticPlusPosition,
            position,
        }
    }

    /// Convexity modulus of the velocity block along interpolations.
    pub fn lambda0(&self) -> T {
        T::one()
    }

    /// Coercivity constant in `c0 |v|^2 <= L` once `g` is shifted to be nonnegative.
    pub fn c0(&self) -> T {
        T::lit(0.5)
    }

    /// Bound on `|∇_q L|`.
    pub fn c1(&self) -> T {
        self.position.gradient_sup()
    }

    /// Constant added to `g` to make it nonnegative; reporting only, the
    /// evaluation routines never apply it.
    pub fn position_shift(&self) -> T {
        let inf = self.position.infimum();
        if inf.is_finite() {
            -inf
        } else {
            T::zero()
        }
    }

    /// Upper bound on the full `(q, v)` Hessian of `L`.
    pub fn curvature_sup(&self) -> T {
        T::one().max(self.position.hessian_sup())
    }

    #[inline]
    pub fn value(&self, q: &[T], v: &[T]) -> T {
        norm_sq(v) / T::lit(2.0) + self.position.value(q)
    }

    #[inline]
    pub fn add_grad_q(&self, q: &[T], _v: &[T], scale: T, out: &mut [T]) {
        self.position.add_gradient(q, scale, out);
    }

    /// Momentum `∇_v L(q, v)`, added into `out` with `scale`.
    #[inline]
    pub fn add_grad_v(&self, _q: &[T], v: &[T], scale: T, out: &mut [T]) {
        for (o, &vc) in out.iter_mut().zip(v) {
            *o += scale * vc;
        }
    }

    #[inline]
    pub fn hamiltonian_value(&self, q: &[T], p: &[T]) -> T {
        norm_sq(p) / T::lit(2.0) - self.position.value(q)
    }

    #[inline]
    pub fn add_hamiltonian_grad_q(&self, q: &[T], _p: &[T], scale: T, out: &mut [T]) {
        self.position.add_gradient(q, -scale, out);
    }

    /// Velocity `∇_p H(q, p)`, added into `out` with `scale`.
    #[inline]
    pub fn add_hamiltonian_grad_p(&self, _q: &[T], p: &[T], scale: T, out: &mut [T]) {
        for (o, &pc) in out.iter_mut().zip(p) {
            *o += scale * pc;
        }
    }

    pub fn momentum(&self, q: &[T], v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); v.len()];
        self.add_grad_v(q, v, T::one(), &mut out);
        out
    }

    pub fn velocity_from_momentum(&self, q: &[T], p: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); p.len()];
        self.add_hamiltonian_grad_p(q, p, T::one(), &mut out);
        out
    }
}

/// Full game definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar"))]
pub struct ProblemSpec<T> {
    pub dimension: usize,
    pub horizon: T,
    #[serde(default)]
    pub lagrangian: LagrangianSpec<T>,
    pub phi: PotentialSpec<T>,
    pub psi: PotentialSpec<T>,
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn new(
        dimension: usize,
        horizon: T,
        lagrangian: LagrangianSpec<T>,
        phi: PotentialSpec<T>,
        psi: PotentialSpec<T>,
    ) -> Result<Self> {
        let spec = Self {
            dimension,
            horizon,
            lagrangian,
            phi,
            psi,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument("horizon must be positive and finite".into()));
        }
        self.lagrangian.position.validate(self.dimension)?;
        self.phi.validate(self.dimension)?;
        self.psi.validate(self.dimension)?;
        Ok(())
    }

    /// Same game on a different horizon.
    pub fn with_horizon(&self, horizon: T) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    pub fn assumption_compliant(&self) -> bool {
        self.lagrangian.position.assumption_compliant()
            && self.phi.assumption_compliant()
            && self.psi.assumption_compliant()
    }
}

/// Output of a single `L`/`H` evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<T> {
    pub value: T,
    pub grad_q: Vec<T>,
    /// `∇_v L` for the Lagrangian, `∇_p H` for the Hamiltonian.
    pub grad_second: Vec<T>,
}

pub fn eval_lagrangian<T: Scalar>(
    spec: &LagrangianSpec<T>,
    q: &[T],
    v: &[T],
) -> Result<Evaluation<T>> {
    check_dim("v", q.len(), v.len())?;
    if let PotentialSpec::Cosine { k, .. } = &spec.position {
        check_dim("q", k.len(), q.len())?;
    }
    let mut grad_q = vec![T::zero(); q.len()];
    let mut grad_v = vec![T::zero(); v.len()];
    spec.add_grad_q(q, v, T::one(), &mut grad_q);
    spec.add_grad_v(q, v, T::one(), &mut grad_v);
    Ok(Evaluation {
        value: spec.value(q, v),
        grad_q,
        grad_second: grad_v,
    })
}

/// Closed-form Legendre dual of [`eval_lagrangian`] in the velocity slot.
pub fn eval_hamiltonian<T: Scalar>(
    spec: &LagrangianSpec<T>,
    q: &[T],
    p: &[T],
) -> Result<Evaluation<T>> {
    check_dim("p", q.len(), p.len())?;
    if let PotentialSpec::Cosine { k, .. } = &spec.position {
        check_dim("q", k.len(), q.len())?;
    }
    let mut grad_q = vec![T::zero(); q.len()];
    let mut grad_p = vec![T::zero(); p.len()];
    spec.add_hamiltonian_grad_q(q, p, T::one(), &mut grad_q);
    spec.add_hamiltonian_grad_p(q, p, T::one(), &mut grad_p);
    Ok(Evaluation {
        value: spec.hamiltonian_value(q, p),
        grad_q,
        grad_second: grad_p,
    })
}

/// Cubic velocity lattice `[-radius, radius]^d` with uniform spacing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityLattice<T> {
    pub radius: T,
    pub step: T,
}

/// Brute-force `sup_v <v, p> - L(q, v)` over a lattice.
pub fn legendre_oracle<T: Scalar>(
    spec: &LagrangianSpec<T>,
    q: &[T],
    p: &[T],
    lattice: VelocityLattice<T>,
) -> Result<T> {
    check_dim("p", q.len(), p.len())?;
    if !(lattice.step > T::zero()) || !(lattice.radius > T::zero()) {
        return Err(Error::InvalidArgument("lattice step and radius must be positive".into()));
    }
    let d = q.len();
    let half = (lattice.radius / lattice.step)
        .round()
        .to_i64()
        .ok_or_else(|| Error::InvalidArgument("lattice too fine".into()))?;
    let per_axis = (2 * half + 1) as usize;
    let total = per_axis
        .checked_pow(d as u32)
        .filter(|&n| n <= 50_000_000)
        .ok_or_else(|| Error::InvalidArgument("lattice has too many points".into()))?;

    let mut v = vec![T::zero(); d];
    let mut idx = vec![0i64; d];
    let mut best = T::neg_infinity();
    let mut best_on_boundary = false;
    for flat in 0..total {
        let mut rem = flat;
        for c in 0..d {
            idx[c] = (rem % per_axis) as i64 - half;
            rem /= per_axis;
            v[c] = T::from_i64(idx[c]).unwrap() * lattice.step;
        }
        let val = dot(&v, p) - spec.value(q, &v);
        if val > best {
            best = val;
            best_on_boundary = idx.iter().any(|&i| i.abs() == half);
        }
    }
    if best_on_boundary {
        return Err(Error::GridTooSmall);
    }
    Ok(best)
}

/// Result of the small-time admissibility check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmallTimeCheck<T> {
    pub holds: bool,
    /// `T^2 (c_Φ⁻ + 2|∇²Φ|) + T (c_Ψ⁻ + 2|∇²Ψ|)`.
    pub lhs: T,
    /// `λ0 / 2`.
    pub rhs: T,
    pub margin: T,
    /// `λ0 - T^2/2 (c_Φ⁻ + |∇²Φ|) - T (c_Ψ⁻ + |∇²Ψ|)`: the constant that
    /// appears in the uniqueness argument; reported, not enforced.
    pub uniqueness_constant: T,
}

fn negative_part<T: Scalar>(c: T) -> T {
    (-c).max(T::zero())
}

pub fn check_small_time_condition<T: Scalar>(spec: &ProblemSpec<T>) -> SmallTimeCheck<T> {
    let t = spec.horizon;
    let two = T::lit(2.0);
    let phi_neg = negative_part(spec.phi.hessian_lower());
    let psi_neg = negative_part(spec.psi.hessian_lower());
    let phi_sup = spec.phi.hessian_sup();
    let psi_sup = spec.psi.hessian_sup();
    let lambda0 = spec.lagrangian.lambda0();

    let lhs = t * t * (phi_neg + two * phi_sup) + t * (psi_neg + two * psi_sup);
    let rhs = lambda0 / two;
    let margin = rhs - lhs;
    let uniqueness_constant = lambda0 - t * t / two * (phi_neg + phi_sup) - t * (psi_neg + psi_sup);
    SmallTimeCheck {
        holds: margin > T::zero(),
        lhs,
        rhs,
        margin,
        uniqueness_constant,
    }
}

/// A `(q, v, p)` triple at which the duality lemmas are probed.
#[derive(Clone, Debug, PartialEq)]
pub struct DualityProbe<T> {
    pub q: Vec<T>,
    pub v: Vec<T>,
    pub p: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityReport<T> {
    /// `∇_v L(q, v)`.
    pub momentum: Vec<T>,
    /// `|L(q,v) + H(q,p*) - <v,p*>|` at `p* = ∇_v L(q,v)`.
    pub fenchel_gap: T,
    /// `|∇_q L(q,v) + ∇_q H(q,p*)|`.
    pub grad_q_mismatch: T,
    /// `|v - ∇_p H(q,p*)|`.
    pub velocity_mismatch: T,
    /// `L(q,v) + H(q,p) - <v,p>` at the probe's own momentum (always >= 0).
    pub probe_gap: T,
}

impl<T: Scalar> DualityReport<T> {
    pub fn max_residual(&self) -> T {
        self.fenchel_gap
            .max(self.grad_q_mismatch)
            .max(self.velocity_mismatch)
    }
}

pub fn duality_identities<T: Scalar>(
    probe: &DualityProbe<T>,
    spec: &LagrangianSpec<T>,
) -> Result<DualityReport<T>> {
    let d = probe.q.len();
    check_dim("v", d, probe.v.len())?;
    check_dim("p", d, probe.p.len())?;
    let (q, v) = (&probe.q[..], &probe.v[..]);
    let l = eval_lagrangian(spec, q, v)?;
    let p_star = l.grad_second.clone();
    let h = eval_hamiltonian(spec, q, &p_star)?;
    let fenchel_gap = (l.value + h.value - dot(v, &p_star)).abs();
    let grad_q_mismatch = l
        .grad_q
        .iter()
        .zip(&h.grad_q)
        .map(|(&a, &b)| (a + b) * (a + b))
        .sum::<T>()
        .sqrt();
    let velocity_mismatch = v
        .iter()
        .zip(&h.grad_second)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt();
    let probe_gap = l.value + spec.hamiltonian_value(q, &probe.p) - dot(v, &probe.p);
    Ok(DualityReport {
        momentum: p_star,
        fenchel_gap,
        grad_q_mismatch,
        velocity_mismatch,
        probe_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cos1() -> LagrangianSpec<f64> {
        LagrangianSpec::with_position(PotentialSpec::cosine(1.0, vec![1.0]))
    }

    #[test]
    fn lagrangian_examples() {
        let zero = LagrangianSpec::<f64>::kinetic();
        let e = eval_lagrangian(&zero, &[0.3], &[0.0]).unwrap();
        assert_eq!((e.value, e.grad_q[0], e.grad_second[0]), (0.0, 0.0, 0.0));
        let e = eval_lagrangian(&zero, &[0.0], &[2.0]).unwrap();
        assert_eq!((e.value, e.grad_q[0], e.grad_second[0]), (2.0, 0.0, 2.0));
        let e = eval_lagrangian(&cos1(), &[0.0], &[1.0]).unwrap();
        assert_eq!((e.value, e.grad_q[0], e.grad_second[0]), (1.5, 0.0, 1.0));
    }

    #[test]
    fn hamiltonian_examples() {
        let zero = LagrangianSpec::<f64>::kinetic();
        let e = eval_hamiltonian(&zero, &[0.0], &[0.0]).unwrap();
        assert_eq!((e.value, e.grad_q[0], e.grad_second[0]), (0.0, 0.0, 0.0));
        let e = eval_hamiltonian(&zero, &[0.0], &[2.0]).unwrap();
        assert_eq!((e.value, e.grad_q[0], e.grad_second[0]), (2.0, 0.0, 2.0));
        let e = eval_hamiltonian(&cos1(), &[0.0], &[1.0]).unwrap();
        assert_eq!((e.value, e.grad_q[0], e.grad_second[0]), (-0.5, 0.0, 1.0));
    }

    #[test]
    fn dimension_mismatch_names_argument() {
        let zero = LagrangianSpec::<f64>::kinetic();
        match eval_lagrangian(&zero, &[0.0, 1.0], &[1.0]) {
            Err(Error::DimensionMismatch { argument, .. }) => assert_eq!(argument, "v"),
            other => panic!("unexpected {other:?}"),
        }
        match eval_hamiltonian(&cos1(), &[0.0, 1.0], &[1.0, 2.0]) {
            Err(Error::DimensionMismatch { argument, .. }) => assert_eq!(argument, "q"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn legendre_oracle_examples() {
        let lattice = VelocityLattice {
            radius: 2.0,
            step: 1e-3,
        };
        let zero = LagrangianSpec::<f64>::kinetic();
        assert_abs_diff_eq!(legendre_oracle(&zero, &[0.0], &[0.0], lattice).unwrap(), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(legendre_oracle(&zero, &[0.0], &[1.0], lattice).unwrap(), 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(legendre_oracle(&cos1(), &[0.0], &[1.0], lattice).unwrap(), -0.5, epsilon = 1e-6);
    }

    #[test]
    fn legendre_oracle_rejects_small_lattice() {
        let zero = LagrangianSpec::<f64>::kinetic();
        let lattice = VelocityLattice {
            radius: 1.0,
            step: 1e-2,
        };
        assert!(matches!(
            legendre_oracle(&zero, &[0.0], &[3.0], lattice),
            Err(Error::GridTooSmall)
        ));
    }

    #[test]
    fn legendre_oracle_two_dimensional() {
        let spec = LagrangianSpec::<f64>::with_position(PotentialSpec::cosine(0.7, vec![1.0, -2.0]));
        let lattice = VelocityLattice { radius: 1.5, step: 1e-2 };
        let (q, p) = ([0.3, -0.1], [0.4, -0.8]);
        let oracle = legendre_oracle(&spec, &q, &p, lattice).unwrap();
        let exact = spec.hamiltonian_value(&q, &p);
        // grid maximizer error is quadratic in the spacing for a smooth concave objective
        assert!((oracle - exact).abs() <= 2.0 * lattice.step * lattice.step);
    }

    fn spec(t: f64, phi: PotentialSpec<f64>, psi: PotentialSpec<f64>) -> ProblemSpec<f64> {
        ProblemSpec::new(1, t, LagrangianSpec::kinetic(), phi, psi).unwrap()
    }

    #[test]
    fn small_time_examples() {
        let c = check_small_time_condition(&spec(3.0, PotentialSpec::Zero, PotentialSpec::Zero));
        assert!(c.holds);
        assert_eq!((c.lhs, c.margin), (0.0, 0.5));

        let cos = PotentialSpec::cosine(1.0, vec![1.0]);
        let c = check_small_time_condition(&spec(0.1, cos.clone(), PotentialSpec::Zero));
        assert!(c.holds);
        assert_abs_diff_eq!(c.lhs, 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(c.margin, 0.47, epsilon = 1e-15);

        let c = check_small_time_condition(&spec(1.0, cos, PotentialSpec::Zero));
        assert!(!c.holds);
        assert_eq!((c.lhs, c.margin), (3.0, -2.5));
    }

    #[test]
    fn uniqueness_constant_reported() {
        let cos = PotentialSpec::cosine(1.0, vec![1.0]);
        let c = check_small_time_condition(&spec(0.1, cos, PotentialSpec::quadratic(-0.5)));
        // 1 - 0.005 * (1 + 1) - 0.1 * (0.5 + 0.5)
        assert_abs_diff_eq!(c.uniqueness_constant, 0.89, epsilon = 1e-14);
    }

    #[test]
    fn potential_bounds() {
        let cos = PotentialSpec::cosine(2.0, vec![1.0, 2.0]);
        assert_eq!(cos.hessian_lower(), -10.0);
        assert_eq!(cos.hessian_sup(), 10.0);
        assert!(cos.assumption_compliant());
        let q = PotentialSpec::quadratic(-3.0);
        assert_eq!((q.hessian_lower(), q.hessian_sup()), (-3.0, 3.0));
        assert!(!q.assumption_compliant());
        assert_eq!(q.gradient_sup(), f64::INFINITY);
        let z = PotentialSpec::<f64>::Zero;
        assert_eq!((z.hessian_lower(), z.hessian_sup()), (0.0, 0.0));
    }

    #[test]
    fn lagrangian_constants() {
        let l = LagrangianSpec::with_position(PotentialSpec::cosine(1.5, vec![2.0]));
        assert_eq!(l.lambda0(), 1.0);
        assert_eq!(l.c0(), 0.5);
        assert_eq!(l.c1(), 3.0);
        assert_eq!(l.position_shift(), 1.5);
        // shifted L dominates c0 |v|^2 on a probe grid, and |∇_q L| <= c1
        for i in -20..=20 {
            for j in -20..=20 {
                let (q, v) = ([i as f64 * 0.37], [j as f64 * 0.21]);
                assert!(l.value(&q, &v) + l.position_shift() >= l.c0() * v[0] * v[0] - 1e-12);
                let e = eval_lagrangian(&l, &q, &v).unwrap();
                assert!(e.grad_q[0].abs() <= l.c1() + 1e-12);
            }
        }
    }

    #[test]
    fn duality_examples() {
        let zero = LagrangianSpec::<f64>::kinetic();
        let probe = DualityProbe {
            q: vec![0.0],
            v: vec![3.0],
            p: vec![3.0],
        };
        let r = duality_identities(&probe, &zero).unwrap();
        assert_eq!(r.momentum, vec![3.0]);
        assert_eq!(r.fenchel_gap, 0.0);
        let probe = DualityProbe {
            q: vec![std::f64::consts::FRAC_PI_2],
            v: vec![1.0],
            p: vec![0.0],
        };
        let r = duality_identities(&probe, &cos1()).unwrap();
        assert!(r.max_residual() < 1e-12);
        assert!(r.probe_gap > 0.0);
        let probe = DualityProbe {
            q: vec![0.0],
            v: vec![0.0],
            p: vec![0.0],
        };
        let r = duality_identities(&probe, &zero).unwrap();
        assert_eq!(r.momentum, vec![0.0]);
        assert_eq!(r.max_residual(), 0.0);
    }

    fn potential_strategy() -> impl Strategy<Value = PotentialSpec<f64>> {
        prop_oneof![
            Just(PotentialSpec::Zero),
            (-2.0..2.0f64).prop_map(PotentialSpec::quadratic),
            (0.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64)
                .prop_map(|(b, k1, k2)| PotentialSpec::cosine(b, vec![k1, k2])),
        ]
    }

    fn vec2() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0..3.0f64, 2)
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|c| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[c] += h;
                b[c] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let den: f64 = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
        num / den.max(1.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn analytic_gradients_match_finite_differences(
            g in potential_strategy(), q in vec2(), v in vec2(),
        ) {
            let l = LagrangianSpec::with_position(g);
            let h = 1e-5;
            let e = eval_lagrangian(&l, &q, &v).unwrap();
            prop_assert!(rel_err(&central_diff(|x| l.value(x, &v), &q, h), &e.grad_q) < 1e-6);
            prop_assert!(rel_err(&central_diff(|x| l.value(&q, x), &v, h), &e.grad_second) < 1e-6);
            let e = eval_hamiltonian(&l, &q, &v).unwrap();
            prop_assert!(rel_err(&central_diff(|x| l.hamiltonian_value(x, &v), &q, h), &e.grad_q) < 1e-6);
            prop_assert!(rel_err(&central_diff(|x| l.hamiltonian_value(&q, x), &v, h), &e.grad_second) < 1e-6);
        }

        #[test]
        fn fenchel_young(g in potential_strategy(), q in vec2(), v in vec2(), p in vec2()) {
            let l = LagrangianSpec::with_position(g);
            let r = duality_identities(&DualityProbe { q, v, p }, &l).unwrap();
            prop_assert!(r.probe_gap >= -1e-12);
            prop_assert!(r.max_residual() < 1e-12);
        }

        #[test]
        fn potentials_are_even(g in potential_strategy(), z in vec2()) {
            let neg: Vec<f64> = z.iter().map(|x| -x).collect();
            prop_assert_eq!(g.value(&z), g.value(&neg));
            let zero_grad = g.gradient(&[0.0, 0.0]);
            prop_assert!(zero_grad.iter().all(|x| *x == 0.0));
        }

        #[test]
        fn small_time_condition_monotone_in_horizon(
            phi in potential_strategy(), psi in potential_strategy(),
            t in 0.01..2.0f64, frac in 0.0..1.0f64,
        ) {
            let s = ProblemSpec::new(2, t, LagrangianSpec::kinetic(), phi, psi).unwrap();
            let shorter = s.with_horizon(t * frac.max(1e-3));
            if check_small_time_condition(&s).holds {
                prop_assert!(check_small_time_condition(&shorter).holds);
            }
        }
    }
}
