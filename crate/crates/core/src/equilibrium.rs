//! The game layer: the collective control, one player's cost under a
//! unilateral deviation, the Picard construction of equilibrium paths from the
//! individual value gradient, and the end-to-end verification pipeline.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descent::SolverOptions;
use crate::ensemble::{velocity, NodeField, PlayerGrid, SinglePath, TimeGrid, TrajectoryGrid};
use crate::error::{check_dim, Error, Result};
use crate::model::{check_small_time_condition, ProblemSpec, SmallTimeCheck};
use crate::optimality::{
    boundary_residual, el_residual_collective, el_residual_individual, hamiltonian_residual, to_hamiltonian,
    ResidualReport,
};
use crate::scalar::{sup_norm, Scalar};
use crate::value::{
    default_space_step, grad_value_collective, hje_residual_collective, hje_residual_individual, initial_cost_gradient,
    value_individual, HjeOptions, HjeReport, MomentumSource, ValueGradient, ValueSettings,
};
use crate::variational::{
    ensure_admissible, individual_path_cost, minimize_action_from, uniqueness_probe, ActionBreakdown, MinimizeResult,
    MinimizeSummary, UniquenessReport,
};

/// Velocities `α[j][i]` of a collective path, with the initial slice they integrate from.
#[derive(Clone, Debug)]
pub struct CollectiveControl<T> {
    pub alpha: NodeField<T>,
    pub initial: Vec<T>,
    pub time: TimeGrid<T>,
    pub players: PlayerGrid,
}

impl<T: Scalar> CollectiveControl<T> {
    pub fn from_trajectory(gamma: &TrajectoryGrid<T>) -> Self {
        Self {
            alpha: velocity(gamma),
            initial: gamma.slice(0).to_vec(),
            time: gamma.time,
            players: gamma.players,
        }
    }

    pub fn from_minimizer(res: &MinimizeResult<T>) -> Self {
        Self::from_trajectory(&res.trajectory)
    }

    /// Forward accumulation `γ[j+1] = γ[j] + dt α[j]`.
    pub fn integrate(&self) -> Result<TrajectoryGrid<T>> {
        let dt = self.time.dt();
        let mut values = self.initial.clone();
        let w = self.initial.len();
        for j in 0..self.time.steps {
            for k in 0..w {
                let next = values[j * w + k] + dt * self.alpha.row(j)[k];
                values.push(next);
            }
        }
        TrajectoryGrid::new(self.time, self.players, self.alpha.dim, values)
    }

    /// Player `i`'s control `α[·][i]`, flattened `M x d`.
    pub fn player(&self, i: usize) -> Vec<T> {
        (0..self.time.steps).flat_map(|j| self.alpha.at(j, i).to_vec()).collect()
    }
}

/// Path ending at `q` whose forward differences are `control` (`M x d`).
pub fn path_from_control<T: Scalar>(q: &[T], control: &[T], time: TimeGrid<T>) -> Result<SinglePath<T>> {
    let d = q.len();
    check_dim("control", time.steps * d, control.len())?;
    let dt = time.dt();
    let mut values = vec![T::zero(); (time.steps + 1) * d];
    values[time.steps * d..].copy_from_slice(q);
    for j in (0..time.steps).rev() {
        for c in 0..d {
            values[j * d + c] = values[(j + 1) * d + c] - dt * control[j * d + c];
        }
    }
    SinglePath::new(time, d, values)
}

/// `J` of player `omega0` under `control`, everybody else on `gamma`.
///
/// The deviated path is rebuilt backward from the player's terminal point.
pub fn individual_cost<T: Scalar>(
    omega0: usize,
    control: &[T],
    gamma: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
) -> Result<T> {
    if omega0 >= gamma.players.count {
        return Err(Error::InvalidArgument(format!(
            "player {omega0} out of range for {} players",
            gamma.players.count
        )));
    }
    let path = path_from_control(gamma.node(gamma.time.steps, omega0), control, gamma.time)?;
    individual_path_cost(&path, gamma, spec)
}

#[derive(Clone, Debug, Serialize)]
pub struct DeviationScenario<T> {
    pub omega0: usize,
    pub magnitude: T,
    /// Coefficients of the perturbation in the cosine basis, per coordinate.
    pub coefficients: Vec<T>,
    #[serde(skip)]
    pub control: Vec<T>,
    pub j_equilibrium: T,
    pub j_deviated: T,
    pub gap: T,
}

/// Deviation-test parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NashOptions<T> {
    pub enabled: bool,
    pub n_samples: usize,
    /// Perturbation sizes; omitted means `m = 1e-2 (1 + |γ|∞)` and `2m`.
    pub magnitudes: Option<Vec<T>>,
    /// Gap tolerance relative to `1 + |J_eq|`.
    pub tol: T,
    pub ratio_min: T,
    pub ratio_max: T,
}

impl<T: Scalar> Default for NashOptions<T> {
    fn default() -> Self {
        Self {
            enabled: true,
            n_samples: 100,
            magnitudes: None,
            tol: T::lit(1e-8),
            ratio_min: T::lit(3.0),
            ratio_max: T::lit(5.0),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NashReport<T> {
    pub n: usize,
    pub min_gap: T,
    /// Gap ratios `gap(2m) / gap(m)` for every sample and magnitude pair.
    pub ratios: Vec<T>,
    /// Scenarios whose gap falls below `-tol (1 + |J_eq|)`.
    pub violations: Vec<usize>,
    pub pass: bool,
    #[serde(skip)]
    pub scenarios: Vec<DeviationScenario<T>>,
}

/// `δ(t) = Σ_{k=1..3} c_k cos((k - ½) π t / T)` sampled at the left nodes.
fn perturbation<T: Scalar>(coefficients: &[T], time: TimeGrid<T>, dim: usize) -> Vec<T> {
    let pi = T::lit(std::f64::consts::PI);
    let mut out = vec![T::zero(); time.steps * dim];
    for j in 0..time.steps {
        let t = time.node(j) / time.horizon;
        for c in 0..dim {
            out[j * dim + c] = (0..3)
                .map(|k| coefficients[c * 3 + k] * ((T::from_usize_lossy(k) + T::lit(0.5)) * pi * t).cos())
                .sum();
        }
    }
    out
}

/// Samples players and smooth terminal-pinned perturbations `δ` and compares
/// `J(α + m δ)` with `J(α)` for every magnitude `m`.
pub fn nash_deviation_test<T: Scalar>(
    gamma: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    opts: &NashOptions<T>,
    seed: u64,
) -> Result<NashReport<T>> {
    let control = CollectiveControl::from_trajectory(gamma);
    let d = gamma.dim;
    let magnitudes = opts.magnitudes.clone().unwrap_or_else(|| {
        let m = T::lit(1e-2) * gamma.scale();
        vec![m, m + m]
    });
    let samples = (0..opts.n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let omega0 = rng.random_range(0..gamma.players.count);
            let coefficients: Vec<T> = (0..3 * d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    T::lit(z / 3f64.sqrt())
                })
                .collect();
            let delta = perturbation(&coefficients, gamma.time, d);
            let alpha = control.player(omega0);
            let j_eq = individual_cost(omega0, &alpha, gamma, spec)?;
            magnitudes
                .iter()
                .map(|&m| {
                    let a: Vec<T> = alpha.iter().zip(&delta).map(|(&x, &y)| x + m * y).collect();
                    let j_dev = individual_cost(omega0, &a, gamma, spec)?;
                    Ok(DeviationScenario {
                        omega0,
                        magnitude: m,
                        coefficients: coefficients.clone(),
                        control: a,
                        j_equilibrium: j_eq,
                        j_deviated: j_dev,
                        gap: j_dev - j_eq,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ratios = Vec::new();
    for row in &samples {
        for a in row {
            for b in row {
                let twice = a.magnitude + a.magnitude;
                if a.magnitude > T::zero() && (b.magnitude - twice).abs() <= T::lit(1e-12) * twice {
                    ratios.push(b.gap / a.gap);
                }
            }
        }
    }
    let scenarios: Vec<DeviationScenario<T>> = samples.into_iter().flatten().collect();
    let violations: Vec<usize> = scenarios
        .iter()
        .enumerate()
        .filter(|(_, s)| s.gap < -opts.tol * (T::one() + s.j_equilibrium.abs()))
        .map(|(k, _)| k)
        .collect();
    let min_gap = scenarios.iter().map(|s| s.gap).fold(T::infinity(), T::min);
    let ratios_ok = ratios.iter().all(|&r| r >= opts.ratio_min && r <= opts.ratio_max);
    Ok(NashReport {
        n: scenarios.len(),
        min_gap,
        pass: violations.is_empty() && ratios_ok,
        ratios,
        violations,
        scenarios,
    })
}

/// `∇_q u(t_j, q)` on the nodes of a time grid.
pub trait MomentumField<T>: Sync {
    fn momentum(&self, j: usize, q: &[T]) -> Vec<T>;
}

impl<T, F> MomentumField<T> for F
where
    F: Fn(usize, &[T]) -> Vec<T> + Sync,
{
    fn momentum(&self, j: usize, q: &[T]) -> Vec<T> {
        self(j, q)
    }
}

#[derive(Clone, Debug)]
struct NodeLattice<T> {
    lo: Vec<T>,
    step: Vec<T>,
    /// Momenta at lattice points, first coordinate fastest, `d` entries each.
    values: Vec<T>,
}

/// Individual value gradient tabulated on one box per time node and
/// interpolated multilinearly (clamped to the box).
#[derive(Clone, Debug)]
pub struct LatticeField<T> {
    pub points: usize,
    dim: usize,
    nodes: Vec<NodeLattice<T>>,
}

impl<T: Scalar> LatticeField<T> {
    /// Tabulates `∇_q û(t_j, ·; frozen)` (formula branch) for `j = 0..M-1` on
    /// boxes covering `frozen[j]` plus `margin` of its extent on each side.
    pub fn tabulate(
        frozen: &TrajectoryGrid<T>,
        spec: &ProblemSpec<T>,
        solver: &SolverOptions<T>,
        points: usize,
        margin: T,
    ) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidArgument("lattice needs at least 2 points per axis".into()));
        }
        let d = frozen.dim;
        let per_node = points.pow(d as u32);
        let floor = T::lit(1e-3) * frozen.scale();
        let boxes: Vec<(Vec<T>, Vec<T>)> = (0..frozen.time.steps)
            .map(|j| {
                let slice = frozen.slice(j);
                let mut lo = vec![T::infinity(); d];
                let mut hi = vec![T::neg_infinity(); d];
                for p in slice.chunks(d) {
                    for c in 0..d {
                        lo[c] = lo[c].min(p[c]);
                        hi[c] = hi[c].max(p[c]);
                    }
                }
                let mut step = vec![T::zero(); d];
                for c in 0..d {
                    let pad = margin * (hi[c] - lo[c]).max(floor);
                    lo[c] -= pad;
                    hi[c] += pad;
                    step[c] = (hi[c] - lo[c]) / T::from_usize_lossy(points - 1);
                }
                (lo, step)
            })
            .collect();
        let jobs: Vec<(usize, usize)> = (0..frozen.time.steps)
            .flat_map(|j| (0..per_node).map(move |k| (j, k)))
            .collect();
        let values = jobs
            .par_iter()
            .map(|&(j, k)| {
                let (lo, step) = &boxes[j];
                let q = lattice_point(k, points, lo, step);
                if j == 0 {
                    return Ok(initial_cost_gradient(&q, frozen, spec));
                }
                let probe = value_individual(frozen.time.node(j), &q, frozen, spec, solver, None)?;
                let r = probe.minimizer.expect("positive horizon has a path");
                let m = r.time.steps;
                let dt = r.time.dt();
                let v: Vec<T> = (0..d).map(|c| (r.node(m)[c] - r.node(m - 1)[c]) / dt).collect();
                Ok(spec.lagrangian.momentum(r.node(m - 1), &v))
            })
            .collect::<Result<Vec<Vec<T>>>>()?;
        let mut nodes = Vec::with_capacity(frozen.time.steps);
        let mut it = values.into_iter();
        for (lo, step) in boxes {
            let mut vals = Vec::with_capacity(per_node * d);
            for _ in 0..per_node {
                vals.extend(it.next().expect("one value per job"));
            }
            nodes.push(NodeLattice { lo, step, values: vals });
        }
        Ok(Self { points, dim: d, nodes })
    }
}

fn lattice_point<T: Scalar>(mut k: usize, points: usize, lo: &[T], step: &[T]) -> Vec<T> {
    let mut q = Vec::with_capacity(lo.len());
    for c in 0..lo.len() {
        q.push(lo[c] + T::from_usize_lossy(k % points) * step[c]);
        k /= points;
    }
    q
}

impl<T: Scalar> MomentumField<T> for LatticeField<T> {
    fn momentum(&self, j: usize, q: &[T]) -> Vec<T> {
        let node = &self.nodes[j];
        let d = self.dim;
        let n = self.points;
        let mut base = vec![0usize; d];
        let mut frac = vec![T::zero(); d];
        for c in 0..d {
            let s = ((q[c] - node.lo[c]) / node.step[c]).max(T::zero()).min(T::from_usize_lossy(n - 1));
            let i = s.floor().to_usize().unwrap_or(0).min(n - 2);
            base[c] = i;
            frac[c] = s - T::from_usize_lossy(i);
        }
        let mut out = vec![T::zero(); d];
        for corner in 0..(1usize << d) {
            let mut weight = T::one();
            let mut index = 0;
            let mut stride = 1;
            for c in 0..d {
                let up = (corner >> c) & 1 == 1;
                weight *= if up { frac[c] } else { T::one() - frac[c] };
                index += (base[c] + usize::from(up)) * stride;
                stride *= n;
            }
            if weight != T::zero() {
                for c in 0..d {
                    out[c] += weight * node.values[index * d + c];
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct PicardTrace<T> {
    pub iterates: Vec<TrajectoryGrid<T>>,
    pub sup_deltas: Vec<T>,
    pub converged: bool,
}

impl<T: Scalar> PicardTrace<T> {
    pub fn fixed_point(&self) -> &TrajectoryGrid<T> {
        self.iterates.last().expect("trace holds the initial iterate")
    }

    pub fn iterations(&self) -> usize {
        self.sup_deltas.len()
    }

    pub fn final_delta(&self) -> T {
        self.sup_deltas.last().copied().unwrap_or(T::zero())
    }
}

/// Iterates `y(t_j) = X* - Σ_{l>=j} dt F(t_l, y(t_l))` with
/// `F(t, y) = ∇_p H(y, ∇_q u(t, y))`, starting from `y ≡ X*`.
pub fn picard_solve<T: Scalar, F: MomentumField<T>>(
    x_star: &[T],
    field: &F,
    time: TimeGrid<T>,
    spec: &ProblemSpec<T>,
    tol: T,
    max_iter: usize,
) -> Result<PicardTrace<T>> {
    let d = spec.dimension;
    if d == 0 || x_star.is_empty() || x_star.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            argument: "X*",
            expected: d,
            found: x_star.len(),
        });
    }
    let players = PlayerGrid::new(x_star.len() / d)?;
    let dt = time.dt();
    let mut current = TrajectoryGrid::constant(time, players, d, x_star)?;
    let mut trace = PicardTrace {
        iterates: vec![current.clone()],
        sup_deltas: Vec::new(),
        converged: false,
    };
    let w = x_star.len();
    for _ in 0..max_iter {
        let mut values = vec![T::zero(); (time.steps + 1) * w];
        values[time.steps * w..].copy_from_slice(x_star);
        let mut acc = vec![T::zero(); w];
        for l in (0..time.steps).rev() {
            for i in 0..players.count {
                let y = current.node(l, i);
                let p = field.momentum(l, y);
                spec.lagrangian
                    .add_hamiltonian_grad_p(y, &p, dt, &mut acc[i * d..(i + 1) * d]);
            }
            for k in 0..w {
                values[l * w + k] = x_star[k] - acc[k];
            }
        }
        let next = TrajectoryGrid::new(time, players, d, values)?;
        let delta = next.sup_distance(&current);
        trace.sup_deltas.push(delta);
        trace.iterates.push(next.clone());
        current = next;
        if delta <= tol {
            trace.converged = true;
            break;
        }
    }
    Ok(trace)
}

// ---------------------------------------------------------------------------
// End-to-end pipeline.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualCheck<T> {
    pub enabled: bool,
    /// Bound on the interior Euler–Lagrange residuals, raised to
    /// `10 tol / (dt w)` when the solver tolerance cannot reach it.
    pub el_tol: T,
    /// `C` in `|boundary residual| <= C dt`.
    pub boundary_constant: T,
    /// Bound on `|hamiltonian - el|` node for node.
    pub formulation_tol: T,
}

impl<T: Scalar> Default for ResidualCheck<T> {
    fn default() -> Self {
        Self {
            enabled: true,
            el_tol: T::lit(1e-6),
            boundary_constant: T::lit(10.0),
            formulation_tol: T::lit(1e-12),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HjeCheck<T> {
    pub enabled: bool,
    /// Probe time as a fraction of the horizon.
    pub t_fraction: T,
    /// Omitted means `max(2 dt, 1e-3 T)`.
    pub h_time: Option<T>,
    /// Player whose position at the probe time is the individual probe point.
    pub player: usize,
    /// Bound on `|residual|`.
    pub tol: T,
    /// Bound on `|∇Û_fd - ∇Û_formula|`.
    pub gradient_tol: T,
    /// Omitted means `1e-4 (1 + |X|∞)`.
    pub h_space: Option<T>,
}

impl<T: Scalar> Default for HjeCheck<T> {
    fn default() -> Self {
        Self {
            enabled: true,
            t_fraction: T::lit(0.5),
            h_time: None,
            player: 0,
            tol: T::lit(5e-2),
            gradient_tol: T::lit(1e-3),
            h_space: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniquenessCheck {
    pub enabled: bool,
    pub n_starts: usize,
}

impl Default for UniquenessCheck {
    fn default() -> Self {
        Self {
            enabled: true,
            n_starts: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardCheck<T> {
    pub enabled: bool,
    pub tol: T,
    pub max_iter: usize,
    pub lattice_points: usize,
    pub margin: T,
    /// Allowed sup-distance between the fixed point and the minimizer.
    pub budget: T,
}

impl<T: Scalar> Default for PicardCheck<T> {
    fn default() -> Self {
        Self {
            enabled: true,
            tol: T::lit(1e-10),
            max_iter: 200,
            lattice_points: 33,
            margin: T::lit(0.2),
            budget: T::lit(5e-2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar"))]
pub struct CheckOptions<T> {
    pub el: ResidualCheck<T>,
    pub hje: HjeCheck<T>,
    pub nash: NashOptions<T>,
    pub uniqueness: UniquenessCheck,
    pub picard: PicardCheck<T>,
}

impl<T: Scalar> Default for CheckOptions<T> {
    fn default() -> Self {
        Self {
            el: ResidualCheck::default(),
            hje: HjeCheck::default(),
            nash: NashOptions::default(),
            uniqueness: UniquenessCheck::default(),
            picard: PicardCheck::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EquilibriumOptions<T> {
    pub steps: usize,
    pub solver: SolverOptions<T>,
    pub checks: CheckOptions<T>,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualSummary<T> {
    pub el_collective: ResidualReport<T>,
    pub el_boundary: ResidualReport<T>,
    pub hamiltonian: ResidualReport<T>,
    pub el_individual: ResidualReport<T>,
    pub el_individual_boundary: ResidualReport<T>,
    /// `max |hamiltonian - el_collective|` node for node.
    pub formulation_gap: T,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HjeSummary<T> {
    pub hje_collective: HjeReport<T>,
    pub hje_individual: HjeReport<T>,
    pub boundary_identity: T,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValueGradientSummary<T> {
    pub max_abs_diff: T,
    pub h: T,
    pub pass: bool,
    #[serde(skip)]
    pub detail: ValueGradient<T>,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessSummary<T> {
    pub n_starts: usize,
    pub max_dist: T,
    pub bound: T,
    pub unconverged: Vec<usize>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardSummary<T> {
    pub iters: usize,
    pub final_delta: T,
    pub converged: bool,
    /// Sup-distance between the fixed point and the collective minimizer.
    pub distance_to_minimizer: T,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NashSummary<T> {
    pub n: usize,
    pub min_gap: T,
    pub min_ratio: T,
    pub max_ratio: T,
    pub violations: Vec<usize>,
    pub pass: bool,
}

/// Every report of one pipeline run; `pass` is the conjunction of the enabled
/// checks and solver convergence.
#[derive(Clone, Debug, Serialize)]
pub struct VerificationBundle<T> {
    pub condition: SmallTimeCheck<T>,
    pub action: ActionBreakdown<T>,
    pub solver: MinimizeSummary<T>,
    pub residuals: Option<ResidualSummary<T>>,
    pub hje: Option<HjeSummary<T>>,
    pub value_gradient: Option<ValueGradientSummary<T>>,
    pub nash: Option<NashSummary<T>>,
    pub uniqueness: Option<UniquenessSummary<T>>,
    pub picard: Option<PicardSummary<T>>,
    /// Stage errors, keyed by stage name.
    pub errors: BTreeMap<String, String>,
    pub pass: bool,
    /// Wall-clock seconds per stage; not part of reproducible output.
    #[serde(skip)]
    pub timing: BTreeMap<String, f64>,
}

fn residual_stage<T: Scalar>(
    gamma: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    check: &ResidualCheck<T>,
    solver_tol: T,
) -> Result<ResidualSummary<T>> {
    let el = el_residual_collective(gamma, spec)?;
    let bd = boundary_residual(gamma, spec)?;
    let ham = hamiltonian_residual(&to_hamiltonian(gamma, spec)?, spec)?;
    let ind = el_residual_individual(&gamma.player_path(0), gamma, spec)?;
    let formulation_gap = crate::scalar::sup_distance(&el.per_node.data, &ham.per_node.data);
    let dt = gamma.time.dt();
    let scale = gamma.scale();
    let el_tol = (check.el_tol * scale).max(T::lit(10.0) * solver_tol / (dt * gamma.players.weight::<T>()));
    let pass = el.sup_norm <= el_tol
        && ind.interior.sup_norm <= el_tol
        && bd.sup_norm <= check.boundary_constant * scale * dt
        && formulation_gap <= check.formulation_tol * (T::one() + el.sup_norm);
    Ok(ResidualSummary {
        el_collective: el,
        el_boundary: bd,
        hamiltonian: ham,
        el_individual: ind.interior,
        el_individual_boundary: ind.boundary,
        formulation_gap,
        pass,
    })
}

fn hje_stage<T: Scalar>(
    gamma: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    opts: &EquilibriumOptions<T>,
) -> Result<(HjeSummary<T>, ValueGradientSummary<T>)> {
    let check = &opts.checks.hje;
    let settings = ValueSettings::new(opts.steps, opts.solver.clone());
    let mut hje = HjeOptions::defaults(spec, opts.steps);
    if let Some(h) = check.h_time {
        hje.h_time = h;
    }
    hje.momentum = MomentumSource::Formula;
    let x = gamma.terminal();
    let t = check.t_fraction * spec.horizon;
    let coll = hje_residual_collective(t, x, spec, &settings, &hje)?;
    let j = (t / gamma.time.dt()).round().to_usize().unwrap_or(0);
    if check.player >= gamma.players.count {
        return Err(Error::InvalidArgument(format!("hje probe player {} out of range", check.player)));
    }
    let q = gamma.node(j, check.player).to_vec();
    let ind = hje_residual_individual(t, &q, gamma, spec, &opts.solver, &hje)?;
    let boundary = crate::value::individual_boundary_identity(&q, gamma, spec, &opts.solver)?;
    let h = check.h_space.unwrap_or_else(|| default_space_step(x));
    let grad = grad_value_collective(spec.horizon, x, spec, &settings, h, Some(gamma))?;
    let scale = |r: &HjeReport<T>| T::one() + r.hamiltonian_term.abs() + r.interaction_term.abs();
    let pass = coll.residual.abs() <= check.tol * scale(&coll)
        && ind.residual.abs() <= check.tol * scale(&ind)
        && boundary.difference <= T::lit(1e-12) * (T::one() + boundary.initial_cost.abs())
        && coll.converged
        && ind.converged;
    Ok((
        HjeSummary {
            hje_collective: coll,
            hje_individual: ind,
            boundary_identity: boundary.difference,
            pass,
        },
        ValueGradientSummary {
            max_abs_diff: grad.max_abs_diff,
            h: grad.h,
            pass: grad.converged && grad.max_abs_diff <= check.gradient_tol,
            detail: grad,
        },
    ))
}

fn picard_stage<T: Scalar>(
    gamma: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    opts: &EquilibriumOptions<T>,
) -> Result<PicardSummary<T>> {
    let check = &opts.checks.picard;
    let field = LatticeField::tabulate(gamma, spec, &opts.solver, check.lattice_points, check.margin)?;
    let trace = picard_solve(gamma.terminal(), &field, gamma.time, spec, check.tol, check.max_iter)?;
    let distance = trace.fixed_point().sup_distance(gamma);
    Ok(PicardSummary {
        iters: trace.iterations(),
        final_delta: trace.final_delta(),
        converged: trace.converged,
        distance_to_minimizer: distance,
        pass: trace.converged && distance <= check.budget,
    })
}

/// Minimizes, extracts the control and runs every enabled check. Stage
/// failures are recorded in the bundle; only the admissibility refusal and
/// malformed input are returned as errors.
pub fn solve_equilibrium<T: Scalar>(
    spec: &ProblemSpec<T>,
    x_star: &[T],
    opts: &EquilibriumOptions<T>,
    init: Option<&TrajectoryGrid<T>>,
) -> Result<(MinimizeResult<T>, CollectiveControl<T>, VerificationBundle<T>)> {
    let condition = check_small_time_condition(spec);
    ensure_admissible(spec, &opts.solver)?;
    let mut timing = BTreeMap::new();
    let mut errors = BTreeMap::new();
    let clock = Instant::now();
    let d = spec.dimension;
    if d == 0 || x_star.is_empty() || x_star.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            argument: "X*",
            expected: d,
            found: x_star.len(),
        });
    }
    let players = PlayerGrid::new(x_star.len() / d)?;
    let time = TimeGrid::new(spec.horizon, opts.steps)?;
    let start = match init {
        Some(g) => g.with_terminal(x_star)?,
        None => TrajectoryGrid::constant(time, players, d, x_star)?,
    };
    let res = minimize_action_from(&start, spec, &opts.solver)?;
    timing.insert("minimize".to_string(), clock.elapsed().as_secs_f64());
    let control = CollectiveControl::from_minimizer(&res);
    let gamma = &res.trajectory;
    let checks = &opts.checks;

    let mut record = |name: &str, err: Error| {
        errors.insert(name.to_string(), err.to_string());
    };

    let t0 = Instant::now();
    let residuals = if checks.el.enabled {
        residual_stage(gamma, spec, &checks.el, opts.solver.tol).map_err(|e| record("residuals", e)).ok()
    } else {
        None
    };
    timing.insert("residuals".into(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let (hje, value_gradient) = if checks.hje.enabled {
        match hje_stage(gamma, spec, opts) {
            Ok((h, g)) => (Some(h), Some(g)),
            Err(e) => {
                record("hje", e);
                (None, None)
            }
        }
    } else {
        (None, None)
    };
    timing.insert("hje".into(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let nash = if checks.nash.enabled {
        nash_deviation_test(gamma, spec, &checks.nash, opts.seed)
            .map(|r| NashSummary {
                n: r.n,
                min_gap: r.min_gap,
                min_ratio: r.ratios.iter().copied().fold(T::infinity(), T::min),
                max_ratio: r.ratios.iter().copied().fold(T::neg_infinity(), T::max),
                violations: r.violations.clone(),
                pass: r.pass,
            })
            .map_err(|e| record("nash", e))
            .ok()
    } else {
        None
    };
    timing.insert("nash".into(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let uniqueness = if checks.uniqueness.enabled {
        uniqueness_probe(x_star, opts.steps, spec, &opts.solver, checks.uniqueness.n_starts, opts.seed)
            .map(|r: UniquenessReport<T>| UniquenessSummary {
                n_starts: r.n_starts,
                max_dist: r.max_distance,
                bound: r.bound,
                pass: r.passed(),
                unconverged: r.unconverged,
            })
            .map_err(|e| record("uniqueness", e))
            .ok()
    } else {
        None
    };
    timing.insert("uniqueness".into(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let picard = if checks.picard.enabled {
        picard_stage(gamma, spec, opts).map_err(|e| record("picard", e)).ok()
    } else {
        None
    };
    timing.insert("picard".into(), t0.elapsed().as_secs_f64());
    timing.insert("total".into(), clock.elapsed().as_secs_f64());

    let pass = res.converged
        && errors.is_empty()
        && residuals.as_ref().is_none_or(|r| r.pass)
        && hje.as_ref().is_none_or(|r| r.pass)
        && value_gradient.as_ref().is_none_or(|r| r.pass)
        && nash.as_ref().is_none_or(|r| r.pass)
        && uniqueness.as_ref().is_none_or(|r| r.pass)
        && picard.as_ref().is_none_or(|r| r.pass);
    let bundle = VerificationBundle {
        condition,
        action: res.action,
        solver: res.summary(),
        residuals,
        hje,
        value_gradient,
        nash,
        uniqueness,
        picard,
        errors,
        pass,
        timing,
    };
    Ok((res, control, bundle))
}

/// Sup-norm of a control, used by callers that report control magnitudes.
pub fn control_sup<T: Scalar>(control: &CollectiveControl<T>) -> T {
    sup_norm(&control.alpha.data)
}
