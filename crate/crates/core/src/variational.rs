//! The discrete total cost `B = A + U_*` on a trajectory grid, its exact
//! gradient, the terminal-pinned minimizer and the curvature/uniqueness probes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::descent::{self, ChainLayout, Objective, SolverOptions};
use crate::ensemble::{interpolate, NodeField, PlayerGrid, SinglePath, TimeGrid, TrajectoryGrid};
use crate::error::{check_dim, Error, Result};
use crate::model::{check_small_time_condition, PotentialSpec, ProblemSpec};
use crate::scalar::Scalar;

/// Work (slices x pairs) above which slice loops run on the rayon pool.
const PARALLEL_WORK: usize = 1 << 15;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ActionBreakdown<T> {
    pub running_lagrangian: T,
    pub running_interaction: T,
    pub initial_interaction: T,
    pub total: T,
}

/// How the pairwise interaction enters the gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InteractionAssembly {
    /// `w² Σ_k ∇Φ(γ_i - γ_k)`: both slots of the double sum folded into one copy.
    Symmetrized,
    /// `½ w² (Σ_k ∇Φ(γ_i - γ_k) - Σ_k ∇Φ(γ_k - γ_i))`, each slot differentiated separately.
    RawDoubleSum,
}

#[derive(Clone, Copy, Debug)]
struct Shape<T> {
    dt: T,
    steps: usize,
    players: usize,
    dim: usize,
}

impl<T: Scalar> Shape<T> {
    fn of(gamma: &TrajectoryGrid<T>) -> Self {
        Self {
            dt: gamma.time.dt(),
            steps: gamma.time.steps,
            players: gamma.players.count,
            dim: gamma.dim,
        }
    }

    fn width(&self) -> usize {
        self.players * self.dim
    }

    fn weight(&self) -> T {
        T::one() / T::from_usize_lossy(self.players)
    }

    fn parallel(&self) -> bool {
        self.steps * self.players * self.players * self.dim > PARALLEL_WORK
    }
}

/// `½ Σ_{i,k} Π(x_i - x_k)` (unweighted; self-pairs included).
fn pair_sum<T: Scalar>(slice: &[T], dim: usize, pot: &PotentialSpec<T>) -> T {
    if pot.is_zero() {
        return T::zero();
    }
    let n = slice.len() / dim;
    let mut z = vec![T::zero(); dim];
    let mut acc = T::zero();
    for i in 0..n {
        let xi = &slice[i * dim..(i + 1) * dim];
        for k in 0..n {
            let xk = &slice[k * dim..(k + 1) * dim];
            for c in 0..dim {
                z[c] = xi[c] - xk[c];
            }
            acc += pot.value(&z);
        }
    }
    acc / T::lit(2.0)
}

/// Adds `scale · Σ_k ∇Π(x_i - x_k)` to `out[i]` (symmetrized form), or the
/// raw two-slot derivative of `Σ_{a,b} Π(x_a - x_b) / 2` scaled the same way.
fn add_pair_gradient<T: Scalar>(
    slice: &[T],
    dim: usize,
    pot: &PotentialSpec<T>,
    scale: T,
    assembly: InteractionAssembly,
    out: &mut [T],
) {
    if pot.is_zero() {
        return;
    }
    let n = slice.len() / dim;
    let half = scale / T::lit(2.0);
    let mut z = vec![T::zero(); dim];
    for i in 0..n {
        let xi = &slice[i * dim..(i + 1) * dim];
        let oi = &mut out[i * dim..(i + 1) * dim];
        for k in 0..n {
            let xk = &slice[k * dim..(k + 1) * dim];
            match assembly {
                InteractionAssembly::Symmetrized => {
                    for c in 0..dim {
                        z[c] = xi[c] - xk[c];
                    }
                    pot.add_gradient(&z, scale, oi);
                }
                InteractionAssembly::RawDoubleSum => {
                    for c in 0..dim {
                        z[c] = xi[c] - xk[c];
                    }
                    pot.add_gradient(&z, half, oi);
                    for c in 0..dim {
                        z[c] = xk[c] - xi[c];
                    }
                    pot.add_gradient(&z, -half, oi);
                }
            }
        }
    }
}

/// Per-slice contribution `(dt w Σ_i L, dt ½ w² Σ Φ)` of slice `j < M`.
fn slice_terms<T: Scalar>(spec: &ProblemSpec<T>, sh: &Shape<T>, vals: &[T], j: usize) -> (T, T) {
    let (w, d, width) = (sh.weight(), sh.dim, sh.width());
    let cur = &vals[j * width..(j + 1) * width];
    let next = &vals[(j + 1) * width..(j + 2) * width];
    let mut v = vec![T::zero(); d];
    let mut lag = T::zero();
    for i in 0..sh.players {
        let q = &cur[i * d..(i + 1) * d];
        for c in 0..d {
            v[c] = (next[i * d + c] - q[c]) / sh.dt;
        }
        lag += spec.lagrangian.value(q, &v);
    }
    let inter = pair_sum(cur, d, &spec.phi);
    (sh.dt * w * lag, sh.dt * w * w * inter)
}

fn breakdown<T: Scalar>(spec: &ProblemSpec<T>, sh: &Shape<T>, vals: &[T]) -> ActionBreakdown<T> {
    let terms: Vec<(T, T)> = if sh.parallel() {
        (0..sh.steps)
            .into_par_iter()
            .map(|j| slice_terms(spec, sh, vals, j))
            .collect()
    } else {
        (0..sh.steps).map(|j| slice_terms(spec, sh, vals, j)).collect()
    };
    // summed in slice order so the result does not depend on the pool size
    let mut out = ActionBreakdown::default();
    for (l, p) in terms {
        out.running_lagrangian += l;
        out.running_interaction += p;
    }
    let w = sh.weight();
    out.initial_interaction = w * w * pair_sum(&vals[..sh.width()], sh.dim, &spec.psi);
    out.total = out.running_lagrangian + out.running_interaction + out.initial_interaction;
    out
}

/// Gradient row of free slice `j` (length `N d`).
fn gradient_row<T: Scalar>(
    spec: &ProblemSpec<T>,
    sh: &Shape<T>,
    vals: &[T],
    j: usize,
    assembly: InteractionAssembly,
    row: &mut [T],
) {
    let (w, d, width, dt) = (sh.weight(), sh.dim, sh.width(), sh.dt);
    row.iter_mut().for_each(|r| *r = T::zero());
    let cur = &vals[j * width..(j + 1) * width];
    let next = &vals[(j + 1) * width..(j + 2) * width];
    let mut v = vec![T::zero(); d];
    for i in 0..sh.players {
        let q = &cur[i * d..(i + 1) * d];
        let r = &mut row[i * d..(i + 1) * d];
        for c in 0..d {
            v[c] = (next[i * d + c] - q[c]) / dt;
        }
        spec.lagrangian.add_grad_q(q, &v, dt * w, r);
        spec.lagrangian.add_grad_v(q, &v, -w, r);
        if j > 0 {
            let prev = &vals[(j - 1) * width + i * d..(j - 1) * width + (i + 1) * d];
            for c in 0..d {
                v[c] = (q[c] - prev[c]) / dt;
            }
            spec.lagrangian.add_grad_v(prev, &v, w, r);
        }
    }
    add_pair_gradient(cur, d, &spec.phi, dt * w * w, assembly, row);
    if j == 0 {
        add_pair_gradient(cur, d, &spec.psi, w * w, assembly, row);
    }
}

fn gradient_into<T: Scalar>(
    spec: &ProblemSpec<T>,
    sh: &Shape<T>,
    vals: &[T],
    assembly: InteractionAssembly,
    out: &mut [T],
) {
    let width = sh.width();
    if sh.parallel() {
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(j, row)| gradient_row(spec, sh, vals, j, assembly, row));
    } else {
        out.chunks_mut(width)
            .enumerate()
            .for_each(|(j, row)| gradient_row(spec, sh, vals, j, assembly, row));
    }
}

fn check_grid<T: Scalar>(gamma: &TrajectoryGrid<T>, spec: &ProblemSpec<T>) -> Result<()> {
    check_dim("trajectory dimension", spec.dimension, gamma.dim)?;
    spec.validate()?;
    let (a, b) = (gamma.time.horizon, spec.horizon);
    if (a - b).abs() > T::lit(16.0) * T::epsilon() * a.abs().max(b.abs()) {
        return Err(Error::GridMismatch(format!(
            "grid horizon {a} differs from problem horizon {b}"
        )));
    }
    Ok(())
}

/// `½ w² Σ_{i,k} Ψ(X_i - X_k)` for an `N x d` slice.
pub fn initial_cost<T: Scalar>(slice: &[T], dim: usize, psi: &PotentialSpec<T>) -> Result<T> {
    if dim == 0 || slice.is_empty() || slice.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            argument: "slice",
            expected: dim,
            found: slice.len(),
        });
    }
    psi.validate(dim)?;
    let n = slice.len() / dim;
    let w = T::one() / T::from_usize_lossy(n);
    Ok(w * w * pair_sum(slice, dim, psi))
}

pub fn action<T: Scalar>(gamma: &TrajectoryGrid<T>, spec: &ProblemSpec<T>) -> Result<ActionBreakdown<T>> {
    check_grid(gamma, spec)?;
    Ok(breakdown(spec, &Shape::of(gamma), gamma.values()))
}

/// Exact gradient of the discrete total cost with respect to the free nodes
/// `j = 0..M-1`.
pub fn action_gradient<T: Scalar>(gamma: &TrajectoryGrid<T>, spec: &ProblemSpec<T>) -> Result<NodeField<T>> {
    action_gradient_with(gamma, spec, InteractionAssembly::Symmetrized)
}

pub fn action_gradient_with<T: Scalar>(
    gamma: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    assembly: InteractionAssembly,
) -> Result<NodeField<T>> {
    check_grid(gamma, spec)?;
    let sh = Shape::of(gamma);
    let mut field = NodeField::zeros(sh.steps, sh.players, sh.dim);
    gradient_into(spec, &sh, gamma.values(), assembly, &mut field.data);
    Ok(field)
}

struct CollectiveObjective<'a, T> {
    spec: &'a ProblemSpec<T>,
    shape: Shape<T>,
    terminal: &'a [T],
}

impl<T: Scalar> CollectiveObjective<'_, T> {
    fn full(&self, x: &[T]) -> Vec<T> {
        let mut v = Vec::with_capacity(x.len() + self.terminal.len());
        v.extend_from_slice(x);
        v.extend_from_slice(self.terminal);
        v
    }
}

impl<T: Scalar> Objective<T> for CollectiveObjective<'_, T> {
    fn value_and_gradient(&self, x: &[T], grad: &mut [T]) -> T {
        let full = self.full(x);
        gradient_into(self.spec, &self.shape, &full, InteractionAssembly::Symmetrized, grad);
        breakdown(self.spec, &self.shape, &full).total
    }

    fn layout(&self) -> ChainLayout<T> {
        ChainLayout {
            steps: self.shape.steps,
            channels: self.shape.width(),
            weight: self.shape.weight(),
            dt: self.shape.dt,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeResult<T> {
    pub trajectory: TrajectoryGrid<T>,
    pub action: ActionBreakdown<T>,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// Total cost after each accepted step, starting with the initial guess.
    pub trace: Vec<T>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimizeSummary<T> {
    pub action: ActionBreakdown<T>,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> MinimizeResult<T> {
    pub fn summary(&self) -> MinimizeSummary<T> {
        MinimizeSummary {
            action: self.action,
            grad_norm: self.grad_norm,
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

pub(crate) fn ensure_admissible<T: Scalar>(spec: &ProblemSpec<T>, opts: &SolverOptions<T>) -> Result<()> {
    let check = check_small_time_condition(spec);
    if check.holds || opts.force {
        Ok(())
    } else {
        Err(Error::ConditionViolated {
            lhs: check.lhs.as_f64(),
            rhs: check.rhs.as_f64(),
        })
    }
}

/// Minimizes the total cost over paths ending at `terminal`, starting from the
/// constant-in-time extension of `terminal`.
pub fn minimize_action<T: Scalar>(
    terminal: &[T],
    steps: usize,
    spec: &ProblemSpec<T>,
    opts: &SolverOptions<T>,
) -> Result<MinimizeResult<T>> {
    let d = spec.dimension;
    if d == 0 || terminal.is_empty() || terminal.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            argument: "terminal",
            expected: d,
            found: terminal.len(),
        });
    }
    let players = PlayerGrid::new(terminal.len() / d)?;
    let time = TimeGrid::new(spec.horizon, steps)?;
    let init = TrajectoryGrid::constant(time, players, d, terminal)?;
    minimize_action_from(&init, spec, opts)
}

/// Same as [`minimize_action`] from an explicit start; its terminal slice is the pin.
pub fn minimize_action_from<T: Scalar>(
    init: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    opts: &SolverOptions<T>,
) -> Result<MinimizeResult<T>> {
    check_grid(init, spec)?;
    ensure_admissible(spec, opts)?;
    let obj = CollectiveObjective {
        spec,
        shape: Shape::of(init),
        terminal: init.terminal(),
    };
    let out = descent::minimize(&obj, init.free_values().to_vec(), opts);
    let trajectory = init.from_free(&out.x);
    let action = breakdown(spec, &obj.shape, trajectory.values());
    Ok(MinimizeResult {
        trajectory,
        action,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        converged: out.converged,
        trace: out.trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureSample<T> {
    pub eps: T,
    pub value: T,
    /// `(f(ε+δ) + f(ε-δ) - 2 f(ε)) / δ²` on the sampling step `δ`.
    pub second_difference: T,
}

/// Samples `f(ε) = B((1-ε)γ + εγ̄)` at `n_eps` equispaced points of `[0, 1]`
/// and returns the interior points with their centered second differences.
pub fn convexity_probe<T: Scalar>(
    gamma: &TrajectoryGrid<T>,
    other: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    n_eps: usize,
) -> Result<Vec<CurvatureSample<T>>> {
    if !gamma.same_shape(other) {
        return Err(Error::GridMismatch("convexity probe needs identical grids".into()));
    }
    if gamma.terminal() != other.terminal() {
        return Err(Error::TerminalSliceMismatch);
    }
    if n_eps < 3 {
        return Err(Error::InvalidArgument("convexity probe needs n_eps >= 3".into()));
    }
    check_grid(gamma, spec)?;
    let delta = T::one() / T::from_usize_lossy(n_eps - 1);
    let eps: Vec<T> = (0..n_eps).map(|k| T::from_usize_lossy(k) * delta).collect();
    let values = eps
        .iter()
        .map(|&e| action(&interpolate(gamma, other, e)?, spec).map(|a| a.total))
        .collect::<Result<Vec<T>>>()?;
    Ok((1..n_eps - 1)
        .map(|k| CurvatureSample {
            eps: eps[k],
            value: values[k],
            second_difference: (values[k + 1] + values[k - 1] - T::lit(2.0) * values[k]) / (delta * delta),
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport<T> {
    pub n_starts: usize,
    pub max_distance: T,
    /// `10 tol (1 + |X|∞)`.
    pub bound: T,
    /// Indices of starts whose descent did not converge.
    pub unconverged: Vec<usize>,
}

impl<T: Scalar> UniquenessReport<T> {
    pub fn passed(&self) -> bool {
        self.unconverged.is_empty() && self.max_distance <= self.bound
    }
}

/// Random start: `X` plus Gaussian noise of size `1 + |X|∞` on the free nodes.
fn random_start<T: Scalar>(
    terminal: &[T],
    time: TimeGrid<T>,
    players: PlayerGrid,
    dim: usize,
    seed: u64,
    stream: u64,
) -> Result<TrajectoryGrid<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let amp = T::one() + crate::scalar::sup_norm(terminal);
    let width = terminal.len();
    let mut values = Vec::with_capacity((time.steps + 1) * width);
    for _ in 0..time.steps {
        for &x in terminal {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(x + amp * T::lit(z));
        }
    }
    values.extend_from_slice(terminal);
    TrajectoryGrid::new(time, players, dim, values)
}

/// Runs the minimizer from `n_starts` random initializations and reports the
/// largest pairwise sup-distance between the results.
pub fn uniqueness_probe<T: Scalar>(
    terminal: &[T],
    steps: usize,
    spec: &ProblemSpec<T>,
    opts: &SolverOptions<T>,
    n_starts: usize,
    seed: u64,
) -> Result<UniquenessReport<T>> {
    let d = spec.dimension;
    if d == 0 || terminal.is_empty() || terminal.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            argument: "terminal",
            expected: d,
            found: terminal.len(),
        });
    }
    if n_starts == 0 {
        return Err(Error::InvalidArgument("uniqueness probe needs at least one start".into()));
    }
    ensure_admissible(spec, opts)?;
    let players = PlayerGrid::new(terminal.len() / d)?;
    let time = TimeGrid::new(spec.horizon, steps)?;
    let runs = (0..n_starts)
        .into_par_iter()
        .map(|k| {
            let init = random_start(terminal, time, players, d, seed, k as u64)?;
            minimize_action_from(&init, spec, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut max_distance = T::zero();
    for a in 0..runs.len() {
        for b in a + 1..runs.len() {
            max_distance = max_distance.max(runs[a].trajectory.sup_distance(&runs[b].trajectory));
        }
    }
    Ok(UniquenessReport {
        n_starts,
        max_distance,
        bound: T::lit(10.0) * opts.tol * (T::one() + crate::scalar::sup_norm(terminal)),
        unconverged: runs
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.converged)
            .map(|(k, _)| k)
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Single-path cost against a frozen ensemble.

/// One player's path cost against frozen others:
/// `Σ_j dt [L(r_j, v_j) + w Σ_k Φ(r_j - f_j^k)] + w Σ_k Ψ(r_0 - f_0^k)`.
pub(crate) struct IndividualObjective<'a, T> {
    pub spec: &'a ProblemSpec<T>,
    /// Frozen ensemble on the same time grid as the path.
    pub frozen: &'a TrajectoryGrid<T>,
    pub terminal: &'a [T],
}

impl<T: Scalar> IndividualObjective<'_, T> {
    fn full(&self, x: &[T]) -> Vec<T> {
        let mut v = Vec::with_capacity(x.len() + self.terminal.len());
        v.extend_from_slice(x);
        v.extend_from_slice(self.terminal);
        v
    }

    fn field_value(&self, pot: &PotentialSpec<T>, r: &[T], slice: &[T], z: &mut [T]) -> T {
        if pot.is_zero() {
            return T::zero();
        }
        let d = r.len();
        let mut acc = T::zero();
        for fk in slice.chunks(d) {
            for c in 0..d {
                z[c] = r[c] - fk[c];
            }
            acc += pot.value(z);
        }
        acc / T::from_usize_lossy(slice.len() / d)
    }

    fn add_field_gradient(&self, pot: &PotentialSpec<T>, r: &[T], slice: &[T], scale: T, z: &mut [T], out: &mut [T]) {
        if pot.is_zero() {
            return;
        }
        let d = r.len();
        let s = scale / T::from_usize_lossy(slice.len() / d);
        for fk in slice.chunks(d) {
            for c in 0..d {
                z[c] = r[c] - fk[c];
            }
            pot.add_gradient(z, s, out);
        }
    }

    pub fn cost(&self, vals: &[T]) -> T {
        let d = self.frozen.dim;
        let dt = self.frozen.time.dt();
        let mut v = vec![T::zero(); d];
        let mut z = vec![T::zero(); d];
        let mut acc = T::zero();
        for j in 0..self.frozen.time.steps {
            let r = &vals[j * d..(j + 1) * d];
            for c in 0..d {
                v[c] = (vals[(j + 1) * d + c] - r[c]) / dt;
            }
            let running = self.spec.lagrangian.value(r, &v) + self.field_value(&self.spec.phi, r, self.frozen.slice(j), &mut z);
            acc += dt * running;
        }
        acc + self.field_value(&self.spec.psi, &vals[..d], self.frozen.slice(0), &mut z)
    }

    pub fn gradient(&self, vals: &[T], out: &mut [T]) {
        let d = self.frozen.dim;
        let dt = self.frozen.time.dt();
        let mut v = vec![T::zero(); d];
        let mut z = vec![T::zero(); d];
        out.iter_mut().for_each(|o| *o = T::zero());
        for j in 0..self.frozen.time.steps {
            let r = &vals[j * d..(j + 1) * d];
            for c in 0..d {
                v[c] = (vals[(j + 1) * d + c] - r[c]) / dt;
            }
            {
                let row = &mut out[j * d..(j + 1) * d];
                self.spec.lagrangian.add_grad_q(r, &v, dt, row);
                self.spec.lagrangian.add_grad_v(r, &v, -T::one(), row);
                self.add_field_gradient(&self.spec.phi, r, self.frozen.slice(j), dt, &mut z, row);
                if j == 0 {
                    self.add_field_gradient(&self.spec.psi, r, self.frozen.slice(0), T::one(), &mut z, row);
                }
            }
            if j + 1 < self.frozen.time.steps {
                self.spec.lagrangian.add_grad_v(r, &v, T::one(), &mut out[(j + 1) * d..(j + 2) * d]);
            }
        }
    }
}

impl<T: Scalar> Objective<T> for IndividualObjective<'_, T> {
    fn value_and_gradient(&self, x: &[T], grad: &mut [T]) -> T {
        let full = self.full(x);
        self.gradient(&full, grad);
        self.cost(&full)
    }

    fn layout(&self) -> ChainLayout<T> {
        ChainLayout {
            steps: self.frozen.time.steps,
            channels: self.frozen.dim,
            weight: T::one(),
            dt: self.frozen.time.dt(),
        }
    }
}

fn check_individual<T: Scalar>(r: &SinglePath<T>, frozen: &TrajectoryGrid<T>, spec: &ProblemSpec<T>) -> Result<()> {
    check_dim("path dimension", spec.dimension, r.dim)?;
    check_dim("frozen dimension", spec.dimension, frozen.dim)?;
    if r.time != frozen.time {
        return Err(Error::GridMismatch("path and frozen ensemble use different time grids".into()));
    }
    spec.validate()
}

/// Cost of one path against a frozen ensemble on the same time grid.
pub fn individual_path_cost<T: Scalar>(
    r: &SinglePath<T>,
    frozen: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
) -> Result<T> {
    check_individual(r, frozen, spec)?;
    let obj = IndividualObjective {
        spec,
        frozen,
        terminal: r.terminal(),
    };
    Ok(obj.cost(&r.values))
}

/// Gradient of [`individual_path_cost`] with respect to the free nodes `0..m-1`.
pub fn individual_path_gradient<T: Scalar>(
    r: &SinglePath<T>,
    frozen: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
) -> Result<Vec<T>> {
    check_individual(r, frozen, spec)?;
    let obj = IndividualObjective {
        spec,
        frozen,
        terminal: r.terminal(),
    };
    let mut out = vec![T::zero(); r.time.steps * r.dim];
    obj.gradient(&r.values, &mut out);
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct IndividualResult<T> {
    pub path: SinglePath<T>,
    pub cost: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes the single-path cost over paths ending at `q`, against `frozen`
/// on its own time grid. Starts from `warm` or the constant path at `q`.
pub fn minimize_individual<T: Scalar>(
    q: &[T],
    frozen: &TrajectoryGrid<T>,
    spec: &ProblemSpec<T>,
    opts: &SolverOptions<T>,
    warm: Option<&SinglePath<T>>,
) -> Result<IndividualResult<T>> {
    check_dim("q", spec.dimension, q.len())?;
    let init = match warm {
        Some(p) => {
            let mut values = p.values.clone();
            let n = values.len();
            values[n - q.len()..].copy_from_slice(q);
            SinglePath::new(p.time, p.dim, values)?
        }
        None => SinglePath::from_fn(frozen.time, q.len(), |_| q.to_vec())?,
    };
    check_individual(&init, frozen, spec)?;
    let obj = IndividualObjective {
        spec,
        frozen,
        terminal: q,
    };
    let free = init.values[..frozen.time.steps * q.len()].to_vec();
    let out = descent::minimize(&obj, free, opts);
    let mut values = out.x;
    values.extend_from_slice(q);
    Ok(IndividualResult {
        path: SinglePath::new(frozen.time, q.len(), values)?,
        cost: out.value,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        converged: out.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn quad_spec(phi: f64, psi: f64, horizon: f64) -> ProblemSpec<f64> {
        ProblemSpec::new(
            1,
            horizon,
            LagrangianSpec::kinetic(),
            PotentialSpec::quadratic(phi),
            PotentialSpec::quadratic(psi),
        )
        .unwrap()
    }

    use crate::model::LagrangianSpec;

    /// Player 1 of the two-player quadratic instance with `X = (-1, 1)`.
    fn oracle(phi: f64, psi: f64, horizon: f64, s: f64) -> f64 {
        let r = phi.sqrt();
        let a = 1.0 / ((r * horizon).cosh() + psi / r * (r * horizon).sinh());
        let b = psi * a / r;
        a * (r * s).cosh() + b * (r * s).sinh()
    }

    fn forced() -> SolverOptions<f64> {
        SolverOptions {
            force: true,
            ..SolverOptions::default()
        }
    }

    #[test]
    fn initial_cost_examples() {
        assert_eq!(initial_cost(&[1.0, 2.0], 1, &PotentialSpec::zero()).unwrap(), 0.0);
        let v = initial_cost(&[-1.0, 1.0], 1, &PotentialSpec::quadratic(1.0)).unwrap();
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-15);
        let v = initial_cost(&[0.3, -2.0], 2, &PotentialSpec::cosine(0.7, vec![1.0, 2.0])).unwrap();
        assert_abs_diff_eq!(v, 0.35, epsilon = 1e-15);
        assert!(initial_cost(&[1.0, 2.0, 3.0], 2, &PotentialSpec::zero()).is_err());
    }

    #[test]
    fn action_examples() {
        let kinetic = ProblemSpec::new(1, 1.0, LagrangianSpec::kinetic(), PotentialSpec::zero(), PotentialSpec::zero()).unwrap();
        let time = TimeGrid::new(1.0, 10).unwrap();
        let c = TrajectoryGrid::constant(time, PlayerGrid::new(3).unwrap(), 1, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(action(&c, &kinetic).unwrap().total, 0.0);

        let line = TrajectoryGrid::from_fn(time, PlayerGrid::new(1).unwrap(), 1, |t, _| vec![t]).unwrap();
        assert_abs_diff_eq!(action(&line, &kinetic).unwrap().total, 0.5, epsilon = 1e-14);

        let spec = quad_spec(1.0, 0.0, 1.0);
        let spec = ProblemSpec { psi: PotentialSpec::zero(), ..spec };
        let pair = TrajectoryGrid::constant(time, PlayerGrid::new(2).unwrap(), 1, &[-1.0, 1.0]).unwrap();
        let a = action(&pair, &spec).unwrap();
        assert_abs_diff_eq!(a.running_interaction, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(a.total, 0.5, epsilon = 1e-14);
        assert_eq!(a.total, a.running_lagrangian + a.running_interaction + a.initial_interaction);

        let wrong = quad_spec(1.0, 1.0, 2.0);
        assert!(matches!(action(&pair, &wrong), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn constant_path_is_stationary_without_forces() {
        let spec = ProblemSpec::new(2, 1.0, LagrangianSpec::kinetic(), PotentialSpec::zero(), PotentialSpec::zero()).unwrap();
        let time = TimeGrid::new(1.0, 8).unwrap();
        let c = TrajectoryGrid::constant(time, PlayerGrid::new(3).unwrap(), 2, &[1.0, 0.0, -2.0, 0.5, 3.0, 3.0]).unwrap();
        assert_eq!(action_gradient(&c, &spec).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn trivial_minimizer_is_constant() {
        let spec = ProblemSpec::new(1, 1.0, LagrangianSpec::kinetic(), PotentialSpec::zero(), PotentialSpec::zero()).unwrap();
        let res = minimize_action(&[0.5, -1.5], 16, &spec, &SolverOptions::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.action.total, 0.0);
    }

    #[test]
    fn quadratic_minimizer_matches_closed_form() {
        let spec = quad_spec(1.0, 1.0, 0.5);
        let mut errors = Vec::new();
        for m in [16, 32, 64] {
            let res = minimize_action(&[-1.0, 1.0], m, &spec, &forced()).unwrap();
            assert!(res.converged);
            assert!(res.grad_norm <= 1e-9);
            assert_eq!(res.trajectory.terminal(), &[-1.0, 1.0]);
            let err = (0..=m)
                .map(|j| {
                    let t = res.trajectory.time.node(j);
                    let g = oracle(1.0, 1.0, 0.5, t);
                    (res.trajectory.node(j, 1)[0] - g).abs().max((res.trajectory.node(j, 0)[0] + g).abs())
                })
                .fold(0.0, f64::max);
            errors.push(err);
            let mirrored = minimize_action(&[1.0, -1.0], m, &spec, &forced()).unwrap();
            for (a, b) in mirrored.trajectory.values().iter().zip(res.trajectory.values()) {
                assert!((a + b).abs() < 1e-9);
            }
        }
        for w in errors.windows(2) {
            assert!((w[0] / w[1]).log2() >= 0.9, "{errors:?}");
        }
    }

    #[test]
    fn condition_refusal_and_override() {
        let spec = quad_spec(1.0, 1.0, 0.5);
        assert!(matches!(
            minimize_action(&[-1.0, 1.0], 16, &spec, &SolverOptions::default()),
            Err(Error::ConditionViolated { .. })
        ));
        assert!(minimize_action(&[-1.0, 1.0], 16, &spec, &forced()).is_ok());
    }

    #[test]
    fn non_convergence_is_a_flag() {
        let spec = quad_spec(1.0, 1.0, 0.5);
        let opts = SolverOptions {
            max_iter: 1,
            ..forced()
        };
        let res = minimize_action(&[-1.0, 1.0], 16, &spec, &opts).unwrap();
        assert!(!res.converged);
    }

    #[test]
    fn convexity_probe_examples() {
        let spec = quad_spec(1.0, 1.0, 0.5);
        let time = TimeGrid::new(0.5, 16).unwrap();
        let players = PlayerGrid::new(2).unwrap();
        let g = TrajectoryGrid::from_fn(time, players, 1, |t, i| vec![(i as f64 - 0.5) * (1.0 + t)]).unwrap();
        let same = convexity_probe(&g, &g, &spec, 7).unwrap();
        assert!(same.iter().all(|s| s.second_difference == 0.0));

        let h = TrajectoryGrid::from_fn(time, players, 1, |t, i| {
            let x = (i as f64 - 0.5) * (1.0 + 0.5);
            vec![x + (3.0 * t).sin() * (0.5 - t)]
        })
        .unwrap();
        let g = g.with_terminal(h.terminal()).unwrap();
        let probe = convexity_probe(&g, &h, &spec, 11).unwrap();
        let first = probe[0].second_difference;
        assert!(first > 0.0);
        for s in &probe {
            assert!((s.second_difference - first).abs() < 1e-10 * (1.0 + first.abs()));
        }

        let other = TrajectoryGrid::constant(time, players, 1, &[0.0, 0.0]).unwrap();
        assert!(matches!(
            convexity_probe(&g, &other, &spec, 5),
            Err(Error::TerminalSliceMismatch)
        ));
    }

    #[test]
    fn uniqueness_trivial() {
        let spec = ProblemSpec::new(1, 1.0, LagrangianSpec::kinetic(), PotentialSpec::zero(), PotentialSpec::zero()).unwrap();
        let rep = uniqueness_probe(&[0.5, -1.0, 2.0], 16, &spec, &SolverOptions::default(), 4, 7).unwrap();
        assert!(rep.unconverged.is_empty());
        assert!(rep.max_distance < 1e-8, "{}", rep.max_distance);
    }

    #[test]
    fn collective_path_is_stationary_for_the_individual_cost() {
        let spec = ProblemSpec::new(
            1,
            0.1,
            LagrangianSpec::with_position(PotentialSpec::cosine(0.5, vec![2.0])),
            PotentialSpec::cosine(1.0, vec![1.0]),
            PotentialSpec::cosine(0.3, vec![1.0]),
        )
        .unwrap();
        let terminal: Vec<f64> = (0..6).map(|i| (i as f64 + 0.5) / 6.0 * 2.0 - 1.0).collect();
        let res = minimize_action(&terminal, 32, &spec, &SolverOptions::default()).unwrap();
        assert!(res.converged);
        let path = res.trajectory.player_path(2);
        let g = individual_path_gradient(&path, &res.trajectory, &spec).unwrap();
        // collective gradient is the individual one scaled by w = 1/6
        assert!(crate::scalar::sup_norm(&g) <= 6.0 * 1e-9 * 1.0001);
        let ind = minimize_individual(path.terminal(), &res.trajectory, &spec, &SolverOptions::default(), None).unwrap();
        assert!(ind.converged);
        assert!(ind.path.sup_distance(&path) < 1e-6);
    }

    fn random_spec(dim: usize, kinds: [u8; 3], coef: &[f64]) -> ProblemSpec<f64> {
        let pot = |kind: u8, a: f64, k: &[f64]| match kind % 3 {
            0 => PotentialSpec::zero(),
            1 => PotentialSpec::quadratic(a),
            _ => PotentialSpec::cosine(a.abs(), k[..dim].to_vec()),
        };
        ProblemSpec::new(
            dim,
            0.3 + coef[0].abs(),
            LagrangianSpec::with_position(pot(kinds[0], coef[1], &coef[4..])),
            pot(kinds[1], coef[2], &coef[5..]),
            pot(kinds[2], coef[3], &coef[6..]),
        )
        .unwrap()
    }

    fn fd_check(gamma: &TrajectoryGrid<f64>, spec: &ProblemSpec<f64>) -> f64 {
        let grad = action_gradient(gamma, spec).unwrap();
        let h = 1e-6 * gamma.scale();
        let free = gamma.free_values().len();
        let mut worst: f64 = 0.0;
        let scale = grad.sup_norm().max(1e-12);
        for k in 0..free {
            let mut plus = gamma.values().to_vec();
            let mut minus = plus.clone();
            plus[k] += h;
            minus[k] -= h;
            let fp = action(&gamma.from_free(&plus[..free]), spec).unwrap().total;
            let fm = action(&gamma.from_free(&minus[..free]), spec).unwrap().total;
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((fd - grad.data[k]).abs() / scale);
        }
        worst
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gradient_matches_finite_differences(
            dim in 1usize..3,
            n in 1usize..4,
            kinds in proptest::array::uniform3(0u8..3),
            coef in proptest::collection::vec(-1.5..1.5f64, 8),
            vals in proptest::collection::vec(-2.0..2.0f64, 9 * 3 * 2),
        ) {
            let spec = random_spec(dim, kinds, &coef);
            let time = TimeGrid::new(spec.horizon, 8).unwrap();
            let gamma = TrajectoryGrid::new(time, PlayerGrid::new(n).unwrap(), dim, vals[..9 * n * dim].to_vec()).unwrap();
            prop_assert!(fd_check(&gamma, &spec) < 1e-6);
        }

        #[test]
        fn symmetrized_gradient_equals_raw_double_sum(
            dim in 1usize..3,
            kinds in proptest::array::uniform3(0u8..3),
            coef in proptest::collection::vec(-1.5..1.5f64, 8),
            vals in proptest::collection::vec(-2.0..2.0f64, 7 * 4 * 2),
        ) {
            let spec = random_spec(dim, kinds, &coef);
            let time = TimeGrid::new(spec.horizon, 6).unwrap();
            let gamma = TrajectoryGrid::new(time, PlayerGrid::new(4).unwrap(), dim, vals[..7 * 4 * dim].to_vec()).unwrap();
            let a = action_gradient_with(&gamma, &spec, InteractionAssembly::Symmetrized).unwrap();
            let b = action_gradient_with(&gamma, &spec, InteractionAssembly::RawDoubleSum).unwrap();
            let scale = 1.0 + a.sup_norm();
            for (x, y) in a.data.iter().zip(&b.data) {
                prop_assert!((x - y).abs() <= 1e-14 * scale);
            }
        }

        #[test]
        fn individual_gradient_matches_finite_differences(
            kinds in proptest::array::uniform3(0u8..3),
            coef in proptest::collection::vec(-1.5..1.5f64, 8),
            vals in proptest::collection::vec(-2.0..2.0f64, 9 * 3),
            path in proptest::collection::vec(-2.0..2.0f64, 9),
        ) {
            let spec = random_spec(1, kinds, &coef);
            let time = TimeGrid::new(spec.horizon, 8).unwrap();
            let frozen = TrajectoryGrid::new(time, PlayerGrid::new(3).unwrap(), 1, vals).unwrap();
            let r = SinglePath::new(time, 1, path.clone()).unwrap();
            let g = individual_path_gradient(&r, &frozen, &spec).unwrap();
            let h = 1e-6;
            let scale = crate::scalar::sup_norm(&g).max(1e-12);
            for k in 0..8 {
                let mut p = path.clone();
                p[k] += h;
                let fp = individual_path_cost(&SinglePath::new(time, 1, p.clone()).unwrap(), &frozen, &spec).unwrap();
                p[k] -= 2.0 * h;
                let fm = individual_path_cost(&SinglePath::new(time, 1, p).unwrap(), &frozen, &spec).unwrap();
                prop_assert!(((fp - fm) / (2.0 * h) - g[k]).abs() / scale < 1e-6);
            }
        }
    }
}
