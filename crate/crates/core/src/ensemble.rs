//! Discrete player continuum and discrete paths: uniform time grids,
//! equal-weight player atoms, trajectory ensembles and their CSV layout.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{norm_sq, sup_distance, Scalar};

/// Uniform grid `t_j = j T / M`, `j = 0..=M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid<T> {
    pub horizon: T,
    pub steps: usize,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(horizon: T, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("time grid needs at least one step".into()));
        }
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::InvalidArgument("time horizon must be positive".into()));
        }
        Ok(Self { horizon, steps })
    }

    #[inline]
    pub fn dt(&self) -> T {
        self.horizon / T::from_usize_lossy(self.steps)
    }

    #[inline]
    pub fn node(&self, j: usize) -> T {
        if j == self.steps {
            self.horizon
        } else {
            T::from_usize_lossy(j) * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..=self.steps).map(|j| self.node(j)).collect()
    }
}

/// `N` atoms `ω_i = (i - 1/2) / N` of weight `1/N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PlayerGrid {
    pub count: usize,
}

impl PlayerGrid {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument("at least one player is required".into()));
        }
        Ok(Self { count })
    }

    #[inline]
    pub fn weight<T: Scalar>(&self) -> T {
        T::one() / T::from_usize_lossy(self.count)
    }

    /// Label of the `i`-th atom (0-based).
    pub fn atom<T: Scalar>(&self, i: usize) -> T {
        (T::from_usize_lossy(i) + T::lit(0.5)) / T::from_usize_lossy(self.count)
    }
}

/// Per-node vectors on `rows × players × dim`: velocities, gradients, residuals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeField<T> {
    pub rows: usize,
    pub players: usize,
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> NodeField<T> {
    pub fn zeros(rows: usize, players: usize, dim: usize) -> Self {
        Self {
            rows,
            players,
            dim,
            data: vec![T::zero(); rows * players * dim],
        }
    }

    #[inline]
    pub fn at(&self, row: usize, player: usize) -> &[T] {
        let s = (row * self.players + player) * self.dim;
        &self.data[s..s + self.dim]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, player: usize) -> &mut [T] {
        let s = (row * self.players + player) * self.dim;
        &mut self.data[s..s + self.dim]
    }

    pub fn row(&self, row: usize) -> &[T] {
        let w = self.players * self.dim;
        &self.data[row * w..(row + 1) * w]
    }

    pub fn sup_norm(&self) -> T {
        crate::scalar::sup_norm(&self.data)
    }
}

/// Ensemble of player paths `γ[j][i] ∈ R^d`; the slice `j = M` is the
/// terminal configuration `X`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryGrid<T> {
    pub time: TimeGrid<T>,
    pub players: PlayerGrid,
    pub dim: usize,
    values: Vec<T>,
}

impl<T: Scalar> TrajectoryGrid<T> {
    pub fn new(time: TimeGrid<T>, players: PlayerGrid, dim: usize, values: Vec<T>) -> Result<Self> {
        let expected = (time.steps + 1) * players.count * dim;
        if values.len() != expected {
            return Err(Error::GridMismatch(format!(
                "expected {expected} values for (M+1)={} x N={} x d={dim}, found {}",
                time.steps + 1,
                players.count,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("trajectory entries must be finite".into()));
        }
        Ok(Self {
            time,
            players,
            dim,
            values,
        })
    }

    /// Constant-in-time extension of a slice.
    pub fn constant(time: TimeGrid<T>, players: PlayerGrid, dim: usize, slice: &[T]) -> Result<Self> {
        crate::error::check_dim("slice", players.count * dim, slice.len())?;
        let mut values = Vec::with_capacity((time.steps + 1) * slice.len());
        for _ in 0..=time.steps {
            values.extend_from_slice(slice);
        }
        Self::new(time, players, dim, values)
    }

    /// Builds a grid from `f(t, player) -> point`.
    pub fn from_fn(
        time: TimeGrid<T>,
        players: PlayerGrid,
        dim: usize,
        mut f: impl FnMut(T, usize) -> Vec<T>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity((time.steps + 1) * players.count * dim);
        for j in 0..=time.steps {
            let t = time.node(j);
            for i in 0..players.count {
                let p = f(t, i);
                crate::error::check_dim("point", dim, p.len())?;
                values.extend(p);
            }
        }
        Self::new(time, players, dim, values)
    }

    #[inline]
    pub fn slice_width(&self) -> usize {
        self.players.count * self.dim
    }

    #[inline]
    pub fn slice(&self, j: usize) -> &[T] {
        let w = self.slice_width();
        &self.values[j * w..(j + 1) * w]
    }

    #[inline]
    pub fn node(&self, j: usize, i: usize) -> &[T] {
        let s = (j * self.players.count + i) * self.dim;
        &self.values[s..s + self.dim]
    }

    pub fn terminal(&self) -> &[T] {
        self.slice(self.time.steps)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Nodes `j = 0..M-1`, the ones a terminal-pinned minimization moves.
    pub fn free_values(&self) -> &[T] {
        &self.values[..self.time.steps * self.slice_width()]
    }

    pub(crate) fn from_free(&self, free: &[T]) -> Self {
        let mut values = free.to_vec();
        values.extend_from_slice(self.terminal());
        Self {
            time: self.time,
            players: self.players,
            dim: self.dim,
            values,
        }
    }

    pub fn with_terminal(&self, terminal: &[T]) -> Result<Self> {
        crate::error::check_dim("terminal", self.slice_width(), terminal.len())?;
        let mut values = self.free_values().to_vec();
        values.extend_from_slice(terminal);
        Self::new(self.time, self.players, self.dim, values)
    }

    pub fn player_path(&self, i: usize) -> SinglePath<T> {
        let mut values = Vec::with_capacity((self.time.steps + 1) * self.dim);
        for j in 0..=self.time.steps {
            values.extend_from_slice(self.node(j, i));
        }
        SinglePath {
            time: self.time,
            dim: self.dim,
            values,
        }
    }

    /// First `steps` steps of the grid, as a path on `[0, steps·dt]`.
    pub fn truncated(&self, steps: usize) -> Result<Self> {
        if steps == 0 || steps > self.time.steps {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate {} steps to {steps}",
                self.time.steps
            )));
        }
        let time = TimeGrid::new(self.time.node(steps), steps)?;
        let n = (steps + 1) * self.slice_width();
        Self::new(time, self.players, self.dim, self.values[..n].to_vec())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.time.steps == other.time.steps
            && self.players == other.players
            && self.dim == other.dim
            && self.time.horizon == other.time.horizon
    }

    pub fn sup_distance(&self, other: &Self) -> T {
        sup_distance(&self.values, &other.values)
    }

    /// Scale used for relative tolerances: `1 + max |γ|`.
    pub fn scale(&self) -> T {
        T::one() + crate::scalar::sup_norm(&self.values)
    }

    /// Writes one row per `(j, i)`: `t, omega, x_1..x_d`, 17 significant digits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(csv_header(self.dim))?;
        for j in 0..=self.time.steps {
            let t = self.time.node(j);
            for i in 0..self.players.count {
                w.write_record(csv_row(t, self.players.atom::<T>(i), self.node(j, i)))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let dim = r
            .headers()?
            .len()
            .checked_sub(2)
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::GridMismatch("csv needs columns t, omega, x_1..".into()))?;
        let mut times: Vec<f64> = Vec::new();
        let mut omegas: Vec<f64> = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad number `{s}`: {e}")))
            };
            let t = parse(&rec[0])?;
            let om = parse(&rec[1])?;
            if times.last() != Some(&t) {
                times.push(t);
            }
            if times.len() == 1 {
                omegas.push(om);
            }
            for c in 0..dim {
                values.push(T::lit(parse(&rec[2 + c])?));
            }
        }
        if times.len() < 2 || omegas.is_empty() {
            return Err(Error::GridMismatch("csv must hold at least two time slices".into()));
        }
        let time = TimeGrid::new(T::lit(*times.last().unwrap()), times.len() - 1)?;
        Self::new(time, PlayerGrid::new(omegas.len())?, dim, values)
    }
}

pub(crate) fn csv_header(dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "omega".to_string()];
    h.extend((1..=dim).map(|c| format!("x_{c}")));
    h
}

pub(crate) fn csv_row<T: Scalar>(t: T, omega: T, x: &[T]) -> Vec<String> {
    let mut row = vec![fmt17(t), fmt17(omega)];
    row.extend(x.iter().map(|&v| fmt17(v)));
    row
}

/// Decimal with 17 significant digits; parses back to the same `f64`.
pub fn fmt17<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

/// One player's path `r[j] ∈ R^d`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SinglePath<T> {
    pub time: TimeGrid<T>,
    pub dim: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> SinglePath<T> {
    pub fn new(time: TimeGrid<T>, dim: usize, values: Vec<T>) -> Result<Self> {
        let expected = (time.steps + 1) * dim;
        if values.len() != expected {
            return Err(Error::GridMismatch(format!(
                "expected {expected} path values, found {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("path entries must be finite".into()));
        }
        Ok(Self { time, dim, values })
    }

    pub fn from_fn(time: TimeGrid<T>, dim: usize, mut f: impl FnMut(T) -> Vec<T>) -> Result<Self> {
        let mut values = Vec::with_capacity((time.steps + 1) * dim);
        for j in 0..=time.steps {
            let p = f(time.node(j));
            crate::error::check_dim("point", dim, p.len())?;
            values.extend(p);
        }
        Self::new(time, dim, values)
    }

    #[inline]
    pub fn node(&self, j: usize) -> &[T] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[T] {
        self.node(self.time.steps)
    }

    /// Forward-difference velocities, one per interval.
    pub fn velocity(&self) -> Vec<T> {
        let dt = self.time.dt();
        let d = self.dim;
        (0..self.time.steps * d)
            .map(|k| (self.values[k + d] - self.values[k]) / dt)
            .collect()
    }

    pub fn sup_distance(&self, other: &Self) -> T {
        sup_distance(&self.values, &other.values)
    }
}

/// `v[j][i] = (γ[j+1][i] - γ[j][i]) / dt`, `j = 0..M-1`.
pub fn velocity<T: Scalar>(gamma: &TrajectoryGrid<T>) -> NodeField<T> {
    let dt = gamma.time.dt();
    let w = gamma.slice_width();
    let m = gamma.time.steps;
    let v = gamma.values();
    NodeField {
        rows: m,
        players: gamma.players.count,
        dim: gamma.dim,
        data: (0..m * w).map(|k| (v[k + w] - v[k]) / dt).collect(),
    }
}

/// `sqrt( Σ_i |x_i|^2 / N )`.
pub fn h_norm<T: Scalar>(slice: &[T], players: PlayerGrid) -> Result<T> {
    if players.count == 0 || slice.len() % players.count != 0 {
        return Err(Error::DimensionMismatch {
            argument: "slice",
            expected: players.count,
            found: slice.len(),
        });
    }
    Ok((norm_sq(slice) * players.weight::<T>()).sqrt())
}

/// Pointwise `(1 - ε) γ + ε γ̄`.
pub fn interpolate<T: Scalar>(
    gamma: &TrajectoryGrid<T>,
    other: &TrajectoryGrid<T>,
    eps: T,
) -> Result<TrajectoryGrid<T>> {
    if !gamma.same_shape(other) {
        return Err(Error::GridMismatch("interpolation needs identical grids".into()));
    }
    let values = gamma
        .values
        .iter()
        .zip(&other.values)
        .map(|(&a, &b)| (T::one() - eps) * a + eps * b)
        .collect();
    TrajectoryGrid::new(gamma.time, gamma.players, gamma.dim, values)
}

/// Both sides of the two Poincaré-type inequalities for a path pinned to
/// zero at `T`: `∫|ṙ|² >= (2/T²) ∫|r|²` and `∫|ṙ|² >= |r(0)|² / T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PoincareSides<T> {
    pub kinetic: T,
    pub l2_bound: T,
    pub initial_bound: T,
}

pub fn poincare_check<T: Scalar>(path: &SinglePath<T>) -> Result<PoincareSides<T>> {
    let end = crate::scalar::sup_norm(path.terminal());
    if end != T::zero() {
        return Err(Error::NonzeroTerminal(end.as_f64()));
    }
    let dt = path.time.dt();
    let horizon = path.time.horizon;
    let kinetic = dt * norm_sq(&path.velocity());
    let l2: T = (0..path.time.steps).map(|j| dt * norm_sq(path.node(j))).sum();
    Ok(PoincareSides {
        kinetic,
        l2_bound: T::lit(2.0) / (horizon * horizon) * l2,
        initial_bound: norm_sq(path.node(0)) / horizon,
    })
}
