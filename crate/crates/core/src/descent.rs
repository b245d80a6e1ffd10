//! First-order descent with Armijo backtracking on terminal-pinned paths.
//!
//! Search directions are gradients taken in the metric of the discrete
//! kinetic energy `Σ_j w/(2 dt) |x_{j+1} - x_j|^2` (node `M` pinned). That
//! metric is a fixed matrix, independent of the iterate, so the iteration
//! stays a plain preconditioned gradient method; it only removes the `O(M^2)`
//! conditioning of the Euclidean gradient.

use serde::{Deserialize, Serialize};

use crate::scalar::{dot, sup_norm, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions<T> {
    /// Stop when the sup-norm of the gradient of the discrete objective is below this.
    pub tol: T,
    pub max_iter: usize,
    /// Sufficient-decrease constant.
    pub armijo_c: T,
    /// Step contraction factor.
    pub backtrack: T,
    pub max_backtracks: usize,
    /// Use the kinetic-energy metric for search directions.
    pub preconditioned: bool,
    /// Solve even when the small-time condition fails.
    pub force: bool,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-9),
            max_iter: 5000,
            armijo_c: T::lit(1e-4),
            backtrack: T::lit(0.5),
            max_backtracks: 60,
            preconditioned: true,
            force: false,
        }
    }
}

/// Layout of the free variables: `steps` free nodes of `channels` scalar
/// chains each, stored node-major.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ChainLayout<T> {
    pub steps: usize,
    pub channels: usize,
    /// Quadrature weight of one chain (`1/N` for the ensemble, `1` for a single path).
    pub weight: T,
    pub dt: T,
}

pub(crate) trait Objective<T: Scalar> {
    fn value_and_gradient(&self, x: &[T], grad: &mut [T]) -> T;
    fn layout(&self) -> ChainLayout<T>;
}

#[derive(Clone, Debug)]
pub(crate) struct DescentOutcome<T> {
    pub x: Vec<T>,
    pub value: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<T>,
}

/// Solves `K y = g` for the kinetic metric, chain by chain.
///
/// `K = (w/dt) BᵀB` with `B` the forward difference that pins node `M`, so
/// `y_j = (dt/w) Σ_{l>=j} Σ_{m<=l} g_m`.
pub(crate) fn apply_inverse_metric<T: Scalar>(layout: &ChainLayout<T>, g: &[T], out: &mut [T]) {
    let (m, c) = (layout.steps, layout.channels);
    let scale = layout.dt / layout.weight;
    for ch in 0..c {
        let mut acc = T::zero();
        for j in 0..m {
            acc += g[j * c + ch];
            out[j * c + ch] = acc;
        }
        let mut tail = T::zero();
        for j in (0..m).rev() {
            tail += out[j * c + ch];
            out[j * c + ch] = scale * tail;
        }
    }
}

pub(crate) fn minimize<T: Scalar, O: Objective<T>>(
    obj: &O,
    x0: Vec<T>,
    opts: &SolverOptions<T>,
) -> DescentOutcome<T> {
    let n = x0.len();
    let layout = obj.layout();
    let mut x = x0;
    let mut grad = vec![T::zero(); n];
    let mut f = obj.value_and_gradient(&x, &mut grad);
    let mut dir = vec![T::zero(); n];
    let mut trial = vec![T::zero(); n];
    let mut trial_grad = vec![T::zero(); n];
    let mut trace = vec![f];
    let mut step0 = T::one();
    let roundoff = T::lit(1e3) * T::epsilon();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let gnorm = sup_norm(&grad);
        if gnorm <= opts.tol {
            converged = true;
            break;
        }
        if opts.preconditioned {
            apply_inverse_metric(&layout, &grad, &mut dir);
            dir.iter_mut().for_each(|d| *d = -*d);
            step0 = T::one();
        } else {
            dir.iter_mut().zip(&grad).for_each(|(d, &g)| *d = -g);
        }
        let slope = dot(&grad, &dir);
        if !(slope < T::zero()) {
            break;
        }

        let mut alpha = step0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            for k in 0..n {
                trial[k] = x[k] + alpha * dir[k];
            }
            let f_new = obj.value_and_gradient(&trial, &mut trial_grad);
            let armijo = f_new <= f + opts.armijo_c * alpha * slope;
            // Once the predicted decrease is below the resolution of `f`,
            // judge the step by the directional derivative instead.
            let noisy = (alpha * slope).abs() <= roundoff * (T::one() + f.abs());
            let flat = noisy && dot(&trial_grad, &dir) <= -slope / T::lit(2.0);
            if f_new.is_finite() && (armijo || flat) {
                accepted = Some(f_new);
                break;
            }
            alpha *= opts.backtrack;
        }
        let Some(f_new) = accepted else {
            break;
        };
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut grad, &mut trial_grad);
        f = f_new;
        trace.push(f);
        iterations += 1;
        if !opts.preconditioned {
            step0 = alpha / opts.backtrack;
        }
    }
    let grad_norm = sup_norm(&grad);
    converged = converged || grad_norm <= opts.tol;
    DescentOutcome {
        x,
        value: f,
        grad_norm,
        iterations,
        converged,
        trace,
    }
}
