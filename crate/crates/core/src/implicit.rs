//! One semi-implicit step: solve for the unique `x` in the Weyl chamber with
//!
//! ```text
//! x_i - h_lambda * sum_{j != i} 1 / (x_i - x_j) = y_i,   i = 1..d,
//! ```
//!
//! where `y` collects every explicit term of the step. The right-hand side is
//! read as a multiset: `y` is sorted before solving, which makes the step
//! invariant under relabeling and keeps it well-posed when a large noise
//! increment delivers `y` out of order (the system maps the open chamber onto
//! sorted right-hand sides only; an unsorted `y` taken verbatim would pin the
//! solution against the boundary instead of relabeling the particles).
//!
//! The sorted system is the stationarity condition of the strictly convex
//! barrier objective
//!
//! ```text
//! F(x) = 1/2 ||x - sort(y)||^2 - h_lambda * sum_{i<j} log(x_j - x_i),
//! ```
//!
//! minimized by a damped Newton method with a fraction-to-boundary line
//! search. The Hessian is `I` plus a weighted graph Laplacian of the pair
//! inverses, hence symmetric positive definite (all eigenvalues >= 1) on the
//! whole chamber, and a dense Cholesky factorization applies at any `d` used
//! here.

use crate::error::{Error, Result};
use crate::model::ensure_in_chamber;

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 64;

/// The data of one implicit step: explicit part `y` (in any order) and the
/// product `h_lambda` of step size and repulsion strength.
#[derive(Debug, Clone)]
pub struct ImplicitProblem {
    pub y: Vec<f64>,
    pub h_lambda: f64,
}

impl ImplicitProblem {
    /// `y` must be finite (not necessarily sorted); `h_lambda >= 0`, with zero
    /// handled as the trivial sort case.
    pub fn new(y: Vec<f64>, h_lambda: f64) -> Result<Self> {
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i, value: v });
            }
        }
        if !h_lambda.is_finite() || h_lambda < 0.0 {
            return Err(Error::InvalidModel(format!(
                "h_lambda must be finite and non-negative, got {h_lambda}"
            )));
        }
        Ok(Self { y, h_lambda })
    }
}

/// Newton solver controls.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Base gradient tolerance; the stopping rule scales it by `max(1, ||y||_inf)`.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Fraction-to-boundary safeguard in (0, 1).
    pub boundary_fraction: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-12,
            max_iters: 100,
            boundary_fraction: 0.9,
        }
    }
}

/// Reusable solver: scratch buffers for one dimension `d`, reusable across
/// sequential solves (one per path); not meant to be shared across threads.
pub struct ImplicitSolver {
    d: usize,
    cfg: SolverConfig,
    x: Vec<f64>,
    ys: Vec<f64>,
    grad: Vec<f64>,
    dir: Vec<f64>,
    trial: Vec<f64>,
    hess: Vec<f64>,
}

impl ImplicitSolver {
    pub fn new(d: usize, cfg: SolverConfig) -> Self {
        Self {
            d,
            cfg,
            x: vec![0.0; d],
            ys: vec![0.0; d],
            grad: vec![0.0; d],
            dir: vec![0.0; d],
            trial: vec![0.0; d],
            hess: vec![0.0; d * d],
        }
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Solve the implicit system against `sort(y)`, writing the strictly
    /// increasing solution to `out`. The residual of the defining system
    /// equals the barrier gradient, so on success
    /// `||r||_inf <= grad_tol * max(1, ||y||_inf)`, except on near-collision
    /// steps where f64 cannot represent residuals below the stiffness floor
    /// `eps * h_lambda / min_gap^2 * scale`; the solve then stops at that
    /// floor, the best any double-precision iteration can do.
    pub fn solve_into(&mut self, y: &[f64], h_lambda: f64, out: &mut [f64]) -> Result<()> {
        let d = self.d;
        if y.len() != d || out.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "solver sized for d = {d}, got y of length {}",
                y.len()
            )));
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i, value: v });
            }
        }
        if !h_lambda.is_finite() || h_lambda < 0.0 {
            return Err(Error::InvalidModel(format!(
                "h_lambda must be finite and non-negative, got {h_lambda}"
            )));
        }

        self.ys.copy_from_slice(y);
        self.ys.sort_by(f64::total_cmp);

        if h_lambda == 0.0 {
            // Barrier vanishes: the step is sort(y), defined only for distinct entries.
            for i in 1..d {
                if self.ys[i] == self.ys[i - 1] {
                    return Err(Error::TiedAtZeroBarrier { i: i - 1, j: i });
                }
            }
            out.copy_from_slice(&self.ys);
            return Ok(());
        }

        initial_point(&self.ys, h_lambda, &mut self.x, &mut self.trial);

        let scale = y.iter().fold(1.0f64, |m, &v| m.max(v.abs()));
        let tol = self.cfg.grad_tol * scale;
        let decrement_cutoff = h_lambda.min(1.0) / 64.0;

        for iter in 0..self.cfg.max_iters {
            let gnorm = gradient_into(&self.x, &self.ys, h_lambda, &mut self.grad);
            // One ulp of position moves the gradient by about
            // eps * H_ii * |x|, so near-collision steps cannot realize
            // gradients below that stiffness floor; stop at whichever of the
            // requested tolerance and the attainable floor is larger.
            let min_gap = self
                .x
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            let stiffness = 1.0 + h_lambda * (d - 1) as f64 / (min_gap * min_gap);
            let floor = 4.0 * f64::EPSILON * stiffness * scale;
            if gnorm <= tol.max(floor) {
                out.copy_from_slice(&self.x);
                return Ok(());
            }

            hessian_into(&self.x, h_lambda, &mut self.hess);
            cholesky_in_place(&mut self.hess, d)?;
            for i in 0..d {
                self.dir[i] = -self.grad[i];
            }
            cholesky_solve_in_place(&self.hess, d, &mut self.dir);

            // Cap the step at boundary_fraction of the distance to the chamber
            // boundary along the Newton direction.
            let mut alpha = 1.0f64;
            for i in 0..d - 1 {
                let dgap = self.dir[i + 1] - self.dir[i];
                if dgap < 0.0 {
                    let gap = self.x[i + 1] - self.x[i];
                    alpha = alpha.min(self.cfg.boundary_fraction * gap / -dgap);
                }
            }

            let slope: f64 = self.grad.iter().zip(&self.dir).map(|(g, p)| g * p).sum();
            // Damped-to-pure Newton switch. The barrier is self-concordant
            // with parameter M = 2 / sqrt(h_lambda); once the squared Newton
            // decrement -slope is below min(h_lambda, 1) / 64 the capped full
            // step is guaranteed to descend, while the Armijo test would be
            // comparing rounding noise of the objective. Skip it there.
            let mut accepted = -slope <= decrement_cutoff;
            if accepted {
                for i in 0..d {
                    self.trial[i] = self.x[i] + alpha * self.dir[i];
                }
            } else {
                let f0 = objective(&self.x, &self.ys, h_lambda);
                for _ in 0..MAX_BACKTRACKS {
                    for i in 0..d {
                        self.trial[i] = self.x[i] + alpha * self.dir[i];
                    }
                    if objective(&self.trial, &self.ys, h_lambda) <= f0 + ARMIJO_C1 * alpha * slope
                    {
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
            }
            if !accepted {
                return Err(Error::LineSearch { iter });
            }
            if self.trial == self.x {
                // No representable progress left. The gradient equals the
                // step residual, so close the solve if it is within the
                // documented 10x bound; otherwise report the stall.
                if gnorm <= (10.0 * tol).max(floor) {
                    out.copy_from_slice(&self.x);
                    return Ok(());
                }
                return Err(Error::NoConvergence {
                    iters: iter,
                    grad_norm: gnorm,
                    tol,
                });
            }
            std::mem::swap(&mut self.x, &mut self.trial);
        }

        let gnorm = gradient_into(&self.x, &self.ys, h_lambda, &mut self.grad);
        Err(Error::NoConvergence {
            iters: self.cfg.max_iters,
            grad_norm: gnorm,
            tol,
        })
    }

    /// Allocating variant of [`ImplicitSolver::solve_into`].
    pub fn solve(&mut self, y: &[f64], h_lambda: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.d];
        self.solve_into(y, h_lambda, &mut out)?;
        Ok(out)
    }
}

/// Solve one implicit step with a fresh workspace.
pub fn solve_implicit(prob: &ImplicitProblem, cfg: &SolverConfig) -> Result<Vec<f64>> {
    ImplicitSolver::new(prob.y.len(), *cfg).solve(&prob.y, prob.h_lambda)
}

/// Barrier objective value and gradient at a chamber point. `y` is read as a
/// multiset (sorted internally, matching the solver).
///
/// The gradient component `i` is `x_i - y_i - h_lambda * sum_{j != i} 1/(x_i - x_j)`
/// with sorted `y`, which is also the residual of the defining system; it
/// vanishes exactly at the implicit-step solution.
pub fn barrier_objective(x: &[f64], prob: &ImplicitProblem) -> Result<(f64, Vec<f64>)> {
    ensure_in_chamber(x)?;
    if x.len() != prob.y.len() {
        return Err(Error::DimensionMismatch(format!(
            "x has {} coordinates, y has {}",
            x.len(),
            prob.y.len()
        )));
    }
    let mut ys = prob.y.clone();
    ys.sort_by(f64::total_cmp);
    let mut grad = vec![0.0; x.len()];
    gradient_into(x, &ys, prob.h_lambda, &mut grad);
    Ok((objective(x, &ys, prob.h_lambda), grad))
}

/// Dense barrier Hessian at a chamber point, row-major `d x d`:
/// `H_ii = 1 + h_lambda sum_{j != i} (x_i - x_j)^-2`, `H_ij = -h_lambda (x_i - x_j)^-2`.
pub fn barrier_hessian(x: &[f64], prob: &ImplicitProblem) -> Result<Vec<f64>> {
    ensure_in_chamber(x)?;
    let mut hess = vec![0.0; x.len() * x.len()];
    hessian_into(x, prob.h_lambda, &mut hess);
    Ok(hess)
}

/// One damped Newton step from `x`: direction solves `H dx = -grad`, the step
/// length is the largest Armijo-accepted `alpha` not exceeding the
/// fraction-to-boundary cap. Returns `x` unchanged at a stationary point.
pub fn newton_step(x: &[f64], prob: &ImplicitProblem, cfg: &SolverConfig) -> Result<Vec<f64>> {
    ensure_in_chamber(x)?;
    let d = x.len();
    if d != prob.y.len() {
        return Err(Error::DimensionMismatch(format!(
            "x has {} coordinates, y has {}",
            d,
            prob.y.len()
        )));
    }
    let mut ys = prob.y.clone();
    ys.sort_by(f64::total_cmp);
    let mut grad = vec![0.0; d];
    let gnorm = gradient_into(x, &ys, prob.h_lambda, &mut grad);
    if gnorm == 0.0 {
        return Ok(x.to_vec());
    }
    let mut hess = vec![0.0; d * d];
    hessian_into(x, prob.h_lambda, &mut hess);
    cholesky_in_place(&mut hess, d)?;
    let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
    cholesky_solve_in_place(&hess, d, &mut dir);

    let mut alpha = 1.0f64;
    for i in 0..d - 1 {
        let dgap = dir[i + 1] - dir[i];
        if dgap < 0.0 {
            alpha = alpha.min(cfg.boundary_fraction * (x[i + 1] - x[i]) / -dgap);
        }
    }
    let f0 = objective(x, &ys, prob.h_lambda);
    let slope: f64 = grad.iter().zip(&dir).map(|(g, p)| g * p).sum();
    let decrement_cutoff = prob.h_lambda.min(1.0) / 64.0;
    for _ in 0..MAX_BACKTRACKS {
        let trial: Vec<f64> = x
            .iter()
            .zip(&dir)
            .map(|(xi, pi)| xi + alpha * pi)
            .collect();
        // Same pure-Newton switch as the solver loop.
        if -slope <= decrement_cutoff
            || objective(&trial, &ys, prob.h_lambda) <= f0 + ARMIJO_C1 * alpha * slope
        {
            return Ok(trial);
        }
        alpha *= 0.5;
    }
    Err(Error::LineSearch { iter: 0 })
}

/// Start point: coordinate-wise sort of `y`, then the Euclidean projection
/// onto `{gaps >= eps0}` with `eps0 = max(1e-8, sqrt(h_lambda) * 1e-4)`.
/// The projection (pool-adjacent-violators on the gap-shifted sequence)
/// spreads each offending cluster symmetrically about its mean.
fn initial_point(y: &[f64], h_lambda: f64, x: &mut [f64], scratch: &mut [f64]) {
    let d = y.len();
    x.copy_from_slice(y);
    x.sort_by(f64::total_cmp);
    let eps0 = (h_lambda.sqrt() * 1e-4).max(1e-8);

    let needs_spread = x.windows(2).any(|w| w[1] - w[0] < eps0);
    if !needs_spread {
        return;
    }

    // Isotonic regression of z_i = x_i - i*eps0 by PAV, using `scratch` for
    // block means and x's tail... blocks kept in local vectors (d is small).
    for i in 0..d {
        scratch[i] = x[i] - i as f64 * eps0;
    }
    let mut block_mean = Vec::with_capacity(d);
    let mut block_len = Vec::with_capacity(d);
    for i in 0..d {
        let mut mean = scratch[i];
        let mut len = 1usize;
        while let (Some(&pm), Some(&pl)) = (block_mean.last(), block_len.last()) {
            if pm <= mean {
                break;
            }
            mean = (pm * pl as f64 + mean * len as f64) / (pl + len) as f64;
            len += pl;
            block_mean.pop();
            block_len.pop();
        }
        block_mean.push(mean);
        block_len.push(len);
    }
    let mut i = 0;
    for (mean, len) in block_mean.iter().zip(&block_len) {
        for _ in 0..*len {
            x[i] = mean + i as f64 * eps0;
            i += 1;
        }
    }
}

fn objective(x: &[f64], y: &[f64], h_lambda: f64) -> f64 {
    let d = x.len();
    let mut quad = 0.0;
    for i in 0..d {
        let r = x[i] - y[i];
        quad += r * r;
    }
    let mut barrier = 0.0;
    for j in 1..d {
        for i in 0..j {
            barrier += (x[j] - x[i]).ln();
        }
    }
    0.5 * quad - h_lambda * barrier
}

/// Fill `grad` and return its infinity norm.
fn gradient_into(x: &[f64], y: &[f64], h_lambda: f64, grad: &mut [f64]) -> f64 {
    let d = x.len();
    for i in 0..d {
        grad[i] = x[i] - y[i];
    }
    for j in 1..d {
        for i in 0..j {
            let inv = h_lambda / (x[j] - x[i]);
            grad[i] += inv;
            grad[j] -= inv;
        }
    }
    grad.iter().fold(0.0f64, |m, g| m.max(g.abs()))
}

fn hessian_into(x: &[f64], h_lambda: f64, hess: &mut [f64]) {
    let d = x.len();
    hess.fill(0.0);
    for i in 0..d {
        hess[i * d + i] = 1.0;
    }
    for j in 1..d {
        for i in 0..j {
            let gap = x[j] - x[i];
            let w = h_lambda / (gap * gap);
            hess[i * d + i] += w;
            hess[j * d + j] += w;
            hess[i * d + j] -= w;
            hess[j * d + i] -= w;
        }
    }
}

/// In-place lower Cholesky of a symmetric positive definite row-major matrix.
fn cholesky_in_place(a: &mut [f64], d: usize) -> Result<()> {
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            let l = a[j * d + k];
            diag -= l * l;
        }
        if !(diag > 0.0) {
            return Err(Error::HessianSolve { pivot: j });
        }
        let lj = diag.sqrt();
        a[j * d + j] = lj;
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = v / lj;
        }
    }
    Ok(())
}

/// Solve `L L^T x = rhs` in place, with `L` the lower factor from
/// [`cholesky_in_place`].
fn cholesky_solve_in_place(l: &[f64], d: usize, rhs: &mut [f64]) {
    for i in 0..d {
        let mut v = rhs[i];
        for k in 0..i {
            v -= l[i * d + k] * rhs[k];
        }
        rhs[i] = v / l[i * d + i];
    }
    for i in (0..d).rev() {
        let mut v = rhs[i];
        for k in i + 1..d {
            v -= l[k * d + i] * rhs[k];
        }
        rhs[i] = v / l[i * d + i];
    }
}

/// Closed-form d = 2 solution, used as an oracle in tests: with sorted `y`,
/// the gap solves `g^2 - (y_2 - y_1) g - 2 h_lambda = 0`.
pub fn solve_two_particles(y: &[f64; 2], h_lambda: f64) -> [f64; 2] {
    let (lo, hi) = if y[0] <= y[1] { (y[0], y[1]) } else { (y[1], y[0]) };
    let delta = hi - lo;
    let gap = 0.5 * (delta + (delta * delta + 8.0 * h_lambda).sqrt());
    if h_lambda == 0.0 {
        return [lo, hi];
    }
    [lo - h_lambda / gap, hi + h_lambda / gap]
}
