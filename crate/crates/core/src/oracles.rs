//! Independent reference computations for tests and acceptance: exact moment
//! laws, the d = 2 gap reduction, the noise-free gap recursion and a central
//! finite-difference gradient.
//!
//! Nothing here calls into the solver or the steppers; these are
//! self-contained formulas, so they can catch bugs in the implementation
//! paths they are compared against.

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// One oracle comparison.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub name: String,
    pub expected: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleResult {
    pub fn check(name: impl Into<String>, expected: f64, observed: f64, tolerance: f64) -> Self {
        let pass = (expected - observed).abs() <= tolerance;
        Self {
            name: name.into(),
            expected,
            observed,
            tolerance,
            pass,
        }
    }
}

impl std::fmt::Display for OracleResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: expected {:.6e}, observed {:.6e}, tol {:.2e} -> {}",
            self.name,
            self.expected,
            self.observed,
            self.tolerance,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

/// Probe points used to reject models outside an oracle's exact regime.
const PROBE: [f64; 7] = [-7.3, -1.0, 0.0, 0.4, 1.0, 3.7, 11.9];

/// Exact second-moment law for zero drift and constant diffusion:
///
/// ```text
/// E ||X(t)||^2 = ||v||^2 + (lambda d (d - 1) + sum_i sigma_i^2) t.
/// ```
///
/// The model is probed at a few points to confirm `b = 0` and constant
/// `sigma`; anything else is rejected.
pub fn exact_second_moment_law(model: &ModelSpec, t: f64) -> Result<f64> {
    let d = model.d();
    let mut sigma_sq_sum = 0.0;
    for i in 0..d {
        let s0 = model.diffusion(i, PROBE[0]);
        for &p in &PROBE {
            if model.drift_coefficient(i, p) != 0.0 {
                return Err(Error::OraclePrecondition(format!(
                    "b_{i}({p}) != 0; the law requires zero drift"
                )));
            }
            let s = model.diffusion(i, p);
            if (s - s0).abs() > 1e-12 * s0.abs().max(1.0) {
                return Err(Error::OraclePrecondition(format!(
                    "sigma_{i} is not constant on the probe grid"
                )));
            }
        }
        sigma_sq_sum += s0 * s0;
    }
    let v_sq: f64 = model.initial().iter().map(|v| v * v).sum();
    Ok(v_sq + (model.lambda() * (d * (d - 1)) as f64 + sigma_sq_sum) * t)
}

/// Mean of the squared gap for d = 2 with zero drift and constant diffusion.
///
/// The gap `Y = X_2 - X_1` satisfies `dY = 2 lambda / Y dt + sqrt(2) sigma dW`,
/// so `Z = Y^2` has drift `4 lambda + 2 sigma^2` and
/// `E Z(t) = gap0^2 + (4 lambda + 2 sigma^2) t`.
pub fn besq_gap_mean(lambda: f64, sigma_const: f64, gap0: f64, t: f64) -> f64 {
    gap0 * gap0 + (4.0 * lambda + 2.0 * sigma_const * sigma_const) * t
}

/// Noise-free d = 2 gap recursion of the semi-implicit step: each step maps
/// the gap through the positive root of `g^2 - g_prev g - 2 h lambda = 0`,
/// i.e. `g <- (g + sqrt(g^2 + 8 h lambda)) / 2`, iterated `n` times.
pub fn deterministic_gap_recursion(gap0: f64, h: f64, lambda: f64, n: usize) -> f64 {
    assert!(gap0 > 0.0, "gap0 must be positive");
    let mut g = gap0;
    for _ in 0..n {
        g = 0.5 * (g + (g * g + 8.0 * h * lambda).sqrt());
    }
    g
}

/// Central finite differences of a scalar field on the chamber. Requires every
/// consecutive gap to exceed `2 * step` so the probe points stay inside.
pub fn finite_difference_gradient<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let min_gap = x
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    if !(step > 0.0) || 2.0 * step >= min_gap {
        return Err(Error::FdStepTooLarge { step, min_gap });
    }
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let fp = f(&probe);
        probe[i] = x[i] - step;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * step);
    }
    Ok(grad)
}
