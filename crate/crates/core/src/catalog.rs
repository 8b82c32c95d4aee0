//! Built-in model catalog, addressable by string key.
//!
//! Keys:
//! - `"dyson"`: b = 0, sigma = 1 (Dyson Brownian motion).
//! - `"affine-drift"`: mean-reverting drift `b_i(y) = c_i - y` with ordered
//!   centers `c_i`, sigma = 1.
//! - `"bounded-smooth"`: b = 0, `sigma_i(y) = 2 + sin(y)/2` (smooth, bounded,
//!   bounded away from zero; derivative `cos(y)/2`).
//!
//! All catalog models carry analytic `sigma_prime`, so both schemes apply.
//! Coefficients can additionally be re-scaled affinely, which is how configs
//! express variants like sigma = 2.

use crate::error::{Error, Result};
use crate::model::{scalar_fn, ModelSpec, ScalarFn};

pub const KEYS: &[&str] = &["dyson", "affine-drift", "bounded-smooth"];

/// Default initial configuration: unit-gap ladder 0, 1, ..., d-1.
pub fn default_initial(d: usize) -> Vec<f64> {
    (0..d).map(|i| i as f64).collect()
}

/// Build a catalog model.
pub fn build(key: &str, d: usize, lambda: f64, v: Option<Vec<f64>>, horizon: f64) -> Result<ModelSpec> {
    build_affine(key, d, lambda, v, horizon, None, None)
}

/// Build a catalog model with optional affine re-scaling of the coefficients:
/// `b_i -> a b_i + c` and `sigma_i -> a sigma_i + c` (derivatives scale by `a`).
pub fn build_affine(
    key: &str,
    d: usize,
    lambda: f64,
    v: Option<Vec<f64>>,
    horizon: f64,
    b_affine: Option<(f64, f64)>,
    sigma_affine: Option<(f64, f64)>,
) -> Result<ModelSpec> {
    let v = v.unwrap_or_else(|| default_initial(d));
    if v.len() != d {
        return Err(Error::InvalidModel(format!(
            "initial configuration has {} entries for d = {d}",
            v.len()
        )));
    }
    let (b, sigma, sigma_prime) = coefficients(key, d)?;
    let b = apply_affine(b, b_affine);
    let sigma = apply_affine(sigma, sigma_affine);
    let sigma_prime = apply_scale(sigma_prime, sigma_affine.map(|(a, _)| a));
    ModelSpec::new(lambda, b, sigma, Some(sigma_prime), v, horizon)
}

fn coefficients(key: &str, d: usize) -> Result<(Vec<ScalarFn>, Vec<ScalarFn>, Vec<ScalarFn>)> {
    let zero = scalar_fn(|_| 0.0);
    let one = scalar_fn(|_| 1.0);
    match key {
        "dyson" => Ok((vec![zero.clone(); d], vec![one; d], vec![zero; d])),
        "affine-drift" => {
            let b: Vec<ScalarFn> = (0..d)
                .map(|i| {
                    let center = i as f64 - (d as f64 - 1.0) / 2.0;
                    scalar_fn(move |y| center - y)
                })
                .collect();
            Ok((b, vec![one; d], vec![zero; d]))
        }
        "bounded-smooth" => {
            let sigma = scalar_fn(|y: f64| 2.0 + y.sin() / 2.0);
            let sigma_prime = scalar_fn(|y: f64| y.cos() / 2.0);
            Ok((vec![zero; d], vec![sigma; d], vec![sigma_prime; d]))
        }
        other => Err(Error::InvalidModel(format!(
            "unknown catalog key {other:?}; known keys: {KEYS:?}"
        ))),
    }
}

fn apply_affine(fns: Vec<ScalarFn>, affine: Option<(f64, f64)>) -> Vec<ScalarFn> {
    match affine {
        None => fns,
        Some((a, c)) => fns
            .into_iter()
            .map(|f| scalar_fn(move |y| a * f(y) + c))
            .collect(),
    }
}

fn apply_scale(fns: Vec<ScalarFn>, scale: Option<f64>) -> Vec<ScalarFn> {
    match scale {
        None => fns,
        Some(a) => fns
            .into_iter()
            .map(|f| scalar_fn(move |y| a * f(y)))
            .collect(),
    }
}
