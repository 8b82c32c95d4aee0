//! Monte Carlo estimators for gap and norm moments, coupled strong-error
//! curves and log-log rate fitting.
//!
//! Estimators are deterministic functions of `(model, functional, seed,
//! n_paths)`: every path owns RNG stream `path_index`, per-path results are
//! collected in path order, and reductions run in a fixed tree (see
//! [`crate::exec`]), so estimates are bit-stable across thread counts.
//!
//! The strong-error harness couples all resolutions through one Brownian
//! path per replica: increments are generated once at the reference
//! resolution and coarsened by pairwise summation, and the reference
//! trajectory (at least 16x finer than the finest tested grid) stands in for
//! the exact solution.

use std::io::Write;

use crate::brownian::BrownianGrid;
use crate::error::{Error, Result};
use crate::exec;
use crate::implicit::SolverConfig;
use crate::model::{negative_moment_threshold, ModelSpec};
use crate::scheme::{simulate_observing, SchemeKind};

/// Paths folded sequentially per work item; the item boundaries are fixed, so
/// the reduction tree does not depend on scheduling.
const PATH_BATCH: usize = 32;

/// A Monte Carlo moment estimate with its sampling error and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    /// Which functional, e.g. `gap_moment[0,1]` or `norm_even_moment`.
    pub functional: String,
    /// Exponent: `p` for `E[gap^-p]`, `q` for `E[||X||^2q]`.
    pub p_or_q: f64,
    /// Grid-node time the functional was evaluated at.
    pub t: f64,
    /// Sample mean over the finite summands.
    pub value: f64,
    /// Sample standard deviation / sqrt(n_paths).
    pub std_error: f64,
    pub n_paths: usize,
    /// Number of non-finite summands; a nonzero count invalidates the
    /// estimate rather than being clipped away.
    pub overflow_count: usize,
}

impl MomentEstimate {
    pub fn is_valid(&self) -> bool {
        self.overflow_count == 0
    }
}

/// Header for the moments CSV format.
pub const MOMENTS_CSV_HEADER: &str = "functional,p_or_q,t,value,stderr,n_paths,flags";

/// Write one `functional,p_or_q,t,value,stderr,n_paths,flags` row.
pub fn write_moment_row<W: Write>(w: &mut W, e: &MomentEstimate) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
        e.functional, e.p_or_q, e.t, e.value, e.std_error, e.n_paths, e.overflow_count
    )
}

/// Strong-error curve and its least-squares fit on log-log axes.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub ns: Vec<usize>,
    /// Mean-square errors, one per entry of `ns`.
    pub errors: Vec<f64>,
    /// Standard errors of the `errors` entries (zero when not estimated).
    pub std_errors: Vec<f64>,
    /// Slope of `log(error)` against `log(n)`.
    pub slope: f64,
    pub intercept: f64,
}

impl RateFit {
    /// CSV export: header `n,mse,stderr`, one row per step count.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,mse,stderr")?;
        for ((n, e), se) in self.ns.iter().zip(&self.errors).zip(&self.std_errors) {
            writeln!(w, "{n},{e:.16e},{se:.16e}")?;
        }
        Ok(())
    }
}

/// Ordinary least squares of `log(error)` on `log(n)`.
pub fn fit_loglog(ns: &[usize], errors: &[f64]) -> Result<RateFit> {
    if ns.len() != errors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} step counts vs {} errors",
            ns.len(),
            errors.len()
        )));
    }
    if ns.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 points, got {}",
            ns.len()
        )));
    }
    if ns.iter().all(|&n| n == ns[0]) {
        return Err(Error::DegenerateFit("constant n".into()));
    }
    for (&n, &e) in ns.iter().zip(errors) {
        if n == 0 || !(e > 0.0) || !e.is_finite() {
            return Err(Error::DegenerateFit(format!("non-positive point (n={n}, error={e})")));
        }
    }
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|&e| e.ln()).collect();
    let mx = exec::pairwise_sum(&lx) / lx.len() as f64;
    let my = exec::pairwise_sum(&ly) / ly.len() as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    Ok(RateFit {
        ns: ns.to_vec(),
        errors: errors.to_vec(),
        std_errors: vec![0.0; ns.len()],
        slope,
        intercept: my - slope * mx,
    })
}

/// Nearest grid node to time `t`; the estimate records the node time.
fn nearest_node(t: f64, horizon: f64, n: usize) -> usize {
    let k = (t / horizon * n as f64).round();
    (k.max(0.0) as usize).min(n)
}

/// Per-path functional values at the requested nodes, in path-major order.
fn per_path_values<F>(
    model: &ModelSpec,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    cfg: &SolverConfig,
    nodes: &[usize],
    eval: F,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let results = exec::map_paths(n_paths, |path| {
        let grid = BrownianGrid::generate(seed, path, n_steps, model.d(), model.horizon());
        let mut vals = vec![0.0; nodes.len()];
        simulate_observing(model, SchemeKind::SemiImplicitEm, &grid, cfg, |k, _, x| {
            for (slot, &node) in nodes.iter().enumerate() {
                if node == k {
                    vals[slot] = eval(x);
                }
            }
        })?;
        Ok(vals)
    });
    results.into_iter().collect()
}

fn summarize(
    per_path: &[Vec<f64>],
    slot: usize,
    functional: String,
    p_or_q: f64,
    t: f64,
) -> MomentEstimate {
    let mut finite = Vec::with_capacity(per_path.len());
    let mut overflow_count = 0usize;
    for vals in per_path {
        let v = vals[slot];
        if v.is_finite() {
            finite.push(v);
        } else {
            overflow_count += 1;
        }
    }
    let (value, std_error) = exec::mean_and_std_error(&finite);
    MomentEstimate {
        functional,
        p_or_q,
        t,
        value,
        std_error,
        n_paths: per_path.len(),
        overflow_count,
    }
}

/// Estimate `E[(X_j(t) - X_i(t))^-p]` from semi-implicit EM trajectories, at
/// several observation times sharing the same paths.
pub fn estimate_gap_negative_moment_at(
    model: &ModelSpec,
    p: f64,
    times: &[f64],
    pair: (usize, usize),
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Vec<MomentEstimate>> {
    let (i, j) = pair;
    if i >= j || j >= model.d() {
        return Err(Error::DimensionMismatch(format!(
            "pair ({i}, {j}) needs i < j < d = {}",
            model.d()
        )));
    }
    let nodes: Vec<usize> = times
        .iter()
        .map(|&t| nearest_node(t, model.horizon(), n_steps))
        .collect();
    let per_path = per_path_values(model, n_steps, n_paths, seed, cfg, &nodes, |x| {
        (x[j] - x[i]).powf(-p)
    })?;
    let h = model.horizon() / n_steps as f64;
    Ok(nodes
        .iter()
        .enumerate()
        .map(|(slot, &node)| {
            summarize(
                &per_path,
                slot,
                format!("gap_moment[{i},{j}]"),
                p,
                node as f64 * h,
            )
        })
        .collect())
}

/// Single-time variant of [`estimate_gap_negative_moment_at`].
pub fn estimate_gap_negative_moment(
    model: &ModelSpec,
    p: f64,
    t: f64,
    pair: (usize, usize),
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<MomentEstimate> {
    Ok(estimate_gap_negative_moment_at(model, p, &[t], pair, n_steps, n_paths, seed, cfg)?
        .pop()
        .unwrap())
}

/// Estimate `E[||X(t)||^2q]` from semi-implicit EM trajectories at several
/// observation times sharing the same paths.
pub fn estimate_even_moment_at(
    model: &ModelSpec,
    q: f64,
    times: &[f64],
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Vec<MomentEstimate>> {
    let nodes: Vec<usize> = times
        .iter()
        .map(|&t| nearest_node(t, model.horizon(), n_steps))
        .collect();
    let per_path = per_path_values(model, n_steps, n_paths, seed, cfg, &nodes, |x| {
        x.iter().map(|v| v * v).sum::<f64>().powf(q)
    })?;
    let h = model.horizon() / n_steps as f64;
    Ok(nodes
        .iter()
        .enumerate()
        .map(|(slot, &node)| {
            summarize(
                &per_path,
                slot,
                "norm_even_moment".to_string(),
                q,
                node as f64 * h,
            )
        })
        .collect())
}

/// Single-time variant of [`estimate_even_moment_at`].
pub fn estimate_even_moment(
    model: &ModelSpec,
    q: f64,
    t: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<MomentEstimate> {
    Ok(estimate_even_moment_at(model, q, &[t], n_steps, n_paths, seed, cfg)?
        .pop()
        .unwrap())
}

struct ErrorAccum {
    /// Per tested n: per coarse node, running sum of squared deviations.
    sum: Vec<Vec<f64>>,
    /// Same layout, sums of squares (for the standard error at the sup node).
    sum_sq: Vec<Vec<f64>>,
}

impl ErrorAccum {
    fn new(ns: &[usize]) -> Self {
        Self {
            sum: ns.iter().map(|&n| vec![0.0; n]).collect(),
            sum_sq: ns.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn merge(&mut self, other: &ErrorAccum) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Coupled strong-error curve: for each `n` in `ns`, the supremum over the
/// coarse grid nodes of the Monte Carlo mean of
/// `||X^(n)(t_k) - X^(ref)(t_k)||^2`, where both trajectories ride the same
/// Brownian path, followed by a log-log fit.
///
/// `ns` must be distinct powers of two dividing `n_ref`, with
/// `n_ref >= 16 * max(ns)` so the reference bias stays well below the
/// measured errors.
pub fn strong_error_curve(
    model: &ModelSpec,
    scheme: SchemeKind,
    ns: &[usize],
    n_ref: usize,
    n_paths: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<RateFit> {
    let mut ns_sorted = ns.to_vec();
    ns_sorted.sort_unstable();
    ns_sorted.dedup();
    if ns_sorted.len() != ns.len() {
        return Err(Error::GridNesting("duplicate step counts in ns".into()));
    }
    if ns_sorted.is_empty() {
        return Err(Error::GridNesting("empty ns".into()));
    }
    if !n_ref.is_power_of_two() {
        return Err(Error::GridNesting(format!("n_ref = {n_ref} is not a power of two")));
    }
    for &n in &ns_sorted {
        if !n.is_power_of_two() {
            return Err(Error::GridNesting(format!("n = {n} is not a power of two")));
        }
        if n_ref % n != 0 {
            return Err(Error::GridNesting(format!("n = {n} does not divide n_ref = {n_ref}")));
        }
    }
    let n_max = *ns_sorted.last().unwrap();
    if n_ref < 16 * n_max {
        return Err(Error::GridNesting(format!(
            "n_ref = {n_ref} must be at least 16 * max(ns) = {}",
            16 * n_max
        )));
    }
    if n_paths < 2 {
        return Err(Error::DegenerateFit("need at least 2 paths".into()));
    }

    let d = model.d();
    let stride_ref = n_ref / n_max;
    let n_min = ns_sorted[0];
    let n_batches = n_paths.div_ceil(PATH_BATCH);

    let batch_results: Vec<Result<ErrorAccum>> = exec::map_paths(n_batches, |batch| {
        let mut acc = ErrorAccum::new(&ns_sorted);
        let mut ref_states = vec![0.0; (n_max + 1) * d];
        let lo = batch as usize * PATH_BATCH;
        let hi = (lo + PATH_BATCH).min(n_paths);
        for path in lo..hi {
            let fine = BrownianGrid::generate(seed, path as u64, n_ref, d, model.horizon());
            simulate_observing(model, scheme, &fine, cfg, |k, _, x| {
                if k % stride_ref == 0 {
                    let row = k / stride_ref;
                    ref_states[row * d..(row + 1) * d].copy_from_slice(x);
                }
            })?;
            let mut grid = fine;
            while grid.n() > n_min {
                grid = grid.coarsen()?;
                let Some(idx) = ns_sorted.iter().position(|&n| n == grid.n()) else {
                    continue;
                };
                let ratio = n_max / grid.n();
                let sums = &mut acc.sum[idx];
                let sq_sums = &mut acc.sum_sq[idx];
                simulate_observing(model, scheme, &grid, cfg, |k, _, x| {
                    if k == 0 {
                        return;
                    }
                    let row = k * ratio;
                    let r = &ref_states[row * d..(row + 1) * d];
                    let sq: f64 = x
                        .iter()
                        .zip(r)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    sums[k - 1] += sq;
                    sq_sums[k - 1] += sq * sq;
                })?;
            }
        }
        Ok(acc)
    });

    let mut total = ErrorAccum::new(&ns_sorted);
    for r in batch_results {
        total.merge(&r?);
    }

    let np = n_paths as f64;
    let mut errors = Vec::with_capacity(ns_sorted.len());
    let mut std_errors = Vec::with_capacity(ns_sorted.len());
    for idx in 0..ns_sorted.len() {
        let mut best_node = 0;
        let mut best = f64::NEG_INFINITY;
        for (k, s) in total.sum[idx].iter().enumerate() {
            let mean = s / np;
            if mean > best {
                best = mean;
                best_node = k;
            }
        }
        let mean = best;
        let var = ((total.sum_sq[idx][best_node] - np * mean * mean) / (np - 1.0)).max(0.0);
        errors.push(mean);
        std_errors.push((var / np).sqrt());
    }

    let mut fit = fit_loglog(&ns_sorted, &errors)?;
    fit.std_errors = std_errors;
    Ok(fit)
}

/// Stabilization scan for the boundedness of a negative gap moment.
#[derive(Debug, Clone)]
pub struct StabilityScan {
    /// One estimate per entry of the path schedule; paths are nested, so the
    /// sequence shows how the estimate settles as sampling effort grows.
    pub estimates: Vec<MomentEstimate>,
    /// Admissibility threshold `(2 lambda / ||sigma||^2 - 1) / 6`.
    pub threshold: f64,
    /// Set when `p` is not strictly below the threshold: the scan then probes
    /// territory the theory does not cover, and no boundedness claim attaches.
    pub outside_guarantee: bool,
}

/// Estimate `E[gap^-p]` at `t` under an increasing, nested path schedule.
/// Divergence with sampling effort is the empirical signature of an
/// unbounded moment; stabilization supports boundedness.
pub fn negative_moment_stability_scan(
    model: &ModelSpec,
    p: f64,
    t: f64,
    pair: (usize, usize),
    n_steps: usize,
    n_paths_schedule: &[usize],
    seed: u64,
    cfg: &SolverConfig,
    sup_sigma_sq: f64,
) -> Result<StabilityScan> {
    if n_paths_schedule.is_empty() || n_paths_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateFit(
            "path schedule must be non-empty and strictly increasing".into(),
        ));
    }
    let (i, j) = pair;
    if i >= j || j >= model.d() {
        return Err(Error::DimensionMismatch(format!(
            "pair ({i}, {j}) needs i < j < d = {}",
            model.d()
        )));
    }
    let n_total = *n_paths_schedule.last().unwrap();
    let node = nearest_node(t, model.horizon(), n_steps);
    let per_path = per_path_values(model, n_steps, n_total, seed, cfg, &[node], |x| {
        (x[j] - x[i]).powf(-p)
    })?;
    let node_t = node as f64 * model.horizon() / n_steps as f64;
    let estimates = n_paths_schedule
        .iter()
        .map(|&m| {
            summarize(
                &per_path[..m],
                0,
                format!("gap_moment[{i},{j}]"),
                p,
                node_t,
            )
        })
        .collect();
    let threshold = negative_moment_threshold(model.lambda(), sup_sigma_sq);
    Ok(StabilityScan {
        estimates,
        threshold,
        outside_guarantee: !(p < threshold),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_relative_eq;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn fit_exact_power_laws() {
        let ns = [16usize, 32, 64, 128];
        let inv: Vec<f64> = ns.iter().map(|&n| 3.0 / n as f64).collect();
        let fit = fit_loglog(&ns, &inv).unwrap();
        assert_relative_eq!(fit.slope, -1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 3.0f64.ln(), epsilon = 1e-12);

        let inv_sq: Vec<f64> = ns.iter().map(|&n| 5.0 / (n * n) as f64).collect();
        let fit = fit_loglog(&ns, &inv_sq).unwrap();
        assert_relative_eq!(fit.slope, -2.0, epsilon = 1e-12);

        let flat = vec![0.7; ns.len()];
        let fit = fit_loglog(&ns, &flat).unwrap();
        assert_relative_eq!(fit.slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        assert!(matches!(
            fit_loglog(&[8, 16], &[1.0, 0.5]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_loglog(&[8, 8, 8], &[1.0, 1.0, 1.0]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_loglog(&[8, 16, 32], &[1.0, 0.0, 0.5]),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn zero_exponent_gap_moment_is_exactly_one() {
        let model = catalog::build("dyson", 2, 1.0, None, 1.0).unwrap();
        let est =
            estimate_gap_negative_moment(&model, 0.0, 1.0, (0, 1), 16, 50, 7, &cfg()).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.overflow_count, 0);
        assert!(est.is_valid());
    }

    #[test]
    fn even_moment_at_time_zero_is_deterministic() {
        let model = catalog::build("dyson", 3, 1.0, None, 1.0).unwrap();
        let est = estimate_even_moment(&model, 2.0, 0.0, 8, 40, 3, &cfg()).unwrap();
        let expect = model
            .initial()
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .powi(2);
        assert_eq!(est.value, expect);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.t, 0.0);
    }

    #[test]
    fn estimates_are_bit_reproducible() {
        let model = catalog::build("dyson", 3, 2.0, None, 1.0).unwrap();
        let a = estimate_even_moment(&model, 1.0, 1.0, 32, 200, 99, &cfg()).unwrap();
        let b = estimate_even_moment(&model, 1.0, 1.0, 32, 200, 99, &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scan_with_zero_exponent_is_flat_ones() {
        let model = catalog::build("dyson", 3, 20.0, None, 1.0).unwrap();
        let scan = negative_moment_stability_scan(
            &model,
            0.0,
            1.0,
            (0, 1),
            16,
            &[10, 50, 100],
            5,
            &cfg(),
            1.0,
        )
        .unwrap();
        assert_eq!(scan.estimates.len(), 3);
        for e in &scan.estimates {
            assert_eq!(e.value, 1.0);
            assert_eq!(e.std_error, 0.0);
        }
        assert!(!scan.outside_guarantee);
        assert_relative_eq!(scan.threshold, 6.5);
    }

    #[test]
    fn scan_labels_outside_guarantee() {
        // lambda barely above sigma^2/2: threshold about 0.003; p = 2 is far out.
        let model = catalog::build("dyson", 2, 0.51, None, 1.0).unwrap();
        let scan = negative_moment_stability_scan(
            &model,
            2.0,
            1.0,
            (0, 1),
            8,
            &[10, 20],
            5,
            &cfg(),
            1.0,
        )
        .unwrap();
        assert!(scan.outside_guarantee);
    }

    #[test]
    fn scan_rejects_bad_schedule() {
        let model = catalog::build("dyson", 2, 1.0, None, 1.0).unwrap();
        assert!(negative_moment_stability_scan(
            &model,
            1.0,
            1.0,
            (0, 1),
            8,
            &[100, 100],
            5,
            &cfg(),
            1.0
        )
        .is_err());
    }

    #[test]
    fn strong_error_requires_nesting() {
        let model = catalog::build("dyson", 2, 1.0, None, 1.0).unwrap();
        let scheme = SchemeKind::SemiImplicitEm;
        // n_ref too small.
        assert!(matches!(
            strong_error_curve(&model, scheme, &[8, 16, 32], 64, 10, 1, &cfg()),
            Err(Error::GridNesting(_))
        ));
        // Not a power of two.
        assert!(matches!(
            strong_error_curve(&model, scheme, &[8, 12, 32], 1024, 10, 1, &cfg()),
            Err(Error::GridNesting(_))
        ));
        // Duplicates.
        assert!(matches!(
            strong_error_curve(&model, scheme, &[8, 8, 32], 1024, 10, 1, &cfg()),
            Err(Error::GridNesting(_))
        ));
    }

    #[test]
    fn moment_csv_row_format() {
        let est = MomentEstimate {
            functional: "gap_moment[0,1]".into(),
            p_or_q: 1.0,
            t: 0.5,
            value: 2.0,
            std_error: 0.25,
            n_paths: 100,
            overflow_count: 0,
        };
        let mut buf = Vec::new();
        write_moment_row(&mut buf, &est).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("gap_moment[0,1],"));
        assert!(text.trim_end().ends_with(",100,0"));
    }
}
