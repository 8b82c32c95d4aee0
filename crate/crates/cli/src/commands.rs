//! The five subcommands. Each returns a [`CmdReport`] (outputs written, flag
//! counts, exit code) or a [`CmdError`]; the manifest is written by the caller
//! either way.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ncps_core::analysis::{
    estimate_even_moment_at, estimate_gap_negative_moment_at, strong_error_curve,
    write_moment_row, MomentEstimate, MOMENTS_CSV_HEADER,
};
use ncps_core::brownian::BrownianGrid;
use ncps_core::implicit::SolverConfig;
use ncps_core::model::{identity_scan, negative_moment_threshold, validate_assumptions};
use ncps_core::scheme::simulate_path;
use ncps_core::{AssumptionReport, ModelSpec};

use crate::config::ExperimentConfig;
use crate::{CmdError, CmdReport};

fn solver_config() -> SolverConfig {
    SolverConfig::default()
}

/// Evaluation grid for the assumption validator: symmetric around the initial
/// configuration, wide enough to probe tails.
fn sample_grid(model: &ModelSpec) -> Vec<f64> {
    let reach = model
        .initial()
        .iter()
        .fold(10.0f64, |m, v| m.max(2.0 * v.abs()));
    let n = 400;
    (0..=n)
        .map(|k| -reach + 2.0 * reach * k as f64 / n as f64)
        .collect()
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<(), CmdError> {
    fs::write(dir.join(name), contents)
        .map_err(|e| CmdError::run(format!("cannot write {name}: {e}")))
}

fn render_assumption_report(report: &AssumptionReport, model: &ModelSpec) -> String {
    let mut s = String::new();
    let lambda = model.lambda();
    let sup_sigma = report.sup_sigma_sq.sqrt();
    writeln!(s, "assumption report (empirical, {} grid points)", report.sample_grid.len()).unwrap();
    writeln!(s, "sup |b|                   = {:.6e}", report.sup_b).unwrap();
    writeln!(s, "sup sigma^2               = {:.6e}", report.sup_sigma_sq).unwrap();
    match report.ellipticity_l_squared {
        Some(l2) => writeln!(s, "ellipticity L^2           = {:.6e}", l2).unwrap(),
        None => writeln!(
            s,
            "ellipticity L^2           = unbounded ({} zero diffusion samples)",
            report.sigma_zero_count
        )
        .unwrap(),
    }
    writeln!(
        s,
        "max Lipschitz b, sigma    = {:.6e}, {:.6e}",
        report.lipschitz_b.iter().cloned().fold(0.0, f64::max),
        report.lipschitz_sigma.iter().cloned().fold(0.0, f64::max)
    )
    .unwrap();
    writeln!(
        s,
        "max Hoelder-1/2 sigma     = {:.6e}",
        report.holder_sq_sigma.iter().cloned().fold(0.0, f64::max)
    )
    .unwrap();
    writeln!(
        s,
        "bounded-diffusion check   = {} (sup sigma^2 {:.4} vs 2 lambda {:.4})",
        if report.b4_holds { "holds" } else { "FAILS" },
        report.sup_sigma_sq,
        2.0 * lambda
    )
    .unwrap();
    writeln!(
        s,
        "ordered-drift check       = {}",
        if report.b5_holds { "holds" } else { "FAILS" }
    )
    .unwrap();
    writeln!(s, "lambda / sup sigma^2      = {:.6}", lambda / report.sup_sigma_sq).unwrap();
    writeln!(
        s,
        "negative-moment threshold = {:.6}",
        negative_moment_threshold(lambda, report.sup_sigma_sq)
    )
    .unwrap();
    // The rate condition appears in two readings (plain and squared norm);
    // report both rather than resolving which was intended.
    writeln!(
        s,
        "rate condition (plain)    = lambda {:.4} vs 18.5 * sup|sigma| {:.4} -> {}",
        lambda,
        18.5 * sup_sigma,
        if lambda > 18.5 * sup_sigma { "holds" } else { "fails" }
    )
    .unwrap();
    writeln!(
        s,
        "rate condition (squared)  = lambda {:.4} vs 18.5 * sup sigma^2 {:.4} -> {}",
        lambda,
        18.5 * report.sup_sigma_sq,
        if lambda > 18.5 * report.sup_sigma_sq { "holds" } else { "fails" }
    )
    .unwrap();
    s
}

pub fn cmd_validate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<CmdReport, CmdError> {
    let model = cfg.build_model()?;
    let grid = sample_grid(&model);
    let report = validate_assumptions(&model, &grid, 2000)
        .map_err(|e| CmdError::config(e.to_string()))?;
    let text = render_assumption_report(&report, &model);
    print!("{text}");
    write_output(out_dir, "assumptions.txt", &text)?;

    let estimates_finite = report
        .lipschitz_b
        .iter()
        .chain(&report.lipschitz_sigma)
        .all(|v| v.is_finite());
    let ok = report.b4_holds
        && report.b5_holds
        && report.ellipticity_l_squared.is_some()
        && estimates_finite;
    Ok(CmdReport {
        outputs: vec!["assumptions.txt".into()],
        overflow_count: 0,
        exit_code: if ok { 0 } else { 1 },
    })
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<CmdReport, CmdError> {
    let model = cfg.build_model()?;
    let scheme = cfg.scheme_kind()?;
    let n_steps = cfg
        .n_steps
        .filter(|&n| n > 0)
        .ok_or_else(|| CmdError::config("simulate requires n_steps >= 1".into()))?;
    let grid = BrownianGrid::generate(cfg.seed, 0, n_steps, model.d(), model.horizon());
    let traj = simulate_path(&model, n_steps, scheme, &grid, &solver_config())
        .map_err(CmdError::from)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)
        .map_err(|e| CmdError::run(format!("cannot render trajectory: {e}")))?;
    write_output(
        out_dir,
        "trajectory.csv",
        std::str::from_utf8(&csv).expect("ascii csv"),
    )?;
    println!(
        "simulated {} steps of {} (d = {}, min gap {:.3e}) -> trajectory.csv",
        n_steps,
        scheme,
        model.d(),
        traj.min_gap()
    );
    Ok(CmdReport {
        outputs: vec!["trajectory.csv".into()],
        overflow_count: 0,
        exit_code: 0,
    })
}

pub fn cmd_moments(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outside_guarantee: bool,
) -> Result<CmdReport, CmdError> {
    let model = cfg.build_model()?;
    if cfg.p.is_none() && cfg.q.is_none() {
        return Err(CmdError::config(
            "moments requires at least one of the exponents p (gap moment) or q (even moment)"
                .into(),
        ));
    }
    let times = cfg.resolved_times();
    let solver = solver_config();
    let mut rows: Vec<MomentEstimate> = Vec::new();

    if let Some(p) = cfg.p {
        // Gate on the admissibility threshold estimated from the sampled
        // diffusion bound; probing beyond it needs an explicit override.
        let report = validate_assumptions(&model, &sample_grid(&model), 500)
            .map_err(|e| CmdError::config(e.to_string()))?;
        let threshold = negative_moment_threshold(model.lambda(), report.sup_sigma_sq);
        if !(p < threshold) && !outside_guarantee {
            return Err(CmdError::run(format!(
                "p = {p} is not below the negative-moment threshold {threshold:.6}; \
                 pass --outside-guarantee to probe anyway"
            )));
        }
        rows.extend(
            estimate_gap_negative_moment_at(
                &model,
                p,
                &times,
                cfg.resolved_pair(),
                cfg.n_steps.unwrap_or(1024),
                cfg.n_paths,
                cfg.seed,
                &solver,
            )
            .map_err(CmdError::from)?,
        );
    }
    if let Some(q) = cfg.q {
        rows.extend(
            estimate_even_moment_at(
                &model,
                q,
                &times,
                cfg.n_steps.unwrap_or(1024),
                cfg.n_paths,
                cfg.seed,
                &solver,
            )
            .map_err(CmdError::from)?,
        );
    }

    let mut csv = String::from(MOMENTS_CSV_HEADER);
    csv.push('\n');
    let mut overflow_count = 0;
    for row in &rows {
        let mut buf = Vec::new();
        write_moment_row(&mut buf, row).expect("write to vec");
        csv.push_str(std::str::from_utf8(&buf).expect("ascii"));
        overflow_count += row.overflow_count;
        println!(
            "{} p_or_q={} t={:.4}: {:.8e} +- {:.3e} ({} paths, {} overflows)",
            row.functional, row.p_or_q, row.t, row.value, row.std_error, row.n_paths,
            row.overflow_count
        );
    }
    write_output(out_dir, "moments.csv", &csv)?;
    if overflow_count > 0 {
        eprintln!("{overflow_count} non-finite summands: estimates flagged invalid");
    }
    Ok(CmdReport {
        outputs: vec!["moments.csv".into()],
        overflow_count,
        exit_code: if overflow_count > 0 { 1 } else { 0 },
    })
}

pub fn cmd_convergence(cfg: &ExperimentConfig, out_dir: &Path) -> Result<CmdReport, CmdError> {
    let model = cfg.build_model()?;
    let scheme = cfg.scheme_kind()?;
    let ns = cfg
        .ns
        .clone()
        .ok_or_else(|| CmdError::config("convergence requires ns".into()))?;
    let n_ref = cfg
        .n_ref
        .ok_or_else(|| CmdError::config("convergence requires n_ref".into()))?;
    let fit = strong_error_curve(
        &model,
        scheme,
        &ns,
        n_ref,
        cfg.n_paths,
        cfg.seed,
        &solver_config(),
    )
    .map_err(CmdError::from)?;
    let mut csv = Vec::new();
    fit.write_csv(&mut csv)
        .map_err(|e| CmdError::run(format!("cannot render rate curve: {e}")))?;
    write_output(out_dir, "rates.csv", std::str::from_utf8(&csv).expect("ascii"))?;

    let band = cfg.resolved_slope_band(scheme);
    let in_band = fit.slope >= band.0 && fit.slope <= band.1;
    println!(
        "{} mean-square slope = {:.4} (band [{}, {}]) -> {}",
        scheme,
        fit.slope,
        band.0,
        band.1,
        if in_band { "accept" } else { "REJECT" }
    );
    Ok(CmdReport {
        outputs: vec!["rates.csv".into()],
        overflow_count: 0,
        exit_code: if in_band { 0 } else { 1 },
    })
}

pub fn cmd_identity_check(cfg: &ExperimentConfig, out_dir: &Path) -> Result<CmdReport, CmdError> {
    let samples = 1000;
    let scan = identity_scan(cfg.d, samples, cfg.seed).map_err(|e| CmdError::config(e.to_string()))?;
    let pass = scan.max_relative <= cfg.identity_tol;
    let mut text = String::new();
    writeln!(text, "pairwise cancellation identity, d = {}", cfg.d).unwrap();
    if cfg.d == 2 {
        writeln!(text, "empty sum for d = 2: trivially zero").unwrap();
    }
    writeln!(text, "samples              = {samples}").unwrap();
    writeln!(text, "max relative residual = {:.3e}", scan.max_relative).unwrap();
    writeln!(text, "tolerance             = {:.3e}", cfg.identity_tol).unwrap();
    writeln!(text, "verdict               = {}", if pass { "pass" } else { "FAIL" }).unwrap();
    print!("{text}");
    write_output(out_dir, "identity.txt", &text)?;
    Ok(CmdReport {
        outputs: vec!["identity.txt".into()],
        overflow_count: 0,
        exit_code: if pass { 0 } else { 1 },
    })
}
