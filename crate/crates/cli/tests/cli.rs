//! End-to-end tests of the `ncps` binary: exit codes 0/1/2 for every
//! subcommand, manifest emission, and byte-determinism of result files across
//! reruns and thread counts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ncps")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const DYSON_SMALL: &str = "model = \"dyson\"\nd = 3\nlambda = 1.0\nn_steps = 32\nn_paths = 50\nq = 1.0\nseed = 11\n";

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok_cfg = write_config(dir.path(), "ok.toml", DYSON_SMALL);
    let out = dir.path().join("out");
    let r = run(&["validate", "--config", ok_cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{r:?}");
    assert!(out.join("assumptions.txt").exists());
    assert!(out.join("manifest.txt").exists());

    // sigma = 2 with lambda = 1 violates the diffusion bound: exit 1.
    let bad = write_config(
        dir.path(),
        "bad.toml",
        "model = \"dyson\"\nd = 2\nlambda = 1.0\nsigma_affine = [2.0, 0.0]\n",
    );
    let r = run(&["validate", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 1);
    let report = std::fs::read_to_string(out.join("assumptions.txt")).unwrap();
    assert!(report.contains("4.0000 vs 2 lambda 2.0000"), "{report}");

    // Unparseable config: exit 2.
    let broken = write_config(dir.path(), "broken.toml", "model = \"dyson\"\nd = \"three\"\n");
    let r = run(&["validate", "--config", broken.to_str().unwrap()]);
    assert_eq!(code(&r), 2);

    // Missing --config: exit 2.
    let r = run(&["validate"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn simulate_exit_codes_and_csv_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.toml", DYSON_SMALL);
    let out = dir.path().join("out");
    let r = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{r:?}");
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,x3"));
    assert_eq!(lines.count(), 33); // n_steps + 1 rows

    // Overflowing diffusion scale: a step eventually produces a non-finite
    // explicit part, reported with its index, exit 1.
    let blow = write_config(
        dir.path(),
        "blow.toml",
        "model = \"dyson\"\nd = 2\nlambda = 1.0\nhorizon = 100.0\nn_steps = 64\nseed = 1\nsigma_affine = [1.0e308, 0.0]\n",
    );
    let r = run(&["simulate", "--config", blow.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 1);
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("step 1"), "{stderr}");

    // Missing n_steps: exit 2.
    let nosteps = write_config(dir.path(), "nosteps.toml", "model = \"dyson\"\nd = 2\nlambda = 1.0\n");
    let r = run(&["simulate", "--config", nosteps.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2);
}

#[test]
fn moments_exit_codes_and_gating() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "m.toml", DYSON_SMALL);
    let r = run(&["moments", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{r:?}");
    let csv = std::fs::read_to_string(out.join("moments.csv")).unwrap();
    assert!(csv.starts_with("functional,p_or_q,t,value,stderr,n_paths,flags\n"));

    // p = 1 with threshold (2*1/1 - 1)/6 = 1/6: refused without the override,
    // and the message cites the threshold.
    let gated = write_config(
        dir.path(),
        "gated.toml",
        "model = \"dyson\"\nd = 2\nlambda = 1.0\nn_steps = 16\nn_paths = 20\np = 1.0\n",
    );
    let r = run(&["moments", "--config", gated.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 1);
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("0.1666"), "{stderr}");
    let r = run(&[
        "moments",
        "--outside-guarantee",
        "--config",
        gated.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 0, "{r:?}");

    // An exponent so large the summands overflow: flagged, exit 1.
    let overflow = write_config(
        dir.path(),
        "overflow.toml",
        "model = \"dyson\"\nd = 2\nlambda = 1.0\nn_steps = 16\nn_paths = 20\np = 5000.0\n",
    );
    let r = run(&[
        "moments",
        "--outside-guarantee",
        "--config",
        overflow.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&r), 1);
    let csv = std::fs::read_to_string(out.join("moments.csv")).unwrap();
    let flags: usize = csv.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(flags > 0, "{csv}");

    // Neither p nor q: exit 2.
    let none = write_config(dir.path(), "none.toml", "model = \"dyson\"\nd = 2\nlambda = 1.0\n");
    let r = run(&["moments", "--config", none.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2);
}

const CONV_SMALL: &str = "model = \"bounded-smooth\"\nd = 2\nlambda = 4.0\nv = [0.0, 4.0]\nns = [16, 32, 64]\nn_ref = 1024\nn_paths = 120\nseed = 7\n";

#[test]
fn convergence_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "conv.toml", CONV_SMALL);
    let r = run(&["convergence", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{r:?}");
    let csv = std::fs::read_to_string(out.join("rates.csv")).unwrap();
    assert!(csv.starts_with("n,mse,stderr\n"));
    assert_eq!(csv.lines().count(), 4);

    // Same curve judged against an absurd band: exit 1.
    let off_band = write_config(
        dir.path(),
        "offband.toml",
        &format!("{CONV_SMALL}slope_band = [-9.0, -8.0]\n"),
    );
    let r = run(&["convergence", "--config", off_band.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 1);

    // Single n cannot be fitted: exit 2.
    let single = write_config(
        dir.path(),
        "single.toml",
        "model = \"dyson\"\nd = 2\nlambda = 1.0\nns = [16]\nn_ref = 1024\nn_paths = 20\n",
    );
    let r = run(&["convergence", "--config", single.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2);

    // Nesting violation (n_ref < 16 * max ns): exit 2.
    let nest = write_config(
        dir.path(),
        "nest.toml",
        "model = \"dyson\"\nd = 2\nlambda = 1.0\nns = [16, 32, 64]\nn_ref = 256\nn_paths = 20\n",
    );
    let r = run(&["convergence", "--config", nest.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2);
}

#[test]
fn identity_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "id.toml", "model = \"dyson\"\nd = 6\nlambda = 1.0\n");
    let r = run(&["identity-check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{r:?}");
    assert!(std::fs::read_to_string(out.join("identity.txt")).unwrap().contains("pass"));

    // d = 2 is the trivial empty sum.
    let d2 = write_config(dir.path(), "id2.toml", "model = \"dyson\"\nd = 2\nlambda = 1.0\n");
    let r = run(&["identity-check", "--config", d2.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    assert!(std::fs::read_to_string(out.join("identity.txt")).unwrap().contains("empty sum"));

    // Zero tolerance forces the failure branch: exit 1.
    let strict = write_config(
        dir.path(),
        "strict.toml",
        "model = \"dyson\"\nd = 6\nlambda = 1.0\nidentity_tol = 0.0\n",
    );
    let r = run(&["identity-check", "--config", strict.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 1);

    // d = 1 has no pairs at all: configuration error.
    let d1 = write_config(dir.path(), "id1.toml", "model = \"dyson\"\nd = 1\nlambda = 1.0\n");
    let r = run(&["identity-check", "--config", d1.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2);
}

#[test]
fn seed_and_paths_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    let cfg = write_config(dir.path(), "o.toml", DYSON_SMALL);
    let r = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    let r = run(&[
        "simulate", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap(),
        "--seed", "999",
    ]);
    assert_eq!(code(&r), 0);
    let a = std::fs::read(out1.join("trajectory.csv")).unwrap();
    let b = std::fs::read(out2.join("trajectory.csv")).unwrap();
    assert_ne!(a, b, "seed override must change the path");
    let manifest = std::fs::read_to_string(out2.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 999"), "{manifest}");
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "det.toml", DYSON_SMALL);
    let mut baselines: Option<(Vec<u8>, Vec<u8>)> = None;
    for (i, threads) in ["1", "2", "1"].iter().enumerate() {
        let out = dir.path().join(format!("t{i}"));
        let r = run(&[
            "moments", "--config", cfg.to_str().unwrap(),
            "--out", out.to_str().unwrap(), "--threads", threads,
        ]);
        assert_eq!(code(&r), 0, "{r:?}");
        let r = run(&[
            "simulate", "--config", cfg.to_str().unwrap(),
            "--out", out.to_str().unwrap(), "--threads", threads,
        ]);
        assert_eq!(code(&r), 0, "{r:?}");
        let m = std::fs::read(out.join("moments.csv")).unwrap();
        let t = std::fs::read(out.join("trajectory.csv")).unwrap();
        match &baselines {
            None => baselines = Some((m, t)),
            Some((m0, t0)) => {
                assert_eq!(&m, m0, "moments.csv differs at threads={threads}");
                assert_eq!(&t, t0, "trajectory.csv differs at threads={threads}");
            }
        }
    }
}
