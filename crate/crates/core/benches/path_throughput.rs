//! Parallel vs sequential throughput on the two hot loops: batches of full
//! EM paths and raw implicit solves.
//!
//! Run with `cargo bench -p ncps-core`; pass `--no-default-features` to bench
//! the sequential build alone.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ncps_core::brownian::BrownianGrid;
use ncps_core::catalog;
use ncps_core::exec;
use ncps_core::implicit::{ImplicitSolver, SolverConfig};
use ncps_core::scheme::{simulate_path, SchemeKind};

const D: usize = 5;
const N_STEPS: usize = 256;
const N_PATHS: usize = 64;

fn final_gap_sum(paths: Vec<f64>) -> f64 {
    exec::pairwise_sum(&paths)
}

fn path_batch(c: &mut Criterion) {
    let model = catalog::build("dyson", D, 10.0, None, 1.0).unwrap();
    let cfg = SolverConfig::default();
    let run_one = |p: u64| {
        let grid = BrownianGrid::generate(42, p, N_STEPS, D, 1.0);
        let traj = simulate_path(&model, N_STEPS, SchemeKind::SemiImplicitEm, &grid, &cfg).unwrap();
        let x = traj.final_state();
        x[D - 1] - x[0]
    };

    let mut group = c.benchmark_group("em_path_batch");
    group.sample_size(10);
    group.bench_with_input(BenchmarkId::new("sequential", N_PATHS), &N_PATHS, |b, &n| {
        b.iter(|| final_gap_sum(exec::map_paths_sequential(n, run_one)))
    });
    #[cfg(feature = "parallel")]
    group.bench_with_input(BenchmarkId::new("parallel", N_PATHS), &N_PATHS, |b, &n| {
        b.iter(|| final_gap_sum(exec::map_paths(n, run_one)))
    });
    group.finish();
}

fn implicit_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("implicit_solve");
    for d in [2usize, 5, 16, 50] {
        let y: Vec<f64> = (0..d).map(|i| (i as f64 * 0.7).sin() * 2.0).collect();
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, &d| {
            let mut solver = ImplicitSolver::new(d, SolverConfig::default());
            let mut out = vec![0.0; d];
            b.iter(|| {
                solver.solve_into(&y, 0.05, &mut out).unwrap();
                out[d - 1]
            })
        });
    }
    group.finish();
}

criterion_group!(benches, path_batch, implicit_solve);
criterion_main!(benches);
