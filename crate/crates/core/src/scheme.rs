//! Semi-implicit time steppers and path simulation.
//!
//! Both schemes treat the singular interaction implicitly (at the new time)
//! and everything else explicitly, so every step stays in the Weyl chamber by
//! construction:
//!
//! ```text
//! EM:       y_i = x_i + b_i(x_i) h + sigma_i(x_i) dB_i
//! Milstein: y_i = x_i + b_i(x_i) h + sigma_i(x_i) dB_i
//!                 + 1/2 sigma_i(x_i) sigma_i'(x_i) (dB_i^2 - h)
//! ```
//!
//! followed by the implicit solve with `h_lambda = h * lambda` (see
//! [`crate::implicit`]). The Milstein correction is evaluated at grid nodes
//! only.

use std::io::Write;

use crate::brownian::BrownianGrid;
use crate::error::{Error, Result};
use crate::implicit::{ImplicitSolver, SolverConfig};
use crate::model::{ModelSpec, ParticleState};

/// Which time stepper to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    SemiImplicitEm,
    SemiImplicitMilstein,
}

impl SchemeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::SemiImplicitEm => "semi-implicit-em",
            SchemeKind::SemiImplicitMilstein => "semi-implicit-milstein",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi-implicit-em" => Ok(SchemeKind::SemiImplicitEm),
            "semi-implicit-milstein" => Ok(SchemeKind::SemiImplicitMilstein),
            other => Err(Error::InvalidModel(format!(
                "unknown scheme {other:?}; expected semi-implicit-em or semi-implicit-milstein"
            ))),
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A simulated path on the uniform grid `t_k = k T / n`; every stored state is
/// strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    d: usize,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// State at node `k` (row `k` of the `(n+1) x d` array).
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.d..(k + 1) * self.d]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.n_steps())
    }

    /// Smallest consecutive gap over all nodes.
    pub fn min_gap(&self) -> f64 {
        (0..=self.n_steps())
            .map(|k| {
                self.state(k)
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV export: header `t,x1,...,xd`, one row per node, 17 significant
    /// digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for i in 1..=self.d {
            write!(w, ",x{i}")?;
        }
        writeln!(w)?;
        for k in 0..=self.n_steps() {
            write!(w, "{:.16e}", self.time(k))?;
            for v in self.state(k) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Reusable stepping workspace for one model: an implicit-solver scratch plus
/// the explicit-part buffer. One per path; not shared across threads.
pub struct Stepper<'m> {
    model: &'m ModelSpec,
    solver: ImplicitSolver,
    y: Vec<f64>,
}

impl<'m> Stepper<'m> {
    pub fn new(model: &'m ModelSpec, cfg: SolverConfig) -> Self {
        Self {
            model,
            solver: ImplicitSolver::new(model.d(), cfg),
            y: vec![0.0; model.d()],
        }
    }

    /// One semi-implicit EM step from positions `x` with increments `db`.
    pub fn step_em_into(&mut self, x: &[f64], db: &[f64], h: f64, out: &mut [f64]) -> Result<()> {
        for i in 0..self.model.d() {
            self.y[i] = x[i]
                + self.model.drift_coefficient(i, x[i]) * h
                + self.model.diffusion(i, x[i]) * db[i];
        }
        self.solver.solve_into(&self.y, h * self.model.lambda(), out)
    }

    /// One semi-implicit Milstein step from positions `x`.
    pub fn step_milstein_into(
        &mut self,
        x: &[f64],
        db: &[f64],
        h: f64,
        out: &mut [f64],
    ) -> Result<()> {
        if !self.model.has_sigma_prime() {
            return Err(Error::MissingSigmaPrime);
        }
        for i in 0..self.model.d() {
            let s = self.model.diffusion(i, x[i]);
            let sp = self.model.diffusion_derivative(i, x[i]).unwrap();
            self.y[i] = x[i]
                + self.model.drift_coefficient(i, x[i]) * h
                + s * db[i]
                + 0.5 * s * sp * (db[i] * db[i] - h);
        }
        self.solver.solve_into(&self.y, h * self.model.lambda(), out)
    }

    pub fn step_into(
        &mut self,
        scheme: SchemeKind,
        x: &[f64],
        db: &[f64],
        h: f64,
        out: &mut [f64],
    ) -> Result<()> {
        match scheme {
            SchemeKind::SemiImplicitEm => self.step_em_into(x, db, h, out),
            SchemeKind::SemiImplicitMilstein => self.step_milstein_into(x, db, h, out),
        }
    }
}

/// One semi-implicit EM step (allocating, state-to-state).
pub fn step_semi_implicit_em(
    state: &ParticleState,
    db: &[f64],
    h: f64,
    model: &ModelSpec,
    cfg: &SolverConfig,
) -> Result<ParticleState> {
    check_step_inputs(state, db, h, model)?;
    let mut out = vec![0.0; model.d()];
    Stepper::new(model, *cfg).step_em_into(state.positions(), db, h, &mut out)?;
    ParticleState::new(state.t() + h, out)
}

/// One semi-implicit Milstein step (allocating, state-to-state).
pub fn step_semi_implicit_milstein(
    state: &ParticleState,
    db: &[f64],
    h: f64,
    model: &ModelSpec,
    cfg: &SolverConfig,
) -> Result<ParticleState> {
    check_step_inputs(state, db, h, model)?;
    let mut out = vec![0.0; model.d()];
    Stepper::new(model, *cfg).step_milstein_into(state.positions(), db, h, &mut out)?;
    ParticleState::new(state.t() + h, out)
}

fn check_step_inputs(state: &ParticleState, db: &[f64], h: f64, model: &ModelSpec) -> Result<()> {
    if state.d() != model.d() || db.len() != model.d() {
        return Err(Error::DimensionMismatch(format!(
            "state d = {}, noise d = {}, model d = {}",
            state.d(),
            db.len(),
            model.d()
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidModel(format!("step size must be positive, got {h}")));
    }
    Ok(())
}

/// Iterate the chosen stepper over the whole grid, materializing every node.
pub fn simulate_path(
    model: &ModelSpec,
    n: usize,
    scheme: SchemeKind,
    grid: &BrownianGrid,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    if grid.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "grid has {} steps, requested n = {n}",
            grid.n()
        )));
    }
    let d = model.d();
    let mut states = Vec::with_capacity((n + 1) * d);
    let mut times = Vec::with_capacity(n + 1);
    simulate_observing(model, scheme, grid, cfg, |_, t, x| {
        times.push(t);
        states.extend_from_slice(x);
    })?;
    Ok(Trajectory { d, times, states })
}

/// Streaming simulation: runs the scheme over the grid and hands every node
/// (including node 0) to `observe(k, t_k, state)` without storing the path.
pub fn simulate_observing<F>(
    model: &ModelSpec,
    scheme: SchemeKind,
    grid: &BrownianGrid,
    cfg: &SolverConfig,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(usize, f64, &[f64]),
{
    let d = model.d();
    if grid.d() != d {
        return Err(Error::DimensionMismatch(format!(
            "grid has {} coordinates, model has d = {d}",
            grid.d()
        )));
    }
    if grid.horizon() != model.horizon() {
        return Err(Error::DimensionMismatch(format!(
            "grid horizon {} differs from model horizon {}",
            grid.horizon(),
            model.horizon()
        )));
    }
    let n = grid.n();
    let h = model.horizon() / n as f64;
    let mut stepper = Stepper::new(model, *cfg);
    let mut x = model.initial().to_vec();
    let mut next = vec![0.0; d];
    observe(0, 0.0, &x);
    for k in 0..n {
        stepper
            .step_into(scheme, &x, grid.step(k), h, &mut next)
            .map_err(|e| e.at_step(k))?;
        std::mem::swap(&mut x, &mut next);
        observe(k + 1, (k + 1) as f64 * h, &x);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::implicit::solve_two_particles;
    use crate::model::scalar_fn;
    use crate::model::ModelSpec;
    use approx::assert_relative_eq;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn dyson(d: usize, lambda: f64) -> ModelSpec {
        catalog::build("dyson", d, lambda, None, 1.0).unwrap()
    }

    #[test]
    fn em_step_matches_closed_form() {
        // No drift, no noise: the step is the pure implicit solve with
        // y = x = (0, 1) and h_lambda = 0.1.
        let model = ModelSpec::homogeneous(
            1.0,
            scalar_fn(|_| 0.0),
            scalar_fn(|_| 0.0),
            None,
            vec![0.0, 1.0],
            1.0,
        )
        .unwrap();
        let state = ParticleState::new(0.0, vec![0.0, 1.0]).unwrap();
        let next = step_semi_implicit_em(&state, &[0.3, -0.4], 0.1, &model, &cfg()).unwrap();
        let oracle = solve_two_particles(&[0.0, 1.0], 0.1);
        assert_relative_eq!(next.positions()[0], oracle[0], epsilon = 1e-12);
        assert_relative_eq!(next.positions()[1], oracle[1], epsilon = 1e-12);
        assert_relative_eq!(next.positions()[0], -0.08541019662496845, epsilon = 1e-10);
        assert_relative_eq!(next.positions()[1], 1.08541019662496845, epsilon = 1e-10);
        assert_eq!(next.t(), 0.1);
    }

    #[test]
    fn em_step_center_of_mass_identity() {
        let model = dyson(3, 2.0);
        let state = ParticleState::new(0.0, vec![-1.0, 0.2, 1.4]).unwrap();
        let db = [0.05, -0.02, 0.01];
        let h = 0.125;
        let next = step_semi_implicit_em(&state, &db, h, &model, &cfg()).unwrap();
        let expected: f64 = state.positions().iter().sum::<f64>() + db.iter().sum::<f64>();
        let got: f64 = next.positions().iter().sum();
        assert!((got - expected).abs() <= 1e-10 * expected.abs().max(1.0));
    }

    #[test]
    fn milstein_with_constant_sigma_equals_em() {
        let model = dyson(4, 1.5);
        let state = ParticleState::new(0.0, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let db = [0.21, -0.13, 0.04, 0.4];
        let h = 0.05;
        let em = step_semi_implicit_em(&state, &db, h, &model, &cfg()).unwrap();
        let mil = step_semi_implicit_milstein(&state, &db, h, &model, &cfg()).unwrap();
        assert_eq!(em.positions(), mil.positions());
    }

    #[test]
    fn milstein_explicit_part_hand_check() {
        // sigma_i(y) = 2 + sin(y), correction 1/2 (2+sin x)(cos x)(db^2 - h).
        let model = ModelSpec::homogeneous(
            1.0,
            scalar_fn(|_| 0.0),
            scalar_fn(|y: f64| 2.0 + y.sin()),
            Some(scalar_fn(|y: f64| y.cos())),
            vec![0.0, 1.0],
            1.0,
        )
        .unwrap();
        let x = [0.0f64, 1.0];
        let db = [0.1f64, -0.2];
        let h = 0.01;
        let mut y = [0.0f64; 2];
        for i in 0..2 {
            let s = 2.0 + x[i].sin();
            y[i] = x[i] + s * db[i] + 0.5 * s * x[i].cos() * (db[i] * db[i] - h);
        }
        // Hand evaluation of the two components.
        assert_relative_eq!(y[0], 0.0 + 2.0 * 0.1 + 0.5 * 2.0 * 1.0 * (0.01 - 0.01), epsilon = 1e-15);
        let s1 = 2.0 + 1.0f64.sin();
        assert_relative_eq!(
            y[1],
            1.0 + s1 * -0.2 + 0.5 * s1 * 1.0f64.cos() * (0.04 - 0.01),
            epsilon = 1e-15
        );

        let state = ParticleState::new(0.0, x.to_vec()).unwrap();
        let next = step_semi_implicit_milstein(&state, &db, h, &model, &cfg()).unwrap();
        let oracle = solve_two_particles(&[y[0], y[1]], h * model.lambda());
        assert_relative_eq!(next.positions()[0], oracle[0], epsilon = 1e-12);
        assert_relative_eq!(next.positions()[1], oracle[1], epsilon = 1e-12);
    }

    #[test]
    fn milstein_bracket_vanishes_at_db_sq_equal_h() {
        let model = catalog::build("bounded-smooth", 2, 1.0, None, 1.0).unwrap();
        let state = ParticleState::new(0.0, vec![0.0, 1.0]).unwrap();
        let h: f64 = 0.04;
        let db = [h.sqrt(), -(h.sqrt())];
        let em = step_semi_implicit_em(&state, &db, h, &model, &cfg()).unwrap();
        let mil = step_semi_implicit_milstein(&state, &db, h, &model, &cfg()).unwrap();
        assert_eq!(em.positions(), mil.positions());
    }

    #[test]
    fn milstein_requires_sigma_prime() {
        let model = ModelSpec::homogeneous(
            1.0,
            scalar_fn(|_| 0.0),
            scalar_fn(|_| 1.0),
            None,
            vec![0.0, 1.0],
            1.0,
        )
        .unwrap();
        let state = ParticleState::new(0.0, vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            step_semi_implicit_milstein(&state, &[0.0, 0.0], 0.1, &model, &cfg()),
            Err(Error::MissingSigmaPrime)
        ));
    }

    #[test]
    fn single_step_trajectory() {
        let model = dyson(2, 1.0);
        let grid = BrownianGrid::generate(5, 0, 1, 2, 1.0);
        let traj = simulate_path(&model, 1, SchemeKind::SemiImplicitEm, &grid, &cfg()).unwrap();
        assert_eq!(traj.n_steps(), 1);
        assert_eq!(traj.state(0), model.initial());
        let state = ParticleState::new(0.0, model.initial().to_vec()).unwrap();
        let step = step_semi_implicit_em(&state, grid.step(0), 1.0, &model, &cfg()).unwrap();
        assert_eq!(traj.state(1), step.positions());
    }

    #[test]
    fn noise_free_gap_matches_recursion() {
        let model = ModelSpec::homogeneous(
            1.0,
            scalar_fn(|_| 0.0),
            scalar_fn(|_| 0.0),
            None,
            vec![0.0, 1.0],
            1.0,
        )
        .unwrap();
        let n = 64;
        let grid = BrownianGrid::generate(1, 0, n, 2, 1.0);
        // Tight per-step tolerance so the n-step accumulation stays below the
        // 1e-12 band of the recursion oracle.
        let tight = SolverConfig {
            grad_tol: 1e-15,
            ..SolverConfig::default()
        };
        let traj = simulate_path(&model, n, SchemeKind::SemiImplicitEm, &grid, &tight).unwrap();
        let h = 1.0 / n as f64;
        let mut g = 1.0f64;
        for _ in 0..n {
            g = 0.5 * (g + (g * g + 8.0 * h).sqrt());
        }
        let last = traj.final_state();
        assert_relative_eq!(last[1] - last[0], g, epsilon = 1e-12);
    }

    #[test]
    fn same_seed_bit_identical() {
        let model = dyson(3, 1.0);
        let g1 = BrownianGrid::generate(11, 4, 32, 3, 1.0);
        let g2 = BrownianGrid::generate(11, 4, 32, 3, 1.0);
        let a = simulate_path(&model, 32, SchemeKind::SemiImplicitEm, &g1, &cfg()).unwrap();
        let b = simulate_path(&model, 32, SchemeKind::SemiImplicitEm, &g2, &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_error_carries_index() {
        // Horizon mismatch between grid and model is caught before stepping;
        // to exercise the per-step tagging, drive a Milstein run without
        // sigma_prime.
        let model = ModelSpec::homogeneous(
            1.0,
            scalar_fn(|_| 0.0),
            scalar_fn(|_| 1.0),
            None,
            vec![0.0, 1.0],
            1.0,
        )
        .unwrap();
        let grid = BrownianGrid::generate(1, 0, 4, 2, 1.0);
        let err = simulate_path(&model, 4, SchemeKind::SemiImplicitMilstein, &grid, &cfg())
            .unwrap_err();
        assert!(matches!(err, Error::Step { step: 0, .. }), "{err}");
    }

    #[test]
    fn trajectory_csv_format() {
        let model = dyson(2, 1.0);
        let grid = BrownianGrid::generate(3, 0, 2, 2, 1.0);
        let traj = simulate_path(&model, 2, SchemeKind::SemiImplicitEm, &grid, &cfg()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x1,x2"));
        assert_eq!(lines.count(), 3);
        assert!(text.contains("0.0000000000000000e0"));
    }

    #[test]
    fn scheme_kind_round_trip() {
        for s in [SchemeKind::SemiImplicitEm, SchemeKind::SemiImplicitMilstein] {
            assert_eq!(s.as_str().parse::<SchemeKind>().unwrap(), s);
        }
        assert!("explicit-euler".parse::<SchemeKind>().is_err());
    }
}
