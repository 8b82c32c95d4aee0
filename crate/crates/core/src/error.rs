//! Error type shared across the toolkit.

/// Errors produced by model validation, the implicit solver, the schemes and
/// the estimators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A position vector left the Weyl chamber (must be strictly increasing).
    #[error("positions not strictly increasing: x[{index}] = {value} <= x[{}] = {prev}", index - 1)]
    NotIncreasing {
        index: usize,
        value: f64,
        prev: f64,
    },

    /// A vector component was NaN or infinite where a finite value is required.
    #[error("non-finite value at component {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    /// Model construction rejected its parameters.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Mismatched dimensions between cooperating objects.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The Newton iteration exhausted its budget.
    #[error(
        "implicit solve did not converge after {iters} iterations \
         (gradient norm {grad_norm:.3e}, tolerance {tol:.3e})"
    )]
    NoConvergence {
        iters: usize,
        grad_norm: f64,
        tol: f64,
    },

    /// Cholesky factorization of the barrier Hessian broke down.
    #[error("Hessian factorization failed at pivot {pivot} (near-collision beyond f64 precision)")]
    HessianSolve { pivot: usize },

    /// The line search could not find an acceptable step.
    #[error("line search failed: no acceptable step at iteration {iter}")]
    LineSearch { iter: usize },

    /// With a vanishing barrier the step is only defined for distinct entries.
    #[error("h_lambda = 0 with tied explicit part: y[{i}] == y[{j}]")]
    TiedAtZeroBarrier { i: usize, j: usize },

    /// The Milstein scheme needs analytic diffusion derivatives.
    #[error("model has no sigma_prime; the Milstein scheme requires analytic diffusion derivatives")]
    MissingSigmaPrime,

    /// A time-stepping failure, tagged with the step at which it occurred.
    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// Coarsening halves the step count, so it needs an even grid.
    #[error("coarsen requires an even number of steps, got {0}")]
    OddSteps(usize),

    /// Step counts in a coupled comparison must nest by repeated halving.
    #[error("grid nesting violation: {0}")]
    GridNesting(String),

    /// Log-log regression needs at least three distinct step counts.
    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    /// Central differences would step across the domain boundary.
    #[error("finite-difference step {step:.3e} too large for minimum gap {min_gap:.3e}")]
    FdStepTooLarge { step: f64, min_gap: f64 },

    /// An oracle was called outside the regime where its formula is exact.
    #[error("oracle precondition violated: {0}")]
    OraclePrecondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the index of the failing time step.
    pub fn at_step(self, step: usize) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}
