//! Declarative experiment configuration: flat TOML key-value text.
//!
//! Parsing materializes every default, so a parsed config is fully resolved
//! and `parse(render(c)) == c`. Coefficients are restricted to the built-in
//! catalog plus affine re-scalings; arbitrary coefficient functions require
//! the library interface.

use serde::{Deserialize, Serialize};

use ncps_core::catalog;
use ncps_core::scheme::SchemeKind;
use ncps_core::ModelSpec;

use crate::CmdError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Catalog key: dyson | affine-drift | bounded-smooth.
    pub model: String,
    pub d: usize,
    pub lambda: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Initial configuration; defaults to the unit-gap ladder 0..d-1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    /// semi-implicit-em | semi-implicit-milstein.
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    /// Step counts for the convergence harness (powers of two).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_ref: Option<usize>,
    /// Exponent of the gap negative moment E[gap^-p].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Exponent of the even moment E[||X||^2q].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Particle pair (i, j) for gap functionals; defaults to (0, 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<(usize, usize)>,
    /// Observation times for moment estimates; defaults to [horizon].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Acceptance band for the fitted log-log slope; defaults per scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_band: Option<(f64, f64)>,
    /// Relative tolerance of the pairwise-identity check.
    #[serde(default = "default_identity_tol")]
    pub identity_tol: f64,
    /// Affine re-scaling a*b_i + c of the catalog drift.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_affine: Option<(f64, f64)>,
    /// Affine re-scaling a*sigma_i + c of the catalog diffusion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_affine: Option<(f64, f64)>,
    /// Path schedule for the negative-moment stability scan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_schedule: Option<Vec<usize>>,
    /// Output directory; overridden by --out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    /// Worker threads; overridden by --threads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn default_horizon() -> f64 {
    1.0
}

fn default_scheme() -> String {
    "semi-implicit-em".to_string()
}

fn default_paths() -> usize {
    1000
}

fn default_identity_tol() -> f64 {
    1e-12
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CmdError> {
        toml::from_str(text).map_err(|e| CmdError::config(format!("config parse error: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CmdError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CmdError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical TOML rendering; `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn scheme_kind(&self) -> Result<SchemeKind, CmdError> {
        self.scheme
            .parse::<SchemeKind>()
            .map_err(|e| CmdError::config(e.to_string()))
    }

    pub fn build_model(&self) -> Result<ModelSpec, CmdError> {
        catalog::build_affine(
            &self.model,
            self.d,
            self.lambda,
            self.v.clone(),
            self.horizon,
            self.b_affine,
            self.sigma_affine,
        )
        .map_err(|e| CmdError::config(e.to_string()))
    }

    /// Observation times, defaulting to the horizon.
    pub fn resolved_times(&self) -> Vec<f64> {
        self.times.clone().unwrap_or_else(|| vec![self.horizon])
    }

    pub fn resolved_pair(&self) -> (usize, usize) {
        self.pair.unwrap_or((0, 1))
    }

    /// Slope acceptance band: configured, or the per-scheme default
    /// ([-1.25, -0.75] for EM, [-2.3, -1.7] for Milstein).
    pub fn resolved_slope_band(&self, scheme: SchemeKind) -> (f64, f64) {
        self.slope_band.unwrap_or(match scheme {
            SchemeKind::SemiImplicitEm => (-1.25, -0.75),
            SchemeKind::SemiImplicitMilstein => (-2.3, -1.7),
        })
    }
}
