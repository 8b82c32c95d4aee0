//! Reproducible Brownian increments on a uniform grid.
//!
//! Increments are generated counter-style: the draw for (step `k`,
//! coordinate `i`) of replica `path_index` always comes from the same ChaCha8
//! stream position, namely stream `path_index` of the seed-derived key, word
//! position `4 * (k*d + i)`. Each normal consumes exactly two `u64`s through a
//! Box-Muller transform, so sequential generation and random access agree, any
//! increment is addressable in O(1), and replicas are embarrassingly parallel
//! with bit-identical results regardless of scheduling.
//!
//! Coarser grids are never re-sampled: [`BrownianGrid::coarsen`] sums
//! consecutive increment pairs, so every resolution of one `(seed,
//! path_index)` shares a single underlying Brownian path. That coupling is
//! load-bearing for strong-error measurement.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Words of ChaCha output consumed per normal draw (two u64s).
const WORDS_PER_DRAW: u128 = 4;

/// Per-coordinate Brownian increments of one Monte Carlo replica on a uniform
/// `n`-step grid over `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct BrownianGrid {
    seed: u64,
    path_index: u64,
    n: usize,
    d: usize,
    horizon: f64,
    increments: Vec<f64>,
}

impl BrownianGrid {
    /// Generate the full `n x d` increment array; each entry is
    /// `N(0, horizon/n)` and a deterministic function of
    /// `(seed, path_index, n, d, horizon)`.
    pub fn generate(seed: u64, path_index: u64, n: usize, d: usize, horizon: f64) -> Self {
        assert!(n >= 1 && d >= 1, "grid needs n >= 1 and d >= 1");
        assert!(horizon > 0.0, "horizon must be positive");
        let mut rng = keyed_rng(seed, path_index);
        let scale = (horizon / n as f64).sqrt();
        let increments = (0..n * d)
            .map(|_| scale * standard_normal(&mut rng))
            .collect();
        Self {
            seed,
            path_index,
            n,
            d,
            horizon,
            increments,
        }
    }

    /// Random access to the draw behind increment (`step`, `coord`) without
    /// generating predecessors; equals the corresponding [`generate`] entry.
    ///
    /// [`generate`]: BrownianGrid::generate
    pub fn increment_at(
        seed: u64,
        path_index: u64,
        step: usize,
        coord: usize,
        n: usize,
        d: usize,
        horizon: f64,
    ) -> f64 {
        let mut rng = keyed_rng(seed, path_index);
        rng.set_word_pos(WORDS_PER_DRAW * (step as u128 * d as u128 + coord as u128));
        (horizon / n as f64).sqrt() * standard_normal(&mut rng)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Step size `horizon / n`.
    pub fn dt(&self) -> f64 {
        self.horizon / self.n as f64
    }

    /// The `d` increments of step `k`.
    pub fn step(&self, k: usize) -> &[f64] {
        &self.increments[k * self.d..(k + 1) * self.d]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Halve the resolution: coarse increment `k` is the sum of fine
    /// increments `2k` and `2k + 1`, same seed and path.
    pub fn coarsen(&self) -> Result<BrownianGrid> {
        if self.n % 2 != 0 {
            return Err(Error::OddSteps(self.n));
        }
        let half = self.n / 2;
        let mut increments = vec![0.0; half * self.d];
        for k in 0..half {
            let a = self.step(2 * k);
            let b = self.step(2 * k + 1);
            for i in 0..self.d {
                increments[k * self.d + i] = a[i] + b[i];
            }
        }
        Ok(BrownianGrid {
            seed: self.seed,
            path_index: self.path_index,
            n: half,
            d: self.d,
            horizon: self.horizon,
            increments,
        })
    }

    /// Repeatedly halve down to `n_target`, which must divide `n` with a
    /// power-of-two quotient.
    pub fn coarsen_to(&self, n_target: usize) -> Result<BrownianGrid> {
        if n_target == 0 || self.n % n_target != 0 || !(self.n / n_target).is_power_of_two() {
            return Err(Error::GridNesting(format!(
                "cannot coarsen {} steps to {} by halving",
                self.n, n_target
            )));
        }
        let mut g = self.clone();
        while g.n > n_target {
            g = g.coarsen()?;
        }
        Ok(g)
    }
}

fn keyed_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Fixed-consumption Box-Muller: two u64s in, one standard normal out.
fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    let a = rng.next_u64();
    let b = rng.next_u64();
    // u1 in (0, 1], u2 in [0, 1).
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / 9007199254740992.0);
    let u2 = (b >> 11) as f64 * (1.0 / 9007199254740992.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
