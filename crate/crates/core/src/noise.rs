//! Counter-based Gaussian process noise.
//!
//! Draw `(seed, t, component)` is a pure function of its key: a ChaCha8 stream
//! is selected by `(seed, t)` and component `c` consumes the uniforms at word
//! offsets `2c, 2c+1`, mapped through the cosine branch of Box–Muller. Every
//! policy replaying episode `seed` therefore sees the same `w_t`.

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    Gaussian,
    /// All draws are exactly zero.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
    mode: NoiseMode,
}

impl NoiseStream {
    pub fn new(seed: u64, mode: NoiseMode) -> Self {
        Self { seed, mode }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Standard normal draw for `(t, component)`.
    pub fn standard_normal(&self, t: u64, component: usize) -> f64 {
        if self.mode == NoiseMode::Zero {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(t);
        // one u64 = two 32-bit words
        rng.set_word_pos(4 * component as u128);
        let u1 = open_unit(rng.next_u64());
        let u2 = open_unit(rng.next_u64());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// `w_t ~ N(0, σ² I_n)`.
    pub fn sample(&self, t: u64, n: usize, sigma_w2: f64) -> DVector<f64> {
        let scale = sigma_w2.sqrt();
        DVector::from_fn(n, |c, _| scale * self.standard_normal(t, c))
    }
}

/// Maps 53 random bits onto `(0, 1]`.
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}
