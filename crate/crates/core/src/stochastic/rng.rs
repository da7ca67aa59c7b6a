//! Counter-based uniforms: every variate is a pure function of
//! `(seed, stream, i, j)`, so sampling order and thread count never change
//! the numbers a simulation sees.

use serde::{Deserialize, Serialize};

/// Independent purposes drawing from the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Per-(trial, assumption) input draws.
    Assumptions,
    /// Gaussian scores for rank-correlation induction.
    CorrelationScores,
    /// Row picks when resampling historical records.
    Backcast,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Assumptions => 0x6173_7375_6d70_7469,
            Stream::CorrelationScores => 0x636f_7272_656c_6174,
            Stream::Backcast => 0x6261_636b_6361_7374,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSource {
    pub seed: u64,
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn bits(&self, stream: Stream, i: u64, j: u64) -> u64 {
        let h = mix(self.seed ^ mix(stream.tag()));
        let h = mix(h ^ i);
        mix(h ^ j.wrapping_mul(0xd6e8_feb8_6659_fd93))
    }

    /// Uniform on the open interval (0, 1): the 53-bit lattice shifted by half a step.
    pub fn uniform(&self, stream: Stream, i: u64, j: u64) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.bits(stream, i, j) >> 11) as f64 + 0.5) * SCALE
    }

    /// The input draw for `assumption` in `trial`.
    pub fn uniform_for(&self, trial: u64, assumption: u64) -> f64 {
        self.uniform(Stream::Assumptions, trial, assumption)
    }
}
