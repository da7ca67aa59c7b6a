use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("{0}: parameters must be finite")]
    NotFinite(&'static str),
    #[error("uniform: min {min} must be below max {max}")]
    UniformBounds { min: f64, max: f64 },
    #[error("triangular: need min {min} <= mode {mode} <= max {max} with min < max")]
    TriangularBounds { min: f64, mode: f64, max: f64 },
    #[error("{0}: standard deviation must be positive, got {1}")]
    Spread(&'static str, f64),
    #[error("discrete uniform: lo {lo} must not exceed hi {hi}")]
    DiscreteBounds { lo: i64, hi: i64 },
    #[error("custom: needs at least one point")]
    EmptyCustom,
    #[error("custom: probability {0} must be positive")]
    CustomProbability(f64),
    #[error("custom: probabilities sum to {0}, expected 1")]
    CustomSum(f64),
}

/// Assumption distribution. Parameters are checked on construction, so
/// sampling never fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", try_from = "RawDistribution")]
pub enum Distribution {
    Uniform {
        min: f64,
        max: f64,
    },
    Triangular {
        min: f64,
        mode: f64,
        max: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    Lognormal {
        log_mean: f64,
        log_sd: f64,
    },
    DiscreteUniform {
        lo: i64,
        hi: i64,
    },
    /// `(value, probability)` pairs sorted by value.
    Custom {
        points: Vec<(f64, f64)>,
    },
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawDistribution {
    Uniform { min: f64, max: f64 },
    Triangular { min: f64, mode: f64, max: f64 },
    Normal { mean: f64, sd: f64 },
    Lognormal { log_mean: f64, log_sd: f64 },
    DiscreteUniform { lo: i64, hi: i64 },
    Custom { points: Vec<(f64, f64)> },
}

impl TryFrom<RawDistribution> for Distribution {
    type Error = DistributionError;

    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        match raw {
            RawDistribution::Uniform { min, max } => Self::uniform(min, max),
            RawDistribution::Triangular { min, mode, max } => Self::triangular(min, mode, max),
            RawDistribution::Normal { mean, sd } => Self::normal(mean, sd),
            RawDistribution::Lognormal { log_mean, log_sd } => Self::lognormal(log_mean, log_sd),
            RawDistribution::DiscreteUniform { lo, hi } => Self::discrete_uniform(lo, hi),
            RawDistribution::Custom { points } => Self::custom(points),
        }
    }
}

const CUSTOM_SUM_TOLERANCE: f64 = 1e-9;

fn all_finite(name: &'static str, xs: &[f64]) -> Result<(), DistributionError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(DistributionError::NotFinite(name))
    }
}

impl Distribution {
    pub fn uniform(min: f64, max: f64) -> Result<Self, DistributionError> {
        all_finite("uniform", &[min, max])?;
        if min >= max {
            return Err(DistributionError::UniformBounds { min, max });
        }
        Ok(Self::Uniform { min, max })
    }

    pub fn triangular(min: f64, mode: f64, max: f64) -> Result<Self, DistributionError> {
        all_finite("triangular", &[min, mode, max])?;
        if !(min <= mode && mode <= max && min < max) {
            return Err(DistributionError::TriangularBounds { min, mode, max });
        }
        Ok(Self::Triangular { min, mode, max })
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self, DistributionError> {
        all_finite("normal", &[mean, sd])?;
        if sd <= 0.0 {
            return Err(DistributionError::Spread("normal", sd));
        }
        Ok(Self::Normal { mean, sd })
    }

    pub fn lognormal(log_mean: f64, log_sd: f64) -> Result<Self, DistributionError> {
        all_finite("lognormal", &[log_mean, log_sd])?;
        if log_sd <= 0.0 {
            return Err(DistributionError::Spread("lognormal", log_sd));
        }
        Ok(Self::Lognormal { log_mean, log_sd })
    }

    pub fn discrete_uniform(lo: i64, hi: i64) -> Result<Self, DistributionError> {
        if lo > hi {
            return Err(DistributionError::DiscreteBounds { lo, hi });
        }
        Ok(Self::DiscreteUniform { lo, hi })
    }

    pub fn custom(mut points: Vec<(f64, f64)>) -> Result<Self, DistributionError> {
        if points.is_empty() {
            return Err(DistributionError::EmptyCustom);
        }
        for &(v, p) in &points {
            all_finite("custom", &[v, p])?;
            if p <= 0.0 {
                return Err(DistributionError::CustomProbability(p));
            }
        }
        let total: f64 = points.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > CUSTOM_SUM_TOLERANCE {
            return Err(DistributionError::CustomSum(total));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self::Custom { points })
    }

    /// Generalised inverse CDF, `inf { x : F(x) >= u }`, for `u` in (0, 1).
    pub fn sample_inverse(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u < 1.0, "u = {u} outside (0, 1)");
        match *self {
            Self::Uniform { min, max } => min + u * (max - min),
            Self::Triangular { min, mode, max } => {
                let width = max - min;
                let split = (mode - min) / width;
                if u < split {
                    min + (u * width * (mode - min)).sqrt()
                } else {
                    max - ((1.0 - u) * width * (max - mode)).sqrt()
                }
            }
            Self::Normal { mean, sd } => mean + sd * standard_normal_inverse(u),
            Self::Lognormal { log_mean, log_sd } => {
                (log_mean + log_sd * standard_normal_inverse(u)).exp()
            }
            Self::DiscreteUniform { lo, hi } => {
                let count = (hi - lo + 1) as f64;
                let k = ((u * count).ceil() - 1.0).clamp(0.0, count - 1.0);
                lo as f64 + k
            }
            Self::Custom { ref points } => {
                let mut cumulative = 0.0;
                for &(v, p) in points {
                    cumulative += p;
                    if cumulative >= u {
                        return v;
                    }
                }
                // probabilities may sum to slightly under 1
                points[points.len() - 1].0
            }
        }
    }

    pub fn median(&self) -> f64 {
        self.sample_inverse(0.5)
    }
}

/// Inverse of the standard normal CDF by Acklam's rational approximation
/// (relative error below 1.15e-9 over the open unit interval).
pub fn standard_normal_inverse(u: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if u < LOW {
        tail((-2.0 * u.ln()).sqrt())
    } else if u <= 1.0 - LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - u).ln()).sqrt())
    }
}
