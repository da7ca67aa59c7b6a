use serde::{Deserialize, Serialize};

use crate::simulator::TrialStore;

use super::{forecast_values, AnalyticsError};

pub const PERCENTILE_LEVELS: [u8; 9] = [1, 5, 10, 25, 50, 75, 90, 95, 99];
pub const MAX_DEFAULT_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentile {
    pub level: u8,
    pub value: f64,
}

/// Descriptive statistics with population (n-denominator) moments.
/// Shape statistics are `None` when the spread is zero, and the coefficient
/// of variation is `None` when the mean is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std_dev: f64,
    pub variance: f64,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    pub coefficient_of_variation: Option<f64>,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    pub std_error: f64,
    pub percentiles: Vec<Percentile>,
}

/// Linear interpolation between closest ranks: position `(n-1)·p` in the
/// sorted sample. `sorted` must be non-empty and ascending.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn describe(values: &[f64]) -> Result<ForecastStats, AnalyticsError> {
    let n = values.len();
    if n < 2 {
        return Err(AnalyticsError::TooFewTrials {
            required: 2,
            found: n,
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (min, max) = (sorted[0], sorted[n - 1]);
    let degenerate = min == max;
    let moment = |k: i32| {
        if degenerate {
            0.0
        } else {
            values.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / nf
        }
    };
    let variance = moment(2);
    let std_dev = variance.sqrt();
    let (skewness, excess_kurtosis) = if degenerate {
        (None, None)
    } else {
        (
            Some(moment(3) / variance.powf(1.5)),
            Some(moment(4) / (variance * variance) - 3.0),
        )
    };
    Ok(ForecastStats {
        n,
        mean,
        median: percentile(&sorted, 0.5),
        std_dev,
        variance,
        skewness,
        excess_kurtosis,
        coefficient_of_variation: (mean != 0.0).then(|| std_dev / mean),
        min,
        max,
        range: max - min,
        std_error: std_dev / nf.sqrt(),
        percentiles: PERCENTILE_LEVELS
            .iter()
            .map(|&level| Percentile {
                level,
                value: percentile(&sorted, f64::from(level) / 100.0),
            })
            .collect(),
    })
}

pub fn forecast_stats(store: &TrialStore, forecast: &str) -> Result<ForecastStats, AnalyticsError> {
    describe(&forecast_values(store, forecast)?.1)
}

/// Fraction of `values` in the closed interval `[lo, hi]`.
pub fn certainty_of(values: &[f64], lo: f64, hi: f64) -> Result<f64, AnalyticsError> {
    if lo > hi {
        return Err(AnalyticsError::InvertedBounds { lo, hi });
    }
    if values.is_empty() {
        return Err(AnalyticsError::TooFewTrials {
            required: 1,
            found: 0,
        });
    }
    let hits = values.iter().filter(|&&v| lo <= v && v <= hi).count();
    Ok(hits as f64 / values.len() as f64)
}

pub fn certainty(
    store: &TrialStore,
    forecast: &str,
    lo: f64,
    hi: f64,
) -> Result<f64, AnalyticsError> {
    certainty_of(&forecast_values(store, forecast)?.1, lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` uniformly spaced edges spanning min..max.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over the observed range; the last bin is closed. A
/// constant sample gets a unit-wide span centred on its value. `bins`
/// defaults to ⌈√n⌉ capped at [`MAX_DEFAULT_BINS`].
pub fn histogram(values: &[f64], bins: Option<usize>) -> Result<Histogram, AnalyticsError> {
    if values.is_empty() {
        return Err(AnalyticsError::TooFewTrials {
            required: 1,
            found: 0,
        });
    }
    let bins = bins.unwrap_or_else(|| {
        ((values.len() as f64).sqrt().ceil() as usize).clamp(1, MAX_DEFAULT_BINS)
    });
    if bins == 0 {
        return Err(AnalyticsError::ZeroBins);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if min == max {
        (min - 0.5, max + 0.5)
    } else {
        (min, max)
    };
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    let mut counts = vec![0usize; bins];
    for &v in values {
        // locate by edges so counts agree with the published boundaries
        let guess = (((v - lo) / width) as usize).min(bins - 1);
        let mut b = guess;
        while b > 0 && v < edges[b] {
            b -= 1;
        }
        while b + 1 < bins && v >= edges[b + 1] {
            b += 1;
        }
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sample() {
        let s = describe(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((s.mean, s.median, s.min, s.max), (3.0, 3.0, 1.0, 5.0));
        assert_eq!(s.variance, 2.0);
        assert_eq!(s.skewness, Some(0.0));
        // population excess kurtosis of 1..5: 6.8/4 - 3
        assert!((s.excess_kurtosis.unwrap() - (1.7 - 3.0)).abs() < 1e-12);
        assert_eq!(s.percentiles[4].value, 3.0);
        assert_eq!(s.percentiles[3].value, 2.0);
        // 0.01 * 4 = 0.04 of the way from 1 to 2
        assert!((s.percentiles[0].value - 1.04).abs() < 1e-12);
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let s = describe(&[0.1; 7]).unwrap();
        assert_eq!(s.std_dev, 0.0);
        assert_eq!(s.skewness, None);
        assert_eq!(s.excess_kurtosis, None);
        assert!(describe(&[1.0]).is_err());
        let h = histogram(&[0.1; 7], None).unwrap();
        assert_eq!(h.edges.first(), Some(&(0.1 - 0.5)));
        assert_eq!(h.counts.iter().sum::<usize>(), 7);
    }

    #[test]
    fn certainty_bounds() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(
            certainty_of(&v, f64::NEG_INFINITY, f64::INFINITY).unwrap(),
            1.0
        );
        assert_eq!(certainty_of(&v, -5.0, 0.5).unwrap(), 0.0);
        assert_eq!(certainty_of(&v, 2.0, 3.0).unwrap(), 0.5);
        assert!(certainty_of(&v, 3.0, 2.0).is_err());
    }

    #[test]
    fn histogram_edges() {
        let h = histogram(&[0.0, 1.0, 2.0, 3.0, 4.0], Some(4)).unwrap();
        assert_eq!(h.edges, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(h.counts, vec![1, 1, 1, 2]);
    }
}
