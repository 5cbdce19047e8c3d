//! Subsequence width selection from a stream prefix.
//!
//! The default selector picks the lag of the strongest significant local
//! maximum of the sample autocorrelation within the configured bounds,
//! falling back to the dominant Fourier period when the autocorrelation shows
//! no significant peak. A fixed width bypasses learning entirely.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::detect::normal_upper_quantile;
use crate::error::{Error, Result};

/// Width selection method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WidthMethod {
    /// Strongest significant autocorrelation peak, FFT fallback.
    #[default]
    AcfPeak,
    /// Dominant Fourier period only.
    FftPeriod,
}

/// Width configuration: learn within bounds or use a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WidthSpec {
    Fixed(usize),
    Learn {
        lower: usize,
        /// Defaults to `d / 20` when absent.
        upper: Option<usize>,
        method: WidthMethod,
    },
}

impl Default for WidthSpec {
    fn default() -> Self {
        WidthSpec::Learn {
            lower: 10,
            upper: None,
            method: WidthMethod::AcfPeak,
        }
    }
}

/// Outcome of width selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnedWidth {
    pub w: usize,
    /// Set when no periodicity was detectable and the lower bound was used.
    pub warning: bool,
    pub source: WidthSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WidthSource {
    AcfPeak,
    FftPeriod,
    LowerBound,
    Override,
}

/// Sample autocorrelation at the given lags (global mean, normalized by c0).
fn autocorrelation(prefix: &[f64], max_lag: usize) -> Vec<f64> {
    let n = prefix.len();
    let mean = prefix.iter().sum::<f64>() / n as f64;
    let c0: f64 = prefix.iter().map(|x| (x - mean) * (x - mean)).sum();
    let mut acf = Vec::with_capacity(max_lag + 1);
    acf.push(1.0);
    for lag in 1..=max_lag {
        if c0 == 0.0 {
            acf.push(0.0);
            continue;
        }
        let mut c = 0.0;
        for t in 0..n - lag {
            c += (prefix[t] - mean) * (prefix[t + lag] - mean);
        }
        acf.push(c / c0);
    }
    acf
}

/// Dominant period from the power spectrum of the demeaned prefix, together
/// with the fraction of one-sided spectral energy in the dominant bin.
fn dominant_fft_period(prefix: &[f64]) -> Option<(usize, f64)> {
    let n = prefix.len();
    if n < 4 {
        return None;
    }
    let mean = prefix.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = prefix.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let mut total = 0.0;
    let mut best_bin = 0;
    let mut best_power = 0.0;
    for (bin, c) in buf.iter().enumerate().take(half + 1).skip(1) {
        let p = c.norm_sqr();
        total += p;
        if p > best_power {
            best_power = p;
            best_bin = bin;
        }
    }
    if best_bin == 0 || total == 0.0 {
        return None;
    }
    let period = (n as f64 / best_bin as f64).round() as usize;
    Some((period, best_power / total))
}

/// Minimum spectral-energy concentration for the FFT fallback to commit to a
/// period; below this the signal is treated as aperiodic.
const FFT_CONCENTRATION_MIN: f64 = 0.2;

/// Learns a subsequence width from the stream prefix within `[lower, upper]`.
///
/// Bounds must satisfy `2 <= lower < upper <= |prefix| / 4`. When no
/// periodicity is detectable the lower bound is returned with the warning
/// flag set.
pub fn learn_subsequence_width(
    prefix: &[f64],
    lower: usize,
    upper: usize,
    method: WidthMethod,
) -> Result<LearnedWidth> {
    if lower < 2 || lower >= upper {
        return Err(Error::state(format!(
            "width bounds must satisfy 2 <= lower < upper, got [{lower}, {upper}]"
        )));
    }
    if upper > prefix.len() / 4 {
        return Err(Error::state(format!(
            "width upper bound {upper} exceeds a quarter of the prefix length {}",
            prefix.len()
        )));
    }
    let n = prefix.len();

    if method == WidthMethod::AcfPeak {
        let acf = autocorrelation(prefix, upper + 1);
        // Significance band adjusted for the number of inspected lags.
        let lags = (upper - lower + 1) as f64;
        let band = normal_upper_quantile(0.005 / lags) / (n as f64).sqrt();
        let mut best: Option<(usize, f64)> = None;
        for lag in lower..=upper {
            let r = acf[lag];
            if r > band && r > acf[lag - 1] && r > acf[lag + 1] {
                match best {
                    Some((_, b)) if r <= b => {}
                    _ => best = Some((lag, r)),
                }
            }
        }
        if let Some((lag, _)) = best {
            return Ok(LearnedWidth {
                w: lag,
                warning: false,
                source: WidthSource::AcfPeak,
            });
        }
    }

    if let Some((period, concentration)) = dominant_fft_period(prefix) {
        if concentration >= FFT_CONCENTRATION_MIN && (lower..=upper).contains(&period) {
            return Ok(LearnedWidth {
                w: period,
                warning: false,
                source: WidthSource::FftPeriod,
            });
        }
    }

    Ok(LearnedWidth {
        w: lower,
        warning: true,
        source: WidthSource::LowerBound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sine_period_is_recovered() {
        let d = 10_000;
        let period = 50.0;
        let prefix: Vec<f64> = (0..d)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / period).sin())
            .collect();
        let learned = learn_subsequence_width(&prefix, 10, 1000, WidthMethod::AcfPeak).unwrap();
        assert!(
            (learned.w as i64 - 50).abs() <= 2,
            "learned width {}",
            learned.w
        );
        assert!(!learned.warning);
    }

    #[test]
    fn sine_period_via_fft_method() {
        let d = 8_000;
        let period = 40.0;
        let prefix: Vec<f64> = (0..d)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / period).sin())
            .collect();
        let learned = learn_subsequence_width(&prefix, 10, 500, WidthMethod::FftPeriod).unwrap();
        assert!((learned.w as i64 - 40).abs() <= 2);
    }

    #[test]
    fn white_noise_falls_back_to_lower_bound() {
        let mut fallbacks = 0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prefix: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
            let learned = learn_subsequence_width(&prefix, 10, 200, WidthMethod::AcfPeak).unwrap();
            if learned.warning {
                assert_eq!(learned.w, 10);
                fallbacks += 1;
            }
        }
        assert!(fallbacks >= 9, "only {fallbacks}/10 noise prefixes fell back");
    }

    #[test]
    fn short_prefix_is_state_error() {
        let prefix = vec![0.0; 100];
        assert!(learn_subsequence_width(&prefix, 10, 500, WidthMethod::AcfPeak).is_err());
    }

    #[test]
    fn degenerate_bounds_are_state_errors() {
        let prefix = vec![0.0; 1000];
        assert!(learn_subsequence_width(&prefix, 1, 50, WidthMethod::AcfPeak).is_err());
        assert!(learn_subsequence_width(&prefix, 50, 50, WidthMethod::AcfPeak).is_err());
    }

    #[test]
    fn acf_of_sine_matches_analytic_form() {
        // Over whole cycles the sample ACF of sin(2*pi*t/p) is approximately
        // cos(2*pi*lag/p) * (n - lag) / n.
        let n = 2000;
        let p = 25.0;
        let omega = 2.0 * std::f64::consts::PI / p;
        let prefix: Vec<f64> = (0..n).map(|t| (omega * t as f64).sin()).collect();
        let acf = autocorrelation(&prefix, 60);
        for lag in [5usize, 10, 25, 40, 50] {
            let want = (omega * lag as f64).cos() * (n - lag) as f64 / n as f64;
            assert!(
                (acf[lag] - want).abs() < 0.01,
                "lag {lag}: {} vs {want}",
                acf[lag]
            );
        }
        assert!(acf[25] > acf[20] && acf[25] > acf[30]);
    }
}
