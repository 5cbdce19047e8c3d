//! Statistical change-point acceptance: a two-sided rank-sum test on the
//! predicted label groups left and right of the profile maximum, run on a
//! stratified resample of fixed size so the decision threshold does not depend
//! on the sliding-window size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::clasp::ClaspProfile;
use crate::error::{Error, Result};

/// Parameters of the significance gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    /// Two-sided significance level.
    pub alpha: f64,
    /// Number of labels resampled (with replacement) before testing.
    pub sample_size: usize,
    /// Seed for the resampling generator.
    pub rng_seed: u64,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-50,
            sample_size: 1000,
            rng_seed: 42,
        }
    }
}

impl SignificanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "significance level must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.sample_size < 2 {
            return Err(Error::config(format!(
                "sample size must be >= 2, got {}",
                self.sample_size
            )));
        }
        Ok(())
    }
}

fn label_counts(labels: &[u8]) -> (f64, f64) {
    let ones = labels.iter().filter(|&&l| l != 0).count();
    ((labels.len() - ones) as f64, ones as f64)
}

/// Rank-sum z statistic for two groups of binary labels, using midranks and
/// the tie-corrected variance. Returns `None` when the variance vanishes
/// (all labels identical).
fn z_from_counts(left_zeros: f64, left_ones: f64, right_zeros: f64, right_ones: f64) -> Option<f64> {
    let n1 = left_zeros + left_ones;
    let n2 = right_zeros + right_ones;
    let n = n1 + n2;
    let t0 = left_zeros + right_zeros;
    let t1 = left_ones + right_ones;
    // Midranks: all zeros share (t0+1)/2, all ones share t0 + (t1+1)/2.
    let rank0 = (t0 + 1.0) / 2.0;
    let rank1 = t0 + (t1 + 1.0) / 2.0;
    let rank_sum = left_zeros * rank0 + left_ones * rank1;
    let mean = n1 * (n + 1.0) / 2.0;
    let tie_term = (t0 * t0 * t0 - t0) + (t1 * t1 * t1 - t1);
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return None;
    }
    Some((rank_sum - mean) / var.sqrt())
}

/// Two-sided normal tail probability for a z statistic.
fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Rank-sum z statistic between two non-empty binary label groups.
pub fn rank_sum_z(left: &[u8], right: &[u8]) -> Result<f64> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::state("rank-sum test requires two non-empty groups".to_string()));
    }
    let (lz, lo) = label_counts(left);
    let (rz, ro) = label_counts(right);
    Ok(z_from_counts(lz, lo, rz, ro).unwrap_or(0.0))
}

/// Two-sided rank-sum p-value from the normal approximation with midranks and
/// tie correction. Zero tie-corrected variance (all labels identical) yields
/// p = 1.
pub fn rank_sum_test(left: &[u8], right: &[u8]) -> Result<f64> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::state("rank-sum test requires two non-empty groups".to_string()));
    }
    let (lz, lo) = label_counts(left);
    let (rz, ro) = label_counts(right);
    Ok(match z_from_counts(lz, lo, rz, ro) {
        None => 1.0,
        Some(z) => two_sided_p(z),
    })
}

/// Upper quantile of the standard normal: the z with upper tail mass `tail`.
/// Solved by bisection on the complementary error function, which stays
/// meaningful far beyond where the CDF itself would round to 1.
pub fn normal_upper_quantile(tail: f64) -> f64 {
    debug_assert!(tail > 0.0 && tail < 0.5);
    let target = 2.0 * tail; // erfc(z / sqrt(2)) = 2 * tail
    let (mut lo, mut hi) = (0.0f64, 50.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if erfc(mid / std::f64::consts::SQRT_2) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Owns the decision threshold and the resampling generator for one segmenter.
#[derive(Debug, Clone)]
pub struct ChangeDetector {
    cfg: SignificanceConfig,
    /// Decision threshold: p < alpha is evaluated as |z| > z_star, which
    /// avoids the tail underflow of tiny p-values.
    z_star: f64,
    rng: ChaCha8Rng,
}

impl ChangeDetector {
    pub fn new(cfg: SignificanceConfig) -> Result<Self> {
        cfg.validate()?;
        let z_star = normal_upper_quantile(cfg.alpha / 2.0);
        Ok(Self {
            cfg,
            z_star,
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
        })
    }

    pub fn config(&self) -> &SignificanceConfig {
        &self.cfg
    }

    pub fn z_threshold(&self) -> f64 {
        self.z_star
    }

    /// Locates the global profile maximum, partitions the predicted labels at
    /// that split, draws a group-stratified resample of `sample_size` labels
    /// with replacement, and runs the rank-sum test on the resampled groups.
    /// Returns the score index of the split when the difference is
    /// significant.
    pub fn has_significant_cp(&mut self, profile: &ClaspProfile, y_pred: &[u8]) -> Option<usize> {
        let idx = profile.argmax()?;
        let split = profile.split_slice_index(idx);
        debug_assert!(split < y_pred.len());
        let (left, right) = y_pred.split_at(split);

        // Group quotas proportional to the original sizes, rounded half-up,
        // with both groups kept non-empty.
        let total = y_pred.len() as f64;
        let mut left_quota =
            (self.cfg.sample_size as f64 * left.len() as f64 / total).round() as usize;
        left_quota = left_quota.clamp(1, self.cfg.sample_size - 1);
        let right_quota = self.cfg.sample_size - left_quota;

        let mut lz = 0.0;
        let mut lo = 0.0;
        for _ in 0..left_quota {
            if left[self.rng.random_range(0..left.len())] == 0 {
                lz += 1.0;
            } else {
                lo += 1.0;
            }
        }
        let mut rz = 0.0;
        let mut ro = 0.0;
        for _ in 0..right_quota {
            if right[self.rng.random_range(0..right.len())] == 0 {
                rz += 1.0;
            } else {
                ro += 1.0;
            }
        }

        match z_from_counts(lz, lo, rz, ro) {
            Some(z) if z.abs() > self.z_star => Some(idx),
            _ => None,
        }
    }
}
