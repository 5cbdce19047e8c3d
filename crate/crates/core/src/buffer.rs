//! Sliding window over the latest `d` observations, plus differenced
//! cumulative running sums that answer subsequence mean/std queries in O(1).

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Fixed-capacity buffer of the latest `d` measurements.
///
/// Logical offsets are 1-based: offset 1 is the oldest value still in the
/// window and offset `len` the newest. Offset `i` corresponds to the absolute
/// stream timestamp `total_ingested - len + i`.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    capacity: usize,
    values: VecDeque<f64>,
    total_ingested: u64,
}

impl SlidingWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            values: VecDeque::with_capacity(capacity + 1),
            total_ingested: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Count of values ingested since creation; equals the absolute stream
    /// timestamp (1-based) of the newest value.
    pub fn total_ingested(&self) -> u64 {
        self.total_ingested
    }

    /// Value at logical offset `i` (1-based).
    pub fn get(&self, i: usize) -> f64 {
        self.values[i - 1]
    }

    /// Absolute stream timestamp of the value at logical offset `i`.
    pub fn timestamp_of(&self, i: usize) -> u64 {
        self.total_ingested - self.len() as u64 + i as u64
    }

    /// Copies the current window contents in logical order.
    pub fn to_vec(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }

    fn push_raw(&mut self, x: f64) -> bool {
        self.values.push_back(x);
        self.total_ingested += 1;
        if self.values.len() > self.capacity {
            self.values.pop_front();
            true
        } else {
            false
        }
    }

    fn state_bytes(&self) -> usize {
        self.values.capacity() * std::mem::size_of::<f64>()
    }
}

/// Cumulative running sums (values and squares) aligned to the window.
///
/// Entry `r[i]` holds the running sum up to logical offset `i`, with `r[0]`
/// anchored just before the window start. Sums keep growing with the stream;
/// only differences of entries are ever used, so window sums stay exact up to
/// the accumulated rounding drift. To bound that drift the sums are re-anchored
/// (recomputed from the raw window) every `capacity` pushes.
#[derive(Debug, Clone)]
pub struct RunningStats {
    w: usize,
    r: VecDeque<f64>,
    r2: VecDeque<f64>,
    pushes_since_anchor: usize,
}

impl RunningStats {
    fn new(w: usize, capacity: usize) -> Self {
        let mut r = VecDeque::with_capacity(capacity + 2);
        let mut r2 = VecDeque::with_capacity(capacity + 2);
        r.push_back(0.0);
        r2.push_back(0.0);
        Self {
            w,
            r,
            r2,
            pushes_since_anchor: 0,
        }
    }

    /// Subsequence width used by mean/std queries.
    pub fn width(&self) -> usize {
        self.w
    }

    fn push(&mut self, x: f64, evicted: bool) {
        self.r.push_back(self.r.back().unwrap() + x);
        self.r2.push_back(self.r2.back().unwrap() + x * x);
        if evicted {
            self.r.pop_front();
            self.r2.pop_front();
        }
    }

    fn reanchor(&mut self, window: &SlidingWindow) {
        self.r.clear();
        self.r2.clear();
        self.r.push_back(0.0);
        self.r2.push_back(0.0);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for i in 1..=window.len() {
            let x = window.get(i);
            sum += x;
            sum2 += x * x;
            self.r.push_back(sum);
            self.r2.push_back(sum2);
        }
    }

    /// Mean of the width-`w` subsequence starting at logical offset `i`.
    pub fn mean_at(&self, i: usize) -> f64 {
        (self.r[i + self.w - 1] - self.r[i - 1]) / self.w as f64
    }

    /// Standard deviation of the width-`w` subsequence starting at offset `i`.
    /// The variance expression is clamped at zero before the square root.
    pub fn std_at(&self, i: usize) -> f64 {
        let mu = self.mean_at(i);
        let sq = (self.r2[i + self.w - 1] - self.r2[i - 1]) / self.w as f64;
        (sq - mu * mu).max(0.0).sqrt()
    }

    fn state_bytes(&self) -> usize {
        (self.r.capacity() + self.r2.capacity()) * std::mem::size_of::<f64>()
    }

    #[cfg(test)]
    fn newest_sum(&self) -> f64 {
        *self.r.back().unwrap()
    }
}

/// A sliding window paired with its running sums.
#[derive(Debug, Clone)]
pub struct WindowBuffer {
    window: SlidingWindow,
    stats: RunningStats,
}

impl WindowBuffer {
    pub fn new(capacity: usize, w: usize) -> Result<Self> {
        if w < 2 {
            return Err(Error::config(format!("subsequence width must be >= 2, got {w}")));
        }
        if capacity < w {
            return Err(Error::config(format!(
                "window capacity {capacity} is smaller than subsequence width {w}"
            )));
        }
        Ok(Self {
            window: SlidingWindow::new(capacity),
            stats: RunningStats::new(w, capacity),
        })
    }

    /// Appends one observation, expelling the oldest when full.
    /// Returns `true` if a value was evicted.
    pub fn push(&mut self, x: f64) -> Result<bool> {
        if !x.is_finite() {
            return Err(Error::input(format!("non-finite measurement {x}")));
        }
        let evicted = self.window.push_raw(x);
        self.stats.push(x, evicted);
        self.stats.pushes_since_anchor += 1;
        if self.stats.pushes_since_anchor >= self.window.capacity {
            self.stats.reanchor(&self.window);
            self.stats.pushes_since_anchor = 0;
        }
        Ok(evicted)
    }

    pub fn window(&self) -> &SlidingWindow {
        &self.window
    }

    pub fn stats(&self) -> &RunningStats {
        &self.stats
    }

    /// Number of complete width-`w` subsequences currently in the window.
    pub fn subsequence_count(&self) -> usize {
        (self.window.len() + 1).saturating_sub(self.stats.w)
    }

    /// Means and standard deviations for every subsequence offset.
    pub fn means_stds(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let count = self.subsequence_count();
        if count == 0 {
            return Err(Error::state(format!(
                "window holds {} values, need at least w = {}",
                self.window.len(),
                self.stats.w
            )));
        }
        let mut means = Vec::with_capacity(count);
        let mut stds = Vec::with_capacity(count);
        for i in 1..=count {
            means.push(self.stats.mean_at(i));
            stds.push(self.stats.std_at(i));
        }
        Ok((means, stds))
    }

    /// Bytes held by internal buffers (capacity, not length).
    pub fn state_bytes(&self) -> usize {
        self.window.state_bytes() + self.stats.state_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_mean_std(values: &[f64], i: usize, w: usize) -> (f64, f64) {
        let seg = &values[i - 1..i - 1 + w];
        let mean = seg.iter().sum::<f64>() / w as f64;
        let var = seg.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w as f64;
        (mean, var.sqrt())
    }

    #[test]
    fn push_builds_running_sums() {
        let mut buf = WindowBuffer::new(3, 2).unwrap();
        for x in [1.0, 2.0, 3.0] {
            buf.push(x).unwrap();
        }
        assert_eq!(buf.window().to_vec(), vec![1.0, 2.0, 3.0]);
        assert_eq!(buf.stats().newest_sum(), 6.0);
    }

    #[test]
    fn push_beyond_capacity_evicts_and_continues_sum() {
        let mut buf = WindowBuffer::new(3, 2).unwrap();
        for x in [1.0, 2.0, 3.0] {
            buf.push(x).unwrap();
        }
        let evicted = buf.push(4.0).unwrap();
        assert!(evicted);
        assert_eq!(buf.window().to_vec(), vec![2.0, 3.0, 4.0]);
        assert_eq!(buf.stats().newest_sum(), 10.0);
        assert_eq!(buf.window().total_ingested(), 4);
    }

    #[test]
    fn non_finite_push_is_rejected() {
        let mut buf = WindowBuffer::new(4, 2).unwrap();
        assert!(matches!(buf.push(f64::NAN), Err(Error::Input(_))));
        assert!(matches!(buf.push(f64::INFINITY), Err(Error::Input(_))));
        assert_eq!(buf.window().len(), 0);
    }

    #[test]
    fn means_stds_match_hand_case() {
        let mut buf = WindowBuffer::new(8, 2).unwrap();
        for x in [1.0, 2.0, 3.0, 4.0] {
            buf.push(x).unwrap();
        }
        let (means, stds) = buf.means_stds().unwrap();
        assert_eq!(means, vec![1.5, 2.5, 3.5]);
        for s in stds {
            assert!((s - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_window_has_zero_std() {
        let mut buf = WindowBuffer::new(4, 2).unwrap();
        for _ in 0..3 {
            buf.push(5.0).unwrap();
        }
        let (_, stds) = buf.means_stds().unwrap();
        assert_eq!(stds, vec![0.0, 0.0]);
    }

    #[test]
    fn means_stds_requires_full_subsequence() {
        let mut buf = WindowBuffer::new(8, 4).unwrap();
        buf.push(1.0).unwrap();
        assert!(matches!(buf.means_stds(), Err(Error::State(_))));
    }

    #[test]
    fn random_stream_matches_direct_computation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let w = 10;
        let mut buf = WindowBuffer::new(64, w).unwrap();
        for step in 0..200 {
            buf.push(rng.random_range(-100.0..100.0)).unwrap();
            if step < w - 1 {
                continue;
            }
            let values = buf.window().to_vec();
            let (means, stds) = buf.means_stds().unwrap();
            for i in 1..=buf.subsequence_count() {
                let (dm, ds) = direct_mean_std(&values, i, w);
                let scale = dm.abs().max(ds.abs()).max(1.0);
                assert!((means[i - 1] - dm).abs() <= 1e-8 * scale);
                assert!((stds[i - 1] - ds).abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn memory_stays_bounded() {
        let mut buf = WindowBuffer::new(32, 4).unwrap();
        for i in 0..40 {
            buf.push(i as f64).unwrap();
        }
        let bytes = buf.state_bytes();
        for i in 0..4000 {
            buf.push(i as f64).unwrap();
        }
        assert_eq!(buf.state_bytes(), bytes);
    }
}
