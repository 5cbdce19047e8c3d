//! Exact streaming k-nearest-neighbour maintenance over window subsequences.
//!
//! For every width-`w` subsequence in the sliding window, the engine keeps the
//! `k` most correlated other subsequences under Pearson correlation. Each new
//! observation is absorbed in O(k*d): the correlations between the newest
//! subsequence and all others are obtained from rolling (w-1)-length dot
//! products updated by a two-term recurrence, then (a) the newest subsequence
//! gets its own neighbour row, (b) all stored neighbour offsets shift with the
//! window, and (c) existing rows adopt the newest subsequence whenever it beats
//! their weakest neighbour.

use std::collections::VecDeque;

use crate::buffer::WindowBuffer;
use crate::error::{Error, Result};

/// Correlation stored in padded neighbour slots (rows with fewer than `k`
/// admissible neighbours).
pub const PAD_CORR: f64 = f64::NEG_INFINITY;

/// Sentinel correlation for pairs involving a constant subsequence. Constant
/// subsequences never become neighbours of anything.
pub const CONSTANT_CORR: f64 = -1.0;

/// Pearson correlation between two width-`w` subsequences, computed from their
/// dot product `q` and per-subsequence moments.
///
/// Returns [`CONSTANT_CORR`] when either side has zero variance; otherwise the
/// result is clamped into `[-1, 1]`.
pub fn pearson(q: f64, mu_i: f64, mu_j: f64, sigma_i: f64, sigma_j: f64, w: usize) -> f64 {
    if sigma_i == 0.0 || sigma_j == 0.0 {
        return CONSTANT_CORR;
    }
    let w = w as f64;
    let c = (q - w * mu_i * mu_j) / (w * sigma_i * sigma_j);
    c.clamp(-1.0, 1.0)
}

/// Treats a subsequence as constant when its variance is negligible relative
/// to its second moment, which absorbs the rounding noise of the differenced
/// running sums on genuinely constant data.
fn is_constant(sigma: f64, mean: f64) -> bool {
    sigma * sigma <= 1e-24 * (mean * mean).max(1.0)
}

/// Flat ring of per-subsequence neighbour rows: `k` offsets and `k`
/// correlations per row, correlations sorted descending. Offsets are logical
/// window offsets and may drop to zero or below once the neighbour leaves the
/// window; such entries are kept and only ever consumed as class-zero labels.
#[derive(Debug, Clone)]
struct KnnRows {
    k: usize,
    offsets: VecDeque<i64>,
    corrs: VecDeque<f64>,
}

impl KnnRows {
    fn new(k: usize, capacity_rows: usize) -> Self {
        Self {
            k,
            offsets: VecDeque::with_capacity((capacity_rows + 1) * k),
            corrs: VecDeque::with_capacity((capacity_rows + 1) * k),
        }
    }

    fn row_count(&self) -> usize {
        self.offsets.len() / self.k
    }

    fn push_padded(&mut self) {
        for _ in 0..self.k {
            self.offsets.push_back(0);
            self.corrs.push_back(PAD_CORR);
        }
    }

    /// Appends a row from `(offset, corr)` entries already sorted descending;
    /// pads the remainder.
    fn push_row(&mut self, entries: &[(i64, f64)]) {
        debug_assert!(entries.len() <= self.k);
        for &(off, c) in entries {
            self.offsets.push_back(off);
            self.corrs.push_back(c);
        }
        for _ in entries.len()..self.k {
            self.offsets.push_back(0);
            self.corrs.push_back(PAD_CORR);
        }
    }

    fn pop_front_row(&mut self) {
        for _ in 0..self.k {
            self.offsets.pop_front();
            self.corrs.pop_front();
        }
    }

    fn decrement_offsets(&mut self) {
        for o in self.offsets.iter_mut() {
            *o -= 1;
        }
    }

    fn weakest(&self, row: usize) -> f64 {
        self.corrs[(row - 1) * self.k + self.k - 1]
    }

    /// Inserts `(off, c)` into `row` keeping correlations sorted descending,
    /// expelling the weakest entry. Among equal correlations the newcomer goes
    /// last, so adoption replaces an equally-correlated incumbent tail.
    fn adopt(&mut self, row: usize, off: i64, c: f64) {
        let base = (row - 1) * self.k;
        let mut pos = self.k - 1;
        while pos > 0 && self.corrs[base + pos - 1] < c {
            self.corrs[base + pos] = self.corrs[base + pos - 1];
            self.offsets[base + pos] = self.offsets[base + pos - 1];
            pos -= 1;
        }
        self.corrs[base + pos] = c;
        self.offsets[base + pos] = off;
    }

    fn row_entries(&self, row: usize) -> Vec<(i64, f64)> {
        let base = (row - 1) * self.k;
        (0..self.k)
            .map(|s| (self.offsets[base + s], self.corrs[base + s]))
            .collect()
    }

    fn state_bytes(&self) -> usize {
        self.offsets.capacity() * std::mem::size_of::<i64>()
            + self.corrs.capacity() * std::mem::size_of::<f64>()
    }
}

/// Streaming k-NN state for one sliding window.
pub struct KnnEngine {
    w: usize,
    k: usize,
    exclusion: usize,
    /// `q[j-1]` is the (w-1)-length dot product between the prefix of the
    /// subsequence at offset `j` and the prefix of the newest subsequence.
    q: VecDeque<f64>,
    rows: KnnRows,
    corr: Vec<f64>,
    top_scratch: Vec<(i64, f64)>,
    updates_since_anchor: usize,
}

impl KnnEngine {
    pub fn new(d: usize, w: usize, k: usize) -> Result<Self> {
        if w < 2 {
            return Err(Error::config(format!("subsequence width must be >= 2, got {w}")));
        }
        if k < 1 {
            return Err(Error::config("neighbour count k must be >= 1".to_string()));
        }
        if d < w + k {
            return Err(Error::config(format!(
                "window size {d} must be at least w + k = {}",
                w + k
            )));
        }
        let rows_cap = d - w + 1;
        Ok(Self {
            w,
            k,
            exclusion: (3 * w).div_ceil(2),
            q: VecDeque::with_capacity(rows_cap + 1),
            rows: KnnRows::new(k, rows_cap),
            corr: Vec::with_capacity(rows_cap),
            top_scratch: Vec::with_capacity(rows_cap),
            updates_since_anchor: 0,
        })
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn neighbours(&self) -> usize {
        self.k
    }

    /// Minimum offset distance to an admissible neighbour: `ceil(1.5 * w)`.
    pub fn exclusion_radius(&self) -> usize {
        self.exclusion
    }

    /// Number of neighbour rows currently maintained (0 until the window
    /// holds at least `w + k` values, then equal to the subsequence count).
    pub fn row_count(&self) -> usize {
        self.rows.row_count()
    }

    /// Neighbour `(offset, correlation)` entries of the row at window offset
    /// `j` (1-based), sorted by descending correlation.
    pub fn row_entries(&self, j: usize) -> Vec<(i64, f64)> {
        self.rows.row_entries(j)
    }

    /// Correlations between every subsequence and the newest one, as computed
    /// by the latest update. Indexed by window offset minus one.
    pub fn correlations(&self) -> &[f64] {
        &self.corr
    }

    /// Absorbs the observation just pushed into `buf`. `evicted` must be the
    /// flag returned by that push.
    pub fn update(&mut self, buf: &WindowBuffer, evicted: bool) {
        let win = buf.window();
        let stats = buf.stats();
        let len = win.len();
        let w = self.w;
        if len < w {
            return;
        }
        let s_cnt = len - w + 1;

        if evicted {
            // The subsequence at offset 1 left together with its first value.
            if self.rows.row_count() > 0 {
                self.rows.pop_front_row();
            }
            self.rows.decrement_offsets();
        } else {
            // Window grew: the oldest subsequence needs a fresh prefix dot
            // product against the newest prefix. Runs only during the first
            // `d` observations.
            let mut dot = 0.0;
            for t in 0..w - 1 {
                dot += win.get(1 + t) * win.get(s_cnt + t);
            }
            self.q.push_front(dot);
        }
        debug_assert_eq!(self.q.len(), s_cnt);

        // Extend the prefix dots to full w-length products against the newest
        // subsequence.
        let newest = win.get(len);
        for j in 1..=s_cnt {
            self.q[j - 1] += win.get(j + w - 1) * newest;
        }

        if len >= w + self.k {
            let mu_n = stats.mean_at(s_cnt);
            let sd_n = stats.std_at(s_cnt);
            let newest_constant = is_constant(sd_n, mu_n);

            self.corr.clear();
            for j in 1..=s_cnt {
                let mu = stats.mean_at(j);
                let sd = stats.std_at(j);
                let c = if is_constant(sd, mu) || newest_constant {
                    pearson(self.q[j - 1], mu, mu_n, 0.0, 0.0, w)
                } else {
                    pearson(self.q[j - 1], mu, mu_n, sd, sd_n, w)
                };
                self.corr.push(c);
            }

            // First active step: older subsequences never had rows computed,
            // so they start padded and fill up through adoption.
            if self.rows.row_count() == 0 && s_cnt > 1 {
                for _ in 1..s_cnt {
                    self.rows.push_padded();
                }
            }
            debug_assert_eq!(self.rows.row_count(), s_cnt - 1);

            // (c) Existing rows adopt the newest subsequence when it is at
            // least as correlated as their weakest neighbour.
            if !newest_constant && s_cnt > self.exclusion {
                for j in 1..=s_cnt - self.exclusion {
                    let c = self.corr[j - 1];
                    if self.rows.weakest(j) <= c {
                        self.rows.adopt(j, s_cnt as i64, c);
                    }
                }
            }

            // (a) Row for the newest subsequence: k best admissible offsets,
            // ties preferring the smaller (older) offset.
            self.top_scratch.clear();
            if s_cnt > self.exclusion {
                for j in 1..=s_cnt - self.exclusion {
                    let mu = stats.mean_at(j);
                    let sd = stats.std_at(j);
                    if !is_constant(sd, mu) {
                        self.top_scratch.push((j as i64, self.corr[j - 1]));
                    }
                }
            }
            self.top_scratch
                .sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            self.top_scratch.truncate(self.k);
            let entries = std::mem::take(&mut self.top_scratch);
            self.rows.push_row(&entries);
            self.top_scratch = entries;
        }

        // Restore (w-1)-length prefix dots for the next update.
        let head = win.get(s_cnt);
        for j in 1..=s_cnt {
            self.q[j - 1] -= win.get(j) * head;
        }

        // Rebuild the dot products from raw values periodically so rounding
        // drift stays bounded by the window, mirroring the running-sum anchor.
        self.updates_since_anchor += 1;
        if self.updates_since_anchor >= win.capacity() {
            self.updates_since_anchor = 0;
            for j in 1..=s_cnt {
                let mut dot = 0.0;
                for t in 1..w {
                    dot += win.get(j + t) * win.get(s_cnt + t);
                }
                self.q[j - 1] = dot;
            }
        }
    }

    /// Copies the neighbour offsets of rows `cp_l..=row_count` into `out`,
    /// translated to slice-relative indices (`offset - cp_l + 1`). Entries at
    /// or below zero point before the scored slice and read as class zero.
    pub fn fill_slice_offsets(&self, cp_l: usize, out: &mut Vec<i64>) {
        out.clear();
        let rows = self.rows.row_count();
        let shift = cp_l as i64 - 1;
        for j in cp_l..=rows {
            let base = (j - 1) * self.k;
            for s in 0..self.k {
                out.push(self.rows.offsets[base + s] - shift);
            }
        }
    }

    /// Bytes held by internal buffers (capacity, not length).
    pub fn state_bytes(&self) -> usize {
        self.q.capacity() * std::mem::size_of::<f64>()
            + self.rows.state_bytes()
            + self.corr.capacity() * std::mem::size_of::<f64>()
            + self.top_scratch.capacity() * std::mem::size_of::<(i64, f64)>()
    }
}
