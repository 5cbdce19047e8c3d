//! Classification score profile: incremental self-supervised cross-validation
//! of the k-NN classifier over every hypothetical split of the scored slice.
//!
//! The slice is the unsegmented suffix of the window, one row per subsequence,
//! each row holding `k` neighbour indices translated to slice-relative
//! positions (entries at or below zero point before the slice and permanently
//! read as class zero). Consecutive splits differ by a single ground-truth
//! label flip, so the full profile costs O(k*m) via reverse-neighbour lists
//! instead of O(k*m^2) from-scratch relabelling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification score computed from the confusion matrix at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ScoreKind {
    /// Mean of per-class F1 scores.
    #[default]
    MacroF1,
    /// Mean of per-class recalls (balanced accuracy).
    MacroAccuracy,
}

impl ScoreKind {
    pub fn apply(self, conf: &ConfusionMatrix) -> f64 {
        match self {
            ScoreKind::MacroF1 => conf.macro_f1_unchecked(),
            ScoreKind::MacroAccuracy => conf.macro_accuracy_unchecked(),
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" | "macro-f1" => Ok(ScoreKind::MacroF1),
            "accuracy" | "macro-accuracy" => Ok(ScoreKind::MacroAccuracy),
            other => Err(Error::config(format!("unknown score kind '{other}'"))),
        }
    }
}

/// 2x2 confusion matrix of label counts, indexed by (true, predicted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    cells: [u64; 4],
}

impl ConfusionMatrix {
    pub fn from_cells(t0p0: u64, t0p1: u64, t1p0: u64, t1p1: u64) -> Self {
        Self {
            cells: [t0p0, t0p1, t1p0, t1p1],
        }
    }

    #[inline]
    pub fn cell(&self, truth: u8, pred: u8) -> u64 {
        self.cells[(truth as usize) * 2 + pred as usize]
    }

    #[inline]
    fn add(&mut self, truth: u8, pred: u8, delta: i64) {
        let cell = &mut self.cells[(truth as usize) * 2 + pred as usize];
        *cell = cell.wrapping_add(delta as u64);
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    fn f1_for(&self, class: u8) -> f64 {
        let other = 1 - class;
        let tp = self.cell(class, class);
        let fp = self.cell(other, class);
        let fn_ = self.cell(class, other);
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    }

    fn recall_for(&self, class: u8) -> f64 {
        let tp = self.cell(class, class);
        let denom = tp + self.cell(class, 1 - class);
        if denom == 0 {
            0.0
        } else {
            tp as f64 / denom as f64
        }
    }

    fn macro_f1_unchecked(&self) -> f64 {
        (self.f1_for(0) + self.f1_for(1)) / 2.0
    }

    fn macro_accuracy_unchecked(&self) -> f64 {
        (self.recall_for(0) + self.recall_for(1)) / 2.0
    }
}

/// Macro F1: mean of per-class F1, where a class with an empty
/// precision/recall denominator contributes zero.
pub fn macro_f1(conf: &ConfusionMatrix) -> Result<f64> {
    if conf.total() == 0 {
        return Err(Error::state("empty confusion matrix".to_string()));
    }
    Ok(conf.macro_f1_unchecked())
}

/// Macro accuracy: mean of per-class recalls, zero on an empty class.
pub fn macro_accuracy(conf: &ConfusionMatrix) -> Result<f64> {
    if conf.total() == 0 {
        return Err(Error::state("empty confusion matrix".to_string()));
    }
    Ok(conf.macro_accuracy_unchecked())
}

/// Cross-validation scores annotating the scored slice, one per admissible
/// split `i` in `[w+1, m-w-1]` (slice-relative, 1-based).
#[derive(Debug, Clone, Default)]
pub struct ClaspProfile {
    pub scores: Vec<f64>,
    /// Window offset of the first scored subsequence (the last change point).
    pub base_offset: usize,
    pub width: usize,
}

impl ClaspProfile {
    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    /// Index of the highest score; ties resolve to the smallest index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in self.scores.iter().enumerate() {
            match best {
                Some((_, b)) if s <= b => {}
                _ => best = Some((i, s)),
            }
        }
        best.map(|(i, _)| i)
    }

    /// Slice-relative split position for score index `idx`.
    pub fn split_slice_index(&self, idx: usize) -> usize {
        self.width + 1 + idx
    }

    /// Window offset of the split for score index `idx`.
    pub fn split_window_offset(&self, idx: usize) -> usize {
        self.base_offset + self.width + idx
    }
}

/// Labels, neighbour label counts, reverse-neighbour lists and the confusion
/// matrix for one profile computation. Reusable across calls; buffers are
/// cleared, not reallocated.
#[derive(Debug, Default)]
pub struct CrossValState {
    y_true: Vec<u8>,
    y_pred: Vec<u8>,
    zero_counts: Vec<u32>,
    rnn_starts: Vec<u32>,
    rnn_items: Vec<u32>,
    rnn_fill: Vec<u32>,
    conf: ConfusionMatrix,
    count_updates: u64,
}

impl CrossValState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Predicted labels after the most recent profile computation.
    pub fn y_pred(&self) -> &[u8] {
        &self.y_pred
    }

    pub fn confusion(&self) -> &ConfusionMatrix {
        &self.conf
    }

    /// Total neighbour-count updates performed by the last profile loop;
    /// bounded by the summed reverse-neighbour list length.
    pub fn count_updates(&self) -> u64 {
        self.count_updates
    }

    pub fn reverse_nn_len(&self) -> usize {
        self.rnn_items.len()
    }

    pub fn state_bytes(&self) -> usize {
        self.y_true.capacity()
            + self.y_pred.capacity()
            + self.zero_counts.capacity() * 4
            + self.rnn_starts.capacity() * 4
            + self.rnn_items.capacity() * 4
            + self.rnn_fill.capacity() * 4
    }

    /// Initializes labels for the all-ones split: every row starts in class 1,
    /// predictions follow the neighbour majority where out-of-slice neighbours
    /// count as zeros, and the confusion matrix starts as m true-1 rows
    /// corrected for rows whose initial majority is zero.
    pub fn init_labels(&mut self, slice: &[i64], m: usize, k: usize) -> Result<()> {
        if m == 0 {
            return Err(Error::state("empty k-NN slice".to_string()));
        }
        debug_assert_eq!(slice.len(), m * k);

        self.y_true.clear();
        self.y_true.resize(m, 1);
        self.y_pred.clear();
        self.zero_counts.clear();
        self.conf = ConfusionMatrix::default();
        self.count_updates = 0;

        for r in 0..m {
            let mut zeros = 0u32;
            for s in 0..k {
                if slice[r * k + s] <= 0 {
                    zeros += 1;
                }
            }
            self.zero_counts.push(zeros);
            let pred = if 2 * zeros as usize >= k { 0 } else { 1 };
            self.y_pred.push(pred);
            self.conf.add(1, pred, 1);
        }

        // Reverse-neighbour lists in CSR form: for each in-slice target, the
        // rows that list it among their neighbours.
        self.rnn_starts.clear();
        self.rnn_starts.resize(m + 1, 0);
        for &o in slice {
            if o >= 1 {
                self.rnn_starts[o as usize] += 1;
            }
        }
        for t in 0..m {
            let prev = self.rnn_starts[t];
            self.rnn_starts[t + 1] += prev;
        }
        let total = self.rnn_starts[m] as usize;
        self.rnn_items.clear();
        self.rnn_items.resize(total, 0);
        self.rnn_fill.clear();
        self.rnn_fill.extend_from_slice(&self.rnn_starts[..m]);
        for r in 0..m {
            for s in 0..k {
                let o = slice[r * k + s];
                if o >= 1 {
                    let slot = &mut self.rnn_fill[o as usize - 1];
                    self.rnn_items[*slot as usize] = r as u32 + 1;
                    *slot += 1;
                }
            }
        }
        Ok(())
    }

    fn rnn_of(&self, target: usize) -> std::ops::Range<usize> {
        self.rnn_starts[target - 1] as usize..self.rnn_starts[target] as usize
    }
}

/// Computes the full profile for the given slice into `profile`, leaving the
/// final label configuration in `state`. `slice` holds `k` slice-relative
/// neighbour indices per row, row-major. An empty profile (without error)
/// signals that the slice is too short to admit any split.
pub fn cross_val_scores_into(
    slice: &[i64],
    k: usize,
    w: usize,
    score: ScoreKind,
    base_offset: usize,
    state: &mut CrossValState,
    profile: &mut ClaspProfile,
) -> Result<()> {
    if k == 0 || slice.len() % k != 0 {
        return Err(Error::state(format!(
            "slice length {} is not a multiple of k = {k}",
            slice.len()
        )));
    }
    let m = slice.len() / k;
    profile.scores.clear();
    profile.base_offset = base_offset;
    profile.width = w;
    if m < 2 * w + 2 {
        return Ok(());
    }
    state.init_labels(slice, m, k)?;

    for i in w + 1..=m - w - 1 {
        let r = i - w;
        // The flipped row's own ground-truth move.
        let pred = state.y_pred[r - 1];
        state.conf.add(1, pred, -1);
        state.conf.add(0, pred, 1);
        state.y_true[r - 1] = 0;

        // Re-predict every row that has r among its neighbours.
        let range = state.rnn_of(r);
        for idx_pos in range {
            let idx = state.rnn_items[idx_pos] as usize;
            state.zero_counts[idx - 1] += 1;
            state.count_updates += 1;
            let zeros = state.zero_counts[idx - 1] as usize;
            let new_pred = if 2 * zeros >= k { 0 } else { 1 };
            let old_pred = state.y_pred[idx - 1];
            if new_pred != old_pred {
                let truth = state.y_true[idx - 1];
                state.conf.add(truth, old_pred, -1);
                state.conf.add(truth, new_pred, 1);
                state.y_pred[idx - 1] = new_pred;
            }
        }

        profile.scores.push(score.apply(&state.conf));
    }
    Ok(())
}

/// Convenience wrapper returning a fresh profile and the final predicted
/// labels.
pub fn cross_val_scores(
    slice: &[i64],
    k: usize,
    w: usize,
    score: ScoreKind,
) -> Result<(ClaspProfile, Vec<u8>)> {
    let mut state = CrossValState::new();
    let mut profile = ClaspProfile::default();
    cross_val_scores_into(slice, k, w, score, 1, &mut state, &mut profile)?;
    Ok((profile, state.y_pred.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// From-scratch relabelling oracle: for every split, rebuild labels,
    /// majorities and the confusion matrix directly.
    fn naive_profile(slice: &[i64], k: usize, w: usize, score: ScoreKind) -> Vec<f64> {
        let m = slice.len() / k;
        if m < 2 * w + 2 {
            return Vec::new();
        }
        let mut scores = Vec::new();
        for i in w + 1..=m - w - 1 {
            let boundary = (i - w) as i64;
            let mut conf = ConfusionMatrix::default();
            for r in 0..m {
                let mut zeros = 0;
                for s in 0..k {
                    if slice[r * k + s] <= boundary {
                        zeros += 1;
                    }
                }
                let pred = if 2 * zeros >= k { 0 } else { 1 };
                let truth = u8::from(r as i64 + 1 > boundary);
                conf.add(truth, pred, 1);
            }
            scores.push(score.apply(&conf));
        }
        scores
    }

    fn random_slice(rng: &mut ChaCha8Rng, m: usize, k: usize) -> Vec<i64> {
        let mut slice = Vec::with_capacity(m * k);
        for _ in 0..m {
            if rng.random_ratio(1, 10) {
                // Padded row.
                for _ in 0..k {
                    slice.push(rng.random_range(-3..=0));
                }
            } else {
                for _ in 0..k {
                    slice.push(rng.random_range(-20..=m as i64));
                }
            }
        }
        slice
    }

    #[test]
    fn init_all_in_slice_neighbours() {
        let k = 3;
        let m = 5;
        let slice: Vec<i64> = (0..m * k).map(|x| (x % m) as i64 + 1).collect();
        let mut state = CrossValState::new();
        state.init_labels(&slice, m, k).unwrap();
        assert!(state.zero_counts.iter().all(|&z| z == 0));
        assert_eq!(state.confusion().cell(1, 1), m as u64);
        assert_eq!(state.confusion().total(), m as u64);
        assert_eq!(state.reverse_nn_len(), m * k);
    }

    #[test]
    fn init_row_with_all_out_of_range_neighbours_predicts_zero() {
        let k = 3;
        let slice: Vec<i64> = vec![2, 3, 2, /* row 2: */ 0, -1, -4, /* row 3: */ 1, 2, 1];
        let mut state = CrossValState::new();
        state.init_labels(&slice, 3, k).unwrap();
        assert_eq!(state.y_pred()[1], 0);
        assert_eq!(state.confusion().cell(1, 0), 1);
        assert_eq!(state.confusion().cell(1, 1), 2);
    }

    #[test]
    fn init_single_row() {
        let mut state = CrossValState::new();
        state.init_labels(&[1, 1], 1, 2).unwrap();
        assert_eq!(state.confusion().total(), 1);
    }

    #[test]
    fn init_empty_slice_is_state_error() {
        let mut state = CrossValState::new();
        assert!(state.init_labels(&[], 0, 3).is_err());
    }

    #[test]
    fn short_slice_yields_empty_profile() {
        let k = 2;
        let w = 4;
        let m = 2 * w + 1; // one row short of admitting a split
        let slice = vec![1i64; m * k];
        let (profile, _) = cross_val_scores(&slice, k, w, ScoreKind::MacroF1).unwrap();
        assert!(profile.is_empty());
    }

    #[test]
    fn incremental_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..40 {
            let k = rng.random_range(1..=4);
            let w = rng.random_range(2..=6);
            let m = rng.random_range(2 * w + 2..=120);
            let slice = random_slice(&mut rng, m, k);
            let score = if case % 2 == 0 {
                ScoreKind::MacroF1
            } else {
                ScoreKind::MacroAccuracy
            };
            let (profile, _) = cross_val_scores(&slice, k, w, score).unwrap();
            let want = naive_profile(&slice, k, w, score);
            assert_eq!(profile.len(), want.len());
            for (got, want) in profile.scores.iter().zip(&want) {
                assert!((got - want).abs() < 1e-12, "case {case}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn work_accounting_stays_within_reverse_nn_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (k, w, m) = (3, 4, 80);
        let slice = random_slice(&mut rng, m, k);
        let mut state = CrossValState::new();
        let mut profile = ClaspProfile::default();
        cross_val_scores_into(&slice, k, w, ScoreKind::MacroF1, 1, &mut state, &mut profile)
            .unwrap();
        assert!(state.count_updates() <= (k * m) as u64);
        assert!(state.reverse_nn_len() <= k * m);
        // Conf cells always sum to m.
        assert_eq!(state.confusion().total(), m as u64);
        // Scores are valid probabilities.
        assert!(profile.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn macro_f1_hand_case() {
        // true 0: pred0=3, pred1=1; true 1: pred0=2, pred1=4
        let conf = ConfusionMatrix::from_cells(3, 1, 2, 4);
        let f1 = macro_f1(&conf).unwrap();
        let want = (2.0 / 3.0 + 8.0 / 11.0) / 2.0;
        assert!((f1 - want).abs() < 1e-12);
        assert!((f1 - 0.6970).abs() < 1e-4);
    }

    #[test]
    fn perfect_diagonal_scores_one() {
        let conf = ConfusionMatrix::from_cells(7, 0, 0, 11);
        assert_eq!(macro_f1(&conf).unwrap(), 1.0);
        assert_eq!(macro_accuracy(&conf).unwrap(), 1.0);
    }

    #[test]
    fn absent_class_contributes_zero() {
        // Class 0 never occurs in truth or prediction.
        let conf = ConfusionMatrix::from_cells(0, 0, 0, 9);
        assert_eq!(macro_f1(&conf).unwrap(), 0.5);
        assert_eq!(macro_accuracy(&conf).unwrap(), 0.5);
    }

    #[test]
    fn empty_confusion_matrix_is_state_error() {
        let conf = ConfusionMatrix::default();
        assert!(macro_f1(&conf).is_err());
        assert!(macro_accuracy(&conf).is_err());
    }

    #[test]
    fn argmax_prefers_first_of_equal_scores() {
        let profile = ClaspProfile {
            scores: vec![0.3, 0.9, 0.9, 0.1],
            base_offset: 5,
            width: 4,
        };
        assert_eq!(profile.argmax(), Some(1));
        assert_eq!(profile.split_slice_index(1), 6);
        assert_eq!(profile.split_window_offset(1), 10);
    }
}
