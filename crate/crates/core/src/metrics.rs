//! Discrimination and calibration metrics: AUROC, ECE, thresholded
//! alignment and QA accuracy.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

pub const DEFAULT_BINS: usize = 10;
pub const SELECTION_FRACTION: f64 = 0.2;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Precondition(format!(
            "scores and labels differ in length ({a} vs {b})"
        )));
    }
    Ok(())
}

/// Mann-Whitney AUROC with half credit for ties.
pub fn auroc<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<T> {
    check_lengths(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Precondition("AUROC scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Precondition(
            "AUROC undefined: labels contain a single class".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // Sum of positive ranks (1-based, ties averaged), in f64.
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += avg_rank * pos_in_group as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok(T::of((rank_sum - p * (p + 1.0) / 2.0) / (p * n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    /// Equal-width bins over [0, 1]; bin 1 is `[0, 1/M]`, later bins
    /// are right-closed `(m/M, (m+1)/M]`.
    #[default]
    EqualWidth,
    /// Contiguous bins of (near) equal count in confidence order.
    EqualMass,
}

/// Index of the equal-width bin holding `c`, robust to rounding at edges.
pub fn width_bin<T: Scalar>(c: T, bins: usize) -> usize {
    let m = T::of_usize(bins);
    let edge = |i: usize| T::of_usize(i) / m;
    let mut idx = (c * m).ceil().to_usize().unwrap_or(0).saturating_sub(1).min(bins - 1);
    while idx > 0 && c <= edge(idx) {
        idx -= 1;
    }
    while idx + 1 < bins && c > edge(idx + 1) {
        idx += 1;
    }
    idx
}

/// Expected calibration error with `bins` bins.
pub fn ece<T: Scalar>(confidences: &[T], correct: &[u8], bins: usize, binning: Binning) -> Result<T> {
    check_lengths(confidences.len(), correct.len())?;
    if confidences.is_empty() {
        return Err(Error::Precondition("ECE of an empty set".into()));
    }
    if bins == 0 {
        return Err(Error::Precondition("ECE needs at least one bin".into()));
    }
    if let Some(bad) = confidences.iter().find(|c| !(**c >= T::zero() && **c <= T::one())) {
        return Err(Error::Precondition(format!("confidence {bad} outside [0, 1]")));
    }
    let n = confidences.len();
    let assignment: Vec<usize> = match binning {
        Binning::EqualWidth => confidences.iter().map(|&c| width_bin(c, bins)).collect(),
        Binning::EqualMass => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| confidences[a].partial_cmp(&confidences[b]).unwrap());
            let mut out = vec![0; n];
            for (rank, &i) in order.iter().enumerate() {
                out[i] = rank * bins / n;
            }
            out
        }
    };
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![T::zero(); bins];
    let mut hits = vec![0usize; bins];
    for ((&b, &c), &y) in assignment.iter().zip(confidences).zip(correct) {
        count[b] += 1;
        conf_sum[b] = conf_sum[b] + c;
        hits[b] += (y == 1) as usize;
    }
    let total = T::of_usize(n);
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let size = T::of_usize(count[b]);
            let acc = T::of_usize(hits[b]) / size;
            let conf = conf_sum[b] / size;
            size / total * (acc - conf).abs()
        })
        .sum())
}

/// Fraction of items whose binarized confidence (`c >= threshold`) equals
/// their correctness.
pub fn alignment_at<T: Scalar>(confidences: &[T], correct: &[u8], threshold: T) -> T {
    let agree = confidences
        .iter()
        .zip(correct)
        .filter(|(&c, &y)| (c >= threshold) == (y == 1))
        .count();
    T::of_usize(agree) / T::of_usize(confidences.len())
}

/// Candidate thresholds: 0, 1 and midpoints between consecutive unique
/// values. When the largest value reaches 1, a threshold above it is added
/// so that "predict all incorrect" stays available.
pub fn threshold_candidates<T: Scalar>(confidences: &[T]) -> Vec<T> {
    let mut values: Vec<T> = confidences.to_vec();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    let mut out = vec![T::zero(), T::one()];
    out.extend(values.windows(2).map(|w| (w[0] + w[1]) / T::of(2.0)));
    if let Some(&max) = values.last() {
        if max >= T::one() {
            out.push(max + T::one());
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup();
    out
}

/// Threshold maximizing alignment on the given items; smallest on ties.
pub fn select_threshold<T: Scalar>(confidences: &[T], correct: &[u8]) -> (T, T) {
    let mut best = (T::zero(), T::neg_infinity());
    for tau in threshold_candidates(confidences) {
        let a = alignment_at(confidences, correct, tau);
        if a > best.1 {
            best = (tau, a);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentOutcome<T> {
    pub threshold: T,
    /// Alignment on the 80% evaluation part at `threshold`.
    pub alignment: T,
    pub selection_alignment: T,
}

/// Stratified 20/80 split of item indices: per class, a seeded shuffle of
/// the class's indices with `round(0.2 * n_class)` going to selection.
pub fn selection_split(correct: &[u8], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng(seed, seed::streams::ALIGNMENT_SPLIT);
    let mut selection = Vec::new();
    let mut evaluation = Vec::new();
    for class in [1u8, 0u8] {
        let mut idx: Vec<usize> = (0..correct.len()).filter(|&i| correct[i] == class).collect();
        idx.shuffle(&mut rng);
        let take = (idx.len() as f64 * SELECTION_FRACTION).round() as usize;
        selection.extend_from_slice(&idx[..take]);
        evaluation.extend_from_slice(&idx[take..]);
    }
    if selection.is_empty() {
        selection.push(evaluation.remove(0));
    }
    selection.sort_unstable();
    evaluation.sort_unstable();
    (selection, evaluation)
}

pub fn threshold_alignment<T: Scalar>(confidences: &[T], correct: &[u8], seed: u64) -> Result<AlignmentOutcome<T>> {
    check_lengths(confidences.len(), correct.len())?;
    if confidences.len() < 5 {
        return Err(Error::Precondition(format!(
            "alignment needs at least 5 items, got {}",
            confidences.len()
        )));
    }
    let (sel, eval) = selection_split(correct, seed);
    let pick = |idx: &[usize]| -> (Vec<T>, Vec<u8>) {
        (idx.iter().map(|&i| confidences[i]).collect(), idx.iter().map(|&i| correct[i]).collect())
    };
    let (sc, sy) = pick(&sel);
    let (ec, ey) = pick(&eval);
    let (threshold, selection_alignment) = select_threshold(&sc, &sy);
    Ok(AlignmentOutcome {
        threshold,
        alignment: alignment_at(&ec, &ey, threshold),
        selection_alignment,
    })
}

pub fn qa_accuracy<T: Scalar>(greedy_correct: &[u8]) -> Result<T> {
    if greedy_correct.is_empty() {
        return Err(Error::Precondition("QA accuracy of an empty set".into()));
    }
    let hits = greedy_correct.iter().filter(|&&y| y == 1).count();
    Ok(T::of_usize(hits) / T::of_usize(greedy_correct.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricOptions {
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub binning: Binning,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            binning: Binning::EqualWidth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub dataset: String,
    pub auroc: f64,
    pub ece: f64,
    pub alignment: f64,
    pub threshold: f64,
    pub qa_accuracy: f64,
    pub n: usize,
}

impl MetricsReport {
    /// Scores one method on one evaluation set. `correct` is the greedy
    /// correctness of each item; confidences must already lie in [0, 1].
    pub fn compute<T: Scalar>(
        method: &str,
        dataset: &str,
        confidences: &[T],
        correct: &[u8],
        seed: u64,
        options: MetricOptions,
    ) -> Result<Self> {
        let align = threshold_alignment(confidences, correct, seed)?;
        let report = Self {
            method: method.to_string(),
            dataset: dataset.to_string(),
            auroc: auroc(confidences, correct)?.as_f64(),
            ece: ece(confidences, correct, options.bins, options.binning)?.as_f64(),
            alignment: align.alignment.as_f64(),
            threshold: align.threshold.as_f64(),
            qa_accuracy: qa_accuracy::<T>(correct)?.as_f64(),
            n: confidences.len(),
        };
        if ![report.auroc, report.ece, report.alignment, report.threshold, report.qa_accuracy]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Precondition(format!("non-finite metric for `{method}`")));
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auroc_examples() {
        let s = [0.9, 0.8, 0.2, 0.1];
        assert_eq!(auroc(&s, &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5f64; 6], &[1, 0, 1, 0, 1, 0]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.7, 0.4, 0.4, 0.2], &[1, 1, 0, 0]).unwrap(), 0.875);
        assert!(auroc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(auroc(&[0.1], &[1, 0]).is_err());
    }

    #[test]
    fn ece_examples() {
        assert_eq!(ece(&[0.75f64; 4], &[1, 1, 1, 0], 10, Binning::EqualWidth).unwrap(), 0.0);
        let conf = [0.95, 0.95, 0.95, 0.95, 0.55, 0.55, 0.55, 0.55];
        let y = [1, 1, 1, 1, 1, 0, 0, 0];
        let e: f64 = ece(&conf, &y, DEFAULT_BINS, Binning::EqualWidth).unwrap();
        assert!((e - 0.175).abs() < 1e-12, "{e}");
        assert!(ece(&[1.2], &[1], 10, Binning::EqualWidth).is_err());
    }

    #[test]
    fn bin_edges_are_right_closed() {
        assert_eq!(width_bin(0.0f64, 10), 0);
        assert_eq!(width_bin(0.1f64, 10), 0);
        assert_eq!(width_bin(0.1000001f64, 10), 1);
        assert_eq!(width_bin(0.3f64, 10), 2);
        assert_eq!(width_bin(0.7f64, 10), 6);
        assert_eq!(width_bin(1.0f64, 10), 9);
        assert_eq!(width_bin(0.3f32, 10), 2);
    }

    #[test]
    fn equal_mass_bins() {
        let conf = [0.1, 0.2, 0.3, 0.4];
        let e: f64 = ece(&conf, &[0, 0, 1, 1], 2, Binning::EqualMass).unwrap();
        // Bins {0.1, 0.2} acc 0 conf 0.15; {0.3, 0.4} acc 1 conf 0.35.
        assert!((e - (0.5 * 0.15 + 0.5 * 0.65)).abs() < 1e-12);
    }

    #[test]
    fn alignment_examples() {
        let c = [0.9, 0.8, 0.2, 0.1];
        assert_eq!(alignment_at(&c, &[1, 1, 0, 0], 0.5), 1.0);
        let conf = [0.3, 0.9, 0.1, 0.5, 0.7, 0.2, 0.6];
        let out = threshold_alignment(&conf, &[1; 7], 3).unwrap();
        assert_eq!(out.threshold, 0.0);
        assert_eq!(out.alignment, 1.0);
        assert!(threshold_alignment(&[0.1, 0.2], &[1, 0], 0).is_err());
    }

    #[test]
    fn all_wrong_with_saturated_confidence() {
        let conf = [1.0, 1.0, 0.9, 1.0, 1.0, 0.95];
        let out = threshold_alignment(&conf, &[0; 6], 1).unwrap();
        assert_eq!(out.alignment, 1.0);
        assert!(out.threshold > 1.0);
    }

    #[test]
    fn stratified_split_keeps_both_classes() {
        let y: Vec<u8> = (0..50).map(|i| (i % 5 == 0) as u8).collect();
        let (sel, eval) = selection_split(&y, 9);
        assert_eq!(sel.len() + eval.len(), 50);
        assert_eq!(sel.iter().filter(|&&i| y[i] == 1).count(), 2);
        assert_eq!(sel.iter().filter(|&&i| y[i] == 0).count(), 8);
    }

    proptest! {
        #[test]
        fn auroc_increasing_transform_invariant(
            pts in prop::collection::vec((0.0f64..1.0, 0u8..2), 2..80)
        ) {
            let (s, y): (Vec<f64>, Vec<u8>) = pts.into_iter().unzip();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let a = auroc(&s, &y).unwrap();
            let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() + 2.0).collect();
            prop_assert!((a - auroc(&t, &y).unwrap()).abs() < 1e-12);
            let neg: Vec<f64> = s.iter().map(|x| -x).collect();
            let mut uniq = s.clone();
            uniq.sort_by(|a, b| a.partial_cmp(b).unwrap());
            uniq.dedup();
            if uniq.len() == s.len() {
                prop_assert!((a + auroc(&neg, &y).unwrap() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn ece_in_unit_interval(pts in prop::collection::vec((0.0f64..=1.0, 0u8..2), 1..100), bins in 1usize..20) {
            let (c, y): (Vec<f64>, Vec<u8>) = pts.into_iter().unzip();
            let e = ece(&c, &y, bins, Binning::EqualWidth).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
        }

        #[test]
        fn selection_beats_class_prior(pts in prop::collection::vec((0.0f64..=1.0, 0u8..2), 1..60)) {
            let (c, y): (Vec<f64>, Vec<u8>) = pts.into_iter().unzip();
            let (_, a) = select_threshold(&c, &y);
            let prior = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;
            prop_assert!(a >= prior.max(1.0 - prior) - 1e-12);
        }
    }
}
