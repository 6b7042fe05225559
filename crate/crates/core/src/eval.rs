//! Detection, calibration and selective-prediction metrics.
//!
//! Uncertainty is "higher means more likely OOD" throughout; OOD is the positive
//! class.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, undefined, Result};
use crate::graph::{KnowledgeGraph, Triple};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub uncertainty: f64,
    pub is_ood: bool,
}

impl ScoredSample {
    pub fn new(uncertainty: f64, is_ood: bool) -> Self {
        ScoredSample { uncertainty, is_ood }
    }
}

/// Builds samples from separate ID and OOD score lists.
pub fn samples_from(id: &[f64], ood: &[f64]) -> Vec<ScoredSample> {
    id.iter()
        .map(|&u| ScoredSample::new(u, false))
        .chain(ood.iter().map(|&u| ScoredSample::new(u, true)))
        .collect()
}

fn class_counts(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    let pos = samples.iter().filter(|s| s.is_ood).count();
    let neg = samples.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(undefined(format!("need both classes, got {pos} OOD and {neg} ID samples")));
    }
    if samples.iter().any(|s| !s.uncertainty.is_finite()) {
        return Err(invalid("uncertainty values must be finite"));
    }
    Ok((pos, neg))
}

/// Groups of equal uncertainty in ascending order, as `(ood, id)` counts.
fn tie_groups(samples: &[ScoredSample]) -> Vec<(u64, u64)> {
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.uncertainty.total_cmp(&b.uncertainty));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut last: Option<f64> = None;
    for s in sorted {
        if last != Some(s.uncertainty) {
            groups.push((0, 0));
            last = Some(s.uncertainty);
        }
        let g = groups.last_mut().unwrap();
        if s.is_ood {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Probability that a random OOD sample is more uncertain than a random ID
/// sample, ties counting one half (Mann–Whitney U / (n_ood * n_id)).
pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    let (pos, neg) = class_counts(samples)?;
    // twice the U statistic keeps the half-credits integral
    let mut twice_u: u128 = 0;
    let mut id_below: u64 = 0;
    for (ood, id) in tie_groups(samples) {
        twice_u += 2 * ood as u128 * id_below as u128 + ood as u128 * id as u128;
        id_below += id;
    }
    Ok((twice_u as f64 / 2.0) / (pos as f64 * neg as f64))
}

/// Average precision with OOD as positives: `sum_k (R_k - R_{k-1}) P_k` over
/// thresholds at each distinct uncertainty, highest first.
pub fn aupr(samples: &[ScoredSample]) -> Result<f64> {
    let (pos, _) = class_counts(samples)?;
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut ap = 0.0;
    for (ood, id) in tie_groups(samples).into_iter().rev() {
        tp += ood;
        fp += id;
        if ood > 0 {
            ap += (ood as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

/// Min–max scales uncertainties to `[0, 1]`; a constant input maps to zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

/// F1 of the decision `normalized uncertainty >= threshold`.
pub fn f1_at(samples: &[ScoredSample], threshold: f64) -> Result<f64> {
    class_counts(samples)?;
    let values: Vec<f64> = samples.iter().map(|s| s.uncertainty).collect();
    let norm = min_max_normalize(&values);
    let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
    for (s, &u) in samples.iter().zip(&norm) {
        match (u >= threshold, s.is_ood) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fnn) as f64)
}

/// Sample carrying a predicted OOD probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySample {
    pub p_ood: f64,
    pub is_ood: bool,
}

/// `p = u / 2` for combined scores that already live in `[0, 2]`.
pub fn probabilities_from_bounded(samples: &[ScoredSample]) -> Vec<ProbabilitySample> {
    samples
        .iter()
        .map(|s| ProbabilitySample { p_ood: (s.uncertainty / 2.0).clamp(0.0, 1.0), is_ood: s.is_ood })
        .collect()
}

/// Min–max over the evaluation pool, for unbounded signals.
pub fn probabilities_from_min_max(samples: &[ScoredSample]) -> Vec<ProbabilitySample> {
    let values: Vec<f64> = samples.iter().map(|s| s.uncertainty).collect();
    min_max_normalize(&values)
        .into_iter()
        .zip(samples)
        .map(|(p, s)| ProbabilitySample { p_ood: p, is_ood: s.is_ood })
        .collect()
}

fn check_probabilities(samples: &[ProbabilitySample]) -> Result<()> {
    if samples.is_empty() {
        return Err(undefined("calibration needs at least one sample"));
    }
    if samples.iter().any(|s| !(0.0..=1.0).contains(&s.p_ood)) {
        return Err(invalid("probabilities must lie in [0, 1]"));
    }
    Ok(())
}

/// Expected calibration error over `bins` equal-width bins; `p = 1` falls in the last bin.
pub fn ece(samples: &[ProbabilitySample], bins: usize) -> Result<f64> {
    check_probabilities(samples)?;
    if bins == 0 {
        return Err(invalid("bins must be positive"));
    }
    let mut count = vec![0usize; bins];
    let mut conf = vec![0.0f64; bins];
    let mut hits = vec![0usize; bins];
    for s in samples {
        let b = ((s.p_ood * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        conf[b] += s.p_ood;
        hits[b] += s.is_ood as usize;
    }
    let n = samples.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let nb = count[b] as f64;
            (nb / n) * (hits[b] as f64 / nb - conf[b] / nb).abs()
        })
        .sum())
}

pub fn brier(samples: &[ProbabilitySample]) -> Result<f64> {
    check_probabilities(samples)?;
    Ok(samples
        .iter()
        .map(|s| {
            let y = s.is_ood as u8 as f64;
            (s.p_ood - y) * (s.p_ood - y)
        })
        .sum::<f64>()
        / samples.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectiveSample {
    pub uncertainty: f64,
    pub correct: bool,
}

/// Accuracy after abstaining on the `ceil((1 - answer_rate) * n)` most uncertain
/// samples; among equal uncertainties the earlier sample abstains first.
pub fn selective_prediction(samples: &[SelectiveSample], answer_rate: f64) -> Result<f64> {
    if !(answer_rate > 0.0 && answer_rate <= 1.0) {
        return Err(undefined(format!("answer rate {answer_rate} outside (0, 1]")));
    }
    let n = samples.len();
    let abstain = libm::ceil((1.0 - answer_rate) * n as f64 - 1e-9).max(0.0) as usize;
    if abstain >= n {
        return Err(undefined("no samples left to answer"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep input order
    order.sort_by(|&a, &b| samples[b].uncertainty.total_cmp(&samples[a].uncertainty));
    let answered = &order[abstain..];
    let correct = answered.iter().filter(|&&i| samples[i].correct).count();
    Ok(correct as f64 / answered.len() as f64)
}

/// `(answer_rate, accuracy)` points of the risk–coverage curve.
pub fn risk_coverage_curve(samples: &[SelectiveSample], rates: &[f64]) -> Result<Vec<(f64, f64)>> {
    rates.iter().map(|&r| Ok((r, selective_prediction(samples, r)?))).collect()
}

/// Resampled index sets used by [`paired_bootstrap`].
pub fn bootstrap_indices(n: usize, iterations: usize, seed: u64) -> impl Iterator<Item = Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..iterations).map(move |_| (0..n).map(|_| rng.random_range(0..n)).collect())
}

/// Sample indices sorted by uncertainty with the start of each tie group.
struct RankedScores {
    order: Vec<usize>,
    group_starts: Vec<usize>,
}

impl RankedScores {
    fn new(values: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut group_starts = Vec::new();
        for (k, &i) in order.iter().enumerate() {
            if k == 0 || values[order[k - 1]] != values[i] {
                group_starts.push(k);
            }
        }
        RankedScores { order, group_starts }
    }

    /// AUROC of the multiset holding sample `i` `weights[i]` times.
    fn weighted_auroc(&self, labels: &[bool], weights: &[u32]) -> Option<f64> {
        let (mut twice_u, mut id_below, mut pos) = (0u128, 0u64, 0u64);
        let ends = self.group_starts.iter().skip(1).copied().chain(core::iter::once(self.order.len()));
        for (start, end) in self.group_starts.iter().copied().zip(ends) {
            let (mut ood, mut id) = (0u64, 0u64);
            for &i in &self.order[start..end] {
                if labels[i] {
                    ood += weights[i] as u64;
                } else {
                    id += weights[i] as u64;
                }
            }
            twice_u += 2 * ood as u128 * id_below as u128 + ood as u128 * id as u128;
            id_below += id;
            pos += ood;
        }
        let neg = id_below;
        (pos > 0 && neg > 0).then(|| (twice_u as f64 / 2.0) / (pos as f64 * neg as f64))
    }
}

/// One-sided paired bootstrap p-value for "signal `a` has higher AUROC than `b`":
/// the fraction of resamples with `AUROC(a) < AUROC(b)`, exact ties counting one
/// half. Resamples are those of [`bootstrap_indices`]; single-class resamples are
/// skipped.
pub fn paired_bootstrap(unc_a: &[f64], unc_b: &[f64], labels: &[bool], iterations: usize, seed: u64) -> Result<f64> {
    if unc_a.len() != unc_b.len() || unc_a.len() != labels.len() {
        return Err(invalid(format!(
            "misaligned inputs: {} / {} / {}",
            unc_a.len(),
            unc_b.len(),
            labels.len()
        )));
    }
    if iterations == 0 {
        return Err(invalid("iterations must be positive"));
    }
    if unc_a.iter().chain(unc_b).any(|u| !u.is_finite()) {
        return Err(invalid("uncertainty values must be finite"));
    }
    let (ra, rb) = (RankedScores::new(unc_a), RankedScores::new(unc_b));
    let mut weights = vec![0u32; labels.len()];
    let mut worse = 0.0;
    let mut valid = 0usize;
    for idx in bootstrap_indices(labels.len(), iterations, seed) {
        weights.fill(0);
        for &i in &idx {
            weights[i] += 1;
        }
        let (Some(a), Some(b)) = (ra.weighted_auroc(labels, &weights), rb.weighted_auroc(labels, &weights)) else {
            continue;
        };
        valid += 1;
        match a.partial_cmp(&b) {
            Some(Ordering::Less) => worse += 1.0,
            Some(Ordering::Equal) => worse += 0.5,
            _ => {}
        }
    }
    if valid == 0 {
        return Err(undefined("every bootstrap resample was single-class"));
    }
    Ok(worse / valid as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorClassStats {
    pub count: usize,
    pub mean_tail_degree: Option<f64>,
    pub mean_relation_freq: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub threshold: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    pub true_negatives: ErrorClassStats,
    pub false_positives: ErrorClassStats,
    pub false_negatives: ErrorClassStats,
    pub true_positives: ErrorClassStats,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripleSample {
    pub triple: Triple,
    pub uncertainty: f64,
    pub is_ood: bool,
}

/// Threshold that flags exactly as many samples as there are OOD samples
/// (so false positives equal false negatives when there are no ties at the cut).
pub fn balanced_threshold(samples: &[TripleSample]) -> Result<f64> {
    let pos = samples.iter().filter(|s| s.is_ood).count();
    if pos == 0 || pos == samples.len() {
        return Err(undefined("need both classes"));
    }
    let mut u: Vec<f64> = samples.iter().map(|s| s.uncertainty).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    Ok(u[pos - 1])
}

/// Confusion counts of `uncertainty >= threshold` with tail degree and relation
/// frequency (training counts) per confusion cell.
pub fn error_analysis(samples: &[TripleSample], kg: &KnowledgeGraph, threshold: f64) -> ErrorReport {
    let mut cells = [(0usize, 0u64, 0u64); 4]; // tn, fp, fn, tp
    for s in samples {
        let flagged = s.uncertainty >= threshold;
        let cell = match (s.is_ood, flagged) {
            (false, false) => 0,
            (false, true) => 1,
            (true, false) => 2,
            (true, true) => 3,
        };
        let c = &mut cells[cell];
        c.0 += 1;
        c.1 += kg.freq(s.triple.tail);
        c.2 += kg.relation_freq(s.triple.relation);
    }
    let stats = |(n, deg, rel): (usize, u64, u64)| ErrorClassStats {
        count: n,
        mean_tail_degree: (n > 0).then(|| deg as f64 / n as f64),
        mean_relation_freq: (n > 0).then(|| rel as f64 / n as f64),
    };
    let [tn, fp, fnn, tp] = cells.map(|c| c.0 as f64);
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fnn);
    ErrorReport {
        threshold,
        accuracy: ratio(tp + tn, tp + tn + fp + fnn),
        precision,
        recall,
        f1: ratio(2.0 * tp, 2.0 * tp + fp + fnn),
        false_positive_rate: ratio(fp, fp + tn),
        false_negative_rate: ratio(fnn, fnn + tp),
        true_negatives: stats(cells[0]),
        false_positives: stats(cells[1]),
        false_negatives: stats(cells[2]),
        true_positives: stats(cells[3]),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(n^2) pairwise AUROC.
    pub(crate) fn auroc_pairwise(samples: &[ScoredSample]) -> f64 {
        let mut credit = 0.0;
        let mut pairs = 0.0;
        for o in samples.iter().filter(|s| s.is_ood) {
            for i in samples.iter().filter(|s| !s.is_ood) {
                pairs += 1.0;
                if o.uncertainty > i.uncertainty {
                    credit += 1.0;
                } else if o.uncertainty == i.uncertainty {
                    credit += 0.5;
                }
            }
        }
        credit / pairs
    }

    /// Precision-at-recall-step sum by enumerating every threshold.
    fn aupr_enumerated(samples: &[ScoredSample]) -> f64 {
        let pos = samples.iter().filter(|s| s.is_ood).count() as f64;
        let mut thresholds: Vec<f64> = samples.iter().map(|s| s.uncertainty).collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let mut prev_recall = 0.0;
        let mut ap = 0.0;
        for t in thresholds {
            let flagged: Vec<_> = samples.iter().filter(|s| s.uncertainty >= t).collect();
            let tp = flagged.iter().filter(|s| s.is_ood).count() as f64;
            let recall = tp / pos;
            ap += (recall - prev_recall) * tp / flagged.len() as f64;
            prev_recall = recall;
        }
        ap
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&samples_from(&[0.0, 0.1], &[0.2, 0.3])).unwrap(), 1.0);
        assert_eq!(auroc(&samples_from(&[0.7, 0.7], &[0.7, 0.7, 0.7])).unwrap(), 0.5);
        let s = samples_from(&[0.1, 0.4], &[0.2, 0.3]);
        assert_eq!(auroc(&s).unwrap(), 0.5);
        assert_eq!(auroc_pairwise(&s), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auroc(&samples_from(&[0.1], &[])), Err(crate::Error::UndefinedMetric(_))));
        assert!(aupr(&samples_from(&[], &[0.1])).is_err());
        assert!(f1_at(&samples_from(&[], &[0.1]), 0.5).is_err());
    }

    #[test]
    fn aupr_examples() {
        assert_eq!(aupr(&samples_from(&[0.0, 0.1], &[0.2, 0.3])).unwrap(), 1.0);
        // uninformative: AP = prevalence
        assert_eq!(aupr(&samples_from(&[1.0; 3], &[1.0])).unwrap(), 0.25);
        let s = samples_from(&[0.1, 0.4], &[0.2, 0.3]);
        // thresholds 0.4: P=0; 0.3: R=.5 P=.5; 0.2: R=1 P=2/3 -> 0.25 + 1/3
        let expected = aupr_enumerated(&s);
        assert!((expected - (0.25 + 1.0 / 3.0)).abs() < 1e-15);
        assert!((aupr(&s).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn f1_examples() {
        let s = samples_from(&[0.0, 0.1], &[0.2, 0.3]);
        for t in [0.4, 0.5, 0.6] {
            assert_eq!(f1_at(&s, t).unwrap(), 1.0);
        }
        // normalized: 0, 1, 1/3, 2/3 -> flagged {0.4, 0.3} -> tp=1 fp=1 fn=1
        let s = samples_from(&[0.1, 0.4], &[0.2, 0.3]);
        assert!((f1_at(&s, 0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    /// Bins of width 1/2. Bin 0: p {0.1, 0.2, 0.4}, one OOD -> |1/3 - 0.7/3| = 0.1.
    /// Bin 1: p {0.6, 0.7, 0.9}, two OOD -> |2/3 - 2.2/3| = 0.2/3. ECE = 1/12.
    pub(crate) fn six_sample_fixture() -> Vec<ProbabilitySample> {
        [(0.1, false), (0.2, true), (0.4, false), (0.6, true), (0.7, true), (0.9, false)]
            .into_iter()
            .map(|(p_ood, is_ood)| ProbabilitySample { p_ood, is_ood })
            .collect()
    }

    #[test]
    fn ece_hand_worked() {
        let e = ece(&six_sample_fixture(), 2).unwrap();
        assert!((e - 1.0 / 12.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn ece_zero_when_calibrated() {
        // bin [0.2, 0.4) at p=0.25 with 1 of 4 OOD; bin [0.6, 0.8) at p=0.75 with 3 of 4
        let mut s = Vec::new();
        for i in 0..4 {
            s.push(ProbabilitySample { p_ood: 0.25, is_ood: i == 0 });
            s.push(ProbabilitySample { p_ood: 0.75, is_ood: i != 0 });
        }
        assert!(ece(&s, 5).unwrap().abs() < 1e-15);
        assert!(ece(&[], 15).is_err());
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&[ProbabilitySample { p_ood: 1.0, is_ood: true }]).unwrap(), 0.0);
        assert_eq!(brier(&[ProbabilitySample { p_ood: 1.0, is_ood: false }]).unwrap(), 1.0);
        assert!(brier(&[]).is_err());
    }

    #[test]
    fn probability_maps() {
        let s = samples_from(&[0.0, 1.0], &[2.0]);
        let p: Vec<f64> = probabilities_from_bounded(&s).iter().map(|p| p.p_ood).collect();
        assert_eq!(p, vec![0.0, 0.5, 1.0]);
        let s = samples_from(&[-3.0, 1.0], &[5.0]);
        let p: Vec<f64> = probabilities_from_min_max(&s).iter().map(|p| p.p_ood).collect();
        assert_eq!(p, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn selective_examples() {
        let mk = |u: f64, c: bool| SelectiveSample { uncertainty: u, correct: c };
        let mut s: Vec<SelectiveSample> = (0..17).map(|i| mk(i as f64 / 100.0, i % 3 != 0)).collect();
        let base = s.iter().filter(|x| x.correct).count() as f64 / s.len() as f64;
        assert_eq!(selective_prediction(&s, 1.0).unwrap(), base);
        // 3 errors concentrated at the top of 20 samples
        s = (0..17).map(|i| mk(i as f64 / 100.0, true)).collect();
        s.extend((0..3).map(|i| mk(1.0 + i as f64, false)));
        assert_eq!(selective_prediction(&s, 1.0).unwrap(), 0.85);
        assert_eq!(selective_prediction(&s, 0.85).unwrap(), 1.0);
        assert!(selective_prediction(&s, 0.0).is_err());
    }

    #[test]
    fn selective_ties_abstain_in_input_order() {
        let s = [
            SelectiveSample { uncertainty: 1.0, correct: false },
            SelectiveSample { uncertainty: 1.0, correct: true },
        ];
        assert_eq!(selective_prediction(&s, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn bootstrap_symmetric_and_extreme() {
        let labels: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let a: Vec<f64> = (0..40).map(|i| ((i * 7919) % 13) as f64).collect();
        assert_eq!(paired_bootstrap(&a, &a, &labels, 500, 3).unwrap(), 0.5);
        let good: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
        let bad: Vec<f64> = labels.iter().map(|&l| 1.0 - l as u8 as f64).collect();
        assert_eq!(paired_bootstrap(&good, &bad, &labels, 500, 3).unwrap(), 0.0);
        assert!(paired_bootstrap(&good, &bad[..3], &labels, 10, 3).is_err());
    }

    /// Materializes every resample and recomputes AUROC from scratch.
    fn bootstrap_oracle(a: &[f64], b: &[f64], labels: &[bool], iterations: usize, seed: u64) -> f64 {
        let (mut worse, mut valid) = (0.0, 0usize);
        for idx in bootstrap_indices(labels.len(), iterations, seed) {
            let sa: Vec<_> = idx.iter().map(|&i| ScoredSample::new(a[i], labels[i])).collect();
            let sb: Vec<_> = idx.iter().map(|&i| ScoredSample::new(b[i], labels[i])).collect();
            let (Ok(x), Ok(y)) = (auroc(&sa), auroc(&sb)) else { continue };
            valid += 1;
            if x < y {
                worse += 1.0;
            } else if x == y {
                worse += 0.5;
            }
        }
        worse / valid as f64
    }

    #[test]
    fn bootstrap_matches_resample_oracle() {
        let labels: Vec<bool> = (0..20).map(|i| i % 4 == 0 || i == 7).collect();
        let a: Vec<f64> = (0..20).map(|i| ((i * 37) % 9) as f64 / 4.0 + labels[i] as u8 as f64 * 0.5).collect();
        let b: Vec<f64> = (0..20).map(|i| ((i * 11) % 5) as f64).collect();
        for seed in 0..5 {
            let p = paired_bootstrap(&a, &b, &labels, 200, seed).unwrap();
            assert_eq!(p, bootstrap_oracle(&a, &b, &labels, 200, seed));
        }
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let labels: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let a: Vec<f64> = (0..30).map(|i| ((i * 31) % 11) as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| ((i * 17) % 7) as f64).collect();
        let p1 = paired_bootstrap(&a, &b, &labels, 300, 42).unwrap();
        let p2 = paired_bootstrap(&a, &b, &labels, 300, 42).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn error_analysis_hand_built() {
        use crate::graph::KnowledgeGraph;
        // freq: e0=3 e1=2 e2=1 e3=0; relation freq r0=2 r1=1
        let kg = KnowledgeGraph::from_ids(
            4,
            2,
            vec![Triple::new(0, 0, 1), Triple::new(0, 0, 1), Triple::new(0, 1, 2)],
            vec![],
            vec![],
        )
        .unwrap();
        let ts = |h, r, t, u, ood| TripleSample { triple: Triple::new(h, r, t), uncertainty: u, is_ood: ood };
        let samples = [
            ts(0, 0, 1, 0.1, false), // tn, tail deg 2
            ts(1, 0, 0, 0.2, false), // tn, tail deg 3
            ts(0, 1, 2, 0.9, false), // fp, tail deg 1, rel 1
            ts(0, 0, 3, 0.8, true),  // tp, tail deg 0
            ts(1, 1, 2, 0.7, true),  // tp, tail deg 1
            ts(2, 0, 0, 0.3, true),  // fn, tail deg 3
        ];
        let r = error_analysis(&samples, &kg, 0.5);
        assert_eq!(
            (r.true_negatives.count, r.false_positives.count, r.false_negatives.count, r.true_positives.count),
            (2, 1, 1, 2)
        );
        assert_eq!(r.true_negatives.mean_tail_degree, Some(2.5));
        assert_eq!(r.false_positives.mean_tail_degree, Some(1.0));
        assert_eq!(r.false_positives.mean_relation_freq, Some(1.0));
        assert_eq!(r.true_positives.mean_tail_degree, Some(0.5));
        assert_eq!(r.true_positives.mean_relation_freq, Some(1.5));
        assert_eq!(r.false_negatives.mean_tail_degree, Some(3.0));
        assert!((r.accuracy - 4.0 / 6.0).abs() < 1e-15);

        let perfect = error_analysis(&samples[..2], &kg, 0.5);
        assert_eq!((perfect.false_positives.count, perfect.false_negatives.count), (0, 0));
        let thr = balanced_threshold(&samples).unwrap();
        let b = error_analysis(&samples, &kg, thr);
        assert_eq!(b.false_positives.count, b.false_negatives.count);
    }

    fn arb_samples() -> impl Strategy<Value = Vec<ScoredSample>> {
        proptest::collection::vec((0u8..6, any::<bool>()), 2..50).prop_map(|v| {
            v.into_iter().map(|(u, l)| ScoredSample::new(u as f64 * 0.25, l)).collect()
        })
    }

    proptest! {
        #[test]
        fn auroc_matches_pairwise(s in arb_samples()) {
            let pos = s.iter().filter(|x| x.is_ood).count();
            prop_assume!(pos > 0 && pos < s.len());
            prop_assert_eq!(auroc(&s).unwrap(), auroc_pairwise(&s));
        }

        #[test]
        fn auroc_label_flip_complements(s in arb_samples()) {
            let pos = s.iter().filter(|x| x.is_ood).count();
            prop_assume!(pos > 0 && pos < s.len());
            let flipped: Vec<_> = s.iter().map(|x| ScoredSample::new(x.uncertainty, !x.is_ood)).collect();
            prop_assert!((auroc(&flipped).unwrap() - (1.0 - auroc(&s).unwrap())).abs() < 1e-12);
        }

        #[test]
        fn auroc_invariant_under_monotone_map(s in arb_samples()) {
            let pos = s.iter().filter(|x| x.is_ood).count();
            prop_assume!(pos > 0 && pos < s.len());
            let mapped: Vec<_> = s.iter().map(|x| ScoredSample::new(libm::exp(3.0 * x.uncertainty) - 7.0, x.is_ood)).collect();
            prop_assert_eq!(auroc(&mapped).unwrap(), auroc(&s).unwrap());
        }

        #[test]
        fn aupr_matches_enumeration(s in arb_samples()) {
            let pos = s.iter().filter(|x| x.is_ood).count();
            prop_assume!(pos > 0 && pos < s.len());
            prop_assert!((aupr(&s).unwrap() - aupr_enumerated(&s)).abs() < 1e-12);
        }
    }
}
