//! Empirical checks of the detection assumptions and per-class AUROC tables.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::coverage::CoverageMatrix;
use crate::error::{invalid, undefined, Result};
use crate::eval::{auroc, ScoredSample};
use crate::graph::{KnowledgeGraph, Triple};
use crate::oodgen::{verify_a3, MatchedFraction, OodPartition};
use crate::uncertainty::{Assessor, MixingWeight, UncertaintyAssessment};

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = alloc::vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid(format!("spearman needs two equal-length lists of length >= 2, got {} and {}", x.len(), y.len())));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(undefined("spearman of a constant list"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Semantic,
    Structural,
    FixedHalf,
    Cagp,
}

impl Signal {
    pub const ALL: [Signal; 4] = [Signal::Semantic, Signal::Structural, Signal::FixedHalf, Signal::Cagp];

    pub fn name(self) -> &'static str {
        match self {
            Signal::Semantic => "semantic",
            Signal::Structural => "structural",
            Signal::FixedHalf => "fixed_0.5",
            Signal::Cagp => "cagp",
        }
    }

    /// Value of this signal for an assessment, where `Cagp` uses the stored mix.
    pub fn value(self, a: &UncertaintyAssessment) -> f64 {
        match self {
            Signal::Semantic => a.u_sem_norm,
            Signal::Structural => a.u_str,
            Signal::FixedHalf => 0.5 * a.u_sem_norm + 0.5 * a.u_str,
            Signal::Cagp => a.u_cagp,
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// AUROC of `signal` with `id` as negatives and `ood` as positives.
pub fn signal_auroc(signal: Signal, id: &[UncertaintyAssessment], ood: &[UncertaintyAssessment]) -> Result<f64> {
    let samples: Vec<ScoredSample> = id
        .iter()
        .map(|a| ScoredSample::new(signal.value(a), false))
        .chain(ood.iter().map(|a| ScoredSample::new(signal.value(a), true)))
        .collect();
    auroc(&samples)
}

/// Assessments of every partition class under one mixing weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssessedPartition {
    pub emerging: Vec<UncertaintyAssessment>,
    pub novel_context: Vec<UncertaintyAssessment>,
    pub in_distribution: Vec<UncertaintyAssessment>,
}

impl AssessedPartition {
    pub fn new(assessor: &Assessor<'_>, partition: &OodPartition, w: MixingWeight) -> Self {
        AssessedPartition {
            emerging: assessor.assess_all(&partition.emerging, w),
            novel_context: assessor.assess_all(&partition.novel_context, w),
            in_distribution: assessor.assess_all(&partition.in_distribution, w),
        }
    }

    pub fn ood(&self) -> Vec<UncertaintyAssessment> {
        self.emerging.iter().chain(&self.novel_context).copied().collect()
    }

    pub fn reweighted(&self, w: MixingWeight) -> Self {
        let map = |v: &[UncertaintyAssessment]| v.iter().map(|a| a.reweighted(w)).collect();
        AssessedPartition {
            emerging: map(&self.emerging),
            novel_context: map(&self.novel_context),
            in_distribution: map(&self.in_distribution),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityRow {
    pub signal: Signal,
    pub emerging: Option<f64>,
    pub novel_context: Option<f64>,
    pub overall: Option<f64>,
}

/// AUROC of each signal against ID on emerging, novel-context and all OOD queries.
pub fn complementarity_table(assessed: &AssessedPartition) -> Result<Vec<ComplementarityRow>> {
    if assessed.in_distribution.is_empty() {
        return Err(undefined("complementarity table needs ID queries"));
    }
    let ood = assessed.ood();
    let id = &assessed.in_distribution;
    let cell = |s: Signal, o: &[UncertaintyAssessment]| (!o.is_empty()).then(|| signal_auroc(s, id, o)).transpose();
    Signal::ALL
        .iter()
        .map(|&signal| {
            Ok(ComplementarityRow {
                signal,
                emerging: cell(signal, &assessed.emerging)?,
                novel_context: cell(signal, &assessed.novel_context)?,
                overall: cell(signal, &ood)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Spearman correlation of training frequency and mean variance over training entities.
    pub a1_spearman: Option<f64>,
    /// Fraction of ID queries with zero structural uncertainty.
    pub a2_coverage_rate: Option<f64>,
    pub a3_matched: Vec<MatchedFraction>,
    /// Largest normalized semantic excess of an ID query over a novel-context query.
    pub a4_delta: Option<f64>,
    pub a4_delta_raw: Option<f64>,
    /// Fraction of emerging queries with zero structural uncertainty.
    pub a5_rho: Option<f64>,
    /// Semantic AUROC of emerging against ID.
    pub a6_auroc_emerging: Option<f64>,
    pub semantic_novel_predicted: f64,
    pub semantic_novel_observed: Option<f64>,
    pub structural_novel_predicted: f64,
    pub structural_novel_observed: Option<f64>,
}

fn zero_structural_rate(coverage: &CoverageMatrix, triples: &[Triple]) -> Option<f64> {
    (!triples.is_empty()).then(|| {
        triples.iter().filter(|q| coverage.structural_uncertainty(q) == 0).count() as f64 / triples.len() as f64
    })
}

fn max_gap(id: &[UncertaintyAssessment], novel: &[UncertaintyAssessment], value: fn(&UncertaintyAssessment) -> f64) -> Option<f64> {
    if id.is_empty() || novel.is_empty() {
        return None;
    }
    let id_max = id.iter().map(value).fold(f64::NEG_INFINITY, f64::max);
    let novel_min = novel.iter().map(value).fold(f64::INFINITY, f64::min);
    Some(id_max - novel_min)
}

/// Assumption checks for one partition. Without an assessor the rows that need
/// embedding variances are reported as `None`.
pub fn assumption_report(
    kg: &KnowledgeGraph,
    coverage: &CoverageMatrix,
    assessor: Option<&Assessor<'_>>,
    partition: &OodPartition,
    epsilons: &[u64],
) -> AssumptionReport {
    let structural_novel = {
        let score = |q: &Triple, ood| ScoredSample::new(coverage.structural_uncertainty(q) as f64, ood);
        let samples: Vec<ScoredSample> = partition
            .in_distribution
            .iter()
            .map(|q| score(q, false))
            .chain(partition.novel_context.iter().map(|q| score(q, true)))
            .collect();
        auroc(&samples).ok()
    };
    let mut report = AssumptionReport {
        a1_spearman: None,
        a2_coverage_rate: zero_structural_rate(coverage, &partition.in_distribution),
        a3_matched: verify_a3(kg, &partition.novel_context, epsilons),
        a4_delta: None,
        a4_delta_raw: None,
        a5_rho: zero_structural_rate(coverage, &partition.emerging),
        a6_auroc_emerging: None,
        semantic_novel_predicted: 0.5,
        semantic_novel_observed: None,
        structural_novel_predicted: 1.0,
        structural_novel_observed: structural_novel,
    };
    let Some(assessor) = assessor else {
        return report;
    };
    let (freqs, vars): (Vec<f64>, Vec<f64>) = kg
        .frequencies()
        .iter()
        .zip(assessor.variances())
        .filter(|(&f, _)| f > 0)
        .map(|(&f, &v)| (f as f64, v))
        .unzip();
    let assessed = AssessedPartition::new(assessor, partition, MixingWeight::fixed_half());
    let (id, novel, emerging) = (&assessed.in_distribution, &assessed.novel_context, &assessed.emerging);
    report.a1_spearman = spearman(&freqs, &vars).ok();
    report.a4_delta = max_gap(id, novel, |a| a.u_sem_norm);
    report.a4_delta_raw = max_gap(id, novel, |a| a.u_sem_raw);
    report.a6_auroc_emerging = signal_auroc(Signal::Semantic, id, emerging).ok();
    report.semantic_novel_observed = signal_auroc(Signal::Semantic, id, novel).ok();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::CoverageMode;
    use crate::graph::Split;
    use crate::oodgen::{partition, synth_theorem_kg, SynthConfig};
    use crate::uncertainty::{alpha_profile, fit_alpha};
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[0.9, 0.5, 0.1]).unwrap() + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap() - 0.6).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    /// Variance strictly decreasing in training frequency.
    fn frequency_variances(kg: &KnowledgeGraph) -> Vec<f64> {
        kg.frequencies().iter().map(|&f| 1.0 / (1.0 + f as f64)).collect()
    }

    #[test]
    fn synthetic_fixture_satisfies_theorems() {
        let s = synth_theorem_kg(&SynthConfig::default(), 11).unwrap();
        let cov = CoverageMatrix::build(&s.kg);
        let assessor = Assessor::from_variances(frequency_variances(&s.kg), &s.kg, &cov, CoverageMode::Binary).unwrap();
        let report = assumption_report(&s.kg, &cov, Some(&assessor), &s.partition, &[0, 1, 5]);
        assert_eq!(report.a2_coverage_rate, Some(1.0));
        assert!(report.a3_matched.iter().all(|m| m.fraction == 1.0));
        assert_eq!(report.structural_novel_observed, Some(1.0));
        assert_eq!(report.semantic_novel_observed, Some(0.5));
        assert!(report.a1_spearman.unwrap() < -0.99);
        let rho = report.a5_rho.unwrap();
        assert!(rho > 0.0 && rho < 1.0, "{rho}");

        let assessed = AssessedPartition::new(&assessor, &s.partition, MixingWeight::fixed_half());
        let ood = assessed.ood();
        let w = fit_alpha(&assessed.in_distribution, &ood).unwrap();
        let table = complementarity_table(&assessed.reweighted(w)).unwrap();
        let overall = |sig: Signal| table.iter().find(|r| r.signal == sig).unwrap().overall.unwrap();
        let best_single = overall(Signal::Semantic).max(overall(Signal::Structural));
        assert!(overall(Signal::Cagp) >= best_single + 0.02, "{table:?}");
        let profile = alpha_profile(&assessed.in_distribution, &ood).unwrap();
        assert!(profile.iter().all(|p| p.1 <= overall(Signal::Cagp)));
    }

    #[test]
    fn delta_zero_when_semantic_values_coincide() {
        let s = synth_theorem_kg(&SynthConfig { emerging_eval: 0, ..SynthConfig::default() }, 2).unwrap();
        let cov = CoverageMatrix::build(&s.kg);
        let flat = vec![0.3; s.kg.entity_count()];
        let assessor = Assessor::from_variances(flat, &s.kg, &cov, CoverageMode::Binary).unwrap();
        let report = assumption_report(&s.kg, &cov, Some(&assessor), &s.partition, &[1]);
        assert_eq!(report.a4_delta, Some(0.0));
        assert_eq!(report.a5_rho, None);
        assert_eq!(report.a6_auroc_emerging, None);
    }

    #[test]
    fn tiny_kg_table_marks_missing_classes() {
        let kg = crate::graph::tests::tiny_kg();
        let kg = kg.with_split(Split::Test, vec![Triple::new(0, 0, 2), Triple::new(0, 1, 1)]).unwrap();
        let cov = CoverageMatrix::build(&kg);
        let p = partition(&kg, &cov, Split::Test, 2);
        let assessor = Assessor::from_variances(vec![0.1, 0.2, 0.3], &kg, &cov, CoverageMode::Binary).unwrap();
        let table = complementarity_table(&AssessedPartition::new(&assessor, &p, MixingWeight::fixed_half())).unwrap();
        assert!(table.iter().all(|r| r.emerging.is_none() && r.novel_context.is_some()));
        assert_eq!(table[1].novel_context, Some(1.0));
    }

    proptest! {
        #[test]
        fn spearman_bounded_and_symmetric(v in proptest::collection::vec((0u8..6, 0u8..6), 2..30)) {
            let x: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            if let Ok(r) = spearman(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
                prop_assert!((spearman(&y, &x).unwrap() - r).abs() < 1e-12);
            }
        }

        #[test]
        fn structural_perfect_on_novel_whenever_id_covered(seed in 0u64..20) {
            let s = synth_theorem_kg(&SynthConfig { id_eval: 60, novel_eval: 30, emerging_eval: 10, ..SynthConfig::default() }, seed).unwrap();
            let cov = CoverageMatrix::build(&s.kg);
            let assessor = Assessor::from_variances(frequency_variances(&s.kg), &s.kg, &cov, CoverageMode::Binary).unwrap();
            let r = assumption_report(&s.kg, &cov, Some(&assessor), &s.partition, &[0]);
            prop_assert_eq!(r.a2_coverage_rate, Some(1.0));
            prop_assert_eq!(r.structural_novel_observed, Some(1.0));
            let bare = assumption_report(&s.kg, &cov, None, &s.partition, &[0]);
            prop_assert_eq!(bare.structural_novel_observed, Some(1.0));
            prop_assert_eq!(bare.a1_spearman, None);
        }
    }
}
