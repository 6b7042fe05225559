use cagp_core::eval::{auroc, paired_bootstrap, samples_from, ScoredSample};
use cagp_core::graph::GraphBuilder;
use cagp_core::oodgen::{classify, partition, synth_theorem_kg, SynthConfig};
use cagp_core::uncertainty::{alpha_grid, fit_alpha, Assessor};
use cagp_core::{embed, CoverageMatrix, CoverageMode, MixingWeight, OodClass, Split, TrainConfig};
use proptest::prelude::*;

#[test]
fn synthetic_labels_agree_with_classifier() {
    let s = synth_theorem_kg(&SynthConfig::default(), 11).unwrap();
    let cov = CoverageMatrix::build(&s.kg);
    let again = partition(&s.kg, &cov, Split::Test, s.partition.tau);
    assert_eq!(again.sizes(), s.partition.sizes());
    for class in [OodClass::Emerging, OodClass::NovelContext, OodClass::InDistribution] {
        for q in s.partition.class(class) {
            assert_eq!(classify(&s.kg, &cov, q, s.partition.tau), class);
        }
    }
    for q in s.partition.class(OodClass::InDistribution) {
        assert_eq!(cov.structural_uncertainty(q), 0);
    }
    for q in s.partition.class(OodClass::NovelContext) {
        assert!(cov.structural_uncertainty(q) > 0);
    }
}

#[test]
fn structural_signal_separates_novel_contexts_on_synthetic_graph() {
    let s = synth_theorem_kg(&SynthConfig::default(), 3).unwrap();
    let cov = CoverageMatrix::build(&s.kg);
    let cfg = TrainConfig { dim: 8, epochs: 2, batch_size: 128, ..TrainConfig::default() };
    let model = embed::train(&s.kg, &cfg).unwrap().model;
    let a = Assessor::new(&model, &s.kg, &cov, CoverageMode::Binary).unwrap();
    let half = MixingWeight::fixed_half();
    let id = a.assess_all(s.partition.class(OodClass::InDistribution), half);
    let novel = a.assess_all(s.partition.class(OodClass::NovelContext), half);
    let str_id: Vec<f64> = id.iter().map(|x| x.u_str).collect();
    let str_novel: Vec<f64> = novel.iter().map(|x| x.u_str).collect();
    assert_eq!(auroc(&samples_from(&str_id, &str_novel)).unwrap(), 1.0);
    for x in id.iter().chain(&novel) {
        assert!((0.0..=2.0).contains(&x.u_sem_norm) && (0.0..=2.0).contains(&x.u_cagp));
    }
    let w = fit_alpha(&id, &novel).unwrap();
    assert!(alpha_grid().any(|(_, g)| g == w.alpha()));
}

#[test]
fn tsv_graph_round_trip() {
    let mut b = GraphBuilder::new();
    b.add_tsv(Split::Train, "a\tr\tb\nb\tr\tc\n").unwrap();
    b.add_tsv(Split::Test, "a\tr\tc\n").unwrap();
    let kg = b.build().unwrap();
    assert_eq!((kg.entity_count(), kg.relation_count()), (3, 1));
    let cov = CoverageMatrix::build(&kg);
    // `c` was only ever a tail, but coverage ignores the role.
    assert_eq!(cov.structural_uncertainty(&kg.split(Split::Test)[0]), 0);
    assert!(GraphBuilder::new().add_tsv(Split::Train, "a\tr\n").is_err());
}

fn labeled() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            proptest::collection::vec(-3i32..3, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            proptest::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #[test]
    fn auroc_flips_under_negation((u, labels) in labeled()) {
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let fwd: Vec<ScoredSample> = u.iter().zip(&labels).map(|(&x, &l)| ScoredSample::new(x, l)).collect();
        let rev: Vec<ScoredSample> = u.iter().zip(&labels).map(|(&x, &l)| ScoredSample::new(-x, l)).collect();
        let (a, b) = (auroc(&fwd).unwrap(), auroc(&rev).unwrap());
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auroc_is_invariant_under_monotone_maps((u, labels) in labeled()) {
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let raw: Vec<ScoredSample> = u.iter().zip(&labels).map(|(&x, &l)| ScoredSample::new(x, l)).collect();
        let mapped: Vec<ScoredSample> = u.iter().zip(&labels).map(|(&x, &l)| ScoredSample::new(x.exp() * 3.0 + 1.0, l)).collect();
        prop_assert_eq!(auroc(&raw).unwrap(), auroc(&mapped).unwrap());
    }

    #[test]
    fn bootstrap_of_identical_signals_is_one_half((u, labels) in labeled(), seed in 0u64..50) {
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        prop_assert_eq!(paired_bootstrap(&u, &u, &labels, 50, seed).unwrap(), 0.5);
    }
}
