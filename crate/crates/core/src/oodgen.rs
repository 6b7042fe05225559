//! OOD partitioning, random corruptions, frequency matching and synthetic fixtures.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coverage::CoverageMatrix;
use crate::error::{invalid, Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, Split, Triple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodClass {
    Emerging,
    NovelContext,
    InDistribution,
}

impl OodClass {
    pub const ALL: [OodClass; 3] = [OodClass::Emerging, OodClass::NovelContext, OodClass::InDistribution];

    pub fn name(self) -> &'static str {
        match self {
            OodClass::Emerging => "emerging",
            OodClass::NovelContext => "novel_context",
            OodClass::InDistribution => "in_distribution",
        }
    }

    pub fn is_ood(self) -> bool {
        self != OodClass::InDistribution
    }
}

impl fmt::Display for OodClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OodClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emerging" => Ok(OodClass::Emerging),
            "novel_context" | "novel" => Ok(OodClass::NovelContext),
            "in_distribution" | "id" => Ok(OodClass::InDistribution),
            other => Err(invalid(format!("unknown OOD class `{other}`"))),
        }
    }
}

/// Emerging if the rarer endpoint is below `tau`, novel context if some
/// endpoint never occurs with the relation in training, otherwise ID.
pub fn classify(kg: &KnowledgeGraph, coverage: &CoverageMatrix, q: &Triple, tau: u64) -> OodClass {
    if kg.min_freq(q) < tau {
        OodClass::Emerging
    } else if coverage.structural_uncertainty(q) > 0 {
        OodClass::NovelContext
    } else {
        OodClass::InDistribution
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OodPartition {
    pub emerging: Vec<Triple>,
    pub novel_context: Vec<Triple>,
    pub in_distribution: Vec<Triple>,
    pub tau: u64,
}

impl OodPartition {
    pub fn from_labeled(labeled: impl IntoIterator<Item = (Triple, OodClass)>, tau: u64) -> Self {
        let mut p = OodPartition { tau, ..OodPartition::default() };
        for (q, class) in labeled {
            p.class_mut(class).push(q);
        }
        p
    }

    pub fn class(&self, class: OodClass) -> &[Triple] {
        match class {
            OodClass::Emerging => &self.emerging,
            OodClass::NovelContext => &self.novel_context,
            OodClass::InDistribution => &self.in_distribution,
        }
    }

    fn class_mut(&mut self, class: OodClass) -> &mut Vec<Triple> {
        match class {
            OodClass::Emerging => &mut self.emerging,
            OodClass::NovelContext => &mut self.novel_context,
            OodClass::InDistribution => &mut self.in_distribution,
        }
    }

    pub fn len(&self) -> usize {
        self.emerging.len() + self.novel_context.len() + self.in_distribution.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Emerging followed by novel-context triples.
    pub fn ood(&self) -> Vec<Triple> {
        self.emerging.iter().chain(&self.novel_context).copied().collect()
    }

    /// `(emerging, novel, id)` sizes.
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.emerging.len(), self.novel_context.len(), self.in_distribution.len())
    }
}

pub fn partition_triples(kg: &KnowledgeGraph, coverage: &CoverageMatrix, triples: &[Triple], tau: u64) -> OodPartition {
    OodPartition::from_labeled(triples.iter().map(|q| (*q, classify(kg, coverage, q, tau))), tau)
}

/// Partition of one split of `kg`; `coverage` must be built from the training split.
pub fn partition(kg: &KnowledgeGraph, coverage: &CoverageMatrix, split: Split, tau: u64) -> OodPartition {
    partition_triples(kg, coverage, kg.split(split), tau)
}

/// Per-triple partition record in input order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub triple: Triple,
    pub class: OodClass,
    pub min_freq: u64,
    pub head_covered: bool,
    pub tail_covered: bool,
}

pub fn partition_rows(kg: &KnowledgeGraph, coverage: &CoverageMatrix, triples: &[Triple], tau: u64) -> Vec<PartitionRow> {
    triples
        .iter()
        .map(|q| PartitionRow {
            triple: *q,
            class: classify(kg, coverage, q, tau),
            min_freq: kg.min_freq(q),
            head_covered: coverage.is_covered(q.head, q.relation),
            tail_covered: coverage.is_covered(q.tail, q.relation),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTriple {
    pub triple: Triple,
    pub is_ood: bool,
}

/// Every triple of `split` as ID followed by one tail corruption of each as OOD.
/// Tails are uniform over all entities except the original tail.
pub fn random_corruptions(kg: &KnowledgeGraph, split: Split, seed: u64) -> Result<Vec<LabeledTriple>> {
    let source = kg.split(split);
    if source.is_empty() {
        return Err(invalid(format!("split `{split}` is empty")));
    }
    let n = kg.entity_count() as u32;
    if n < 2 {
        return Err(invalid("cannot corrupt tails with a single entity"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<LabeledTriple> = source.iter().map(|&triple| LabeledTriple { triple, is_ood: false }).collect();
    for q in source {
        let mut t = rng.random_range(0..n - 1);
        if t >= q.tail.0 {
            t += 1;
        }
        out.push(LabeledTriple { triple: Triple { tail: EntityId(t), ..*q }, is_ood: true });
    }
    Ok(out)
}

/// Sorted index of training `(freq(head), freq(tail))` pairs in both orientations.
#[derive(Clone, Debug)]
pub struct FrequencyPairIndex {
    // distinct first coordinates with their sorted second coordinates
    rows: Vec<(u64, Vec<u64>)>,
}

impl FrequencyPairIndex {
    pub fn build(kg: &KnowledgeGraph) -> Self {
        let mut pairs: Vec<(u64, u64)> = Vec::with_capacity(2 * kg.train().len());
        for q in kg.train() {
            let (a, b) = (kg.freq(q.head), kg.freq(q.tail));
            pairs.push((a, b));
            pairs.push((b, a));
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut rows: Vec<(u64, Vec<u64>)> = Vec::new();
        for (a, b) in pairs {
            match rows.last_mut() {
                Some((k, v)) if *k == a => v.push(b),
                _ => rows.push((a, vec![b])),
            }
        }
        FrequencyPairIndex { rows }
    }

    /// Whether some indexed pair lies within `eps` of `(a, b)` in both coordinates.
    pub fn matches(&self, a: u64, b: u64, eps: u64) -> bool {
        let start = self.rows.partition_point(|(k, _)| *k < a.saturating_sub(eps));
        let hi = a.saturating_add(eps);
        self.rows[start..].iter().take_while(|(k, _)| *k <= hi).any(|(_, v)| {
            let i = v.partition_point(|&x| x < b.saturating_sub(eps));
            i < v.len() && v[i] <= b.saturating_add(eps)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedFraction {
    pub epsilon: u64,
    pub matched: usize,
    pub total: usize,
    pub fraction: f64,
}

/// Fraction of `novel` triples with a training triple whose endpoint
/// frequencies are each within epsilon. `u64::MAX` stands for an unbounded epsilon.
/// An empty `novel` list reports a fraction of 1.
pub fn verify_a3(kg: &KnowledgeGraph, novel: &[Triple], epsilons: &[u64]) -> Vec<MatchedFraction> {
    let index = FrequencyPairIndex::build(kg);
    epsilons
        .iter()
        .map(|&epsilon| {
            let matched = novel.iter().filter(|q| index.matches(kg.freq(q.head), kg.freq(q.tail), epsilon)).count();
            let fraction = if novel.is_empty() { 1.0 } else { matched as f64 / novel.len() as f64 };
            MatchedFraction { epsilon, matched, total: novel.len(), fraction }
        })
        .collect()
}

/// Knobs of [`synth_theorem_kg`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub entities: usize,
    pub relations: usize,
    /// Exponent of the power-law weights spreading extra degree over core entities.
    pub skew: f64,
    /// Fraction of core `(entity, relation)` pairs that never occur in training.
    pub held_out_fraction: f64,
    pub emerging_entities: usize,
    /// Lowest training frequency of a core entity.
    pub min_core_freq: usize,
    pub id_eval: usize,
    pub novel_eval: usize,
    pub emerging_eval: usize,
    /// Probability that an emerging query uses a relation its emerging entity has.
    pub emerging_covered_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            entities: 200,
            relations: 10,
            skew: 1.2,
            held_out_fraction: 0.5,
            emerging_entities: 20,
            min_core_freq: 20,
            id_eval: 300,
            novel_eval: 150,
            emerging_eval: 100,
            emerging_covered_rate: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticKg {
    /// Graph whose test and validation splits hold the evaluation triples.
    pub kg: KnowledgeGraph,
    pub partition: OodPartition,
    pub valid_partition: OodPartition,
}

const MAX_ATTEMPTS: usize = 10_000;

/// Random graph with a power-law core, held-out entity–relation pairs and a few
/// rare entities, together with an evaluation set of known class.
///
/// Every novel-context query shares its head and tail with ID queries, so both
/// classes have identical endpoint frequencies, and its endpoints also appear
/// together in a training triple. Emerging entities have training
/// frequency 1 or 2 and the returned threshold sits halfway below the core minimum.
pub fn synth_theorem_kg(cfg: &SynthConfig, seed: u64) -> Result<SyntheticKg> {
    let core = cfg.entities.checked_sub(cfg.emerging_entities).unwrap_or(0);
    let nr = cfg.relations;
    if nr == 0 || core < 2 {
        return Err(invalid("synthetic graph needs at least one relation and two core entities"));
    }
    if !(0.0..1.0).contains(&cfg.held_out_fraction) {
        return Err(invalid(format!("held-out fraction {} outside [0, 1)", cfg.held_out_fraction)));
    }
    if !(cfg.skew.is_finite() && cfg.skew >= 0.0) || !(0.0..=1.0).contains(&cfg.emerging_covered_rate) {
        return Err(invalid("skew must be non-negative and the emerging covered rate in [0, 1]"));
    }
    let held = libm::round(cfg.held_out_fraction * nr as f64) as usize;
    let kept = nr - held;
    if kept == 0 {
        return Err(invalid("every relation of a core entity would be held out"));
    }
    if cfg.min_core_freq < kept.max(3) {
        return Err(invalid(format!("min core frequency must be at least {}", kept.max(3))));
    }
    if cfg.novel_eval > 0 && held == 0 {
        return Err(invalid("novel-context queries need held-out pairs"));
    }
    if cfg.emerging_eval > 0 && cfg.emerging_entities == 0 {
        return Err(invalid("emerging queries need emerging entities"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let relations: Vec<u32> = (0..nr as u32).collect();
    let mut covered: Vec<Vec<u32>> = (0..core)
        .map(|_| {
            let mut rs = relations.clone();
            rs.shuffle(&mut rng);
            rs.truncate(kept);
            rs.sort_unstable();
            rs
        })
        .collect();
    let mut holders: Vec<Vec<u32>> = vec![Vec::new(); nr];
    for (e, rs) in covered.iter().enumerate() {
        for &r in rs {
            holders[r as usize].push(e as u32);
        }
    }
    if holders.iter().any(|h| h.len() < 2) {
        return Err(invalid("some relation is covered by fewer than two core entities"));
    }

    // head degree of each core entity: the floor plus a power-law share of an equal extra budget
    let weights: Vec<f64> = (0..core).map(|i| libm::pow((i + 1) as f64, -cfg.skew)).collect();
    let wsum: f64 = weights.iter().sum();
    let budget = (core * cfg.min_core_freq) as f64 / 2.0;
    let mut train: BTreeSet<Triple> = BTreeSet::new();
    let push_edge = |train: &mut BTreeSet<Triple>, rng: &mut ChaCha8Rng, h: u32, r: u32| -> Result<()> {
        for _ in 0..MAX_ATTEMPTS {
            let t = holders[r as usize][rng.random_range(0..holders[r as usize].len())];
            if t != h && train.insert(Triple::new(h, r, t)) {
                return Ok(());
            }
        }
        Err(invalid("knobs leave too few distinct training triples"))
    };
    for e in 0..core {
        let room: usize = covered[e].iter().map(|&r| holders[r as usize].len() - 1).sum::<usize>() / 2;
        let degree = (cfg.min_core_freq.div_ceil(2) + libm::round(budget * weights[e] / wsum) as usize).min(room);
        for &r in &covered[e].clone() {
            push_edge(&mut train, &mut rng, e as u32, r)?;
        }
        for _ in covered[e].len()..degree {
            let r = covered[e][rng.random_range(0..kept)];
            push_edge(&mut train, &mut rng, e as u32, r)?;
        }
    }
    // top up entities whose tail appearances left them under the floor
    let mut freq = vec![0usize; cfg.entities];
    for q in &train {
        freq[q.head.index()] += 1;
        freq[q.tail.index()] += 1;
    }
    for e in 0..core {
        while freq[e] < cfg.min_core_freq {
            let r = covered[e][rng.random_range(0..kept)];
            push_edge(&mut train, &mut rng, e as u32, r)?;
            freq[e] += 1;
        }
    }
    for e in 0..cfg.emerging_entities {
        let id = (core + e) as u32;
        let mut rs = relations.clone();
        rs.shuffle(&mut rng);
        let count = 1 + (e % 2);
        rs.truncate(count.min(nr));
        for &r in &rs {
            let t = holders[r as usize][rng.random_range(0..holders[r as usize].len())];
            if rng.random_bool(0.5) {
                train.insert(Triple::new(id, r, t));
            } else {
                train.insert(Triple::new(t, r, id));
            }
        }
        rs.sort_unstable();
        covered.push(rs);
    }

    let layout = Layout { core, relations: &relations, covered: &covered, holders: &holders };
    let labeled = layout.queries(cfg, &mut rng, &mut train)?;
    let valid_labeled = layout.queries(cfg, &mut rng, &mut train)?;

    let tau = (cfg.min_core_freq as u64).div_ceil(2).max(3);
    let test: Vec<Triple> = labeled.iter().map(|(q, _)| *q).collect();
    let valid: Vec<Triple> = valid_labeled.iter().map(|(q, _)| *q).collect();
    let kg = KnowledgeGraph::from_ids(cfg.entities, nr, train.into_iter().collect(), valid, test)?;
    let partition = OodPartition::from_labeled(labeled, tau);
    let valid_partition = OodPartition::from_labeled(valid_labeled, tau);
    Ok(SyntheticKg { kg, partition, valid_partition })
}

struct Layout<'a> {
    core: usize,
    relations: &'a [u32],
    covered: &'a [Vec<u32>],
    holders: &'a [Vec<u32>],
}

impl Layout<'_> {
    fn queries(&self, cfg: &SynthConfig, rng: &mut ChaCha8Rng, train: &mut BTreeSet<Triple>) -> Result<Vec<(Triple, OodClass)>> {
        let Layout { core, relations, covered, holders } = *self;
        let (nr, kept) = (relations.len(), covered[0].len());
        let mut labeled: Vec<(Triple, OodClass)> = Vec::new();
        let mut pairs: Vec<(u32, u32, Vec<u32>, Vec<u32>)> = Vec::new();
        let mut attempts = 0;
        while pairs.len() < cfg.novel_eval {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(invalid("could not place the requested novel-context queries"));
            }
            let h = rng.random_range(0..core as u32);
            let t = rng.random_range(0..core as u32);
            if h == t {
                continue;
            }
            let (ch, ct) = (&covered[h as usize], &covered[t as usize]);
            let shared: Vec<u32> = ch.iter().copied().filter(|r| ct.binary_search(r).is_ok()).collect();
            let open: Vec<u32> = relations
                .iter()
                .copied()
                .filter(|r| ch.binary_search(r).is_err() || ct.binary_search(r).is_err())
                .collect();
            let shared: Vec<u32> = shared.into_iter().filter(|&r| !train.contains(&Triple::new(h, r, t))).collect();
            if shared.is_empty() || open.is_empty() {
                continue;
            }
            // reversed training triple over a shared relation gives an exact frequency match
            let anchor = Triple::new(t, shared[rng.random_range(0..shared.len())], h);
            train.insert(anchor);
            let r = open[rng.random_range(0..open.len())];
            labeled.push((Triple::new(h, r, t), OodClass::NovelContext));
            pairs.push((h, t, shared, open));
        }

        let mut ids = 0;
        attempts = 0;
        while ids < cfg.id_eval {
            if let Some((h, t, shared, _)) = pairs.get(ids % pairs.len().max(1)) {
                let r = shared[rng.random_range(0..shared.len())];
                labeled.push((Triple::new(*h, r, *t), OodClass::InDistribution));
                ids += 1;
                continue;
            }
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(invalid("could not place the requested ID queries"));
            }
            let h = rng.random_range(0..core as u32);
            let r = covered[h as usize][rng.random_range(0..kept)];
            let t = holders[r as usize][rng.random_range(0..holders[r as usize].len())];
            let q = Triple::new(h, r, t);
            if t != h && !train.contains(&q) {
                labeled.push((q, OodClass::InDistribution));
                ids += 1;
            }
        }

        for i in 0..cfg.emerging_eval {
            let em = (core + i % cfg.emerging_entities) as u32;
            let own = &covered[em as usize];
            let r = if rng.random_bool(cfg.emerging_covered_rate) {
                own[rng.random_range(0..own.len())]
            } else {
                relations[rng.random_range(0..nr)]
            };
            let t = holders[r as usize][rng.random_range(0..holders[r as usize].len())];
            let q = if rng.random_bool(0.5) { Triple::new(em, r, t) } else { Triple::new(t, r, em) };
            labeled.push((q, OodClass::Emerging));
        }
        Ok(labeled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::tiny_kg;
    use proptest::prelude::*;

    #[test]
    fn tiny_kg_classes() {
        let kg = tiny_kg();
        let cov = CoverageMatrix::build(&kg);
        // freqs A=3 B=2 C=3; c(A, r2) = 0
        assert_eq!(classify(&kg, &cov, &Triple::new(0, 1, 1), 2), OodClass::NovelContext);
        assert_eq!(classify(&kg, &cov, &Triple::new(0, 0, 2), 2), OodClass::InDistribution);
        assert_eq!(classify(&kg, &cov, &Triple::new(0, 0, 2), 4), OodClass::Emerging);
    }

    #[test]
    fn unseen_head_is_emerging() {
        let kg = KnowledgeGraph::from_ids(3, 1, vec![Triple::new(0, 0, 1)], vec![], vec![Triple::new(2, 0, 1)]).unwrap();
        let cov = CoverageMatrix::build(&kg);
        let p = partition(&kg, &cov, Split::Test, 1);
        assert_eq!(p.sizes(), (1, 0, 0));
    }

    #[test]
    fn two_entity_corruption_is_forced() {
        let kg = KnowledgeGraph::from_ids(2, 1, vec![Triple::new(0, 0, 1)], vec![], vec![Triple::new(0, 0, 1)]).unwrap();
        let out = random_corruptions(&kg, Split::Test, 9).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1], LabeledTriple { triple: Triple::new(0, 0, 0), is_ood: true });
        let single = KnowledgeGraph::from_ids(1, 1, vec![Triple::new(0, 0, 0)], vec![], vec![Triple::new(0, 0, 0)]).unwrap();
        assert!(random_corruptions(&single, Split::Test, 0).is_err());
        assert!(random_corruptions(&kg, Split::Valid, 0).is_err());
    }

    #[test]
    fn corruptions_are_seeded() {
        let kg = tiny_kg();
        let a = random_corruptions(&kg, Split::Train, 4).unwrap();
        assert_eq!(a, random_corruptions(&kg, Split::Train, 4).unwrap());
        assert_eq!(a.iter().filter(|x| x.is_ood).count(), kg.train().len());
    }

    /// (A, r1, B) five times and (C, r2, C): freqs A=5 B=5 C=2; training pairs
    /// (5, 5) and (2, 2). The query (A, r2, C) has pair (5, 2).
    #[test]
    fn a3_counterexample() {
        let mut train = vec![Triple::new(0, 0, 1); 5];
        train.push(Triple::new(2, 1, 2));
        let kg = KnowledgeGraph::from_ids(3, 2, train, vec![], vec![]).unwrap();
        let q = [Triple::new(0, 1, 2)];
        let r = verify_a3(&kg, &q, &[0, 1, 2, 3, u64::MAX]);
        let got: Vec<usize> = r.iter().map(|m| m.matched).collect();
        assert_eq!(got, vec![0, 0, 0, 1, 1]);
        assert_eq!(r[4].fraction, 1.0);
    }

    #[test]
    fn a3_matches_either_orientation() {
        // training pair (3, 1) only; query pair (1, 3)
        let train = vec![Triple::new(0, 0, 1), Triple::new(0, 0, 2), Triple::new(0, 1, 3)];
        let kg = KnowledgeGraph::from_ids(4, 2, train, vec![], vec![]).unwrap();
        let q = [Triple::new(1, 1, 0)];
        assert_eq!(verify_a3(&kg, &q, &[0])[0].matched, 1);
    }

    #[test]
    fn synth_default_contract() {
        let cfg = SynthConfig::default();
        let s = synth_theorem_kg(&cfg, 7).unwrap();
        assert_eq!(s.partition.sizes(), (cfg.emerging_eval, cfg.novel_eval, cfg.id_eval));
        let core = cfg.entities - cfg.emerging_entities;
        for e in 0..cfg.entities as u32 {
            let f = s.kg.freq(EntityId(e));
            if (e as usize) < core {
                assert!(f >= 20, "core entity {e} has frequency {f}");
            } else {
                assert!(f <= 2 && f >= 1, "emerging entity {e} has frequency {f}");
            }
        }
        // labels agree with the partition rule
        let cov = CoverageMatrix::build(&s.kg);
        let p = partition(&s.kg, &cov, Split::Test, s.partition.tau);
        assert_eq!(p, s.partition);
        for q in &p.novel_context {
            assert!(cov.structural_uncertainty(q) >= 1);
        }
        for q in &p.in_distribution {
            assert_eq!(cov.structural_uncertainty(q), 0);
        }
        // exact frequency matching between novel and ID endpoints
        let a3 = verify_a3(&s.kg, &p.novel_context, &[0, 1, 5]);
        assert!(a3.iter().all(|m| m.fraction == 1.0));
        assert_eq!(synth_theorem_kg(&cfg, 7).unwrap().kg, s.kg);
    }

    #[test]
    fn synth_without_ood_is_all_id() {
        let cfg = SynthConfig { held_out_fraction: 0.0, emerging_entities: 0, novel_eval: 0, emerging_eval: 0, ..SynthConfig::default() };
        let s = synth_theorem_kg(&cfg, 1).unwrap();
        assert_eq!(s.partition.sizes(), (0, 0, cfg.id_eval));
    }

    #[test]
    fn synth_rejects_infeasible_knobs() {
        let base = SynthConfig::default();
        for bad in [
            SynthConfig { held_out_fraction: 1.0, ..base.clone() },
            SynthConfig { emerging_entities: 300, ..base.clone() },
            SynthConfig { relations: 0, ..base.clone() },
            SynthConfig { min_core_freq: 2, ..base.clone() },
            SynthConfig { held_out_fraction: 0.0, ..base.clone() },
            SynthConfig { emerging_entities: 0, ..base.clone() },
        ] {
            assert!(matches!(synth_theorem_kg(&bad, 0), Err(Error::InvalidInput(_))), "{bad:?}");
        }
    }

    fn arb_kg() -> impl Strategy<Value = KnowledgeGraph> {
        let triple = (0u32..8, 0u32..3, 0u32..8).prop_map(|(h, r, t)| Triple::new(h, r, t));
        (proptest::collection::vec(triple.clone(), 1..30), proptest::collection::vec(triple, 0..30))
            .prop_map(|(train, test)| KnowledgeGraph::from_ids(8, 3, train, vec![], test).unwrap())
    }

    proptest! {
        #[test]
        fn partition_invariants(kg in arb_kg(), tau in 0u64..6) {
            let cov = CoverageMatrix::build(&kg);
            let p = partition(&kg, &cov, Split::Test, tau);
            prop_assert_eq!(p.len(), kg.split(Split::Test).len());
            let mut all = p.ood();
            all.extend(&p.in_distribution);
            let mut expected = kg.split(Split::Test).to_vec();
            all.sort();
            expected.sort();
            prop_assert_eq!(all, expected);
            for q in &p.emerging {
                prop_assert!(kg.min_freq(q) < tau);
            }
            for q in &p.novel_context {
                prop_assert!(kg.min_freq(q) >= tau);
                prop_assert!(cov.structural_uncertainty(q) >= 1);
            }
            for q in &p.in_distribution {
                prop_assert!(kg.min_freq(q) >= tau);
                prop_assert_eq!(cov.structural_uncertainty(q), 0);
            }
        }

        #[test]
        fn a3_monotone_in_epsilon(kg in arb_kg()) {
            let r = verify_a3(&kg, kg.split(Split::Test), &[0, 1, 2, 4, 8, u64::MAX]);
            for w in r.windows(2) {
                prop_assert!(w[0].matched <= w[1].matched);
            }
            prop_assert_eq!(r[5].matched, kg.split(Split::Test).len());
        }

        #[test]
        fn a3_index_matches_brute_force(kg in arb_kg(), eps in 0u64..4) {
            let index = FrequencyPairIndex::build(&kg);
            for q in kg.split(Split::Test) {
                let (a, b) = (kg.freq(q.head), kg.freq(q.tail));
                let brute = kg.train().iter().any(|p| {
                    let (x, y) = (kg.freq(p.head), kg.freq(p.tail));
                    (a.abs_diff(x) <= eps && b.abs_diff(y) <= eps) || (a.abs_diff(y) <= eps && b.abs_diff(x) <= eps)
                });
                prop_assert_eq!(index.matches(a, b, eps), brute);
            }
        }

        #[test]
        fn corruption_never_returns_source(kg in arb_kg(), seed in any::<u64>()) {
            let out = random_corruptions(&kg, Split::Train, seed).unwrap();
            let n = kg.train().len();
            for (src, bad) in out[..n].iter().zip(&out[n..]) {
                prop_assert_eq!((src.triple.head, src.triple.relation), (bad.triple.head, bad.triple.relation));
                prop_assert_ne!(src.triple.tail, bad.triple.tail);
            }
        }
    }
}
