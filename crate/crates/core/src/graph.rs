//! Indexed triple stores and entity frequency statistics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Triple {
            head: EntityId(head),
            relation: RelationId(relation),
            tail: EntityId(tail),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// Bidirectional map between surface strings and dense ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocabulary {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn numbered(prefix: &str, count: usize) -> Self {
        let mut v = Vocabulary::default();
        for i in 0..count {
            v.intern(&format!("{prefix}{i}"));
        }
        v
    }
}

/// Collects labeled triples split by split, assigning ids in first-appearance order.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entities: Vocabulary,
    relations: Vocabulary,
    splits: [Vec<Triple>; 3],
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, split: Split, head: &str, relation: &str, tail: &str) {
        let h = self.entities.intern(head);
        let r = self.relations.intern(relation);
        let t = self.entities.intern(tail);
        self.splits[split as usize].push(Triple::new(h, r, t));
    }

    /// Parses tab-separated `head \t relation \t tail` lines. Line numbers in
    /// errors are 1-based.
    pub fn add_tsv(&mut self, split: Split, text: &str) -> Result<usize> {
        let mut added = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            let mut fields = line.split('\t');
            match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(h), Some(r), Some(t), None) if !h.is_empty() && !r.is_empty() && !t.is_empty() => {
                    self.add(split, h, r, t);
                    added += 1;
                }
                _ => {
                    let found = line.split('\t').count();
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("{split}: expected 3 non-empty tab-separated fields, found {found}"),
                    });
                }
            }
        }
        Ok(added)
    }

    pub fn build(self) -> Result<KnowledgeGraph> {
        let [train, valid, test] = self.splits;
        KnowledgeGraph::assemble(self.entities, self.relations, train, valid, test)
    }
}

/// Immutable triple store with train-split entity frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeGraph {
    entities: Vocabulary,
    relations: Vocabulary,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    freq: Vec<u64>,
    relation_freq: Vec<u64>,
}

impl KnowledgeGraph {
    /// Builds a graph over numbered vocabularies `e0..`, `r0..`.
    pub fn from_ids(
        entity_count: usize,
        relation_count: usize,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        Self::assemble(
            Vocabulary::numbered("e", entity_count),
            Vocabulary::numbered("r", relation_count),
            train,
            valid,
            test,
        )
    }

    fn assemble(
        entities: Vocabulary,
        relations: Vocabulary,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(invalid("training split is empty"));
        }
        let (ne, nr) = (entities.len(), relations.len());
        for q in train.iter().chain(&valid).chain(&test) {
            if q.head.index() >= ne || q.tail.index() >= ne || q.relation.index() >= nr {
                return Err(invalid(format!("triple {q:?} references ids outside the vocabulary")));
            }
        }
        let mut freq = vec![0u64; ne];
        let mut relation_freq = vec![0u64; nr];
        for q in &train {
            freq[q.head.index()] += 1;
            freq[q.tail.index()] += 1;
            relation_freq[q.relation.index()] += 1;
        }
        Ok(KnowledgeGraph {
            entities,
            relations,
            train,
            valid,
            test,
            freq,
            relation_freq,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> &Vocabulary {
        &self.entities
    }

    pub fn relations(&self) -> &Vocabulary {
        &self.relations
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    /// Number of training triples containing `e` (self-loops count twice).
    #[inline]
    pub fn freq(&self, e: EntityId) -> u64 {
        self.freq[e.index()]
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.freq
    }

    /// Number of training triples using `r`.
    pub fn relation_freq(&self, r: RelationId) -> u64 {
        self.relation_freq[r.index()]
    }

    #[inline]
    pub fn min_freq(&self, q: &Triple) -> u64 {
        self.freq(q.head).min(self.freq(q.tail))
    }

    /// Same graph with one split's triples replaced.
    pub fn with_split(&self, split: Split, triples: Vec<Triple>) -> Result<Self> {
        let mut s = [self.train.clone(), self.valid.clone(), self.test.clone()];
        s[split as usize] = triples;
        let [train, valid, test] = s;
        Self::assemble(self.entities.clone(), self.relations.clone(), train, valid, test)
    }
}

/// Multiset the frequency percentile is taken over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdBasis {
    /// `min(freq(h), freq(t))` for every training triple.
    #[default]
    TripleMinFrequency,
    /// `freq(e)` once per entity that appears in training.
    EntityFrequency,
}

impl FromStr for ThresholdBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triple_min_frequency" | "triple" => Ok(ThresholdBasis::TripleMinFrequency),
            "entity_frequency" | "entity" => Ok(ThresholdBasis::EntityFrequency),
            other => Err(invalid(format!("unknown threshold basis `{other}`"))),
        }
    }
}

/// Nearest-rank percentile of a sorted, non-empty slice.
pub fn nearest_rank(sorted: &[u64], percentile: f64) -> u64 {
    let n = sorted.len();
    let rank = libm::ceil(percentile * n as f64 - 1e-9) as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Emerging-entity threshold `tau`: the nearest-rank `percentile` of the chosen
/// frequency multiset.
pub fn frequency_threshold(kg: &KnowledgeGraph, percentile: f64, basis: ThresholdBasis) -> Result<u64> {
    if !(0.0..=1.0).contains(&percentile) {
        return Err(invalid(format!("percentile {percentile} outside [0, 1]")));
    }
    let mut values: Vec<u64> = match basis {
        ThresholdBasis::TripleMinFrequency => kg.train.iter().map(|q| kg.min_freq(q)).collect(),
        ThresholdBasis::EntityFrequency => kg.freq.iter().copied().filter(|&f| f > 0).collect(),
    };
    values.sort_unstable();
    Ok(nearest_rank(&values, percentile))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeBucket {
    pub lo: u64,
    pub hi: u64,
    pub entities: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub entity_count: usize,
    pub relation_count: usize,
    pub train_count: usize,
    pub valid_count: usize,
    pub test_count: usize,
    pub train_entity_count: usize,
    pub unseen_entity_count: usize,
    pub freq_min: u64,
    pub freq_max: u64,
    pub freq_mean: f64,
    /// `(percentile, value)` pairs over train-appearing entity frequencies.
    pub freq_quantiles: Vec<(f64, u64)>,
    /// `(percentile, value)` pairs over per-triple minimum frequencies.
    pub triple_min_freq_quantiles: Vec<(f64, u64)>,
    /// Power-of-two buckets `[lo, hi]` of train-appearing entity degree.
    pub degree_histogram: Vec<DegreeBucket>,
}

const QUANTILES: [f64; 9] = [0.05, 0.1, 0.2, 0.25, 0.3, 0.5, 0.75, 0.9, 0.95];

pub fn graph_stats(kg: &KnowledgeGraph) -> GraphStats {
    let mut seen: Vec<u64> = kg.freq.iter().copied().filter(|&f| f > 0).collect();
    seen.sort_unstable();
    let mut mins: Vec<u64> = kg.train.iter().map(|q| kg.min_freq(q)).collect();
    mins.sort_unstable();

    let mut histogram: Vec<DegreeBucket> = Vec::new();
    for &f in &seen {
        let lo = 1u64 << (63 - f.leading_zeros());
        match histogram.last_mut() {
            Some(b) if b.lo == lo => b.entities += 1,
            _ => histogram.push(DegreeBucket { lo, hi: lo * 2 - 1, entities: 1 }),
        }
    }

    GraphStats {
        entity_count: kg.entity_count(),
        relation_count: kg.relation_count(),
        train_count: kg.train.len(),
        valid_count: kg.valid.len(),
        test_count: kg.test.len(),
        train_entity_count: seen.len(),
        unseen_entity_count: kg.entity_count() - seen.len(),
        freq_min: seen[0],
        freq_max: seen[seen.len() - 1],
        freq_mean: seen.iter().sum::<u64>() as f64 / seen.len() as f64,
        freq_quantiles: QUANTILES.iter().map(|&p| (p, nearest_rank(&seen, p))).collect(),
        triple_min_freq_quantiles: QUANTILES.iter().map(|&p| (p, nearest_rank(&mins, p))).collect(),
        degree_histogram: histogram,
    }
}
