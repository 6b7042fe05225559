//! Sparse entity–relation co-occurrence built from the training split.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Triple};

/// How observed co-occurrence turns into a coverage weight in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    #[default]
    Binary,
    /// `ln(1 + n) / ln(1 + n_max)`.
    LogScaled,
    /// `tf * idf` over entity "documents" and relation "terms", divided by the global maximum.
    Tfidf,
}

impl CoverageMode {
    pub const ALL: [CoverageMode; 3] = [CoverageMode::Binary, CoverageMode::LogScaled, CoverageMode::Tfidf];

    pub fn name(self) -> &'static str {
        match self {
            CoverageMode::Binary => "binary",
            CoverageMode::LogScaled => "log_scaled",
            CoverageMode::Tfidf => "tfidf",
        }
    }
}

impl FromStr for CoverageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(CoverageMode::Binary),
            "log_scaled" | "log" => Ok(CoverageMode::LogScaled),
            "tfidf" | "tf_idf" => Ok(CoverageMode::Tfidf),
            other => Err(invalid(format!("unknown coverage mode `{other}`"))),
        }
    }
}

/// Entity-major compressed rows: for entity `e`, `relations[offsets[e]..offsets[e+1]]`
/// is the sorted list of relations observed with `e` and `counts` holds how often.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageMatrix {
    entity_count: usize,
    relation_count: usize,
    offsets: Vec<usize>,
    relations: Vec<RelationId>,
    counts: Vec<u32>,
    entity_totals: Vec<u64>,
    /// Number of distinct entities observed with each relation.
    relation_entities: Vec<u32>,
    /// Sum of slot counts per relation (two per training triple).
    relation_totals: Vec<u64>,
    max_count: u32,
    max_tfidf: f64,
}

impl CoverageMatrix {
    pub fn build(kg: &KnowledgeGraph) -> Self {
        let (ne, nr) = (kg.entity_count(), kg.relation_count());
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(2 * kg.train().len());
        for q in kg.train() {
            pairs.push((q.head.0, q.relation.0));
            pairs.push((q.tail.0, q.relation.0));
        }
        pairs.sort_unstable();

        let mut offsets = vec![0usize; ne + 1];
        let mut relations = Vec::new();
        let mut counts: Vec<u32> = Vec::new();
        let mut entity_totals = vec![0u64; ne];
        let mut relation_entities = vec![0u32; nr];
        let mut relation_totals = vec![0u64; nr];
        let mut last: Option<(u32, u32)> = None;
        for &(e, r) in &pairs {
            if last == Some((e, r)) {
                *counts.last_mut().unwrap() += 1;
            } else {
                relations.push(RelationId(r));
                counts.push(1);
                offsets[e as usize + 1] += 1;
                relation_entities[r as usize] += 1;
                last = Some((e, r));
            }
            entity_totals[e as usize] += 1;
            relation_totals[r as usize] += 1;
        }
        for e in 0..ne {
            offsets[e + 1] += offsets[e];
        }
        let max_count = counts.iter().copied().max().unwrap_or(0);

        let mut m = CoverageMatrix {
            entity_count: ne,
            relation_count: nr,
            offsets,
            relations,
            counts,
            entity_totals,
            relation_entities,
            relation_totals,
            max_count,
            max_tfidf: 0.0,
        };
        m.max_tfidf = m
            .observed()
            .map(|(e, r, _)| m.raw_tfidf(e, r))
            .fold(0.0, f64::max);
        m
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    fn row(&self, e: EntityId) -> (&[RelationId], &[u32]) {
        let i = e.index();
        if i >= self.entity_count {
            return (&[], &[]);
        }
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.relations[a..b], &self.counts[a..b])
    }

    /// Co-occurrence count of `(e, r)` in training (0 if never observed).
    pub fn count(&self, e: EntityId, r: RelationId) -> u32 {
        let (rels, counts) = self.row(e);
        match rels.binary_search(&r) {
            Ok(i) => counts[i],
            Err(_) => 0,
        }
    }

    #[inline]
    pub fn is_covered(&self, e: EntityId, r: RelationId) -> bool {
        self.count(e, r) > 0
    }

    /// Observed pairs in `(entity, relation)` order.
    pub fn observed(&self) -> impl Iterator<Item = (EntityId, RelationId, u32)> + '_ {
        (0..self.entity_count).flat_map(move |e| {
            let e = EntityId(e as u32);
            let (rels, counts) = self.row(e);
            rels.iter().zip(counts).map(move |(&r, &n)| (e, r, n))
        })
    }

    pub fn nonzero(&self) -> usize {
        self.relations.len()
    }

    /// Fraction of the dense `|E| x |R|` matrix that is non-zero.
    pub fn density(&self) -> f64 {
        self.nonzero() as f64 / (self.entity_count as f64 * self.relation_count as f64)
    }

    pub fn max_count(&self) -> u32 {
        self.max_count
    }

    pub fn relation_total(&self, r: RelationId) -> u64 {
        self.relation_totals[r.index()]
    }

    pub fn relation_entities(&self, r: RelationId) -> u32 {
        self.relation_entities[r.index()]
    }

    /// `2 - c(h, r) - c(t, r)`.
    pub fn structural_uncertainty(&self, q: &Triple) -> u8 {
        2 - self.is_covered(q.head, q.relation) as u8 - self.is_covered(q.tail, q.relation) as u8
    }

    fn raw_tfidf(&self, e: EntityId, r: RelationId) -> f64 {
        let n = self.count(e, r);
        if n == 0 {
            return 0.0;
        }
        let tf = n as f64 / self.entity_totals[e.index()] as f64;
        let idf = libm::log(self.entity_count as f64 / (1.0 + self.relation_entities[r.index()] as f64));
        tf * idf
    }

    /// Coverage weight `g(e, r)` in `[0, 1]`.
    pub fn weight(&self, e: EntityId, r: RelationId, mode: CoverageMode) -> f64 {
        let n = self.count(e, r);
        if n == 0 {
            return 0.0;
        }
        match mode {
            CoverageMode::Binary => 1.0,
            CoverageMode::LogScaled => log_scaled_weight(n, self.max_count),
            CoverageMode::Tfidf => {
                if self.max_tfidf > 0.0 {
                    (self.raw_tfidf(e, r) / self.max_tfidf).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
        }
    }

    /// `2 - g(h, r) - g(t, r)` in `[0, 2]`; equals [`Self::structural_uncertainty`]
    /// under [`CoverageMode::Binary`].
    pub fn continuous_uncertainty(&self, q: &Triple, mode: CoverageMode) -> f64 {
        2.0 - self.weight(q.head, q.relation, mode) - self.weight(q.tail, q.relation, mode)
    }
}

pub fn log_scaled_weight(n: u32, max_count: u32) -> f64 {
    if n == 0 || max_count == 0 {
        return 0.0;
    }
    (libm::log1p(n as f64) / libm::log1p(max_count as f64)).min(1.0)
}
