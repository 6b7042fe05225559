//! Diagonal-Gaussian entity embeddings trained by reparameterized sampling.
//!
//! Each entity `e` carries a mean row `mu_e` and a log-variance row `ell_e`;
//! relations are point estimates. A training step draws one embedding per
//! entity slot, scores the positive triple against `k` uniform corruptions
//! (alternating tail and head), and minimizes sigmoid cross-entropy plus a
//! `beta`-weighted KL penalty towards `N(0, I)` over the entities touched by the
//! batch.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Triple};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;
/// Initial log-variance, `ln 0.1`.
pub const LOG_VAR_INIT: f64 = -2.302_585_092_994_046;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    DistMult,
    TransE,
    ComplEx,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 3] = [ScorerKind::DistMult, ScorerKind::TransE, ScorerKind::ComplEx];

    /// Real parameters per entity row. ComplEx stores `dim` complex numbers as
    /// `[re_0..re_{d-1}, im_0..im_{d-1}]`.
    pub fn entity_width(self, dim: usize) -> usize {
        match self {
            ScorerKind::ComplEx => 2 * dim,
            _ => dim,
        }
    }

    pub fn relation_width(self, dim: usize) -> usize {
        self.entity_width(dim)
    }

    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::DistMult => "distmult",
            ScorerKind::TransE => "transe",
            ScorerKind::ComplEx => "complex",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ScorerKind::DistMult => 0,
            ScorerKind::TransE => 1,
            ScorerKind::ComplEx => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(ScorerKind::DistMult),
            1 => Ok(ScorerKind::TransE),
            2 => Ok(ScorerKind::ComplEx),
            c => Err(invalid(format!("unknown scorer code {c}"))),
        }
    }

    /// Plausibility of `(h, r, t)` for already-drawn vectors.
    pub fn score(self, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
        match self {
            ScorerKind::DistMult => h.iter().zip(r).zip(t).map(|((a, b), c)| a * b * c).sum(),
            ScorerKind::TransE => {
                let sq: f64 = h.iter().zip(r).zip(t).map(|((a, b), c)| (a + b - c) * (a + b - c)).sum();
                -libm::sqrt(sq)
            }
            ScorerKind::ComplEx => {
                let d = h.len() / 2;
                let (hr, hi) = h.split_at(d);
                let (rr, ri) = r.split_at(d);
                let (tr, ti) = t.split_at(d);
                (0..d)
                    .map(|j| {
                        hr[j] * rr[j] * tr[j] + hi[j] * rr[j] * ti[j] + hr[j] * ri[j] * ti[j]
                            - hi[j] * ri[j] * tr[j]
                    })
                    .sum()
            }
        }
    }

    /// Adds `upstream * d score / d x` into `gh`, `gr`, `gt`.
    pub fn accumulate_grad(
        self,
        h: &[f64],
        r: &[f64],
        t: &[f64],
        upstream: f64,
        gh: &mut [f64],
        gr: &mut [f64],
        gt: &mut [f64],
    ) {
        match self {
            ScorerKind::DistMult => {
                let n = h.len();
                let (r, t, gh, gr, gt) = (&r[..n], &t[..n], &mut gh[..n], &mut gr[..n], &mut gt[..n]);
                for j in 0..n {
                    let (a, b, c) = (h[j], r[j], t[j]);
                    gh[j] += upstream * b * c;
                    gr[j] += upstream * a * c;
                    gt[j] += upstream * a * b;
                }
            }
            ScorerKind::TransE => {
                let sq: f64 = h.iter().zip(r).zip(t).map(|((a, b), c)| (a + b - c) * (a + b - c)).sum();
                let norm = libm::sqrt(sq);
                if norm == 0.0 {
                    return;
                }
                for j in 0..h.len() {
                    let g = -upstream * (h[j] + r[j] - t[j]) / norm;
                    gh[j] += g;
                    gr[j] += g;
                    gt[j] -= g;
                }
            }
            ScorerKind::ComplEx => {
                let d = h.len() / 2;
                for j in 0..d {
                    let (hr, hi) = (h[j], h[d + j]);
                    let (rr, ri) = (r[j], r[d + j]);
                    let (tr, ti) = (t[j], t[d + j]);
                    gh[j] += upstream * (rr * tr + ri * ti);
                    gh[d + j] += upstream * (rr * ti - ri * tr);
                    gr[j] += upstream * (hr * tr + hi * ti);
                    gr[d + j] += upstream * (hr * ti - hi * tr);
                    gt[j] += upstream * (hr * rr - hi * ri);
                    gt[d + j] += upstream * (hi * rr + hr * ri);
                }
            }
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "distmult" => Ok(ScorerKind::DistMult),
            "transe" => Ok(ScorerKind::TransE),
            "complex" => Ok(ScorerKind::ComplEx),
            other => Err(invalid(format!("unknown scorer `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam,
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(invalid(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub scorer: ScorerKind,
    pub dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub kl_weight: f64,
    pub epochs: usize,
    pub negatives: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scorer: ScorerKind::DistMult,
            dim: 100,
            batch_size: 2048,
            learning_rate: 1e-3,
            kl_weight: 0.01,
            epochs: 50,
            negatives: 32,
            optimizer: Optimizer::Sgd,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.batch_size == 0 || self.negatives == 0 {
            return Err(invalid("dim, batch_size and negatives must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be positive and finite"));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return Err(invalid("kl_weight must be non-negative and finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianEmbeddingModel {
    scorer: ScorerKind,
    dim: usize,
    entity_count: usize,
    relation_count: usize,
    mu: Vec<f64>,
    log_var: Vec<f64>,
    relation: Vec<f64>,
}

#[inline]
fn std_dev(log_var: f64) -> f64 {
    libm::exp(0.5 * log_var.clamp(LOG_VAR_MIN, LOG_VAR_MAX))
}

#[inline]
fn variance(log_var: f64) -> f64 {
    libm::exp(log_var.clamp(LOG_VAR_MIN, LOG_VAR_MAX))
}

impl GaussianEmbeddingModel {
    /// Means uniform in `±0.5/sqrt(dim)`, log-variances at `ln 0.1`.
    pub fn initialize<R: Rng>(
        scorer: ScorerKind,
        entity_count: usize,
        relation_count: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 0.5 / libm::sqrt(dim as f64);
        let ew = scorer.entity_width(dim);
        let rw = scorer.relation_width(dim);
        let mu = (0..entity_count * ew).map(|_| rng.random_range(-bound..bound)).collect();
        let relation = (0..relation_count * rw).map(|_| rng.random_range(-bound..bound)).collect();
        GaussianEmbeddingModel {
            scorer,
            dim,
            entity_count,
            relation_count,
            mu,
            log_var: vec![LOG_VAR_INIT; entity_count * ew],
            relation,
        }
    }

    pub fn from_parts(
        scorer: ScorerKind,
        dim: usize,
        entity_count: usize,
        relation_count: usize,
        mu: Vec<f64>,
        log_var: Vec<f64>,
        relation: Vec<f64>,
    ) -> Result<Self> {
        let ew = scorer.entity_width(dim) * entity_count;
        let rw = scorer.relation_width(dim) * relation_count;
        for (len, expected) in [(mu.len(), ew), (log_var.len(), ew), (relation.len(), rw)] {
            if len != expected {
                return Err(Error::DimensionMismatch { expected, found: len });
            }
        }
        if log_var.iter().chain(&mu).chain(&relation).any(|x| !x.is_finite()) {
            return Err(invalid("model parameters must be finite"));
        }
        Ok(GaussianEmbeddingModel {
            scorer,
            dim,
            entity_count,
            relation_count,
            mu,
            log_var,
            relation,
        })
    }

    pub fn scorer(&self) -> ScorerKind {
        self.scorer
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn entity_width(&self) -> usize {
        self.scorer.entity_width(self.dim)
    }

    pub fn relation_width(&self) -> usize {
        self.scorer.relation_width(self.dim)
    }

    pub fn mu(&self, e: EntityId) -> &[f64] {
        let w = self.entity_width();
        &self.mu[e.index() * w..(e.index() + 1) * w]
    }

    pub fn log_var(&self, e: EntityId) -> &[f64] {
        let w = self.entity_width();
        &self.log_var[e.index() * w..(e.index() + 1) * w]
    }

    pub fn relation(&self, r: RelationId) -> &[f64] {
        let w = self.relation_width();
        &self.relation[r.index() * w..(r.index() + 1) * w]
    }

    /// Flat row-major parameter matrices `(mu, log_var, relation)`.
    pub fn parameters(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.mu, &self.log_var, &self.relation)
    }

    pub fn parameters_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        (&mut self.mu, &mut self.log_var, &mut self.relation)
    }

    /// `mu_e + exp(ell_e / 2) * noise`.
    pub fn sample_entity(&self, e: EntityId, noise: &[f64]) -> Result<Vec<f64>> {
        let w = self.entity_width();
        if noise.len() != w {
            return Err(Error::DimensionMismatch { expected: w, found: noise.len() });
        }
        Ok(self
            .mu(e)
            .iter()
            .zip(self.log_var(e))
            .zip(noise)
            .map(|((m, l), z)| m + std_dev(*l) * z)
            .collect())
    }

    /// Mean variance across the entity's parameter dimensions.
    pub fn mean_variance(&self, e: EntityId) -> f64 {
        let lv = self.log_var(e);
        lv.iter().map(|&l| variance(l)).sum::<f64>() / lv.len() as f64
    }

    /// `KL(N(mu_e, diag exp(ell_e)) || N(0, I))`.
    pub fn kl_term(&self, e: EntityId) -> f64 {
        kl_divergence(self.mu(e), self.log_var(e))
    }

    /// Score of `q` for drawn head and tail vectors.
    pub fn score(&self, q: &Triple, head: &[f64], tail: &[f64]) -> Result<f64> {
        let w = self.entity_width();
        for v in [head, tail] {
            if v.len() != w {
                return Err(Error::DimensionMismatch { expected: w, found: v.len() });
            }
        }
        Ok(self.scorer.score(head, self.relation(q.relation), tail))
    }

    /// Score of `q` at the means.
    pub fn score_means(&self, q: &Triple) -> f64 {
        self.scorer.score(self.mu(q.head), self.relation(q.relation), self.mu(q.tail))
    }

    /// Raw rank of the true tail among all entities scored at the means. Ties
    /// with the true tail are resolved in its favour.
    pub fn tail_rank(&self, q: &Triple) -> usize {
        let (h, r) = (self.mu(q.head), self.relation(q.relation));
        let truth = self.scorer.score(h, r, self.mu(q.tail));
        let ew = self.entity_width();
        1 + self.mu.chunks_exact(ew).filter(|t| self.scorer.score(h, r, t) > truth).count()
    }

    fn std_table(&self) -> Vec<f64> {
        self.log_var.iter().map(|&l| std_dev(l)).collect()
    }
}

pub fn kl_divergence(mu: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(&m, &l)| {
            let l = l.clamp(LOG_VAR_MIN, LOG_VAR_MAX);
            libm::exp(l) + m * m - 1.0 - l
        })
        .sum::<f64>()
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Standard-normal noise of every embedding draw in a batch.
#[derive(Clone, Debug, PartialEq)]
pub enum Noise {
    /// Stored values, `(k + 2) * entity_width` per positive.
    Explicit(Vec<f64>),
    /// Values regenerated in order from a ChaCha8 stream with this seed.
    Seeded(u64),
}

/// One mini-batch with every random choice fixed: the corrupted entities and
/// the noise of each embedding draw.
///
/// For positive `i`, noise is laid out as `[head, tail, neg_0, .., neg_{k-1}]`,
/// each `entity_width` long. Negative `j` replaces the tail when `j` is even and
/// the head when odd.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub triples: Vec<Triple>,
    pub negatives_per_positive: usize,
    pub negatives: Vec<EntityId>,
    pub noise: Noise,
}

impl Batch {
    pub fn sample<R: Rng>(triples: Vec<Triple>, negatives_per_positive: usize, entity_count: usize, rng: &mut R) -> Self {
        let k = negatives_per_positive;
        let negatives = (0..triples.len() * k).map(|_| EntityId(rng.random_range(0..entity_count as u32))).collect();
        Batch { triples, negatives_per_positive: k, negatives, noise: Noise::Seeded(rng.random()) }
    }

    fn check(&self, model: &GaussianEmbeddingModel) -> Result<()> {
        let k = self.negatives_per_positive;
        let n = self.triples.len();
        if self.negatives.len() != n * k {
            return Err(Error::DimensionMismatch { expected: n * k, found: self.negatives.len() });
        }
        if let Noise::Explicit(noise) = &self.noise {
            let expected = n * (k + 2) * model.entity_width();
            if noise.len() != expected {
                return Err(Error::DimensionMismatch { expected, found: noise.len() });
            }
        }
        for q in &self.triples {
            if q.head.index() >= model.entity_count || q.tail.index() >= model.entity_count {
                return Err(invalid("batch entity outside the model"));
            }
            if q.relation.index() >= model.relation_count {
                return Err(invalid("batch relation outside the model"));
            }
        }
        if self.negatives.iter().any(|e| e.index() >= model.entity_count) {
            return Err(invalid("batch entity outside the model"));
        }
        Ok(())
    }
}

/// Gradient buffers matching the model layout, sparse in which rows are touched.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
    pub relation: Vec<f64>,
    touched_entities: Vec<EntityId>,
    touched_relations: Vec<RelationId>,
    entity_mark: Vec<bool>,
    relation_mark: Vec<bool>,
}

impl Gradients {
    pub fn zeros_like(model: &GaussianEmbeddingModel) -> Self {
        Gradients {
            mu: vec![0.0; model.mu.len()],
            log_var: vec![0.0; model.log_var.len()],
            relation: vec![0.0; model.relation.len()],
            touched_entities: Vec::new(),
            touched_relations: Vec::new(),
            entity_mark: vec![false; model.entity_count],
            relation_mark: vec![false; model.relation_count],
        }
    }

    /// Entities with a non-trivial gradient row, in first-touch order.
    pub fn touched_entities(&self) -> &[EntityId] {
        &self.touched_entities
    }

    pub fn touched_relations(&self) -> &[RelationId] {
        &self.touched_relations
    }

    fn touch_entity(&mut self, e: EntityId) {
        if !self.entity_mark[e.index()] {
            self.entity_mark[e.index()] = true;
            self.touched_entities.push(e);
        }
    }

    fn touch_relation(&mut self, r: RelationId) {
        if !self.relation_mark[r.index()] {
            self.relation_mark[r.index()] = true;
            self.touched_relations.push(r);
        }
    }

    fn clear(&mut self, ew: usize, rw: usize) {
        for e in self.touched_entities.drain(..) {
            let i = e.index();
            self.entity_mark[i] = false;
            self.mu[i * ew..(i + 1) * ew].fill(0.0);
            self.log_var[i * ew..(i + 1) * ew].fill(0.0);
        }
        for r in self.touched_relations.drain(..) {
            let i = r.index();
            self.relation_mark[i] = false;
            self.relation[i * rw..(i + 1) * rw].fill(0.0);
        }
    }
}

struct Scratch {
    z: Vec<f64>,
    eh: Vec<f64>,
    et: Vec<f64>,
    en: Vec<f64>,
    gh: Vec<f64>,
    gt: Vec<f64>,
    gn: Vec<f64>,
    gr: Vec<f64>,
}

impl Scratch {
    fn new(ew: usize, rw: usize) -> Self {
        Scratch {
            z: Vec::new(),
            eh: vec![0.0; ew],
            et: vec![0.0; ew],
            en: vec![0.0; ew],
            gh: vec![0.0; ew],
            gt: vec![0.0; ew],
            gn: vec![0.0; ew],
            gr: vec![0.0; rw],
        }
    }
}

fn draw(model: &GaussianEmbeddingModel, std: &[f64], e: EntityId, z: &[f64], out: &mut [f64]) {
    let w = z.len();
    let mu = &model.mu[e.index() * w..(e.index() + 1) * w];
    let sd = &std[e.index() * w..(e.index() + 1) * w];
    for (((o, m), s), z) in out.iter_mut().zip(mu).zip(sd).zip(z) {
        *o = m + s * z;
    }
}

/// Pushes a gradient w.r.t. a drawn embedding back onto `mu` and `log_var`.
fn backprop_draw(grads: &mut Gradients, std: &[f64], e: EntityId, z: &[f64], g: &[f64]) {
    let w = z.len();
    grads.touch_entity(e);
    let rows = e.index() * w..(e.index() + 1) * w;
    let gmu = &mut grads.mu[rows.clone()];
    let glv = &mut grads.log_var[rows.clone()];
    for ((((gm, gl), s), z), g) in gmu.iter_mut().zip(glv.iter_mut()).zip(&std[rows]).zip(z).zip(g) {
        *gm += g;
        *gl += g * 0.5 * s * z;
    }
}

fn batch_loss_with_std(
    model: &GaussianEmbeddingModel,
    std: &[f64],
    batch: &Batch,
    kl_weight: f64,
    mut grads: Option<&mut Gradients>,
    scratch: &mut Scratch,
    entity_mark: &mut Vec<bool>,
) -> f64 {
    let scorer = model.scorer;
    let ew = model.entity_width();
    let rw = model.relation_width();
    let k = batch.negatives_per_positive;
    let stride = (k + 2) * ew;
    let mut loss = 0.0;
    let mut kl_entities: Vec<EntityId> = Vec::new();
    let mut mark = |e: EntityId, list: &mut Vec<EntityId>| {
        if !entity_mark[e.index()] {
            entity_mark[e.index()] = true;
            list.push(e);
        }
    };

    let mut stream = match batch.noise {
        Noise::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Noise::Explicit(_) => None,
    };
    for (i, q) in batch.triples.iter().enumerate() {
        let Scratch { z, eh, et, en, gh, gt, gn, gr } = scratch;
        let z: &[f64] = match (&batch.noise, stream.as_mut()) {
            (Noise::Explicit(noise), _) => &noise[i * stride..(i + 1) * stride],
            (_, Some(rng)) => {
                z.clear();
                z.extend((0..stride).map(|_| rng.sample::<f64, _>(StandardNormal)));
                z
            }
            (Noise::Seeded(_), None) => unreachable!(),
        };
        let (zh, rest) = z.split_at(ew);
        let (zt, zneg) = rest.split_at(ew);
        let r = model.relation(q.relation);
        draw(model, std, q.head, zh, eh);
        draw(model, std, q.tail, zt, et);
        gh.fill(0.0);
        gt.fill(0.0);
        gr.fill(0.0);
        mark(q.head, &mut kl_entities);
        mark(q.tail, &mut kl_entities);

        let s = scorer.score(eh, r, et);
        loss += softplus(-s);
        if grads.is_some() {
            scorer.accumulate_grad(eh, r, et, -sigmoid(-s), gh, gr, gt);
        }

        for j in 0..k {
            let ne = batch.negatives[i * k + j];
            let zn = &zneg[j * ew..(j + 1) * ew];
            draw(model, std, ne, zn, en);
            mark(ne, &mut kl_entities);
            let corrupt_tail = j % 2 == 0;
            let s = if corrupt_tail {
                scorer.score(eh, r, en)
            } else {
                scorer.score(en, r, et)
            };
            loss += softplus(s);
            if let Some(g) = grads.as_deref_mut() {
                gn.fill(0.0);
                let up = sigmoid(s);
                if corrupt_tail {
                    scorer.accumulate_grad(eh, r, en, up, gh, gr, gn);
                } else {
                    scorer.accumulate_grad(en, r, et, up, gn, gr, gt);
                }
                backprop_draw(g, std, ne, zn, gn);
            }
        }

        if let Some(g) = grads.as_deref_mut() {
            backprop_draw(g, std, q.head, zh, gh);
            backprop_draw(g, std, q.tail, zt, gt);
            g.touch_relation(q.relation);
            let base = q.relation.index() * rw;
            for j in 0..rw {
                g.relation[base + j] += gr[j];
            }
        }
    }

    for &e in &kl_entities {
        entity_mark[e.index()] = false;
        let (mu, lv) = (model.mu(e), model.log_var(e));
        loss += kl_weight * kl_divergence(mu, lv);
        if let Some(g) = grads.as_deref_mut() {
            g.touch_entity(e);
            let base = e.index() * ew;
            for j in 0..ew {
                g.mu[base + j] += kl_weight * mu[j];
                g.log_var[base + j] += kl_weight * 0.5 * (variance(lv[j]) - 1.0);
            }
        }
    }
    loss
}

/// Total loss of `batch` under `model`; accumulates analytic gradients into
/// `grads` when given.
pub fn batch_loss(
    model: &GaussianEmbeddingModel,
    batch: &Batch,
    kl_weight: f64,
    grads: Option<&mut Gradients>,
) -> Result<f64> {
    batch.check(model)?;
    let std = model.std_table();
    let mut scratch = Scratch::new(model.entity_width(), model.relation_width());
    let mut mark = vec![false; model.entity_count];
    Ok(batch_loss_with_std(model, &std, batch, kl_weight, grads, &mut scratch, &mut mark))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: GaussianEmbeddingModel,
    /// Mean per-positive loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

struct AdamState {
    m: [Vec<f64>; 3],
    v: [Vec<f64>; 3],
    step: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn apply_rows(
    params: &mut [f64],
    grads: &[f64],
    rows: impl Iterator<Item = usize>,
    width: usize,
    lr: f64,
    mut adam: Option<(&mut [f64], &mut [f64], f64, f64)>,
) {
    for row in rows {
        for i in row * width..(row + 1) * width {
            let g = grads[i];
            match adam.as_mut() {
                None => params[i] -= lr * g,
                Some((m, v, c1, c2)) => {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let mh = m[i] / *c1;
                    let vh = v[i] / *c2;
                    params[i] -= lr * mh / (libm::sqrt(vh) + ADAM_EPS);
                }
            }
        }
    }
}

/// Trains a model on the training split. Deterministic for a fixed config.
pub fn train(kg: &KnowledgeGraph, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(kg, config, |_, _| {})
}

/// As [`train`], calling `progress(epoch, mean_loss)` after each epoch.
pub fn train_with_progress(
    kg: &KnowledgeGraph,
    config: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = GaussianEmbeddingModel::initialize(
        config.scorer,
        kg.entity_count(),
        kg.relation_count(),
        config.dim,
        &mut rng,
    );
    let ew = model.entity_width();
    let rw = model.relation_width();
    let mut grads = Gradients::zeros_like(&model);
    let mut scratch = Scratch::new(ew, rw);
    let mut mark = vec![false; model.entity_count];
    let mut std = model.std_table();
    let mut adam = match config.optimizer {
        Optimizer::Sgd => None,
        Optimizer::Adam => Some(AdamState {
            m: [vec![0.0; model.mu.len()], vec![0.0; model.log_var.len()], vec![0.0; model.relation.len()]],
            v: [vec![0.0; model.mu.len()], vec![0.0; model.log_var.len()], vec![0.0; model.relation.len()]],
            step: 0,
        }),
    };

    let mut order: Vec<usize> = (0..kg.train().len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step: u64 = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let triples = chunk.iter().map(|&i| kg.train()[i]).collect();
            let batch = Batch::sample(triples, config.negatives, model.entity_count, &mut rng);
            let loss = batch_loss_with_std(
                &model,
                &std,
                &batch,
                config.kl_weight,
                Some(&mut grads),
                &mut scratch,
                &mut mark,
            );
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { step });
            }
            total += loss;
            step += 1;

            let lr = config.learning_rate;
            let ents = grads.touched_entities.iter().map(|e| e.index());
            let rels = grads.touched_relations.iter().map(|r| r.index());
            match adam.as_mut() {
                None => {
                    apply_rows(&mut model.mu, &grads.mu, ents.clone(), ew, lr, None);
                    apply_rows(&mut model.log_var, &grads.log_var, ents, ew, lr, None);
                    apply_rows(&mut model.relation, &grads.relation, rels, rw, lr, None);
                }
                Some(state) => {
                    state.step += 1;
                    let c1 = 1.0 - libm::pow(ADAM_BETA1, state.step as f64);
                    let c2 = 1.0 - libm::pow(ADAM_BETA2, state.step as f64);
                    let [m0, m1, m2] = &mut state.m;
                    let [v0, v1, v2] = &mut state.v;
                    apply_rows(&mut model.mu, &grads.mu, ents.clone(), ew, lr, Some((m0, v0, c1, c2)));
                    apply_rows(&mut model.log_var, &grads.log_var, ents, ew, lr, Some((m1, v1, c1, c2)));
                    apply_rows(&mut model.relation, &grads.relation, rels, rw, lr, Some((m2, v2, c1, c2)));
                }
            }
            for e in &grads.touched_entities {
                let i = e.index();
                for j in i * ew..(i + 1) * ew {
                    std[j] = std_dev(model.log_var[j]);
                }
            }
            grads.clear(ew, rw);
        }
        let mean = total / kg.train().len() as f64;
        epoch_losses.push(mean);
        progress(epoch, mean);
    }
    Ok(TrainOutcome { model, epoch_losses })
}
