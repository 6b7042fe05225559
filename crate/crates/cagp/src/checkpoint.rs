//! Binary model container and its JSON sidecar.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 5 | magic `CAGP1` |
//! | 1 | scorer code (0 DistMult, 1 TransE, 2 ComplEx) |
//! | 8 | entity count `u64` |
//! | 8 | relation count `u64` |
//! | 8 | dimension `u64` |
//! | … | `mu`, then `log_var`, then relation parameters, row-major `f64` |
//!
//! ComplEx rows hold `2 * dim` values, real parts first.

use std::fs;
use std::path::{Path, PathBuf};

use cagp_core::{GaussianEmbeddingModel, KnowledgeGraph, ScorerKind, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 5] = b"CAGP1";
const HEADER_LEN: usize = 5 + 1 + 3 * 8;

pub fn encode(model: &GaussianEmbeddingModel) -> Vec<u8> {
    let (mu, log_var, relation) = model.parameters();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (mu.len() + log_var.len() + relation.len()));
    out.extend_from_slice(MAGIC);
    out.push(model.scorer().code());
    for n in [model.entity_count(), model.relation_count(), model.dim()] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for x in mu.iter().chain(log_var).chain(relation) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

pub fn decode(bytes: &[u8]) -> std::result::Result<GaussianEmbeddingModel, String> {
    if bytes.len() < HEADER_LEN || &bytes[..5] != MAGIC {
        return Err("not a CAGP1 checkpoint".into());
    }
    let scorer = ScorerKind::from_code(bytes[5]).map_err(|e| e.to_string())?;
    let dims: Vec<usize> = (0..3)
        .map(|i| usize::try_from(read_u64(bytes, 6 + 8 * i)).map_err(|_| "header size overflows".to_string()))
        .collect::<std::result::Result<_, _>>()?;
    let (ne, nr, dim) = (dims[0], dims[1], dims[2]);
    let ew = scorer.entity_width(dim);
    let counts = [ne.checked_mul(ew), ne.checked_mul(ew), nr.checked_mul(scorer.relation_width(dim))];
    let counts: Vec<usize> = counts.into_iter().collect::<Option<_>>().ok_or("header size overflows")?;
    let total: usize = counts.iter().sum();
    let body = &bytes[HEADER_LEN..];
    if Some(body.len()) != total.checked_mul(8) {
        return Err(format!("expected {} parameter bytes, found {}", total * 8, body.len()));
    }
    let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<f64>>();
    let mu = take(counts[0]);
    let log_var = take(counts[1]);
    let relation = take(counts[2]);
    GaussianEmbeddingModel::from_parts(scorer, dim, ne, nr, mu, log_var, relation).map_err(|e| e.to_string())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of a vocabulary as newline-terminated names in id order.
pub fn vocabulary_hash(names: &[String]) -> String {
    let mut h = Sha256::new();
    for n in names {
        h.update(n.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub scorer: ScorerKind,
    pub entity_count: usize,
    pub relation_count: usize,
    pub dim: usize,
    pub train: TrainConfig,
    pub entity_vocabulary_sha256: String,
    pub relation_vocabulary_sha256: String,
    pub checkpoint_sha256: String,
}

impl Sidecar {
    pub fn new(model: &GaussianEmbeddingModel, kg: &KnowledgeGraph, train: &TrainConfig, encoded: &[u8]) -> Self {
        Sidecar {
            format: String::from_utf8_lossy(MAGIC).into_owned(),
            scorer: model.scorer(),
            entity_count: model.entity_count(),
            relation_count: model.relation_count(),
            dim: model.dim(),
            train: train.clone(),
            entity_vocabulary_sha256: vocabulary_hash(kg.entities().names()),
            relation_vocabulary_sha256: vocabulary_hash(kg.relations().names()),
            checkpoint_sha256: sha256_hex(encoded),
        }
    }
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

/// Writes the checkpoint and its sidecar, returning the checkpoint hash.
pub fn save(path: &Path, model: &GaussianEmbeddingModel, kg: &KnowledgeGraph, train: &TrainConfig) -> Result<String> {
    let bytes = encode(model);
    let sidecar = Sidecar::new(model, kg, train, &bytes);
    fs::write(path, &bytes).map_err(|e| CliError::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&side, json + "\n").map_err(|e| CliError::io(&side, e))?;
    Ok(sidecar.checkpoint_sha256)
}

/// Loads a checkpoint and checks it against its sidecar and `kg`'s vocabularies.
pub fn load(path: &Path, kg: &KnowledgeGraph) -> Result<(GaussianEmbeddingModel, Sidecar)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| CliError::io(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| CliError::format(&side, e.to_string()))?;
    if sidecar.checkpoint_sha256 != sha256_hex(&bytes) {
        return Err(CliError::format(path, "checkpoint hash does not match its sidecar"));
    }
    if sidecar.entity_vocabulary_sha256 != vocabulary_hash(kg.entities().names())
        || sidecar.relation_vocabulary_sha256 != vocabulary_hash(kg.relations().names())
    {
        return Err(CliError::format(path, "checkpoint was trained on a different vocabulary"));
    }
    let model = decode(&bytes).map_err(|m| CliError::format(path, m))?;
    Ok((model, sidecar))
}
