//! Experiment commands. Each is a pure function of the run config, the dataset
//! and the artifacts earlier commands left in the output directory.

mod analysis;
mod evaluate;

use std::fs;
use std::path::{Path, PathBuf};

use cagp_core::graph::frequency_threshold;
use cagp_core::oodgen::{partition, partition_rows, synth_theorem_kg, OodClass};
use cagp_core::uncertainty::{fit_alpha, Assessor, UncertaintyAssessment};
use cagp_core::{embed, CoverageMatrix, Error, GaussianEmbeddingModel, KnowledgeGraph, MixingWeight, OodPartition, Split, ThresholdBasis};
use serde::{Deserialize, Serialize};

pub use analysis::{
    cmd_ablate, cmd_verify, render_verify, VerifySummary, AblationSummary, AlphaAblationRow, ArchitectureRow, CoverageAblationRow, TauRow,
};
pub use evaluate::{cmd_eval, ComplementarityCsvRow, DetectionRow, EvalMode, EvalSummary, SelectiveRow};

use crate::artifacts::{read_json, write_csv, write_json, write_text, MetricRecord};
use crate::checkpoint;
use crate::config::{AlphaMode, RunConfig};
use crate::data::load_dataset;
use crate::error::{CliError, Result};

pub const CHECKPOINT_FILE: &str = "model.cagp";

/// Loaded graph, coverage and partitions shared by every command.
pub struct Context {
    pub config: RunConfig,
    pub kg: KnowledgeGraph,
    pub coverage: CoverageMatrix,
    pub tau: u64,
    pub test: OodPartition,
    pub valid: OodPartition,
}

impl Context {
    pub fn load(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let (kg, fixed_tau) = match &config.synthetic {
            Some(synth) => {
                let s = synth_theorem_kg(synth, config.seeds.synth)?;
                (s.kg, Some(s.partition.tau))
            }
            None => {
                if !config.dataset.is_dir() {
                    return Err(CliError::format(&config.dataset, "dataset directory does not exist"));
                }
                (load_dataset(&config.dataset)?, None)
            }
        };
        let coverage = CoverageMatrix::build(&kg);
        let tau = match fixed_tau {
            Some(t) => t,
            None => frequency_threshold(&kg, config.tau_fraction(), config.ood.tau_basis)?,
        };
        let test = partition(&kg, &coverage, Split::Test, tau);
        let valid = partition(&kg, &coverage, Split::Valid, tau);
        Ok(Context { config, kg, coverage, tau, test, valid })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.config.output.join(name)
    }

    pub(crate) fn ensure_output(&self) -> Result<()> {
        fs::create_dir_all(&self.config.output).map_err(|e| CliError::io(&self.config.output, e))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out(CHECKPOINT_FILE)
    }

    /// The trained model; a missing checkpoint is an input error.
    pub fn load_model(&self) -> Result<GaussianEmbeddingModel> {
        Ok(checkpoint::load(&self.checkpoint_path(), &self.kg)?.0)
    }

    /// The trained model if a checkpoint exists.
    pub fn try_load_model(&self, warnings: &mut Vec<String>) -> Result<Option<GaussianEmbeddingModel>> {
        if self.checkpoint_path().exists() {
            return self.load_model().map(Some);
        }
        warnings.push(format!(
            "no checkpoint at {}; rows that need embedding variances are skipped",
            self.checkpoint_path().display()
        ));
        Ok(None)
    }

    /// Threshold and partitions at another percentile.
    pub fn partitions_at(&self, percentile: f64, basis: ThresholdBasis) -> Result<(u64, OodPartition, OodPartition)> {
        let tau = frequency_threshold(&self.kg, percentile / 100.0, basis)?;
        Ok((
            tau,
            partition(&self.kg, &self.coverage, Split::Valid, tau),
            partition(&self.kg, &self.coverage, Split::Test, tau),
        ))
    }

    /// Mixing weight per the configured mode, learned on validation assessments.
    /// Falls back to 0.5 with a warning when validation lacks a class.
    pub fn mixing_weight(
        &self,
        val_id: &[UncertaintyAssessment],
        val_ood: &[UncertaintyAssessment],
        warnings: &mut Vec<String>,
    ) -> Result<MixingWeight> {
        if self.config.uncertainty.alpha == AlphaMode::Fixed {
            return Ok(MixingWeight::fixed_half());
        }
        if val_id.is_empty() || val_ood.is_empty() {
            warnings.push("validation split lacks ID or OOD queries; using alpha = 0.5".into());
            return Ok(MixingWeight::fixed_half());
        }
        Ok(fit_alpha(val_id, val_ood)?)
    }
}

/// Learned-or-fixed weight without touching warnings, for sweeps.
pub(crate) fn weight_for(mode: AlphaMode, val_id: &[UncertaintyAssessment], val_ood: &[UncertaintyAssessment]) -> Result<MixingWeight> {
    match mode {
        AlphaMode::Learned if !val_id.is_empty() && !val_ood.is_empty() => Ok(fit_alpha(val_id, val_ood)?),
        _ => Ok(MixingWeight::fixed_half()),
    }
}

pub(crate) fn assess_partition(a: &Assessor<'_>, p: &OodPartition, w: MixingWeight) -> (Vec<UncertaintyAssessment>, Vec<UncertaintyAssessment>) {
    let id = a.assess_all(&p.in_distribution, w);
    let ood = a.assess_all(&p.ood(), w);
    (id, ood)
}

/// Maps an undefined metric to `None`, recording why.
pub(crate) fn defined(r: cagp_core::Result<f64>, what: &str, warnings: &mut Vec<String>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(m)) => {
            warnings.push(format!("{what}: {m}"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSizes {
    pub emerging: usize,
    pub novel_context: usize,
    pub in_distribution: usize,
}

impl From<&OodPartition> for ClassSizes {
    fn from(p: &OodPartition) -> Self {
        let (emerging, novel_context, in_distribution) = p.sizes();
        ClassSizes { emerging, novel_context, in_distribution }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub entities: usize,
    pub relations: usize,
    pub train_triples: usize,
    pub valid_triples: usize,
    pub test_triples: usize,
    pub coverage_pairs: usize,
    pub coverage_density: f64,
    pub tau: u64,
    pub tau_percentile: f64,
    pub tau_basis: ThresholdBasis,
    pub test_partition: ClassSizes,
    pub valid_partition: ClassSizes,
}

#[derive(Serialize)]
struct CoverageCsvRow<'a> {
    entity: &'a str,
    relation: &'a str,
    count: u32,
}

#[derive(Serialize)]
struct PartitionCsvRow {
    head: u32,
    relation: u32,
    tail: u32,
    class: OodClass,
    min_freq: u64,
    head_covered: u8,
    tail_covered: u8,
}

fn write_partition(ctx: &Context, path: &Path, split: Split) -> Result<()> {
    let rows: Vec<PartitionCsvRow> = partition_rows(&ctx.kg, &ctx.coverage, ctx.kg.split(split), ctx.tau)
        .into_iter()
        .map(|r| PartitionCsvRow {
            head: r.triple.head.0,
            relation: r.triple.relation.0,
            tail: r.triple.tail.0,
            class: r.class,
            min_freq: r.min_freq,
            head_covered: r.head_covered as u8,
            tail_covered: r.tail_covered as u8,
        })
        .collect();
    write_csv(path, &rows)
}

/// Writes `graph_stats.json`, `coverage.csv` and the per-split partition CSVs.
pub fn cmd_prepare(ctx: &Context) -> Result<GraphStats> {
    ctx.ensure_output()?;
    let stats = GraphStats {
        entities: ctx.kg.entity_count(),
        relations: ctx.kg.relation_count(),
        train_triples: ctx.kg.train().len(),
        valid_triples: ctx.kg.split(Split::Valid).len(),
        test_triples: ctx.kg.split(Split::Test).len(),
        coverage_pairs: ctx.coverage.nonzero(),
        coverage_density: ctx.coverage.density(),
        tau: ctx.tau,
        tau_percentile: ctx.config.ood.tau_percentile,
        tau_basis: ctx.config.ood.tau_basis,
        test_partition: (&ctx.test).into(),
        valid_partition: (&ctx.valid).into(),
    };
    write_json(&ctx.out("graph_stats.json"), &stats)?;
    let coverage: Vec<CoverageCsvRow> = ctx
        .coverage
        .observed()
        .map(|(e, r, count)| CoverageCsvRow {
            entity: ctx.kg.entities().name(e.0),
            relation: ctx.kg.relations().name(r.0),
            count,
        })
        .collect();
    write_csv(&ctx.out("coverage.csv"), &coverage)?;
    write_partition(ctx, &ctx.out("partition_test.csv"), Split::Test)?;
    write_partition(ctx, &ctx.out("partition_valid.csv"), Split::Valid)?;
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
}

#[derive(Serialize)]
struct CurveRow {
    epoch: usize,
    mean_loss: f64,
}

/// Trains with the configured hyperparameters and writes the checkpoint, its
/// sidecar and `training_curve.csv`. `progress` sees `(epoch, mean_loss)`.
pub fn cmd_train(ctx: &Context, progress: impl FnMut(usize, f64)) -> Result<TrainSummary> {
    ctx.ensure_output()?;
    let train = ctx.config.train_config();
    let outcome = embed::train_with_progress(&ctx.kg, &train, progress)?;
    let path = ctx.checkpoint_path();
    let hash = checkpoint::save(&path, &outcome.model, &ctx.kg, &train)?;
    let curve: Vec<CurveRow> =
        outcome.epoch_losses.iter().enumerate().map(|(epoch, &mean_loss)| CurveRow { epoch, mean_loss }).collect();
    write_csv(&ctx.out("training_curve.csv"), &curve)?;
    Ok(TrainSummary {
        epochs: outcome.epoch_losses.len(),
        final_loss: outcome.epoch_losses.last().copied(),
        checkpoint: path,
        checkpoint_sha256: hash,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodComparisonRow {
    pub signal: String,
    pub temporal_like: Option<f64>,
    pub random_corruption: Option<f64>,
}

fn auroc_by_signal(records: &[MetricRecord]) -> Vec<(String, Option<f64>)> {
    records.iter().filter(|r| r.metric == "auroc").map(|r| (r.signal.clone(), r.value)).collect()
}

/// Joins the per-mode AUROCs written by `eval` into `table4_method_comparison.csv`
/// and a text summary in `report.txt`.
pub fn cmd_report(ctx: &Context) -> Result<String> {
    let load = |mode: EvalMode| -> Result<Option<Vec<MetricRecord>>> {
        let path = ctx.out(&format!("metrics_{}.json", mode.name()));
        if path.exists() {
            read_json(&path).map(Some)
        } else {
            Ok(None)
        }
    };
    let temporal = load(EvalMode::TemporalLike)?;
    let corruption = load(EvalMode::RandomCorruption)?;
    if temporal.is_none() && corruption.is_none() {
        return Err(CliError::format(&ctx.config.output, "no metrics files; run `eval` first"));
    }
    let t = temporal.as_deref().map(auroc_by_signal).unwrap_or_default();
    let c = corruption.as_deref().map(auroc_by_signal).unwrap_or_default();
    let mut signals: Vec<String> = t.iter().chain(&c).map(|(s, _)| s.clone()).collect();
    signals.dedup();
    let mut seen = Vec::new();
    signals.retain(|s| {
        let fresh = !seen.contains(s);
        seen.push(s.clone());
        fresh
    });
    let find = |v: &[(String, Option<f64>)], s: &str| v.iter().find(|(n, _)| n == s).and_then(|(_, x)| *x);
    let rows: Vec<MethodComparisonRow> = signals
        .iter()
        .map(|s| MethodComparisonRow { signal: s.clone(), temporal_like: find(&t, s), random_corruption: find(&c, s) })
        .collect();
    write_csv(&ctx.out("table4_method_comparison.csv"), &rows)?;

    let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    let mut text = String::from("AUROC            temporal_like  random_corruption\n");
    for r in &rows {
        text.push_str(&format!("  {:<14} {:<14} {}\n", r.signal, cell(r.temporal_like), cell(r.random_corruption)));
    }
    write_text(&ctx.out("report.txt"), &text)?;
    Ok(text)
}
