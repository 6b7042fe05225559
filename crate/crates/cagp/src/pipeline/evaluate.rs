use cagp_core::eval::{
    auroc, aupr, brier, ece, error_analysis, balanced_threshold, f1_at, min_max_normalize, paired_bootstrap,
    probabilities_from_bounded, probabilities_from_min_max, samples_from, selective_prediction, ScoredSample,
    SelectiveSample, TripleSample,
};
use cagp_core::oodgen::random_corruptions;
use cagp_core::uncertainty::{baseline_score_uncertainty, Assessor, UncertaintyAssessment};
use cagp_core::verify::Signal;
use cagp_core::{GaussianEmbeddingModel, MixingWeight, Split, Triple};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{defined, Context};
use crate::artifacts::{write_csv, write_json, Recorder};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Test triples partitioned into emerging, novel-context and ID.
    #[value(name = "temporal_like")]
    TemporalLike,
    /// Test triples as ID against one tail corruption each as OOD.
    #[value(name = "random_corruption")]
    RandomCorruption,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::TemporalLike => "temporal_like",
            EvalMode::RandomCorruption => "random_corruption",
        }
    }
}

/// Detection and calibration metrics of one signal. Undefined metrics are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub signal: String,
    pub auroc: Option<f64>,
    pub aupr: Option<f64>,
    pub f1: Option<f64>,
    pub ece: Option<f64>,
    pub brier: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplementarityCsvRow {
    pub signal: String,
    pub emerging: Option<f64>,
    pub novel_context: Option<f64>,
    pub overall: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectiveRow {
    pub signal: String,
    pub answer_rate: f64,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub signal: String,
    pub baseline: String,
    /// Fraction of resamples where the baseline's AUROC beats the signal's.
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mode: EvalMode,
    pub alpha: f64,
    pub detection: Vec<DetectionRow>,
    pub warnings: Vec<String>,
}

/// Values of one signal over the evaluation pool.
struct Column {
    name: &'static str,
    values: Vec<f64>,
    /// Already in `[0, 2]`, so calibrated as `u / 2` rather than min-max.
    bounded: bool,
}

fn columns(assessed: &[UncertaintyAssessment], score: Vec<f64>) -> Vec<Column> {
    let mut cols: Vec<Column> = Signal::ALL
        .iter()
        .map(|&s| Column {
            name: s.name(),
            values: assessed.iter().map(|a| s.value(a)).collect(),
            bounded: true,
        })
        .collect();
    cols.push(Column { name: "score", values: score, bounded: false });
    cols
}

fn score_baseline(model: &GaussianEmbeddingModel, triples: &[Triple], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    triples.iter().map(|q| baseline_score_uncertainty(model, q, &mut rng)).collect()
}

fn detection_row(col: &Column, labels: &[bool], bins: usize, warnings: &mut Vec<String>) -> Result<DetectionRow> {
    let samples: Vec<ScoredSample> = col.values.iter().zip(labels).map(|(&u, &o)| ScoredSample::new(u, o)).collect();
    let normalized: Vec<ScoredSample> = min_max_normalize(&col.values)
        .into_iter()
        .zip(labels)
        .map(|(u, &o)| ScoredSample::new(u, o))
        .collect();
    let probs = if col.bounded { probabilities_from_bounded(&samples) } else { probabilities_from_min_max(&samples) };
    let what = |m: &str| format!("{} {m}", col.name);
    Ok(DetectionRow {
        signal: col.name.into(),
        auroc: defined(auroc(&samples), &what("auroc"), warnings)?,
        aupr: defined(aupr(&samples), &what("aupr"), warnings)?,
        f1: defined(f1_at(&normalized, 0.5), &what("f1"), warnings)?,
        ece: defined(ece(&probs, bins), &what("ece"), warnings)?,
        brier: defined(brier(&probs), &what("brier"), warnings)?,
    })
}

fn record_detection(rec: &mut Recorder, rows: &[DetectionRow]) {
    for r in rows {
        for (metric, v) in [("auroc", r.auroc), ("aupr", r.aupr), ("f1", r.f1), ("ece", r.ece), ("brier", r.brier)] {
            rec.push(metric, &r.signal, v);
        }
    }
}

fn significance(
    ctx: &Context,
    cols: &[Column],
    labels: &[bool],
    warnings: &mut Vec<String>,
) -> Result<Vec<SignificanceRow>> {
    let cagp = cols.iter().find(|c| c.name == Signal::Cagp.name()).expect("cagp column");
    let eval = &ctx.config.eval;
    cols.iter()
        .filter(|c| c.name != cagp.name)
        .map(|c| {
            let p = paired_bootstrap(&cagp.values, &c.values, labels, eval.bootstrap_iterations, ctx.config.seeds.bootstrap);
            Ok(SignificanceRow {
                signal: cagp.name.into(),
                baseline: c.name.into(),
                p_value: defined(p, &format!("bootstrap vs {}", c.name), warnings)?,
            })
        })
        .collect()
}

/// Scores the evaluation pool and writes `metrics_<mode>.json` plus the mode's
/// tables. Needs a checkpoint from `train`.
pub fn cmd_eval(ctx: &Context, mode: EvalMode) -> Result<EvalSummary> {
    ctx.ensure_output()?;
    let model = ctx.load_model()?;
    let assessor = Assessor::new(&model, &ctx.kg, &ctx.coverage, ctx.config.uncertainty.coverage)?;
    let mut warnings = Vec::new();
    let mut rec = Recorder::new(mode.name(), ctx.config.seeds.train);
    let half = MixingWeight::fixed_half();

    let (val_id, val_ood, triples, labels) = match mode {
        EvalMode::TemporalLike => {
            let id = assessor.assess_all(&ctx.valid.in_distribution, half);
            let ood = assessor.assess_all(&ctx.valid.ood(), half);
            let p = &ctx.test;
            let triples: Vec<Triple> =
                p.in_distribution.iter().chain(&p.emerging).chain(&p.novel_context).copied().collect();
            let labels: Vec<bool> =
                (0..triples.len()).map(|i| i >= p.in_distribution.len()).collect();
            (id, ood, triples, labels)
        }
        EvalMode::RandomCorruption => {
            let seed = ctx.config.seeds.corruption;
            let (id, ood) = if ctx.kg.split(Split::Valid).is_empty() {
                (Vec::new(), Vec::new())
            } else {
                let val = random_corruptions(&ctx.kg, Split::Valid, seed)?;
                let pick = |o: bool| val.iter().filter(|l| l.is_ood == o).map(|l| l.triple).collect::<Vec<_>>();
                (assessor.assess_all(&pick(false), half), assessor.assess_all(&pick(true), half))
            };
            let test = random_corruptions(&ctx.kg, Split::Test, seed)?;
            (id, ood, test.iter().map(|l| l.triple).collect(), test.iter().map(|l| l.is_ood).collect())
        }
    };
    let w = ctx.mixing_weight(&val_id, &val_ood, &mut warnings)?;
    rec.push("alpha", Signal::Cagp.name(), Some(w.alpha()));

    let assessed = assessor.assess_all(&triples, w);
    let cols = columns(&assessed, score_baseline(&model, &triples, ctx.config.seeds.score));
    let bins = ctx.config.eval.ece_bins;
    let detection: Vec<DetectionRow> =
        cols.iter().map(|c| detection_row(c, &labels, bins, &mut warnings)).collect::<Result<_>>()?;
    record_detection(&mut rec, &detection);

    let sig = significance(ctx, &cols, &labels, &mut warnings)?;
    for s in &sig {
        rec.push(&format!("bootstrap_p_vs_{}", s.baseline), &s.signal, s.p_value);
    }
    write_csv(&ctx.out(&format!("significance_{}.csv", mode.name())), &sig)?;

    match mode {
        EvalMode::TemporalLike => {
            write_csv(&ctx.out("table1_detection.csv"), &detection)?;
            temporal_tables(ctx, &model, &triples, &labels, &cols, &mut rec, &mut warnings)?;
        }
        EvalMode::RandomCorruption => write_csv(&ctx.out("table3_standard_ood.csv"), &detection)?,
    }
    write_csv(&ctx.out(&format!("calibration_{}.csv", mode.name())), &calibration_rows(&detection))?;
    write_json(&ctx.out(&format!("metrics_{}.json", mode.name())), &rec.records)?;
    Ok(EvalSummary { mode, alpha: w.alpha(), detection, warnings })
}

#[derive(Serialize)]
struct CalibrationRow<'a> {
    signal: &'a str,
    ece: Option<f64>,
    brier: Option<f64>,
}

fn calibration_rows(rows: &[DetectionRow]) -> Vec<CalibrationRow<'_>> {
    rows.iter().map(|r| CalibrationRow { signal: &r.signal, ece: r.ece, brier: r.brier }).collect()
}

/// Stratified AUROC, selective prediction and error analysis on the
/// temporal-like pool, whose samples are ordered ID, emerging, novel-context.
fn temporal_tables(
    ctx: &Context,
    model: &GaussianEmbeddingModel,
    triples: &[Triple],
    labels: &[bool],
    cols: &[Column],
    rec: &mut Recorder,
    warnings: &mut Vec<String>,
) -> Result<()> {
    let p = &ctx.test;
    let (n_id, n_em) = (p.in_distribution.len(), p.emerging.len());
    let mut strat = Vec::new();
    for c in cols {
        let (id, rest) = c.values.split_at(n_id);
        let (em, nov) = rest.split_at(n_em);
        let cell = |ood: &[f64], what: &str, warnings: &mut Vec<String>| {
            defined(auroc(&samples_from(id, ood)), &format!("{} {what}", c.name), warnings)
        };
        let row = ComplementarityCsvRow {
            signal: c.name.into(),
            emerging: cell(em, "auroc on emerging", warnings)?,
            novel_context: cell(nov, "auroc on novel contexts", warnings)?,
            overall: cell(rest, "auroc on all OOD", warnings)?,
        };
        rec.push("auroc_emerging", c.name, row.emerging);
        rec.push("auroc_novel_context", c.name, row.novel_context);
        strat.push(row);
    }
    write_csv(&ctx.out("table2_complementarity.csv"), &strat)?;

    let hits = ctx.config.eval.hits_at;
    let correct: Vec<bool> = triples.iter().map(|q| model.tail_rank(q) <= hits).collect();
    let mut selective = Vec::new();
    for c in cols {
        let samples: Vec<SelectiveSample> =
            c.values.iter().zip(&correct).map(|(&u, &ok)| SelectiveSample { uncertainty: u, correct: ok }).collect();
        for &rate in &ctx.config.eval.answer_rates {
            let acc = defined(selective_prediction(&samples, rate), &format!("{} selective", c.name), warnings)?;
            rec.push(&format!("hits@{hits}_at_rate_{rate:.2}"), c.name, acc);
            selective.push(SelectiveRow { signal: c.name.into(), answer_rate: rate, accuracy: acc });
        }
    }
    write_csv(&ctx.out("selective_prediction.csv"), &selective)?;

    let cagp = cols.iter().find(|c| c.name == Signal::Cagp.name()).expect("cagp column");
    let samples: Vec<TripleSample> = triples
        .iter()
        .zip(&cagp.values)
        .zip(labels)
        .map(|((&triple, &uncertainty), &is_ood)| TripleSample { triple, uncertainty, is_ood })
        .collect();
    match balanced_threshold(&samples) {
        Ok(thr) => write_json(&ctx.out("error_analysis.json"), &error_analysis(&samples, &ctx.kg, thr))?,
        Err(e) => warnings.push(format!("error analysis skipped: {e}")),
    }
    Ok(())
}
