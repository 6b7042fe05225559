use std::fmt::Write as _;

use cagp_core::embed;
use cagp_core::uncertainty::{alpha_profile, Assessor, UncertaintyAssessment};
use cagp_core::verify::{
    assumption_report, complementarity_table, signal_auroc, spearman, AssessedPartition, AssumptionReport,
    ComplementarityRow, Signal,
};
use cagp_core::{CoverageMode, GaussianEmbeddingModel, MixingWeight, ScorerKind};
use serde::{Deserialize, Serialize};

use super::{assess_partition, defined, weight_for, Context};
use crate::artifacts::{write_csv, write_json, write_text, Recorder};
use crate::config::AlphaMode;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub report: AssumptionReport,
    /// Stratified AUROC, present when a checkpoint exists.
    pub complementarity: Option<Vec<ComplementarityRow>>,
    pub alpha: Option<f64>,
    pub warnings: Vec<String>,
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.digits$}"))
}

pub fn render_verify(s: &VerifySummary) -> String {
    let r = &s.report;
    let mut out = String::new();
    let _ = writeln!(out, "Assumption verification");
    let _ = writeln!(out, "  A1  spearman(freq, variance)         {}", fmt_opt(r.a1_spearman, 3));
    let _ = writeln!(out, "  A2  ID coverage rate                 {}", fmt_opt(r.a2_coverage_rate, 3));
    for m in &r.a3_matched {
        let _ = writeln!(out, "  A3  matched fraction, eps = {:<8} {:.1}% ({}/{})", m.epsilon, 100.0 * m.fraction, m.matched, m.total);
    }
    let _ = writeln!(out, "  A4  semantic gap, normalized         {}", fmt_opt(r.a4_delta, 3));
    let _ = writeln!(out, "  A4  semantic gap, raw                {}", fmt_opt(r.a4_delta_raw, 4));
    let _ = writeln!(out, "  A5  P(U_str = 0 | emerging)          {}", fmt_opt(r.a5_rho, 3));
    let _ = writeln!(out, "  A6  semantic AUROC, emerging vs ID   {}", fmt_opt(r.a6_auroc_emerging, 3));
    let _ = writeln!(out, "\nNovel contexts vs ID     predicted  observed");
    let _ = writeln!(out, "  semantic               {:.3}      {}", r.semantic_novel_predicted, fmt_opt(r.semantic_novel_observed, 3));
    let _ = writeln!(out, "  structural             {:.3}      {}", r.structural_novel_predicted, fmt_opt(r.structural_novel_observed, 3));
    if let Some(rows) = &s.complementarity {
        let _ = writeln!(out, "\nAUROC vs ID (alpha = {})  emerging  novel  overall", fmt_opt(s.alpha, 2));
        for row in rows {
            let _ = writeln!(
                out,
                "  {:<24} {:<9} {:<6} {}",
                row.signal.name(),
                fmt_opt(row.emerging, 3),
                fmt_opt(row.novel_context, 3),
                fmt_opt(row.overall, 3)
            );
        }
    }
    out
}

/// Writes `assumptions.json`, `assumptions.txt` and `a3_sweep.csv`. Semantic rows
/// need a checkpoint and are `null` without one.
pub fn cmd_verify(ctx: &Context) -> Result<VerifySummary> {
    ctx.ensure_output()?;
    let mut warnings = Vec::new();
    let model = ctx.try_load_model(&mut warnings)?;
    let assessor = model
        .as_ref()
        .map(|m| Assessor::new(m, &ctx.kg, &ctx.coverage, CoverageMode::Binary))
        .transpose()?;
    let report = assumption_report(&ctx.kg, &ctx.coverage, assessor.as_ref(), &ctx.test, &ctx.config.ood.epsilons);
    let (complementarity, alpha) = match &assessor {
        Some(a) => {
            let half = MixingWeight::fixed_half();
            let (vi, vo) = assess_partition(a, &ctx.valid, half);
            let w = ctx.mixing_weight(&vi, &vo, &mut warnings)?;
            let assessed = AssessedPartition::new(a, &ctx.test, w);
            match complementarity_table(&assessed) {
                Ok(rows) => (Some(rows), Some(w.alpha())),
                Err(e) => {
                    warnings.push(format!("complementarity table skipped: {e}"));
                    (None, Some(w.alpha()))
                }
            }
        }
        None => (None, None),
    };
    let summary = VerifySummary { report, complementarity, alpha, warnings };
    write_json(&ctx.out("assumptions.json"), &summary)?;
    write_text(&ctx.out("assumptions.txt"), &render_verify(&summary))?;
    write_csv(&ctx.out("a3_sweep.csv"), &summary.report.a3_matched)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageAblationRow {
    pub coverage: CoverageMode,
    pub structural_novel_context: Option<f64>,
    pub structural_overall: Option<f64>,
    pub cagp_overall: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaAblationRow {
    pub mode: AlphaMode,
    pub alpha: f64,
    pub emerging: Option<f64>,
    pub novel_context: Option<f64>,
    pub overall: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub percentile: f64,
    pub tau: u64,
    pub emerging: usize,
    pub novel_context: usize,
    pub in_distribution: usize,
    pub structural_overall: Option<f64>,
    pub semantic_overall: Option<f64>,
    pub cagp_overall: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureRow {
    pub scorer: ScorerKind,
    pub a1_spearman: Option<f64>,
    pub semantic_overall: Option<f64>,
    pub structural_overall: Option<f64>,
    pub cagp_overall: Option<f64>,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub coverage: Vec<CoverageAblationRow>,
    pub alpha: Vec<AlphaAblationRow>,
    pub tau: Vec<TauRow>,
    pub architecture: Vec<ArchitectureRow>,
    pub warnings: Vec<String>,
}

fn auroc_cell(
    signal: Signal,
    id: &[UncertaintyAssessment],
    ood: &[UncertaintyAssessment],
    what: &str,
    warnings: &mut Vec<String>,
) -> Result<Option<f64>> {
    defined(signal_auroc(signal, id, ood), what, warnings)
}

/// Overall test AUROC of `signal` with the weight learned on validation.
struct Scored {
    alpha: f64,
    semantic: Option<f64>,
    structural: Option<f64>,
    cagp: Option<f64>,
}

fn score_partitions(
    ctx: &Context,
    assessor: &Assessor<'_>,
    valid: &cagp_core::OodPartition,
    test: &cagp_core::OodPartition,
    label: &str,
    warnings: &mut Vec<String>,
) -> Result<Scored> {
    let half = MixingWeight::fixed_half();
    let (vi, vo) = assess_partition(assessor, valid, half);
    let w = weight_for(ctx.config.uncertainty.alpha, &vi, &vo)?;
    let (ti, to) = assess_partition(assessor, test, w);
    Ok(Scored {
        alpha: w.alpha(),
        semantic: auroc_cell(Signal::Semantic, &ti, &to, &format!("{label} semantic"), warnings)?,
        structural: auroc_cell(Signal::Structural, &ti, &to, &format!("{label} structural"), warnings)?,
        cagp: auroc_cell(Signal::Cagp, &ti, &to, &format!("{label} cagp"), warnings)?,
    })
}

fn variances_or_flat(model: Option<&GaussianEmbeddingModel>, n: usize) -> Vec<f64> {
    match model {
        Some(m) => cagp_core::uncertainty::entity_variances(m),
        None => vec![1.0; n],
    }
}

/// Coverage-mode, mixing-weight and threshold sweeps, plus scorer comparison
/// when `architectures` is set (which trains one model per scorer). Rows that
/// need embedding variances are skipped without a checkpoint.
pub fn cmd_ablate(ctx: &Context, architectures: bool) -> Result<AblationSummary> {
    ctx.ensure_output()?;
    let mut warnings = Vec::new();
    let model = ctx.try_load_model(&mut warnings)?;
    let mut rec = Recorder::new("temporal_like", ctx.config.seeds.train);
    let half = MixingWeight::fixed_half();
    let variances = variances_or_flat(model.as_ref(), ctx.kg.entity_count());

    let mut coverage = Vec::new();
    for mode in CoverageMode::ALL {
        let a = Assessor::from_variances(variances.clone(), &ctx.kg, &ctx.coverage, mode)?;
        let (ti, _) = assess_partition(&a, &ctx.test, half);
        let novel = a.assess_all(&ctx.test.novel_context, half);
        let label = format!("coverage {}", mode.name());
        let structural_novel_context = auroc_cell(Signal::Structural, &ti, &novel, &label, &mut warnings)?;
        let (cagp_overall, alpha, structural_overall) = if model.is_some() {
            let s = score_partitions(ctx, &a, &ctx.valid, &ctx.test, &label, &mut warnings)?;
            (s.cagp, Some(s.alpha), s.structural)
        } else {
            let ood = a.assess_all(&ctx.test.ood(), half);
            (None, None, auroc_cell(Signal::Structural, &ti, &ood, &label, &mut warnings)?)
        };
        rec.push(&format!("coverage_{}_auroc_novel_context", mode.name()), "structural", structural_novel_context);
        rec.push(&format!("coverage_{}_auroc", mode.name()), "structural", structural_overall);
        rec.push(&format!("coverage_{}_auroc", mode.name()), "cagp", cagp_overall);
        coverage.push(CoverageAblationRow { coverage: mode, structural_novel_context, structural_overall, cagp_overall, alpha });
    }
    write_csv(&ctx.out("ablation_coverage.csv"), &coverage)?;

    let mut alpha_rows = Vec::new();
    let mode = ctx.config.uncertainty.coverage;
    if model.is_some() {
        let a = Assessor::from_variances(variances.clone(), &ctx.kg, &ctx.coverage, mode)?;
        let (vi, vo) = assess_partition(&a, &ctx.valid, half);
        if let Ok(profile) = alpha_profile(&vi, &vo) {
            #[derive(Serialize)]
            struct ProfileRow {
                alpha: f64,
                validation_auroc: f64,
            }
            let rows: Vec<ProfileRow> =
                profile.into_iter().map(|(alpha, validation_auroc)| ProfileRow { alpha, validation_auroc }).collect();
            write_csv(&ctx.out("alpha_profile.csv"), &rows)?;
        }
        for am in [AlphaMode::Fixed, AlphaMode::Learned] {
            let w = weight_for(am, &vi, &vo)?;
            let t = AssessedPartition::new(&a, &ctx.test, w);
            let ood = t.ood();
            let label = format!("alpha {am:?}");
            let row = AlphaAblationRow {
                mode: am,
                alpha: w.alpha(),
                emerging: auroc_cell(Signal::Cagp, &t.in_distribution, &t.emerging, &label, &mut warnings)?,
                novel_context: auroc_cell(Signal::Cagp, &t.in_distribution, &t.novel_context, &label, &mut warnings)?,
                overall: auroc_cell(Signal::Cagp, &t.in_distribution, &ood, &label, &mut warnings)?,
            };
            let name = if am == AlphaMode::Fixed { "fixed" } else { "learned" };
            rec.push(&format!("alpha_{name}_auroc"), "cagp", row.overall);
            rec.push(&format!("alpha_{name}_value"), "cagp", Some(row.alpha));
            alpha_rows.push(row);
        }
        write_csv(&ctx.out("ablation_alpha.csv"), &alpha_rows)?;
    }

    let mut tau = Vec::new();
    let a = Assessor::from_variances(variances, &ctx.kg, &ctx.coverage, mode)?;
    for &pct in &ctx.config.ood.tau_sweep {
        let (t, valid, test) = ctx.partitions_at(pct, ctx.config.ood.tau_basis)?;
        let s = score_partitions(ctx, &a, &valid, &test, &format!("tau {pct}"), &mut warnings)?;
        let (emerging, novel_context, in_distribution) = test.sizes();
        let trained = model.is_some();
        let row = TauRow {
            percentile: pct,
            tau: t,
            emerging,
            novel_context,
            in_distribution,
            structural_overall: s.structural,
            semantic_overall: s.semantic.filter(|_| trained),
            cagp_overall: s.cagp.filter(|_| trained),
            alpha: trained.then_some(s.alpha),
        };
        rec.push(&format!("tau_p{pct}_auroc"), "structural", row.structural_overall);
        rec.push(&format!("tau_p{pct}_auroc"), "semantic", row.semantic_overall);
        rec.push(&format!("tau_p{pct}_auroc"), "cagp", row.cagp_overall);
        tau.push(row);
    }
    write_csv(&ctx.out("tau_sensitivity.csv"), &tau)?;

    let mut architecture = Vec::new();
    if architectures {
        for scorer in ScorerKind::ALL {
            let m = match &model {
                Some(m) if m.scorer() == scorer => m.clone(),
                _ => {
                    let cfg = cagp_core::TrainConfig { scorer, ..ctx.config.train_config() };
                    embed::train(&ctx.kg, &cfg)?.model
                }
            };
            let a = Assessor::new(&m, &ctx.kg, &ctx.coverage, mode)?;
            let label = format!("scorer {}", scorer.name());
            let s = score_partitions(ctx, &a, &ctx.valid, &ctx.test, &label, &mut warnings)?;
            let (f, v): (Vec<f64>, Vec<f64>) = ctx
                .kg
                .frequencies()
                .iter()
                .zip(a.variances())
                .filter(|(&f, _)| f > 0)
                .map(|(&f, &v)| (f as f64, v))
                .unzip();
            let row = ArchitectureRow {
                scorer,
                a1_spearman: spearman(&f, &v).ok(),
                semantic_overall: s.semantic,
                structural_overall: s.structural,
                cagp_overall: s.cagp,
                alpha: s.alpha,
            };
            rec.push(&format!("scorer_{}_auroc", scorer.name()), "cagp", row.cagp_overall);
            rec.push(&format!("scorer_{}_auroc", scorer.name()), "semantic", row.semantic_overall);
            architecture.push(row);
        }
        write_csv(&ctx.out("ablation_architecture.csv"), &architecture)?;
    }
    write_json(&ctx.out("metrics_ablation.json"), &rec.records)?;
    Ok(AblationSummary { coverage, alpha: alpha_rows, tau, architecture, warnings })
}
