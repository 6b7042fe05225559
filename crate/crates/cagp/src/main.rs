use std::path::PathBuf;
use std::process::ExitCode;

use cagp::pipeline::{self, Context, EvalMode};
use cagp::{CliError, Result, RunConfig};
use cagp_core::{CoverageMode, Optimizer, ScorerKind};
use clap::{Args, Parser, Subcommand};

/// Coverage-augmented uncertainty for knowledge-graph embeddings.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset directory.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    scorer: Option<ScorerKind>,
    #[arg(long, global = true)]
    optimizer: Option<Optimizer>,
    #[arg(long, global = true)]
    coverage: Option<CoverageMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Graph statistics, coverage and OOD partitions.
    Prepare,
    /// Train Gaussian embeddings and write the checkpoint.
    Train,
    /// Detection, calibration and selective-prediction metrics.
    Eval {
        #[arg(long, value_enum, default_value = "temporal_like")]
        mode: EvalMode,
    },
    /// Assumption report and signal separation checks.
    Verify,
    /// Coverage-mode, mixing-weight and threshold sweeps.
    Ablate {
        /// Also train and compare every scorer.
        #[arg(long)]
        architectures: bool,
    },
    /// Method comparison across evaluation modes.
    Report,
    /// Print the effective configuration as TOML.
    Config,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seeds.train = s;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(s) = self.scorer {
            cfg.train.scorer = s;
        }
        if let Some(o) = self.optimizer {
            cfg.train.optimizer = o;
        }
        if let Some(c) = self.coverage {
            cfg.uncertainty.coverage = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn warn(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn run(cli: Cli) -> Result<String> {
    let cfg = cli.overrides.resolve()?;
    if let Command::Config = cli.command {
        return Ok(cfg.to_toml());
    }
    let ctx = Context::load(cfg)?;
    let out = match cli.command {
        Command::Prepare => {
            let s = pipeline::cmd_prepare(&ctx)?;
            let p = s.test_partition;
            format!(
                "entities {}  relations {}  train {}  tau {}\ntest partition: emerging {}  novel_context {}  in_distribution {}\n",
                s.entities, s.relations, s.train_triples, s.tau, p.emerging, p.novel_context, p.in_distribution
            )
        }
        Command::Train => {
            let s = pipeline::cmd_train(&ctx, |epoch, loss| eprintln!("epoch {epoch:>3}  loss {loss:.6}"))?;
            format!(
                "epochs {}  final loss {}\ncheckpoint {}  sha256 {}\n",
                s.epochs,
                fmt_opt(s.final_loss),
                s.checkpoint.display(),
                s.checkpoint_sha256
            )
        }
        Command::Eval { mode } => {
            let s = pipeline::cmd_eval(&ctx, mode)?;
            warn(&s.warnings);
            let mut text = format!("{} (alpha = {:.2})\nsignal       auroc   aupr    f1      ece     brier\n", mode.name(), s.alpha);
            for r in &s.detection {
                text.push_str(&format!(
                    "{:<12} {:<7} {:<7} {:<7} {:<7} {}\n",
                    r.signal,
                    fmt_opt(r.auroc),
                    fmt_opt(r.aupr),
                    fmt_opt(r.f1),
                    fmt_opt(r.ece),
                    fmt_opt(r.brier)
                ));
            }
            text
        }
        Command::Verify => {
            let s = pipeline::cmd_verify(&ctx)?;
            warn(&s.warnings);
            pipeline::render_verify(&s)
        }
        Command::Ablate { architectures } => {
            let s = pipeline::cmd_ablate(&ctx, architectures)?;
            warn(&s.warnings);
            let mut text = String::from("coverage     structural(novel)  structural  cagp\n");
            for r in &s.coverage {
                text.push_str(&format!(
                    "{:<12} {:<18} {:<11} {}\n",
                    r.coverage.name(),
                    fmt_opt(r.structural_novel_context),
                    fmt_opt(r.structural_overall),
                    fmt_opt(r.cagp_overall)
                ));
            }
            text.push_str("percentile   tau   structural  semantic  cagp\n");
            for r in &s.tau {
                text.push_str(&format!(
                    "{:<12} {:<5} {:<11} {:<9} {}\n",
                    r.percentile,
                    r.tau,
                    fmt_opt(r.structural_overall),
                    fmt_opt(r.semantic_overall),
                    fmt_opt(r.cagp_overall)
                ));
            }
            text
        }
        Command::Report => pipeline::cmd_report(&ctx)?,
        Command::Config => unreachable!("handled above"),
    };
    Ok(out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
