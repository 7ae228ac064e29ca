//! `nfc` — train, evaluate, and verify neural factorization classifiers
//! on vibration data.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use nfc_cli::commands;
use nfc_cli::config::RunConfig;
use nfc_core::model::FusionKind;

#[derive(Parser)]
#[command(name = "nfc", version, about = "Neural factorization classifiers for vibration fault diagnosis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FusionArg {
    Cp,
    Tucker,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportFormat {
    /// Aligned plain-text tables.
    Text,
    /// JSON for downstream tooling.
    Machine,
}

#[derive(Args)]
struct ConfigOpts {
    /// Run configuration (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Fusion variant override (uses the variant's default dimensions).
    #[arg(long, value_enum)]
    fusion: Option<FusionArg>,
}

impl ConfigOpts {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        match self.fusion {
            Some(FusionArg::Cp) => cfg.arch.fusion = FusionKind::Cp { rank: 32 },
            Some(FusionArg::Tucker) => cfg.arch.fusion = FusionKind::Tucker { p: 16, q: 16 },
            None => {}
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic per-class recordings plus a manifest.
    GenData {
        #[command(flatten)]
        config: ConfigOpts,
        /// Output directory.
        #[arg(long, default_value = "out/data")]
        out: PathBuf,
    },
    /// Run the full pipeline: data, training, checkpoint, history, report.
    Train {
        #[command(flatten)]
        config: ConfigOpts,
        #[arg(long, default_value = "out/run")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Evaluate a checkpoint on the config's test split.
    Eval {
        /// Checkpoint written by `train`.
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigOpts,
        #[arg(long, default_value = "out/eval")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Verify analytic gradients against finite differences on small
    /// models of both fusion variants.
    Gradcheck {
        /// Corrupt the fusion gradient by 10% first; the check must fail.
        #[arg(long)]
        inject_fault: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Export the 12 time-domain features of every segment as CSV.
    Features {
        #[command(flatten)]
        config: ConfigOpts,
        /// Output CSV path.
        #[arg(long, default_value = "out/features.csv")]
        out: PathBuf,
    },
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = config.resolve()?;
            let summary = commands::cmd_gen_data(&cfg, &out)?;
            println!(
                "wrote {} recordings and {}",
                summary.files.len(),
                summary.manifest_path.display()
            );
        }
        Command::Train {
            config,
            out,
            format,
        } => {
            let cfg = config.resolve()?;
            let outputs = commands::cmd_train(&cfg, &out)?;
            match format {
                ReportFormat::Text => print!("{}", outputs.report.to_text()),
                ReportFormat::Machine => println!("{}", outputs.report.to_json()?),
            }
            println!(
                "checkpoint: {}\nhistory:    {}",
                outputs.checkpoint_path.display(),
                outputs.history_path.display()
            );
        }
        Command::Eval {
            checkpoint,
            config,
            out,
            format,
        } => {
            let cfg = config.resolve()?;
            let report = commands::cmd_eval(&checkpoint, &cfg, &out)?;
            match format {
                ReportFormat::Text => print!("{}", report.to_text()),
                ReportFormat::Machine => println!("{}", report.to_json()?),
            }
        }
        Command::Gradcheck {
            inject_fault,
            format,
        } => {
            let reports = commands::cmd_gradcheck(1e-4, inject_fault)?;
            let mut all_passed = true;
            for (name, report) in &reports {
                match format {
                    ReportFormat::Text => {
                        println!("== {name} ==");
                        print!("{}", report.to_text());
                    }
                    ReportFormat::Machine => {
                        let worst = report.worst().map(|t| t.name.clone()).unwrap_or_default();
                        println!(
                            "{{\"model\": \"{name}\", \"max_rel_error\": {}, \"worst\": \"{worst}\", \"passed\": {}}}",
                            report.max_rel_error, report.passed
                        );
                    }
                }
                all_passed &= report.passed;
            }
            if !all_passed {
                eprintln!("gradient check FAILED");
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Features { config, out } => {
            let cfg = config.resolve()?;
            let n = commands::cmd_features(&cfg, &out)?;
            println!("wrote {n} feature rows to {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
