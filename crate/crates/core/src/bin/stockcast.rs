use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stockcast::model::{Architecture, ModelConfig};
use stockcast::preprocess::{ScalerFit, DEFAULT_TIME_STEP};
use stockcast::training::{AdamHyper, TrainConfig};
use stockcast::workflow::{self, CompareOutcome, DataOptions, RunManifest, TrainOptions, PROPOSED_MODEL};
use stockcast::{Error, Feature, Result};

#[derive(Parser)]
#[command(
    name = "stockcast",
    version,
    about = "LSTM + self-attention next-day price forecaster"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a CSV and save the model (plus `<model>.manifest.json`).
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Score a saved model on the test partition of a CSV.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Per-day report CSV; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Forecast the trading day after the last row of a CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train and score the comparison models and baselines on one split.
    Compare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        sma: usize,
        /// Table CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// SMA columns and the feature correlation matrix.
    Indicators {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "Adj Close")]
        feature: Feature,
        #[arg(long, value_delimiter = ',', default_value = "10,20,50")]
        windows: Vec<usize>,
        #[arg(long)]
        sma_out: Option<PathBuf>,
        #[arg(long)]
        corr_out: Option<PathBuf>,
    },
    /// Re-run a recorded training run from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Write the model here instead of the recorded path.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long, default_value = "Adj Close")]
    feature: Feature,
    #[arg(long, default_value_t = 0.9)]
    ratio: f64,
    #[arg(long, default_value_t = DEFAULT_TIME_STEP)]
    time_step: usize,
    #[arg(long, default_value_t = 50)]
    hidden: usize,
    #[arg(long, default_value_t = 50)]
    attention_dim: usize,
    #[arg(long, default_value_t = 10)]
    batch: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = ScalerFit::Train)]
    fit_scaler_on: ScalerFit,
    #[arg(long)]
    no_shuffle: bool,
    /// Plain LSTM instead of LSTM + attention.
    #[arg(long, default_value_t = Architecture::LstmSsam)]
    architecture: Architecture,
}

impl TrainFlags {
    fn options(&self) -> TrainOptions {
        TrainOptions {
            data: DataOptions {
                feature: self.feature,
                ratio: self.ratio,
                fit_scaler_on: self.fit_scaler_on,
            },
            model: ModelConfig {
                architecture: self.architecture,
                hidden_units: self.hidden,
                time_step: self.time_step,
                attention_dim: self.attention_dim,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                batch_size: self.batch,
                epochs: self.epochs,
                shuffle: !self.no_shuffle,
                hyper: AdamHyper {
                    alpha: self.lr,
                    ..AdamHyper::default()
                },
                ..TrainConfig::default()
            },
        }
        .with_seed(self.seed)
    }
}

fn progress(r: &stockcast::training::EpochReport) {
    eprintln!("epoch {:>4}  loss {:.6e}  {:.2}s", r.epoch, r.mean_loss, r.elapsed_secs);
}

fn print_manifest(m: &RunManifest) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(m)?);
    Ok(())
}

fn write_or_print(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Train { data, out, flags } => {
            let manifest = workflow::run_train(&data, &out, &flags.options(), progress)?;
            print_manifest(&manifest)?;
        }
        Command::Evaluate {
            model,
            data,
            report,
            predictions,
        } => {
            let run = workflow::run_evaluate(&model, &data, report.as_deref(), predictions.as_deref())?;
            for w in &run.warnings {
                eprintln!("warning: {w}");
            }
            if report.is_none() {
                print!("{}", run.report.to_csv());
            }
            eprintln!("{}", run.report.summary_line());
        }
        Command::Predict { model, data } => {
            let f = workflow::run_predict(&model, &data)?;
            println!("after,predicted");
            println!("{},{:.6}", f.after, f.price);
        }
        Command::Compare { data, sma, out, flags } => {
            let rows = workflow::run_compare(&data, &flags.options(), sma)?;
            write_or_print(out.as_ref(), &workflow::compare_table_csv(&rows))?;
            let proposed = rows.iter().find(|r| r.algorithm == PROPOSED_MODEL);
            if let Some(CompareOutcome::Failed(msg, code)) = proposed.map(|r| &r.outcome) {
                eprintln!("error: {PROPOSED_MODEL}: {msg}");
                return Ok(*code);
            }
        }
        Command::Indicators {
            data,
            feature,
            windows,
            sma_out,
            corr_out,
        } => {
            let out = workflow::run_indicators(&data, feature, &windows)?;
            write_or_print(sma_out.as_ref(), &out.sma_csv())?;
            write_or_print(corr_out.as_ref(), &out.correlation.to_csv())?;
            eprintln!("best SMA window: {} (rmse {:.4})", out.best_window.0, out.best_window.1);
        }
        Command::Replay { manifest, out } => {
            let recorded = RunManifest::read(&manifest)?;
            let fresh = workflow::replay(&recorded, out.as_deref())?;
            print_manifest(&fresh)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", stage_message(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn stage_message(e: &Error) -> String {
    let stage = match e {
        Error::Header { .. } | Error::Row { .. } | Error::EmptyInput | Error::UnorderedDates { .. } => "ingest",
        Error::InvalidRatio(_) | Error::EmptyPartition { .. } => "split",
        Error::DegenerateScaler(_) => "scale",
        Error::InsufficientData { .. } => "window",
        Error::Numeric(_) | Error::NonFinite { .. } => "train",
        Error::UnsupportedVersion(_) | Error::Corrupt(_) | Error::Parse { .. } | Error::InvalidBundle(_) => {
            "model file"
        }
        Error::InvalidConfig(_) | Error::UnknownFeature(_) => "config",
        Error::Io(_) => "io",
        _ => "run",
    };
    format!("{stage}: {e}")
}
