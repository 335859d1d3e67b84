//! Command line front end: dataset tooling, training, evaluation, studies and
//! plots. Exit codes: 0 success, 1 configuration error, 2 runtime failure
//! (divergence, I/O, malformed files).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use csi_jigsaw::eval::{
    compare_strategies, emit_report_plot, emit_train_plot, evaluate, parse_alphas, sweep_alpha, EvalReport,
    Provenance, REPORT_HEADER,
};
use csi_jigsaw::model::{load_model, save_model, Eta};
use csi_jigsaw::synth::{generate_dataset, import_flat_samples, read_dataset, write_dataset, Preset, Split, SplitCounts};
use csi_jigsaw::trainer::{train_with, Strategy, TrainConfig, TrainLog, TRAIN_LOG_HEADER};
use csi_jigsaw::{Error, Result};

#[derive(Parser)]
#[command(name = "csi-jigsaw", version, about = "CSI feedback autoencoders with a jigsaw pretext task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic angular-delay dataset (5:1:1 train/val/test).
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PresetArg::Indoor)]
        preset: PresetArg,
    },
    /// Convert flat little-endian f32 samples (2048 values each) to a dataset.
    Import {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "train", value_parser = parse_split)]
        split: Split,
    },
    /// Train one model and save its checkpoint.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train and evaluate once per alpha.
    SweepAlpha {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "0.3:0.8:0.1")]
        alphas: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train baseline, alternative and jpts models on the same data and seeds.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value = "1,2,3,4,5", value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render a training log or evaluation report as SVG.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "jpts", value_parser = parse_strategy)]
    strategy: Strategy,
    #[arg(long, default_value = "1/16", value_parser = parse_eta)]
    eta: Eta,
    #[arg(long, default_value_t = 4)]
    tiles: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write 0 in the seconds column so logs are byte-identical across runs.
    #[arg(long)]
    no_timing: bool,
}

impl RunArgs {
    fn config(&self, alpha: f64) -> TrainConfig {
        TrainConfig {
            strategy: self.strategy,
            alpha,
            eta: self.eta,
            tiles: self.tiles,
            epochs: self.epochs,
            batch_size: self.batch,
            seed: self.seed,
            record_time: !self.no_timing,
            ..TrainConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Indoor,
    Outdoor,
}

fn parse_split(s: &str) -> Result<Split> {
    s.parse()
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    s.parse()
}

fn parse_eta(s: &str) -> Result<Eta> {
    s.parse()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn finish_report(report: &EvalReport, path: Option<&Path>) -> Result<()> {
    let csv = report.to_csv();
    print!("{csv}");
    match path {
        Some(p) => write_text(p, &csv),
        None => Ok(()),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthData { out, count, seed, preset } => {
            let preset = match preset {
                PresetArg::Indoor => Preset::Indoor,
                PresetArg::Outdoor => Preset::Outdoor,
            };
            let ds = generate_dataset(&preset.config(seed), SplitCounts::proportional(count))?;
            write_dataset(&out, &ds)?;
            eprintln!(
                "wrote {} samples ({} train, {} val, {} test) to {}",
                ds.len(),
                ds.count(Split::Train),
                ds.count(Split::Validation),
                ds.count(Split::Test),
                out.display()
            );
        }
        Command::Import { input, count, out, split } => {
            let ds = import_flat_samples(&input, count, split)?;
            write_dataset(&out, &ds)?;
            eprintln!("imported {} {} samples into {}", ds.len(), split.name(), out.display());
        }
        Command::Train { run, alpha, out, log } => {
            let cfg = run.config(alpha);
            cfg.validate()?;
            let dataset = read_dataset(&run.data)?;
            let mut sink = match &log {
                Some(p) => {
                    let f = File::create(p).map_err(|e| Error::io(p, e))?;
                    let mut w = BufWriter::new(f);
                    writeln!(w, "{TRAIN_LOG_HEADER}").map_err(|e| Error::io(p, e))?;
                    Some((p.clone(), w))
                }
                None => None,
            };
            let (params, _) = train_with(&dataset, &cfg, |r| {
                eprintln!(
                    "epoch {:>4}  train {:.6}  val {:.6}  acc {:.3}",
                    r.epoch, r.train_loss, r.val_loss, r.puzzle_acc
                );
                if let Some((p, w)) = sink.as_mut() {
                    writeln!(w, "{}", r.csv_row()).and_then(|_| w.flush()).map_err(|e| Error::io(p.as_path(), e))?;
                }
                Ok(())
            })?;
            save_model(&out, &params, &cfg.checkpoint_keys())?;
            eprintln!("saved {}", out.display());
        }
        Command::Eval { ckpt, data, split, report } => {
            let (params, kv) = load_model(&ckpt)?;
            let dataset = read_dataset(&data)?;
            let row = evaluate(&params, &Provenance::from_kv(&kv)?, &dataset, split)?;
            finish_report(&EvalReport { rows: vec![row] }, report.as_deref())?;
        }
        Command::SweepAlpha { run, alphas, report } => {
            let alphas = parse_alphas(&alphas)?;
            let base = run.config(alphas[0]);
            base.validate()?;
            let dataset = read_dataset(&run.data)?;
            let study = sweep_alpha(&dataset, &base, &alphas)?;
            finish_report(&study.report, report.as_deref())?;
        }
        Command::Compare { run, alpha, seeds, report } => {
            let cfg = run.config(alpha);
            cfg.validate()?;
            let dataset = read_dataset(&run.data)?;
            let study = compare_strategies(&dataset, &cfg, &seeds)?;
            finish_report(&study.report, report.as_deref())?;
        }
        Command::Plot { input, out } => {
            let text = fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
            let header = text.lines().next().unwrap_or("").trim();
            let csv = if header == TRAIN_LOG_HEADER {
                emit_train_plot(&TrainLog::from_csv(&text)?, &out)?
            } else if header == REPORT_HEADER {
                emit_report_plot(&EvalReport::from_csv(&text)?, &out)?
            } else {
                return Err(Error::Config(format!(
                    "{}: neither a training log nor an evaluation report",
                    input.display()
                )));
            };
            eprintln!("wrote {} and {}", out.display(), csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
