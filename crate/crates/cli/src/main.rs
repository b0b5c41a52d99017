//! `mfhover` command-line interface.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{EvalFlags, PostprocFlags, RunConfig, TrainFlags};
use error::{CliError, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "mfhover",
    version,
    about = "Nuclei segmentation, classification and counting toolkit"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-patch work.
    #[arg(long, global = true, env = "MFHOVER_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-class nucleus totals of a label archive.
    Stats {
        #[arg(long)]
        labels: PathBuf,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// Bar chart of the totals.
        #[arg(long)]
        out_svg: Option<PathBuf>,
    },
    /// Five-fold split files.
    Folds {
        /// Label archive whose patch count is split.
        #[arg(long, conflicts_with = "count", required_unless_present = "count")]
        labels: Option<PathBuf>,
        /// Number of patches to split.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory receiving fold-0.json .. fold-4.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Trains the toy network on an image and label archive.
    TrainToy {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Weights with the lowest validation loss (the last weights without a fold).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Weights after the last step.
        #[arg(long)]
        last_checkpoint: Option<PathBuf>,
        /// Per-step loss trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Fold file whose validation indices are held out.
        #[arg(long, conflicts_with = "fold")]
        fold_file: Option<PathBuf>,
        /// Training summary; printed to stdout when omitted.
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Raw network outputs for an image archive.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        images: PathBuf,
        /// Float64 archive of N×11×H×W outputs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Instances and types from stored network outputs.
    Postproc {
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long)]
        out_labels: PathBuf,
        #[arg(long)]
        out_counts: Option<PathBuf>,
        #[command(flatten)]
        params: PostprocFlags,
    },
    /// Scores predicted labels and counts against ground truth.
    Eval {
        #[arg(long)]
        gt_labels: PathBuf,
        #[arg(long)]
        pred_labels: PathBuf,
        /// Ground-truth counts; derived from the labels when omitted.
        #[arg(long)]
        gt_counts: Option<PathBuf>,
        /// Predicted counts; derived from the labels when omitted.
        #[arg(long)]
        pred_counts: Option<PathBuf>,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        /// Grouped bar chart of PQ, MultiR and mPQ.
        #[arg(long)]
        out_svg: Option<PathBuf>,
        /// Series name of this evaluation in the chart.
        #[arg(long, default_value = "prediction")]
        name: String,
        /// Earlier reports drawn beside this one, as NAME=REPORT.json.
        #[arg(long, value_name = "NAME=PATH")]
        compare: Vec<String>,
        #[command(flatten)]
        eval: EvalFlags,
    },
    /// Inference and post-processing to label and counts archives.
    Pipeline {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out_labels: PathBuf,
        #[arg(long)]
        out_counts: PathBuf,
        #[command(flatten)]
        params: PostprocFlags,
    },
    /// Synthetic patches with touching nuclei of two classes.
    Synth {
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out_images: PathBuf,
        #[arg(long)]
        out_labels: PathBuf,
        #[arg(long)]
        out_counts: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    let workers = match cli.workers {
        Some(0) => return Err(CliError::Usage("--workers must be positive".into())),
        Some(n) => n,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Stats {
            labels,
            out_json,
            out_svg,
        } => commands::stats(&labels, out_json.as_deref(), out_svg.as_deref()),
        Command::Folds {
            labels,
            count,
            seed,
            out_dir,
        } => {
            if let Some(s) = seed {
                config.fold_seed = s;
            }
            commands::folds(labels.as_deref(), count, config.fold_seed, &out_dir)
        }
        Command::TrainToy {
            images,
            labels,
            checkpoint,
            last_checkpoint,
            trace,
            fold_file,
            out_json,
            train,
        } => {
            train.apply(&mut config);
            commands::train_toy(
                &config,
                commands::TrainPaths {
                    images: &images,
                    labels: &labels,
                    checkpoint: &checkpoint,
                    last_checkpoint: last_checkpoint.as_deref(),
                    trace: trace.as_deref(),
                    fold_file: fold_file.as_deref(),
                    out_json: out_json.as_deref(),
                },
            )
        }
        Command::Infer {
            checkpoint,
            images,
            out,
        } => commands::infer(&config, &checkpoint, &images, &out),
        Command::Postproc {
            outputs,
            out_labels,
            out_counts,
            params,
        } => {
            params.apply(&mut config.postproc);
            commands::postproc(&config, &outputs, &out_labels, out_counts.as_deref())
        }
        Command::Eval {
            gt_labels,
            pred_labels,
            gt_counts,
            pred_counts,
            out_json,
            out_csv,
            out_svg,
            name,
            compare,
            eval,
        } => {
            eval.apply(&mut config);
            commands::eval(
                &config,
                commands::EvalPaths {
                    gt_labels: &gt_labels,
                    pred_labels: &pred_labels,
                    gt_counts: gt_counts.as_deref(),
                    pred_counts: pred_counts.as_deref(),
                    out_json: out_json.as_deref(),
                    out_csv: out_csv.as_deref(),
                    out_svg: out_svg.as_deref(),
                },
                &name,
                &compare,
            )
        }
        Command::Pipeline {
            checkpoint,
            images,
            out_labels,
            out_counts,
            params,
        } => {
            params.apply(&mut config.postproc);
            commands::pipeline(&config, &checkpoint, &images, &out_labels, &out_counts)
        }
        Command::Synth {
            count,
            seed,
            size,
            out_images,
            out_labels,
            out_counts,
        } => {
            if let Some(s) = seed {
                config.seed = s;
            }
            commands::synth(
                count,
                config.seed,
                size,
                &out_images,
                &out_labels,
                out_counts.as_deref(),
            )
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            e.print().ok();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
