use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noisybox::evaluation::auroc;
use noisybox::pipeline::{cmd_detect, cmd_eval, cmd_inject, PipelineConfig, OUTPUT_DIR_ENV};
use noisybox::{io, Error, NoiseKind, NoiseSpec};

/// Find suspicious bounding-box annotations with confident learning.
#[derive(Debug, Parser)]
#[command(name = "noisybox", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inject synthetic noise into a clean dataset and record it in a ledger.
    Inject {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Report clusters whose annotations disagree with the predictions.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou_threshold: f64,
        /// `confident_joint` or `score_threshold`.
        #[arg(long, default_value = "confident_joint")]
        cl_mode: String,
        /// Quality-score cut-off for `score_threshold` mode.
        #[arg(long)]
        tau: Option<f64>,
        /// Also write the reduced matrices to `matrices.tsv`.
        #[arg(long)]
        dump_matrices: bool,
    },
    /// Sweep the quality score against injected noise and report AUROC.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou_threshold: f64,
        /// Ledger from a previous `inject`; `--ground-truth` is then the noisy dataset.
        #[arg(long, conflicts_with = "noise_kind")]
        ledger: Option<PathBuf>,
        #[command(flatten)]
        noise: OptionalNoiseArgs,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// Sweep every distinct score instead of the 11-point grid.
        #[arg(long)]
        dense: bool,
        #[arg(long, default_value_t = 0.5)]
        match_iou: f64,
    },
    /// Print the AUROC of a `threshold,fpr,tpr` table.
    Roc {
        #[arg(long)]
        points: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = ".")]
    output_dir: PathBuf,
}

#[derive(Debug, Args)]
struct NoiseArgs {
    #[arg(long)]
    noise_kind: NoiseKind,
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    #[arg(long, required_if_eq_any = [("noise_kind", "location"), ("noise_kind", "scale")])]
    amplitude: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct OptionalNoiseArgs {
    #[arg(long)]
    noise_kind: Option<NoiseKind>,
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    #[arg(long, required_if_eq_any = [("noise_kind", "location"), ("noise_kind", "scale")])]
    amplitude: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn config(common: Common) -> PipelineConfig {
    PipelineConfig::new(common.ground_truth, common.output_dir)
}

fn run(command: Command) -> noisybox::Result<()> {
    match command {
        Command::Inject { common, noise } => {
            let mut cfg = config(common);
            cfg.noise = Some(NoiseSpec::new(noise.noise_kind, noise.fraction, noise.amplitude, noise.seed)?);
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_error(&cfg.output_dir, e))?;
            let out = cmd_inject(&cfg)?;
            println!(
                "perturbed {} annotations; {} remain",
                out.perturbed, out.annotations
            );
            println!("dataset: {}", out.dataset_path.display());
            println!("ledger: {}", out.ledger_path.display());
        }
        Command::Detect {
            common,
            predictions,
            iou_threshold,
            cl_mode,
            tau,
            dump_matrices,
        } => {
            let mut cfg = config(common);
            cfg.predictions = Some(predictions);
            cfg.iou_threshold = iou_threshold;
            cfg.cl_mode = cl_mode;
            cfg.tau = tau;
            cfg.dump_matrices = dump_matrices;
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_error(&cfg.output_dir, e))?;
            let out = cmd_detect(&cfg)?;
            let s = &out.summary;
            println!("mode: {}", s.mode);
            println!("clusters: {}", s.clusters);
            println!("flagged rows: {}", s.flagged_rows);
            println!("flagged annotations: {}", s.flagged_annotations);
            println!("missing regions: {}", s.missing_regions);
            println!("report: {}", out.report_path.display());
        }
        Command::Eval {
            common,
            predictions,
            iou_threshold,
            ledger,
            noise,
            runs,
            dense,
            match_iou,
        } => {
            let mut cfg = config(common);
            cfg.predictions = Some(predictions);
            cfg.iou_threshold = iou_threshold;
            cfg.ledger = ledger;
            cfg.runs = runs;
            cfg.dense = dense;
            cfg.match_iou = match_iou;
            if let Some(kind) = noise.noise_kind {
                cfg.noise = Some(NoiseSpec::new(kind, noise.fraction, noise.amplitude, noise.seed)?);
            }
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_error(&cfg.output_dir, e))?;
            let out = cmd_eval(&cfg)?;
            for (i, r) in out.summary.runs.iter().enumerate() {
                match r.seed {
                    Some(seed) => println!("run {i} (seed {seed}): auroc {:.6}", r.auroc),
                    None => println!("run {i}: auroc {:.6}", r.auroc),
                }
            }
            println!("median auroc: {:.6}", out.summary.median_auroc);
            println!("roc: {}", out.roc_path.display());
            println!("summary: {}", out.summary_path.display());
        }
        Command::Roc { points } => {
            let pts = io::load_roc_points(&points)?;
            println!("auroc: {:.6}", auroc(&pts)?);
        }
    }
    Ok(())
}

fn io_error(path: &std::path::Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error[usage]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
