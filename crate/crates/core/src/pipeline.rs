//! End-to-end orchestration: inject, detect, evaluate.
//!
//! The in-memory entry points ([`detect`], [`evaluate`], [`evaluate_runs`])
//! are what the `cmd_*` functions wrap with file handling.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_dataset, DEFAULT_IOU_THRESHOLD};
use crate::confident_learning::{
    apply_policy, compute_thresholds, detect_issues, map_to_boxes, BoxVerdict, PolicyRegistry,
    RowResult,
};
use crate::dataset::{Dataset, PredictionSet};
use crate::error::{Error, Result};
use crate::evaluation::{default_thresholds, median, RocCurve, ScoredItems, DEFAULT_MATCH_IOU};
use crate::io;
use crate::noise::{NoiseLedger, NoiseRegistry, NoiseSpec};
use crate::reduction::{reduce_dataset, ReducedMatrices};
use crate::report::{build_report, Report};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "NOISYBOX_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOptions {
    pub iou_threshold: f64,
    pub cl_mode: String,
    pub tau: Option<f64>,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            cl_mode: "confident_joint".into(),
            tau: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub matrices: ReducedMatrices,
    pub rows: Vec<RowResult>,
    pub verdicts: Vec<BoxVerdict>,
    pub report: Report,
}

/// Cluster, reduce, score, and map back to annotations.
pub fn detect(ds: &Dataset, preds: &PredictionSet, opts: &DetectOptions) -> Result<Detection> {
    let policy = PolicyRegistry::default().create(&opts.cl_mode, opts.tau)?;
    let clusters = cluster_dataset(ds, preds, opts.iou_threshold)?;
    let matrices = reduce_dataset(clusters, ds.num_classes())?;
    let thresholds = compute_thresholds(&matrices);
    let mut rows = detect_issues(&matrices, &thresholds);
    apply_policy(&mut rows, policy.as_ref());
    let verdicts = map_to_boxes(&matrices, &rows)?;
    let report = build_report(ds, &matrices, &verdicts, policy.name());
    Ok(Detection {
        matrices,
        rows,
        verdicts,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    pub match_iou: f64,
    /// Sweep every distinct score instead of the 11-point grid.
    pub dense: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            match_iou: DEFAULT_MATCH_IOU,
            dense: false,
        }
    }
}

/// ROC sweep of the quality score over a noisy dataset.
pub fn evaluate(
    noisy: &Dataset,
    preds: &PredictionSet,
    ledger: &NoiseLedger,
    opts: &EvalOptions,
) -> Result<RocCurve> {
    if ledger.is_empty() {
        return Err(Error::NoNoise(
            "the ledger is empty; inject noise before evaluating".into(),
        ));
    }
    let det = detect(
        noisy,
        preds,
        &DetectOptions {
            iou_threshold: opts.iou_threshold,
            ..Default::default()
        },
    )?;
    let items = ScoredItems::build(&det.verdicts, ledger, opts.match_iou)?;
    let grid = if opts.dense {
        items.dense_thresholds()
    } else {
        default_thresholds()
    };
    items.roc_curve(&grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub seed: Option<u64>,
    pub auroc: f64,
    pub curve: RocCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub runs: Vec<EvalRun>,
    pub median_auroc: f64,
}

/// Injects noise with seeds `spec.seed .. spec.seed + runs` and evaluates
/// each noisy copy of `clean`.
pub fn evaluate_runs(
    clean: &Dataset,
    preds: &PredictionSet,
    spec: &NoiseSpec,
    runs: usize,
    opts: &EvalOptions,
) -> Result<EvalSummary> {
    if runs == 0 {
        return Err(Error::InvalidInput("--runs must be at least 1".into()));
    }
    let registry = NoiseRegistry::default();
    let runs = (0..runs as u64)
        .map(|i| {
            let seed = spec.seed + i;
            let (noisy, ledger) = registry.inject(clean, &spec.with_seed(seed))?;
            let curve = evaluate(&noisy, preds, &ledger, opts)?;
            Ok(EvalRun {
                seed: Some(seed),
                auroc: curve.auroc,
                curve,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(runs))
}

fn summarize(runs: Vec<EvalRun>) -> EvalSummary {
    let aurocs: Vec<f64> = runs.iter().map(|r| r.auroc).collect();
    EvalSummary {
        median_auroc: median(&aurocs).unwrap_or(f64::NAN),
        runs,
    }
}

/// Settings shared by the command entry points.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub ground_truth: PathBuf,
    pub predictions: Option<PathBuf>,
    pub ledger: Option<PathBuf>,
    pub iou_threshold: f64,
    pub cl_mode: String,
    pub tau: Option<f64>,
    pub noise: Option<NoiseSpec>,
    pub output_dir: PathBuf,
    pub runs: usize,
    pub match_iou: f64,
    pub dense: bool,
    pub dump_matrices: bool,
}

impl PipelineConfig {
    pub fn new(ground_truth: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            ground_truth: ground_truth.into(),
            predictions: None,
            ledger: None,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            cl_mode: "confident_joint".into(),
            tau: None,
            noise: None,
            output_dir: output_dir.into(),
            runs: 1,
            match_iou: DEFAULT_MATCH_IOU,
            dense: false,
            dump_matrices: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::InvalidInput(format!(
                "IoU threshold must lie strictly between 0 and 1, got {}",
                self.iou_threshold
            )));
        }
        if let Some(spec) = &self.noise {
            spec.validate()?;
        }
        Ok(())
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn predictions_path(&self) -> Result<&Path> {
        self.predictions
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("a predictions file is required".into()))
    }

    fn detect_options(&self) -> DetectOptions {
        DetectOptions {
            iou_threshold: self.iou_threshold,
            cl_mode: self.cl_mode.clone(),
            tau: self.tau,
        }
    }

    fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            iou_threshold: self.iou_threshold,
            match_iou: self.match_iou,
            dense: self.dense,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectOutcome {
    pub dataset_path: PathBuf,
    pub ledger_path: PathBuf,
    pub annotations: usize,
    pub perturbed: usize,
}

/// Writes `noisy.json` and `ledger.json` into the output directory.
pub fn cmd_inject(cfg: &PipelineConfig) -> Result<InjectOutcome> {
    cfg.validate()?;
    let spec = cfg
        .noise
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("no noise kind given".into()))?;
    let clean = io::load_ground_truth(&cfg.ground_truth)?;
    let (noisy, ledger) = NoiseRegistry::default().inject(&clean, spec)?;
    let dataset_path = cfg.out("noisy.json");
    let ledger_path = cfg.out("ledger.json");
    io::save_dataset(&noisy, &dataset_path)?;
    io::save_ledger(&ledger, &ledger_path)?;
    Ok(InjectOutcome {
        dataset_path,
        ledger_path,
        annotations: noisy.annotations().len(),
        perturbed: ledger.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOutcome {
    pub report_path: PathBuf,
    pub summary: crate::report::ReportSummary,
}

/// Writes `report.csv` / `report.json` (and `matrices.tsv` on request).
pub fn cmd_detect(cfg: &PipelineConfig) -> Result<DetectOutcome> {
    cfg.validate()?;
    let ds = io::load_ground_truth(&cfg.ground_truth)?;
    let preds = io::load_predictions(cfg.predictions_path()?, &ds)?;
    let det = detect(&ds, &preds, &cfg.detect_options())?;
    let report_path = cfg.out("report.csv");
    io::save_report(&det.report, &report_path)?;
    if cfg.dump_matrices {
        let path = cfg.out("matrices.tsv");
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        det.matrices
            .write_debug_tsv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(DetectOutcome {
        report_path,
        summary: det.report.summary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub roc_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: EvalSummary,
}

/// Evaluates either a noisy dataset with its ledger, or `runs` fresh
/// injections into a clean dataset. Writes `roc.csv` (first run),
/// `roc_run<i>.csv` for multi-run evaluations, and `eval.json`.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<EvalOutcome> {
    cfg.validate()?;
    let ds = io::load_ground_truth(&cfg.ground_truth)?;
    let preds = io::load_predictions(cfg.predictions_path()?, &ds)?;
    let opts = cfg.eval_options();
    let summary = match (&cfg.ledger, &cfg.noise) {
        (Some(ledger), _) => {
            if cfg.runs > 1 {
                return Err(Error::InvalidInput(
                    "--runs needs a noise spec; a ledger describes a single run".into(),
                ));
            }
            let ledger = io::load_ledger(ledger)?;
            let curve = evaluate(&ds, &preds, &ledger, &opts)?;
            summarize(vec![EvalRun {
                seed: None,
                auroc: curve.auroc,
                curve,
            }])
        }
        (None, Some(spec)) => evaluate_runs(&ds, &preds, spec, cfg.runs, &opts)?,
        (None, None) => {
            return Err(Error::NoNoise(
                "pass --ledger from a previous inject, or a --noise-kind to inject now".into(),
            ))
        }
    };

    let roc_path = cfg.out("roc.csv");
    io::save_roc(&summary.runs[0].curve, &roc_path)?;
    if summary.runs.len() > 1 {
        for (i, run) in summary.runs.iter().enumerate() {
            io::save_roc(&run.curve, cfg.out(&format!("roc_run{i}.csv")))?;
        }
    }
    let summary_path = cfg.out("eval.json");
    let file = std::fs::File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &summary)?;
    Ok(EvalOutcome {
        roc_path,
        summary_path,
        summary,
    })
}
