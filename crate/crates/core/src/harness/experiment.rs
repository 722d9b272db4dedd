use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::generate::generate_instance;
use super::train::{train_toy, TrainingTrajectory, TrajectoryPoint};
use crate::distance::{logistic, DistanceFunction};
use crate::error::{Error, Result};
use crate::eval::{coco_style_ap, correlations, default_iou_thresholds, Detection, EvalReport, DEFAULT_CORR_IOU_THRESH};
use crate::geometry::{iou_unchecked, nms, BBox, DEFAULT_NMS_IOU_THRESH, DEFAULT_NMS_SCORE_THRESH};
use crate::rankloss::BalanceConstant;

/// Reads a scenario config, applies the seed override and validates it.
/// Every failure is reported as [`Error::Config`].
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg: ScenarioConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.apply_env_seed()?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_trajectory_csv<W: Write>(points: &[TrajectoryPoint], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for p in points {
        w.serialize(p).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub config: ScenarioConfig,
    pub final_loss: f64,
    pub steps: usize,
    /// Final evaluation; `None` when a metric is undefined for this run.
    pub report: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_error: Option<String>,
}

/// Final report: COCO-style AP on the NMS survivors, correlations on all
/// boxes (before NMS) whose IoU exceeds the correlation threshold.
fn final_report(traj: &TrainingTrajectory, gts: &[BBox], cfg: &ScenarioConfig) -> Result<EvalReport> {
    let scores: Vec<f64> = traj.final_logits.iter().map(|&l| logistic(l)).collect();
    let kept = nms(
        &traj.final_boxes,
        &scores,
        DEFAULT_NMS_SCORE_THRESH,
        DEFAULT_NMS_IOU_THRESH,
    )?;
    let dets: Vec<Detection> = kept
        .iter()
        .map(|&i| Detection {
            bbox: traj.final_boxes[i],
            score: scores[i],
        })
        .collect();
    let coco = coco_style_ap(&dets, gts, &default_iou_thresholds())?;
    let (mut s, mut t) = (Vec::new(), Vec::new());
    for (b, &score) in traj.final_boxes.iter().zip(&scores) {
        let best = gts.iter().map(|g| iou_unchecked(b, g)).fold(0.0, f64::max);
        if best > cfg.corr_iou_thresh {
            s.push(score);
            t.push(best);
        }
    }
    let c = correlations(&s, &t)?;
    Ok(EvalReport {
        ap: coco.ap,
        ap_by_iou: coco.ap_by_iou(),
        pcc: c.pcc,
        scc: c.scc,
        kcc: c.kcc,
    })
}

fn summarize(cfg: &ScenarioConfig, traj: &TrainingTrajectory, gts: &[BBox]) -> RunSummary {
    let (report, report_error) = match final_report(traj, gts, cfg) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    RunSummary {
        version: crate::VERSION.to_string(),
        config: cfg.clone(),
        final_loss: traj.last().loss,
        steps: cfg.trainer.steps,
        report,
        report_error,
    }
}

fn train_scenario(cfg: &ScenarioConfig) -> Result<(TrainingTrajectory, Vec<BBox>)> {
    let inst = generate_instance(cfg)?;
    let traj = train_toy(&inst, cfg)?;
    Ok((traj, inst.gt_boxes.unwrap_or_default()))
}

/// Generates the instance, trains, and writes `trajectory.csv` and
/// `summary.json` into `out_dir`.
pub fn run_experiment(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let (traj, gts) = train_scenario(cfg)?;
    fs::create_dir_all(out_dir)?;
    write_trajectory_csv(&traj.points, fs::File::create(out_dir.join("trajectory.csv"))?)?;
    let summary = summarize(cfg, &traj, &gts);
    let mut json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    json.push('\n');
    fs::write(out_dir.join("summary.json"), json)?;
    Ok(summary)
}

/// Hyper-parameter swept by [`run_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Piecewise step slope; switches the distance to the step function.
    Delta,
    /// Sigmoid slope; keeps the cross-entropy distance if configured,
    /// otherwise switches to the plain sigmoid.
    Lambda,
    /// Margin of the valid-negative balance constant.
    T,
    /// Maximum pairs per positive.
    Q,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(Self::Delta),
            "lambda" => Ok(Self::Lambda),
            "T" | "t" => Ok(Self::T),
            "q" | "Q" => Ok(Self::Q),
            other => Err(Error::Config(format!("unknown sweep parameter {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Delta => "delta",
            Self::Lambda => "lambda",
            Self::T => "T",
            Self::Q => "q",
        }
    }

    pub fn default_values(&self) -> Vec<f64> {
        match self {
            Self::Delta => vec![1.0, 0.5, 0.25, 0.125],
            Self::Lambda => vec![2.0, 4.0, 8.0, 16.0],
            Self::T => vec![0.0, 0.2, 0.25, 0.3, 0.5],
            Self::Q => vec![10.0, 50.0, 100.0, 200.0],
        }
    }

    fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        match self {
            Self::Delta => cfg.loss.distance = DistanceFunction::piecewise_step(value)?,
            Self::Lambda => {
                cfg.loss.distance = if base.loss.distance.is_ce() {
                    DistanceFunction::ce_sigmoid(value)?
                } else {
                    DistanceFunction::sigmoid(value)?
                }
            }
            Self::T => cfg.loss.balance = BalanceConstant::ValidNegCount { threshold: value },
            Self::Q => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!("q must be a positive integer, got {value}")));
                }
                cfg.loss.q = Some(value as usize);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub final_loss: f64,
    pub final_ap: Option<f64>,
    pub pcc: Option<f64>,
    pub scc: Option<f64>,
    pub kcc: Option<f64>,
}

/// Trains one scenario per value (in parallel) and writes `sweep.csv`, one
/// row per value in the given order.
pub fn run_sweep(base: &ScenarioConfig, param: SweepParam, values: &[f64], out_dir: &Path) -> Result<Vec<SweepRow>> {
    base.validate()?;
    let rows = values
        .par_iter()
        .map(|&value| {
            let cfg = param.apply(base, value)?;
            let (traj, _) = train_scenario(&cfg)?;
            let last = traj.last();
            Ok(SweepRow {
                param: param.name().to_string(),
                value,
                final_loss: last.loss,
                final_ap: last.ap,
                pcc: last.pcc,
                scc: last.scc,
                kcc: last.kcc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out_dir.join("sweep.csv"))
        .map_err(|e| Error::Io(e.to_string()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(rows)
}

fn default_corr() -> f64 {
    DEFAULT_CORR_IOU_THRESH
}

/// Input of the `eval` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalInput {
    pub detections: Vec<Detection>,
    pub gts: Vec<BBox>,
    #[serde(default = "default_iou_thresholds")]
    pub iou_thresholds: Vec<f64>,
    #[serde(default = "default_corr")]
    pub corr_iou_thresh: f64,
}

pub fn eval_file(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let input: EvalInput = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    EvalReport::evaluate(
        &input.detections,
        &input.gts,
        &input.iou_thresholds,
        input.corr_iou_thresh,
    )
}

fn default_score_thresh() -> f64 {
    DEFAULT_NMS_SCORE_THRESH
}
fn default_nms_iou() -> f64 {
    DEFAULT_NMS_IOU_THRESH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmsDemoInput {
    pub boxes: Vec<BBox>,
    pub scores: Vec<f64>,
    #[serde(default = "default_score_thresh")]
    pub score_thresh: f64,
    #[serde(default = "default_nms_iou")]
    pub iou_thresh: f64,
}

impl Default for NmsDemoInput {
    /// Three boxes: A and B overlap at IoU 0.7, C is disjoint.
    fn default() -> Self {
        Self {
            boxes: vec![
                BBox { x1: 0.0, y1: 0.0, x2: 1.0, y2: 1.0 },
                BBox { x1: 0.0, y1: 0.0, x2: 1.0, y2: 0.7 },
                BBox { x1: 5.0, y1: 5.0, x2: 6.0, y2: 6.0 },
            ],
            scores: vec![0.9, 0.8, 0.7],
            score_thresh: DEFAULT_NMS_SCORE_THRESH,
            iou_thresh: DEFAULT_NMS_IOU_THRESH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmsDemoOutput {
    pub kept: Vec<usize>,
}

/// Runs NMS on the given input file, or on the built-in fixture.
pub fn nms_demo(path: Option<&Path>) -> Result<NmsDemoOutput> {
    let input = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => NmsDemoInput::default(),
    };
    let kept = nms(&input.boxes, &input.scores, input.score_thresh, input.iou_thresh)?;
    Ok(NmsDemoOutput { kept })
}
