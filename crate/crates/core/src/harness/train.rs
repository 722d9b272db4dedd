use serde::{Deserialize, Serialize};

use super::config::{AssignerKind, ScenarioConfig};
use crate::assign::{arps, iou_threshold_assign, paa_star_assign, AdaptiveNegativeSets, PaaCandidate};
use crate::distance::logistic;
use crate::error::{Error, Result};
use crate::eval::{average_precision, correlations};
use crate::geometry::{giou_loss_grad, iou_unchecked, BBox};
use crate::instance::{DetectionInstance, Role};
use crate::rankloss::{ape_loss, error_driven_gradients, LossOutput};

/// Metrics recorded before each update (and once after the last one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub ap: Option<f64>,
    pub pcc: Option<f64>,
    pub scc: Option<f64>,
    pub kcc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrajectory {
    /// `steps + 1` points, starting at step 0.
    pub points: Vec<TrajectoryPoint>,
    pub final_logits: Vec<f64>,
    pub final_boxes: Vec<BBox>,
}

impl TrainingTrajectory {
    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory has at least one point")
    }
}

struct StepState {
    inst: DetectionInstance,
    sets: AdaptiveNegativeSets,
    matched_gt: Vec<Option<usize>>,
}

fn best_ious(boxes: &[BBox], gts: &[BBox]) -> Vec<f64> {
    boxes
        .iter()
        .map(|b| gts.iter().map(|g| iou_unchecked(b, g)).fold(0.0, f64::max))
        .collect()
}

fn assign_step(
    logits: &[f64],
    boxes: &[BBox],
    gts: &[BBox],
    instance_ids: &[Option<usize>],
    cfg: &ScenarioConfig,
) -> Result<StepState> {
    let a = &cfg.assigner;
    let outcome = match a.assigner {
        AssignerKind::IouThreshold | AssignerKind::Arps => {
            iou_threshold_assign(boxes, gts, a.pos_thresh, a.neg_thresh)?
        }
        AssignerKind::PaaStar => {
            let candidates: Vec<PaaCandidate> = instance_ids
                .iter()
                .enumerate()
                .filter_map(|(i, id)| {
                    id.map(|g| PaaCandidate {
                        sample: i,
                        gt: g,
                        rank_score: logistic(logits[i]),
                        loc_score: iou_unchecked(&boxes[i], &gts[g]),
                    })
                })
                .collect();
            paa_star_assign(&candidates, boxes.len(), a.seed)?
        }
    };
    let roles = outcome.roles();
    let ious = roles
        .iter()
        .zip(&outcome.ious)
        .map(|(r, &v)| if *r == Role::Positive { v.clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    let inst = DetectionInstance {
        logits: logits.to_vec(),
        roles,
        ious,
        instance_ids: instance_ids.to_vec(),
        pred_boxes: None,
        gt_boxes: None,
    };
    let sets = match a.assigner {
        AssignerKind::IouThreshold => AdaptiveNegativeSets::plain(&inst),
        AssignerKind::Arps | AssignerKind::PaaStar => arps(&inst),
    };
    Ok(StepState {
        inst,
        sets,
        matched_gt: outcome.matched_gt,
    })
}

fn rank_loss(state: &StepState, cfg: &ScenarioConfig) -> Result<LossOutput> {
    if cfg.loss.distance.is_ce() {
        ape_loss(&state.inst, &state.sets, &cfg.loss)
    } else {
        error_driven_gradients(&state.inst, &cfg.loss.distance, &state.sets)
    }
}

/// Mean GIoU loss over positives and its gradient with respect to every box.
fn loc_loss(state: &StepState, boxes: &[BBox], gts: &[BBox]) -> Result<(f64, Vec<[f64; 4]>)> {
    let positives = state.inst.positives();
    let mut grads = vec![[0.0; 4]; boxes.len()];
    let mut total = 0.0;
    let scale = 1.0 / positives.len().max(1) as f64;
    for &u in &positives {
        let Some(g) = state.matched_gt[u] else { continue };
        let (l, grad) = giou_loss_grad(&boxes[u], &gts[g])?;
        total += l * scale;
        for k in 0..4 {
            grads[u][k] = grad[k] * scale;
        }
    }
    Ok((total, grads))
}

fn metrics(logits: &[f64], true_ious: &[f64], cfg: &ScenarioConfig) -> (Option<f64>, [Option<f64>; 3]) {
    let scores: Vec<f64> = logits.iter().map(|&l| logistic(l)).collect();
    let labels: Vec<bool> = true_ious.iter().map(|&v| v >= cfg.assigner.pos_thresh).collect();
    let ap = average_precision(&scores, &labels).ok();
    let (mut s, mut t) = (Vec::new(), Vec::new());
    for (&score, &iou) in scores.iter().zip(true_ious) {
        if iou > cfg.corr_iou_thresh {
            s.push(score);
            t.push(iou);
        }
    }
    let corr = correlations(&s, &t).ok();
    (
        ap,
        [
            corr.map(|c| c.pcc),
            corr.map(|c| c.scc),
            corr.map(|c| c.kcc),
        ],
    )
}

fn shrink_guard(b: &mut BBox) {
    // keep a strictly positive extent so the GIoU gradient stays defined
    let eps = 1e-6;
    if b.x2 < b.x1 + eps {
        let c = 0.5 * (b.x1 + b.x2);
        b.x1 = c - eps / 2.0;
        b.x2 = c + eps / 2.0;
    }
    if b.y2 < b.y1 + eps {
        let c = 0.5 * (b.y1 + b.y2);
        b.y1 = c - eps / 2.0;
        b.y2 = c + eps / 2.0;
    }
}

/// Plain gradient descent on the logits (and, with a positive
/// `loc_loss_weight`, on the box coordinates).
///
/// Assignment and pair sets are recomputed from the current boxes and scores
/// before every step. Distances other than the cross-entropy sigmoid use the
/// error-driven update. Metrics are computed with the evaluation module from
/// the true IoU of each box. `learning_rate` may be 0 here.
pub fn train_toy(inst: &DetectionInstance, cfg: &ScenarioConfig) -> Result<TrainingTrajectory> {
    cfg.validate_generation()?;
    let lr = cfg.trainer.learning_rate;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Config("learning_rate must be >= 0".into()));
    }
    inst.validate()?;
    let gts = inst
        .gt_boxes
        .clone()
        .ok_or_else(|| Error::invalid("training needs ground-truth boxes"))?;
    let mut boxes = inst
        .pred_boxes
        .clone()
        .ok_or_else(|| Error::invalid("training needs predicted boxes"))?;
    let mut logits = inst.logits.clone();
    let w_loc = cfg.trainer.loc_loss_weight;

    let mut points = Vec::with_capacity(cfg.trainer.steps + 1);
    for step in 0..=cfg.trainer.steps {
        let state = assign_step(&logits, &boxes, &gts, &inst.instance_ids, cfg)?;
        if state.inst.positives().is_empty() {
            return Err(Error::invalid(format!("assigner produced no positives at step {step}")));
        }
        let rank = rank_loss(&state, cfg)?;
        let (loc, box_grads) = if w_loc > 0.0 {
            loc_loss(&state, &boxes, &gts)?
        } else {
            (0.0, Vec::new())
        };
        let loss = rank.loss + w_loc * loc;
        let grad_sq = rank.gradient.grads.iter().map(|g| g * g).sum::<f64>()
            + box_grads
                .iter()
                .flatten()
                .map(|g| (w_loc * g).powi(2))
                .sum::<f64>();
        if !loss.is_finite() || !grad_sq.is_finite() {
            return Err(Error::Divergence {
                step,
                reason: format!("loss {loss}, squared gradient norm {grad_sq}"),
            });
        }
        let (ap, [pcc, scc, kcc]) = metrics(&logits, &best_ious(&boxes, &gts), cfg);
        points.push(TrajectoryPoint {
            step,
            loss,
            grad_norm: grad_sq.sqrt(),
            ap,
            pcc,
            scc,
            kcc,
        });
        if step == cfg.trainer.steps {
            break;
        }
        for (l, g) in logits.iter_mut().zip(&rank.gradient.grads) {
            *l -= lr * g;
        }
        for (b, g) in boxes.iter_mut().zip(&box_grads) {
            b.x1 -= lr * w_loc * g[0];
            b.y1 -= lr * w_loc * g[1];
            b.x2 -= lr * w_loc * g[2];
            b.y2 -= lr * w_loc * g[3];
            shrink_guard(b);
        }
        if let Some(i) = logits.iter().position(|l| !l.is_finite()) {
            return Err(Error::Divergence {
                step: step + 1,
                reason: format!("logit {i} is {}", logits[i]),
            });
        }
        if let Some(i) = boxes.iter().position(|b| !b.area().is_finite()) {
            return Err(Error::Divergence {
                step: step + 1,
                reason: format!("box {i} has area {}", boxes[i].area()),
            });
        }
    }
    Ok(TrainingTrajectory {
        points,
        final_logits: logits,
        final_boxes: boxes,
    })
}
