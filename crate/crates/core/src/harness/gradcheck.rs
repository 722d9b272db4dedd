use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AssignerKind, ScenarioConfig};
use super::generate::random_instance;
use crate::assign::{arps, AdaptiveNegativeSets};
use crate::distance::DistanceFunction;
use crate::error::Result;
use crate::geometry::{giou_loss, giou_loss_grad, BBox};
use crate::instance::DetectionInstance;
use crate::rankloss::{evaluate_plans, plan_pairs, PairPlan};

/// Central finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Differences below this count as agreement regardless of magnitude.
pub const ABS_TOL: f64 = 1e-9;

const MAX_POSITIVES: usize = 10;
const MAX_NEGATIVES: usize = 50;
const LOGIT_SIGMA: f64 = 1.0;
// finite differences must not straddle a kink of the step distance or the box min/max terms
const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradCheckTarget {
    /// Full loss with the balance constant and pair lists frozen.
    ApeLoss,
    /// Summed pairwise distances only; used for the error-driven distances,
    /// whose update is not the derivative of any loss.
    PairwiseNumerator,
    GiouLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub target: GradCheckTarget,
    pub trials: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Set when the check could not run.
    pub skipped: Option<String>,
}

/// `|a - n| / max(|a|, |n|)`, or 0 when `|a - n| <= ABS_TOL`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= ABS_TOL {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

fn near_step_kink(inst: &DetectionInstance, plans: &[PairPlan], delta: f64) -> bool {
    plans.iter().any(|p| {
        let su = inst.logits[p.positive];
        p.pairs.iter().any(|&v| {
            let x = inst.logits[v] - su;
            (x.abs() - delta).abs() < KINK_MARGIN
        })
    })
}

// (worst relative error, worst absolute error)
fn check_instance(
    inst: &DetectionInstance,
    plans: &[PairPlan],
    cfg: &crate::LossConfig,
) -> Result<(f64, f64)> {
    let analytic = evaluate_plans(&inst.logits, plans, cfg)?.gradient;
    let mut logits = inst.logits.clone();
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    for i in 0..logits.len() {
        let orig = logits[i];
        logits[i] = orig + FD_STEP;
        let up = evaluate_plans(&logits, plans, cfg)?.loss;
        logits[i] = orig - FD_STEP;
        let down = evaluate_plans(&logits, plans, cfg)?.loss;
        logits[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic.grads[i], numeric));
        worst_abs = worst_abs.max((analytic.grads[i] - numeric).abs());
    }
    Ok((worst, worst_abs))
}

/// Compares analytic logit gradients against central finite differences on
/// `trials` random instances (seeded from `cfg.seed`) and returns the worst
/// relative error.
///
/// The cross-entropy distance is checked on the full loss. Other distances
/// are checked on the pairwise numerator. Pair sets follow the configured
/// assigner kind. A configuration that does not detach the balance constant
/// is reported as skipped.
pub fn grad_check(cfg: &ScenarioConfig, trials: usize) -> Result<GradCheckReport> {
    let target = if cfg.loss.distance.is_ce() {
        GradCheckTarget::ApeLoss
    } else {
        GradCheckTarget::PairwiseNumerator
    };
    if !cfg.loss.detach_balance {
        return Ok(GradCheckReport {
            target,
            trials: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            skipped: Some("not differentiable through BC: detach_balance is false".into()),
        });
    }
    cfg.loss.validate()?;
    let mut loss_cfg = cfg.loss.clone();
    loss_cfg.positive_weights = None;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut done = 0;
    while done < trials {
        let inst = random_instance(&mut rng, MAX_POSITIVES, MAX_NEGATIVES, LOGIT_SIGMA);
        let sets = match cfg.assigner.assigner {
            AssignerKind::IouThreshold => AdaptiveNegativeSets::plain(&inst),
            _ => arps(&inst),
        };
        let mut plans = plan_pairs(&inst, &sets, &loss_cfg)?;
        if target == GradCheckTarget::PairwiseNumerator {
            for p in &mut plans {
                p.balance = 1.0;
            }
            if let DistanceFunction::PiecewiseStep { delta } = loss_cfg.distance {
                if near_step_kink(&inst, &plans, delta) {
                    continue;
                }
            }
        }
        let (rel, abs) = check_instance(&inst, &plans, &loss_cfg)?;
        worst = worst.max(rel);
        worst_abs = worst_abs.max(abs);
        done += 1;
    }
    Ok(GradCheckReport {
        target,
        trials,
        max_rel_error: worst,
        max_abs_error: worst_abs,
        skipped: None,
    })
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let (cx, cy) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    let (w, h) = (rng.random_range(0.1..0.5), rng.random_range(0.1..0.5));
    BBox {
        x1: cx - w / 2.0,
        y1: cy - h / 2.0,
        x2: cx + w / 2.0,
        y2: cy + h / 2.0,
    }
}

fn near_box_kink(p: &BBox, g: &BBox) -> bool {
    let xs = [p.x1, p.x2];
    let gxs = [g.x1, g.x2];
    let ys = [p.y1, p.y2];
    let gys = [g.y1, g.y2];
    xs.iter()
        .any(|a| gxs.iter().any(|b| (a - b).abs() < KINK_MARGIN))
        || ys.iter().any(|a| gys.iter().any(|b| (a - b).abs() < KINK_MARGIN))
}

/// Finite-difference check of the GIoU loss gradient on random box pairs.
pub fn grad_check_giou(seed: u64, trials: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut done = 0;
    while done < trials {
        let pred = random_box(&mut rng);
        let gt = random_box(&mut rng);
        if near_box_kink(&pred, &gt) {
            continue;
        }
        let (_, grad) = giou_loss_grad(&pred, &gt)?;
        for k in 0..4 {
            let shifted = |delta: f64| {
                let mut c = pred.coords();
                c[k] += delta;
                BBox { x1: c[0], y1: c[1], x2: c[2], y2: c[3] }
            };
            let numeric = (giou_loss(&shifted(FD_STEP), &gt)? - giou_loss(&shifted(-FD_STEP), &gt)?)
                / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grad[k], numeric));
            worst_abs = worst_abs.max((grad[k] - numeric).abs());
        }
        done += 1;
    }
    Ok(GradCheckReport {
        target: GradCheckTarget::GiouLoss,
        trials,
        max_rel_error: worst,
        max_abs_error: worst_abs,
        skipped: None,
    })
}
