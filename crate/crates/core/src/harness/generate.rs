use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{LogitInit, ScenarioConfig};
use crate::assign::iou_threshold_assign;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::instance::{DetectionInstance, Role};

const MAX_BACKGROUND_ATTEMPTS: usize = 1000;
const MIN_SIDE_FRACTION: f64 = 0.05;

fn sample_box(rng: &mut ChaCha8Rng, min_side: f64, max_side: f64) -> BBox {
    let w = rng.random_range(min_side..=max_side);
    let h = rng.random_range(min_side..=max_side);
    let x1 = rng.random_range(0.0..=1.0 - w);
    let y1 = rng.random_range(0.0..=1.0 - h);
    BBox {
        x1,
        y1,
        x2: x1 + w,
        y2: y1 + h,
    }
}

fn jitter(rng: &mut ChaCha8Rng, gt: &BBox, noise: f64) -> BBox {
    if noise == 0.0 {
        return *gt;
    }
    let normal = Normal::new(0.0, noise).expect("noise is finite and >= 0");
    let (w, h) = (gt.width(), gt.height());
    let x1 = gt.x1 + w * normal.sample(rng);
    let y1 = gt.y1 + h * normal.sample(rng);
    let x2 = (gt.x2 + w * normal.sample(rng)).max(x1 + MIN_SIDE_FRACTION * w);
    let y2 = (gt.y2 + h * normal.sample(rng)).max(y1 + MIN_SIDE_FRACTION * h);
    BBox { x1, y1, x2, y2 }
}

fn init_logits(rng: &mut ChaCha8Rng, init: LogitInit, n: usize) -> Vec<f64> {
    match init {
        LogitInit::Zeros => vec![0.0; n],
        LogitInit::Gaussian { sigma } => {
            let normal = Normal::new(0.0, sigma).expect("sigma is finite and >= 0");
            (0..n).map(|_| normal.sample(rng)).collect()
        }
    }
}

/// Synthesizes one detection instance on the unit square.
///
/// Ground truths get sides in `[0.1, 0.4]`. Each ground truth spawns
/// `candidates_per_gt` jittered copies, and `n_background` boxes are placed
/// by rejection so they do not overlap any ground truth. Roles come from the
/// IoU-threshold rule of the configured assigner. Deterministic in `seed`.
pub fn generate_instance(cfg: &ScenarioConfig) -> Result<DetectionInstance> {
    cfg.validate_generation()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gts: Vec<BBox> = (0..cfg.n_gts).map(|_| sample_box(&mut rng, 0.1, 0.4)).collect();

    let mut boxes = Vec::new();
    let mut instance_ids = Vec::new();
    for (g, gt) in gts.iter().enumerate() {
        for _ in 0..cfg.candidates_per_gt {
            boxes.push(jitter(&mut rng, gt, cfg.box_noise));
            instance_ids.push(Some(g));
        }
    }
    for _ in 0..cfg.n_background {
        let mut placed = None;
        for _ in 0..MAX_BACKGROUND_ATTEMPTS {
            let b = sample_box(&mut rng, 0.05, 0.3);
            if gts.iter().all(|g| g.intersection_area(&b) == 0.0) {
                placed = Some(b);
                break;
            }
        }
        let b = placed.ok_or_else(|| {
            Error::Config(format!(
                "could not place a background box clear of the ground truths in {MAX_BACKGROUND_ATTEMPTS} attempts"
            ))
        })?;
        boxes.push(b);
        instance_ids.push(None);
    }

    let logits = init_logits(&mut rng, cfg.logit_init, boxes.len());
    let outcome = iou_threshold_assign(
        &boxes,
        &gts,
        cfg.assigner.pos_thresh,
        cfg.assigner.neg_thresh,
    )?;
    let roles = outcome.roles();
    let ious = roles
        .iter()
        .zip(&outcome.ious)
        .map(|(r, &v)| if *r == Role::Positive { v } else { 0.0 })
        .collect();
    let inst = DetectionInstance {
        logits,
        roles,
        ious,
        instance_ids,
        pred_boxes: Some(boxes),
        gt_boxes: Some(gts),
    };
    inst.validate()?;
    Ok(inst)
}

/// Random instance without geometry, for oracle and gradient checks.
///
/// Draws `1..=max_pos` positives with distinct IoUs in `(0.5, 1)` and
/// `0..=max_neg` negatives, with Gaussian logits of standard deviation
/// `logit_sigma`, in shuffled order.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    max_pos: usize,
    max_neg: usize,
    logit_sigma: f64,
) -> DetectionInstance {
    let n_pos = rng.random_range(1..=max_pos.max(1));
    let n_neg = rng.random_range(0..=max_neg);
    let normal = Normal::new(0.0, logit_sigma).expect("sigma is finite and >= 0");
    let mut samples: Vec<(f64, bool, f64)> = Vec::with_capacity(n_pos + n_neg);
    for _ in 0..n_pos {
        samples.push((normal.sample(rng), true, rng.random_range(0.5..1.0)));
    }
    for _ in 0..n_neg {
        samples.push((normal.sample(rng), false, 0.0));
    }
    // Fisher-Yates so positives are not always first
    for i in (1..samples.len()).rev() {
        let j = rng.random_range(0..=i);
        samples.swap(i, j);
    }
    DetectionInstance::from_samples(&samples).expect("generated instance is valid")
}
