//! Evaluation oracles: sort-based average precision, COCO-style AP and rank
//! correlations. None of these share code with the loss implementations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_unchecked, BBox};

pub const DEFAULT_CORR_IOU_THRESH: f64 = 0.5;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn default_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// Indices sorted by descending score, ties by ascending index.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// All-point average precision: the mean, over positives, of the precision
/// at each positive's rank.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("average precision needs a positive".into()));
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, i) in ranked(scores).into_iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / n_pos as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
}

/// COCO-style AP: per-threshold values and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CocoAp {
    pub ap: f64,
    pub by_threshold: Vec<(f64, f64)>,
}

impl CocoAp {
    pub fn ap_by_iou(&self) -> BTreeMap<String, f64> {
        self.by_threshold
            .iter()
            .map(|(t, ap)| (format!("{t:.2}"), *ap))
            .collect()
    }
}

/// True-positive flags of detections in descending score order.
fn match_detections(dets: &[Detection], gts: &[BBox], thresh: f64) -> (Vec<usize>, Vec<bool>) {
    let order = ranked(&dets.iter().map(|d| d.score).collect::<Vec<_>>());
    let mut taken = vec![false; gts.len()];
    let flags = order
        .iter()
        .map(|&i| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let v = iou_unchecked(&dets[i].bbox, gt);
                if v >= thresh && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, _)) => {
                    taken[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    (order, flags)
}

/// AP of a detection set at each IoU threshold.
///
/// Detections are matched greedily by descending score to the unmatched
/// ground truth of highest IoU at or above the threshold (ties to the lower
/// ground-truth index). Missed ground truths contribute zero precision.
pub fn coco_style_ap(dets: &[Detection], gts: &[BBox], iou_thresholds: &[f64]) -> Result<CocoAp> {
    if gts.is_empty() {
        return Err(Error::UndefinedMetric("COCO-style AP needs ground truths".into()));
    }
    if iou_thresholds.is_empty() {
        return Err(Error::invalid("no IoU thresholds"));
    }
    if let Some(t) = iou_thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::invalid(format!("IoU threshold {t} outside (0, 1]")));
    }
    for d in dets {
        d.bbox.validate()?;
        if d.score.is_nan() {
            return Err(Error::invalid("detection score is NaN"));
        }
    }
    for g in gts {
        g.validate()?;
    }
    let mut by_threshold = Vec::with_capacity(iou_thresholds.len());
    for &t in iou_thresholds {
        let (order, flags) = match_detections(dets, gts, t);
        let n_tp = flags.iter().filter(|&&f| f).count();
        let ap = if n_tp == 0 {
            0.0
        } else {
            let sorted_scores: Vec<f64> = order.iter().map(|&i| dets[i].score).collect();
            average_precision(&sorted_scores, &flags)? * n_tp as f64 / gts.len() as f64
        };
        by_threshold.push((t, ap));
    }
    let ap = by_threshold.iter().map(|(_, a)| a).sum::<f64>() / by_threshold.len() as f64;
    Ok(CocoAp { ap, by_threshold })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub pcc: f64,
    pub scc: f64,
    pub kcc: f64,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedMetric("correlation needs at least two values".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("correlation inputs must be finite"));
    }
    Ok(())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("correlation of a constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share their average rank.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

/// Kendall tau-b over all pairs.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_x, mut ties_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                ties_x += 1;
            }
            if dy == 0.0 {
                ties_y += 1;
            }
            let s = dx * dy;
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = (((pairs - ties_x) as f64) * ((pairs - ties_y) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("kendall tau of a constant input".into()));
    }
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

pub fn correlations(x: &[f64], y: &[f64]) -> Result<Correlations> {
    Ok(Correlations {
        pcc: pearson(x, y)?,
        scc: spearman(x, y)?,
        kcc: kendall_tau_b(x, y)?,
    })
}

/// Final evaluation summary of a detection set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub ap_by_iou: BTreeMap<String, f64>,
    pub pcc: f64,
    pub scc: f64,
    pub kcc: f64,
}

impl EvalReport {
    /// COCO-style AP plus correlations between detection scores and their
    /// best IoU with any ground truth, restricted to detections whose best
    /// IoU exceeds `corr_iou_thresh`.
    pub fn evaluate(
        dets: &[Detection],
        gts: &[BBox],
        iou_thresholds: &[f64],
        corr_iou_thresh: f64,
    ) -> Result<Self> {
        let coco = coco_style_ap(dets, gts, iou_thresholds)?;
        let (mut scores, mut ious) = (Vec::new(), Vec::new());
        for d in dets {
            let best = gts
                .iter()
                .map(|g| iou_unchecked(&d.bbox, g))
                .fold(0.0, f64::max);
            if best > corr_iou_thresh {
                scores.push(d.score);
                ious.push(best);
            }
        }
        let c = correlations(&scores, &ious)?;
        Ok(Self {
            ap: coco.ap,
            ap_by_iou: coco.ap_by_iou(),
            pcc: c.pcc,
            scc: c.scc,
            kcc: c.kcc,
        })
    }
}
