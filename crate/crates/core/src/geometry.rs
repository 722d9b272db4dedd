//! Axis-aligned boxes in continuous corner form `[x1, y1, x2, y2]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NMS_SCORE_THRESH: f64 = 0.15;
pub const DEFAULT_NMS_IOU_THRESH: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.coords().iter().all(|c| c.is_finite()) {
            return Err(Error::invalid(format!("box has non-finite coordinates: {self:?}")));
        }
        if self.x2 < self.x1 || self.y2 < self.y1 {
            return Err(Error::invalid(format!("box corners out of order: {self:?}")));
        }
        Ok(())
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Smallest box enclosing both.
    pub fn hull(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }
}

/// Intersection over union. Zero when the union has zero area.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(iou_unchecked(a, b))
}

pub(crate) fn iou_unchecked(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU, in `[-1, 1]`.
pub fn giou(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = a.hull(b).area();
    if union <= 0.0 || hull <= 0.0 {
        return Err(Error::invalid("giou undefined for zero-area boxes"));
    }
    Ok(inter / union - (hull - union) / hull)
}

/// `1 - GIoU(pred, gt)`, in `[0, 2]`.
pub fn giou_loss(pred: &BBox, gt: &BBox) -> Result<f64> {
    pred.validate()?;
    gt.validate()?;
    let inter = pred.intersection_area(gt);
    let union = pred.area() + gt.area() - inter;
    let hull = pred.hull(gt).area();
    if union <= 0.0 || hull <= 0.0 {
        return Err(Error::invalid("giou undefined for zero-area boxes"));
    }
    Ok(giou_loss_from_areas(inter, union, hull))
}

// avoids the cancellation in 1 - GIoU when the boxes nearly coincide
fn giou_loss_from_areas(inter: f64, union: f64, hull: f64) -> f64 {
    (union - inter) / union + (hull - union) / hull
}

/// GIoU loss together with its gradient with respect to `pred`'s
/// `[x1, y1, x2, y2]`. Both boxes must have positive area.
///
/// At coordinate ties (`pred.x1 == gt.x1` and so on) the gradient is the
/// one-sided derivative that treats the ground-truth edge as the active one.
pub fn giou_loss_grad(pred: &BBox, gt: &BBox) -> Result<(f64, [f64; 4])> {
    pred.validate()?;
    gt.validate()?;
    if pred.area() <= 0.0 || gt.area() <= 0.0 {
        return Err(Error::invalid("giou gradient requires boxes with positive area"));
    }
    let (pw, ph) = (pred.width(), pred.height());

    let iw = pred.x2.min(gt.x2) - pred.x1.max(gt.x1);
    let ih = pred.y2.min(gt.y2) - pred.y1.max(gt.y1);
    let overlapping = iw > 0.0 && ih > 0.0;
    let inter = if overlapping { iw * ih } else { 0.0 };

    let cw = pred.x2.max(gt.x2) - pred.x1.min(gt.x1);
    let ch = pred.y2.max(gt.y2) - pred.y1.min(gt.y1);
    let hull = cw * ch;
    let union = pred.area() + gt.area() - inter;

    let loss = giou_loss_from_areas(inter, union, hull);

    // d(area)/d[x1, y1, x2, y2]
    let d_area = [-ph, -pw, ph, pw];

    let d_iw = [
        if pred.x1 > gt.x1 { -1.0 } else { 0.0 },
        0.0,
        if pred.x2 < gt.x2 { 1.0 } else { 0.0 },
        0.0,
    ];
    let d_ih = [
        0.0,
        if pred.y1 > gt.y1 { -1.0 } else { 0.0 },
        0.0,
        if pred.y2 < gt.y2 { 1.0 } else { 0.0 },
    ];
    let d_cw = [
        if pred.x1 < gt.x1 { -1.0 } else { 0.0 },
        0.0,
        if pred.x2 > gt.x2 { 1.0 } else { 0.0 },
        0.0,
    ];
    let d_ch = [
        0.0,
        if pred.y1 < gt.y1 { -1.0 } else { 0.0 },
        0.0,
        if pred.y2 > gt.y2 { 1.0 } else { 0.0 },
    ];

    let mut grad = [0.0; 4];
    for k in 0..4 {
        let d_inter = if overlapping {
            d_iw[k] * ih + iw * d_ih[k]
        } else {
            0.0
        };
        let d_union = d_area[k] - d_inter;
        let d_hull = d_cw[k] * ch + cw * d_ch[k];
        grad[k] = -(d_inter * union - inter * d_union) / (union * union)
            - (d_union * hull - union * d_hull) / (hull * hull);
    }
    Ok((loss, grad))
}

/// Greedy non-maximum suppression.
///
/// Boxes scoring below `score_thresh` are dropped. The remaining boxes are
/// visited by descending score (ties by lower index); each kept box suppresses
/// every later box whose IoU with it exceeds `iou_thresh`. Returns kept
/// indices in visiting order.
pub fn nms(boxes: &[BBox], scores: &[f64], score_thresh: f64, iou_thresh: f64) -> Result<Vec<usize>> {
    if boxes.len() != scores.len() {
        return Err(Error::invalid(format!(
            "{} boxes but {} scores",
            boxes.len(),
            scores.len()
        )));
    }
    for b in boxes {
        b.validate()?;
    }
    let mut order: Vec<usize> = (0..boxes.len())
        .filter(|&i| scores[i] >= score_thresh)
        .collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept
            .iter()
            .all(|&k| iou_unchecked(&boxes[k], &boxes[i]) <= iou_thresh)
        {
            kept.push(i);
        }
    }
    Ok(kept)
}
