//! IoU, GIoU loss with its gradient, and greedy NMS.

use rankpair::geometry::{giou_loss_grad, iou, nms, BBox, DEFAULT_NMS_IOU_THRESH, DEFAULT_NMS_SCORE_THRESH};

fn main() -> rankpair::Result<()> {
    let a = BBox::new(0.0, 0.0, 2.0, 2.0)?;
    let b = BBox::new(1.0, 0.0, 3.0, 2.0)?;
    println!("iou = {}", iou(&a, &b)?);
    let (loss, grad) = giou_loss_grad(&b, &a)?;
    println!("giou loss = {loss}, d/d[x1,y1,x2,y2] = {grad:?}");

    let boxes = [
        BBox::new(0.0, 0.0, 1.0, 1.0)?,
        BBox::new(0.0, 0.0, 1.0, 0.7)?,
        BBox::new(5.0, 5.0, 6.0, 6.0)?,
        BBox::new(5.0, 5.0, 6.0, 6.0)?,
    ];
    let scores = [0.9, 0.8, 0.7, 0.1];
    let kept = nms(&boxes, &scores, DEFAULT_NMS_SCORE_THRESH, DEFAULT_NMS_IOU_THRESH)?;
    println!("kept {kept:?}");
    Ok(())
}
