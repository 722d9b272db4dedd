//! Average precision, COCO-style AP and score/IoU correlations.

use rankpair::eval::{average_precision, default_iou_thresholds, Detection, EvalReport};
use rankpair::geometry::BBox;

fn main() -> rankpair::Result<()> {
    let ap = average_precision(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false])?;
    println!("AP of [+, -, +, -] = {ap:.4}");

    let gts = [BBox::new(0.0, 0.0, 1.0, 1.0)?, BBox::new(2.0, 2.0, 3.0, 3.0)?];
    let dets = [
        Detection { bbox: BBox::new(0.0, 0.0, 1.0, 0.95)?, score: 0.95 },
        Detection { bbox: BBox::new(2.0, 2.1, 3.0, 3.0)?, score: 0.9 },
        Detection { bbox: BBox::new(0.1, 0.0, 1.0, 0.8)?, score: 0.6 },
        Detection { bbox: BBox::new(7.0, 7.0, 8.0, 8.0)?, score: 0.5 },
    ];
    let report = EvalReport::evaluate(&dets, &gts, &default_iou_thresholds(), 0.5)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}
