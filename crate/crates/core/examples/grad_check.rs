//! Finite-difference checks of the analytic gradients.

use rankpair::harness::{grad_check, grad_check_giou, ScenarioConfig};
use rankpair::DistanceFunction;

fn main() -> rankpair::Result<()> {
    for distance in [
        DistanceFunction::ce_sigmoid(8.0)?,
        DistanceFunction::sigmoid(8.0)?,
        DistanceFunction::piecewise_step(0.5)?,
    ] {
        let mut cfg = ScenarioConfig::default();
        cfg.loss.distance = distance;
        let r = grad_check(&cfg, 50)?;
        println!("{distance:?}: {:?} max rel error {:e}", r.target, r.max_rel_error);
    }
    let r = grad_check_giou(0, 50)?;
    println!("GIoU: max rel error {:e}", r.max_rel_error);
    Ok(())
}
