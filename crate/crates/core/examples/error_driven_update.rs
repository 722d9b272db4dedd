//! Error-driven update for the step and sigmoid distances, compared with the
//! cross-entropy pairwise error that yields the same gradient.

use rankpair::rankloss::{ape_loss, error_driven_gradients, precision_loss};
use rankpair::{AdaptiveNegativeSets, DetectionInstance, DistanceFunction, LossConfig};

fn main() -> rankpair::Result<()> {
    // (logit, is positive, IoU)
    let inst = DetectionInstance::from_samples(&[
        (1.2, true, 0.8),
        (0.3, true, 0.6),
        (0.9, false, 0.0),
        (-0.4, false, 0.0),
        (0.5, false, 0.0),
    ])?;
    let plain = AdaptiveNegativeSets::plain(&inst);

    let step = DistanceFunction::piecewise_step(0.5)?;
    for u in inst.positives() {
        println!("precision loss of sample {u}: {:.4}", precision_loss(u, &inst, &step)?);
    }
    let out = error_driven_gradients(&inst, &step, &plain)?;
    println!("step update:    {:?}", rounded(&out.gradient.grads));

    let sigmoid = error_driven_gradients(&inst, &DistanceFunction::sigmoid(8.0)?, &plain)?;
    let ce = ape_loss(&inst, &plain, &LossConfig::with_distance(DistanceFunction::ce_sigmoid(8.0)?))?;
    println!("sigmoid update: {:?}", rounded(&sigmoid.gradient.grads));
    println!("ce gradient:    {:?}", rounded(&ce.gradient.grads));
    println!("max difference: {:e}", sigmoid.gradient.max_abs_diff(&ce.gradient));
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
