//! Plain versus adaptive pairwise error on one instance, with the
//! valid-pair balance constant and top-q truncation.

use rankpair::rankloss::ape_loss;
use rankpair::{arps, AdaptiveNegativeSets, BalanceConstant, DetectionInstance, LossConfig};

fn main() -> rankpair::Result<()> {
    // the better-localized positive scores lower than the worse one
    let inst = DetectionInstance::from_samples(&[
        (0.2, true, 0.9),
        (0.8, true, 0.6),
        (0.5, false, 0.0),
        (-1.0, false, 0.0),
    ])?;

    let cfg = LossConfig::default();
    let plain = ape_loss(&inst, &AdaptiveNegativeSets::plain(&inst), &cfg)?;
    let adaptive = ape_loss(&inst, &arps(&inst), &cfg)?;
    println!("plain    loss {:.4} grads {:?}", plain.loss, plain.gradient.grads);
    println!("adaptive loss {:.4} grads {:?}", adaptive.loss, adaptive.gradient.grads);

    let valid = LossConfig {
        balance: BalanceConstant::ValidNegCount { threshold: 0.25 },
        q: Some(1),
        ..LossConfig::default()
    };
    let out = ape_loss(&inst, &arps(&inst), &valid)?;
    println!("valid pairs, q = 1: loss {:.4} per positive {:?}", out.loss, out.per_positive);
    Ok(())
}
