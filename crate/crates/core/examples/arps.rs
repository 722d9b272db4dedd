//! Adaptive ranking pair selection on a small layout.

use rankpair::{arps, DetectionInstance, Role};

fn main() -> rankpair::Result<()> {
    let inst = DetectionInstance::new(
        vec![0.0; 6],
        vec![
            Role::Positive,
            Role::Positive,
            Role::Positive,
            Role::Negative,
            Role::Negative,
            Role::Ignored,
        ],
        vec![0.9, 0.7, 0.7, 0.0, 0.1, 0.45],
    )?;
    let sets = arps(&inst);
    for (u, set) in &sets.sets {
        println!("positive {u} (IoU {}): pairs {set:?}", inst.ious[*u]);
    }
    println!("total pairs: {}", sets.total_pairs());
    Ok(())
}
