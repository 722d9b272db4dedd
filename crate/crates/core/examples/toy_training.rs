//! Trains the same synthetic instance with plain and adaptive pairs and
//! compares the final score/IoU correlations.

use rankpair::harness::{generate_instance, train_toy, AssignerKind, ScenarioConfig};

fn main() -> rankpair::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    for kind in [AssignerKind::IouThreshold, AssignerKind::Arps, AssignerKind::PaaStar] {
        let mut cfg = ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        };
        cfg.assigner.assigner = kind;
        let inst = generate_instance(&cfg)?;
        let traj = train_toy(&inst, &cfg)?;
        let last = traj.last();
        println!(
            "{kind:?}: loss {:.4} -> {:.4}, AP {:?}, PCC {:?}, SCC {:?}, KCC {:?}",
            traj.points[0].loss, last.loss, last.ap, last.pcc, last.scc, last.kcc
        );
    }
    Ok(())
}
