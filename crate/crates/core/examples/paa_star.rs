//! GMM-based assignment on two synthetic clusters of (ranking, localization)
//! scores.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rankpair::assign::{paa_star_assign, PaaCandidate};

fn main() -> rankpair::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noise = Normal::new(0.0, 0.05).expect("valid sigma");
    let candidates: Vec<PaaCandidate> = (0..40)
        .map(|i| {
            let centre = if i < 20 { 0.2 } else { 0.8 };
            PaaCandidate {
                sample: i,
                gt: i % 2,
                rank_score: centre + noise.sample(&mut rng),
                loc_score: centre + noise.sample(&mut rng),
            }
        })
        .collect();

    let out = paa_star_assign(&candidates, 40, 7)?;
    println!("positives: {:?}", out.positives);
    println!("negatives: {:?}", out.negatives);
    for &i in out.positives.iter().take(3) {
        println!(
            "sample {i}: gt {:?}, responsibility {:.3}",
            out.matched_gt[i], out.positive_responsibility[i]
        );
    }
    Ok(())
}
