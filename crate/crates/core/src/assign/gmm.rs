//! Two-component Gaussian mixture on 2-D points, diagonal covariances,
//! fitted by expectation-maximization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
// keeps a starved component's weight inside (0, 1)
const MIN_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: [f64; 2],
    pub means: [[f64; 2]; 2],
    pub variances: [[f64; 2]; 2],
    pub log_likelihood: f64,
    /// Number of M-steps performed.
    pub iterations: usize,
    /// Log-likelihood after every E-step, including the final one.
    pub log_likelihood_history: Vec<f64>,
}

impl GmmModel {
    fn component_log_density(&self, k: usize, p: &[f64; 2]) -> f64 {
        let mut acc = self.weights[k].ln();
        for ((&x, &mean), &var) in p.iter().zip(&self.means[k]).zip(&self.variances[k]) {
            let diff = x - mean;
            acc -= 0.5 * (LN_2PI + var.ln() + diff * diff / var);
        }
        acc
    }

    /// Posterior component probabilities of one point.
    pub fn responsibility(&self, p: &[f64; 2]) -> [f64; 2] {
        self.responsibility_and_log_density(p).0
    }

    fn responsibility_and_log_density(&self, p: &[f64; 2]) -> ([f64; 2], f64) {
        let a = self.component_log_density(0, p);
        let b = self.component_log_density(1, p);
        let m = a.max(b);
        let lse = m + ((a - m).exp() + (b - m).exp()).ln();
        let r0 = (a - lse).exp();
        ([r0, 1.0 - r0], lse)
    }

    pub fn responsibilities(&self, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        points.iter().map(|p| self.responsibility(p)).collect()
    }

    pub fn total_log_likelihood(&self, points: &[[f64; 2]]) -> f64 {
        points
            .iter()
            .map(|p| self.responsibility_and_log_density(p).1)
            .sum()
    }

    /// Index of the component whose mean has the larger coordinate sum.
    pub fn upper_component(&self) -> usize {
        let s0 = self.means[0][0] + self.means[0][1];
        let s1 = self.means[1][0] + self.means[1][1];
        if s0 > s1 {
            0
        } else {
            1
        }
    }
}

/// Picks one index among exact ties using the seeded generator.
fn pick_extreme(points: &[[f64; 2]], rng: &mut ChaCha8Rng, upper: bool) -> usize {
    let sums: Vec<f64> = points.iter().map(|p| p[0] + p[1]).collect();
    let best = if upper {
        sums.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        sums.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let ties: Vec<usize> = (0..points.len()).filter(|&i| sums[i] == best).collect();
    ties[rng.random_range(0..ties.len())]
}

/// Fits the mixture.
///
/// Components start at the points with minimal and maximal coordinate sum
/// (exact ties resolved by `seed`), equal weights, and the per-dimension data
/// variance. EM stops once the log-likelihood improves by less than
/// [`TOLERANCE`] or after [`MAX_ITERATIONS`] M-steps.
pub fn gmm_fit_two_component(points: &[[f64; 2]], seed: u64) -> Result<GmmModel> {
    if points.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::invalid("gmm points must be finite"));
    }
    let distinct = points.iter().skip(1).any(|p| p != &points[0]);
    if points.len() < 2 || !distinct {
        return Err(Error::DegenerateInput(
            "gmm needs at least two distinct points".into(),
        ));
    }
    let n = points.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = pick_extreme(points, &mut rng, false);
    let mut hi = pick_extreme(points, &mut rng, true);
    if points[lo] == points[hi] {
        // all coordinate sums tie: anchor the second component at the point farthest from the first
        hi = (0..points.len())
            .max_by(|&a, &b| {
                sq_dist(&points[a], &points[lo])
                    .total_cmp(&sq_dist(&points[b], &points[lo]))
                    .then(b.cmp(&a))
            })
            .unwrap_or(hi);
    }

    let mut overall_var = [0.0; 2];
    for d in 0..2 {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
        overall_var[d] = var.max(VARIANCE_FLOOR);
    }

    let mut model = GmmModel {
        weights: [0.5, 0.5],
        means: [points[lo], points[hi]],
        variances: [overall_var, overall_var],
        log_likelihood: f64::NEG_INFINITY,
        iterations: 0,
        log_likelihood_history: Vec::new(),
    };

    let mut resp = vec![[0.0; 2]; points.len()];
    loop {
        let mut ll = 0.0;
        for (r, p) in resp.iter_mut().zip(points) {
            let (rk, lse) = model.responsibility_and_log_density(p);
            *r = rk;
            ll += lse;
        }
        let prev = model.log_likelihood;
        model.log_likelihood = ll;
        model.log_likelihood_history.push(ll);
        if model.iterations >= MAX_ITERATIONS || ll - prev < TOLERANCE {
            break;
        }
        m_step(&mut model, points, &resp);
        model.iterations += 1;
    }
    Ok(model)
}

fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn m_step(model: &mut GmmModel, points: &[[f64; 2]], resp: &[[f64; 2]]) {
    let n = points.len() as f64;
    for k in 0..2 {
        let nk: f64 = resp.iter().map(|r| r[k]).sum();
        if nk <= f64::MIN_POSITIVE {
            model.weights[k] = MIN_WEIGHT;
            continue;
        }
        let mut mean = [0.0; 2];
        for (r, p) in resp.iter().zip(points) {
            mean[0] += r[k] * p[0];
            mean[1] += r[k] * p[1];
        }
        mean[0] /= nk;
        mean[1] /= nk;
        let mut var = [0.0; 2];
        for (r, p) in resp.iter().zip(points) {
            var[0] += r[k] * (p[0] - mean[0]).powi(2);
            var[1] += r[k] * (p[1] - mean[1]).powi(2);
        }
        model.means[k] = mean;
        model.variances[k] = [
            (var[0] / nk).max(VARIANCE_FLOOR),
            (var[1] / nk).max(VARIANCE_FLOOR),
        ];
        model.weights[k] = (nk / n).clamp(MIN_WEIGHT, 1.0 - MIN_WEIGHT);
    }
    let total = model.weights[0] + model.weights[1];
    model.weights = [model.weights[0] / total, model.weights[1] / total];
}
