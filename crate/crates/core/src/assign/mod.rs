//! Ranking-pair selection and positive/negative assignment.

mod gmm;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_unchecked, BBox};
use crate::instance::{DetectionInstance, Role};

pub use gmm::{gmm_fit_two_component, GmmModel, MAX_ITERATIONS, TOLERANCE, VARIANCE_FLOOR};

pub const DEFAULT_POS_THRESH: f64 = 0.5;
pub const DEFAULT_NEG_THRESH: f64 = 0.4;

/// Per-positive negative sets: positive index -> ascending sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AdaptiveNegativeSets {
    pub sets: BTreeMap<usize, Vec<usize>>,
}

impl AdaptiveNegativeSets {
    /// Every positive paired with all negatives and nothing else.
    pub fn plain(inst: &DetectionInstance) -> Self {
        let negatives = inst.negatives();
        Self {
            sets: inst
                .positives()
                .into_iter()
                .map(|u| (u, negatives.clone()))
                .collect(),
        }
    }

    pub fn get(&self, u: usize) -> Option<&[usize]> {
        self.sets.get(&u).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn total_pairs(&self) -> usize {
        self.sets.values().map(Vec::len).sum()
    }
}

/// Adaptive ranking pair selection.
///
/// Each positive `u` is paired with every negative and with every other
/// positive whose localization score is strictly lower than its own. Those
/// lower-IoU positives act as adaptive false positives in `u`'s loss.
pub fn arps(inst: &DetectionInstance) -> AdaptiveNegativeSets {
    let positives = inst.positives();
    let mut sets = BTreeMap::new();
    for &u in &positives {
        let iou_u = inst.ious[u];
        let set: Vec<usize> = inst
            .roles
            .iter()
            .enumerate()
            .filter(|&(v, role)| match role {
                Role::Negative => true,
                Role::Positive => v != u && inst.ious[v] < iou_u,
                Role::Ignored => false,
            })
            .map(|(v, _)| v)
            .collect();
        sets.insert(u, set);
    }
    AdaptiveNegativeSets { sets }
}

/// Result of a positive/negative assignment over `n` candidate samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignerOutcome {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    /// Samples in neither set.
    pub ignored: Vec<usize>,
    /// Ground truth each sample was matched to, if any.
    pub matched_gt: Vec<Option<usize>>,
    /// Localization score of each sample against its matched ground truth.
    pub ious: Vec<f64>,
    /// Probability of the positive cluster; the negative cluster gets the rest.
    pub positive_responsibility: Vec<f64>,
}

impl AssignerOutcome {
    pub fn len(&self) -> usize {
        self.matched_gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matched_gt.is_empty()
    }

    pub fn roles(&self) -> Vec<Role> {
        let mut roles = vec![Role::Ignored; self.len()];
        for &i in &self.positives {
            roles[i] = Role::Positive;
        }
        for &i in &self.negatives {
            roles[i] = Role::Negative;
        }
        roles
    }

    /// `[negative, positive]` responsibilities per sample.
    pub fn responsibilities(&self) -> Vec<[f64; 2]> {
        self.positive_responsibility
            .iter()
            .map(|&p| [1.0 - p, p])
            .collect()
    }

    fn from_roles(roles: &[Role], matched_gt: Vec<Option<usize>>, ious: Vec<f64>, resp: Vec<f64>) -> Self {
        let pick = |want: Role| {
            roles
                .iter()
                .enumerate()
                .filter(|(_, r)| **r == want)
                .map(|(i, _)| i)
                .collect()
        };
        Self {
            positives: pick(Role::Positive),
            negatives: pick(Role::Negative),
            ignored: pick(Role::Ignored),
            matched_gt,
            ious,
            positive_responsibility: resp,
        }
    }
}

/// RetinaNet-style IoU-threshold assignment.
///
/// An anchor is positive when its best IoU reaches `pos_thresh` (matched to
/// the best ground truth, ties to the lower index), negative when its best
/// IoU is below `neg_thresh`, and ignored otherwise.
pub fn iou_threshold_assign(
    anchors: &[BBox],
    gts: &[BBox],
    pos_thresh: f64,
    neg_thresh: f64,
) -> Result<AssignerOutcome> {
    if !(0.0 <= neg_thresh && neg_thresh <= pos_thresh && pos_thresh <= 1.0) {
        return Err(Error::invalid(format!(
            "thresholds must satisfy 0 <= neg ({neg_thresh}) <= pos ({pos_thresh}) <= 1"
        )));
    }
    for b in anchors.iter().chain(gts) {
        b.validate()?;
    }
    let mut roles = Vec::with_capacity(anchors.len());
    let mut matched = Vec::with_capacity(anchors.len());
    let mut ious = Vec::with_capacity(anchors.len());
    let mut resp = Vec::with_capacity(anchors.len());
    for a in anchors {
        let best = gts
            .iter()
            .enumerate()
            .map(|(g, gt)| (g, iou_unchecked(a, gt)))
            .fold(None, |acc: Option<(usize, f64)>, (g, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((g, v)),
            });
        let (gt, best_iou) = match best {
            Some(b) => b,
            None => {
                roles.push(Role::Negative);
                matched.push(None);
                ious.push(0.0);
                resp.push(0.0);
                continue;
            }
        };
        if best_iou >= pos_thresh {
            roles.push(Role::Positive);
            matched.push(Some(gt));
            ious.push(best_iou);
            resp.push(1.0);
        } else if best_iou < neg_thresh {
            roles.push(Role::Negative);
            matched.push(None);
            ious.push(best_iou);
            resp.push(0.0);
        } else {
            roles.push(Role::Ignored);
            matched.push(None);
            ious.push(best_iou);
            resp.push(0.5);
        }
    }
    Ok(AssignerOutcome::from_roles(&roles, matched, ious, resp))
}

/// Min-max normalization within each instance group.
///
/// Groups whose values are all equal map to 0.5.
pub fn normalize_per_instance(values: &[f64], instance_ids: &[usize]) -> Result<Vec<f64>> {
    if values.len() != instance_ids.len() {
        return Err(Error::invalid(format!(
            "{} values but {} instance ids",
            values.len(),
            instance_ids.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("values must be finite"));
    }
    let mut range: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for (&v, &id) in values.iter().zip(instance_ids) {
        let e = range.entry(id).or_insert((v, v));
        e.0 = e.0.min(v);
        e.1 = e.1.max(v);
    }
    Ok(values
        .iter()
        .zip(instance_ids)
        .map(|(&v, id)| {
            let (lo, hi) = range[id];
            if hi > lo {
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.5
            }
        })
        .collect())
}

/// One (sample, ground truth) candidate for PAA-style assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaaCandidate {
    pub sample: usize,
    pub gt: usize,
    /// Ranking score after the sigmoid.
    pub rank_score: f64,
    /// IoU of the sample's box with the ground truth.
    pub loc_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaaOptions {
    /// Min-max normalize both scores per ground truth before clustering.
    pub normalize: bool,
    pub seed: u64,
}

/// PAA* assignment: cluster per-instance normalized (ranking, localization)
/// score pairs with a two-component GMM.
pub fn paa_star_assign(candidates: &[PaaCandidate], n_samples: usize, seed: u64) -> Result<AssignerOutcome> {
    paa_assign_with(
        candidates,
        n_samples,
        &PaaOptions {
            normalize: true,
            seed,
        },
    )
}

struct GtVerdict {
    gt: usize,
    sample: usize,
    responsibility: f64,
    positive: bool,
    loc: f64,
}

fn cluster_gt(gt: usize, cands: &[PaaCandidate], opts: &PaaOptions) -> Result<Vec<GtVerdict>> {
    let ranks: Vec<f64> = cands.iter().map(|c| c.rank_score).collect();
    let locs: Vec<f64> = cands.iter().map(|c| c.loc_score).collect();
    let (xs, ys) = if opts.normalize {
        let ids = vec![gt; cands.len()];
        (normalize_per_instance(&ranks, &ids)?, normalize_per_instance(&locs, &ids)?)
    } else {
        (ranks, locs)
    };
    let points: Vec<[f64; 2]> = xs.iter().zip(&ys).map(|(&x, &y)| [x, y]).collect();
    let verdict = |i: usize, responsibility: f64| GtVerdict {
        gt,
        sample: cands[i].sample,
        responsibility,
        positive: responsibility > 0.5,
        loc: cands[i].loc_score,
    };
    match gmm_fit_two_component(&points, opts.seed) {
        Ok(model) => {
            let upper = model.upper_component();
            Ok(points
                .iter()
                .enumerate()
                .map(|(i, p)| verdict(i, model.responsibility(p)[upper]))
                .collect())
        }
        Err(Error::DegenerateInput(_)) => {
            // too few distinct points: the best combined score is the only positive
            let best = (0..cands.len())
                .max_by(|&a, &b| {
                    (cands[a].rank_score + cands[a].loc_score)
                        .total_cmp(&(cands[b].rank_score + cands[b].loc_score))
                        .then(b.cmp(&a))
                })
                .expect("non-empty group");
            Ok((0..cands.len())
                .map(|i| verdict(i, if i == best { 1.0 } else { 0.0 }))
                .collect())
        }
        Err(e) => Err(e),
    }
}

/// PAA-style assignment with explicit options.
///
/// Candidates are grouped by ground truth; each group is clustered
/// independently and the component with the larger mean coordinate sum is the
/// positive one. A sample is positive when its positive responsibility is
/// strictly above 1/2 for at least one ground truth, and is matched to the
/// ground truth granting the highest such responsibility. Samples never
/// listed as candidates are negative.
pub fn paa_assign_with(
    candidates: &[PaaCandidate],
    n_samples: usize,
    opts: &PaaOptions,
) -> Result<AssignerOutcome> {
    let mut groups: BTreeMap<usize, Vec<PaaCandidate>> = BTreeMap::new();
    for c in candidates {
        if c.sample >= n_samples {
            return Err(Error::invalid(format!(
                "candidate sample {} out of range for {n_samples} samples",
                c.sample
            )));
        }
        if !(c.rank_score.is_finite() && c.loc_score.is_finite()) {
            return Err(Error::invalid("candidate scores must be finite"));
        }
        groups.entry(c.gt).or_default().push(*c);
    }
    let groups: Vec<(usize, Vec<PaaCandidate>)> = groups.into_iter().collect();
    let verdicts = groups
        .par_iter()
        .map(|(gt, cands)| cluster_gt(*gt, cands, opts))
        .collect::<Result<Vec<_>>>()?;

    let mut roles = vec![Role::Negative; n_samples];
    let mut matched: Vec<Option<usize>> = vec![None; n_samples];
    let mut ious = vec![0.0; n_samples];
    let mut resp = vec![0.0; n_samples];
    // groups are in ascending gt order, so strict comparisons keep the lower gt on ties
    for v in verdicts.iter().flatten() {
        let s = v.sample;
        if v.positive {
            if roles[s] != Role::Positive || v.responsibility > resp[s] {
                roles[s] = Role::Positive;
                matched[s] = Some(v.gt);
                ious[s] = v.loc;
                resp[s] = v.responsibility;
            }
        } else if roles[s] != Role::Positive && v.responsibility > resp[s] {
            resp[s] = v.responsibility;
        }
    }
    Ok(AssignerOutcome::from_roles(&roles, matched, ious, resp))
}
