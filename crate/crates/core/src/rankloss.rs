//! Ranking losses over a [`DetectionInstance`].
//!
//! Every loss here is built from pairs `(u, v)` where `u` is a positive and
//! `v` a sample that should score below it. A pair contributes `D(s_v - s_u)`
//! for a [`DistanceFunction`] `D`, and a positive's summed pair errors are
//! normalized by a balance constant (BC).
//!
//! Ranks are self-inclusive: the rank of `u` is `1 + sum_{v != u} D(s_v - s_u)`,
//! so a positive that outranks every other sample has zero precision loss.
//! The balance constant is always treated as a constant when differentiating.
//!
//! Per-positive terms are independent. They are evaluated in parallel and
//! reduced into the gradient in ascending positive order, so results do not
//! depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assign::AdaptiveNegativeSets;
use crate::distance::DistanceFunction;
use crate::error::{Error, Result};
use crate::instance::{DetectionInstance, Role};

pub const DEFAULT_MAX_PAIRS: usize = 100_000;
pub const DEFAULT_VALID_NEG_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BalanceConstant {
    /// `rank+(u) + rank-(u)`.
    #[default]
    RankSum,
    /// Number of pairs whose score gap `s_v - s_u` exceeds the margin `T`.
    ValidNegCount {
        #[serde(rename = "T")]
        threshold: f64,
    },
}

fn default_q() -> Option<usize> {
    Some(DEFAULT_MAX_PAIRS)
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    #[serde(default)]
    pub distance: DistanceFunction,
    #[serde(default)]
    pub balance: BalanceConstant,
    /// Maximum pairs per positive; `None` means unlimited.
    #[serde(default = "default_q")]
    pub q: Option<usize>,
    #[serde(default = "default_true")]
    pub detach_balance: bool,
    /// Optional per-positive weights, aligned with the instance's positives in
    /// ascending index order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_weights: Option<Vec<f64>>,
    /// Count the positive itself in its rank.
    #[serde(default = "default_true")]
    pub self_count: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            distance: DistanceFunction::default(),
            balance: BalanceConstant::RankSum,
            q: default_q(),
            detach_balance: true,
            positive_weights: None,
            self_count: true,
        }
    }
}

impl LossConfig {
    pub fn with_distance(distance: DistanceFunction) -> Self {
        Self {
            distance,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.distance.validate()?;
        if let BalanceConstant::ValidNegCount { threshold } = self.balance {
            if !(threshold >= 0.0 && threshold.is_finite()) {
                return Err(Error::invalid(format!(
                    "valid-negative threshold must be >= 0, got {threshold}"
                )));
            }
        }
        if self.q == Some(0) {
            return Err(Error::invalid("q must be at least 1"));
        }
        if let Some(w) = &self.positive_weights {
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::invalid("positive weights must be finite and >= 0"));
            }
        }
        Ok(())
    }

    fn require_detached(&self) -> Result<()> {
        if self.detach_balance {
            Ok(())
        } else {
            Err(Error::invalid(
                "not differentiable through BC: gradients are only defined with detach_balance = true",
            ))
        }
    }
}

/// Per-sample gradient of a loss with respect to the logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVector {
    pub grads: Vec<f64>,
}

impl GradientVector {
    pub fn zeros(n: usize) -> Self {
        Self { grads: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.grads.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.grads.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &GradientVector) -> f64 {
        self.grads
            .iter()
            .zip(&other.grads)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean over positives of the (weighted) per-positive losses.
    pub loss: f64,
    pub gradient: GradientVector,
    /// Unweighted loss of each positive, in ascending index order.
    pub per_positive: Vec<(usize, f64)>,
}

/// One positive's pairwise error and its gradient contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTerm {
    pub positive: usize,
    pub loss: f64,
    pub balance: f64,
    /// Gradient with respect to the positive's logit.
    pub grad_positive: f64,
    /// Gradient with respect to each paired sample's logit, in pair order.
    pub grad_pairs: Vec<(usize, f64)>,
}

impl PairwiseTerm {
    fn zero(positive: usize, balance: f64) -> Self {
        Self {
            positive,
            loss: 0.0,
            balance,
            grad_positive: 0.0,
            grad_pairs: Vec::new(),
        }
    }
}

/// Frozen pair list and balance constant of one positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPlan {
    pub positive: usize,
    pub pairs: Vec<usize>,
    pub balance: f64,
}

/// `rank+(u) + rank-(u)` under the soft rank indicator of `d`.
pub fn rank_sum(u: usize, inst: &DetectionInstance, d: &DistanceFunction, self_count: bool) -> f64 {
    let su = inst.logits[u];
    let others: f64 = inst
        .roles
        .iter()
        .zip(&inst.logits)
        .enumerate()
        .filter(|(v, (role, _))| *v != u && **role != Role::Ignored)
        .map(|(_, (_, sv))| d.rank_indicator(sv - su))
        .sum();
    if self_count {
        1.0 + others
    } else {
        others
    }
}

/// Precision loss `1 - precision` of positive `u`, self-inclusive rank.
pub fn precision_loss(u: usize, inst: &DetectionInstance, d: &DistanceFunction) -> Result<f64> {
    precision_loss_with(u, inst, d, true)
}

/// Precision loss with an explicit choice of whether `u` counts itself in
/// its rank. Without the self term an isolated top-ranked positive has a
/// 0/0 ratio, reported as 0.
pub fn precision_loss_with(
    u: usize,
    inst: &DetectionInstance,
    d: &DistanceFunction,
    self_count: bool,
) -> Result<f64> {
    inst.validate()?;
    d.validate()?;
    inst.check_positive(u)?;
    let su = inst.logits[u];
    let mut fp = 0.0;
    let mut tp = 0.0;
    for (v, (&role, &sv)) in inst.roles.iter().zip(&inst.logits).enumerate() {
        match role {
            Role::Negative => fp += d.rank_indicator(sv - su),
            Role::Positive if v != u => tp += d.rank_indicator(sv - su),
            _ => {}
        }
    }
    let den = tp + fp + if self_count { 1.0 } else { 0.0 };
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(fp / den)
}

/// Error-driven update of AP loss over the given pair sets.
///
/// For each positive `u` with pair set `A_u` and rank `r(u)`, the update is
/// `g_u = -sum_{v in A_u} D(s_v - s_u) / r(u)` and every paired `v` receives
/// `D(s_v - s_u) / r(u)`. The updates and the loss are averaged over
/// positives. With `A_u` equal to all negatives the loss is the mean
/// precision loss.
pub fn error_driven_gradients(
    inst: &DetectionInstance,
    d: &DistanceFunction,
    pairs: &AdaptiveNegativeSets,
) -> Result<LossOutput> {
    inst.validate()?;
    d.validate()?;
    if d.is_ce() {
        return Err(Error::invalid(
            "error-driven update needs a piecewise step or sigmoid distance",
        ));
    }
    let positives = inst.positives();
    if positives.is_empty() {
        return Err(Error::invalid("error-driven update needs at least one positive"));
    }
    let plans = positives
        .iter()
        .map(|&u| {
            let set = pairs
                .get(u)
                .ok_or_else(|| Error::invalid(format!("no pair set for positive {u}")))?;
            Ok(PairPlan {
                positive: u,
                pairs: set.to_vec(),
                balance: rank_sum(u, inst, d, true),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let terms: Vec<PairwiseTerm> = plans
        .par_iter()
        .map(|plan| {
            let su = inst.logits[plan.positive];
            let grad_pairs: Vec<(usize, f64)> = plan
                .pairs
                .iter()
                .map(|&v| (v, d.value(inst.logits[v] - su) / plan.balance))
                .collect();
            let total: f64 = grad_pairs.iter().map(|(_, g)| g).sum();
            PairwiseTerm {
                positive: plan.positive,
                loss: total,
                balance: plan.balance,
                grad_positive: -total,
                grad_pairs,
            }
        })
        .collect();
    Ok(reduce_terms(inst.len(), &terms, None))
}

/// Keeps candidates `v` with `s_v - s_u > threshold`.
pub fn valid_negative_filter(
    u: usize,
    inst: &DetectionInstance,
    candidates: &[usize],
    threshold: f64,
) -> Result<Vec<usize>> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::invalid(format!("threshold must be >= 0, got {threshold}")));
    }
    check_indices(inst, std::iter::once(&u).chain(candidates))?;
    let su = inst.logits[u];
    Ok(candidates
        .iter()
        .copied()
        .filter(|&v| inst.logits[v] - su > threshold)
        .collect())
}

/// The `q` highest-scoring candidates (ties by lower index), returned in
/// ascending index order.
pub fn top_q_truncate(inst: &DetectionInstance, candidates: &[usize], q: usize) -> Result<Vec<usize>> {
    if q == 0 {
        return Err(Error::invalid("q must be at least 1"));
    }
    check_indices(inst, candidates)?;
    if candidates.len() <= q {
        return Ok(candidates.to_vec());
    }
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| inst.logits[b].total_cmp(&inst.logits[a]).then(a.cmp(&b)));
    order.truncate(q);
    order.sort_unstable();
    Ok(order)
}

fn check_indices<'a>(inst: &DetectionInstance, idx: impl IntoIterator<Item = &'a usize>) -> Result<()> {
    let n = inst.len();
    match idx.into_iter().find(|&&i| i >= n) {
        Some(i) => Err(Error::invalid(format!("sample {i} out of range for {n} samples"))),
        None => Ok(()),
    }
}

fn balance_for(
    u: usize,
    inst: &DetectionInstance,
    pairs: &[usize],
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(match cfg.balance {
        BalanceConstant::RankSum => rank_sum(u, inst, &cfg.distance, cfg.self_count),
        BalanceConstant::ValidNegCount { threshold } => {
            valid_negative_filter(u, inst, pairs, threshold)?.len() as f64
        }
    })
}

fn pair_term(logits: &[f64], plan: &PairPlan, d: &DistanceFunction) -> Result<PairwiseTerm> {
    let su = logits[plan.positive];
    let numerator: f64 = plan.pairs.iter().map(|&v| d.value(logits[v] - su)).sum();
    if plan.balance == 0.0 {
        if numerator == 0.0 {
            return Ok(PairwiseTerm::zero(plan.positive, 0.0));
        }
        return Err(Error::DegenerateDenominator {
            positive: plan.positive,
        });
    }
    let grad_pairs: Vec<(usize, f64)> = plan
        .pairs
        .iter()
        .map(|&v| (v, d.derivative(logits[v] - su) / plan.balance))
        .collect();
    let grad_positive = -grad_pairs.iter().map(|(_, g)| g).sum::<f64>();
    Ok(PairwiseTerm {
        positive: plan.positive,
        loss: numerator / plan.balance,
        balance: plan.balance,
        grad_positive,
        grad_pairs,
    })
}

/// Pairwise error of positive `u` over exactly `pairs_u`:
/// `(1 / BC) * sum_{v in pairs_u} D(s_v - s_u)`, differentiated with BC held
/// constant.
pub fn pairwise_error_loss(
    u: usize,
    inst: &DetectionInstance,
    pairs_u: &[usize],
    cfg: &LossConfig,
) -> Result<PairwiseTerm> {
    inst.validate()?;
    cfg.validate()?;
    cfg.require_detached()?;
    inst.check_positive(u)?;
    check_indices(inst, pairs_u)?;
    if pairs_u.is_empty() {
        return Ok(PairwiseTerm::zero(u, balance_for(u, inst, pairs_u, cfg)?));
    }
    let plan = PairPlan {
        positive: u,
        pairs: pairs_u.to_vec(),
        balance: balance_for(u, inst, pairs_u, cfg)?,
    };
    pair_term(&inst.logits, &plan, &cfg.distance)
}

/// Resolves each positive's final pair list (valid-pair filtering when the
/// balance constant counts valid pairs, then top-`q` truncation) and its
/// balance constant at the current logits.
pub fn plan_pairs(
    inst: &DetectionInstance,
    sets: &AdaptiveNegativeSets,
    cfg: &LossConfig,
) -> Result<Vec<PairPlan>> {
    inst.validate()?;
    cfg.validate()?;
    let positives = inst.positives();
    if positives.is_empty() {
        return Err(Error::invalid("loss needs at least one positive"));
    }
    positives
        .iter()
        .map(|&u| {
            let set = sets
                .get(u)
                .ok_or_else(|| Error::invalid(format!("no pair set for positive {u}")))?;
            check_indices(inst, set)?;
            let mut pairs = match cfg.balance {
                BalanceConstant::ValidNegCount { threshold } => {
                    valid_negative_filter(u, inst, set, threshold)?
                }
                BalanceConstant::RankSum => set.to_vec(),
            };
            if let Some(q) = cfg.q {
                pairs = top_q_truncate(inst, &pairs, q)?;
            }
            let balance = balance_for(u, inst, &pairs, cfg)?;
            Ok(PairPlan {
                positive: u,
                pairs,
                balance,
            })
        })
        .collect()
}

/// Evaluates the loss for a fixed set of plans at arbitrary logits.
///
/// Pair lists and balance constants stay frozen, which makes the result a
/// smooth function of `logits` whose gradient is exactly the reported one.
pub fn evaluate_plans(logits: &[f64], plans: &[PairPlan], cfg: &LossConfig) -> Result<LossOutput> {
    cfg.validate()?;
    cfg.require_detached()?;
    if plans.is_empty() {
        return Err(Error::invalid("loss needs at least one positive"));
    }
    if let Some(w) = &cfg.positive_weights {
        if w.len() != plans.len() {
            return Err(Error::invalid(format!(
                "{} positive weights for {} positives",
                w.len(),
                plans.len()
            )));
        }
    }
    let terms = plans
        .par_iter()
        .map(|plan| pair_term(logits, plan, &cfg.distance))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce_terms(logits.len(), &terms, cfg.positive_weights.as_deref()))
}

/// Adaptive pairwise error: the mean over positives of the pairwise error
/// over each positive's own pair set.
///
/// With [`AdaptiveNegativeSets::plain`] this is the plain pairwise error
/// over all negatives; with [`crate::assign::arps`] lower-IoU positives join
/// each positive's negative set.
pub fn ape_loss(
    inst: &DetectionInstance,
    sets: &AdaptiveNegativeSets,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    cfg.validate()?;
    cfg.require_detached()?;
    let plans = plan_pairs(inst, sets, cfg)?;
    evaluate_plans(&inst.logits, &plans, cfg)
}

fn reduce_terms(n: usize, terms: &[PairwiseTerm], weights: Option<&[f64]>) -> LossOutput {
    let scale = 1.0 / terms.len() as f64;
    let mut grads = vec![0.0; n];
    let mut loss = 0.0;
    let mut per_positive = Vec::with_capacity(terms.len());
    for (k, t) in terms.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[k]) * scale;
        loss += w * t.loss;
        grads[t.positive] += w * t.grad_positive;
        for &(v, g) in &t.grad_pairs {
            grads[v] += w * g;
        }
        per_positive.push((t.positive, t.loss));
    }
    LossOutput {
        loss,
        gradient: GradientVector { grads },
        per_positive,
    }
}
