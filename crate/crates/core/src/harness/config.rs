use serde::{Deserialize, Serialize};

use crate::assign::{DEFAULT_NEG_THRESH, DEFAULT_POS_THRESH};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_CORR_IOU_THRESH;
use crate::rankloss::LossConfig;

/// Overrides [`ScenarioConfig::seed`] when set.
pub const SEED_ENV_VAR: &str = "RANKPAIR_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogitInit {
    Zeros,
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignerKind {
    /// IoU-threshold roles, every positive paired with the negatives only.
    IouThreshold,
    /// IoU-threshold roles, pairs expanded by adaptive ranking pair selection.
    Arps,
    /// Roles from GMM clustering of normalized ranking and localization
    /// scores, recomputed every step, with adaptive pair selection.
    PaaStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignerConfig {
    pub assigner: AssignerKind,
    #[serde(default = "default_pos")]
    pub pos_thresh: f64,
    #[serde(default = "default_neg")]
    pub neg_thresh: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_pos() -> f64 {
    DEFAULT_POS_THRESH
}
fn default_neg() -> f64 {
    DEFAULT_NEG_THRESH
}
fn default_seed() -> u64 {
    7
}

impl Default for AssignerConfig {
    fn default() -> Self {
        Self {
            assigner: AssignerKind::Arps,
            pos_thresh: DEFAULT_POS_THRESH,
            neg_thresh: DEFAULT_NEG_THRESH,
            seed: default_seed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// Weight of the GIoU term; 0 keeps boxes fixed.
    #[serde(default)]
    pub loc_loss_weight: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            steps: 200,
            loc_loss_weight: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n_gts")]
    pub n_gts: usize,
    #[serde(default = "default_candidates")]
    pub candidates_per_gt: usize,
    #[serde(default = "default_background")]
    pub n_background: usize,
    #[serde(default = "default_logit_init")]
    pub logit_init: LogitInit,
    /// Standard deviation of candidate corner noise, relative to the ground
    /// truth's side length.
    #[serde(default = "default_box_noise")]
    pub box_noise: f64,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub assigner: AssignerConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    /// Only samples whose IoU exceeds this enter the score/IoU correlations.
    #[serde(default = "default_corr")]
    pub corr_iou_thresh: f64,
}

fn default_n_gts() -> usize {
    3
}
fn default_candidates() -> usize {
    8
}
fn default_background() -> usize {
    20
}
fn default_logit_init() -> LogitInit {
    LogitInit::Gaussian { sigma: 0.1 }
}
fn default_box_noise() -> f64 {
    0.1
}
fn default_corr() -> f64 {
    DEFAULT_CORR_IOU_THRESH
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            n_gts: default_n_gts(),
            candidates_per_gt: default_candidates(),
            n_background: default_background(),
            logit_init: default_logit_init(),
            box_noise: default_box_noise(),
            loss: LossConfig::default(),
            assigner: AssignerConfig::default(),
            trainer: TrainerConfig::default(),
            corr_iou_thresh: default_corr(),
        }
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ScenarioConfig {
    /// Checks everything needed to generate an instance and train on it.
    pub fn validate(&self) -> Result<()> {
        self.validate_generation()?;
        if !(self.trainer.learning_rate > 0.0 && self.trainer.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.trainer.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn validate_generation(&self) -> Result<()> {
        if self.n_gts == 0 || self.candidates_per_gt == 0 {
            return Err(Error::Config(
                "n_gts and candidates_per_gt must be at least 1".into(),
            ));
        }
        if !(self.box_noise >= 0.0 && self.box_noise.is_finite()) {
            return Err(Error::Config("box_noise must be >= 0".into()));
        }
        if let LogitInit::Gaussian { sigma } = self.logit_init {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::Config("logit sigma must be >= 0".into()));
            }
        }
        let a = &self.assigner;
        if !(0.0 <= a.neg_thresh && a.neg_thresh <= a.pos_thresh && a.pos_thresh <= 1.0) {
            return Err(Error::Config(
                "assigner thresholds must satisfy 0 <= neg <= pos <= 1".into(),
            ));
        }
        if self.trainer.loc_loss_weight.is_nan() || self.trainer.loc_loss_weight < 0.0 {
            return Err(Error::Config("loc_loss_weight must be >= 0".into()));
        }
        self.loss.validate().map_err(config_err)
    }

    /// Applies the seed override from [`SEED_ENV_VAR`], if set.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV_VAR) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV_VAR}={v} is not an integer")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{
                "seed": 3, "n_gts": 2, "candidates_per_gt": 5, "n_background": 4,
                "logit_init": "zeros", "box_noise": 0.05,
                "loss": {"distance": {"type": "sigmoid", "lambda": 8}, "balance": "rank_sum", "q": 1000, "detach_balance": true},
                "assigner": {"assigner": "paa_star", "pos_thresh": 0.5, "neg_thresh": 0.4, "seed": 7},
                "trainer": {"learning_rate": 0.5, "steps": 10, "loc_loss_weight": 0.0}
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.logit_init, LogitInit::Zeros);
        assert_eq!(cfg.assigner.assigner, AssignerKind::PaaStar);
        cfg.validate().unwrap();

        let g: LogitInit = serde_json::from_str(r#"{"gaussian": {"sigma": 0.5}}"#).unwrap();
        assert_eq!(g, LogitInit::Gaussian { sigma: 0.5 });
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = ScenarioConfig::default();
        cfg.trainer.learning_rate = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ScenarioConfig {
            n_gts: 0,
            ..ScenarioConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ScenarioConfig::default();
        cfg.loss.q = Some(0);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
