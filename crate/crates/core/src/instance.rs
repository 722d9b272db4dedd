use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Positive,
    Negative,
    /// Excluded from both the positive and negative sets.
    Ignored,
}

/// One synthetic "image": per-sample logits, roles and localization scores.
///
/// `ious[i]` is the localization score of sample `i` against its matched
/// ground truth. Negatives and ignored samples store 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionInstance {
    pub logits: Vec<f64>,
    pub roles: Vec<Role>,
    pub ious: Vec<f64>,
    /// Ground-truth instance each sample belongs to, `None` for background.
    pub instance_ids: Vec<Option<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_boxes: Option<Vec<BBox>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_boxes: Option<Vec<BBox>>,
}

impl DetectionInstance {
    /// Builds an instance without boxes; every sample gets its own instance id.
    pub fn new(logits: Vec<f64>, roles: Vec<Role>, ious: Vec<f64>) -> Result<Self> {
        let instance_ids = (0..logits.len()).map(Some).collect();
        let inst = Self {
            logits,
            roles,
            ious,
            instance_ids,
            pred_boxes: None,
            gt_boxes: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Convenience constructor from `(logit, is_positive, iou)` triples.
    pub fn from_samples(samples: &[(f64, bool, f64)]) -> Result<Self> {
        let logits = samples.iter().map(|s| s.0).collect();
        let roles = samples
            .iter()
            .map(|s| if s.1 { Role::Positive } else { Role::Negative })
            .collect();
        let ious = samples
            .iter()
            .map(|s| if s.1 { s.2 } else { 0.0 })
            .collect();
        Self::new(logits, roles, ious)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.logits.len();
        if n == 0 {
            return Err(Error::invalid("instance has no samples"));
        }
        if self.roles.len() != n || self.ious.len() != n || self.instance_ids.len() != n {
            return Err(Error::invalid(format!(
                "misaligned instance arrays: logits {n}, roles {}, ious {}, instance_ids {}",
                self.roles.len(),
                self.ious.len(),
                self.instance_ids.len()
            )));
        }
        if let Some(i) = self.logits.iter().position(|l| !l.is_finite()) {
            return Err(Error::invalid(format!("logit {i} is not finite")));
        }
        if let Some(i) = self
            .ious
            .iter()
            .position(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::invalid(format!("iou {i} outside [0, 1]")));
        }
        if let Some(b) = &self.pred_boxes {
            if b.len() != n {
                return Err(Error::invalid("pred_boxes not aligned with logits"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn positives(&self) -> Vec<usize> {
        self.indices_with(Role::Positive)
    }

    pub fn negatives(&self) -> Vec<usize> {
        self.indices_with(Role::Negative)
    }

    fn indices_with(&self, role: Role) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_positive(&self, i: usize) -> bool {
        self.roles.get(i) == Some(&Role::Positive)
    }

    pub(crate) fn check_positive(&self, u: usize) -> Result<()> {
        if u >= self.len() {
            return Err(Error::invalid(format!(
                "sample {u} out of range for {} samples",
                self.len()
            )));
        }
        if !self.is_positive(u) {
            return Err(Error::invalid(format!("sample {u} is not a positive")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_misaligned_and_bad_iou() {
        assert!(DetectionInstance::new(vec![0.0], vec![], vec![0.0]).is_err());
        assert!(DetectionInstance::new(vec![], vec![], vec![]).is_err());
        assert!(DetectionInstance::new(vec![0.0], vec![Role::Positive], vec![1.5]).is_err());
        assert!(DetectionInstance::new(vec![f64::NAN], vec![Role::Positive], vec![0.5]).is_err());
    }

    #[test]
    fn role_partitions() {
        let inst =
            DetectionInstance::from_samples(&[(0.0, true, 0.9), (0.0, false, 0.3), (1.0, true, 0.5)])
                .unwrap();
        assert_eq!(inst.positives(), vec![0, 2]);
        assert_eq!(inst.negatives(), vec![1]);
        assert_eq!(inst.ious[1], 0.0);
    }
}
