use serde::{Deserialize, Serialize};

use crate::linalg::argmax;

/// Per-class confidences for one query, indexed by class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Winning class; ties go to the lowest class id.
    pub fn predicted(&self) -> usize {
        argmax(&self.0)
    }

    pub fn confidence(&self) -> f64 {
        self.0[self.predicted()]
    }
}

impl From<Vec<f64>> for ScoreVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl std::ops::Index<usize> for ScoreVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
