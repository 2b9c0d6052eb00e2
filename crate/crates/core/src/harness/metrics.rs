use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GroundTruth;
use crate::oracle::OracleLabels;

/// Which nodes an accuracy is computed over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    #[default]
    UnlabeledOnly,
    AllNodes,
}

impl Scope {
    pub fn name(self) -> &'static str {
        match self {
            Scope::UnlabeledOnly => "unlabeled-only",
            Scope::AllNodes => "all-nodes",
        }
    }

    pub fn indices(self, s: &OracleLabels) -> Vec<usize> {
        match self {
            Scope::UnlabeledOnly => s.unlabeled(),
            Scope::AllNodes => (0..s.len()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub misclassified: usize,
    pub scope_size: usize,
}

/// Match fraction of `pred` against `truth` on `scope`. With `allow_flip`
/// the better of `pred` and `-pred` counts.
pub fn evaluate(pred: &[i8], truth: &GroundTruth, scope: &[usize], allow_flip: bool) -> Result<Evaluation> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if scope.is_empty() {
        return Err(Error::EmptyScope);
    }
    let mut hits = 0usize;
    for &i in scope {
        let p = *pred.get(i).ok_or(Error::DimensionMismatch {
            expected: pred.len(),
            actual: i + 1,
        })?;
        if p == truth.get(i) {
            hits += 1;
        }
    }
    if allow_flip {
        hits = hits.max(scope.len() - hits);
    }
    Ok(Evaluation {
        accuracy: hits as f64 / scope.len() as f64,
        misclassified: scope.len() - hits,
        scope_size: scope.len(),
    })
}

pub fn accuracy(pred: &[i8], truth: &GroundTruth, scope: &[usize], allow_flip: bool) -> Result<f64> {
    evaluate(pred, truth, scope, allow_flip).map(|e| e.accuracy)
}
