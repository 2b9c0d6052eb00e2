//! Noisy side information: each node independently reveals its true label
//! with probability `eta`, the opposite label with probability `theta`, and
//! nothing otherwise.

use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::GroundTruth;

/// Oracle vector `S` in `{-1, 0, +1}^n` with its support cached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleLabels {
    s: Vec<i8>,
    labeled: Vec<usize>,
}

impl OracleLabels {
    pub fn new(s: Vec<i8>) -> Result<Self> {
        if let Some(bad) = s.iter().find(|&&v| !(-1..=1).contains(&v)) {
            return Err(Error::invalid(format!("oracle entry {bad} not in {{-1, 0, 1}}")));
        }
        let labeled = s
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
            .collect();
        Ok(OracleLabels { s, labeled })
    }

    /// No side information at all.
    pub fn empty(n: usize) -> Self {
        OracleLabels {
            s: vec![0; n],
            labeled: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.s
    }

    pub fn get(&self, i: usize) -> i8 {
        self.s[i]
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.s[i] != 0
    }

    /// Indices with `S_i != 0`, ascending.
    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.s.len()).filter(|&i| self.s[i] == 0).collect()
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled.len()
    }

    /// The diagonal of `P_L` as a 0/1 mask.
    pub fn mask(&self) -> Vec<f64> {
        self.s.iter().map(|&v| if v != 0 { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.s.iter().map(|&v| f64::from(v)).collect()
    }

    /// `S -> -S`.
    pub fn negated(&self) -> Self {
        OracleLabels {
            s: self.s.iter().map(|&v| -v).collect(),
            labeled: self.labeled.clone(),
        }
    }

    /// Number of labeled nodes agreeing and disagreeing with `sigma`.
    pub fn agreement(&self, sigma: &[i8]) -> (usize, usize) {
        self.labeled.iter().fold((0, 0), |(agree, disagree), &i| {
            if sigma[i] == self.s[i] {
                (agree + 1, disagree)
            } else {
                (agree, disagree + 1)
            }
        })
    }

    /// Fraction of labeled nodes whose label contradicts the truth, `None`
    /// when nothing is labeled.
    pub fn realized_error_rate(&self, truth: &GroundTruth) -> Option<f64> {
        if self.labeled.is_empty() {
            return None;
        }
        let (_, wrong) = self.agreement(truth.as_slice());
        Some(wrong as f64 / self.labeled.len() as f64)
    }
}

/// Draws `S_j = sigma0_j` w.p. `eta`, `-sigma0_j` w.p. `theta`, else 0.
pub fn sample_oracle(truth: &GroundTruth, eta: f64, theta: f64, seed: u64) -> Result<OracleLabels> {
    if !(0.0..=1.0).contains(&eta) || !(0.0..=1.0).contains(&theta) || eta + theta > 1.0 + 1e-12 {
        return Err(Error::invalid(format!(
            "oracle probabilities eta = {eta}, theta = {theta} must be in [0, 1] with sum <= 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = truth
        .as_slice()
        .iter()
        .map(|&t| {
            let u: f64 = rng.random();
            if u < eta {
                t
            } else if u < eta + theta {
                -t
            } else {
                0
            }
        })
        .collect();
    OracleLabels::new(s)
}

/// `theta / (eta + theta)`, the probability a revealed label is wrong.
pub fn error_rate(eta: f64, theta: f64) -> Result<f64> {
    if eta + theta <= 0.0 {
        return Err(Error::UndefinedErrorRate);
    }
    Ok(theta / (eta + theta))
}

/// Parses `node label` lines (0-based node, label `-1` or `1`); nodes not
/// listed are unlabeled. `#` lines are comments.
pub fn read_labels<R: BufRead>(reader: R, n: usize, source: &Path) -> Result<OracleLabels> {
    let err = |line: usize, message: String| Error::Format {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut s = vec![0i8; n];
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(err(lineno, format!("expected `node label`, got {text:?}")));
        }
        let node: usize = fields[0]
            .parse()
            .map_err(|_| err(lineno, format!("bad node id {:?}", fields[0])))?;
        let label: i8 = fields[1]
            .parse()
            .map_err(|_| err(lineno, format!("bad label {:?}", fields[1])))?;
        if node >= n {
            return Err(err(lineno, format!("node {node} out of range for n = {n}")));
        }
        if label != 1 && label != -1 {
            return Err(err(lineno, format!("label must be -1 or 1, got {label}")));
        }
        if s[node] != 0 && s[node] != label {
            return Err(err(lineno, format!("node {node} labeled twice with different labels")));
        }
        s[node] = label;
    }
    OracleLabels::new(s)
}

pub fn load_labels(path: impl AsRef<Path>, n: usize) -> Result<OracleLabels> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_labels(std::io::BufReader::new(file), n, path)
}
