use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::Scope;
use crate::error::{Error, Result};
use crate::graph::ModelParams;
use crate::map_exact::BRUTE_FORCE_MAX_N;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Algorithm1,
    Algorithm1Perfect,
    Spectral,
    LabelSpreading,
    BruteMap,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Algorithm1 => "algorithm1",
            Algorithm::Algorithm1Perfect => "algorithm1-perfect",
            Algorithm::Spectral => "spectral",
            Algorithm::LabelSpreading => "label-spreading",
            Algorithm::BruteMap => "brute-map",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaPolicyName {
    #[default]
    SpectralNorm,
    MeanField,
}

fn default_replications() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_beta() -> f64 {
    0.9
}

/// A sweep: the Cartesian product of the grid keys, each point replicated.
///
/// Edge probabilities come either from `p_in` x `p_out` or from
/// `degree_log_factor` x `contrast` (`d = factor * ln n`,
/// `(p_in - p_out)/(p_in + p_out) = contrast`). The oracle comes either from
/// `eta` x `theta` or from `labeled_frac` x `error_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n: Vec<usize>,
    #[serde(default)]
    pub p_in: Vec<f64>,
    #[serde(default)]
    pub p_out: Vec<f64>,
    #[serde(default)]
    pub degree_log_factor: Vec<f64>,
    #[serde(default)]
    pub contrast: Vec<f64>,
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub labeled_frac: Vec<f64>,
    #[serde(default)]
    pub error_rate: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_true")]
    pub balanced: bool,
    #[serde(default)]
    pub self_loops: bool,
    #[serde(default)]
    pub scope: Scope,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(default)]
    pub alpha_policy: AlphaPolicyName,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub dump_labels: bool,
}

fn spec_err(msg: impl Into<String>) -> Error {
    Error::Spec(msg.into())
}

fn product<A: Copy, B: Copy>(a: &[A], b: &[B]) -> Vec<(A, B)> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| spec_err(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
            .map_err(|e| spec_err(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(spec_err("replications must be >= 1"));
        }
        if self.algorithms.is_empty() {
            return Err(spec_err("algorithms must not be empty"));
        }
        let mut seen = HashSet::new();
        for a in &self.algorithms {
            if !seen.insert(a) {
                return Err(spec_err(format!("algorithm {} listed twice", a.name())));
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(spec_err(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) {
                return Err(spec_err(format!("alpha must be > 0, got {a}")));
            }
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(spec_err(format!("lambda must be >= 0, got {l}")));
            }
        }
        if self.algorithms.contains(&Algorithm::BruteMap) {
            if let Some(&n) = self.n.iter().find(|&&n| n > BRUTE_FORCE_MAX_N) {
                return Err(spec_err(format!(
                    "brute-map needs n <= {BRUTE_FORCE_MAX_N}, grid has n = {n}"
                )));
            }
        }
        self.grid().map(|_| ())
    }

    fn edge_pairs(&self, n: usize) -> Result<Vec<(f64, f64)>> {
        let direct = !self.p_in.is_empty() || !self.p_out.is_empty();
        let scaled = !self.degree_log_factor.is_empty() || !self.contrast.is_empty();
        match (direct, scaled) {
            (true, false) => {
                if self.p_in.is_empty() || self.p_out.is_empty() {
                    return Err(spec_err("p_in and p_out must both be non-empty"));
                }
                Ok(product(&self.p_in, &self.p_out))
            }
            (false, true) => {
                if self.degree_log_factor.is_empty() || self.contrast.is_empty() {
                    return Err(spec_err("degree_log_factor and contrast must both be non-empty"));
                }
                let nf = n as f64;
                Ok(product(&self.degree_log_factor, &self.contrast)
                    .into_iter()
                    .map(|(f, c)| {
                        let d = f * nf.ln();
                        (d * (1.0 + c) / nf, d * (1.0 - c) / nf)
                    })
                    .collect())
            }
            (true, true) => Err(spec_err(
                "give either p_in/p_out or degree_log_factor/contrast, not both",
            )),
            (false, false) => Err(spec_err("no edge probabilities: set p_in/p_out")),
        }
    }

    fn oracle_pairs(&self) -> Result<Vec<(f64, f64)>> {
        let direct = !self.eta.is_empty() || !self.theta.is_empty();
        let narrative = !self.labeled_frac.is_empty() || !self.error_rate.is_empty();
        match (direct, narrative) {
            (true, false) => {
                let eta = if self.eta.is_empty() { vec![0.0] } else { self.eta.clone() };
                let theta = if self.theta.is_empty() { vec![0.0] } else { self.theta.clone() };
                Ok(product(&eta, &theta))
            }
            (false, true) => {
                if self.labeled_frac.is_empty() {
                    return Err(spec_err("error_rate needs labeled_frac"));
                }
                let rates = if self.error_rate.is_empty() { vec![0.0] } else { self.error_rate.clone() };
                Ok(product(&self.labeled_frac, &rates)
                    .into_iter()
                    .map(|(l, s)| (l * (1.0 - s), l * s))
                    .collect())
            }
            (true, true) => Err(spec_err(
                "give either eta/theta or labeled_frac/error_rate, not both",
            )),
            (false, false) => Ok(vec![(0.0, 0.0)]),
        }
    }

    /// Grid points in a fixed order: n, then edge parameters, then oracle
    /// parameters.
    pub fn grid(&self) -> Result<Vec<ModelParams>> {
        if self.n.is_empty() {
            return Err(spec_err("n must not be empty"));
        }
        let oracle = self.oracle_pairs()?;
        let mut points = Vec::new();
        for &n in &self.n {
            for (p_in, p_out) in self.edge_pairs(n)? {
                for &(eta, theta) in &oracle {
                    let m = ModelParams::new(n, p_in, p_out, eta, theta)
                        .map_err(|e| spec_err(format!("grid point n={n}, p_in={p_in}, p_out={p_out}, eta={eta}, theta={theta}: {e}")))?;
                    points.push(m);
                }
            }
        }
        Ok(points)
    }
}
