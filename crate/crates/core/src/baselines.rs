//! Reference methods: unsupervised spectral clustering on the normalized
//! Laplacian and label spreading.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::linalg::{dot, norm2, SymmetricOperator};
use crate::oracle::OracleLabels;
use crate::ssl::ScoreVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Spectral,
    LabelSpreading,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    /// Label spreading damping, in (0, 1).
    pub beta: f64,
    pub eig_tol: f64,
    pub eig_max_iter: usize,
    /// Iterations spent estimating the third eigenvalue for the degeneracy flag.
    pub degenerate_probe_iter: usize,
    pub spread_tol: f64,
    pub spread_max_iter: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            beta: 0.9,
            eig_tol: 1e-6,
            eig_max_iter: 100_000,
            degenerate_probe_iter: 100,
            spread_tol: 1e-8,
            spread_max_iter: 10_000,
            seed: 0x5eed,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.eig_tol > 0.0) || !(self.spread_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        Ok(())
    }
}

/// `D^{-1/2} A D^{-1/2}` with `D^{-1/2} = 0` at isolated nodes.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency<'a> {
    graph: &'a SparseGraph,
    inv_sqrt_deg: Vec<f64>,
}

impl<'a> NormalizedAdjacency<'a> {
    pub fn new(graph: &'a SparseGraph) -> Self {
        let inv_sqrt_deg = graph
            .degrees()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        NormalizedAdjacency {
            graph,
            inv_sqrt_deg,
        }
    }
}

impl SymmetricOperator for NormalizedAdjacency<'_> {
    fn dim(&self) -> usize {
        self.graph.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let scaled: Vec<f64> = x.iter().zip(&self.inv_sqrt_deg).map(|(a, b)| a * b).collect();
        self.graph.adjacency_matvec(&scaled, y);
        for (yi, s) in y.iter_mut().zip(&self.inv_sqrt_deg) {
            *yi *= s;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub scores: ScoreVector,
    /// Second largest eigenvalue of `D^{-1/2} A D^{-1/2}`.
    pub eigenvalue: f64,
    pub iterations: usize,
    /// The second and third eigenvalues coincide, so the split is arbitrary.
    pub degenerate: bool,
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>], active: &[bool]) {
    for b in basis {
        let c = dot(v, b);
        for (vi, bi) in v.iter_mut().zip(b) {
            *vi -= c * bi;
        }
    }
    for (vi, &a) in v.iter_mut().zip(active) {
        if !a {
            *vi = 0.0;
        }
    }
}

/// Power iteration on `I + N` restricted to the complement of `basis`.
/// Returns the unit vector, its Rayleigh quotient, iterations and whether
/// the eigen-residual reached `tol`.
fn deflated_power(
    n_op: &NormalizedAdjacency<'_>,
    basis: &[Vec<f64>],
    active: &[bool],
    tol: f64,
    max_iter: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64, usize, bool) {
    let n = n_op.dim();
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect();
    project_out(&mut v, basis, active);
    let nv = norm2(&v);
    if nv == 0.0 {
        return (v, 0.0, 0, true);
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; n];
    let mut rho = 0.0;
    for it in 1..=max_iter {
        n_op.apply(&v, &mut w);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi += vi;
        }
        project_out(&mut w, basis, active);
        rho = dot(&v, &w);
        let residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - rho * b).powi(2))
            .sum::<f64>()
            .sqrt();
        let nw = norm2(&w);
        if nw == 0.0 {
            return (v, 0.0, it, true);
        }
        if residual <= tol * rho.max(1.0) {
            return (v, rho, it, true);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    (v, rho, max_iter, false)
}

/// Sign split of the second eigenvector of `I - D^{-1/2} A D^{-1/2}`, found by
/// power iteration on `I + D^{-1/2} A D^{-1/2}` with `D^{1/2} 1` deflated.
/// Isolated nodes score 0. The sign is fixed so the largest entry is positive.
pub fn spectral_clustering(g: &SparseGraph, cfg: &BaselineConfig) -> Result<SpectralResult> {
    cfg.validate()?;
    let n = g.n();
    let active: Vec<bool> = g.degrees().iter().map(|&d| d > 0.0).collect();
    let mut top: Vec<f64> = g.degrees().iter().map(|d| d.sqrt()).collect();
    let nt = norm2(&top);
    if nt == 0.0 {
        return Ok(SpectralResult {
            scores: ScoreVector::from_scores(vec![0.0; n]),
            eigenvalue: 0.0,
            iterations: 0,
            degenerate: true,
        });
    }
    top.iter_mut().for_each(|x| *x /= nt);

    let n_op = NormalizedAdjacency::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut basis = vec![top];
    let (mut v, rho2, iterations, converged) =
        deflated_power(&n_op, &basis, &active, cfg.eig_tol, cfg.eig_max_iter, &mut rng);
    if !converged {
        return Err(Error::NotConverged {
            what: "spectral clustering power iteration",
            iterations,
        });
    }

    let degenerate = if cfg.degenerate_probe_iter > 0 {
        basis.push(v.clone());
        let (_, rho3, _, _) =
            deflated_power(&n_op, &basis, &active, 0.0, cfg.degenerate_probe_iter, &mut rng);
        rho3 >= rho2 - 1e-9
    } else {
        false
    };
    if degenerate {
        log::warn!("spectral clustering: second eigenvalue is not simple, split is arbitrary");
    }

    let pivot = v
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |(bi, bv), (i, &x)| if x.abs() > bv.abs() { (i, x) } else { (bi, bv) });
    if pivot.1 < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(SpectralResult {
        scores: ScoreVector::from_scores(v),
        eigenvalue: rho2 - 1.0,
        iterations,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingResult {
    pub scores: ScoreVector,
    pub iterations: usize,
    /// `||X_{k+1} - X_k||` per iteration.
    pub step_norms: Vec<f64>,
}

/// Fixed point of `X <- beta N X + (1 - beta) S`, `N = D^{-1/2} A D^{-1/2}`,
/// iterated until the step is below `spread_tol` relative to `||X||`.
pub fn label_spreading(g: &SparseGraph, s: &OracleLabels, cfg: &BaselineConfig) -> Result<SpreadingResult> {
    cfg.validate()?;
    let n = g.n();
    if s.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: s.len(),
        });
    }
    if s.labeled_count() == 0 {
        return Ok(SpreadingResult {
            scores: ScoreVector::from_scores(vec![0.0; n]),
            iterations: 0,
            step_norms: Vec::new(),
        });
    }
    let n_op = NormalizedAdjacency::new(g);
    let anchor: Vec<f64> = s.to_f64().iter().map(|v| (1.0 - cfg.beta) * v).collect();
    let mut x = anchor.clone();
    let mut next = vec![0.0; n];
    let mut step_norms = Vec::new();
    for it in 1..=cfg.spread_max_iter {
        n_op.apply(&x, &mut next);
        for (ni, ai) in next.iter_mut().zip(&anchor) {
            *ni = cfg.beta * *ni + ai;
        }
        let step = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        step_norms.push(step);
        std::mem::swap(&mut x, &mut next);
        if step <= cfg.spread_tol * norm2(&x) {
            return Ok(SpreadingResult {
                scores: ScoreVector::from_scores(x),
                iterations: it,
                step_norms,
            });
        }
    }
    Err(Error::NotConverged {
        what: "label spreading",
        iterations: cfg.spread_max_iter,
    })
}

/// Runs either baseline and returns its scores.
pub fn run_baseline(
    method: Baseline,
    g: &SparseGraph,
    s: &OracleLabels,
    cfg: &BaselineConfig,
) -> Result<ScoreVector> {
    match method {
        Baseline::Spectral => spectral_clustering(g, cfg).map(|r| r.scores),
        Baseline::LabelSpreading => label_spreading(g, s, cfg).map(|r| r.scores),
    }
}
