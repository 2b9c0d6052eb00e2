//! MAP-derived parameters and the regularized-adjacency classifier: solve
//! `(alpha I - A_tau + lambda P_L) X = lambda S` (noisy oracle) or its clamped
//! form on the unlabeled block (perfect oracle), then label by sign.

use crate::error::{Error, Result};
use crate::graph::{ModelParams, SparseGraph};
use crate::linalg::{
    dot, norm2, solve_spd, spectral_norm, MaskedOperator, RegularizedOperator, SolveReport,
    SpectralNormEstimate, CG_TOL, SPECTRAL_TOL,
};
use crate::oracle::OracleLabels;

fn check_assortative(p_in: f64, p_out: f64) -> Result<()> {
    if !(0.0 < p_out && p_out < p_in && p_in < 1.0) {
        return Err(Error::invalid(format!(
            "need 0 < p_out < p_in < 1, got p_in = {p_in}, p_out = {p_out}"
        )));
    }
    Ok(())
}

fn log_odds_ratio(p_in: f64, p_out: f64) -> f64 {
    ((p_in * (1.0 - p_out)) / (p_out * (1.0 - p_in))).ln()
}

/// Size-balance weight `log((1-p_out)/(1-p_in)) / log(p_in(1-p_out) / (p_out(1-p_in)))`.
pub fn tau_of(p_in: f64, p_out: f64) -> Result<f64> {
    check_assortative(p_in, p_out)?;
    Ok(((1.0 - p_out) / (1.0 - p_in)).ln() / log_odds_ratio(p_in, p_out))
}

/// Oracle weight `log(eta/theta) / log(p_in(1-p_out) / (p_out(1-p_in)))`.
///
/// Returns `f64::INFINITY` for a perfect oracle (`theta = 0 < eta`) and 0 for
/// an uninformative one (`eta = theta`, including the unsupervised case).
pub fn lambda_of(eta: f64, theta: f64, p_in: f64, p_out: f64) -> Result<f64> {
    check_assortative(p_in, p_out)?;
    if eta < 0.0 || theta < 0.0 {
        return Err(Error::invalid("oracle probabilities must be non-negative"));
    }
    if eta < theta {
        return Err(Error::invalid(format!(
            "oracle is worse than random (eta = {eta} < theta = {theta})"
        )));
    }
    if eta == theta {
        return Ok(0.0);
    }
    if theta == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((eta / theta).ln() / log_odds_ratio(p_in, p_out))
}

/// How the shift `alpha` of the linear system is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPolicy {
    /// `||A_tau||_2`, estimated by power iteration.
    SpectralNorm,
    /// `n (p_in - p_out) / 2`.
    MeanField { p_in: f64, p_out: f64 },
    Explicit(f64),
}

impl AlphaPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            AlphaPolicy::SpectralNorm => "spectral-norm",
            AlphaPolicy::MeanField { .. } => "mean-field",
            AlphaPolicy::Explicit(_) => "explicit",
        }
    }

    /// The numeric `alpha` for graph `g`, plus the power-iteration estimate
    /// when one was run.
    pub fn resolve(
        &self,
        g: &SparseGraph,
        tau: f64,
        opts: &SolverOptions,
    ) -> Result<(f64, Option<SpectralNormEstimate>)> {
        match *self {
            AlphaPolicy::SpectralNorm => {
                let op = RegularizedOperator::neg_a_tau(g, tau);
                let est = spectral_norm(
                    &op,
                    opts.spectral_tol,
                    opts.spectral_max_iter.unwrap_or(10 * g.n().max(10)),
                    opts.seed,
                )?;
                if !est.converged {
                    log::warn!(
                        "spectral norm did not converge in {} iterations; using {}",
                        est.iterations,
                        est.value
                    );
                }
                Ok((est.value, Some(est)))
            }
            AlphaPolicy::MeanField { p_in, p_out } => {
                let alpha = g.n() as f64 * (p_in - p_out) / 2.0;
                if !(alpha > 0.0) {
                    return Err(Error::invalid("mean-field alpha needs p_in > p_out"));
                }
                Ok((alpha, None))
            }
            AlphaPolicy::Explicit(alpha) => {
                if !(alpha > 0.0) {
                    return Err(Error::invalid(format!("explicit alpha must be > 0, got {alpha}")));
                }
                Ok((alpha, None))
            }
        }
    }
}

/// `tau`, `lambda` (possibly infinite) and the `alpha` policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslParams {
    pub tau: f64,
    pub lambda: f64,
    pub alpha: AlphaPolicy,
}

impl SslParams {
    pub fn new(tau: f64, lambda: f64, alpha: AlphaPolicy) -> Result<Self> {
        if !tau.is_finite() {
            return Err(Error::invalid("tau must be finite"));
        }
        if !(lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        if let AlphaPolicy::Explicit(a) = alpha {
            if !(a > 0.0) {
                return Err(Error::invalid(format!("explicit alpha must be > 0, got {a}")));
            }
        }
        Ok(SslParams { tau, lambda, alpha })
    }

    /// `tau` and `lambda` from the model, `alpha = ||A_tau||_2`.
    pub fn from_model(model: &ModelParams) -> Result<Self> {
        Self::new(
            tau_of(model.p_in, model.p_out)?,
            lambda_of(model.eta, model.theta, model.p_in, model.p_out)?,
            AlphaPolicy::SpectralNorm,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub cg_tol: f64,
    /// Defaults to `10 n`.
    pub max_iter: Option<usize>,
    pub spectral_tol: f64,
    /// Defaults to `10 n`.
    pub spectral_max_iter: Option<usize>,
    /// Seeds the power-iteration start vector.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            cg_tol: CG_TOL,
            max_iter: None,
            spectral_tol: SPECTRAL_TOL,
            spectral_max_iter: None,
            seed: 0x5eed,
        }
    }
}

impl SolverOptions {
    fn cg_max_iter(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(10 * n.max(10))
    }
}

/// Real scores and their sign labels; `x_i > 0` gives +1, anything else -1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub x: Vec<f64>,
    pub labels: Vec<i8>,
}

impl ScoreVector {
    pub fn from_scores(x: Vec<f64>) -> Self {
        let labels = x.iter().map(|&v| if v > 0.0 { 1 } else { -1 }).collect();
        ScoreVector { x, labels }
    }

    /// Positive factor mapping `x` onto the sphere `||x|| = sqrt(n)`; `None`
    /// for the zero vector.
    pub fn normalization_factor(&self) -> Option<f64> {
        let nx = norm2(&self.x);
        (nx > 0.0).then(|| (self.x.len() as f64).sqrt() / nx)
    }
}

/// Scores, solver report and the `alpha` that was used.
#[derive(Debug, Clone, PartialEq)]
pub struct SslSolution {
    pub scores: ScoreVector,
    pub report: SolveReport,
    pub alpha: f64,
    pub spectral: Option<SpectralNormEstimate>,
}

/// `x^T A_tau x = x^T A x - tau (1^T x)^2`.
pub fn a_tau_quadratic(g: &SparseGraph, tau: f64, x: &[f64]) -> f64 {
    let sum: f64 = x.iter().sum();
    g.quadratic_form(x) - tau * sum * sum
}

/// `-x^T A_tau x + lambda ||S - P_L x||^2`. With `lambda = inf` the penalty
/// becomes the constraint `x_l = S_l` (infinite when violated). When
/// `check_norm` is set, `||x|| = sqrt(n)` must hold to `1e-6`.
pub fn relaxation_objective(
    g: &SparseGraph,
    x: &[f64],
    s: &OracleLabels,
    params: &SslParams,
    check_norm: bool,
) -> Result<f64> {
    let n = g.n();
    for len in [x.len(), s.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    if check_norm {
        let target = (n as f64).sqrt();
        if (norm2(x) - target).abs() > 1e-6 * target.max(1.0) {
            return Err(Error::invalid(format!(
                "||x|| = {} violates the sqrt(n) = {target} constraint",
                norm2(x)
            )));
        }
    }
    let energy = -a_tau_quadratic(g, params.tau, x);
    if params.lambda == 0.0 {
        return Ok(energy);
    }
    let mismatch: f64 = s
        .labeled()
        .iter()
        .map(|&i| (f64::from(s.get(i)) - x[i]).powi(2))
        .sum();
    if params.lambda.is_infinite() {
        return Ok(if mismatch == 0.0 { energy } else { f64::INFINITY });
    }
    Ok(energy + params.lambda * mismatch)
}

/// Noisy-oracle solve of `(alpha I - A_tau + lambda P_L) X = lambda S`.
///
/// The returned `x` is the raw solution; its sign pattern is what the
/// `||x|| = sqrt(n)` normalization would give, and the scale factor is
/// available from [`ScoreVector::normalization_factor`].
pub fn solve_noisy(
    g: &SparseGraph,
    s: &OracleLabels,
    params: &SslParams,
    opts: &SolverOptions,
) -> Result<SslSolution> {
    if s.len() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: g.n(),
            actual: s.len(),
        });
    }
    if params.lambda == 0.0 {
        return Err(Error::ZeroLambda);
    }
    if !params.lambda.is_finite() || params.lambda < 0.0 {
        return Err(Error::invalid(format!(
            "noisy solve needs finite lambda > 0, got {}; use solve_perfect for lambda = inf",
            params.lambda
        )));
    }
    let (alpha, spectral) = params.alpha.resolve(g, params.tau, opts)?;
    let op = RegularizedOperator::new(g, alpha, params.tau, params.lambda, Some(s.mask()))?;
    let rhs: Vec<f64> = s.to_f64().iter().map(|v| params.lambda * v).collect();
    let (x, report) = solve_spd(&op, &rhs, opts.cg_tol, opts.cg_max_iter(g.n()))?;
    Ok(SslSolution {
        scores: ScoreVector::from_scores(x),
        report,
        alpha,
        spectral,
    })
}

/// Perfect-oracle solve: `X_l = S_l` and
/// `(alpha I - A_tau)_uu X_u = (A_tau)_ul S_l` on the unlabeled block.
pub fn solve_perfect(
    g: &SparseGraph,
    s: &OracleLabels,
    params: &SslParams,
    opts: &SolverOptions,
) -> Result<SslSolution> {
    let n = g.n();
    if s.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: s.len(),
        });
    }
    if s.labeled_count() == 0 {
        return Err(Error::NoLabels("the clamped solve needs at least one labeled node"));
    }
    let (alpha, spectral) = params.alpha.resolve(g, params.tau, opts)?;
    let s_f = s.to_f64();
    if s.labeled_count() == n {
        return Ok(SslSolution {
            scores: ScoreVector::from_scores(s_f),
            report: SolveReport {
                iterations: 0,
                residual: 0.0,
                relative_residual: 0.0,
                converged: true,
            },
            alpha,
            spectral,
        });
    }
    let keep: Vec<f64> = s.mask().iter().map(|m| 1.0 - m).collect();

    // rhs = (A_tau S) restricted to the unlabeled rows.
    let mut rhs = vec![0.0; n];
    g.adjacency_matvec(&s_f, &mut rhs);
    let s_sum: f64 = s_f.iter().sum();
    for (r, k) in rhs.iter_mut().zip(&keep) {
        *r = (*r - params.tau * s_sum) * k;
    }

    let block = MaskedOperator::new(
        RegularizedOperator::new(g, alpha, params.tau, 0.0, None)?,
        keep,
    )?;
    let (mut x, report) = solve_spd(&block, &rhs, opts.cg_tol, opts.cg_max_iter(n))?;
    for &i in s.labeled() {
        x[i] = s_f[i];
    }
    Ok(SslSolution {
        scores: ScoreVector::from_scores(x),
        report,
        alpha,
        spectral,
    })
}

/// Caller-supplied replacements for the model-derived parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overrides {
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: AlphaPolicy,
}

impl Default for Overrides {
    fn default() -> Self {
        Overrides {
            tau: None,
            lambda: None,
            alpha: AlphaPolicy::SpectralNorm,
        }
    }
}

/// Outcome of [`run_algorithm1`] with the parameters actually used.
#[derive(Debug, Clone, PartialEq)]
pub struct Algorithm1Output {
    pub solution: SslSolution,
    pub tau: f64,
    pub lambda: f64,
}

impl Algorithm1Output {
    pub fn scores(&self) -> &ScoreVector {
        &self.solution.scores
    }
}

/// The full classifier: resolve `tau`, `lambda` (model formulas unless
/// overridden) and `alpha`, dispatch to the noisy or clamped solve, label by
/// sign.
pub fn run_algorithm1(
    g: &SparseGraph,
    s: &OracleLabels,
    model: &ModelParams,
    overrides: &Overrides,
    opts: &SolverOptions,
) -> Result<Algorithm1Output> {
    let tau = match overrides.tau {
        Some(t) => t,
        None => tau_of(model.p_in, model.p_out)?,
    };
    let lambda = match overrides.lambda {
        Some(l) => l,
        None => lambda_of(model.eta, model.theta, model.p_in, model.p_out)?,
    };
    let params = SslParams::new(tau, lambda, overrides.alpha)?;
    let solution = if lambda.is_infinite() {
        solve_perfect(g, s, &params, opts)?
    } else {
        solve_noisy(g, s, &params, opts)?
    };
    Ok(Algorithm1Output {
        solution,
        tau,
        lambda,
    })
}

/// `<x, y> / (||x|| ||y||)`, handy for comparing score directions.
pub fn cosine(x: &[f64], y: &[f64]) -> f64 {
    dot(x, y) / (norm2(x) * norm2(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent evaluation of tau in the small-p limit regime check:
    /// `tau / p -> (c_in - c_out) / ln(c_in / c_out)`.
    #[test]
    fn tau_small_p_limit() {
        let (c_in, c_out) = (3.0_f64, 1.0_f64);
        let limit = (c_in - c_out) / (c_in / c_out).ln();
        let mut prev_err = f64::INFINITY;
        for p in [1e-2, 1e-3, 1e-4] {
            let err = (tau_of(c_in * p, c_out * p).unwrap() / p - limit).abs();
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err < 1e-3 * limit);
    }

    #[test]
    fn tau_known_values() {
        // mpmath at 30 digits: 0.024671558954413786...
        let t = tau_of(0.03, 0.02).unwrap();
        assert!((t - 0.024671558954413786).abs() < 1e-14, "{t}");
        let t = tau_of(0.2, 0.1).unwrap();
        assert!(0.1 < t && t < 0.2);
        assert!(tau_of(0.02, 0.03).is_err());
        assert!(tau_of(0.02, 0.02).is_err());
    }

    #[test]
    fn lambda_known_values() {
        assert_eq!(lambda_of(0.05, 0.05, 0.3, 0.1).unwrap(), 0.0);
        let l = lambda_of(0.09, 0.01, 0.03, 0.02).unwrap();
        // mpmath: 5.2853268475784550...
        assert!((l - 5.285326847578455).abs() < 1e-12, "{l}");
        assert!(lambda_of(0.1, 0.0, 0.3, 0.1).unwrap().is_infinite());
        assert!(lambda_of(0.01, 0.1, 0.3, 0.1).is_err());
    }

    #[test]
    fn sign_rule_ties_to_minus_one() {
        let s = ScoreVector::from_scores(vec![0.5, 0.0, -1e-300, 1e-300]);
        assert_eq!(s.labels, vec![1, -1, -1, 1]);
    }

    #[test]
    fn zero_oracle_gives_zero_scores() {
        let g = SparseGraph::from_unit_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let s = OracleLabels::empty(4);
        let params = SslParams::new(0.1, 2.0, AlphaPolicy::SpectralNorm).unwrap();
        let sol = solve_noisy(&g, &s, &params, &SolverOptions::default()).unwrap();
        assert!(sol.scores.x.iter().all(|&v| v == 0.0));
        assert_eq!(sol.scores.normalization_factor(), None);
    }

    #[test]
    fn lambda_zero_is_rejected() {
        let g = SparseGraph::from_unit_edges(2, &[(0, 1)]).unwrap();
        let s = OracleLabels::new(vec![1, 0]).unwrap();
        let params = SslParams::new(0.1, 0.0, AlphaPolicy::SpectralNorm).unwrap();
        assert!(matches!(
            solve_noisy(&g, &s, &params, &SolverOptions::default()),
            Err(Error::ZeroLambda)
        ));
    }

    #[test]
    fn perfect_all_labeled_is_identity() {
        let g = SparseGraph::from_unit_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let s = OracleLabels::new(vec![1, -1, 1]).unwrap();
        let params = SslParams::new(0.1, f64::INFINITY, AlphaPolicy::SpectralNorm).unwrap();
        let sol = solve_perfect(&g, &s, &params, &SolverOptions::default()).unwrap();
        assert_eq!(sol.scores.x, vec![1.0, -1.0, 1.0]);
        assert_eq!(sol.report.iterations, 0);
        let none = OracleLabels::empty(3);
        assert!(matches!(
            solve_perfect(&g, &none, &params, &SolverOptions::default()),
            Err(Error::NoLabels(_))
        ));
    }

    #[test]
    fn pendant_node_follows_its_clique() {
        // Triangle {0,1,2} labeled +1, node 3 unlabeled and attached to 0.
        let g = SparseGraph::from_unit_edges(4, &[(0, 1), (0, 2), (1, 2), (0, 3)]).unwrap();
        let s = OracleLabels::new(vec![1, 1, 1, 0]).unwrap();
        let tau = 0.1;
        let params = SslParams::new(tau, f64::INFINITY, AlphaPolicy::Explicit(3.0)).unwrap();
        let sol = solve_perfect(&g, &s, &params, &SolverOptions::default()).unwrap();
        // 1-D system: (alpha + tau) x_3 = (1 - tau) - 2 tau.
        let expected = (1.0 - 3.0 * tau) / (3.0 + tau);
        assert!((sol.scores.x[3] - expected).abs() < 1e-12);
        assert_eq!(sol.scores.labels[3], 1);
    }

    #[test]
    fn relaxation_objective_special_cases() {
        let g = SparseGraph::from_unit_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let s = OracleLabels::new(vec![1, 0, 0, -1]).unwrap();
        let x = [1.0, 1.0, -1.0, -1.0];
        let p0 = SslParams::new(0.2, 0.0, AlphaPolicy::SpectralNorm).unwrap();
        let v0 = relaxation_objective(&g, &x, &s, &p0, true).unwrap();
        assert!((v0 + a_tau_quadratic(&g, 0.2, &x)).abs() < 1e-15);
        assert!((v0 - -4.0).abs() < 1e-12);
        assert!(relaxation_objective(&g, &[0.0; 4], &s, &p0, true).is_err());
        let pinf = SslParams::new(0.2, f64::INFINITY, AlphaPolicy::SpectralNorm).unwrap();
        assert_eq!(relaxation_objective(&g, &x, &s, &pinf, true).unwrap(), v0);
        let flipped = [-1.0, 1.0, -1.0, -1.0];
        assert!(relaxation_objective(&g, &flipped, &s, &pinf, true)
            .unwrap()
            .is_infinite());
    }
}
