//! Mean-field analysis of the regularized system: the closed-form solution on
//! the expected graph, when it classifies correctly, the rank-two spectrum of
//! `E L~ = alpha_MF I - E A_tau + lambda P_L`, and the concentration and
//! misclassification bounds built on its smallest eigenvalue.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{GroundTruth, ModelParams, SparseGraph};
use crate::linalg::norm2;
use crate::oracle::{error_rate, OracleLabels};
use crate::ssl::{solve_noisy, tau_of, AlphaPolicy, SolverOptions, SslParams};

/// Per-class values of the mean-field solution, as multiples of `sigma0_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldSolution {
    /// Wrongly labeled nodes.
    pub gamma1: f64,
    /// Correctly labeled nodes.
    pub gamma2: f64,
    /// Unlabeled nodes.
    pub delta: f64,
    pub alpha_mf: f64,
    /// Oracle error rate `theta / (eta + theta)`.
    pub s: f64,
}

fn require_even(n: usize) -> Result<()> {
    if n % 2 != 0 {
        return Err(Error::invalid(format!(
            "mean-field formulas need even n, got {n}"
        )));
    }
    Ok(())
}

/// Closed-form mean-field solution for `lambda > 0` (`lambda = inf` gives the
/// clamped limit `gamma1 = -1`, `gamma2 = 1`).
pub fn meanfield_solution(model: &ModelParams, lambda: f64) -> Result<MeanFieldSolution> {
    require_even(model.n)?;
    if lambda == 0.0 {
        return Err(Error::invalid(
            "lambda = 0: the mean-field solution is only defined up to scale (X_MF ~ sigma0, \
             the spectral clustering direction)",
        ));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be > 0, got {lambda}")));
    }
    let s = error_rate(model.eta, model.theta)?;
    let alpha = model.alpha_mf();
    let contrast = 1.0 - 2.0 * s;
    let (gamma1, gamma2) = if lambda.is_infinite() {
        (-1.0, 1.0)
    } else {
        (
            (-lambda + contrast * alpha) / (lambda + alpha),
            (lambda + contrast * alpha) / (lambda + alpha),
        )
    };
    Ok(MeanFieldSolution {
        gamma1,
        gamma2,
        delta: contrast,
        alpha_mf: alpha,
        s,
    })
}

/// Which node classes the mean-field solution labels with the right sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassificationReport {
    pub unlabeled_ok: bool,
    pub correct_labeled_ok: bool,
    pub wrong_labeled_ok: bool,
}

pub fn classification_conditions(model: &ModelParams, lambda: f64) -> Result<ClassificationReport> {
    let sol = meanfield_solution(model, lambda)?;
    let contrast = 1.0 - 2.0 * sol.s;
    Ok(ClassificationReport {
        unlabeled_ok: sol.delta > 0.0,
        correct_labeled_ok: lambda + contrast * sol.alpha_mf > 0.0,
        // Compared directly so the boundary lambda = (1-2s) alpha_MF is exact.
        wrong_labeled_ok: lambda < contrast * sol.alpha_mf,
    })
}

/// Closed-form spectrum of `E L~`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub t1_plus: f64,
    pub t1_minus: f64,
    pub t2_plus: f64,
    pub t2_minus: f64,
    pub alpha_mf: f64,
    /// Labeled count used for the multiplicities, `round((eta + theta) n)`.
    pub labeled_count: usize,
    /// Distinct eigenvalues ascending, with multiplicities summing to `n`.
    pub eigenvalues: Vec<(f64, usize)>,
}

impl Spectrum {
    /// Eigenvalues with repetition, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .flat_map(|&(v, k)| std::iter::repeat_n(v, k))
            .collect()
    }

    pub fn min_abs(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&(v, _)| v.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Roots `t^{+-}` of `t (t + lambda) - c (t + lambda (1 - m/n))`.
fn quadratic_roots(c: f64, lambda: f64, frac: f64) -> (f64, f64) {
    let disc = (lambda + c).powi(2) - 4.0 * c * lambda * frac;
    debug_assert!(disc >= -1e-12 * (lambda + c.abs()).powi(2));
    let root = disc.max(0.0).sqrt();
    (0.5 * (c - lambda + root), 0.5 * (c - lambda - root))
}

/// Closed-form spectrum of `E L~` with `alpha = alpha_MF`.
///
/// The all-ones block direction of `E A_tau` has eigenvalue `d - n tau`
/// (not `d`), so the `t1` pair is evaluated with that value; the `t2` pair
/// uses `alpha_MF`. Multiplicities come from the factorization
/// `t^{n-m-2} (t + lambda)^{m-2} (t - t1+)(t - t1-)(t - t2+)(t - t2-)`,
/// with coinciding roots merged (which absorbs negative exponents at
/// `m = 0` or `m = n`).
pub fn mf_spectrum(model: &ModelParams, lambda: f64, tau: f64) -> Result<Spectrum> {
    require_even(model.n)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let n = model.n;
    let frac = model.labeled_fraction();
    let alpha = model.alpha_mf();
    let ones_eig = model.avg_degree() - n as f64 * tau;
    let (t1_plus, t1_minus) = quadratic_roots(ones_eig, lambda, frac);
    let (t2_plus, t2_minus) = quadratic_roots(alpha, lambda, frac);

    let m = (frac * n as f64).round() as i64;
    let roots: [(f64, i64); 6] = [
        (0.0, n as i64 - m - 2),
        (-lambda, m - 2),
        (t1_plus, 1),
        (t1_minus, 1),
        (t2_plus, 1),
        (t2_minus, 1),
    ];
    let scale = alpha.abs().max(ones_eig.abs()).max(lambda).max(1.0);
    let mut merged: Vec<(f64, i64)> = Vec::new();
    let mut sorted = roots.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, k) in sorted {
        match merged.last_mut() {
            Some((v, c)) if (*v - t).abs() <= 1e-9 * scale => *c += k,
            _ => merged.push((t, k)),
        }
    }
    let mut eigenvalues = Vec::new();
    for (t, k) in merged {
        if k < 0 {
            return Err(Error::invalid(format!(
                "inconsistent multiplicity {k} for root {t}"
            )));
        }
        if k > 0 {
            eigenvalues.push((alpha - t, k as usize));
        }
    }
    eigenvalues.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Spectrum {
        t1_plus,
        t1_minus,
        t2_plus,
        t2_minus,
        alpha_mf: alpha,
        labeled_count: m as usize,
        eigenvalues,
    })
}

/// `1 - sqrt(1 - x)` without cancellation for small `x`.
fn one_minus_sqrt_one_minus(x: f64) -> f64 {
    x / (1.0 + (1.0 - x).max(0.0).sqrt())
}

fn bound_ratio(model: &ModelParams, lambda: f64) -> f64 {
    let alpha = model.alpha_mf();
    4.0 * model.labeled_fraction() * lambda * alpha / (lambda + alpha).powi(2)
}

/// `alpha_MF - t2+ = (alpha_MF + lambda)/2 (1 - sqrt(1 - 4 (theta+eta) lambda alpha_MF / (lambda + alpha_MF)^2))`,
/// the smallest eigenvalue of `E L~`.
pub fn spectral_gap(model: &ModelParams, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let alpha = model.alpha_mf();
    0.5 * (alpha + lambda) * one_minus_sqrt_one_minus(bound_ratio(model, lambda))
}

fn require_constant(c: f64) -> Result<()> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid(format!("bound constant C must be positive, got {c}")));
    }
    Ok(())
}

/// `C / (1 - sqrt(1 - 4 (theta+eta) lambda alpha_MF / (lambda + alpha_MF)^2)) * sqrt(d) / (alpha_MF + lambda)`,
/// `+inf` when `lambda = 0` or nothing is labeled.
pub fn concentration_bound(model: &ModelParams, lambda: f64, c: f64) -> Result<f64> {
    require_constant(c)?;
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 || model.labeled_fraction() == 0.0 {
        return Ok(f64::INFINITY);
    }
    let d = model.avg_degree();
    if lambda.is_infinite() {
        return Ok(0.0);
    }
    let denom = one_minus_sqrt_one_minus(bound_ratio(model, lambda));
    Ok(c / denom * d.sqrt() / (model.alpha_mf() + lambda))
}

/// `C * (concentration bound with C = 1)^2`, unclipped.
pub fn misclassification_bound(model: &ModelParams, lambda: f64, c: f64) -> Result<f64> {
    require_constant(c)?;
    let bracket = concentration_bound(model, lambda, 1.0)?;
    Ok(c * bracket * bracket)
}

/// Clips a bound on a fraction of nodes to `[0, 1]` for reporting.
pub fn clip_fraction(bound: f64) -> f64 {
    bound.clamp(0.0, 1.0)
}

/// Accurate-oracle form `C ((p_in + p_out)/(p_in - p_out))^2 / ((theta + eta)^2 d)`.
///
/// As `lambda / alpha_MF -> inf`, `misclassification_bound(model, lambda, C)`
/// tends to `accurate_oracle_bound(model, C / 4)`: the factor 4 is absorbed
/// into the unspecified constant.
pub fn accurate_oracle_bound(model: &ModelParams, c: f64) -> Result<f64> {
    require_constant(c)?;
    let f = model.labeled_fraction();
    if f == 0.0 || !(model.p_in > model.p_out) {
        return Ok(f64::INFINITY);
    }
    let ratio = (model.p_in + model.p_out) / (model.p_in - model.p_out);
    Ok(c * ratio * ratio / (f * f * model.avg_degree()))
}

/// `(c_in - c_out)^2 / (c_in + c_out)`.
pub fn snr(c_in: f64, c_out: f64) -> Result<f64> {
    if !(c_out > 0.0 && c_in >= c_out) {
        return Err(Error::invalid(format!(
            "snr needs c_in >= c_out > 0, got c_in = {c_in}, c_out = {c_out}"
        )));
    }
    Ok((c_in - c_out).powi(2) / (c_in + c_out))
}

/// Expected adjacency `Z B Z^T` of a balanced SBM as a complete weighted graph,
/// diagonal (`p_in`) included.
pub fn expected_graph(n: usize, p_in: f64, p_out: f64) -> Result<SparseGraph> {
    require_even(n)?;
    let half = n / 2;
    let edges = (0..n).flat_map(|i| {
        (i..n).filter_map(move |j| {
            let w = if (i < half) == (j < half) { p_in } else { p_out };
            (w > 0.0).then_some((i, j, w))
        })
    });
    SparseGraph::from_edges(n, edges)
}

/// Balanced ground truth with a deterministic oracle: in each cluster the
/// first `theta n / 2` nodes are labeled wrong and the next `eta n / 2`
/// right. Both counts must be whole.
pub fn balanced_oracle(n: usize, eta: f64, theta: f64) -> Result<(GroundTruth, OracleLabels)> {
    require_even(n)?;
    let per_cluster = |p: f64| -> Result<usize> {
        let k = p * n as f64 / 2.0;
        if (k - k.round()).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "p n / 2 = {k} is not an integer; choose eta, theta so labels split evenly"
            )));
        }
        Ok(k.round() as usize)
    };
    let (wrong, right) = (per_cluster(theta)?, per_cluster(eta)?);
    if wrong + right > n / 2 {
        return Err(Error::invalid("eta + theta exceeds 1"));
    }
    let truth = GroundTruth::balanced(n);
    let half = n / 2;
    let s = (0..n)
        .map(|i| {
            let pos = i % half;
            let t = truth.get(i);
            if pos < wrong {
                -t
            } else if pos < wrong + right {
                t
            } else {
                0
            }
        })
        .collect();
    Ok((truth, OracleLabels::new(s)?))
}

/// Mean-field vector placed node by node from the realized oracle outcome.
pub fn meanfield_vector(
    sol: &MeanFieldSolution,
    truth: &GroundTruth,
    s: &OracleLabels,
) -> Result<Vec<f64>> {
    if truth.len() != s.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: s.len(),
        });
    }
    Ok((0..truth.len())
        .map(|i| {
            let t = f64::from(truth.get(i));
            match s.get(i) {
                0 => sol.delta * t,
                v if v == truth.get(i) => sol.gamma2 * t,
                _ => sol.gamma1 * t,
            }
        })
        .collect())
}

/// Dense `alpha_MF I - E A_tau + lambda P_L` for a balanced model.
pub fn expected_l_tilde(model: &ModelParams, lambda: f64, tau: f64, s: &OracleLabels) -> Result<DMatrix<f64>> {
    require_even(model.n)?;
    let n = model.n;
    if s.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: s.len(),
        });
    }
    let half = n / 2;
    let alpha = model.alpha_mf();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let p = if (i < half) == (j < half) { model.p_in } else { model.p_out };
        let mut v = -(p - tau);
        if i == j {
            v += alpha + if s.is_labeled(i) { lambda } else { 0.0 };
        }
        v
    }))
}

/// `||X - X_MF|| / ||X_MF||` for the noisy solve on `g` (with
/// `alpha = ||A_tau||_2` and `tau` from the model), after rescaling `X` to the
/// norm of `X_MF`.
pub fn empirical_concentration(
    g: &SparseGraph,
    s: &OracleLabels,
    truth: &GroundTruth,
    model: &ModelParams,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    if model.labeled_fraction() == 0.0 {
        return Err(Error::UndefinedErrorRate);
    }
    if g.n() != model.n || truth.len() != model.n {
        return Err(Error::DimensionMismatch {
            expected: model.n,
            actual: g.n(),
        });
    }
    let sol = meanfield_solution(model, lambda)?;
    let target = meanfield_vector(&sol, truth, s)?;
    let params = SslParams::new(tau_of(model.p_in, model.p_out)?, lambda, AlphaPolicy::SpectralNorm)?;
    let x = solve_noisy(g, s, &params, opts)?.scores.x;
    let (nx, nt) = (norm2(&x), norm2(&target));
    if nx == 0.0 {
        return Ok(1.0);
    }
    let scale = nt / nx;
    let diff: f64 = x
        .iter()
        .zip(&target)
        .map(|(a, b)| (a * scale - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(diff / nt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(n: usize, p_in: f64, p_out: f64, eta: f64, theta: f64) -> ModelParams {
        ModelParams::new(n, p_in, p_out, eta, theta).unwrap()
    }

    #[test]
    fn perfect_labels_solution() {
        let m = model(200, 0.2, 0.1, 0.1, 0.0);
        let sol = meanfield_solution(&m, 3.0).unwrap();
        let a = m.alpha_mf();
        assert_eq!(sol.delta, 1.0);
        assert!((sol.gamma2 - 1.0).abs() < 1e-15);
        assert!((sol.gamma1 - (a - 3.0) / (a + 3.0)).abs() < 1e-15);
    }

    #[test]
    fn reference_solution_values() {
        let m = model(1500, 0.03, 0.02, 0.09, 0.01);
        let sol = meanfield_solution(&m, 5.285).unwrap();
        assert!((sol.delta - 0.8).abs() < 1e-12);
        assert!((sol.gamma1 - 0.05592491200625732).abs() < 1e-12, "{}", sol.gamma1);
        assert!((sol.gamma2 - 0.8826750097770826).abs() < 1e-12, "{}", sol.gamma2);
    }

    #[test]
    fn clamped_limit() {
        let m = model(100, 0.3, 0.1, 0.2, 0.05);
        let sol = meanfield_solution(&m, 1e12).unwrap();
        assert!((sol.gamma1 + 1.0).abs() < 1e-9);
        assert!((sol.gamma2 - 1.0).abs() < 1e-9);
        let inf = meanfield_solution(&m, f64::INFINITY).unwrap();
        assert_eq!((inf.gamma1, inf.gamma2), (-1.0, 1.0));
        assert!(meanfield_solution(&m, 0.0).is_err());
        assert!(meanfield_solution(&model(101, 0.3, 0.1, 0.2, 0.05), 1.0).is_err());
    }

    #[test]
    fn classification_boundaries() {
        let m = model(200, 0.2, 0.1, 0.08, 0.02);
        let contrast = 1.0 - 2.0 * m.error_rate().unwrap();
        let boundary = contrast * m.alpha_mf();
        let at = classification_conditions(&m, boundary).unwrap();
        assert!(at.unlabeled_ok && at.correct_labeled_ok && !at.wrong_labeled_ok);
        let below = classification_conditions(&m, 0.5 * boundary).unwrap();
        assert!(below.wrong_labeled_ok);

        let bad = model(200, 0.2, 0.1, 0.02, 0.08);
        let r = classification_conditions(&bad, 1.0).unwrap();
        assert!(!r.unlabeled_ok && !r.wrong_labeled_ok);
        // Correctly labeled survive only when lambda > (2s - 1) alpha_MF.
        let threshold = (2.0 * 0.8 - 1.0) * bad.alpha_mf();
        assert!(!classification_conditions(&bad, 0.5 * threshold).unwrap().correct_labeled_ok);
        assert!(classification_conditions(&bad, 2.0 * threshold).unwrap().correct_labeled_ok);
    }

    #[test]
    fn spectrum_lambda_zero_is_singular() {
        let m = model(100, 0.3, 0.1, 0.1, 0.1);
        let tau = tau_of(0.3, 0.1).unwrap();
        let sp = mf_spectrum(&m, 0.0, tau).unwrap();
        assert!((sp.t2_plus - m.alpha_mf()).abs() < 1e-12);
        assert!(sp.min_abs() < 1e-12);
        assert_eq!(sp.expanded().len(), 100);
    }

    #[test]
    fn spectrum_all_labeled() {
        let m = model(100, 0.3, 0.1, 0.9, 0.1);
        let lambda = 2.0;
        let sp = mf_spectrum(&m, lambda, 0.2).unwrap();
        let a = m.alpha_mf();
        assert!((sp.t2_plus - (a - lambda)).abs() < 1e-12);
        assert!(sp.t2_minus.abs() < 1e-12);
        assert_eq!(sp.expanded().len(), 100);
    }

    #[test]
    fn gap_values() {
        let m = model(100, 0.3, 0.1, 0.1, 0.1);
        assert_eq!(spectral_gap(&m, 0.0), 0.0);
        let full = model(100, 0.3, 0.1, 0.9, 0.1);
        let a = full.alpha_mf();
        assert!((spectral_gap(&full, a) - a).abs() < 1e-12);
        let mut prev = 0.0;
        for f in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let g = spectral_gap(&model(100, 0.3, 0.1, f, 0.0), 3.0);
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn gap_is_smallest_eigenvalue() {
        let tau = tau_of(0.2, 0.1).unwrap();
        for (eta, theta, lambda) in [(0.08, 0.02, 1.7), (0.3, 0.1, 0.5), (0.5, 0.0, 20.0)] {
            let m = model(200, 0.2, 0.1, eta, theta);
            let sp = mf_spectrum(&m, lambda, tau).unwrap();
            assert!((spectral_gap(&m, lambda) - sp.min_abs()).abs() < 1e-10);
        }
    }

    #[test]
    fn concentration_bound_limits() {
        let m = model(1000, 0.05, 0.01, 0.09, 0.01);
        assert!(concentration_bound(&m, 1.0, 1.0).unwrap().is_finite());
        let silent = model(1000, 0.05, 0.01, 0.0, 0.0);
        assert!(concentration_bound(&silent, 1.0, 1.0).unwrap().is_infinite());
        assert!(concentration_bound(&m, 0.0, 1.0).unwrap().is_infinite());
        assert!(concentration_bound(&m, 1.0, 0.0).is_err());

        let d = m.avg_degree();
        // The bracket tends to sqrt(d) / (2 (theta + eta) alpha_MF), not to 0.
        let lambda = 1e7;
        let limit = d.sqrt() / (2.0 * 0.1 * m.alpha_mf());
        let b = concentration_bound(&m, lambda, 1.0).unwrap();
        assert!((b / limit - 1.0).abs() < 1e-4);
    }

    #[test]
    fn concentration_bound_homogeneity() {
        // Doubling lambda and alpha_MF at fixed d and labeled fraction halves it.
        let a = model(1000, 0.03, 0.01, 0.2, 0.0);
        let b = model(1000, 0.035, 0.005, 0.2, 0.0);
        assert!((a.avg_degree() - b.avg_degree()).abs() < 1e-12);
        assert!((b.alpha_mf() - 1.5 * a.alpha_mf()).abs() < 1e-12);
        let ba = concentration_bound(&a, 4.0, 1.0).unwrap();
        let bb = concentration_bound(&b, 6.0, 1.0).unwrap();
        assert!((bb / ba - 1.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn misclassification_is_squared_bracket() {
        let m = model(1000, 0.05, 0.01, 0.09, 0.01);
        let c = concentration_bound(&m, 3.0, 1.0).unwrap();
        let mb = misclassification_bound(&m, 3.0, 7.0).unwrap();
        assert!((mb - 7.0 * c * c).abs() < 1e-12 * mb);
        assert_eq!(clip_fraction(mb.max(2.0)), 1.0);
    }

    #[test]
    fn misclassification_decreases_with_degree() {
        let mut prev = f64::INFINITY;
        for n in [1000, 2000, 4000, 8000] {
            let p = 5.0 * (n as f64).ln() / n as f64;
            let m = model(n, 1.5 * p, 0.5 * p, 0.2, 0.0);
            let b = misclassification_bound(&m, 1e9, 1.0).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn snr_values() {
        assert!((snr(4.0, 1.0).unwrap() - 1.8).abs() < 1e-15);
        assert_eq!(snr(2.0, 2.0).unwrap(), 0.0);
        assert!((snr(12.0, 3.0).unwrap() - 3.0 * 1.8).abs() < 1e-12);
        assert!(snr(1.0, 4.0).is_err());
    }

    #[test]
    fn balanced_oracle_layout() {
        let (truth, s) = balanced_oracle(20, 0.2, 0.1).unwrap();
        assert_eq!(s.labeled_count(), 6);
        assert_eq!(s.realized_error_rate(&truth), Some(1.0 / 3.0));
        assert_eq!(&s.as_slice()[..4], &[-1, 1, 1, 0]);
        assert_eq!(&s.as_slice()[10..14], &[1, -1, -1, 0]);
        assert!(balanced_oracle(20, 0.15, 0.0).is_err());
    }
}
