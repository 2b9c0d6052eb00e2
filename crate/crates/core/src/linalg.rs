//! Matrix-free symmetric operators, power-iteration spectral norm, conjugate
//! gradients, and a dense symmetric eigensolver used as a validation oracle.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// Default relative tolerance of [`spectral_norm`].
pub const SPECTRAL_TOL: f64 = 1e-6;
/// Default relative residual tolerance of [`solve_spd`].
pub const CG_TOL: f64 = 1e-8;

/// A real symmetric linear map on `R^dim`.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    /// `y = M x`; `y` is fully overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl<T: SymmetricOperator + ?Sized> SymmetricOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

/// The adjacency matrix itself.
impl SymmetricOperator for SparseGraph {
    fn dim(&self) -> usize {
        self.n()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.adjacency_matvec(x, y)
    }
}

/// Dense wrapper, mostly for tests and small validation problems.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub DMatrix<f64>);

impl SymmetricOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let m = &self.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = m.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// `alpha I - A + tau 1 1^T + lambda P_L`, i.e. `alpha I - A_tau + lambda P_L`,
/// applied in `O(|E| + n)` without forming the rank-one term.
#[derive(Debug, Clone)]
pub struct RegularizedOperator<'a> {
    graph: &'a SparseGraph,
    alpha: f64,
    tau: f64,
    lambda: f64,
    mask: Option<Vec<f64>>,
}

impl<'a> RegularizedOperator<'a> {
    pub fn new(
        graph: &'a SparseGraph,
        alpha: f64,
        tau: f64,
        lambda: f64,
        mask: Option<Vec<f64>>,
    ) -> Result<Self> {
        if let Some(m) = &mask {
            if m.len() != graph.n() {
                return Err(Error::DimensionMismatch {
                    expected: graph.n(),
                    actual: m.len(),
                });
            }
        }
        if lambda < 0.0 {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(RegularizedOperator {
            graph,
            alpha,
            tau,
            lambda,
            mask,
        })
    }

    /// `-A_tau`; its spectral norm is `||A_tau||_2`.
    pub fn neg_a_tau(graph: &'a SparseGraph, tau: f64) -> Self {
        RegularizedOperator {
            graph,
            alpha: 0.0,
            tau,
            lambda: 0.0,
            mask: None,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl SymmetricOperator for RegularizedOperator<'_> {
    fn dim(&self) -> usize {
        self.graph.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.graph.adjacency_matvec(x, y);
        let shift = self.tau * x.iter().sum::<f64>();
        for (i, (yi, &xi)) in y.iter_mut().zip(x).enumerate() {
            let penalty = match &self.mask {
                Some(m) => self.lambda * m[i] * xi,
                None => 0.0,
            };
            *yi = self.alpha * xi - *yi + shift + penalty;
        }
    }
}

/// Principal submatrix on the coordinates where `keep[i] != 0`, embedded in
/// `R^n`: `y = K M K x` with `K = diag(keep)`.
#[derive(Debug, Clone)]
pub struct MaskedOperator<O> {
    inner: O,
    keep: Vec<f64>,
}

impl<O: SymmetricOperator> MaskedOperator<O> {
    pub fn new(inner: O, keep: Vec<f64>) -> Result<Self> {
        if keep.len() != inner.dim() {
            return Err(Error::DimensionMismatch {
                expected: inner.dim(),
                actual: keep.len(),
            });
        }
        Ok(MaskedOperator { inner, keep })
    }
}

impl<O: SymmetricOperator> SymmetricOperator for MaskedOperator<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let masked: Vec<f64> = x.iter().zip(&self.keep).map(|(a, k)| a * k).collect();
        self.inner.apply(&masked, y);
        for (yi, k) in y.iter_mut().zip(&self.keep) {
            *yi *= k;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Result of [`spectral_norm`]. When `converged` is false `value` is the best
/// estimate reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest absolute eigenvalue of a symmetric operator by power iteration on
/// `M^2` from a seeded Gaussian start. Stops when the eigen-residual of `M^2`
/// drops below `tol` relative to its Rayleigh quotient.
pub fn spectral_norm<O: SymmetricOperator + ?Sized>(
    op: &O,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<SpectralNormEstimate> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let n = op.dim();
    if n == 0 {
        return Ok(SpectralNormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut w = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut rho = 0.0;
    for it in 1..=max_iter {
        op.apply(&v, &mut w);
        op.apply(&w, &mut u);
        rho = dot(&w, &w);
        if rho == 0.0 {
            return Ok(SpectralNormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            });
        }
        let residual = u
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - rho * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * rho {
            return Ok(SpectralNormEstimate {
                value: rho.sqrt(),
                iterations: it,
                converged: true,
            });
        }
        let nu = norm2(&u);
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = ui / nu;
        }
    }
    Ok(SpectralNormEstimate {
        value: rho.sqrt(),
        iterations: max_iter,
        converged: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `||M x - b||`, recomputed from scratch at exit.
    pub residual: f64,
    /// `residual / ||b||` (0 when `b = 0`).
    pub relative_residual: f64,
    pub converged: bool,
}

/// Conjugate gradients for `M x = b` from `x = 0`, stopping at
/// `||M x - b|| <= tol ||b||`. A non-positive curvature `p^T M p` aborts with
/// [`Error::IndefiniteOperator`].
pub fn solve_spd<O: SymmetricOperator + ?Sized>(
    op: &O,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mut x = vec![0.0; n];
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                residual: 0.0,
                relative_residual: 0.0,
                converged: true,
            },
        ));
    }
    let target = tol * b_norm;
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut mp = vec![0.0; n];
    let mut rr = dot(&r, &r);

    let true_residual = |x: &[f64], r: &mut Vec<f64>, scratch: &mut Vec<f64>| -> f64 {
        op.apply(x, scratch);
        for i in 0..n {
            r[i] = b[i] - scratch[i];
        }
        norm2(r)
    };

    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        op.apply(&p, &mut mp);
        let curvature = dot(&p, &mp);
        if !(curvature > 0.0) {
            return Err(Error::IndefiniteOperator {
                curvature,
                iteration: iterations,
            });
        }
        let step = rr / curvature;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * mp[i];
        }
        let mut rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            // Guard against drift of the recursive residual; restart if needed.
            let actual = true_residual(&x, &mut r, &mut mp);
            if actual <= target {
                return Ok((
                    x,
                    SolveReport {
                        iterations,
                        residual: actual,
                        relative_residual: actual / b_norm,
                        converged: true,
                    },
                ));
            }
            rr_new = actual * actual;
            p.copy_from_slice(&r);
            rr = rr_new;
            continue;
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    let residual = true_residual(&x, &mut r, &mut mp);
    Ok((
        x,
        SolveReport {
            iterations,
            residual,
            relative_residual: residual / b_norm,
            converged: residual <= target,
        },
    ))
}

/// Largest dimension accepted by [`dense_sym_eigen`].
pub const DENSE_EIGEN_MAX_N: usize = 2000;

/// Full eigendecomposition of a dense symmetric matrix: eigenvalues ascending
/// and the matching orthonormal eigenvectors as columns.
pub fn dense_sym_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: m.ncols(),
        });
    }
    if n > DENSE_EIGEN_MAX_N {
        return Err(Error::TooLarge {
            n,
            max: DENSE_EIGEN_MAX_N,
        });
    }
    let scale = m.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}
