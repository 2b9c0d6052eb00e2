//! Discrete MAP objectives, the exact log-posterior, generalized modularity
//! and exhaustive MAP search on small graphs.

use crate::error::{Error, Result};
use crate::graph::{ModelParams, SparseGraph};
use crate::oracle::OracleLabels;
use crate::ssl::{lambda_of, tau_of};

/// A hard two-way partition `sigma` in `{-1, +1}^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(Vec<i8>);

impl Assignment {
    pub fn new(sigma: Vec<i8>) -> Result<Self> {
        if let Some(bad) = sigma.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::invalid(format!("assignment entry {bad} is not +-1")));
        }
        Ok(Assignment(sigma))
    }

    /// The `idx`-th assignment in lexicographic order with `-1 < +1`: bit
    /// `n-1-i` of `idx` set means `sigma_i = +1`.
    pub fn from_index(n: usize, idx: u64) -> Self {
        Assignment(
            (0..n)
                .map(|i| if (idx >> (n - 1 - i)) & 1 == 1 { 1 } else { -1 })
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|C_1| = |{i : sigma_i = +1}|`.
    pub fn cluster_size(&self) -> usize {
        self.0.iter().filter(|&&v| v == 1).count()
    }

    pub fn negated(&self) -> Self {
        Assignment(self.0.iter().map(|&v| -v).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }
}

/// `tau` and `lambda` of the penalized cut; `lambda = inf` marks the perfect
/// oracle, whose penalty is a hard constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapObjectiveParams {
    pub tau: f64,
    pub lambda: f64,
}

impl MapObjectiveParams {
    pub fn new(tau: f64, lambda: f64) -> Result<Self> {
        if !tau.is_finite() {
            return Err(Error::invalid("tau must be finite"));
        }
        if !(lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(MapObjectiveParams { tau, lambda })
    }

    pub fn from_model(model: &ModelParams) -> Result<Self> {
        Self::new(
            tau_of(model.p_in, model.p_out)?,
            lambda_of(model.eta, model.theta, model.p_in, model.p_out)?,
        )
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Total weight of edges between `C_1` and its complement.
pub fn cut(g: &SparseGraph, a: &Assignment) -> Result<f64> {
    check_len(g.n(), a.len())?;
    let sigma = a.as_slice();
    Ok(g
        .edges()
        .filter(|&(i, j, _)| sigma[i] != sigma[j])
        .map(|(_, _, w)| w)
        .sum())
}

fn disagreements(s: &OracleLabels, a: &Assignment) -> usize {
    s.agreement(a.as_slice()).1
}

/// `cut(C_1) - tau |C_1| (n - |C_1|) + lambda |{i : S_i != 0, sigma_i != S_i}|`.
pub fn map_objective(
    g: &SparseGraph,
    a: &Assignment,
    s: &OracleLabels,
    p: &MapObjectiveParams,
) -> Result<f64> {
    check_len(g.n(), s.len())?;
    if p.lambda.is_infinite() {
        return Err(Error::invalid(
            "lambda = inf has no penalized form; use map_objective_constrained",
        ));
    }
    let c1 = a.cluster_size() as f64;
    let mut value = cut(g, a)? - p.tau * c1 * (g.n() as f64 - c1);
    let wrong = disagreements(s, a);
    if wrong > 0 {
        value += p.lambda * wrong as f64;
    }
    Ok(value)
}

/// Perfect-oracle objective: `cut(C_1) - tau |C_1| (n - |C_1|)` when `sigma`
/// agrees with every revealed label, `None` (infeasible) otherwise.
pub fn map_objective_constrained(
    g: &SparseGraph,
    a: &Assignment,
    s: &OracleLabels,
    tau: f64,
) -> Result<Option<f64>> {
    check_len(g.n(), s.len())?;
    if disagreements(s, a) > 0 {
        return Ok(None);
    }
    let c1 = a.cluster_size() as f64;
    Ok(Some(cut(g, a)? - tau * c1 * (g.n() as f64 - c1)))
}

/// `count * ln(p)` with `0 ln 0 = 0`.
fn xlogy(count: usize, p: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * p.ln()
    }
}

/// `log Pr(G | sigma) + log Pr(sigma | S)` up to a sigma-independent constant:
/// `N_out ln(p_out(1-p_in) / (p_in(1-p_out))) + |C_1||C_2| ln((1-p_out)/(1-p_in))
/// + |{sigma_i = -S_i}| ln(theta/eta)`. Assignments the oracle rules out
/// (`theta = 0` with a disagreement) get `-inf`.
pub fn log_posterior(
    g: &SparseGraph,
    a: &Assignment,
    s: &OracleLabels,
    params: &ModelParams,
) -> Result<f64> {
    params.require_assortative()?;
    check_len(g.n(), s.len())?;
    let (p_in, p_out) = (params.p_in, params.p_out);
    let c1 = a.cluster_size() as f64;
    let c2 = g.n() as f64 - c1;
    let likelihood = cut(g, a)? * ((p_out * (1.0 - p_in)) / (p_in * (1.0 - p_out))).ln()
        + c1 * c2 * ((1.0 - p_out) / (1.0 - p_in)).ln();
    let (agree, wrong) = s.agreement(a.as_slice());
    let prior = if params.eta > 0.0 && params.theta > 0.0 {
        wrong as f64 * (params.theta / params.eta).ln()
    } else {
        // Degenerate oracle: keep the unnormalized form so that 0^0 = 1.
        xlogy(agree, params.eta) + xlogy(wrong, params.theta)
    };
    Ok(likelihood + prior)
}

/// `sum_{i,j} (A_ij - tau) [sigma_i = sigma_j]` over all ordered pairs,
/// diagonal included.
pub fn generalized_modularity(g: &SparseGraph, a: &Assignment, tau: f64) -> Result<f64> {
    check_len(g.n(), a.len())?;
    let sigma = a.as_slice();
    let internal: f64 = (0..g.n())
        .flat_map(|i| g.neighbors(i).map(move |(j, w)| (i, j, w)))
        .filter(|&(i, j, _)| sigma[i] == sigma[j])
        .map(|(_, _, w)| w)
        .sum();
    let c1 = a.cluster_size() as f64;
    let c2 = g.n() as f64 - c1;
    Ok(internal - tau * (c1 * c1 + c2 * c2))
}

/// Default cap on exhaustive search.
pub const BRUTE_FORCE_MAX_N: usize = 20;

/// Value comparisons in the exhaustive search treat values within this
/// (relative) tolerance as ties.
pub const TIE_TOL: f64 = 1e-9;

fn objective_value(
    g: &SparseGraph,
    a: &Assignment,
    s: &OracleLabels,
    p: &MapObjectiveParams,
) -> Result<Option<f64>> {
    if p.lambda.is_infinite() {
        map_objective_constrained(g, a, s, p.tau)
    } else {
        map_objective(g, a, s, p).map(Some)
    }
}

fn search_space(g: &SparseGraph, s: &OracleLabels, max_n: usize) -> Result<(usize, u64)> {
    let n = g.n();
    check_len(n, s.len())?;
    if n > max_n || n > 62 {
        return Err(Error::TooLarge { n, max: max_n.min(62) });
    }
    // With no labels the objective is symmetric under sigma -> -sigma, so
    // sigma_1 = +1 is fixed: indices with the top bit set.
    let start = if s.labeled_count() == 0 && n > 0 {
        1u64 << (n - 1)
    } else {
        0
    };
    Ok((n, start))
}

/// Every minimizer of the penalized cut (constrained form when
/// `lambda = inf`), in lexicographic order.
pub fn brute_force_map_set(
    g: &SparseGraph,
    s: &OracleLabels,
    params: &MapObjectiveParams,
    max_n: usize,
) -> Result<Vec<Assignment>> {
    let (n, start) = search_space(g, s, max_n)?;
    let end = 1u64 << n;
    let mut best: Option<f64> = None;
    let mut argmin = Vec::new();
    for idx in start..end {
        let a = Assignment::from_index(n, idx);
        let Some(v) = objective_value(g, &a, s, params)? else {
            continue;
        };
        match best {
            Some(b) if v > b + TIE_TOL * b.abs().max(1.0) => {}
            Some(b) if v >= b - TIE_TOL * b.abs().max(1.0) => argmin.push(a),
            _ => {
                best = Some(v);
                argmin.clear();
                argmin.push(a);
            }
        }
    }
    Ok(argmin)
}

/// Exact MAP assignment by enumeration; ties go to the lexicographically
/// smallest `sigma` (with `-1 < +1`).
pub fn brute_force_map(
    g: &SparseGraph,
    s: &OracleLabels,
    params: &MapObjectiveParams,
    max_n: usize,
) -> Result<Assignment> {
    brute_force_map_set(g, s, params, max_n)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::invalid("no feasible assignment"))
}

/// Every maximizer of [`log_posterior`], in lexicographic order, over the
/// same search space as [`brute_force_map_set`].
pub fn brute_force_posterior_set(
    g: &SparseGraph,
    s: &OracleLabels,
    params: &ModelParams,
    max_n: usize,
) -> Result<Vec<Assignment>> {
    let (n, start) = search_space(g, s, max_n)?;
    let end = 1u64 << n;
    let mut best = f64::NEG_INFINITY;
    let mut argmax = Vec::new();
    for idx in start..end {
        let a = Assignment::from_index(n, idx);
        let v = log_posterior(g, &a, s, params)?;
        if v == f64::NEG_INFINITY {
            continue;
        }
        let tol = TIE_TOL * best.abs().max(1.0);
        if best == f64::NEG_INFINITY || v > best + tol {
            best = v;
            argmax.clear();
            argmax.push(a);
        } else if v >= best - tol {
            argmax.push(a);
        }
    }
    Ok(argmax)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asg(v: &[i8]) -> Assignment {
        Assignment::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cut_hand_counts() {
        let cliques = SparseGraph::from_unit_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(cut(&cliques, &asg(&[1, 1, 1, 1])).unwrap(), 0.0);
        assert_eq!(cut(&cliques, &asg(&[1, 1, -1, -1])).unwrap(), 0.0);
        assert_eq!(cut(&cliques, &asg(&[1, -1, 1, -1])).unwrap(), 2.0);
        let path = SparseGraph::from_unit_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(cut(&path, &asg(&[1, -1, 1])).unwrap(), 2.0);
    }

    #[test]
    fn map_objective_hand_values() {
        let g = SparseGraph::empty(2);
        let s = OracleLabels::new(vec![1, 0]).unwrap();
        let p = MapObjectiveParams::new(0.1, 1.0).unwrap();
        assert!((map_objective(&g, &asg(&[-1, -1]), &s, &p).unwrap() - 1.0).abs() < 1e-15);
        assert!((map_objective(&g, &asg(&[1, -1]), &s, &p).unwrap() + 0.1).abs() < 1e-15);

        let k4 = SparseGraph::from_unit_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
            .unwrap();
        let p0 = MapObjectiveParams::new(0.0, 0.0).unwrap();
        let empty = OracleLabels::empty(4);
        assert_eq!(map_objective(&k4, &asg(&[1, 1, -1, -1]), &empty, &p0).unwrap(), 4.0);
    }

    #[test]
    fn empty_oracle_drops_penalty() {
        let g = SparseGraph::from_unit_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let a = asg(&[1, -1, -1]);
        let empty = OracleLabels::empty(3);
        let with = map_objective(&g, &a, &empty, &MapObjectiveParams::new(0.2, 7.0).unwrap());
        let without = map_objective(&g, &a, &empty, &MapObjectiveParams::new(0.2, 0.0).unwrap());
        assert_eq!(with.unwrap(), without.unwrap());
        assert!(map_objective(&g, &a, &empty, &MapObjectiveParams::new(0.2, f64::INFINITY).unwrap())
            .is_err());
    }

    #[test]
    fn constrained_objective() {
        let g = SparseGraph::from_unit_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let s = OracleLabels::new(vec![1, 0, -1]).unwrap();
        let tau = 0.3;
        let ok = asg(&[1, 1, -1]);
        let free = map_objective(&g, &ok, &s, &MapObjectiveParams::new(tau, 2.0).unwrap()).unwrap();
        assert_eq!(map_objective_constrained(&g, &ok, &s, tau).unwrap(), Some(free));
        assert_eq!(
            map_objective_constrained(&g, &asg(&[-1, 1, -1]), &s, tau).unwrap(),
            None
        );
        let none = OracleLabels::empty(3);
        for idx in 0..8 {
            let a = Assignment::from_index(3, idx);
            assert!(map_objective_constrained(&g, &a, &none, tau).unwrap().is_some());
        }
    }

    #[test]
    fn uninformative_oracle_term_is_constant() {
        let g = SparseGraph::from_unit_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let s = OracleLabels::new(vec![1, 0, -1, 1]).unwrap();
        let model = ModelParams::new(4, 0.6, 0.2, 0.2, 0.2).unwrap();
        let empty = OracleLabels::empty(4);
        for idx in 0..16 {
            let a = Assignment::from_index(4, idx);
            let with = log_posterior(&g, &a, &s, &model).unwrap();
            let without = log_posterior(&g, &a, &empty, &model).unwrap();
            assert!((with - without).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_oracle_rules_out_disagreement() {
        let g = SparseGraph::from_unit_edges(2, &[(0, 1)]).unwrap();
        let s = OracleLabels::new(vec![1, 0]).unwrap();
        let model = ModelParams::new(2, 0.6, 0.2, 0.3, 0.0).unwrap();
        assert_eq!(
            log_posterior(&g, &asg(&[-1, 1]), &s, &model).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(log_posterior(&g, &asg(&[1, 1]), &s, &model).unwrap().is_finite());
        let bad = ModelParams::new(2, 0.2, 0.2, 0.3, 0.0).unwrap();
        assert!(log_posterior(&g, &asg(&[1, 1]), &s, &bad).is_err());
    }

    #[test]
    fn brute_force_two_triangles() {
        let g = SparseGraph::from_unit_edges(
            6,
            &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)],
        )
        .unwrap();
        let tau = tau_of(0.8, 0.1).unwrap();
        let p = MapObjectiveParams::new(tau, 0.0).unwrap();
        let best = brute_force_map(&g, &OracleLabels::empty(6), &p, 20).unwrap();
        assert_eq!(best.as_slice(), &[1, 1, 1, -1, -1, -1]);
    }

    #[test]
    fn posterior_argmax_on_two_triangles() {
        let g = SparseGraph::from_unit_edges(
            6,
            &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)],
        )
        .unwrap();
        let model = ModelParams::new(6, 0.8, 0.1, 0.3, 0.1).unwrap();
        let s = OracleLabels::new(vec![0, -1, 0, 0, 0, 0]).unwrap();
        let best = brute_force_posterior_set(&g, &s, &model, 20).unwrap();
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].as_slice(), &[-1, -1, -1, 1, 1, 1]);
    }

    #[test]
    fn brute_force_single_labeled_node() {
        let g = SparseGraph::empty(1);
        let s = OracleLabels::new(vec![1]).unwrap();
        let p = MapObjectiveParams::new(0.1, 2.0).unwrap();
        assert_eq!(brute_force_map(&g, &s, &p, 20).unwrap().as_slice(), &[1]);
    }

    #[test]
    fn brute_force_size_guard() {
        let g = SparseGraph::empty(21);
        let p = MapObjectiveParams::new(0.1, 1.0).unwrap();
        assert!(matches!(
            brute_force_map(&g, &OracleLabels::empty(21), &p, 20),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn modularity_hand_values() {
        let path = SparseGraph::from_unit_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let all = asg(&[1, 1, 1, 1]);
        assert_eq!(generalized_modularity(&path, &all, 0.0).unwrap(), 6.0);
        let empty = SparseGraph::empty(5);
        let a = asg(&[1, 1, -1, 1, -1]);
        assert!((generalized_modularity(&empty, &a, 0.5).unwrap() + 0.5 * 13.0).abs() < 1e-15);
    }

    #[test]
    fn lexicographic_indexing() {
        assert_eq!(Assignment::from_index(3, 0).as_slice(), &[-1, -1, -1]);
        assert_eq!(Assignment::from_index(3, 1).as_slice(), &[-1, -1, 1]);
        assert_eq!(Assignment::from_index(3, 4).as_slice(), &[1, -1, -1]);
        assert!(Assignment::from_index(3, 1) < Assignment::from_index(3, 4));
    }
}
