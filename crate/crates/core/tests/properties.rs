use proptest::prelude::*;

use sbm_ssl::baselines::{label_spreading, spectral_clustering, BaselineConfig};
use sbm_ssl::graph::{degree_regularize, sample_ssbm, ModelParams, SampleOptions, SparseGraph};
use sbm_ssl::harness::accuracy;
use sbm_ssl::linalg::dense_sym_eigen;
use sbm_ssl::map_exact::{cut, generalized_modularity, map_objective, Assignment, MapObjectiveParams};
use sbm_ssl::meanfield::{
    balanced_oracle, expected_l_tilde, mf_spectrum, misclassification_bound, spectral_gap,
};
use sbm_ssl::oracle::OracleLabels;
use sbm_ssl::ssl::{relaxation_objective, solve_noisy, AlphaPolicy, SolverOptions, SslParams};
use sbm_ssl::GroundTruth;

fn graph_and_sigma(max_n: usize) -> impl Strategy<Value = (SparseGraph, Vec<i8>, Vec<i8>)> {
    (3..max_n).prop_flat_map(|n| {
        (
            proptest::collection::vec((0..n, 0..n), 0..4 * n),
            proptest::collection::vec(prop_oneof![Just(-1i8), Just(1i8)], n),
            proptest::collection::vec(-1i8..=1, n),
        )
            .prop_map(move |(edges, sigma, s)| {
                let edges: Vec<(usize, usize)> = edges.into_iter().filter(|(i, j)| i != j).collect();
                (SparseGraph::from_unit_edges(n, &edges).unwrap(), sigma, s)
            })
    })
}

fn sbm(n: usize, seed: u64) -> (SparseGraph, GroundTruth) {
    let params = ModelParams::new(n, 0.4, 0.05, 0.0, 0.0).unwrap();
    sample_ssbm(&params, seed, SampleOptions::default()).unwrap()
}

fn permute<T: Copy>(v: &[T], perm: &[usize]) -> Vec<T> {
    let mut out = v.to_vec();
    for (i, &p) in perm.iter().enumerate() {
        out[p] = v[i];
    }
    out
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<usize>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relaxation_at_sign_vectors((g, sigma, s) in graph_and_sigma(14), tau in 0.0f64..0.5, lambda in 0.0f64..5.0) {
        let n = g.n() as f64;
        let s = OracleLabels::new(s).unwrap();
        let a = Assignment::new(sigma.clone()).unwrap();
        let objective = map_objective(&g, &a, &s, &MapObjectiveParams::new(tau, lambda).unwrap()).unwrap();
        let x = a.to_f64();
        let params = SslParams::new(tau, lambda, AlphaPolicy::Explicit(1.0)).unwrap();
        let relaxed = relaxation_objective(&g, &x, &s, &params, true).unwrap();
        let expected = 4.0 * objective - 2.0 * g.total_weight() + tau * n * n;
        prop_assert!((relaxed - expected).abs() < 1e-9 * (1.0 + expected.abs()));
    }

    #[test]
    fn cut_and_modularity_identities((g, sigma, _) in graph_and_sigma(14), tau in 0.0f64..0.5) {
        let a = Assignment::new(sigma).unwrap();
        let x = a.to_f64();
        let c = cut(&g, &a).unwrap();
        prop_assert!((c - 0.25 * (2.0 * g.total_weight() - g.quadratic_form(&x))).abs() < 1e-9);
        let n = g.n() as f64;
        let c1 = a.cluster_size() as f64;
        let q = generalized_modularity(&g, &a, tau).unwrap();
        let expected = -2.0 * (c - tau * c1 * (n - c1)) + 2.0 * g.total_weight() - tau * n * n;
        prop_assert!((q - expected).abs() < 1e-9 * (1.0 + expected.abs()));
    }

    #[test]
    fn degree_regularize_contract(seed in 0u64..500, frac in 0.2f64..1.2) {
        let (g, _) = sbm(60, seed);
        let d_max = frac * g.max_degree().max(1.0);
        let once = degree_regularize(&g, d_max).unwrap();
        prop_assert!(once.is_symmetric());
        prop_assert!(once.max_degree() <= d_max * (1.0 + 1e-9));
        prop_assert_eq!(&degree_regularize(&once, d_max).unwrap(), &once);
        prop_assert!(once.edges().all(|(_, _, w)| w >= 0.0));
    }

    #[test]
    fn algorithm1_is_permutation_equivariant(seed in 0u64..500, perm in permutation(40)) {
        let (g, truth) = sbm(40, seed);
        let s = sbm_ssl::oracle::sample_oracle(&truth, 0.3, 0.05, seed).unwrap();
        let params = SslParams::new(0.2, 1.5, AlphaPolicy::Explicit(g.max_degree() + 10.0)).unwrap();
        let opts = SolverOptions { cg_tol: 1e-12, ..SolverOptions::default() };
        let x = solve_noisy(&g, &s, &params, &opts).unwrap().scores.x;
        let gp = g.permuted(&perm).unwrap();
        let sp = OracleLabels::new(permute(s.as_slice(), &perm)).unwrap();
        let xp = solve_noisy(&gp, &sp, &params, &opts).unwrap().scores.x;
        let expected = permute(&x, &perm);
        for (a, b) in xp.iter().zip(&expected) {
            prop_assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()));
        }
        let neg = solve_noisy(&g, &s.negated(), &params, &opts).unwrap().scores.x;
        for (a, b) in neg.iter().zip(&x) {
            prop_assert!((a + b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn spectral_split_is_permutation_invariant(seed in 0u64..500, perm in permutation(60)) {
        let (g, _) = sbm(60, seed);
        let cfg = BaselineConfig { eig_tol: 1e-10, ..BaselineConfig::default() };
        let l = spectral_clustering(&g, &cfg).unwrap().scores.labels;
        let lp = spectral_clustering(&g.permuted(&perm).unwrap(), &cfg).unwrap().scores.labels;
        let expected = permute(&l, &perm);
        let flipped: Vec<i8> = expected.iter().map(|v| -v).collect();
        prop_assert!(lp == expected || lp == flipped);
    }

    #[test]
    fn label_spreading_contracts(seed in 0u64..500, beta in 0.05f64..0.95) {
        let (g, truth) = sbm(80, seed);
        let s = sbm_ssl::oracle::sample_oracle(&truth, 0.2, 0.05, seed).unwrap();
        let cfg = BaselineConfig { beta, ..BaselineConfig::default() };
        let r = label_spreading(&g, &s, &cfg).unwrap();
        for w in r.step_norms.windows(2) {
            // Absolute slack covers rounding in differences of nearly equal iterates.
            prop_assert!(w[1] <= beta * w[0] * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn unflipped_accuracies_are_complementary(pred in proptest::collection::vec(prop_oneof![Just(-1i8), Just(1i8)], 2..200), seed in any::<u64>()) {
        let n = pred.len();
        let truth = GroundTruth::balanced(n);
        let s = sbm_ssl::oracle::sample_oracle(&truth, 0.3, 0.1, seed).unwrap();
        let scope: Vec<usize> = if s.unlabeled().is_empty() { (0..n).collect() } else { s.unlabeled() };
        let neg: Vec<i8> = pred.iter().map(|v| -v).collect();
        let total = accuracy(&pred, &truth, &scope, false).unwrap() + accuracy(&neg, &truth, &scope, false).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(accuracy(&pred, &truth, &scope, true).unwrap() >= 0.5);
    }

    #[test]
    fn closed_spectrum_matches_dense(half in 2usize..30, b in 0.02f64..0.5, gap in 0.01f64..0.45, lab in 0usize..30, wrong in 0usize..5, lambda in 0.01f64..20.0, tau in 0.0f64..0.3) {
        let n = 2 * half;
        let lab = lab.min(half);
        let wrong = wrong.min(lab);
        let nf = n as f64;
        let model = ModelParams::new(n, b + gap, b, 2.0 * (lab - wrong) as f64 / nf, 2.0 * wrong as f64 / nf).unwrap();
        let (_, s) = balanced_oracle(n, model.eta, model.theta).unwrap();
        let closed = mf_spectrum(&model, lambda, tau).unwrap();
        let (dense, _) = dense_sym_eigen(&expected_l_tilde(&model, lambda, tau, &s).unwrap()).unwrap();
        let expanded = closed.expanded();
        prop_assert_eq!(expanded.len(), n);
        for (a, d) in expanded.iter().zip(&dense) {
            prop_assert!((a - d).abs() < 1e-8, "{} vs {}", a, d);
        }
        prop_assert!((spectral_gap(&model, lambda) - closed.t2_plus.mul_add(-1.0, closed.alpha_mf)).abs() < 1e-10);
    }

    #[test]
    fn misclassification_bound_falls_with_degree(d1 in 2.0f64..50.0, scale in 1.01f64..4.0, contrast in 0.05f64..0.9, ell in 0.01f64..1.0, s in 0.0f64..0.45, ratio in 0.1f64..10.0) {
        let n = 100_000;
        let make = |d: f64| {
            let p_in = d * (1.0 + contrast) / n as f64;
            let p_out = d * (1.0 - contrast) / n as f64;
            ModelParams::new(n, p_in, p_out, ell * (1.0 - s), ell * s).unwrap()
        };
        let (m1, m2) = (make(d1), make(d1 * scale));
        let b1 = misclassification_bound(&m1, ratio * m1.alpha_mf(), 1.0).unwrap();
        let b2 = misclassification_bound(&m2, ratio * m2.alpha_mf(), 1.0).unwrap();
        prop_assert!(b2 < b1);
    }
}
