use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::metrics::Scope;
use super::run::ResultRow;
use super::spec::Algorithm;

/// Aggregate of one (coordinates, algorithm) group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub eta: f64,
    pub theta: f64,
    pub alpha_policy: String,
    pub algorithm: Algorithm,
    pub scope: Scope,
    /// Successful rows.
    pub count: usize,
    pub failures: usize,
    pub mean_accuracy: f64,
    /// Sample standard deviation over `sqrt(count)`; `None` below two rows.
    pub std_error: Option<f64>,
    pub mean_runtime_ms: f64,
}

type GroupKey = (usize, u64, u64, u64, u64, String, Algorithm, Scope);

fn key(r: &ResultRow) -> GroupKey {
    (
        r.n,
        r.p_in.to_bits(),
        r.p_out.to_bits(),
        r.eta.to_bits(),
        r.theta.to_bits(),
        r.alpha_policy.clone(),
        r.algorithm,
        r.scope,
    )
}

/// Mean and standard error of `values`.
pub fn mean_and_std_error(values: &[f64]) -> (f64, Option<f64>) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, Some((var / k).sqrt()))
}

/// Groups rows by coordinates and algorithm in order of first appearance.
/// Groups without a successful row are dropped with a warning.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<GroupKey> = Vec::new();
    let mut groups: HashMap<GroupKey, Vec<&ResultRow>> = HashMap::new();
    for r in rows {
        let k = key(r);
        groups
            .entry(k.clone())
            .or_insert_with(|| {
                order.push(k);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .filter_map(|k| {
            let members = &groups[&k];
            let first = members[0];
            let ok: Vec<&ResultRow> = members.iter().copied().filter(|r| !r.failed()).collect();
            if ok.is_empty() {
                log::warn!(
                    "no successful rows for {} at n={}, p_in={}, p_out={}, eta={}, theta={}; omitted",
                    first.algorithm.name(),
                    first.n,
                    first.p_in,
                    first.p_out,
                    first.eta,
                    first.theta
                );
                return None;
            }
            let acc: Vec<f64> = ok.iter().filter_map(|r| r.accuracy).collect();
            let (mean_accuracy, std_error) = mean_and_std_error(&acc);
            let runtime: Vec<f64> = ok.iter().map(|r| r.runtime_ms).collect();
            Some(SummaryRow {
                n: first.n,
                p_in: first.p_in,
                p_out: first.p_out,
                eta: first.eta,
                theta: first.theta,
                alpha_policy: first.alpha_policy.clone(),
                algorithm: first.algorithm,
                scope: first.scope,
                count: ok.len(),
                failures: members.len() - ok.len(),
                mean_accuracy,
                std_error,
                mean_runtime_ms: mean_and_std_error(&runtime).0,
            })
        })
        .collect()
}

/// Fixed-width table for terminals.
pub fn format_table(summary: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>7} {:>9} {:>9} {:>8} {:>8} {:<19} {:>5} {:>5} {:>9} {:>9} {:>11}",
        "n", "p_in", "p_out", "eta", "theta", "algorithm", "ok", "fail", "accuracy", "std_err", "runtime_ms"
    );
    for s in summary {
        let se = s.std_error.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            out,
            "{:>7} {:>9.5} {:>9.5} {:>8.4} {:>8.4} {:<19} {:>5} {:>5} {:>9.4} {:>9} {:>11.2}",
            s.n,
            s.p_in,
            s.p_out,
            s.eta,
            s.theta,
            s.algorithm.name(),
            s.count,
            s.failures,
            s.mean_accuracy,
            se,
            s.mean_runtime_ms
        );
    }
    out
}
