//! Weighted undirected graphs in compressed sparse row form, two-block SBM
//! sampling, degree regularization and the edge-list text format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric sparse adjacency with cached weighted degrees.
///
/// Row `i` stores every neighbour `j` (sorted) with weight `A_ij`. A self-loop
/// is stored once, in its own row, and contributes `A_ii` once to the degree.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    degrees: Vec<f64>,
}

impl SparseGraph {
    pub fn empty(n: usize) -> Self {
        SparseGraph {
            n,
            offsets: vec![0; n + 1],
            targets: Vec::new(),
            weights: Vec::new(),
            degrees: vec![0.0; n],
        }
    }

    /// Builds a graph from undirected edges `(i, j, w)`. Repeated pairs (in
    /// either orientation) are merged by summing their weights.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Self::build(n, edges).map(|(g, _)| g)
    }

    /// Unit-weight convenience constructor.
    pub fn from_unit_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::from_edges(n, edges.iter().map(|&(i, j)| (i, j, 1.0)))
    }

    /// Returns the graph and the number of merged duplicate pairs.
    fn build<I>(n: usize, edges: I) -> Result<(Self, usize)>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::invalid(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid(format!(
                    "edge ({i}, {j}) has invalid weight {w}"
                )));
            }
            entries.push((i, j, w));
            if i != j {
                entries.push((j, i, w));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut offsets = vec![0usize; n + 1];
        let mut targets = Vec::with_capacity(entries.len());
        let mut weights: Vec<f64> = Vec::with_capacity(entries.len());
        let mut duplicates = 0usize;
        let mut last: Option<(usize, usize)> = None;
        for (i, j, w) in entries {
            if last == Some((i, j)) {
                *weights.last_mut().expect("previous entry") += w;
                if i <= j {
                    duplicates += 1;
                }
                continue;
            }
            last = Some((i, j));
            offsets[i + 1] += 1;
            targets.push(j);
            weights.push(w);
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let degrees = (0..n)
            .map(|i| weights[offsets[i]..offsets[i + 1]].iter().sum())
            .collect();
        Ok((
            SparseGraph {
                n,
                offsets,
                targets,
                weights,
                degrees,
            },
            duplicates,
        ))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn max_degree(&self) -> f64 {
        self.degrees.iter().copied().fold(0.0, f64::max)
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    /// `A_ij`, zero when absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let range = self.offsets[i]..self.offsets[i + 1];
        match self.targets[range.clone()].binary_search(&j) {
            Ok(k) => self.weights[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// Each undirected edge once, as `(i, j, w)` with `i <= j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| j >= i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    /// Number of undirected edges, self-loops included.
    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    /// Sum of weights over undirected edges (`|E|` for unit weights).
    pub fn total_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.n).any(|i| self.weight(i, i) != 0.0)
    }

    /// `y = A x`.
    pub fn adjacency_matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let range = self.offsets[i]..self.offsets[i + 1];
            *yi = self.targets[range.clone()]
                .iter()
                .zip(&self.weights[range])
                .map(|(&j, &w)| w * x[j])
                .sum();
        }
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.n];
        self.adjacency_matvec(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.neighbors(i).all(|(j, w)| self.weight(j, i) == w))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, w) in self.neighbors(i) {
                m[(i, j)] = w;
            }
        }
        m
    }

    /// Induced relabeling: node `i` of `self` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: perm.len(),
            });
        }
        Self::from_edges(self.n, self.edges().map(|(i, j, w)| (perm[i], perm[j], w)))
    }
}

/// Planted labels `sigma0` in `{-1, +1}^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth(Vec<i8>);

impl GroundTruth {
    pub fn new(sigma0: Vec<i8>) -> Result<Self> {
        if let Some(bad) = sigma0.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::invalid(format!("ground truth entry {bad} is not +-1")));
        }
        Ok(GroundTruth(sigma0))
    }

    /// First `floor(n/2)` nodes in cluster +1, the rest in -1.
    pub fn balanced(n: usize) -> Self {
        GroundTruth((0..n).map(|i| if i < n / 2 { 1 } else { -1 }).collect())
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

    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Two-block SBM plus oracle parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub eta: f64,
    pub theta: f64,
}

fn is_probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl ModelParams {
    pub fn new(n: usize, p_in: f64, p_out: f64, eta: f64, theta: f64) -> Result<Self> {
        let params = ModelParams {
            n,
            p_in,
            p_out,
            eta,
            theta,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks the sampling domain: probabilities in `[0, 1]`, `eta + theta <= 1`.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        for (name, p) in [
            ("p_in", self.p_in),
            ("p_out", self.p_out),
            ("eta", self.eta),
            ("theta", self.theta),
        ] {
            if !is_probability(p) {
                return Err(Error::invalid(format!("{name} = {p} is not a probability")));
            }
        }
        if self.eta + self.theta > 1.0 + 1e-12 {
            return Err(Error::invalid(format!(
                "eta + theta = {} exceeds 1",
                self.eta + self.theta
            )));
        }
        Ok(())
    }

    /// The MAP formulas need `0 < p_out < p_in < 1`.
    pub fn require_assortative(&self) -> Result<()> {
        if !(0.0 < self.p_out && self.p_out < self.p_in && self.p_in < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < p_out < p_in < 1, got p_in = {}, p_out = {}",
                self.p_in, self.p_out
            )));
        }
        Ok(())
    }

    /// `d = n (p_in + p_out) / 2`.
    pub fn avg_degree(&self) -> f64 {
        self.n as f64 * (self.p_in + self.p_out) / 2.0
    }

    /// `alpha_MF = n (p_in - p_out) / 2`.
    pub fn alpha_mf(&self) -> f64 {
        self.n as f64 * (self.p_in - self.p_out) / 2.0
    }

    /// Expected labeled fraction `eta + theta`.
    pub fn labeled_fraction(&self) -> f64 {
        self.eta + self.theta
    }

    pub fn error_rate(&self) -> Result<f64> {
        crate::oracle::error_rate(self.eta, self.theta)
    }

    pub fn informative(&self) -> bool {
        self.eta > self.theta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    /// Deterministic halves instead of i.i.d. uniform labels.
    pub balanced: bool,
    /// Self-loops `(i, i)` with probability `p_in`.
    pub self_loops: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            balanced: true,
            self_loops: false,
        }
    }
}

/// Calls `f` with each index in `0..total` kept independently with
/// probability `p`, using geometric skips so the cost is proportional to the
/// number of successes.
fn bernoulli_indices<R: Rng>(total: u64, p: f64, rng: &mut R, mut f: impl FnMut(u64)) {
    if total == 0 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        (0..total).for_each(f);
        return;
    }
    let skip = Geometric::new(p).expect("p in (0, 1)");
    let mut idx = skip.sample(rng);
    while idx < total {
        f(idx);
        idx = idx.saturating_add(1).saturating_add(skip.sample(rng));
    }
}

/// Samples a two-block SBM and its planted labels. The same seed always yields
/// the same graph.
pub fn sample_ssbm(
    params: &ModelParams,
    seed: u64,
    options: SampleOptions,
) -> Result<(SparseGraph, GroundTruth)> {
    params.validate()?;
    let n = params.n;
    if n < 2 {
        return Err(Error::invalid("SBM sampling needs n >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = if options.balanced {
        GroundTruth::balanced(n)
    } else {
        GroundTruth((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    };

    let (plus, minus): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| truth.get(i) == 1);
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();

    for block in [&plus, &minus] {
        let k = block.len() as u64;
        let total = k * k.saturating_sub(1) / 2;
        // Row-major walk over the strict upper triangle of the block.
        let (mut row, mut row_start) = (0u64, 0u64);
        bernoulli_indices(total, params.p_in, &mut rng, |idx| {
            while idx >= row_start + (k - 1 - row) {
                row_start += k - 1 - row;
                row += 1;
            }
            let col = row + 1 + (idx - row_start);
            edges.push((block[row as usize], block[col as usize], 1.0));
        });
    }
    let cols = minus.len() as u64;
    bernoulli_indices(plus.len() as u64 * cols, params.p_out, &mut rng, |idx| {
        edges.push((plus[(idx / cols) as usize], minus[(idx % cols) as usize], 1.0));
    });
    if options.self_loops {
        bernoulli_indices(n as u64, params.p_in, &mut rng, |idx| {
            edges.push((idx as usize, idx as usize, 1.0));
        });
    }

    Ok((SparseGraph::from_edges(n, edges)?, truth))
}

/// Caps weighted degrees at `d_max` by scaling the weight of edge `(i, j)` by
/// `min(c_i, c_j)` with `c_i = min(1, d_max / deg_i)`. Degrees within a
/// relative `1e-12` of the cap count as capped, which keeps the map idempotent.
pub fn degree_regularize(g: &SparseGraph, d_max: f64) -> Result<SparseGraph> {
    if !(d_max > 0.0) {
        return Err(Error::invalid(format!("d_max must be positive, got {d_max}")));
    }
    let cap = d_max * (1.0 + 1e-12);
    if g.max_degree() <= cap {
        return Ok(g.clone());
    }
    let scale: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&deg| if deg > cap { d_max / deg } else { 1.0 })
        .collect();
    SparseGraph::from_edges(
        g.n(),
        g.edges().map(|(i, j, w)| (i, j, w * scale[i].min(scale[j]))),
    )
}

/// Parses the edge-list format: a mandatory `# n=<n>` header, then
/// `i j [w]` lines with 0-based ids. Other `#` lines are comments.
pub fn read_edge_list<R: BufRead>(reader: R, source: &Path) -> Result<SparseGraph> {
    let format_err = |line: usize, message: String| Error::Format {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut n: Option<usize> = None;
    let mut edges = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("n=") {
                if n.is_some() {
                    return Err(format_err(lineno, "duplicate `# n=` header".into()));
                }
                n = Some(value.trim().parse().map_err(|_| {
                    format_err(lineno, format!("bad node count `{}`", value.trim()))
                })?);
            }
            continue;
        }
        let n = n.ok_or_else(|| format_err(lineno, "edge before `# n=<n>` header".into()))?;
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(format_err(lineno, format!("expected `i j [w]`, got `{trimmed}`")));
        }
        let id = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| format_err(lineno, format!("bad node id `{s}`")))?;
            if v >= n {
                return Err(format_err(lineno, format!("node id {v} out of range for n = {n}")));
            }
            Ok(v)
        };
        let (i, j) = (id(fields[0])?, id(fields[1])?);
        let w = match fields.get(2) {
            Some(s) => s
                .parse::<f64>()
                .ok()
                .filter(|w| w.is_finite() && *w >= 0.0)
                .ok_or_else(|| format_err(lineno, format!("bad weight `{s}`")))?,
            None => 1.0,
        };
        edges.push((i, j, w));
    }
    let n = n.ok_or_else(|| format_err(0, "missing `# n=<n>` header".into()))?;
    let (g, duplicates) = SparseGraph::build(n, edges)?;
    if duplicates > 0 {
        log::warn!(
            "{}: {duplicates} duplicate edge(s) merged by summing weights",
            source.display()
        );
    }
    if !g.is_symmetric() {
        return Err(format_err(0, "adjacency is not symmetric after load".into()));
    }
    Ok(g)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<SparseGraph> {
    let path = path.as_ref();
    read_edge_list(BufReader::new(File::open(path)?), path)
}

pub fn write_edge_list<W: Write>(g: &SparseGraph, mut out: W) -> Result<()> {
    writeln!(out, "# n={}", g.n())?;
    for (i, j, w) in g.edges() {
        if w == 1.0 {
            writeln!(out, "{i} {j}")?;
        } else {
            writeln!(out, "{i} {j} {w}")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_edge_list(g: &SparseGraph, path: impl AsRef<Path>) -> Result<()> {
    write_edge_list(g, BufWriter::new(File::create(path)?))
}
