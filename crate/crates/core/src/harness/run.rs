use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, Scope};
use super::spec::{AlphaPolicyName, Algorithm, ExperimentSpec};
use crate::baselines::{label_spreading, spectral_clustering, BaselineConfig};
use crate::error::{Error, Result};
use crate::graph::{sample_ssbm, GroundTruth, ModelParams, SampleOptions, SparseGraph};
use crate::map_exact::{brute_force_map, MapObjectiveParams, BRUTE_FORCE_MAX_N};
use crate::oracle::{sample_oracle, OracleLabels};
use crate::ssl::{lambda_of, run_algorithm1, tau_of, AlphaPolicy, Overrides, SolverOptions};

pub const SCHEMA_COMMENT: &str = "# sbm-ssl results v1";

pub const CSV_HEADER: [&str; 18] = [
    "n",
    "p_in",
    "p_out",
    "eta",
    "theta",
    "tau",
    "lambda",
    "alpha_policy",
    "algorithm",
    "seed",
    "replication",
    "labeled_frac_realized",
    "error_rate_realized",
    "accuracy",
    "misclassified",
    "scope",
    "runtime_ms",
    "flags",
];

/// One algorithm on one replication. Failed runs keep their coordinates,
/// leave `accuracy`/`misclassified` empty and carry `error=...` in `flags`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub eta: f64,
    pub theta: f64,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha_policy: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub replication: usize,
    pub labeled_frac_realized: f64,
    pub error_rate_realized: Option<f64>,
    pub accuracy: Option<f64>,
    pub misclassified: Option<usize>,
    pub scope: Scope,
    pub runtime_ms: f64,
    pub flags: String,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.accuracy.is_none()
    }

    /// `misclassified / scope size`, `None` for failed rows.
    pub fn misclassification_ratio(&self) -> Option<f64> {
        self.accuracy.map(|a| 1.0 - a)
    }
}

/// Ground truth and oracle of one replication, for `dump_labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDump {
    pub seed: u64,
    pub truth: GroundTruth,
    pub oracle: OracleLabels,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub labels: Vec<LabelDump>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(seed: u64, value: u64) -> u64 {
    splitmix64(seed ^ splitmix64(value))
}

/// Seed of one replication, a pure function of the base seed, the grid
/// coordinates and the replication index.
pub fn child_seed(base_seed: u64, point: &ModelParams, replication: usize) -> u64 {
    [
        point.n as u64,
        point.p_in.to_bits(),
        point.p_out.to_bits(),
        point.eta.to_bits(),
        point.theta.to_bits(),
        replication as u64,
    ]
    .iter()
    .fold(splitmix64(base_seed), |acc, &v| mix(acc, v))
}

struct Context<'a> {
    spec: &'a ExperimentSpec,
    point: &'a ModelParams,
    graph: &'a SparseGraph,
    oracle: &'a OracleLabels,
    seed: u64,
}

struct Outcome {
    labels: Vec<i8>,
    tau: Option<f64>,
    lambda: Option<f64>,
    allow_flip: bool,
    flags: Vec<String>,
}

fn model_tau(ctx: &Context<'_>) -> Result<f64> {
    match ctx.spec.tau {
        Some(t) => Ok(t),
        None => tau_of(ctx.point.p_in, ctx.point.p_out),
    }
}

fn model_lambda(ctx: &Context<'_>) -> Result<f64> {
    match ctx.spec.lambda {
        Some(l) => Ok(l),
        None => lambda_of(ctx.point.eta, ctx.point.theta, ctx.point.p_in, ctx.point.p_out),
    }
}

fn alpha_policy(spec: &ExperimentSpec, point: &ModelParams) -> AlphaPolicy {
    match (spec.alpha, spec.alpha_policy) {
        (Some(a), _) => AlphaPolicy::Explicit(a),
        (None, AlphaPolicyName::SpectralNorm) => AlphaPolicy::SpectralNorm,
        (None, AlphaPolicyName::MeanField) => AlphaPolicy::MeanField {
            p_in: point.p_in,
            p_out: point.p_out,
        },
    }
}

fn run_algorithm(algo: Algorithm, ctx: &Context<'_>) -> Result<Outcome> {
    let solver = SolverOptions {
        seed: mix(ctx.seed, 2),
        ..SolverOptions::default()
    };
    let baseline = BaselineConfig {
        beta: ctx.spec.beta,
        seed: mix(ctx.seed, 3),
        ..BaselineConfig::default()
    };
    match algo {
        Algorithm::Algorithm1 | Algorithm::Algorithm1Perfect => {
            let lambda = if algo == Algorithm::Algorithm1Perfect {
                f64::INFINITY
            } else {
                model_lambda(ctx)?
            };
            let overrides = Overrides {
                tau: Some(model_tau(ctx)?),
                lambda: Some(lambda),
                alpha: alpha_policy(ctx.spec, ctx.point),
            };
            let out = run_algorithm1(ctx.graph, ctx.oracle, ctx.point, &overrides, &solver)?;
            let report = &out.solution.report;
            let mut flags = vec![
                format!("alpha={}", out.solution.alpha),
                format!("iters={}", report.iterations),
            ];
            if !report.converged {
                flags.push("not-converged".into());
            }
            Ok(Outcome {
                labels: out.solution.scores.labels,
                tau: Some(out.tau),
                lambda: Some(out.lambda),
                allow_flip: false,
                flags,
            })
        }
        Algorithm::Spectral => {
            let r = spectral_clustering(ctx.graph, &baseline)?;
            let mut flags = vec!["flip".to_string(), format!("iters={}", r.iterations)];
            if r.degenerate {
                flags.push("degenerate".into());
            }
            Ok(Outcome {
                labels: r.scores.labels,
                tau: None,
                lambda: None,
                allow_flip: true,
                flags,
            })
        }
        Algorithm::LabelSpreading => {
            let r = label_spreading(ctx.graph, ctx.oracle, &baseline)?;
            Ok(Outcome {
                labels: r.scores.labels,
                tau: None,
                lambda: None,
                allow_flip: false,
                flags: vec![format!("beta={}", ctx.spec.beta), format!("iters={}", r.iterations)],
            })
        }
        Algorithm::BruteMap => {
            let (tau, lambda) = (model_tau(ctx)?, model_lambda(ctx)?);
            let a = brute_force_map(
                ctx.graph,
                ctx.oracle,
                &MapObjectiveParams::new(tau, lambda)?,
                BRUTE_FORCE_MAX_N,
            )?;
            let unanchored = ctx.oracle.labeled_count() == 0 || lambda == 0.0;
            Ok(Outcome {
                labels: a.as_slice().to_vec(),
                tau: Some(tau),
                lambda: Some(lambda),
                allow_flip: unanchored,
                flags: if unanchored { vec!["flip".into()] } else { Vec::new() },
            })
        }
    }
}

fn sanitize(msg: &str) -> String {
    msg.replace([';', '\n', '\r'], " ")
}

struct Replication {
    rows: Vec<ResultRow>,
    dump: Option<LabelDump>,
}

fn run_replication(spec: &ExperimentSpec, point: &ModelParams, replication: usize) -> Replication {
    let seed = child_seed(spec.base_seed, point, replication);
    let policy = alpha_policy(spec, point).name().to_string();
    let row = |algorithm, labeled_frac, error_rate| ResultRow {
        n: point.n,
        p_in: point.p_in,
        p_out: point.p_out,
        eta: point.eta,
        theta: point.theta,
        tau: None,
        lambda: None,
        alpha_policy: policy.clone(),
        algorithm,
        seed,
        replication,
        labeled_frac_realized: labeled_frac,
        error_rate_realized: error_rate,
        accuracy: None,
        misclassified: None,
        scope: spec.scope,
        runtime_ms: 0.0,
        flags: String::new(),
    };

    let options = SampleOptions {
        balanced: spec.balanced,
        self_loops: spec.self_loops,
    };
    let sampled = sample_ssbm(point, seed, options).and_then(|(g, truth)| {
        let s = sample_oracle(&truth, point.eta, point.theta, mix(seed, 1))?;
        Ok((g, truth, s))
    });
    let (graph, truth, oracle) = match sampled {
        Ok(v) => v,
        Err(e) => {
            let flags = format!("error=sampling: {}", sanitize(&e.to_string()));
            return Replication {
                rows: spec
                    .algorithms
                    .iter()
                    .map(|&a| ResultRow {
                        flags: flags.clone(),
                        ..row(a, 0.0, None)
                    })
                    .collect(),
                dump: None,
            };
        }
    };

    let labeled_frac = oracle.labeled_count() as f64 / point.n as f64;
    let error_rate = oracle.realized_error_rate(&truth);
    let scope = spec.scope.indices(&oracle);
    let ctx = Context {
        spec,
        point,
        graph: &graph,
        oracle: &oracle,
        seed,
    };
    let rows = spec
        .algorithms
        .iter()
        .map(|&algo| {
            let start = Instant::now();
            let result = run_algorithm(algo, &ctx)
                .and_then(|o| evaluate(&o.labels, &truth, &scope, o.allow_flip).map(|e| (o, e)));
            let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            let base = ResultRow {
                runtime_ms,
                ..row(algo, labeled_frac, error_rate)
            };
            match result {
                Ok((o, e)) => ResultRow {
                    tau: o.tau,
                    lambda: o.lambda,
                    accuracy: Some(e.accuracy),
                    misclassified: Some(e.misclassified),
                    flags: o.flags.join(";"),
                    ..base
                },
                Err(e) => {
                    log::warn!("{} failed at seed {seed}: {e}", algo.name());
                    ResultRow {
                        flags: format!("error={}", sanitize(&e.to_string())),
                        ..base
                    }
                }
            }
        })
        .collect();
    Replication {
        rows,
        dump: spec.dump_labels.then(|| LabelDump {
            seed,
            truth,
            oracle,
        }),
    }
}

/// Runs every grid point x replication in parallel. Rows come back ordered
/// by grid point, then replication, then the spec's algorithm order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let grid = spec.grid()?;
    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|p| (0..spec.replications).map(move |r| (p, r)))
        .collect();
    let results: Vec<Replication> = tasks
        .par_iter()
        .map(|&(p, r)| run_replication(spec, &grid[p], r))
        .collect();
    let mut out = ExperimentOutput::default();
    for rep in results {
        out.rows.extend(rep.rows);
        out.labels.extend(rep.dump);
    }
    Ok(out)
}

/// Writes the schema comment, the header and `rows`.
pub fn write_rows<W: Write>(rows: &[ResultRow], mut out: W) -> Result<()> {
    writeln!(out, "{SCHEMA_COMMENT}")?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_rows(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_rows(rows, std::io::BufWriter::new(file))
}

/// Parses a results file, checking the schema comment (when present) and
/// the exact header.
pub fn read_rows<R: BufRead>(reader: R) -> Result<Vec<ResultRow>> {
    let mut lines = String::new();
    let mut reader = reader;
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.starts_with('#') {
        if first.trim_end() != SCHEMA_COMMENT {
            return Err(Error::Schema(format!(
                "unsupported schema comment {:?}, expected {SCHEMA_COMMENT:?}",
                first.trim_end()
            )));
        }
    } else {
        lines.push_str(&first);
    }
    reader.read_to_string(&mut lines)?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(lines.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Schema(format!(
            "header {:?} does not match {:?}",
            header.join(","),
            CSV_HEADER.join(",")
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Schema(e.to_string())))
        .collect()
}

pub fn load_rows(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_rows(std::io::BufReader::new(file))
}

/// `<stem>.labels.csv` next to `output`.
pub fn label_dump_path(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    output.with_file_name(format!("{stem}.labels.csv"))
}

/// Columns `seed,node,truth,oracle`.
pub fn write_label_dump<W: Write>(dumps: &[LabelDump], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "node", "truth", "oracle"])?;
    for d in dumps {
        for i in 0..d.truth.len() {
            w.write_record([
                d.seed.to_string(),
                i.to_string(),
                d.truth.get(i).to_string(),
                d.oracle.get(i).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(extra: &str) -> ExperimentSpec {
        ExperimentSpec::from_toml_str(&format!(
            "n = [60]\np_in = [0.3]\np_out = [0.05]\neta = [0.2]\ntheta = [0.02]\n\
             algorithms = [\"algorithm1\", \"spectral\", \"label-spreading\"]\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn one_row_per_algorithm() {
        let out = run_experiment(&small_spec("")).unwrap();
        assert_eq!(out.rows.len(), 3);
        for r in &out.rows {
            assert!(!r.failed(), "{}", r.flags);
            let acc = r.accuracy.unwrap();
            assert!((0.0..=1.0).contains(&acc));
        }
        assert!(out.rows[1].flags.contains("flip"));
        assert!(out.rows[2].flags.contains("beta=0.9"));
    }

    #[test]
    fn seeds_are_pure_functions_of_coordinates() {
        let spec = small_spec("replications = 3\nbase_seed = 9\n");
        let point = spec.grid().unwrap()[0];
        let a = child_seed(9, &point, 2);
        assert_eq!(a, child_seed(9, &point, 2));
        assert_ne!(a, child_seed(9, &point, 1));
        assert_ne!(a, child_seed(10, &point, 2));
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.rows[6].seed, a);
    }

    #[test]
    fn failures_are_flagged_rows() {
        // eta = theta gives lambda = 0, which the noisy solve rejects.
        let spec = ExperimentSpec::from_toml_str(
            "n = [40]\np_in = [0.3]\np_out = [0.05]\neta = [0.1]\ntheta = [0.1]\n\
             algorithms = [\"algorithm1\", \"spectral\"]\n",
        )
        .unwrap();
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows[0].failed());
        assert!(out.rows[0].flags.starts_with("error="));
        assert!(!out.rows[1].failed());
    }

    #[test]
    fn csv_round_trip_and_schema() {
        let out = run_experiment(&small_spec("replications = 2\n")).unwrap();
        let mut buf = Vec::new();
        write_rows(&out.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(SCHEMA_COMMENT));
        assert_eq!(text.lines().nth(1).unwrap(), CSV_HEADER.join(","));
        let back = read_rows(buf.as_slice()).unwrap();
        assert_eq!(back, out.rows);

        let bad = text.replacen("accuracy", "acc", 1);
        assert!(matches!(read_rows(bad.as_bytes()), Err(Error::Schema(_))));
        let old = text.replacen("v1", "v0", 1);
        assert!(matches!(read_rows(old.as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn infinite_lambda_survives_csv() {
        let spec = ExperimentSpec::from_toml_str(
            "n = [40]\np_in = [0.4]\np_out = [0.05]\neta = [0.3]\ntheta = [0.0]\n\
             algorithms = [\"algorithm1\"]\n",
        )
        .unwrap();
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.rows[0].lambda, Some(f64::INFINITY));
        let mut buf = Vec::new();
        write_rows(&out.rows, &mut buf).unwrap();
        assert_eq!(read_rows(buf.as_slice()).unwrap(), out.rows);
    }

    #[test]
    fn label_dump_layout() {
        let out = run_experiment(&small_spec("dump_labels = true\n")).unwrap();
        assert_eq!(out.labels.len(), 1);
        let mut buf = Vec::new();
        write_label_dump(&out.labels, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 61);
        assert_eq!(
            label_dump_path(Path::new("/tmp/out/run.csv")),
            PathBuf::from("/tmp/out/run.labels.csv")
        );
    }
}
