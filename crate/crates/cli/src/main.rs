use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sbm_ssl::graph::{load_edge_list, ModelParams};
use sbm_ssl::harness::{
    format_table, label_dump_path, load_rows, run_experiment, summarize, write_label_dump,
    write_rows, ExperimentSpec,
};
use sbm_ssl::meanfield::{
    accurate_oracle_bound, classification_conditions, clip_fraction, concentration_bound,
    meanfield_solution, misclassification_bound, snr, spectral_gap,
};
use sbm_ssl::oracle::load_labels;
use sbm_ssl::ssl::{lambda_of, solve_noisy, solve_perfect, tau_of, AlphaPolicy, SolverOptions, SslParams};

#[derive(Parser)]
#[command(name = "sbm-ssl", version, about = "Semi-supervised community detection on stochastic block models")]
struct Cli {
    /// Worker threads for experiment sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep described by a TOML spec file.
    Run(RunArgs),
    /// Aggregate a results CSV into means and standard errors.
    Summarize(SummarizeArgs),
    /// Classify the nodes of an edge-list graph from seed labels.
    Solve(SolveArgs),
    /// Print mean-field closed forms and bounds for a model.
    Meanfield(MeanfieldArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Results CSV; overrides `output` in the spec. Stdout when neither is set.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides `base_seed` in the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write `<output stem>.labels.csv` with truth and oracle labels.
    #[arg(long)]
    dump_labels: bool,
}

#[derive(Args)]
struct SummarizeArgs {
    csv: PathBuf,
    /// Also write the summary as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Edge list with a `# n=<n>` header.
    #[arg(long)]
    graph: PathBuf,
    /// `node label` lines with labels in {-1, 1}.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    tau: f64,
    /// Oracle weight; `inf` clamps the labeled nodes.
    #[arg(long)]
    lambda: f64,
    /// Shift of the linear system; defaults to the spectral norm of A_tau.
    #[arg(long)]
    alpha: Option<f64>,
    /// Seed of the spectral-norm power iteration.
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Output CSV `node,score,label`; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MeanfieldArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p_in: f64,
    #[arg(long)]
    p_out: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    /// Defaults to the MAP-derived value.
    #[arg(long)]
    lambda: Option<f64>,
    /// Bound constants to evaluate.
    #[arg(long = "constant", default_values_t = vec![1.0, 10.0])]
    constants: Vec<f64>,
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn output_writer(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(args: RunArgs) -> CliResult {
    let mut spec = ExperimentSpec::load(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.base_seed = seed;
    }
    if args.dump_labels {
        spec.dump_labels = true;
    }
    let output = args.output.or_else(|| spec.output.clone());
    if spec.dump_labels && output.is_none() {
        return Err("--dump-labels needs an output path".into());
    }
    let out = run_experiment(&spec)?;
    let failures = out.rows.iter().filter(|r| r.failed()).count();
    write_rows(&out.rows, output_writer(output.as_deref())?)?;
    if let Some(path) = &output {
        if spec.dump_labels {
            let dump = label_dump_path(path);
            write_label_dump(&out.labels, BufWriter::new(File::create(&dump)?))?;
            log::info!("labels written to {}", dump.display());
        }
        eprintln!("{} rows written to {} ({failures} failed)", out.rows.len(), path.display());
        eprint!("{}", format_table(&summarize(&out.rows)));
    } else if failures > 0 {
        eprintln!("{failures} rows failed");
    }
    Ok(())
}

fn summarize_cmd(args: SummarizeArgs) -> CliResult {
    let rows = load_rows(&args.csv)?;
    let summary = summarize(&rows);
    print!("{}", format_table(&summary));
    if let Some(path) = args.json {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &summary)?;
        writeln!(w)?;
    }
    Ok(())
}

fn solve(args: SolveArgs) -> CliResult {
    let g = load_edge_list(&args.graph)?;
    let s = load_labels(&args.labels, g.n())?;
    let alpha = match args.alpha {
        Some(a) => AlphaPolicy::Explicit(a),
        None => AlphaPolicy::SpectralNorm,
    };
    let params = SslParams::new(args.tau, args.lambda, alpha)?;
    let opts = SolverOptions {
        seed: args.seed,
        ..SolverOptions::default()
    };
    let sol = if args.lambda.is_infinite() {
        solve_perfect(&g, &s, &params, &opts)?
    } else {
        solve_noisy(&g, &s, &params, &opts)?
    };
    log::info!(
        "alpha = {}, {} CG iterations, relative residual {:e}",
        sol.alpha,
        sol.report.iterations,
        sol.report.relative_residual
    );
    let mut w = output_writer(args.output.as_deref())?;
    writeln!(w, "node,score,label")?;
    for (i, (x, l)) in sol.scores.x.iter().zip(&sol.scores.labels).enumerate() {
        writeln!(w, "{i},{x},{l}")?;
    }
    w.flush()?;
    Ok(())
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn meanfield(args: MeanfieldArgs) -> CliResult {
    let model = ModelParams::new(args.n, args.p_in, args.p_out, args.eta, args.theta)?;
    let tau = tau_of(model.p_in, model.p_out)?;
    let lambda = match args.lambda {
        Some(l) => l,
        None => lambda_of(model.eta, model.theta, model.p_in, model.p_out)?,
    };
    let n = model.n as f64;
    let mut report = json!({
        "n": model.n,
        "p_in": model.p_in,
        "p_out": model.p_out,
        "eta": model.eta,
        "theta": model.theta,
        "tau": tau,
        "lambda": finite_or_null(lambda),
        "avg_degree": model.avg_degree(),
        "alpha_mf": model.alpha_mf(),
        "snr": snr(n * model.p_in, n * model.p_out).ok(),
        "spectral_gap": finite_or_null(spectral_gap(&model, lambda)),
    });
    match meanfield_solution(&model, lambda) {
        Ok(sol) => {
            let c = classification_conditions(&model, lambda)?;
            report["error_rate"] = json!(sol.s);
            report["gamma1"] = json!(sol.gamma1);
            report["gamma2"] = json!(sol.gamma2);
            report["delta"] = json!(sol.delta);
            report["classification"] = json!({
                "unlabeled_ok": c.unlabeled_ok,
                "correct_labeled_ok": c.correct_labeled_ok,
                "wrong_labeled_ok": c.wrong_labeled_ok,
            });
        }
        Err(e) => report["meanfield_error"] = json!(e.to_string()),
    }
    let mut bounds = Vec::new();
    for &c in &args.constants {
        let mis = misclassification_bound(&model, lambda, c)?;
        bounds.push(json!({
            "constant": c,
            "concentration": finite_or_null(concentration_bound(&model, lambda, c)?),
            "misclassification": finite_or_null(mis),
            "misclassification_clipped": clip_fraction(mis),
            "accurate_oracle": finite_or_null(accurate_oracle_bound(&model, c)?),
        }));
    }
    report["bounds"] = json!(bounds);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Solve(a) => solve(a),
        Command::Meanfield(a) => meanfield(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
