use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use kppdr::mixsim::{self, Aggregation, InitMode, MixingTrace, TrialConfig};
use kppdr::numsolve::{self, SolveConfig};
use kppdr::optimal::{self, CERTIFICATE_TOL};
use kppdr::stratify;
use kppdr::{
    assemble, build_graph, metropolis_hastings, Error, Family, LayerKind, OrbitProbabilities, TopologySpec,
};

const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_CERTIFICATE: u8 = 4;
const EXIT_NONCONVERGENCE: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "kppdr", version, about = "Fastest mixing Markov chains on K-partite networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write output to FILE instead of standard output.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Round floating output to 9 significant digits.
    #[arg(long, global = true)]
    human: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the edge list of a network.
    Build(SpecArgs),
    /// SLEM and full spectrum for given per-orbit probabilities.
    Slem {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        probs: String,
    },
    /// Closed-form optimal probabilities.
    Optimal(SpecArgs),
    /// Metropolis-Hastings probabilities.
    Mh(SpecArgs),
    /// Dual certificate for the symmetric family.
    Certify {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
    },
    /// Block decomposition and spectrum partition report.
    Stratify {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = "optimal")]
        probs: String,
    },
    /// Numerical SLEM minimization.
    Optimize {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 20_000)]
        max_evals: usize,
        /// Do not seed the search with the closed-form optimum.
        #[arg(long)]
        no_closed_form_start: bool,
    },
    /// Averaging simulation; prints the mixing trace as CSV.
    Simulate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = "optimal")]
        probs: String,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = InitArg::RandomUniform)]
        init: InitArg,
        #[arg(long, value_enum, default_value_t = AggregationArg::Arithmetic)]
        aggregation: AggregationArg,
    },
    /// Run several simulations from a JSON file and compare them.
    Compare {
        #[arg(long, value_name = "FILE")]
        specs: PathBuf,
        /// Also write all traces in long CSV format.
        #[arg(long, value_name = "FILE")]
        traces: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct SpecArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    n: usize,
    /// Comma-separated layer kinds, e.g. full,strait,full.
    #[arg(long)]
    pattern: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitArg {
    RandomUniform,
    PointMass,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AggregationArg {
    Arithmetic,
    Geometric,
}

impl From<InitArg> for InitMode {
    fn from(a: InitArg) -> Self {
        match a {
            InitArg::RandomUniform => InitMode::RandomUniform,
            InitArg::PointMass => InitMode::PointMass,
        }
    }
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Arithmetic => Aggregation::Arithmetic,
            AggregationArg::Geometric => Aggregation::Geometric,
        }
    }
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible { .. } | Error::NotStochastic(_) => EXIT_INFEASIBLE,
            Error::NonConvergence { .. } | Error::NumericalFloor { .. } => EXIT_NONCONVERGENCE,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl Failure {
    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure { code: 1, message: format!("{}: {e}", path.display()) }
    }
}

/// Output of a subcommand, with the exit code to report after it is written.
struct Outcome {
    body: Body,
    code: u8,
    diagnostic: Option<String>,
}

enum Body {
    Json(Value),
    Text(String),
    Csv(Vec<f64>),
}

impl Outcome {
    fn json<T: Serialize>(value: &T) -> Self {
        Outcome {
            body: Body::Json(serde_json::to_value(value).expect("serializable output")),
            code: 0,
            diagnostic: None,
        }
    }

    fn with_code(mut self, code: u8, diagnostic: String) -> Self {
        self.code = code;
        self.diagnostic = Some(diagnostic);
        self
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if let Some(d) = &outcome.diagnostic {
                eprintln!("kppdr: {d}");
            }
            let text = render(&outcome.body, cli.human);
            if let Err(f) = emit(cli.out.as_deref(), &text) {
                eprintln!("kppdr: {}", f.message);
                return ExitCode::from(f.code);
            }
            ExitCode::from(outcome.code)
        }
        Err(f) => {
            eprintln!("kppdr: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Failure::io(Path::new("<stdout>"), e))
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    match &cli.command {
        Command::Build(args) => {
            let graph = build_graph(&args.to_spec()?)?;
            Ok(Outcome { body: Body::Text(graph.to_edge_list()), code: 0, diagnostic: None })
        }
        Command::Slem { spec, probs } => {
            let spec = spec.to_spec()?;
            let probs = resolve_probs(&spec, probs)?;
            let p = assemble(&spec, &probs)?;
            let spectrum = p.spectrum()?;
            let slem = kppdr::slem_of_spectrum(&spectrum)?;
            Ok(Outcome::json(&serde_json::json!({
                "spec": spec,
                "probs": probs,
                "slem": slem,
                "spectrum": spectrum,
            })))
        }
        Command::Optimal(args) => {
            let result = optimal::optimal_probabilities(&args.to_spec()?)?;
            let outcome = Outcome::json(&result);
            Ok(match &result.infeasibility {
                Some(why) => outcome.with_code(EXIT_INFEASIBLE, format!("closed form is infeasible: {why}")),
                None => outcome,
            })
        }
        Command::Mh(args) => {
            let spec = args.to_spec()?;
            let graph = build_graph(&spec)?;
            let probs = metropolis_hastings(&graph);
            let slem = kppdr::slem(&assemble(&spec, &probs)?)?;
            Ok(Outcome::json(&serde_json::json!({ "spec": spec, "probs": probs, "slem": slem })))
        }
        Command::Certify { k, n } => {
            let cert = optimal::dual_certificate(*k, *n)?;
            let outcome = Outcome::json(&cert);
            Ok(if cert.is_certified(CERTIFICATE_TOL) {
                outcome
            } else {
                let worst = cert.max_residual();
                outcome.with_code(
                    EXIT_CERTIFICATE,
                    format!("certificate fails: largest residual {worst:e} ≥ {CERTIFICATE_TOL:e}"),
                )
            })
        }
        Command::Stratify { spec, probs } => {
            let spec = spec.to_spec()?;
            let probs = resolve_probs(&spec, probs)?;
            let blocks = stratify::decompose(&spec, &probs)?;
            let report = stratify::verify_spectrum_partition(&spec, &probs)?;
            Ok(Outcome::json(&serde_json::json!({
                "spec": spec,
                "probs": probs,
                "quotient_block": blocks.quotient,
                "residual_diagonals": blocks.residual_diagonals,
                "partition_holds": report.partition_holds(),
                "report": report,
            })))
        }
        Command::Optimize { spec, seed, tol, restarts, max_evals, no_closed_form_start } => {
            let spec = spec.to_spec()?;
            let cfg = SolveConfig {
                tol: *tol,
                max_evals: *max_evals,
                restarts: *restarts,
                seed: *seed,
                closed_form_start: !no_closed_form_start,
            };
            let result = numsolve::minimize_slem(&spec, &cfg)?;
            let outcome = Outcome::json(&result);
            Ok(if result.converged {
                outcome
            } else {
                outcome.with_code(EXIT_NONCONVERGENCE, "optimizer did not converge".into())
            })
        }
        Command::Simulate { spec, probs, trials, iters, seed, init, aggregation } => {
            let spec = spec.to_spec()?;
            let probs = resolve_probs(&spec, probs)?;
            let cfg = TrialConfig {
                trials: *trials,
                iterations: *iters,
                seed: *seed,
                init: (*init).into(),
                aggregation: (*aggregation).into(),
            };
            let trace = mixsim::simulate(&assemble(&spec, &probs)?, &cfg)?;
            Ok(Outcome { body: Body::Csv(trace.distances), code: 0, diagnostic: None })
        }
        Command::Compare { specs, traces } => compare(specs, traces.as_deref()),
    }
}

impl SpecArgs {
    fn to_spec(&self) -> Result<TopologySpec, Failure> {
        let mut spec = TopologySpec::new(self.family, self.k, self.n);
        if let Some(text) = &self.pattern {
            spec = spec.with_pattern(parse_pattern(text)?);
        }
        spec.layers()?;
        Ok(spec)
    }
}

fn parse_pattern(text: &str) -> Result<Vec<LayerKind>, Failure> {
    text.split(',').map(|t| t.trim().parse::<LayerKind>().map_err(Failure::from)).collect()
}

fn resolve_probs(spec: &TopologySpec, text: &str) -> Result<OrbitProbabilities, Failure> {
    match text.trim() {
        "optimal" => Ok(optimal::optimal_probabilities(spec)?.probs),
        "mh" => Ok(metropolis_hastings(&build_graph(spec)?)),
        list => Ok(OrbitProbabilities::parse(list)?),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareFile {
    #[serde(default = "default_window")]
    window: usize,
    runs: Vec<RunSpec>,
}

fn default_window() -> usize {
    30
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ProbsSpec {
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSpec {
    label: String,
    family: Family,
    k: usize,
    n: usize,
    #[serde(default)]
    pattern: Option<Vec<LayerKind>>,
    #[serde(default = "default_probs")]
    probs: ProbsSpec,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_iters")]
    iters: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_init")]
    init: InitMode,
    #[serde(default = "default_aggregation")]
    aggregation: Aggregation,
}

fn default_probs() -> ProbsSpec {
    ProbsSpec::Named("optimal".into())
}

fn default_trials() -> usize {
    TrialConfig::default().trials
}

fn default_iters() -> usize {
    TrialConfig::default().iterations
}

fn default_init() -> InitMode {
    TrialConfig::default().init
}

fn default_aggregation() -> Aggregation {
    TrialConfig::default().aggregation
}

fn compare(path: &Path, traces_out: Option<&Path>) -> Result<Outcome, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let file: CompareFile = serde_json::from_str(&text)
        .map_err(|e| Failure { code: EXIT_USAGE, message: format!("{}: {e}", path.display()) })?;

    let mut traces: Vec<MixingTrace> = Vec::with_capacity(file.runs.len());
    for run in &file.runs {
        let mut spec = TopologySpec::new(run.family, run.k, run.n);
        if let Some(pattern) = &run.pattern {
            spec = spec.with_pattern(pattern.clone());
        }
        let probs = match &run.probs {
            ProbsSpec::Named(name) => resolve_probs(&spec, name)?,
            ProbsSpec::Values(v) => OrbitProbabilities::new(v.clone())?,
        };
        let cfg = TrialConfig {
            trials: run.trials,
            iterations: run.iters,
            seed: run.seed,
            init: run.init,
            aggregation: run.aggregation,
        };
        let trace = mixsim::simulate(&assemble(&spec, &probs)?, &cfg)?;
        traces.push(trace.with_label(run.label.clone()));
    }

    if let Some(out) = traces_out {
        fs::write(out, mixsim::long_format_csv(&traces)).map_err(|e| Failure::io(out, e))?;
    }
    let report = mixsim::compare(&traces, file.window)?;
    let runs: Vec<Value> = traces
        .iter()
        .map(|t| serde_json::json!({ "label": t.label, "meta": t.meta, "redraws": t.redraws }))
        .collect();
    Ok(Outcome::json(&serde_json::json!({ "runs": runs, "report": report })))
}

fn render(body: &Body, human: bool) -> String {
    match body {
        Body::Json(v) => {
            let v = if human { round_value(v) } else { v.clone() };
            let mut s = serde_json::to_string_pretty(&v).expect("valid JSON");
            s.push('\n');
            s
        }
        Body::Text(t) => t.clone(),
        Body::Csv(distances) => {
            let mut out = String::from("iteration,distance\n");
            for (t, d) in distances.iter().enumerate() {
                let d = if human { format!("{}", round_sig(*d)) } else { format!("{d:?}") };
                out.push_str(&format!("{t},{d}\n"));
            }
            out
        }
    }
}

fn round_sig(x: f64) -> f64 {
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn round_value(v: &Value) -> Value {
    match v {
        Value::Number(num) if !num.is_i64() && !num.is_u64() => num
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round_sig(x)))
            .map(Value::Number)
            .unwrap_or_else(|| v.clone()),
        Value::Array(items) => Value::Array(items.iter().map(round_value).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, x)| (k.clone(), round_value(x))).collect()),
        other => other.clone(),
    }
}
