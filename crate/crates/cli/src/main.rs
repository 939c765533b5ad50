use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mdplab::anderson::StabilizationConfig;
use mdplab::harness::{
    estimate_rate, reports_to_json, run_algorithm, run_cell, theoretical_rate, Algorithm,
    ExperimentReport, RunParams, Suite,
};
use mdplab::instances::{generate, load_mdp, save_mdp, GenKind, GenSpec};
use mdplab::{Error, Policy, SolverConfig, SolverTrace};
use rayon::prelude::*;
use serde_json::json;

const EXIT_NOT_CONVERGED: u8 = 1;
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "mdplab", version, about = "Solvers for discounted Markov decision processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance and write it as JSON.
    Gen(GenArgs),
    /// Solve an instance with one algorithm.
    Solve(SolveArgs),
    /// Fit a linear convergence rate to a trace CSV.
    Rates {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run a benchmark suite and write one report per cell.
    Bench {
        /// Suite file, or `default` for the shipped suite.
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: GenKind,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    a: usize,
    #[arg(long, default_value_t = 0.9)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_parser = parse_algo)]
    algo: Algorithm,
    #[arg(long)]
    mdp: PathBuf,
    /// Policy JSON: evaluated by vc/avc/mvc, starting policy for pi/mdvi.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta_momentum: Option<f64>,
    /// Inverse temperature for newton-beta.
    #[arg(long)]
    beta_smooth: Option<f64>,
    /// Anderson memory.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=10))]
    memory: Option<u8>,
    /// Mirror-descent step size (`inf` for greedy updates).
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<GenKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Input(String),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn io_context(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Rates { trace } => cmd_rates(&trace),
        Command::Bench { suite, out } => cmd_bench(&suite, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("not converged: {msg}");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let spec = GenSpec::new(args.kind, args.n, args.a, args.lambda, args.seed);
    let mdp = generate(&spec)?;
    save_mdp(&mdp, &args.out)?;
    println!(
        "wrote {} (n={}, a={}, lambda={})",
        args.out.display(),
        mdp.n(),
        mdp.a(),
        mdp.lambda()
    );
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    let mdp = load_mdp(&args.mdp)?;
    let policy = match &args.policy {
        Some(path) => {
            let file = File::open(path).map_err(io_context(path))?;
            let p: Policy = serde_json::from_reader(BufReader::new(file)).map_err(Error::from)?;
            Some(p)
        }
        None => None,
    };
    let mut config = SolverConfig::default();
    if let Some(t) = args.tol {
        config.tol = t;
    }
    if let Some(m) = args.max_iter {
        config.max_iter = m;
    }
    config.alpha = args.alpha;
    config.gamma = args.gamma;
    config.beta_momentum = args.beta_momentum;
    if let Some(eta) = args.eta {
        config.eta_mirror = eta;
    }
    let params = RunParams {
        config,
        policy,
        beta_smooth: args.beta_smooth,
        stabilization: args
            .memory
            .map(|m| StabilizationConfig::default().with_memory(usize::from(m))),
    };
    let out = run_algorithm(&mdp, args.algo, &params)?;
    if let Some(path) = &args.trace_out {
        let file = File::create(path).map_err(io_context(path))?;
        match &out.pi_trace {
            Some(pt) => pt.write_csv(BufWriter::new(file))?,
            None => out.trace.write_csv(BufWriter::new(file))?,
        }
    }
    let policy = out.policy.as_ref().map(|p| match p.actions() {
        Some(actions) => json!(actions),
        None => json!((0..p.n()).map(|s| p.row(s).to_vec()).collect::<Vec<_>>()),
    });
    let summary = json!({
        "algorithm": args.algo.name(),
        "termination": out.trace.termination,
        "iterations": out.trace.iterations,
        "final_residual": out.trace.final_residual(),
        "theoretical_rate": theoretical_rate(&mdp, args.algo, &params.config),
        "rate_fit": estimate_rate(&out.trace).ok(),
        "value": out.value,
        "policy": policy,
    });
    println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    if out.trace.converged() {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "{} stopped with {:?} after {} iterations (residual {:e})",
            args.algo,
            out.trace.termination,
            out.trace.iterations,
            out.trace.final_residual()
        )))
    }
}

fn cmd_rates(path: &Path) -> Result<(), Failure> {
    let file = File::open(path).map_err(io_context(path))?;
    let trace = SolverTrace::read_csv(BufReader::new(file))?;
    let fit = estimate_rate(&trace)?;
    println!("{}", serde_json::to_string_pretty(&fit).map_err(Error::from)?);
    Ok(())
}

fn cmd_bench(suite: &str, out: &Path) -> Result<(), Failure> {
    let suite = if suite == "default" {
        mdplab::harness::default_suite()
    } else {
        let path = Path::new(suite);
        let text = std::fs::read_to_string(path).map_err(io_context(path))?;
        Suite::from_json(&text)?
    };
    let reports: Vec<ExperimentReport> = suite
        .cells
        .par_iter()
        .enumerate()
        .map(|(i, c)| run_cell(i, c))
        .collect();
    std::fs::write(out, reports_to_json(&reports)?).map_err(io_context(out))?;
    for r in &reports {
        println!(
            "{:>3} {:<36} {:<12} iters={:<7} residual={:<10.3e} rate={:<8} theory={:<8} {}",
            r.cell,
            r.instance_id,
            r.algorithm.name(),
            r.iterations,
            r.final_residual,
            r.rate_fit
                .as_ref()
                .map_or("-".to_string(), |f| format!("{:.4}", f.rate)),
            r.theoretical_rate
                .map_or("-".to_string(), |t| format!("{t:.4}")),
            if r.pass { "PASS" } else { "FAIL" },
        );
        if let Some(e) = &r.error {
            println!("    error: {e}");
        }
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    println!("{} cells, {} failed", reports.len(), failed);
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!("{failed} cells did not pass")))
    }
}
