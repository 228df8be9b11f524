mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use epirecon::calibrate::{self, Bounds, CalibrationProblem, DIM};
use epirecon::chain::{self, MAX_ORDER};
use epirecon::discriminate::{self, Thresholds};
use epirecon::io;
use epirecon::models::{self, ModelDef, ModelId, ParamVector};
use epirecon::ode::{self, GridSpec, State};
use epirecon::reconstruct::{self, Method, ReconOptions};
use epirecon::{DerivativeChain, Error, Result};

const SUBCOMMANDS: [&str; 5] = ["simulate", "reconstruct", "discriminate", "calibrate", "report"];

#[derive(Parser, Debug)]
#[command(name = "epirecon", version, about = "Parameter and initial-state reconstruction for epidemic ODE models")]
#[command(args_override_self = true, allow_negative_numbers = true)]
struct Cli {
    /// Read flags from a `key = value` file; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Include wall-clock timings in the outputs.
    #[arg(long, global = true)]
    timing: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a model and write trajectory, observation and derivative files.
    Simulate(SimulateArgs),
    /// Recover parameters and initial state from a derivative file.
    Reconstruct(ReconstructArgs),
    /// Decide between SIR and SIRS dynamics.
    Discriminate(DiscriminateArgs),
    /// Fit the extended SIRS model to sampled observations.
    Calibrate(CalibrateArgs),
    /// Emit SIR/SIRS comparison data with the closeness bound.
    Report(ReportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Sampling {
    Continuous,
    Daily,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ChainKind {
    /// Regression recursion seeded from closed-form low-order derivatives.
    Analytic,
    /// Repeated Lie derivatives of the output.
    Lie,
}

#[derive(Args, Debug)]
#[command(args_override_self = true, allow_negative_numbers = true)]
struct SimulateArgs {
    #[arg(long)]
    model: String,
    /// Comma-separated parameter values in the model's order.
    #[arg(long)]
    theta: String,
    /// Comma-separated initial state.
    #[arg(long)]
    x0: String,
    #[arg(long, default_value_t = 0.03125)]
    h: f64,
    #[arg(long, default_value_t = 5.0)]
    tmax: f64,
    #[arg(long, value_enum, default_value_t = Sampling::Continuous)]
    sampling: Sampling,
    /// Highest output derivative in the chain file (default: what the model's
    /// reconstruction methods need, capped at 5).
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, value_enum, default_value_t = ChainKind::Analytic)]
    chain: ChainKind,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value = "sim")]
    prefix: String,
}

#[derive(Args, Debug)]
#[command(args_override_self = true, allow_negative_numbers = true)]
struct ReconstructArgs {
    /// Derivative file (`t,y,y_d1,...`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model: String,
    #[arg(long, default_value = "multitime")]
    method: String,
    /// Time window `a,b` for the multi-time method (default: whole file).
    #[arg(long)]
    window: Option<String>,
    /// Evaluation time for the Wronskian method (default: first sample).
    #[arg(long)]
    at: Option<f64>,
    #[arg(long, default_value_t = models::DEFAULT_TOL_SIR)]
    tol_sir: f64,
    /// Estimate derivatives by finite differences when the file has none.
    #[arg(long)]
    fd: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Approach {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Args, Debug)]
#[command(args_override_self = true, allow_negative_numbers = true)]
struct DiscriminateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Approach::Both)]
    approach: Approach,
    #[arg(long)]
    window: Option<String>,
    #[arg(long, default_value_t = models::DEFAULT_TOL_SIR)]
    tol_sir: f64,
    #[arg(long, default_value_t = discriminate::DEFAULT_DEP_TOL)]
    dep_tol: f64,
    #[arg(long)]
    fd: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true, allow_negative_numbers = true)]
struct CalibrateArgs {
    /// Observation file (`t,y`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = calibrate::DEFAULT_STARTS as u64,
          value_parser = clap::value_parser!(u64).range(1..))]
    starts: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = calibrate::DEFAULT_AMPLIFICATION)]
    amplification: f64,
    /// Inner integration step.
    #[arg(long, default_value_t = calibrate::DEFAULT_STEP)]
    h: f64,
    #[arg(long, default_value_t = calibrate::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Known `k,beta,gamma,mu,S0`, for absolute-error columns.
    #[arg(long)]
    truth: Option<String>,
    /// Lower bounds `k,beta,gamma,mu,S0` (default from the data).
    #[arg(long)]
    lower: Option<String>,
    /// Upper bounds `k,beta,gamma,mu,S0`.
    #[arg(long)]
    upper: Option<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value = "calibration")]
    prefix: String,
}

#[derive(Args, Debug)]
#[command(args_override_self = true, allow_negative_numbers = true)]
struct ReportArgs {
    #[arg(long, default_value_t = 2.5)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.001)]
    mu: f64,
    #[arg(long, default_value = "0.9,0.1")]
    x0: String,
    #[arg(long, default_value_t = 0.03125)]
    h: f64,
    #[arg(long, default_value_t = 25.0)]
    tmax: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("{what}: bad number '{}'", v.trim())))
        })
        .collect()
}

fn parse_fixed(s: &str, what: &str) -> Result<[f64; DIM]> {
    let v = parse_list(s, what)?;
    v.try_into().map_err(|v: Vec<f64>| Error::DimensionMismatch {
        expected: DIM,
        found: v.len(),
    })
}

fn parse_window(s: Option<&str>, chain: &DerivativeChain<f64>) -> Result<(f64, f64)> {
    match s {
        Some(s) => match parse_list(s, "window")?.as_slice() {
            [a, b] if a < b => Ok((*a, *b)),
            _ => Err(Error::Parse(format!("window '{s}' must be a,b with a < b"))),
        },
        None => {
            let first = chain.times[0];
            let last = chain.times[chain.len() - 1];
            Ok((first, last + chain.step()))
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, contents: &str) -> Result<()> {
    match output {
        Some(p) => write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn lookup_model(name: &str) -> Result<Box<dyn ModelDef<f64>>> {
    Ok(models::model::<f64>(name.parse::<ModelId>()?))
}

fn default_order(model: &dyn ModelDef<f64>) -> usize {
    let wr = reconstruct::wronskian_order(model);
    let top = model.blocks().iter().map(|b| b.top_order).max().unwrap_or(0);
    let needed = if wr <= MAX_ORDER { wr } else { top };
    needed.max(2).min(MAX_ORDER)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let model = lookup_model(&a.model)?;
    let theta = ParamVector(parse_list(&a.theta, "theta")?);
    let x0 = State(parse_list(&a.x0, "x0")?);
    let grid = GridSpec::new(a.h, a.tmax);
    let traj = ode::integrate(model.as_ref(), &theta, &x0, &grid)?;
    let names = model.output_names();
    let outputs: Vec<Vec<f64>> = traj.states.iter().map(|x| model.output(x, &theta)).collect();
    let base = |suffix: &str| a.out_dir.join(format!("{}_{suffix}.csv", a.prefix));
    write_file(&base("trajectory"), &io::trajectory_csv(model.as_ref(), &traj))?;
    match a.sampling {
        Sampling::Continuous => {
            write_file(&base("observations"), &io::observations_csv(names, &traj.times, &outputs))?;
            let order = a.order.unwrap_or_else(|| default_order(model.as_ref()));
            let chain = match a.chain {
                ChainKind::Analytic => chain::analytic_chain(model.as_ref(), &traj, order)?,
                ChainKind::Lie => chain::lie_chain(model.as_ref(), &traj, order)?,
            };
            write_file(&base("chain"), &io::chain_csv(names, &chain))?;
        }
        Sampling::Daily => {
            let per_day = 1.0 / a.h;
            let stride = per_day.round();
            if (per_day - stride).abs() > 1e-9 || stride < 1.0 {
                return Err(Error::InvalidGrid(format!(
                    "daily sampling needs 1/h to be an integer, got h={}",
                    a.h
                )));
            }
            let stride = stride as usize;
            let (times, outs): (Vec<f64>, Vec<Vec<f64>>) = traj
                .times
                .iter()
                .zip(&outputs)
                .step_by(stride)
                .map(|(t, y)| (*t, y.clone()))
                .unzip();
            write_file(&base("observations"), &io::observations_csv(names, &times, &outs))?;
        }
    }
    Ok(())
}

/// Chain from a file, estimating derivatives by finite differences on
/// request. Daily files never qualify.
fn load_chain(path: &Path, order_needed: usize, fd: bool) -> Result<(Vec<String>, DerivativeChain<f64>)> {
    let (names, chain) = io::parse_chain(&read_file(path)?)?;
    io::uniform_step(&chain.times)?;
    if chain.order >= order_needed {
        return Ok((names, chain));
    }
    if io::is_daily(&chain.times) {
        return Err(Error::MethodNeedsDerivatives(format!(
            "{} holds daily samples without derivatives; use `calibrate` for daily data",
            path.display()
        )));
    }
    if !fd {
        return Err(Error::MethodNeedsDerivatives(format!(
            "{} carries derivatives up to order {}, order {order_needed} is needed; \
             pass --fd to estimate them by finite differences",
            path.display(),
            chain.order
        )));
    }
    let h = chain.step();
    let mut fd_chain: Option<DerivativeChain<f64>> = None;
    for c in 0..chain.channels() {
        let one = chain::finite_difference_chain(&chain.series(c, 0), h, order_needed)?;
        match fd_chain.as_mut() {
            None => fd_chain = Some(one),
            Some(acc) => {
                acc.values.extend(one.values);
                for (b, o) in acc.boundary.iter_mut().zip(one.boundary) {
                    *b |= o;
                }
            }
        }
    }
    let fd_chain = fd_chain.expect("at least one channel").with_time_origin(chain.times[0]);
    Ok((names, fd_chain))
}

fn cmd_reconstruct(a: &ReconstructArgs, timing: bool) -> Result<()> {
    let model = lookup_model(&a.model)?;
    let method: Method = a.method.parse()?;
    let needed = match method {
        Method::MultiTime => model.blocks().iter().map(|b| b.top_order).max().unwrap_or(0),
        Method::Wronskian => reconstruct::wronskian_order(model.as_ref()),
    };
    if needed > MAX_ORDER {
        return Err(Error::OrderUnsupported {
            requested: needed,
            max: MAX_ORDER,
        });
    }
    let (names, chain) = load_chain(&a.input, needed, a.fd)?;
    if names.len() != model.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.output_dim(),
            found: names.len(),
        });
    }
    let opts = ReconOptions { tol_sir: a.tol_sir };
    let result = match method {
        Method::MultiTime => {
            let window = parse_window(a.window.as_deref(), &chain)?;
            reconstruct::reconstruct_multitime(model.as_ref(), &chain, window, &opts)?
        }
        Method::Wronskian => {
            let at = a.at.unwrap_or(chain.times[0]);
            reconstruct::reconstruct_wronskian(model.as_ref(), &chain, at, &opts)?
        }
    };
    let doc = io::reconstruction_json(model.as_ref(), &result, timing);
    emit(a.output.as_deref(), &io::to_json_string(&doc))
}

fn cmd_discriminate(a: &DiscriminateArgs) -> Result<()> {
    let (names, chain) = load_chain(&a.input, 2, a.fd)?;
    if names.len() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: names.len(),
        });
    }
    let window = parse_window(a.window.as_deref(), &chain)?;
    let th = Thresholds {
        tol_sir: a.tol_sir,
        dep_tol: a.dep_tol,
    };
    let a1 = match a.approach {
        Approach::One | Approach::Both => Some(discriminate::discriminate_approach1(&chain, window, &th)?),
        Approach::Two => None,
    };
    let a2 = match a.approach {
        Approach::Two | Approach::Both => Some(discriminate::discriminate_approach2(&chain, window, &th)?),
        Approach::One => None,
    };
    let doc = io::verdict_json(window, &th, a1.as_ref(), a2.as_ref());
    emit(a.output.as_deref(), &io::to_json_string(&doc))
}

fn cmd_calibrate(a: &CalibrateArgs, timing: bool) -> Result<()> {
    let (names, chain) = io::parse_chain(&read_file(&a.input)?)?;
    if names.len() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: names.len(),
        });
    }
    let observations: Vec<(f64, f64)> = chain
        .times
        .iter()
        .zip(chain.series(0, 0))
        .map(|(&t, y)| (t, y))
        .collect();
    let mut problem = CalibrationProblem::new(observations);
    problem.starts = a.starts as usize;
    problem.seed = a.seed;
    problem.amplification = a.amplification;
    problem.h = a.h;
    problem.max_iter = a.max_iter;
    problem.truth = a.truth.as_deref().map(|s| parse_fixed(s, "truth")).transpose()?;
    let defaults = problem.bounds;
    problem.bounds = Bounds {
        lo: a.lower.as_deref().map(|s| parse_fixed(s, "lower")).transpose()?.unwrap_or(defaults.lo),
        hi: a.upper.as_deref().map(|s| parse_fixed(s, "upper")).transpose()?.unwrap_or(defaults.hi),
    };
    let run = calibrate::calibrate(&problem)?;
    let base = |suffix: &str| a.out_dir.join(format!("{}_{suffix}", a.prefix));
    write_file(&base("results.csv"), &io::calibration_csv(&problem, &run, timing))?;
    let summary = io::calibration_summary_json(&problem, &run, timing);
    write_file(&base("summary.json"), &io::to_json_string(&summary))
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let x0 = State(parse_list(&a.x0, "x0")?);
    let grid = GridSpec::new(a.h, a.tmax);
    let report = discriminate::closeness_bound_check(a.beta, a.gamma, a.mu, &x0, &grid)?;
    emit(a.output.as_deref(), &io::report_csv(&report))
}

fn run(cli: &Cli) -> Result<()> {
    let clock = Instant::now();
    let out = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Reconstruct(a) => cmd_reconstruct(a, cli.timing),
        Command::Discriminate(a) => cmd_discriminate(a),
        Command::Calibrate(a) => cmd_calibrate(a, cli.timing),
        Command::Report(a) => cmd_report(a),
    };
    if cli.timing {
        eprintln!("{}", json!({"elapsed_seconds": io::json_f64(clock.elapsed().as_secs_f64())}));
    }
    out
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({"kind": kind, "message": message}));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args().collect(), &SUBCOMMANDS) {
        Ok(v) => v,
        Err(e) => return fail(e.kind(), &e.to_string(), 2),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("BadArgs", e.to_string().trim(), 2),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string(), 1),
    }
}
