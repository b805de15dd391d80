//! `coopgrid`: robust cooperative dispatch and payoff allocation from the
//! command line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use coopgrid::dispatch::{build_counterpart, solve_dispatch, DispatchMode, Market};
use coopgrid::imputation::{BendersConfig, Method};
use coopgrid::report::{
    run_cases, run_imputation, run_sweep, run_verify, sweep_csv, verification_text, ImputationOptions, SearchKind,
};
use coopgrid::scenario::to_json;
use coopgrid::synthetic::{generate, SyntheticOptions};
use coopgrid::{load_scenario, Coalition, Error, ErrorKind, Scenario};
use coopgrid_conic::SolverConfig;

const EXIT_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_GUARD: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "coopgrid",
    version,
    about = "Robust cooperative dispatch and payoff allocation for prosumer coalitions"
)]
struct Cli {
    /// Worker threads for coalition solves.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Wall-clock limit per solve, in seconds.
    #[arg(long, global = true, env = "COOPGRID_TIME_LIMIT")]
    time_limit: Option<f64>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Output {
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Target {
    /// Coalition as a bitmask (bit 0 is the first prosumer); defaults to everyone.
    #[arg(long, value_parser = parse_coalition)]
    coalition: Option<Coalition>,

    #[arg(long, default_value = "joint-data", value_parser = parse_mode)]
    mode: DispatchMode,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a scenario file.
    Validate { scenario: PathBuf },
    /// Solve one coalition's robust dispatch and print the schedule as JSON.
    Solve {
        scenario: PathBuf,
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        output: Output,
    },
    /// Print one coalition's payoff.
    Value {
        scenario: PathBuf,
        #[command(flatten)]
        target: Target,
    },
    /// Compare stand-alone operation, energy-only trading and trading with pooled data.
    Cases {
        scenario: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Divide the grand coalition's payoff.
    Impute {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// Credit energy contributions only: proper coalitions are valued without data sharing.
        #[arg(long)]
        electricity_only_attribution: bool,
        /// Max-excess search used by the least-core method.
        #[arg(long, default_value = "membership", value_parser = parse_search)]
        search: SearchKind,
        /// Write the least-core iteration log (CSV) here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Record wall-clock seconds in the iteration log.
        #[arg(long)]
        timings: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Value of pooled data as all tariff prices are scaled.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5, 2.0])]
        multipliers: Vec<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Check a solved schedule against sampled deviations.
    Verify {
        scenario: PathBuf,
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Defaults to the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the conic program of one coalition in text form.
    DumpProgram {
        scenario: PathBuf,
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        output: Output,
    },
    /// Write a seeded synthetic scenario.
    Generate {
        #[arg(long, default_value_t = 4)]
        prosumers: usize,
        #[arg(long, default_value_t = 4)]
        periods: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Per-renewable boxes only, without ellipsoids.
        #[arg(long)]
        box_only: bool,
        #[command(flatten)]
        output: Output,
    },
}

fn parse_coalition(s: &str) -> Result<Coalition, String> {
    let bits = match s.strip_prefix("0b") {
        Some(b) => u64::from_str_radix(b, 2),
        None => match s.strip_prefix("0x") {
            Some(h) => u64::from_str_radix(h, 16),
            None => s.parse(),
        },
    }
    .map_err(|e| format!("bad bitmask `{s}`: {e}"))?;
    if bits == 0 {
        return Err("coalition bitmask must be nonzero".into());
    }
    Ok(Coalition(bits))
}

fn parse_mode(s: &str) -> Result<DispatchMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_search(s: &str) -> Result<SearchKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure of a subcommand with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Input => EXIT_INPUT,
            ErrorKind::Solver => EXIT_SOLVER,
            ErrorKind::Guard => EXIT_GUARD,
        };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: EXIT_FAILED, message: format!("cannot write {}: {e}", path.display()) }
}

fn emit(output: &Output, text: &str) -> Result<(), Failure> {
    match &output.out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| io_failure(Path::new("stdout"), e))
        }
    }
}

fn market(path: &Path) -> Result<Arc<Market>, Failure> {
    let s = load_scenario(path)?;
    Ok(Arc::new(Market::new(s)?))
}

fn target_coalition(s: &Scenario, t: &Target) -> Result<Coalition, Failure> {
    let c = t.coalition.unwrap_or_else(|| s.grand());
    if !c.is_subset_of(s.grand()) {
        return Err(Error::InvalidArgument(format!(
            "coalition bitmask {} names prosumers beyond the {} in the scenario",
            c.bits(),
            s.num_prosumers()
        ))
        .into());
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = SolverConfig { time_limit: cli.time_limit, ..SolverConfig::default() };
    cfg.validate().map_err(|e| Failure { code: EXIT_INPUT, message: e.to_string() })?;
    match cli.command {
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario)?;
            for w in s.validate().warnings {
                log::warn!("{w}");
            }
            println!(
                "{}: valid ({} prosumers, {} periods, {} renewables)",
                s.name,
                s.num_prosumers(),
                s.periods(),
                s.num_drgs()
            );
        }
        Command::Solve { scenario, target, output } => {
            let m = market(&scenario)?;
            let c = target_coalition(m.scenario(), &target)?;
            let v = solve_dispatch(&m, c, target.mode, &cfg)?;
            let mut text = serde_json::to_string_pretty(&v).expect("values serialise");
            text.push('\n');
            emit(&output, &text)?;
        }
        Command::Value { scenario, target } => {
            let m = market(&scenario)?;
            let c = target_coalition(m.scenario(), &target)?;
            let v = solve_dispatch(&m, c, target.mode, &cfg)?;
            println!("{c} {} {:.6}", target.mode, v.value);
        }
        Command::Cases { scenario, output } => {
            let m = market(&scenario)?;
            let report = run_cases(&m, &cfg);
            emit(&output, &report.to_csv())?;
            if report.failures() > 0 {
                return Err(Failure { code: EXIT_SOLVER, message: format!("{} case(s) failed", report.failures()) });
            }
        }
        Command::Impute { scenario, method, electricity_only_attribution, search, log, timings, output } => {
            let m = market(&scenario)?;
            let opts = ImputationOptions {
                electricity_only_attribution,
                search,
                benders: BendersConfig { record_timings: timings, ..BendersConfig::from_solver(&cfg) },
            };
            let r = run_imputation(&m, method, &opts, &cfg)?;
            let mut text = r.to_csv();
            match &r.core_violations {
                Some(v) if v.is_empty() => text.push_str("# core: no coalition has positive excess\n"),
                Some(v) => {
                    for (c, e) in v {
                        text.push_str(&format!("# core violation: {c} excess {e:.6}\n"));
                    }
                }
                None => text.push_str("# core: not checked (too many prosumers)\n"),
            }
            if let Some(lc) = &r.least_core {
                text.push_str(&format!(
                    "# least core: mu {:.6}, {} iterations, {}\n",
                    lc.mu,
                    lc.iterations(),
                    if lc.converged { "converged" } else { "not converged" }
                ));
                if let Some(path) = &log {
                    std::fs::write(path, lc.log.to_csv()).map_err(|e| io_failure(path, e))?;
                }
            }
            emit(&output, &text)?;
        }
        Command::Sweep { scenario, multipliers, output } => {
            let s = load_scenario(&scenario)?;
            let rows = run_sweep(&s, &multipliers, &cfg)?;
            emit(&output, &sweep_csv(&rows))?;
        }
        Command::Verify { scenario, target, samples, seed } => {
            let m = market(&scenario)?;
            let c = target_coalition(m.scenario(), &target)?;
            let seed = seed.unwrap_or(m.scenario().seed);
            let r = run_verify(&m, c, target.mode, samples, seed, &cfg)?;
            print!("{}", verification_text(&r));
            if !r.passed() {
                return Err(Failure { code: EXIT_FAILED, message: "recourse violations found".into() });
            }
        }
        Command::DumpProgram { scenario, target, output } => {
            let m = market(&scenario)?;
            let c = target_coalition(m.scenario(), &target)?;
            let rc = build_counterpart(&m, c, target.mode)?;
            emit(&output, &coopgrid_conic::text::dump(&rc.program))?;
        }
        Command::Generate { prosumers, periods, seed, box_only, output } => {
            if prosumers == 0 || periods == 0 {
                return Err(Error::InvalidArgument("need at least one prosumer and one period".into()).into());
            }
            let s = generate(&SyntheticOptions { prosumers, periods, seed, box_only, ..SyntheticOptions::default() });
            emit(&output, &to_json(&s))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build_global() {
        log::warn!("thread pool already initialised: {e}");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
