use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mra_core::diagnose::{self, DiagnoseConfig};
use mra_core::experiments::{self, SweepSpec};
use mra_core::oracle::{self, OracleConfig};
use mra_core::{solve, Error, InnerMethod, Mode, Scenario, SolverConfig};

/// Joint bandwidth and power allocation for parallel multi-radio access.
#[derive(Parser, Debug)]
#[command(name = "mra", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one scenario file.
    Solve(SolveArgs),
    /// Run a sweep over terminal counts, seeds, methods and modes.
    Sweep(SweepArgs),
    /// Brute-force grid search on a tiny scenario.
    Oracle(OracleArgs),
    /// Convergence-order report for the inner root finders.
    Diagnose(DiagnoseArgs),
    /// Write a scenario file with the default sweep geometry.
    Scenario(ScenarioArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Scenario JSON.
    scenario: PathBuf,
    /// Solver config JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Redraw the channel with this seed (generated scenarios only).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    method: Option<InnerMethod>,
    #[arg(long, default_value = "parallel")]
    mode: Mode,
    /// Write the full result as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the KKT report as JSON.
    #[arg(long)]
    dump_kkt: Option<PathBuf>,
    /// Write the last iteration's inner root-finder traces as JSON.
    #[arg(long)]
    dump_traces: Option<PathBuf>,
    /// Write the per-iteration price trace as CSV.
    #[arg(long)]
    price_trace: Option<PathBuf>,
    /// Exit with status 2 if the solve did not converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Sweep spec JSON; the default experiment when omitted.
    spec: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run only this inner method.
    #[arg(long)]
    method: Option<InnerMethod>,
    /// Run only this mode.
    #[arg(long)]
    mode: Option<Mode>,
    /// Output CSV; a `.meta.json` side file is written next to it.
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Fill the wall_ms column. Timed output is not reproducible byte for byte.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct OracleArgs {
    scenario: PathBuf,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long, default_value_t = 1)]
    refinements: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    problems: usize,
    /// Write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Number of terminals.
    #[arg(long, default_value_t = 5)]
    mmts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

type CliResult = Result<ExitCode, Error>;

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<SolverConfig, Error> {
    let cfg = match path {
        Some(p) => serde_json::from_str(&read(p)?)?,
        None => SolverConfig::default(),
    };
    let bad = SolverConfig::violations(&cfg);
    if bad.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::InvalidConfig(bad))
    }
}

fn strict_exit(strict: bool, all_converged: bool) -> ExitCode {
    if strict && !all_converged {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn run_solve(args: SolveArgs) -> CliResult {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(m) = args.method {
        cfg.inner_method = m;
    }
    let mut file: mra_core::model::ScenarioFile = serde_json::from_str(&read(&args.scenario)?)?;
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    let scenario = Scenario::from_file(file)?;
    let r = solve(&scenario, &cfg, args.mode)?;

    println!("mode         {}", args.mode);
    println!("method       {}", cfg.inner_method);
    println!("converged    {}", r.converged());
    println!("iterations   {}", r.trace.iterations);
    println!("capacity     {} bps/Hz ({} nats/s)", r.capacity_bps_per_hz, r.capacity_nats_per_s);
    println!("kkt residual {:e}", r.kkt.residual_norm);
    println!("support      {:?}", r.support_sizes());

    if let Some(p) = &args.out {
        write_json(p, &r)?;
    }
    if let Some(p) = &args.dump_kkt {
        write_json(p, &r.kkt)?;
    }
    if let Some(p) = &args.dump_traces {
        write_json(p, &r.root_traces)?;
    }
    if let Some(p) = &args.price_trace {
        experiments::dump_price_trace(&r.trace, p)?;
    }
    Ok(strict_exit(args.strict, r.converged()))
}

fn run_sweep(args: SweepArgs) -> CliResult {
    let cfg = load_config(args.config.as_deref())?;
    let mut spec = match &args.spec {
        Some(p) => SweepSpec::from_json(&read(p)?)?,
        None => SweepSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seeds = vec![seed];
    }
    if let Some(m) = args.method {
        spec.methods = vec![m];
    }
    if let Some(m) = args.mode {
        spec.modes = vec![m];
    }
    let result = experiments::run_sweep(&spec, &cfg, args.jobs.max(1), args.timing)?;
    experiments::emit_csv(&result, &args.out)?;
    experiments::emit_meta(&result, &experiments::meta_path(&args.out))?;

    for a in result.aggregates() {
        println!(
            "L={:<3} {:<8} {:<15} mean {:.6} bps/Hz  [{:.6}, {:.6}]  converged {}/{}",
            a.l, a.mode, a.method, a.mean, a.min, a.max, a.converged, a.samples
        );
    }
    for row in result.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "failed: L={} seed={} {} {}: {}",
            row.l,
            row.seed,
            row.mode,
            row.method,
            row.error.as_deref().unwrap_or_default()
        );
    }
    println!("wrote {}", args.out.display());
    let all = result.rows.iter().all(|r| r.converged);
    Ok(strict_exit(args.strict, all))
}

fn run_oracle(args: OracleArgs) -> CliResult {
    let scenario = Scenario::from_json(&read(&args.scenario)?)?;
    let cfg = OracleConfig {
        points: args.points,
        refinements: args.refinements,
        ..Default::default()
    };
    let r = oracle::grid_search(&scenario, &cfg)?;
    println!("capacity     {} bps/Hz ({} nats/s)", r.capacity_bps_per_hz, r.capacity_nats_per_s);
    println!("evaluations  {}", r.evaluations);
    if let Some(p) = &args.out {
        write_json(p, &r)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_diagnose(args: DiagnoseArgs) -> CliResult {
    let cfg = DiagnoseConfig {
        seed: args.seed,
        problems: args.problems,
        ..Default::default()
    };
    let report = diagnose::diagnose(&cfg)?;
    print!("{}", report.render_text());
    if let Some(p) = &args.out {
        write_json(p, &report)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_scenario(args: ScenarioArgs) -> CliResult {
    let spec = SweepSpec::default();
    let s = spec.scenario(args.mmts, args.seed)?;
    let json = s.to_json()?;
    match &args.out {
        Some(p) => std::fs::write(p, json)?,
        None => println!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Diagnose(a) => run_diagnose(a),
        Command::Scenario(a) => run_scenario(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
