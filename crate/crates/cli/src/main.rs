//! `fdirs`: single optimizations, experiment sweeps, config validation and
//! the oracle self-test.
//!
//! Exit codes: 0 success, 1 configuration or file error, 2 solver error,
//! 3 sweep finished but some records errored, 4 self-test failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use fdirs_core::channelgen::{generate_channels, RngSeed};
use fdirs_core::orchestrator::{run, RunResult};
use fdirs_harness::records::{format_float, timing_path, write_atomic, write_timing};
use fdirs_harness::selftest::{run_selftest, SelftestOptions, DEFAULT_SEED};
use fdirs_harness::{
    run_experiment, summarize, write_records, ConfigFile, ExperimentSpec, HarnessError, Scenario,
    SchemeSpec,
};

#[derive(Parser)]
#[command(name = "fdirs", version)]
#[command(about = "Weighted sum-rate optimization for multi-IRS full-duplex systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one channel realization and print the rates.
    Solve {
        /// Scenario file ([system], [geometry], [solver]).
        #[arg(long)]
        config: PathBuf,
        /// Scheme number 1-4, optionally with a duplex suffix (`1-hd`).
        #[arg(long, default_value = "1", value_parser = parse_scheme)]
        scheme: SchemeSpec,
        /// Channel seed, or `auto` to derive one from the clock.
        #[arg(long, default_value = "0", value_parser = parse_seed)]
        seed: u64,
        /// Write the outer-iteration trace to this CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run experiment files and write one CSV per file.
    Sweep {
        #[arg(required = true)]
        specs: Vec<PathBuf>,
        /// Output directory.
        #[arg(long, env = "FDIRS_OUT_DIR", default_value = "results")]
        out: PathBuf,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Parse and check configuration files without running anything.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run the fast oracle checks.
    Selftest {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Flip the analytic gradient's sign (negative control).
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

fn parse_scheme(s: &str) -> Result<SchemeSpec, String> {
    if s.contains('-') {
        s.parse()
    } else {
        format!("{s}-fd").parse()
    }
}

fn parse_seed(s: &str) -> Result<u64, String> {
    if s == "auto" {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_err(|e| e.to_string())?;
        return Ok(now.as_nanos() as u64);
    }
    s.parse()
        .map_err(|_| format!("seed `{s}` is neither an integer nor `auto`"))
}

enum Failure {
    Config(String),
    Solver(String),
    PartialRecords(usize),
    Selftest,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Solver(e) => Failure::Solver(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn long_version() -> String {
    let profile = if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    };
    format!(
        "{}\ntarget: {}-{}\nprofile: {profile}",
        env!("CARGO_PKG_VERSION"),
        std::env::consts::ARCH,
        std::env::consts::OS
    )
}

fn main() -> ExitCode {
    let matches = Cli::command().long_version(long_version()).get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let outcome = match cli.command {
        Command::Solve {
            config,
            scheme,
            seed,
            trace,
        } => solve(&config, scheme, seed, trace.as_deref()),
        Command::Sweep { specs, out, jobs } => sweep(&specs, &out, jobs),
        Command::Validate { files } => validate(&files),
        Command::Selftest {
            seed,
            corrupt_gradient,
        } => selftest(seed, corrupt_gradient),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::PartialRecords(n)) => {
            eprintln!("error: {n} record(s) failed; see the status column");
            ExitCode::from(3)
        }
        Err(Failure::Selftest) => ExitCode::from(4),
    }
}

fn solve(
    config: &Path,
    scheme: SchemeSpec,
    seed: u64,
    trace: Option<&Path>,
) -> Result<(), Failure> {
    let scenario = Scenario::load(config)?;
    let (cfg, geometry) = scenario.resolve()?;
    let opts = scenario.solver.run_options(scheme)?;
    let channels = generate_channels(&geometry, &cfg, &mut RngSeed::new(seed, 0).rng())
        .map_err(|e| Failure::Solver(e.to_string()))?;
    let result = run(&channels, &cfg, &opts).map_err(|e| Failure::Solver(e.to_string()))?;
    print!("{}", solve_report(scheme, seed, &result));
    if let Some(path) = trace {
        write_atomic(path, trace_csv(&result).as_bytes())?;
        println!("trace written to {}", path.display());
    }
    Ok(())
}

fn solve_report(scheme: SchemeSpec, seed: u64, r: &RunResult) -> String {
    let rates = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::new();
    let _ = writeln!(out, "scheme            {scheme}");
    let _ = writeln!(out, "seed              {seed}");
    let _ = writeln!(out, "SWSR              {:.6} bpcu", r.swsr);
    let _ = writeln!(out, "DL rates          {}", rates(&r.dl_rates));
    let _ = writeln!(out, "UL rates          {}", rates(&r.ul_rates));
    let _ = writeln!(
        out,
        "outer iterations  {} ({})",
        r.outer_iterations(),
        if r.converged {
            "converged"
        } else {
            "not converged"
        }
    );
    let _ = writeln!(
        out,
        "WMMSE iterations  {}",
        r.inner_iterations.iter().sum::<usize>()
    );
    if !r.ascent_iterations.is_empty() {
        let _ = writeln!(
            out,
            "ascent iterations {}",
            r.ascent_iterations.iter().sum::<usize>()
        );
    }
    let _ = writeln!(out, "wall time         {:.3} s", r.wall_time.as_secs_f64());
    out
}

fn trace_csv(r: &RunResult) -> String {
    let mut out = String::from("iteration,swsr,dl_sum_rate,ul_sum_rate\n");
    for (i, swsr) in r.outer_trace.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{}",
            format_float(*swsr),
            format_float(r.dl_sum_trace[i]),
            format_float(r.ul_sum_trace[i])
        );
    }
    out
}

fn sweep(paths: &[PathBuf], out: &Path, jobs: Option<usize>) -> Result<(), Failure> {
    if jobs == Some(0) {
        return Err(Failure::Config("--jobs must be at least 1".into()));
    }
    let specs = paths
        .iter()
        .map(ExperimentSpec::load)
        .collect::<Result<Vec<_>, _>>()?;
    let mut names: Vec<String> = specs.iter().map(ExperimentSpec::file_name).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Failure::Config(format!(
            "two experiments would both write {}",
            w[0]
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| Failure::Config(format!("{}: {e}", out.display())))?;
    let mut failed = 0;
    for (path, spec) in paths.iter().zip(&specs) {
        println!(
            "{}: {} with {} trial(s) per point",
            path.display(),
            spec.kind,
            spec.trials()
        );
        let records = run_experiment(spec, jobs)?;
        let target = out.join(spec.file_name());
        write_records(spec.kind, &records, &target)?;
        write_timing(spec.kind, &records, &timing_path(&target))?;
        failed += records.iter().filter(|r| !r.is_ok()).count();
        println!(
            "  {:<10} {:>12} {:<6} {:>5} {:>10} {:>10} {:>10}",
            "series",
            spec.kind.coordinate_name(),
            "scheme",
            "ok",
            "swsr",
            "dl",
            "ul"
        );
        for row in summarize(&records) {
            println!(
                "  {:<10} {:>12} {:<6} {:>5} {:>10.4} {:>10.4} {:>10.4}",
                row.series,
                row.coord,
                row.scheme.to_string(),
                format!("{}/{}", row.ok, row.ok + row.failed),
                row.mean_swsr,
                row.mean_dl,
                row.mean_ul
            );
        }
        println!("  wrote {}", target.display());
    }
    if failed > 0 {
        return Err(Failure::PartialRecords(failed));
    }
    Ok(())
}

fn validate(files: &[PathBuf]) -> Result<(), Failure> {
    let mut first_error = None;
    for path in files {
        match ConfigFile::load(path) {
            Ok(ConfigFile::Experiment(spec)) => {
                let points = spec.grid().map(|g| g.len()).unwrap_or(0);
                println!(
                    "{}: ok, {} experiment, {points} point(s) x {} trial(s) x {} scheme(s) -> {}",
                    path.display(),
                    spec.kind,
                    spec.trials(),
                    spec.schemes.len(),
                    spec.file_name()
                );
            }
            Ok(ConfigFile::Scenario(_)) => println!("{}: ok, scenario", path.display()),
            Err(e) => {
                eprintln!("{e}");
                first_error.get_or_insert(e);
            }
        }
    }
    first_error.map_or(Ok(()), |e| Err(e.into()))
}

fn selftest(seed: u64, corrupt_gradient: bool) -> Result<(), Failure> {
    let report = run_selftest(&SelftestOptions {
        seed,
        corrupt_gradient,
    });
    print!("{}", report.table());
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Selftest)
    }
}
