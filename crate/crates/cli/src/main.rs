use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use risisac::harness::{run_sweep_with_jobs, sweep_points};
use risisac::metrics::{fim_band_integral, fim_from_gain};
use risisac::{load_config, write_results, ScenarioConfig};

const EXIT_INVALID: u8 = 1;
const EXIT_RUN_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "risisac", version, about = "Delay CRB minimization for RIS-assisted split-band ISAC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (sweep point, scheme, seed) of a configuration and write a CSV.
    Run {
        config: PathBuf,
        /// Destination CSV file.
        #[arg(short, long)]
        output: PathBuf,
        /// Replace the configured seed list by this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to the number of logical CPUs.
        #[arg(short, long)]
        jobs: Option<usize>,
    },
    /// Parse and validate a configuration without running it.
    Validate { config: PathBuf },
    /// Tabulate the closed-form FIM against direct integration over the band.
    OracleFim {
        config: PathBuf,
        /// Spacing of the ratio grid.
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Write the table here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            output,
            seed,
            jobs,
        } => run(config, output, seed, jobs),
        Command::Validate { config } => match load_config(&config) {
            Ok(c) => {
                let points = sweep_points(&c).map(|p| p.len()).unwrap_or(0);
                println!(
                    "{}: ok ({} point(s) x {} scheme(s) x {} seed(s))",
                    config.display(),
                    points,
                    c.schemes.len(),
                    c.seeds.len()
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::OracleFim { config, step, output } => oracle_fim(config, step, output),
    }
}

fn fail(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_INVALID)
}

fn run(path: PathBuf, output: PathBuf, seed: Option<u64>, jobs: Option<usize>) -> ExitCode {
    let mut config = match load_config(&path) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(s) = seed {
        config.seeds = vec![s];
    }
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let records = match run_sweep_with_jobs(&config, jobs) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if let Err(e) = write_results(&records, &output) {
        return fail(e);
    }
    let infeasible = records.iter().filter(|r| !r.feasible && r.failure.is_none()).count();
    let failures: Vec<_> = records.iter().filter(|r| r.failure.is_some()).collect();
    eprintln!(
        "{} run(s) written to {}; {} infeasible, {} failed",
        records.len(),
        output.display(),
        infeasible,
        failures.len()
    );
    for r in &failures {
        eprintln!(
            "  {} seed {} at {}: {}",
            r.scheme,
            r.seed,
            r.sweep_value,
            r.failure.as_deref().unwrap_or_default()
        );
    }
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_RUN_FAILURE)
    }
}

fn oracle_table(config: &ScenarioConfig, step: f64) -> String {
    let budget = config.link_budget();
    let n = config.n_antennas;
    // A beam matched to the target collects the full array gain.
    let gain = n as f64;
    let beta_power = config.beta_s * config.beta_s;
    let steps = (1.0 / step).round() as usize;
    let mut out = String::from("alpha,fim_closed_form,fim_band_integral,relative_error\n");
    for i in 0..=steps {
        let alpha = (i as f64 * step).min(1.0);
        let closed = fim_from_gain(alpha, gain, beta_power, n, &budget);
        let integral = fim_band_integral(alpha, gain, beta_power, n, &budget);
        let rel = (closed - integral).abs() / integral.abs();
        writeln!(out, "{alpha:.6},{closed:.16e},{integral:.16e},{rel:.3e}").unwrap();
    }
    out
}

fn oracle_fim(path: PathBuf, step: f64, output: Option<PathBuf>) -> ExitCode {
    if !(step > 0.0 && step <= 1.0) {
        return fail("--step must lie in (0, 1]");
    }
    let config = match load_config(&path) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let table = oracle_table(&config, step);
    match output {
        Some(p) => {
            if let Err(e) = std::fs::write(&p, table) {
                return fail(format!("{}: {e}", p.display()));
            }
        }
        None => print!("{table}"),
    }
    ExitCode::SUCCESS
}
