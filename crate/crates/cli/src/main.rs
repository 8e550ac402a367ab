//! `dpuc` command-line harness.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad config or arguments,
//! 3 privacy audit FAIL.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpuc::harness::{
    run_convergence, run_density, run_ssl_benchmark, write_csv, Algorithm, AuditConfig,
    ExperimentConfig, AUDIT_HEADER, CONVERGENCE_HEADER, SSL_HEADER,
};
use dpuc::Error;

#[derive(Parser)]
#[command(name = "dpuc", version, about = "Private consistent learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Excess-error sweep for pcl, pcl2 or pcl2b (or L1 for pcde).
    Converge(Common),
    /// L1 sweep of the private density estimator.
    Density(Common),
    /// Private semi-supervised benchmark.
    Ssl(Common),
    /// Empirical privacy audit on a neighboring pair.
    Audit(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; defaults to the config's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = default_threads())]
    threads: usize,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

enum Failure {
    Config(String),
    Runtime(String),
    AuditFail,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn sink(out: Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(&p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_experiment(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn check_threads(c: &Common) -> Result<(), Failure> {
    if c.threads == 0 {
        return Err(Failure::Config("--threads must be at least 1".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Converge(c) => {
            check_threads(&c)?;
            let cfg = load_experiment(&c)?;
            if cfg.algorithm == Algorithm::Cssl {
                return Err(Failure::Config("use the `ssl` subcommand for cssl".into()));
            }
            let rows = run_convergence(&cfg, c.threads)?;
            let records: Vec<_> = rows.iter().map(|r| r.record()).collect();
            write_csv(sink(c.out.or(cfg.output))?, &CONVERGENCE_HEADER, &records)?;
        }
        Command::Density(c) => {
            check_threads(&c)?;
            let cfg = load_experiment(&c)?;
            let rows = run_density(&cfg, c.threads)?;
            let records: Vec<_> = rows.iter().map(|r| r.record()).collect();
            write_csv(sink(c.out.or(cfg.output))?, &CONVERGENCE_HEADER, &records)?;
        }
        Command::Ssl(c) => {
            check_threads(&c)?;
            let cfg = load_experiment(&c)?;
            if cfg.algorithm != Algorithm::Cssl {
                return Err(Failure::Config("the ssl benchmark needs algorithm = \"cssl\"".into()));
            }
            let rows = run_ssl_benchmark(&cfg, c.threads)?;
            let records: Vec<_> = rows.iter().map(|r| r.record()).collect();
            write_csv(sink(c.out.or(cfg.output))?, &SSL_HEADER, &records)?;
        }
        Command::Audit(c) => {
            check_threads(&c)?;
            let mut cfg = AuditConfig::load(&c.config)?;
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            let report = cfg.run(c.threads)?;
            write_csv(sink(c.out.or(cfg.output.clone()))?, &AUDIT_HEADER, &report.records())?;
            eprintln!("{}", report.summary());
            if !report.pass {
                return Err(Failure::AuditFail);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("dpuc: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("dpuc: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::AuditFail) => ExitCode::from(3),
    }
}
