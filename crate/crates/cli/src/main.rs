//! `cablegff`: runs the Monte Carlo experiments and writes tidy CSV and JSON
//! summaries.
//!
//! Exit codes: 0 on success, 1 if a reference comparison fails, 2 on a
//! configuration error, 3 on an I/O error.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cablegff::experiments::{self, Report, EXPERIMENTS};
use cablegff::{Error, ExperimentConfig};
use clap::{Parser, ValueEnum};

use config::{echo, Settings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Command {
    Theta0,
    Capacity,
    Onearm,
    Twopoint,
    Volume,
    Diffcheck,
    Cominequality,
    Locuniq,
    PotentialSelftest,
    GffSelftest,
    All,
}

/// Level-set percolation of the Gaussian free field on cable systems.
///
/// Settings are read from `--config`, then `CABLEGFF_<KEY>` environment
/// variables, then `--set` overrides, then the dedicated flags.
#[derive(Debug, Parser)]
#[command(name = "cablegff", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    command: Command,
    /// Config file with `[lattice]`, `[run]` and `[grids]` sections.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one key, as `key=value` or `section.key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Master seed.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

fn resolve(cli: &Cli) -> Result<ExperimentConfig, (u8, String)> {
    let mut settings = Settings::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| (EXIT_CONFIG, format!("{}: {e}", path.display())))?;
        settings
            .parse(&text)
            .map_err(|e| (EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    }
    settings
        .apply_env(std::env::vars())
        .map_err(|e| (EXIT_CONFIG, format!("environment: {e}")))?;
    for s in &cli.overrides {
        settings
            .set(s)
            .map_err(|e| (EXIT_CONFIG, format!("--set: {e}")))?;
    }
    if let Some(seed) = cli.seed {
        settings.set(&format!("seed={seed}")).expect("known key");
    }
    if let Some(w) = cli.workers {
        settings.set(&format!("workers={w}")).expect("known key");
    }
    if let Some(out) = &cli.out {
        settings
            .set(&format!("out={}", out.display()))
            .expect("known key");
    }
    settings.resolve().map_err(|e| (EXIT_CONFIG, e.to_string()))
}

/// Writes `contents` to `path` through a temporary file in the same directory.
fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn write_report(cfg: &ExperimentConfig, name: &str, report: &Report) -> std::io::Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    write_atomic(
        &cfg.out_dir.join(format!("{name}.csv")),
        &report.samples.to_csv(),
    )?;
    write_atomic(
        &cfg.out_dir.join(format!("{name}.json")),
        &report.summary.to_json(),
    )?;
    write_atomic(&cfg.out_dir.join(format!("{name}.ini")), &echo(cfg))
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(code);
        }
    };
    let names: Vec<&str> = match cli.command {
        Command::All => EXPERIMENTS.to_vec(),
        c => vec![EXPERIMENTS
            .iter()
            .copied()
            .find(|n| *n == c.to_possible_value().expect("named").get_name())
            .expect("every command is an experiment")],
    };
    let mut code = 0u8;
    for name in names {
        let report = match experiments::run(name, &cfg) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("{name}: error: {e}");
                code = code.max(error_code(&e));
                continue;
            }
        };
        if let Err(e) = write_report(&cfg, name, &report) {
            eprintln!("{name}: cannot write to {}: {e}", cfg.out_dir.display());
            code = code.max(EXIT_IO);
            continue;
        }
        let failures: Vec<_> = report.summary.failures().collect();
        println!(
            "{name}: {} records, {} failed comparisons -> {}",
            report.summary.records.len(),
            failures.len(),
            cfg.out_dir.join(format!("{name}.json")).display()
        );
        for r in &failures {
            let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            eprintln!(
                "  FAIL {} [{}] estimate {} accept {:?}",
                r.name,
                params.join(", "),
                r.estimate,
                r.accept
            );
        }
        if !failures.is_empty() {
            code = code.max(EXIT_FAILED);
        }
    }
    ExitCode::from(code)
}
