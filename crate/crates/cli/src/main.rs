use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use groupwalk_harness::manifest::{EXIT_ERROR, EXIT_INVALID, EXIT_PASS, EXIT_VERDICT_FAILED};
use groupwalk_harness::run::atoms_from_mb;
use groupwalk_harness::{
    bundled, describe, replay, run_experiment, ExperimentConfig, ExperimentManifest, RunError, RunOptions,
};

/// Experiments on random walks with random transition probabilities.
///
/// Exit status: 0 when every verdict passes, 1 on other errors, 2 when a
/// verdict fails, 3 when an analysis hits its budget, 4 when the
/// configuration does not validate.
#[derive(Parser)]
#[command(name = "groupwalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Resources {
    /// Worker threads (default: all cores).
    #[arg(long, env = "GROUPWALK_WORKERS")]
    workers: Option<usize>,
    /// Support budget for convolutions and balls, in MiB.
    #[arg(long, env = "GROUPWALK_BUDGET_MB")]
    budget_mb: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file or a bundled configuration by name.
    Run {
        config: String,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's `output`, else runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        resources: Resources,
    },
    /// List groups, environments, analyses and bundled configurations, or
    /// print one bundled configuration.
    Describe {
        /// Print this bundled configuration as JSON.
        #[arg(long)]
        config: Option<String>,
    },
    /// Check a configuration and list every problem found.
    Validate { config: String },
    /// Re-run a manifest and compare artifact hashes.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Re-run and compare only ensemble analyses.
        #[arg(long)]
        ensembles_only: bool,
        #[arg(long, env = "GROUPWALK_WORKERS")]
        workers: Option<usize>,
    },
}

/// Loads a file path, or a bundled name when no such file exists.
fn load(arg: &str) -> Result<(ExperimentConfig, PathBuf), Vec<String>> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{arg}: {e}")])?;
        let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        return Ok((ExperimentConfig::from_json(&text)?, base));
    }
    match bundled::load(arg) {
        Some(c) => Ok((c, PathBuf::from("."))),
        None => Err(vec![format!("{arg} is neither a file nor a bundled configuration")]),
    }
}

fn report_invalid(errors: &[String]) -> ExitCode {
    eprintln!("configuration has {} problem(s):", errors.len());
    for e in errors {
        eprintln!("  - {e}");
    }
    ExitCode::from(EXIT_INVALID as u8)
}

fn summarize(m: &ExperimentManifest) {
    for a in &m.analyses {
        let failed: Vec<&str> = a
            .verdicts
            .iter()
            .filter(|(_, v)| !**v)
            .map(|(k, _)| k.as_str())
            .collect();
        let status = match (&a.message, failed.is_empty()) {
            (Some(msg), _) => format!("{:?}: {msg}", a.status),
            (None, true) => "ok".to_string(),
            (None, false) => format!("failed: {}", failed.join(", ")),
        };
        println!("{:<12} {status}", a.kind);
    }
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn run_error(e: RunError) -> ExitCode {
    match e {
        RunError::Invalid(errors) => report_invalid(&errors),
        other => {
            eprintln!("error: {other}");
            code(EXIT_ERROR)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            resources,
        } => {
            let (cfg, base) = match load(&config) {
                Ok(c) => c,
                Err(errors) => return report_invalid(&errors),
            };
            let out_dir = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
            let opts = RunOptions {
                out_dir,
                workers: resources.workers,
                budget_atoms: resources.budget_mb.map(atoms_from_mb),
                seed,
                ensembles_only: false,
            };
            match run_experiment(&cfg, &base, &opts) {
                Ok(m) => {
                    summarize(&m);
                    println!("manifest: {}", opts.out_dir.join("manifest.json").display());
                    code(m.exit_code())
                }
                Err(e) => run_error(e),
            }
        }
        Command::Describe { config: None } => {
            print!("{}", describe::describe());
            code(EXIT_PASS)
        }
        Command::Describe { config: Some(name) } => match bundled::source(&name) {
            Some(text) => {
                print!("{text}");
                code(EXIT_PASS)
            }
            None => {
                eprintln!("no bundled configuration named {name}");
                code(EXIT_ERROR)
            }
        },
        Command::Validate { config } => {
            let prepared = load(&config).and_then(|(cfg, base)| cfg.prepare(&base).map(|_| ()));
            match prepared {
                Ok(()) => {
                    println!("{config}: valid");
                    code(EXIT_PASS)
                }
                Err(errors) => report_invalid(&errors),
            }
        }
        Command::Replay {
            manifest,
            out,
            ensembles_only,
            workers,
        } => {
            let original = match ExperimentManifest::read(&manifest) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("{}: {e}", manifest.display());
                    return code(EXIT_ERROR);
                }
            };
            let opts = RunOptions {
                out_dir: out,
                workers,
                ensembles_only,
                ..RunOptions::default()
            };
            match replay(&original, &opts) {
                Ok(r) => {
                    for m in &r.mismatches {
                        println!(
                            "differs: {} (expected {}, found {})",
                            m.artifact,
                            m.expected,
                            m.found.as_deref().unwrap_or("nothing")
                        );
                    }
                    println!(
                        "compared {} artifact(s), {} differ",
                        r.compared.len(),
                        r.mismatches.len()
                    );
                    code(if r.identical() { EXIT_PASS } else { EXIT_VERDICT_FAILED })
                }
                Err(e) => run_error(e),
            }
        }
    }
}
