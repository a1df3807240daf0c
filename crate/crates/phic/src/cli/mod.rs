//! Command-line front end.
//!
//! Ten subcommands cover the pipeline from corpus to report. Configuration
//! comes from defaults, then an optional flat key=value file (`--config`),
//! then flags; the effective configuration is echoed into each stage's
//! manifest. Errors print one `phic: ...` line to stderr and exit nonzero;
//! exit 0 means every requested artifact was written.

pub mod config;
pub mod manifest;
pub mod stages;

use std::fs;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::cli::config::RunConfig;
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "phic",
    version,
    about = "Pre-exposure correctness prediction from calibrated difficulty and respondent profiles"
)]
struct Cli {
    /// Flat key=value configuration file, read before flag overrides.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for artifacts and manifests.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Base seed; every random stream derives from it.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads, 0 for one per CPU. Output bytes never depend on it.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Extra KEY=VALUE override, repeatable; accepts every config-file key.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate an external corpus directory and write the normalized layout.
    Ingest {
        /// Directory with items.csv, profiles.csv, responses.csv and
        /// schema.json (optional meta.json, expert_ratings.csv).
        #[arg(long = "in", value_name = "DIR")]
        input: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with known ground truth.
    Synth {
        /// Number of simulated respondents.
        #[arg(long, value_name = "N")]
        subjects: Option<usize>,
        /// Added name-question difficulty per elapsed session, in logits.
        #[arg(long, value_name = "X")]
        drift: Option<f64>,
        /// Ability-profile correlation in [0, 1]; 0 makes profiles noise.
        #[arg(long, value_name = "X")]
        profile_signal: Option<f64>,
    },
    /// Calibrate item difficulties and the leave-one-subject-out table.
    Rasch,
    /// Assemble one feature table per presentation position.
    Features,
    /// Repeated stratified cross-validation over models and selectors.
    Evaluate {
        /// Comma-separated model list: lr, rf, mlp.
        #[arg(long, value_name = "LIST")]
        models: Option<String>,
        /// Comma-separated selector list: none, cfs, gain_ratio.
        #[arg(long, value_name = "LIST")]
        fs: Option<String>,
    },
    /// Per-cell feature importance over training partitions.
    Importance,
    /// Re-evaluate one model on nested feature groups.
    Ablate {
        /// Comma-separated groups: human_profile,
        /// human_profile_and_performance, only_rasch, all.
        #[arg(long, value_name = "LIST")]
        groups: Option<String>,
    },
    /// Correctness by session and question type, with paired session tests.
    Rq1,
    /// Adaptive item-selection simulation on the calibrated bank.
    Simulate {
        /// Exposure-control threshold for phic_constrained, in (0, 1).
        #[arg(long, value_name = "X")]
        tau: Option<f64>,
        /// Simulated respondents.
        #[arg(long, value_name = "N")]
        respondents: Option<usize>,
        /// Comma-separated: random, max_info, phic_constrained.
        #[arg(long, value_name = "LIST")]
        policies: Option<String>,
    },
    /// Collate all prior artifacts into report.json.
    Report,
}

impl Command {
    #[cfg(test)]
    fn stage(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Synth { .. } => "synth",
            Command::Rasch => "rasch",
            Command::Features => "features",
            Command::Evaluate { .. } => "evaluate",
            Command::Importance => "importance",
            Command::Ablate { .. } => "ablate",
            Command::Rq1 => "rq1",
            Command::Simulate { .. } => "simulate",
            Command::Report => "report",
        }
    }

    /// Folds subcommand flags into the configuration, after the file and
    /// `--set` overrides.
    fn apply(&self, config: &mut RunConfig) -> Result<()> {
        match self {
            Command::Ingest { input } => {
                if let Some(dir) = input {
                    config.input = Some(dir.clone());
                }
            }
            Command::Synth {
                subjects,
                drift,
                profile_signal,
            } => {
                if let Some(n) = subjects {
                    config.subjects = *n;
                }
                if let Some(x) = drift {
                    config.drift = *x;
                }
                if let Some(x) = profile_signal {
                    config.profile_signal = *x;
                }
            }
            Command::Evaluate { models, fs } => {
                if let Some(list) = models {
                    config.models = config::parse_list(list, "models")?;
                }
                if let Some(list) = fs {
                    config.fs = config::parse_list(list, "fs")?;
                }
            }
            Command::Ablate { groups } => {
                if let Some(list) = groups {
                    config.groups = config::parse_list(list, "groups")?;
                }
            }
            Command::Simulate {
                tau,
                respondents,
                policies,
            } => {
                if let Some(x) = tau {
                    config.tau = *x;
                }
                if let Some(n) = respondents {
                    config.respondents = *n;
                }
                if let Some(list) = policies {
                    config.policies = config::parse_policies(list)?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Entry point behind `main`. Returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    let line = e
                        .to_string()
                        .lines()
                        .next()
                        .unwrap_or("bad arguments")
                        .trim_start_matches("error: ")
                        .to_string();
                    eprintln!("phic: {line}");
                    2
                }
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("phic: {err}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        config.apply_file(path)?;
    }
    for pair in &cli.set {
        config.apply_pair(pair)?;
    }
    if let Some(out) = cli.out {
        config.out = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    cli.command.apply(&mut config)?;

    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;

    let command = &cli.command;
    let run_stage = || match command {
        Command::Ingest { .. } => stages::ingest(&config),
        Command::Synth { .. } => stages::synth(&config),
        Command::Rasch => stages::rasch(&config),
        Command::Features => stages::features(&config),
        Command::Evaluate { .. } => stages::evaluate(&config),
        Command::Importance => stages::importance(&config),
        Command::Ablate { .. } => stages::ablate(&config),
        Command::Rq1 => stages::rq1(&config),
        Command::Simulate { .. } => stages::simulate(&config),
        Command::Report => stages::report(&config),
    };
    if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Argument(format!("cannot build worker pool: {e}")))?;
        pool.install(run_stage)
    } else {
        run_stage()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    #[test]
    fn flags_override_file_and_set() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("phic.conf");
        fs::write(&file, "subjects = 10\nseed = 3\ntau = 0.4\n").unwrap();
        let cli = parse(&[
            "phic",
            "simulate",
            "--config",
            file.to_str().unwrap(),
            "--set",
            "tau=0.5",
            "--seed",
            "9",
            "--tau",
            "0.6",
        ]);
        let mut config = RunConfig::default();
        config.apply_file(&file).unwrap();
        for pair in &cli.set {
            config.apply_pair(pair).unwrap();
        }
        config.seed = cli.seed.unwrap();
        cli.command.apply(&mut config).unwrap();
        assert_eq!(config.subjects, 10);
        assert_eq!(config.seed, 9);
        assert!((config.tau - 0.6).abs() < 1e-12);
    }

    #[test]
    fn every_stage_parses() {
        for stage in [
            "ingest", "synth", "rasch", "features", "evaluate", "importance", "ablate", "rq1",
            "simulate", "report",
        ] {
            let cli = parse(&["phic", stage]);
            assert_eq!(cli.command.stage(), stage);
        }
    }

    #[test]
    fn evaluate_flags_reach_the_config() {
        let cli = parse(&["phic", "evaluate", "--models", "lr", "--fs", "none"]);
        let mut config = RunConfig::default();
        cli.command.apply(&mut config).unwrap();
        assert_eq!(config.models.len(), 1);
        assert_eq!(config.fs.len(), 1);
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["phic", "evaluate", "--frobnicate"]).is_err());
        assert!(Cli::try_parse_from(["phic", "transmogrify"]).is_err());
        assert!(Cli::try_parse_from(["phic"]).is_err());
    }
}
