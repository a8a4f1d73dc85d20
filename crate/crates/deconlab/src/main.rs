//! `deconlab` command line: run experiment sweeps, inspect scenarios, check
//! adjustment sets on SCM files, and summarize result tables.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error,
//! 3 verdict failure (`summarize --assert`) or invalid adjustment
//! (`check-graph`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use deconlab::analysis::{check_assumptions_names, classify_node_names, is_valid_adjustment_names};
use deconlab::error::Error;
use deconlab::harness::{
    assert_summary, run_experiment, summarize, write_outputs, ExperimentConfig, OutputFormat,
    ResultsTable,
};
use deconlab::scenarios::catalog;
use deconlab::scm::{parse_scm_json, ScmFile};

#[derive(Parser)]
#[command(name = "deconlab", version, about = "Simulation lab for substitute-confounder causal estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output path (overrides the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed (overrides config and DECONLAB_SEED).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Inspect the pre-registered scenario catalog.
    Scenarios {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Validate an adjustment set against an SCM definition file.
    CheckGraph {
        #[arg(long)]
        file: PathBuf,
        /// Comma-separated treatment (cause) names.
        #[arg(long)]
        treatments: String,
        #[arg(long)]
        outcome: String,
        /// Comma-separated adjustment set (may be empty).
        #[arg(long, default_value = "")]
        adjust: String,
    },
    /// Summarize a results CSV.
    Summarize {
        file: PathBuf,
        /// Exit with status 3 if any expected verdict fails.
        #[arg(long)]
        assert: bool,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Print the catalog: id, causes, estimands, truths, expected verdicts.
    List,
    /// Write scenario_<id>.json files into a directory.
    Export {
        #[arg(long, default_value = "scenarios")]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::UnknownNode(_) | Error::Cycle(_) | Error::Json(_) => {
                    ExitCode::from(1)
                }
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch() -> deconlab::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            jobs,
        } => {
            if let Some(jobs) = jobs {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build_global()
                    .map_err(|e| Error::Config(format!("cannot size thread pool: {e}")))?;
            }
            let text = std::fs::read_to_string(&config)?;
            let mut config = ExperimentConfig::from_json(&text)?;
            if let Ok(env_seed) = std::env::var("DECONLAB_SEED") {
                config.seed = env_seed
                    .parse()
                    .map_err(|_| Error::Config("DECONLAB_SEED must be a u64".into()))?;
            }
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(out) = out {
                config.output = Some(out);
            }
            let table = run_experiment(&config)?;
            match &config.output {
                Some(path) => {
                    write_outputs(&table, &config, path, config.format)?;
                    eprintln!("wrote {} rows to {}", table.rows.len(), path.display());
                }
                None => {
                    let body = match config.format {
                        OutputFormat::Csv => table.to_csv_string()?,
                        OutputFormat::Json => table.to_json_string()?,
                    };
                    print!("{body}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenarios { action } => match action {
            ScenarioAction::List => {
                for s in catalog() {
                    let g = s.scm.graph();
                    println!("scenario {}: {}", s.id, s.description);
                    println!("  causes: {}", g.cause_names().join(", "));
                    for e in &s.estimands {
                        println!("  estimand {} truth {}", e.label, e.truth);
                    }
                    for est in &s.estimators {
                        let expected = s
                            .expected
                            .get(&est.label)
                            .map(|v| v.to_string())
                            .unwrap_or_else(|| "-".into());
                        println!("  estimator {:<22} expected {}", est.label, expected);
                    }
                }
                Ok(ExitCode::SUCCESS)
            }
            ScenarioAction::Export { dir } => {
                std::fs::create_dir_all(&dir)?;
                for s in catalog() {
                    let path = dir.join(format!("scenario_{}.json", s.id));
                    std::fs::write(&path, ScmFile::from_scm(&s.scm).to_json()?)?;
                    eprintln!("wrote {}", path.display());
                }
                Ok(ExitCode::SUCCESS)
            }
        },
        Command::CheckGraph {
            file,
            treatments,
            outcome,
            adjust,
        } => {
            let scm = parse_scm_json(&std::fs::read_to_string(&file)?)?;
            let g = scm.graph();
            let split = |s: &str| -> Vec<String> {
                s.split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(str::to_string)
                    .collect()
            };
            let causes = split(&treatments);
            let z = split(&adjust);
            if causes.is_empty() {
                return Err(Error::Config("need at least one treatment".into()));
            }

            let checklist = check_assumptions_names(g, &causes, &outcome, &z)?;
            println!("assumption checklist:");
            for c in &checklist.conditions {
                println!(
                    "  ({}) {:<55} {}{}",
                    c.id,
                    c.description,
                    if c.satisfied { "ok" } else { "VIOLATED" },
                    c.witness
                        .as_ref()
                        .map(|w| format!("  [{w}]"))
                        .unwrap_or_default()
                );
            }
            println!("node classification:");
            for name in g.names() {
                if causes.contains(name) || *name == outcome {
                    continue;
                }
                let c = classify_node_names(g, name, &causes, &outcome)?;
                println!("  {:<8} {}", c.node, c.label);
            }
            let verdict = is_valid_adjustment_names(g, &z, &causes, &outcome)?;
            if verdict.valid {
                println!("adjustment set {{{}}} is VALID", z.join(", "));
                Ok(ExitCode::SUCCESS)
            } else {
                let witness = verdict
                    .witness
                    .map(|w| w.to_string())
                    .unwrap_or_else(|| "no witness".into());
                println!("adjustment set {{{}}} is INVALID: {witness}", z.join(", "));
                Ok(ExitCode::from(3))
            }
        }
        Command::Summarize { file, assert } => {
            let table = ResultsTable::from_csv_reader(std::fs::File::open(&file)?)?;
            let summary = summarize(&table)?;
            print!("{}", summary.render_text());
            println!("{}", summary.to_json_string()?);
            if assert {
                if let Err(msg) = assert_summary(&summary) {
                    eprintln!("{msg}");
                    return Ok(ExitCode::from(3));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
