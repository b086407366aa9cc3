//! `simstore` command-line interface.

mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use simstore::algos::{train, Algorithm, Checkpoint};
use simstore::dataset::{read_dataset, read_metadata, write_dataset, write_metadata, DatasetMetadata};
use simstore::experiment::{
    collect_dataset, evaluate_policy, random_search, read_reports, render_table, run_episode, write_reports,
    CollectionLevel, EvalReport,
};
use simstore::policy::{wrap_autoclose, FraudAll, Oracle, Policy, RandomPolicy};
use simstore::Error;

use config::RunConfig;
use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "simstore", version, about = "Order-fraud simulator and offline RL benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Directory for outputs and the run manifest.
    #[arg(long, short, default_value = "simstore-out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Reference {
    PassAll,
    FraudAll,
    Oracle,
    Random,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roll one store under a reference policy and print its ledger.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "pass-all")]
        policy: Reference,
        /// Pass probability of the random policy.
        #[arg(long, default_value_t = 0.9)]
        pass_probability: f64,
        /// Close accounts after their first chargeback.
        #[arg(long)]
        autoclose: bool,
    },
    /// Log a medium or expert dataset.
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        level: CollectionLevel,
    },
    /// Train one algorithm on a logged dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        algorithm: Algorithm,
        #[arg(long, short)]
        dataset: PathBuf,
    },
    /// Evaluate a checkpoint or a reference policy over the evaluation seeds.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Evaluation seeds, replacing `[eval] seeds`.
        #[arg(long = "seed", value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, conflicts_with = "policy", required_unless_present = "policy")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<Reference>,
        #[arg(long, default_value_t = 0.9)]
        pass_probability: f64,
        /// Dataset the checkpoint was trained on; labels the report.
        #[arg(long, short)]
        dataset: Option<PathBuf>,
    },
    /// Random hyperparameter search for one algorithm.
    Search {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        algorithm: Algorithm,
        #[arg(long, short)]
        dataset: PathBuf,
    },
    /// Render evaluation reports as a dataset × policy table.
    Report {
        /// Report files written by `eval` or `search`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Column order; remaining policies follow.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(long, short, default_value = "simstore-out")]
        out: PathBuf,
    },
}

/// Exit status for an error: 2 usage/config, 3 data, 4 runtime.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::Data(_) | Error::Parse { .. } | Error::Io { .. }) => 3,
        _ => 4,
    }
}

fn load_config(common: &Common, manifest: &mut Manifest) -> anyhow::Result<RunConfig> {
    let cfg = match &common.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            manifest.config(path, &cfg.text);
            cfg
        }
        None => RunConfig::parse("")?,
    };
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn reference(kind: Reference, p: f64, seed: u64) -> anyhow::Result<Box<dyn Policy>> {
    Ok(match kind {
        Reference::PassAll => Box::new(RandomPolicy::new(1.0, seed)?),
        Reference::FraudAll => Box::new(FraudAll),
        Reference::Oracle => Box::new(Oracle),
        Reference::Random => Box::new(RandomPolicy::new(p, seed)?),
    })
}

fn resolve_seed(flag: Option<u64>, cfg: &RunConfig) -> anyhow::Result<u64> {
    match flag {
        Some(s) => Ok(s),
        None => Ok(cfg.seed()?),
    }
}

fn read_records(path: &Path, manifest: &mut Manifest) -> anyhow::Result<Vec<simstore::dataset::TransitionRecord>> {
    let records = read_dataset(path)?;
    manifest.input(path)?;
    log::info!("read {} records from {}", records.len(), path.display());
    Ok(records)
}

fn print_report(r: &EvalReport) {
    println!(
        "{}{}: normalized net revenue {:.2} ± {:.2} over {} seeds",
        r.policy,
        r.dataset.as_ref().map(|d| format!(" [{d}]")).unwrap_or_default(),
        r.normalized_mean,
        r.normalized_sd,
        r.per_seed.len()
    );
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            seed,
            policy,
            pass_probability,
            autoclose,
        } => {
            let mut m = Manifest::new("simulate", 0);
            let cfg = load_config(&common, &mut m)?;
            let seed = resolve_seed(seed, &cfg)?;
            m.seed = seed;
            let sim = cfg.sim()?;
            m.resolve("simstore", &sim);
            prepare_out(&common.out)?;
            let mut p = reference(policy, pass_probability, seed)?;
            let outcome = if autoclose {
                run_episode(&mut wrap_autoclose(p), &sim, seed)?
            } else {
                run_episode(p.as_mut(), &sim, seed)?
            };
            let summary = serde_json::json!({
                "policy": format!("{policy:?}"),
                "seed": seed,
                "autoclose": autoclose,
                "orders": outcome.orders,
                "frauded": outcome.frauded,
                "revenue": outcome.ledger.revenue,
                "chargeback_loss": outcome.ledger.chargeback_loss,
                "net_revenue": outcome.net_revenue(),
            });
            println!(
                "orders {} frauded {} revenue {:.2} chargebacks {:.2} net {:.2}",
                outcome.orders,
                outcome.frauded,
                outcome.ledger.revenue,
                outcome.ledger.chargeback_loss,
                outcome.net_revenue()
            );
            let path = common.out.join("simulate.json");
            std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n").map_err(|e| Error::io(&path, e))?;
            m.output(&path)?;
            m.write(&common.out)?;
        }
        Command::Collect { common, seed, level } => {
            let mut m = Manifest::new("collect", 0);
            let cfg = load_config(&common, &mut m)?;
            let seed = resolve_seed(seed, &cfg)?;
            m.seed = seed;
            let sim = cfg.sim()?;
            let preset = cfg.preset(level)?;
            m.resolve("simstore", &sim);
            m.resolve("collect", &preset);
            prepare_out(&common.out)?;
            let data = collect_dataset(&sim, &preset, seed)?;
            let path = common.out.join(format!("{level}.jsonl"));
            write_dataset(&path, &data.records)?;
            let meta = write_metadata(
                &path,
                &DatasetMetadata {
                    level: level.to_string(),
                    seed,
                    num_records: data.records.len(),
                    sim_config: sim,
                },
            )?;
            println!(
                "{} records, behavior net revenue {:.2}, {} refits -> {}",
                data.records.len(),
                data.ledger.net_revenue(),
                data.retrain_times.len(),
                path.display()
            );
            m.output(&path)?;
            m.output(&meta)?;
            m.write(&common.out)?;
        }
        Command::Train {
            common,
            seed,
            algorithm,
            dataset,
        } => {
            let mut m = Manifest::new("train", 0);
            let cfg = load_config(&common, &mut m)?;
            let seed = resolve_seed(seed, &cfg)?;
            m.seed = seed;
            let spec = cfg.train_spec(algorithm)?;
            m.resolve("train", &spec);
            let records = read_records(&dataset, &mut m)?;
            prepare_out(&common.out)?;
            let ck = train(&records, &spec, seed)?;
            let path = common.out.join(format!("{algorithm}.checkpoint.json"));
            ck.save(&path)?;
            let log_path = common.out.join(format!("{algorithm}.train_log.json"));
            std::fs::write(&log_path, serde_json::to_string_pretty(&ck.log)? + "\n")
                .map_err(|e| Error::io(&log_path, e))?;
            println!(
                "{} epochs, best test loss {:.6} at epoch {} -> {}",
                ck.log.epochs.len(),
                ck.log.best_test_loss,
                ck.log.best_epoch,
                path.display()
            );
            m.output(&path)?;
            m.output(&log_path)?;
            m.write(&common.out)?;
        }
        Command::Eval {
            common,
            seeds,
            checkpoint,
            policy,
            pass_probability,
            dataset,
        } => {
            let mut m = Manifest::new("eval", 0);
            let cfg = load_config(&common, &mut m)?;
            let seeds = if seeds.is_empty() { cfg.eval_seeds()? } else { seeds };
            m.seed = seeds[0];
            m.resolve("eval_seeds", &seeds);
            let sim = cfg.sim()?;
            m.resolve("simstore", &sim);
            let p: Box<dyn Policy> = match (&checkpoint, policy) {
                (Some(path), _) => {
                    let ck = Checkpoint::load(path)?;
                    m.input(path)?;
                    Box::new(ck.policy())
                }
                (None, Some(kind)) => reference(kind, pass_probability, seeds[0])?,
                (None, None) => unreachable!("clap requires a policy"),
            };
            let label = match &dataset {
                Some(path) => {
                    let meta = read_metadata(path)?;
                    m.input(&simstore::dataset::metadata_path(path))?;
                    Some(meta.level)
                }
                None => None,
            };
            prepare_out(&common.out)?;
            let mut report = evaluate_policy(p.as_ref(), &sim, &seeds)?;
            report.dataset = label;
            print_report(&report);
            let stem = match &report.dataset {
                Some(d) => format!("{}.{d}", report.policy),
                None => report.policy.clone(),
            };
            let path = common.out.join(format!("{}.report.jsonl", sanitize(&stem)));
            write_reports(&path, std::slice::from_ref(&report))?;
            m.output(&path)?;
            m.write(&common.out)?;
        }
        Command::Search {
            common,
            seed,
            algorithm,
            dataset,
        } => {
            let mut m = Manifest::new("search", 0);
            let cfg = load_config(&common, &mut m)?;
            let seed = resolve_seed(seed, &cfg)?;
            m.seed = seed;
            let sim = cfg.sim()?;
            let (search, space) = cfg.search(algorithm)?;
            m.resolve("simstore", &sim);
            m.resolve("search", &search);
            m.resolve("space", &space);
            let label = read_metadata(&dataset).ok().map(|meta| meta.level);
            let records = read_records(&dataset, &mut m)?;
            prepare_out(&common.out)?;
            let res = random_search(&records, &space, &sim, &search, seed)?;
            let board = common.out.join(format!("{algorithm}.leaderboard.jsonl"));
            let mut text = String::new();
            for t in &res.leaderboard {
                text.push_str(&serde_json::to_string(t)?);
                text.push('\n');
            }
            std::fs::write(&board, text).map_err(|e| Error::io(&board, e))?;
            m.output(&board)?;
            let failed = res.leaderboard.iter().filter(|t| t.error.is_some()).count();
            println!("{} trials, {failed} failed -> {}", res.leaderboard.len(), board.display());
            match res.best {
                Some((_, ck, mut report)) => {
                    report.dataset = label;
                    print_report(&report);
                    let ck_path = common.out.join(format!("{algorithm}.best.checkpoint.json"));
                    ck.save(&ck_path)?;
                    let rp = common.out.join(format!("{algorithm}.best.report.jsonl"));
                    write_reports(&rp, std::slice::from_ref(&report))?;
                    m.output(&ck_path)?;
                    m.output(&rp)?;
                }
                None => log::warn!("every trial failed; no best checkpoint written"),
            }
            m.write(&common.out)?;
        }
        Command::Report { reports, columns, out } => {
            let mut m = Manifest::new("report", 0);
            let mut all = Vec::new();
            for path in &reports {
                all.extend(read_reports(path)?);
                m.input(path)?;
            }
            let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
            let table = render_table(&all, &cols);
            print!("{table}");
            prepare_out(&out)?;
            let path = out.join("table.md");
            std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
            m.output(&path)?;
            m.write(&out)?;
        }
    }
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}
