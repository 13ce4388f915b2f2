use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use concurrent_rl::agents::checkpoint;
use concurrent_rl::harness::{
    self, curves, feature_arm, run_sweep, sorted_robustness_curve, verify_contraction,
    write_curves, write_records, Cell, Config, SweepOptions, SweepRecord,
};
use concurrent_rl::Error;

const EXIT_CONTRACT: u8 = 1;
const EXIT_DIVERGENCE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "crl",
    version,
    about = "Concurrent-control reinforcement learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and save its Q-network.
    Train(Common),
    /// Evaluate a saved Q-network greedily.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Defaults to `evaluate.checkpoint`, then `<out>/checkpoints/q.crlq`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run a hyperparameter sweep and export robustness curves.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Stop after this many new trials; rerun to resume.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Check the Bellman operator's contraction numerically.
    VerifyContraction(Common),
    /// Roll out random actions and report environment metrics.
    BenchEnv(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; every section is optional.
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> concurrent_rl::Result<Config> {
        let cfg = Config::load(&self.config)?;
        fs::create_dir_all(&self.out)?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONTRACT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Divergence(_) => ExitCode::from(EXIT_DIVERGENCE),
                _ => ExitCode::from(EXIT_CONTRACT),
            }
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> concurrent_rl::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> concurrent_rl::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn run(command: Command) -> concurrent_rl::Result<ExitCode> {
    match command {
        Command::Train(c) => train(&c),
        Command::Evaluate { common, checkpoint } => evaluate(&common, checkpoint),
        Command::Sweep {
            common,
            parallelism,
            stop_after,
        } => sweep(
            &common,
            SweepOptions {
                parallelism,
                stop_after,
            },
        ),
        Command::VerifyContraction(c) => contraction(&c),
        Command::BenchEnv(c) => {
            let cfg = c.load()?;
            let report = harness::bench_env(&cfg, c.seed)?;
            write_json(&c.out.join("bench.json"), &report)?;
            print_json(&report)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

#[derive(Serialize)]
struct TrainSummary {
    config_hash: String,
    seed: u64,
    episodes: usize,
    updates: usize,
    final_return: f64,
    episode_sim_duration_s: f64,
    action_completion: f64,
    checkpoint: PathBuf,
}

fn train(c: &Common) -> concurrent_rl::Result<ExitCode> {
    let cfg = c.load()?;
    let cell = Cell::from_config(&cfg);
    let start = std::time::Instant::now();
    let outcome = harness::train_single(&cfg, c.seed)?;
    let ckpt_dir = c.out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let ckpt = ckpt_dir.join("q.crlq");
    checkpoint::save(&ckpt, outcome.policy.net())?;

    let record = SweepRecord::from_outcome(&cell, c.seed, &outcome, start.elapsed().as_secs_f64());
    write_records(&c.out.join("records.csv"), std::slice::from_ref(&record))?;
    let curve_dir = c.out.join("curves");
    fs::create_dir_all(&curve_dir)?;
    curves::write_learning_curve(
        fs::File::create(curve_dir.join("learning_curve.csv"))?,
        &outcome.returns(),
    )?;

    print_json(&TrainSummary {
        config_hash: record.config_hash,
        seed: c.seed,
        episodes: outcome.episodes.len(),
        updates: outcome.updates,
        final_return: outcome.final_return(),
        episode_sim_duration_s: outcome.final_sim_duration(),
        action_completion: outcome.final_action_completion(),
        checkpoint: ckpt,
    })?;
    Ok(ExitCode::SUCCESS)
}

fn evaluate(c: &Common, checkpoint: Option<PathBuf>) -> concurrent_rl::Result<ExitCode> {
    let cfg = c.load()?;
    let path = checkpoint
        .or_else(|| cfg.evaluate.checkpoint.clone())
        .unwrap_or_else(|| c.out.join("checkpoints").join("q.crlq"));
    let net = checkpoint::load(&path)?;
    let metrics = harness::evaluate_net(&cfg, net, c.seed)?;
    write_json(&c.out.join("evaluation.json"), &metrics)?;
    print_json(&metrics)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SweepReport {
    ran: usize,
    skipped: usize,
    failed: usize,
    complete: bool,
    arms: Vec<ArmSummary>,
}

#[derive(Serialize)]
struct ArmSummary {
    arm: String,
    configs: usize,
    auc: f64,
}

fn sweep(c: &Common, options: SweepOptions) -> concurrent_rl::Result<ExitCode> {
    let mut cfg = c.load()?;
    cfg.train.seed = c.seed;
    let summary = run_sweep(&cfg, &c.out.join("records.csv"), options)?;
    let arms = sorted_robustness_curve(&summary.records, feature_arm);
    write_curves(&c.out.join("curves"), &arms)?;
    print_json(&SweepReport {
        ran: summary.ran,
        skipped: summary.skipped,
        failed: summary.failed,
        complete: summary.complete,
        arms: arms
            .iter()
            .map(|a| ArmSummary {
                arm: a.arm.clone(),
                configs: a.points.len(),
                auc: a.auc,
            })
            .collect(),
    })?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ContractionSummary {
    rows: usize,
    max_ratio: f64,
    holds: bool,
    refinement: Option<concurrent_rl::tabular::RefinementReport>,
}

fn contraction(c: &Common) -> concurrent_rl::Result<ExitCode> {
    let cfg = c.load()?;
    let report = verify_contraction(&cfg.contraction, c.seed)?;
    report.write_csv(fs::File::create(c.out.join("certificate.csv"))?)?;
    let holds = report.holds();
    print_json(&ContractionSummary {
        rows: report.rows.len(),
        max_ratio: report.max_ratio(),
        holds,
        refinement: report.refinement.clone(),
    })?;
    if let Some(row) = report.first_violation() {
        eprintln!(
            "contraction violated: gamma={} latency={} mdp={} trial={} modulus={} bound={}",
            row.gamma, row.latency, row.mdp, row.trial, row.modulus, row.bound
        );
        return Ok(ExitCode::from(EXIT_CONTRACT));
    }
    if !holds {
        eprintln!("refinement check exceeded its bound");
        return Ok(ExitCode::from(EXIT_CONTRACT));
    }
    Ok(ExitCode::SUCCESS)
}
