use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use abstain_al::criteria::PolicyName;
use abstain_al::harness::{self, ExperimentConfig, SyntheticGenerator};
use abstain_al::oracle::{self, FiniteInstance};

#[derive(Parser)]
#[command(name = "abstain-al", version, about = "Active learning with abstention feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write outputs here instead of the config's `output` directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check both greedy policies against exact optima on random instances.
    Certify {
        #[arg(long, default_value_t = 3)]
        pool: usize,
        #[arg(long, default_value_t = 2)]
        budget: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic two-class dataset in the sparse text format.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        seed: u64,
        /// Number of redundant (unlabelled) examples to add.
        #[arg(long, default_value_t = 0)]
        redundant: usize,
        /// Independent draw from the same geometry; use 1 for a test set.
        #[arg(long, default_value_t = 0)]
        split: u64,
    },
    /// Run the exact finite belief on a world sampled from an instance prior.
    DemoFinite {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "ala")]
        policy: PolicyName,
        /// Defaults to the pool size.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, output } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let outcome = harness::run_grid(&cfg)?;
            let dir = output.unwrap_or_else(|| cfg.output_dir());
            harness::write_outputs(&cfg, &outcome, &dir)?;
            for a in outcome.aggregate() {
                println!(
                    "{:<10} {:<10} q={:<6} auac={:.3} sd={:.3} n={}",
                    a.policy, a.scenario, a.fraction, a.mean_auac, a.stddev_auac, a.runs
                );
            }
            for e in &outcome.errors {
                eprintln!("cell {} q={} seed={} failed: {}", e.policy, e.fraction, e.seed, e.message);
            }
            eprintln!("wrote {}", dir.display());
            Ok(if outcome.errors.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Certify { pool, budget, trials, seed } => {
            let reports = oracle::certify_random(pool, budget, trials, seed)?;
            let failed = reports.iter().filter(|r| !r.passed).count();
            for r in &reports {
                println!("{}", serde_json::to_string(r)?);
            }
            eprintln!("{} instances, {failed} violations", reports.len());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Synth { out, n, dim, seed, redundant, split } => {
            let ds = SyntheticGenerator::new(dim, seed)?.sample(n, redundant, split);
            harness::save_dataset(&out, &ds)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::DemoFinite { instance, policy, budget, seed } => {
            let inst = FiniteInstance::load(&instance)?;
            let budget = budget.unwrap_or(inst.pool_size());
            let (trace, belief, _) = harness::run_finite(&inst, policy, budget, seed)?;
            println!("iteration,example,feedback,accuracy");
            for r in &trace.records {
                println!("{},{},{},{:.6}", r.iteration, r.example, r.feedback, r.accuracy);
            }
            let fmt = |w: &[f64]| w.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" ");
            println!("# hypothesis posterior: {}", fmt(belief.hypothesis_weights()));
            println!("# rate posterior: {}", fmt(belief.rate_weights()));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
