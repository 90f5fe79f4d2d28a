use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpq_core::harness::{self, SweepAxis};
use mpq_core::theory::BoundInputs;
use mpq_core::{Error, QNetwork};

#[derive(Parser)]
#[command(name = "mpq", version, about = "Sampling MPC blended with a learned Q-function")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config (all its seeds) and write CSV artifacts.
    Run {
        /// Experiment config file (TOML, may use include = "base.toml").
        #[arg(long)]
        config: PathBuf,
        /// Override the seed list.
        #[arg(long, value_delimiter = ',')]
        seed: Option<Vec<u64>>,
        /// Output root directory (default: config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override total training steps.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Run one experiment per axis value and summarize final-window rewards.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Axis: lambda_fixed, lambda_final, horizon, particles or bias.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seed: Option<Vec<u64>>,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Print the planning-loss bound table over a horizon range as CSV.
    Bound {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        gamma: f64,
        /// Horizon range, e.g. 1..128.
        #[arg(long, default_value = "1..64", value_parser = parse_range)]
        h: (usize, usize),
        #[arg(long, default_value_t = 0.0)]
        c_min: f64,
        #[arg(long, default_value_t = 1.0)]
        c_max: f64,
        #[arg(long, default_value_t = 0.0)]
        v_min: f64,
        #[arg(long, default_value_t = 10.0)]
        v_max: f64,
    },
    /// Verify a Q-network checkpoint and print a summary; optionally run the
    /// validation protocol from an experiment config.
    ValidateCheckpoint {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Experiment config providing env/planner settings for validation.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Validation lambda (default: the checkpoint's recorded value).
        #[arg(long)]
        lambda: Option<f64>,
    },
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once("..").ok_or_else(|| format!("expected LO..HI, got {s}"))?;
    let lo: usize = lo.parse().map_err(|e| format!("bad range start {lo}: {e}"))?;
    let hi: usize = hi.parse().map_err(|e| format!("bad range end {hi}: {e}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("range must satisfy 1 <= LO <= HI, got {s}"));
    }
    Ok((lo, hi))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::InvalidConfig(_) | Error::InvalidArgument(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cli: Cli) -> mpq_core::Result<()> {
    match cli.command {
        Command::Run { config, seed, out, steps } => {
            let mut cfg = harness::load_config(&config)?;
            if let Some(seeds) = seed {
                cfg.seeds = seeds;
            }
            if let Some(steps) = steps {
                cfg.train.total_steps = steps;
            }
            let out_root = out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
            let resolved = harness::resolve(cfg)?;
            let artifacts = harness::run_experiment(&resolved, &out_root)?;
            println!("run directory: {}", artifacts.run_dir.display());
            for (seed, path) in &artifacts.per_seed_csv {
                println!("seed {seed}: {}", path.display());
            }
            println!("aggregate: {}", artifacts.aggregate_csv.display());
            Ok(())
        }
        Command::Sweep { config, axis, values, out, seed, steps } => {
            let mut cfg = harness::load_config(&config)?;
            if let Some(seeds) = seed {
                cfg.seeds = seeds;
            }
            if let Some(steps) = steps {
                cfg.train.total_steps = steps;
            }
            let axis: SweepAxis = axis.parse()?;
            let out_root = out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
            let artifacts = harness::sweep(&cfg, axis, &values, &out_root)?;
            println!("sweep directory: {}", artifacts.sweep_dir.display());
            println!("summary: {}", artifacts.summary_csv.display());
            Ok(())
        }
        Command::Bound { alpha, epsilon, gamma, h, c_min, c_max, v_min, v_max } => {
            let inputs = BoundInputs {
                alpha,
                epsilon,
                gamma,
                horizon: h.0,
                c_min,
                c_max,
                v_min,
                v_max,
            };
            print!("{}", harness::bound_table(&inputs, h.0, h.1)?);
            Ok(())
        }
        Command::ValidateCheckpoint { checkpoint, config, lambda } => {
            let (net, meta) = QNetwork::load(&checkpoint)?;
            println!("checkpoint: {}", checkpoint.display());
            println!("layer widths: {:?}", net.dims());
            println!("parameters: {} (all finite)", net.n_params());
            println!(
                "trained: seed {} step {} lambda {} (version {})",
                meta.train_seed, meta.step, meta.lambda, meta.code_version
            );
            if let Some(config) = config {
                let cfg = harness::load_config(&config)?;
                let resolved = harness::resolve(cfg)?;
                let lambda = lambda.unwrap_or(meta.lambda);
                let report = mpq_core::trainer::validate(
                    &resolved.true_env,
                    &resolved.planner_env,
                    &net,
                    lambda,
                    &resolved.config.mppi,
                    resolved.config.env.episode_steps,
                    resolved.config.train.validation_episodes,
                    resolved.config.validation_seed,
                    mpq_core::seeding::combine(resolved.config.validation_seed, meta.train_seed),
                )?;
                println!(
                    "validation (lambda {lambda}): mean_reward {} stderr {} success_rate {}",
                    report.mean_reward, report.stderr, report.success_rate
                );
            }
            Ok(())
        }
    }
}
