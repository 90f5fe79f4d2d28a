//! Experiment harness: TOML experiment configs with an include/override
//! mechanism, seeded agent runs, parameter sweeps, and CSV learning-curve
//! artifacts. The executed environment always carries the true parameters;
//! the bias factor only ever touches the planner's model.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cartpole::{CartpoleEnv, CartpoleParams, VelocityCostForm};
use crate::error::{Error, Result};
use crate::mppi::MppiConfig;
use crate::qnet::{CheckpointMeta, QNetwork};
use crate::seeding::combine;
use crate::theory::{self, BoundInputs};
use crate::trainer::{
    self, CurvePoint, LambdaSchedule, LambdaScheduleKind, TrainConfig, TrainObserver,
    ValidationReport,
};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Validation points that make up the "final window" of a run.
pub const FINAL_WINDOW: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Plain sampling MPC planning with the true parameters.
    MppiTrue,
    /// Plain sampling MPC planning with the biased parameters.
    MppiBiased,
    /// Blended planner with a learned Q-function, planning with the biased
    /// parameters.
    MpqLambda,
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::MppiTrue => "mppi_true",
            AgentKind::MppiBiased => "mppi_biased",
            AgentKind::MpqLambda => "mpq_lambda",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub mass_cart: f64,
    pub mass_pole: f64,
    pub pole_length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub force_limit: f64,
    pub substeps: u32,
    /// Planner-model bias factor b; masses become (1+b)·true.
    pub bias: f64,
    pub episode_steps: usize,
    pub velocity_cost: VelocityCostForm,
}

impl Default for EnvSection {
    fn default() -> Self {
        let p = CartpoleParams::default();
        Self {
            mass_cart: p.mass_cart,
            mass_pole: p.mass_pole,
            pole_length: p.pole_length,
            gravity: p.gravity,
            dt: p.dt,
            force_limit: p.force_limit,
            substeps: p.substeps,
            bias: 0.0,
            episode_steps: 100,
            velocity_cost: VelocityCostForm::Squared,
        }
    }
}

impl EnvSection {
    pub fn params(&self) -> CartpoleParams {
        CartpoleParams {
            mass_cart: self.mass_cart,
            mass_pole: self.mass_pole,
            pole_length: self.pole_length,
            gravity: self.gravity,
            dt: self.dt,
            force_limit: self.force_limit,
            substeps: self.substeps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSection {
    pub kind: LambdaScheduleKind,
    pub lambda0: f64,
    pub lambda_final: f64,
}

impl Default for LambdaSection {
    fn default() -> Self {
        Self { kind: LambdaScheduleKind::SublinearDecay, lambda0: 1.0, lambda_final: 0.75 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub total_steps: u64,
    pub validation_interval: u64,
    pub validation_episodes: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub minibatch_count: usize,
    pub update_frequency: u64,
    pub learning_rate: f64,
    pub hidden_layers: Vec<usize>,
    pub online_targets: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            total_steps: 30_000,
            validation_interval: 2_000,
            validation_episodes: 30,
            buffer_capacity: 1_500,
            batch_size: 64,
            minibatch_count: 1,
            update_frequency: 1,
            learning_rate: 1e-3,
            hidden_layers: vec![100, 100],
            online_targets: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub agent: AgentKind,
    pub seeds: Vec<u64>,
    pub validation_seed: u64,
    pub out_dir: String,
    pub env: EnvSection,
    pub mppi: MppiConfig,
    pub lambda: LambdaSection,
    pub train: TrainSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            agent: AgentKind::MpqLambda,
            seeds: vec![0, 1, 2],
            validation_seed: 1000,
            out_dir: "runs".into(),
            env: EnvSection::default(),
            mppi: MppiConfig::default(),
            lambda: LambdaSection::default(),
            train: TrainSection::default(),
        }
    }
}

/// Loads a config file, following `include = "other.toml"` chains (included
/// values first, the including file overriding key by key).
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let table = load_toml_with_includes(path, 0)?;
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::invalid_config(format!("{}: {e}", path.display())))
}

fn load_toml_with_includes(path: &Path, depth: usize) -> Result<toml::Table> {
    if depth > 8 {
        return Err(Error::invalid_config(format!(
            "{}: include chain deeper than 8 levels",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid_config(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::invalid_config(format!("{}: {e}", path.display())))?;
    if let Some(include) = table.remove("include") {
        let rel = include.as_str().ok_or_else(|| {
            Error::invalid_config(format!("{}: include must be a path string", path.display()))
        })?;
        let base_path = path.parent().unwrap_or(Path::new(".")).join(rel);
        let base = load_toml_with_includes(&base_path, depth + 1)?;
        table = merge_tables(base, table);
    }
    Ok(table)
}

fn merge_tables(mut base: toml::Table, overlay: toml::Table) -> toml::Table {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(existing)), toml::Value::Table(incoming)) => {
                let merged = merge_tables(std::mem::take(existing), incoming);
                *existing = merged;
            }
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
    base
}

/// A validated experiment with the planner/executed environments split out.
#[derive(Clone, Debug)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub true_env: CartpoleEnv,
    pub planner_env: CartpoleEnv,
    pub schedule: LambdaSchedule,
    pub config_hash: String,
}

pub fn resolve(config: ExperimentConfig) -> Result<ResolvedExperiment> {
    if config.name.is_empty() {
        return Err(Error::invalid_config("experiment name must not be empty"));
    }
    if config.name.contains(['/', '\\']) {
        return Err(Error::invalid_config("experiment name must not contain path separators"));
    }
    if config.seeds.is_empty() {
        return Err(Error::invalid_config("seeds must not be empty"));
    }
    let params = config.env.params();
    params.validate().map_err(|e| Error::invalid_config(format!("env: {e}")))?;
    if config.env.episode_steps == 0 {
        return Err(Error::invalid_config("env.episode_steps must be positive"));
    }
    config.mppi.validate().map_err(|e| Error::invalid_config(format!("mppi: {e}")))?;

    let true_env = CartpoleEnv::new(params, config.env.velocity_cost);
    // mppi_true plans with the true parameters regardless of the configured
    // bias; the other agents plan with the biased masses. Execution always
    // happens on the true environment.
    let planner_env = match config.agent {
        AgentKind::MppiTrue => true_env,
        AgentKind::MppiBiased | AgentKind::MpqLambda => true_env
            .biased(config.env.bias)
            .map_err(|e| Error::invalid_config(format!("env.bias: {e}")))?,
    };
    let schedule = match config.agent {
        // Pure MPC agents run the plain full-horizon objective.
        AgentKind::MppiTrue | AgentKind::MppiBiased => LambdaSchedule::constant(1.0)?,
        AgentKind::MpqLambda => match config.lambda.kind {
            LambdaScheduleKind::Constant => LambdaSchedule::constant(config.lambda.lambda0)
                .map_err(|e| Error::invalid_config(format!("lambda: {e}")))?,
            LambdaScheduleKind::SublinearDecay => LambdaSchedule::sublinear(
                config.lambda.lambda0,
                config.lambda.lambda_final,
                config.train.total_steps,
            )
            .map_err(|e| Error::invalid_config(format!("lambda: {e}")))?,
        },
    };
    let config_hash = hash_config(&config)?;
    let resolved = ResolvedExperiment { config, true_env, planner_env, schedule, config_hash };
    // Surface trainer-level validation problems as config errors now.
    resolved
        .train_config(resolved.config.seeds[0])
        .validate()
        .map_err(|e| Error::invalid_config(format!("train: {e}")))?;
    Ok(resolved)
}

impl ResolvedExperiment {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.config.train;
        TrainConfig {
            true_env: self.true_env,
            planner_env: self.planner_env,
            mppi: self.config.mppi.clone(),
            schedule: self.schedule,
            episode_steps: self.config.env.episode_steps,
            total_steps: t.total_steps,
            validation_interval: t.validation_interval,
            validation_episodes: t.validation_episodes,
            buffer_capacity: t.buffer_capacity,
            batch_size: t.batch_size,
            minibatch_count: t.minibatch_count,
            update_frequency: t.update_frequency,
            learning_rate: t.learning_rate,
            hidden_layers: t.hidden_layers.clone(),
            train_seed: seed,
            validation_seed: self.config.validation_seed,
            online_targets: t.online_targets,
            learning_enabled: self.config.agent == AgentKind::MpqLambda,
            record_transitions: false,
        }
    }

    /// Validation grid steps of one run.
    pub fn validation_steps(&self) -> Vec<u64> {
        let t = &self.config.train;
        (1..=t.total_steps / t.validation_interval)
            .map(|k| k * t.validation_interval)
            .collect()
    }
}

fn hash_config(config: &ExperimentConfig) -> Result<String> {
    let canonical = toml::to_string(config)
        .map_err(|e| Error::invalid_config(format!("config not serializable: {e}")))?;
    Ok(format!("{:016x}", fnv1a64(canonical.as_bytes())))
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Learning-curve artifact: validation rows plus provenance metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
    pub metadata: BTreeMap<String, String>,
}

impl LearningCurve {
    fn check(&self) -> Result<()> {
        for pair in self.points.windows(2) {
            if pair[1].step <= pair[0].step {
                return Err(Error::invalid_arg("curve steps must be strictly increasing"));
            }
        }
        if self.points.iter().any(|p| p.stderr < 0.0) {
            return Err(Error::invalid_arg("curve stderr must be nonnegative"));
        }
        Ok(())
    }
}

/// Serializes a curve: `#`-prefixed metadata lines, a header row, one row per
/// validation point. Float fields round-trip exactly.
pub fn curve_to_csv(curve: &LearningCurve) -> Result<String> {
    curve.check()?;
    let mut out = String::new();
    for (k, v) in &curve.metadata {
        writeln!(out, "# {k}: {v}").unwrap();
    }
    out.push_str("step,lambda,mean_reward,stderr,success_rate\n");
    for p in &curve.points {
        writeln!(out, "{},{},{},{},{}", p.step, p.lambda, p.mean_reward, p.stderr, p.success_rate)
            .unwrap();
    }
    Ok(out)
}

/// Parses a curve CSV written by [`curve_to_csv`].
pub fn curve_from_csv(text: &str) -> Result<LearningCurve> {
    let mut metadata = BTreeMap::new();
    let mut points = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                metadata.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if line.is_empty() || line.starts_with("step,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::invalid_arg(format!("malformed curve row: {line}")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::invalid_arg(format!("bad float {s}: {e}")))
        };
        points.push(CurvePoint {
            step: fields[0]
                .parse()
                .map_err(|e| Error::invalid_arg(format!("bad step {}: {e}", fields[0])))?,
            lambda: parse(fields[1])?,
            mean_reward: parse(fields[2])?,
            stderr: parse(fields[3])?,
            success_rate: parse(fields[4])?,
        });
    }
    Ok(LearningCurve { points, metadata })
}

/// Pointwise mean of per-seed curves; stderr pools as
/// `sqrt(Σ se_i^2)/n` (standard error of the mean of means).
pub fn aggregate_curves(curves: &[LearningCurve]) -> Result<LearningCurve> {
    let first = curves.first().ok_or_else(|| Error::invalid_arg("no curves to aggregate"))?;
    let n = curves.len() as f64;
    let mut points = Vec::with_capacity(first.points.len());
    for (i, base) in first.points.iter().enumerate() {
        let mut mean_reward = 0.0;
        let mut success = 0.0;
        let mut se_sq = 0.0;
        for curve in curves {
            let p = curve.points.get(i).ok_or_else(|| {
                Error::invalid_arg("curves must share the validation grid to aggregate")
            })?;
            if p.step != base.step {
                return Err(Error::invalid_arg("curves must share the validation grid"));
            }
            mean_reward += p.mean_reward;
            success += p.success_rate;
            se_sq += p.stderr * p.stderr;
        }
        points.push(CurvePoint {
            step: base.step,
            lambda: base.lambda,
            mean_reward: mean_reward / n,
            stderr: se_sq.sqrt() / n,
            success_rate: success / n,
        });
    }
    Ok(LearningCurve { points, metadata: BTreeMap::new() })
}

/// Mean reward over the last [`FINAL_WINDOW`] points of a curve, with the
/// pooled standard error of that window.
pub fn final_window(curve: &LearningCurve) -> Result<(f64, f64)> {
    if curve.points.is_empty() {
        return Err(Error::invalid_arg("curve has no points"));
    }
    let k = FINAL_WINDOW.min(curve.points.len());
    let tail = &curve.points[curve.points.len() - k..];
    let mean = tail.iter().map(|p| p.mean_reward).sum::<f64>() / k as f64;
    let se = (tail.iter().map(|p| p.stderr * p.stderr).sum::<f64>()).sqrt() / k as f64;
    Ok((mean, se))
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub per_seed_csv: Vec<(u64, PathBuf)>,
    pub aggregate_csv: PathBuf,
    pub snapshot: PathBuf,
    pub per_seed_curves: Vec<(u64, LearningCurve)>,
    pub aggregate: LearningCurve,
}

struct CheckpointObserver<'a> {
    dir: &'a Path,
    seed: u64,
    written: Vec<PathBuf>,
}

impl TrainObserver for CheckpointObserver<'_> {
    fn on_validation(
        &mut self,
        step: u64,
        lambda: f64,
        net: Option<&QNetwork>,
        _report: &ValidationReport,
    ) -> Result<()> {
        if let Some(net) = net {
            let path = self.dir.join(format!("checkpoint_seed{}_step{}.qnet", self.seed, step));
            net.save(
                &path,
                &CheckpointMeta {
                    dims: net.dims(),
                    obs_dim: net.obs_dim,
                    action_dim: net.action_dim,
                    train_seed: self.seed,
                    step,
                    lambda,
                    code_version: CODE_VERSION.into(),
                },
            )?;
            self.written.push(path);
        }
        Ok(())
    }
}

/// Runs every seed of an experiment and writes the artifact set: one CSV per
/// seed, the aggregate CSV, a resolved-config snapshot, and (for the learning
/// agent) checkpoints per validation point. A `run_status.toml` marker flags
/// whether the artifact set is complete; on a mid-run failure it records the
/// error and which seeds finished before the partial artifacts are abandoned.
pub fn run_experiment(resolved: &ResolvedExperiment, out_root: &Path) -> Result<RunArtifacts> {
    let run_dir = out_root.join(&resolved.config.name);
    std::fs::create_dir_all(&run_dir)?;
    let snapshot = run_dir.join("config_resolved.toml");
    std::fs::write(&snapshot, resolved_snapshot_toml(resolved)?)?;

    let mut per_seed_csv = Vec::new();
    let mut per_seed_curves = Vec::new();
    for &seed in &resolved.config.seeds {
        let points = match run_one_seed(resolved, seed, &run_dir) {
            Ok(points) => points,
            Err(err) => {
                write_run_status(&run_dir, "failed", &per_seed_csv, Some((seed, &err)))?;
                return Err(err);
            }
        };
        let curve = LearningCurve { points, metadata: seed_metadata(resolved, &seed.to_string()) };
        let path = run_dir.join(format!("curve_seed{seed}.csv"));
        std::fs::write(&path, curve_to_csv(&curve)?)?;
        per_seed_csv.push((seed, path));
        per_seed_curves.push((seed, curve));
    }

    let curves: Vec<LearningCurve> = per_seed_curves.iter().map(|(_, c)| c.clone()).collect();
    let mut aggregate = aggregate_curves(&curves)?;
    let seeds_label = resolved
        .config
        .seeds
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(",");
    aggregate.metadata = seed_metadata(resolved, &seeds_label);
    let aggregate_csv = run_dir.join("curve_aggregate.csv");
    std::fs::write(&aggregate_csv, curve_to_csv(&aggregate)?)?;
    write_run_status(&run_dir, "complete", &per_seed_csv, None)?;

    Ok(RunArtifacts {
        run_dir,
        per_seed_csv,
        aggregate_csv,
        snapshot,
        per_seed_curves,
        aggregate,
    })
}

fn write_run_status(
    run_dir: &Path,
    status: &str,
    completed: &[(u64, PathBuf)],
    failure: Option<(u64, &Error)>,
) -> Result<()> {
    let mut text = format!("status = {status:?}\n");
    let seeds: Vec<String> = completed.iter().map(|(s, _)| s.to_string()).collect();
    writeln!(text, "seeds_completed = [{}]", seeds.join(", ")).unwrap();
    if let Some((seed, err)) = failure {
        writeln!(text, "failed_seed = {seed}").unwrap();
        writeln!(text, "error = {:?}", err.to_string()).unwrap();
    }
    std::fs::write(run_dir.join("run_status.toml"), text)?;
    Ok(())
}

fn seed_metadata(resolved: &ResolvedExperiment, seed_label: &str) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("name".into(), resolved.config.name.clone()),
        ("agent".into(), resolved.config.agent.as_str().into()),
        ("seeds".into(), seed_label.into()),
        ("validation_seed".into(), resolved.config.validation_seed.to_string()),
        ("config_hash".into(), resolved.config_hash.clone()),
        ("version".into(), CODE_VERSION.into()),
    ])
}

fn run_one_seed(resolved: &ResolvedExperiment, seed: u64, run_dir: &Path) -> Result<Vec<CurvePoint>> {
    match resolved.config.agent {
        AgentKind::MpqLambda => {
            let mut observer = CheckpointObserver { dir: run_dir, seed, written: Vec::new() };
            let outcome = trainer::train(&resolved.train_config(seed), &mut observer)?;
            Ok(outcome.points)
        }
        AgentKind::MppiTrue | AgentKind::MppiBiased => {
            // No trainable state: one validation round defines the whole
            // curve, replicated over the validation grid.
            let report = trainer::validate(
                &resolved.true_env,
                &resolved.planner_env,
                &crate::mppi::ZeroValue,
                1.0,
                &resolved.config.mppi,
                resolved.config.env.episode_steps,
                resolved.config.train.validation_episodes,
                resolved.config.validation_seed,
                combine(resolved.config.validation_seed, seed),
            )?;
            Ok(resolved
                .validation_steps()
                .into_iter()
                .map(|step| CurvePoint {
                    step,
                    lambda: 1.0,
                    mean_reward: report.mean_reward,
                    stderr: report.stderr,
                    success_rate: report.success_rate,
                })
                .collect())
        }
    }
}

#[derive(Serialize)]
struct ResolvedSnapshot<'a> {
    config_hash: &'a str,
    code_version: &'a str,
    executed_params: CartpoleParams,
    planner_params: CartpoleParams,
    planner_bias_applied: f64,
    lambda_schedule: LambdaSchedule,
    experiment: &'a ExperimentConfig,
}

fn resolved_snapshot_toml(resolved: &ResolvedExperiment) -> Result<String> {
    let bias_applied = match resolved.config.agent {
        AgentKind::MppiTrue => 0.0,
        _ => resolved.config.env.bias,
    };
    toml::to_string_pretty(&ResolvedSnapshot {
        config_hash: &resolved.config_hash,
        code_version: CODE_VERSION,
        executed_params: resolved.true_env.params,
        planner_params: resolved.planner_env.params,
        planner_bias_applied: bias_applied,
        lambda_schedule: resolved.schedule,
        experiment: &resolved.config,
    })
    .map_err(|e| Error::invalid_config(format!("snapshot not serializable: {e}")))
}

/// Sweepable experiment axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    LambdaFixed,
    LambdaFinal,
    Horizon,
    Particles,
    Bias,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::LambdaFixed => "lambda_fixed",
            SweepAxis::LambdaFinal => "lambda_final",
            SweepAxis::Horizon => "horizon",
            SweepAxis::Particles => "particles",
            SweepAxis::Bias => "bias",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda_fixed" => Ok(SweepAxis::LambdaFixed),
            "lambda_final" => Ok(SweepAxis::LambdaFinal),
            "horizon" => Ok(SweepAxis::Horizon),
            "particles" => Ok(SweepAxis::Particles),
            "bias" => Ok(SweepAxis::Bias),
            other => Err(Error::invalid_config(format!(
                "unknown sweep axis {other}; expected one of lambda_fixed, lambda_final, horizon, particles, bias"
            ))),
        }
    }
}

fn apply_axis(mut config: ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let as_count = |value: f64, what: &str| -> Result<usize> {
        if value.fract() != 0.0 || value < 1.0 {
            return Err(Error::invalid_config(format!("{what} sweep needs positive integers, got {value}")));
        }
        Ok(value as usize)
    };
    match axis {
        SweepAxis::LambdaFixed => {
            config.lambda.kind = LambdaScheduleKind::Constant;
            config.lambda.lambda0 = value;
            config.lambda.lambda_final = value;
        }
        SweepAxis::LambdaFinal => {
            config.lambda.kind = LambdaScheduleKind::SublinearDecay;
            config.lambda.lambda_final = value;
        }
        SweepAxis::Horizon => config.mppi.horizon = as_count(value, "horizon")?,
        SweepAxis::Particles => config.mppi.n_particles = as_count(value, "particles")?,
        SweepAxis::Bias => config.env.bias = value,
    }
    config.name = format!("{}_{}_{}", config.name, axis.as_str(), value);
    Ok(config)
}

#[derive(Clone, Debug)]
pub struct SweepArtifacts {
    pub sweep_dir: PathBuf,
    pub runs: Vec<(f64, RunArtifacts)>,
    pub summary_csv: PathBuf,
}

/// One [`run_experiment`] per axis value plus a long-form summary CSV of
/// final-window mean rewards (`axis,value,seed,final_mean,final_stderr`).
pub fn sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    out_root: &Path,
) -> Result<SweepArtifacts> {
    if values.is_empty() {
        return Err(Error::invalid_config("sweep needs at least one axis value"));
    }
    let sweep_dir = out_root.join(format!("{}_sweep_{}", base.name, axis.as_str()));
    std::fs::create_dir_all(&sweep_dir)?;
    let mut runs = Vec::new();
    let mut summary = String::from("axis,value,seed,final_mean,final_stderr\n");
    for &value in values {
        let resolved = resolve(apply_axis(base.clone(), axis, value)?)?;
        let artifacts = run_experiment(&resolved, &sweep_dir)?;
        for (seed, curve) in &artifacts.per_seed_curves {
            let (mean, se) = final_window(curve)?;
            writeln!(summary, "{},{},{},{},{}", axis.as_str(), value, seed, mean, se).unwrap();
        }
        runs.push((value, artifacts));
    }
    let summary_csv = sweep_dir.join("summary.csv");
    std::fs::write(&summary_csv, summary)?;
    Ok(SweepArtifacts { sweep_dir, runs, summary_csv })
}

/// CSV table of the H-step bound over a horizon range, with the closed-form
/// optimal horizon as a footer row.
pub fn bound_table(base: &BoundInputs, h_min: usize, h_max: usize) -> Result<String> {
    if h_min == 0 || h_min > h_max {
        return Err(Error::invalid_config(format!("bad horizon range {h_min}..{h_max}")));
    }
    let curve = theory::bound_tradeoff_curve(base, h_min..=h_max)?;
    let mut out = String::from("H,bound,model_cost,model_value,cost_error,value_error\n");
    for row in &curve.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.horizon,
            row.bound,
            2.0 * row.parts.model_cost,
            2.0 * row.parts.model_value,
            2.0 * row.parts.cost_error,
            2.0 * row.parts.value_error
        )
        .unwrap();
    }
    writeln!(out, "# argmin_H: {}", curve.argmin_horizon).unwrap();
    match theory::optimal_horizon(base.epsilon, base.alpha, base.gamma, base.v_min, base.v_max) {
        Ok(h_star) => writeln!(out, "# H_star: {h_star}").unwrap(),
        Err(_) => writeln!(out, "# H_star: undefined (alpha and epsilon both zero)").unwrap(),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("mpq_harness_{tag}_{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn tiny_config(agent: AgentKind) -> ExperimentConfig {
        ExperimentConfig {
            name: "tiny".into(),
            agent,
            seeds: vec![0, 1],
            validation_seed: 500,
            env: EnvSection { episode_steps: 20, bias: -0.5, ..EnvSection::default() },
            mppi: MppiConfig { horizon: 6, n_particles: 8, ..MppiConfig::default() },
            lambda: LambdaSection {
                kind: LambdaScheduleKind::SublinearDecay,
                lambda0: 1.0,
                lambda_final: 0.8,
            },
            train: TrainSection {
                total_steps: 40,
                validation_interval: 20,
                validation_episodes: 2,
                buffer_capacity: 64,
                batch_size: 8,
                hidden_layers: vec![8, 8],
                ..TrainSection::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn include_override_merges_tables() {
        let dir = tmp_dir("include");
        std::fs::write(
            dir.join("base.toml"),
            "name = \"base\"\nagent = \"mppi_true\"\n[mppi]\nhorizon = 16\nn_particles = 40\n",
        )
        .unwrap();
        std::fs::write(
            dir.join("child.toml"),
            "include = \"base.toml\"\nname = \"child\"\n[mppi]\nhorizon = 8\n",
        )
        .unwrap();
        let cfg = load_config(&dir.join("child.toml")).unwrap();
        assert_eq!(cfg.name, "child");
        assert_eq!(cfg.agent, AgentKind::MppiTrue);
        assert_eq!(cfg.mppi.horizon, 8);
        assert_eq!(cfg.mppi.n_particles, 40);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unknown_fields_are_field_level_errors() {
        let dir = tmp_dir("unknown");
        std::fs::write(dir.join("bad.toml"), "name = \"x\"\nnot_a_field = 3\n").unwrap();
        let err = load_config(&dir.join("bad.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("not_a_field"), "error should name the field: {msg}");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn resolve_enforces_planner_bias_rules() {
        let true_run = resolve(tiny_config(AgentKind::MppiTrue)).unwrap();
        assert_eq!(true_run.planner_env.params, true_run.true_env.params);

        let biased = resolve(tiny_config(AgentKind::MppiBiased)).unwrap();
        assert!((biased.planner_env.params.mass_cart - 0.5).abs() < 1e-12);
        assert_eq!(biased.true_env.params, CartpoleParams::default());
        // Pure MPC agents always run at lambda 1.
        assert_eq!(biased.schedule.lambda_at(17), 1.0);

        let mpq = resolve(tiny_config(AgentKind::MpqLambda)).unwrap();
        assert!((mpq.planner_env.params.mass_pole - 0.05).abs() < 1e-12);
        assert_eq!(mpq.schedule.lambda_at(0), 1.0);
    }

    #[test]
    fn resolve_rejects_bad_configs() {
        let mut cfg = tiny_config(AgentKind::MpqLambda);
        cfg.name = String::new();
        assert!(matches!(resolve(cfg), Err(Error::InvalidConfig(_))));

        let mut cfg = tiny_config(AgentKind::MpqLambda);
        cfg.seeds.clear();
        assert!(resolve(cfg).is_err());

        let mut cfg = tiny_config(AgentKind::MpqLambda);
        cfg.env.bias = -1.0;
        assert!(resolve(cfg).is_err());

        let mut cfg = tiny_config(AgentKind::MpqLambda);
        cfg.train.validation_interval = 33; // does not divide 40
        assert!(resolve(cfg).is_err());
    }

    #[test]
    fn curve_csv_round_trip() {
        let curve = LearningCurve {
            points: vec![
                CurvePoint { step: 10, lambda: 0.9, mean_reward: -12.25, stderr: 0.5, success_rate: 0.0 },
                CurvePoint {
                    step: 20,
                    lambda: 0.834567890123,
                    mean_reward: -11.0 / 3.0,
                    stderr: 1.0 / 7.0,
                    success_rate: 0.5,
                },
            ],
            metadata: BTreeMap::from([("name".into(), "x".into())]),
        };
        let text = curve_to_csv(&curve).unwrap();
        let parsed = curve_from_csv(&text).unwrap();
        assert_eq!(curve, parsed);
    }

    #[test]
    fn aggregate_is_pointwise_mean() {
        let mk = |r1: f64, r2: f64| LearningCurve {
            points: vec![
                CurvePoint { step: 10, lambda: 1.0, mean_reward: r1, stderr: 1.0, success_rate: 0.0 },
                CurvePoint { step: 20, lambda: 0.9, mean_reward: r2, stderr: 2.0, success_rate: 1.0 },
            ],
            metadata: BTreeMap::new(),
        };
        let agg = aggregate_curves(&[mk(-10.0, -6.0), mk(-20.0, -2.0)]).unwrap();
        assert_eq!(agg.points[0].mean_reward, -15.0);
        assert_eq!(agg.points[1].mean_reward, -4.0);
        assert!((agg.points[0].stderr - (2.0f64).sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(agg.points[0].success_rate, 0.0);
        assert_eq!(agg.points[1].success_rate, 1.0);
    }

    #[test]
    fn pure_mppi_run_emits_constant_curve_and_is_reproducible() {
        let dir = tmp_dir("mppi_run");
        let mut cfg = tiny_config(AgentKind::MppiTrue);
        cfg.seeds = vec![7];
        let resolved = resolve(cfg).unwrap();
        let a = run_experiment(&resolved, &dir).unwrap();
        let rows = &a.per_seed_curves[0].1.points;
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean_reward, rows[1].mean_reward);
        assert_eq!(rows[0].lambda, 1.0);

        let first = std::fs::read(&a.per_seed_csv[0].1).unwrap();
        let b = run_experiment(&resolved, &dir).unwrap();
        let second = std::fs::read(&b.per_seed_csv[0].1).unwrap();
        assert_eq!(first, second, "artifacts must be byte-identical");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn mpq_run_writes_all_artifacts() {
        let dir = tmp_dir("mpq_run");
        let resolved = resolve(tiny_config(AgentKind::MpqLambda)).unwrap();
        let art = run_experiment(&resolved, &dir).unwrap();
        assert!(art.snapshot.exists());
        assert_eq!(art.per_seed_csv.len(), 2);
        for (_, path) in &art.per_seed_csv {
            assert!(path.exists());
        }
        assert!(art.aggregate_csv.exists());
        // Checkpoints at both validation points for both seeds.
        for seed in [0u64, 1] {
            for step in [20u64, 40] {
                assert!(art.run_dir.join(format!("checkpoint_seed{seed}_step{step}.qnet")).exists());
            }
        }
        // Aggregate recomputable from per-seed CSV files.
        let reread: Vec<LearningCurve> = art
            .per_seed_csv
            .iter()
            .map(|(_, p)| curve_from_csv(&std::fs::read_to_string(p).unwrap()).unwrap())
            .collect();
        let recomputed = aggregate_curves(&reread).unwrap();
        assert_eq!(recomputed.points, art.aggregate.points);

        let snapshot = std::fs::read_to_string(&art.snapshot).unwrap();
        assert!(snapshot.contains("executed_params"));
        assert!(snapshot.contains("planner_params"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn sweep_produces_tree_and_summary() {
        let dir = tmp_dir("sweep");
        let mut base = tiny_config(AgentKind::MpqLambda);
        base.seeds = vec![0];
        let artifacts = sweep(&base, SweepAxis::LambdaFixed, &[1.0, 0.5], &dir).unwrap();
        assert_eq!(artifacts.runs.len(), 2);
        let summary = std::fs::read_to_string(&artifacts.summary_csv).unwrap();
        let rows: Vec<&str> = summary.lines().collect();
        assert_eq!(rows[0], "axis,value,seed,final_mean,final_stderr");
        assert_eq!(rows.len(), 3);
        assert!(rows[1].starts_with("lambda_fixed,1,0,"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn sweep_rejects_empty_axis_and_bad_counts() {
        let base = tiny_config(AgentKind::MpqLambda);
        let dir = tmp_dir("sweep_bad");
        assert!(sweep(&base, SweepAxis::Horizon, &[], &dir).is_err());
        assert!(sweep(&base, SweepAxis::Horizon, &[2.5], &dir).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn fixed_lambda_sweep_produces_one_curve_per_value() {
        let dir = tmp_dir("lam_sweep");
        let mut base = tiny_config(AgentKind::MpqLambda);
        base.seeds = vec![0];
        base.train.total_steps = 20;
        base.train.validation_interval = 20;
        base.train.validation_episodes = 1;
        let values = [1.0, 0.95, 0.8, 0.6, 0.4, 0.0];
        let artifacts = sweep(&base, SweepAxis::LambdaFixed, &values, &dir).unwrap();
        assert_eq!(artifacts.runs.len(), 6);
        for (value, run) in &artifacts.runs {
            let curve = &run.per_seed_curves[0].1;
            assert_eq!(curve.points.len(), 1);
            assert_eq!(curve.points[0].lambda, *value, "sweep must pin lambda");
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn bias_sweep_emits_one_aggregate_per_value() {
        let dir = tmp_dir("bias_sweep");
        let mut base = tiny_config(AgentKind::MppiBiased);
        base.seeds = vec![0];
        let artifacts = sweep(&base, SweepAxis::Bias, &[-0.5, -0.25, 0.0], &dir).unwrap();
        assert_eq!(artifacts.runs.len(), 3);
        for (value, run) in &artifacts.runs {
            assert!(run.aggregate_csv.exists(), "missing aggregate for b={value}");
            let snapshot = std::fs::read_to_string(&run.snapshot).unwrap();
            assert!(snapshot.contains(&format!("planner_bias_applied = {value:?}")));
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn completed_runs_carry_a_complete_status_marker() {
        let dir = tmp_dir("status");
        let mut cfg = tiny_config(AgentKind::MppiTrue);
        cfg.seeds = vec![3];
        let resolved = resolve(cfg).unwrap();
        let art = run_experiment(&resolved, &dir).unwrap();
        let status = std::fs::read_to_string(art.run_dir.join("run_status.toml")).unwrap();
        assert!(status.contains("status = \"complete\""));
        assert!(status.contains("seeds_completed = [3]"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn bound_table_has_footer_and_monotone_alpha_zero_column() {
        let base = BoundInputs {
            alpha: 0.0,
            epsilon: 0.5,
            gamma: 0.99,
            horizon: 1,
            c_min: 0.0,
            c_max: 1.0,
            v_min: 0.0,
            v_max: 10.0,
        };
        let table = bound_table(&base, 1, 128).unwrap();
        let mut bounds = Vec::new();
        for line in table.lines().skip(1) {
            if line.starts_with('#') {
                continue;
            }
            bounds.push(line.split(',').nth(1).unwrap().parse::<f64>().unwrap());
        }
        assert_eq!(bounds.len(), 128);
        assert!(bounds.windows(2).all(|w| w[1] < w[0]));
        assert!(table.contains("# H_star: "));
        let h_star: f64 = table
            .lines()
            .find_map(|l| l.strip_prefix("# H_star: "))
            .unwrap()
            .parse()
            .unwrap();
        assert!((h_star - 100.0).abs() < 1e-9);
    }

    #[test]
    fn bound_table_zero_errors_gives_zero_column_and_undefined_h_star() {
        let base = BoundInputs {
            alpha: 0.0,
            epsilon: 0.0,
            gamma: 0.9,
            horizon: 1,
            c_min: 0.0,
            c_max: 1.0,
            v_min: 0.0,
            v_max: 1.0,
        };
        let table = bound_table(&base, 1, 16).unwrap();
        for line in table.lines().skip(1).filter(|l| !l.starts_with('#')) {
            assert_eq!(line.split(',').nth(1).unwrap(), "0");
        }
        assert!(table.contains("# H_star: undefined"));
    }
}
