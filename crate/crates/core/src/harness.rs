//! Configuration-driven experiment runner.
//!
//! A run is described by a TOML file (see [`RunConfig`]). Each seed simulates the
//! full horizon with its own random streams and records regret for rounds after
//! the change point. Results are written as `manifest.json`, one
//! `trace_seed<k>.csv` per seed and `summary.csv`.

use crate::analysis::{
    dissimilarity, effective_mixture, step_regret, AnalysisError, BoundOverlay, BoundParams, RegretMeasure,
    RegretTrace,
};
use crate::cone::{ConeError, ConeSpec};
use crate::environment::{DistributionSpec, EnvError, Phase, ShiftSchedule, SyntheticInstance};
use crate::pareto::{gap_table, write_gap_table, ArmMeanTable, GapSolverConfig, ParetoError};
use crate::policy::{
    InvariantReport, Policy, PolicyError, PolicyParams, PolicyState, RandomArmPolicy, RefineRule, StepRecord,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

const CONTEXT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const ARM_STREAM: u64 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config at `{path}`: {reason}")]
    Invalid { path: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("seed {seed}: {source}")]
    Simulation {
        seed: u64,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

fn invalid(path: &str, reason: impl std::fmt::Display) -> HarnessError {
    HarnessError::Invalid {
        path: path.to_string(),
        reason: reason.to_string(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Algorithm1,
    RandomBaseline,
}

/// Preference cone as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConeConfig {
    Orthant {},
    /// Rows of the generator matrix; column `j` is the `j`-th extreme ray.
    Generators { rows: Vec<Vec<f64>> },
}

impl ConeConfig {
    pub fn build(&self, dim: usize) -> Result<ConeSpec, ConeError> {
        match self {
            Self::Orthant {} => ConeSpec::orthant(dim),
            Self::Generators { rows } => {
                let cone = ConeSpec::from_generators(rows)?;
                if cone.dim() != dim {
                    return Err(ConeError::DimensionMismatch {
                        expected: dim,
                        got: cone.dim(),
                    });
                }
                Ok(cone)
            }
        }
    }
}

/// Policy parameters; `arms` and `objectives` come from the instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Defaults to `1/T`.
    pub delta: Option<f64>,
    pub beta: f64,
    pub c_beta: f64,
    /// Defaults to the environment noise level.
    pub sigma: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub warmup_rounds: Option<u64>,
    pub refine_rule: RefineRule,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        let p = PolicyParams::new(1, 1, 0.5);
        Self {
            delta: None,
            beta: p.beta,
            c_beta: p.c_beta,
            sigma: None,
            c1: p.c1,
            c2: p.c2,
            warmup_rounds: None,
            refine_rule: p.refine_rule,
        }
    }
}

/// Margin and family parameters for the bound overlay in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub alpha: f64,
    pub c_alpha: f64,
    pub gamma: f64,
    pub c_gamma: f64,
    /// Tree depth at which dissimilarities are evaluated.
    pub depth: u32,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            c_alpha: 1.0,
            gamma: 1.0,
            c_gamma: 2.0,
            depth: 5,
        }
    }
}

/// Axes of a parameter sweep. An empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub change_points: Vec<u64>,
    /// Exponents of a power-law source phase.
    pub nus: Vec<f64>,
    /// Arm counts of the two-objective synthetic instance.
    pub arms: Vec<usize>,
    pub policies: Vec<PolicyKind>,
}

impl SweepConfig {
    pub fn is_empty(&self) -> bool {
        self.change_points.is_empty() && self.nus.is_empty() && self.arms.is_empty() && self.policies.is_empty()
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_sigma() -> f64 {
    1.0
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub policy: PolicyKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Standard deviation of the Gaussian reward noise.
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub regret_measure: RegretMeasure,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Also write every round to `steps_seed<k>.csv`.
    #[serde(default)]
    pub record_steps: bool,
    /// Also write the final tree to `tree_seed<k>.jsonl`.
    #[serde(default)]
    pub dump_tree: bool,
    pub instance: SyntheticInstance,
    pub schedule: ShiftSchedule,
    pub cone: ConeConfig,
    #[serde(default)]
    pub policy_params: PolicyConfig,
    #[serde(default)]
    pub gap: GapSolverConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default, skip_serializing_if = "SweepConfig::is_empty")]
    pub sweep: SweepConfig,
}

impl RunConfig {
    /// Parses TOML; errors carry the dotted path of the offending key.
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let de = toml::Deserializer::parse(text).map_err(|e| HarnessError::Parse {
            path: String::new(),
            message: e.to_string(),
        })?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Parse {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn horizon(&self) -> u64 {
        self.schedule.horizon
    }

    pub fn change_point(&self) -> u64 {
        self.schedule.change_point()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise_sigma", "must be a nonnegative number"));
        }
        self.instance.validate().map_err(|e| invalid("instance", e))?;
        self.schedule.validate().map_err(|e| invalid("schedule", e))?;
        if self.schedule.dim() != self.instance.context_dim() {
            return Err(invalid(
                "schedule.target",
                format!(
                    "context dimension {} does not match the instance's {}",
                    self.schedule.dim(),
                    self.instance.context_dim()
                ),
            ));
        }
        self.cone_spec()?;
        self.gap.validate().map_err(|e| invalid("gap", e))?;
        self.policy_params()?;
        let b = &self.bounds;
        if !(b.alpha > 0.0 && b.gamma > 0.0) {
            return Err(invalid("bounds", "alpha and gamma must be positive"));
        }
        let s = &self.sweep;
        if s.change_points.iter().any(|&tp| tp > self.horizon()) {
            return Err(invalid("sweep.change_points", "change point exceeds the horizon"));
        }
        if !s.change_points.is_empty() && self.schedule.phases.len() != 1 {
            return Err(invalid(
                "sweep.change_points",
                "sweeping the change point needs exactly one source phase",
            ));
        }
        if !s.nus.is_empty() && !self.schedule.phases.iter().any(|p| matches!(p.dist, DistributionSpec::PowerLaw { .. })) {
            return Err(invalid("sweep.nus", "no power-law source phase to vary"));
        }
        if let Some(nu) = s.nus.iter().find(|nu| !(**nu > -1.0 && nu.is_finite())) {
            return Err(invalid("sweep.nus", format!("exponent {nu} must exceed -1")));
        }
        if !s.arms.is_empty() && !matches!(self.instance, SyntheticInstance::AppendixBiobjective { .. }) {
            return Err(invalid("sweep.arms", "only the two-objective synthetic instance has a variable arm count"));
        }
        if s.arms.contains(&0) {
            return Err(invalid("sweep.arms", "arm counts must be positive"));
        }
        Ok(())
    }

    pub fn cone_spec(&self) -> Result<ConeSpec, HarnessError> {
        self.cone
            .build(self.instance.objectives())
            .map_err(|e| invalid("cone", e))
    }

    pub fn policy_params(&self) -> Result<PolicyParams, HarnessError> {
        let c = &self.policy_params;
        let p = PolicyParams {
            arms: self.instance.arms(),
            objectives: self.instance.objectives(),
            delta: c.delta.unwrap_or(1.0 / self.horizon() as f64),
            beta: c.beta,
            c_beta: c.c_beta,
            sigma: c.sigma.unwrap_or(self.noise_sigma),
            c1: c.c1,
            c2: c.c2,
            warmup_rounds: c.warmup_rounds,
            refine_rule: c.refine_rule,
        };
        p.validate().map_err(|e| match e {
            PolicyError::InvalidParam { field, reason } => invalid(&format!("policy_params.{field}"), reason),
            other => invalid("policy_params", other),
        })?;
        Ok(p)
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn bound_overlay(&self) -> Option<BoundOverlay> {
        let h = self.bounds.depth;
        let d = self.schedule.dim();
        let q = &self.schedule.target;
        let rho_qq = dissimilarity(q, q, h, d).ok()?.value();
        let rho_pq = effective_mixture(&self.schedule)
            .and_then(|p| dissimilarity(&p, q, h, d))
            .map(|r| r.value())
            .unwrap_or(f64::INFINITY);
        let policy = self.policy_params().ok()?;
        let params = BoundParams {
            alpha: self.bounds.alpha,
            c_alpha: self.bounds.c_alpha,
            beta: policy.beta,
            c_beta: policy.c_beta,
            gamma: self.bounds.gamma,
            c_gamma: self.bounds.c_gamma,
            arms: policy.arms,
            objectives: policy.objectives,
            delta: policy.delta,
            change_point: self.change_point(),
            horizon: self.horizon(),
            rho_pq,
            rho_qq,
        };
        Some(BoundOverlay::evaluate(params, &self.schedule, h))
    }
}

/// Per-seed outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub cumulative_regret: f64,
    pub invariants: InvariantReport,
    /// Findings of the post-run tree audit.
    pub audit: Vec<String>,
    pub leaves: usize,
    pub max_leaf_depth: u32,
    /// Rounds in which an oracle-Pareto arm was missing from the bin's active set.
    pub pareto_eliminations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: usize,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Mean and sample standard deviation of per-seed cumulative regret.
    pub fn from_totals(totals: &[f64]) -> Self {
        let n = totals.len();
        let mean = totals.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { seeds: n, mean, std }
    }

    pub fn from_traces(traces: &[RegretTrace]) -> Self {
        Self::from_totals(&traces.iter().map(RegretTrace::total).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub crate_version: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub wall_time_secs: f64,
    pub bounds: Option<BoundOverlay>,
    pub summary: Summary,
    pub seeds: Vec<SeedOutcome>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub manifest: Manifest,
    pub traces: Vec<RegretTrace>,
    pub out_dir: Option<PathBuf>,
}

impl RunResult {
    pub fn summary(&self) -> &Summary {
        &self.manifest.summary
    }

    pub fn invariant_violations(&self) -> u64 {
        self.manifest
            .seeds
            .iter()
            .map(|s| s.invariants.total() + s.audit.len() as u64)
            .sum()
    }
}

enum AnyPolicy {
    Tree(Box<PolicyState>),
    Random(RandomArmPolicy),
}

impl AnyPolicy {
    fn step(&mut self, x: &[f64], reward: &mut dyn FnMut(usize) -> Vec<f64>) -> Result<StepRecord, PolicyError> {
        match self {
            Self::Tree(p) => p.step(x, reward),
            Self::Random(p) => p.step(x, reward),
        }
    }
}

fn stream(seed: u64, label: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

struct SeedRun {
    outcome: SeedOutcome,
    trace: RegretTrace,
    steps: Option<Vec<(StepRecord, Option<f64>)>>,
    tree: Option<Vec<u8>>,
}

fn simulate_seed(cfg: &RunConfig, seed: u64, hash: &str) -> Result<SeedRun, HarnessError> {
    let cone = cfg.cone_spec()?;
    let params = cfg.policy_params()?;
    let instance = &cfg.instance;
    let schedule = &cfg.schedule;
    let t_p = schedule.change_point();
    let mut ctx_rng = stream(seed, CONTEXT_STREAM);
    let mut noise_rng = stream(seed, NOISE_STREAM);
    let arm_rng = stream(seed, ARM_STREAM);
    let mut policy = match cfg.policy {
        PolicyKind::Algorithm1 => AnyPolicy::Tree(Box::new(PolicyState::new(
            params,
            instance.context_dim(),
            cone.clone(),
            arm_rng,
        )?)),
        PolicyKind::RandomBaseline => AnyPolicy::Random(RandomArmPolicy::new(
            instance.arms(),
            instance.context_dim(),
            arm_rng,
        )),
    };

    let mut trace = RegretTrace::new(seed, hash, t_p + 1);
    let mut steps = cfg.record_steps.then(Vec::new);
    let mut pareto_eliminations = 0;
    for t in 1..=schedule.horizon {
        let x = schedule.sample_context(t, &mut ctx_rng)?;
        instance.mean_reward(0, &x)?;
        let mut failure = None;
        let record = policy.step(&x, &mut |k| {
            match instance.draw_reward(k, &x, cfg.noise_sigma, &mut noise_rng) {
                Ok(r) => r.into_inner(),
                Err(e) => {
                    failure = Some(e);
                    vec![0.0; instance.objectives()]
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e.into());
        }
        if let AnyPolicy::Tree(p) = &policy {
            if t > p.params().warmup() {
                let (front, _) = instance.oracle_pareto(&x, &cone)?;
                if front.iter().any(|k| !record.active_set.contains(k)) {
                    pareto_eliminations += 1;
                }
            }
        }
        let regret = if t > t_p {
            let r = step_regret(&record, instance, &cone, &cfg.gap, cfg.regret_measure)?;
            trace.push(r);
            Some(r)
        } else {
            None
        };
        if let Some(s) = steps.as_mut() {
            s.push((record, regret));
        }
    }

    let (invariants, audit, leaves, max_leaf_depth, tree) = match &policy {
        AnyPolicy::Tree(p) => {
            let tree = p.tree();
            let dump = if cfg.dump_tree {
                let mut buf = Vec::new();
                tree.dump_jsonl(&mut buf).map_err(io_err(Path::new("tree dump")))?;
                Some(buf)
            } else {
                None
            };
            (
                p.invariants(),
                tree.audit(),
                tree.leaves().len(),
                tree.leaves().iter().map(|b| b.depth).max().unwrap_or(0),
                dump,
            )
        }
        AnyPolicy::Random(_) => (InvariantReport::default(), Vec::new(), 1, 0, None),
    };
    Ok(SeedRun {
        outcome: SeedOutcome {
            seed,
            cumulative_regret: trace.total(),
            invariants,
            audit,
            leaves,
            max_leaf_depth,
            pareto_eliminations,
        },
        trace,
        steps,
        tree,
    })
}

fn write_steps(path: &Path, steps: &[(StepRecord, Option<f64>)]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record([
        "t", "context", "depth", "index", "phase", "played", "active_set", "estimated_front", "split", "regret",
    ])?;
    let join = |v: &[usize]| v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";");
    for (rec, regret) in steps {
        let x = rec.context.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(";");
        let phase = serde_json::to_value(rec.phase)?.as_str().unwrap_or_default().to_string();
        w.write_record([
            (rec.round + 1).to_string(),
            x,
            rec.bin.depth.to_string(),
            rec.bin.index.to_string(),
            phase,
            rec.played.to_string(),
            join(&rec.active_set),
            join(&rec.estimated_front),
            rec.split.to_string(),
            regret.map(|r| format!("{r:?}")).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn write_summary(path: &Path, outcomes: &[SeedOutcome], summary: &Summary) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["kind", "seed", "cumulative_regret"])?;
    for o in outcomes {
        w.write_record(["seed".to_string(), o.seed.to_string(), format!("{:?}", o.cumulative_regret)])?;
    }
    w.write_record(["mean".to_string(), String::new(), format!("{:?}", summary.mean)])?;
    w.write_record(["std".to_string(), String::new(), format!("{:?}", summary.std)])?;
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Runs every seed of `cfg` and writes its outputs when `cfg.out_dir` is set.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let hash = cfg.content_hash();
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let runs: Vec<SeedRun> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            simulate_seed(cfg, seed, &hash).map_err(|e| HarnessError::Simulation {
                seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;

    let traces: Vec<RegretTrace> = runs.iter().map(|r| r.trace.clone()).collect();
    let outcomes: Vec<SeedOutcome> = runs.iter().map(|r| r.outcome.clone()).collect();
    let summary = Summary::from_traces(&traces);
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        config_hash: hash,
        wall_time_secs: started.elapsed().as_secs_f64(),
        bounds: cfg.bound_overlay(),
        summary,
        seeds: outcomes,
    };

    if let Some(dir) = &cfg.out_dir {
        for run in &runs {
            let seed = run.outcome.seed;
            let path = dir.join(format!("trace_seed{seed}.csv"));
            let file = File::create(&path).map_err(io_err(&path))?;
            run.trace.write_csv(BufWriter::new(file))?;
            if let Some(steps) = &run.steps {
                write_steps(&dir.join(format!("steps_seed{seed}.csv")), steps)?;
            }
            if let Some(tree) = &run.tree {
                let path = dir.join(format!("tree_seed{seed}.jsonl"));
                fs::write(&path, tree).map_err(io_err(&path))?;
            }
        }
        write_summary(&dir.join("summary.csv"), &manifest.seeds, &manifest.summary)?;
        let path = dir.join("manifest.json");
        let mut file = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        serde_json::to_writer_pretty(&mut file, &manifest)?;
        file.write_all(b"\n").map_err(io_err(&path))?;
        file.flush().map_err(io_err(&path))?;
    }
    Ok(RunResult {
        manifest,
        traces,
        out_dir: cfg.out_dir.clone(),
    })
}

/// Runs `cfg` inside a pool of `jobs` worker threads.
pub fn run_with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Coordinates of one sweep cell; `None` means the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub change_point: Option<u64>,
    pub nu: Option<f64>,
    pub arms: Option<usize>,
    pub policy: Option<PolicyKind>,
}

impl SweepPoint {
    fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(tp) = self.change_point {
            parts.push(format!("tp{tp}"));
        }
        if let Some(nu) = self.nu {
            parts.push(format!("nu{nu}"));
        }
        if let Some(k) = self.arms {
            parts.push(format!("k{k}"));
        }
        if let Some(p) = self.policy {
            parts.push(match p {
                PolicyKind::Algorithm1 => "algorithm1".to_string(),
                PolicyKind::RandomBaseline => "random_baseline".to_string(),
            });
        }
        if parts.is_empty() {
            "base".to_string()
        } else {
            parts.join("_")
        }
    }

    /// The base config with this cell's values substituted.
    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.sweep = SweepConfig::default();
        if let Some(tp) = self.change_point {
            let dist = cfg.schedule.phases[0].dist.clone();
            cfg.schedule.phases = if tp == 0 {
                Vec::new()
            } else {
                vec![Phase { dist, duration: tp }]
            };
        }
        if let Some(nu) = self.nu {
            for p in &mut cfg.schedule.phases {
                if let DistributionSpec::PowerLaw { nu: v } = &mut p.dist {
                    *v = nu;
                }
            }
        }
        if let Some(k) = self.arms {
            cfg.instance = SyntheticInstance::AppendixBiobjective { arms: k };
        }
        if let Some(p) = self.policy {
            cfg.policy = p;
        }
        if let Some(dir) = &base.out_dir {
            cfg.out_dir = Some(dir.join(self.label()));
        }
        cfg
    }
}

fn axis<T: Clone>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().cloned().map(Some).collect()
    }
}

/// Cartesian product of the sweep axes, in row-major order.
pub fn sweep_points(sweep: &SweepConfig) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for change_point in axis(&sweep.change_points) {
        for nu in axis(&sweep.nus) {
            for arms in axis(&sweep.arms) {
                for policy in axis(&sweep.policies) {
                    out.push(SweepPoint {
                        change_point,
                        nu,
                        arms,
                        policy,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug)]
pub struct SweepCell {
    pub point: SweepPoint,
    pub result: Result<RunResult, HarnessError>,
}

/// Runs every sweep cell; a failing cell does not stop the others. Writes
/// `sweep.csv` to the base output directory when one is set.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepCell>, HarnessError> {
    cfg.validate()?;
    let cells: Vec<SweepCell> = sweep_points(&cfg.sweep)
        .into_par_iter()
        .map(|point| {
            let result = run_experiment(&point.apply(cfg));
            SweepCell { point, result }
        })
        .collect();
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_sweep_csv(&dir.join("sweep.csv"), &cells)?;
    }
    Ok(cells)
}

fn write_sweep_csv(path: &Path, cells: &[SweepCell]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["change_point", "nu", "arms", "policy", "seeds", "mean_cumulative_regret", "std", "status"])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for c in cells {
        let p = &c.point;
        let policy = p
            .policy
            .map(|k| serde_json::to_value(k).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
        let (seeds, mean, std, status) = match &c.result {
            Ok(r) => {
                let s = r.summary();
                (s.seeds.to_string(), format!("{:?}", s.mean), format!("{:?}", s.std), "ok".to_string())
            }
            Err(e) => (String::new(), String::new(), String::new(), format!("error: {e}")),
        };
        w.write_record([
            opt(p.change_point.map(|v| v.to_string())),
            opt(p.nu.map(|v| v.to_string())),
            opt(p.arms.map(|v| v.to_string())),
            opt(policy),
            seeds,
            mean,
            std,
            status,
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Writes the Pareto flags and gaps of every arm under each named cone.
pub fn export_gap_table(
    table: &ArmMeanTable,
    cones: &[(String, ConeSpec)],
    cfg: &GapSolverConfig,
    out: &Path,
) -> Result<(), HarnessError> {
    let rows = gap_table(table, cones, cfg)?;
    let names: Vec<String> = cones.iter().map(|(n, _)| n.clone()).collect();
    let mut buf = Vec::new();
    write_gap_table(&mut buf, &rows, &names)?;
    fs::write(out, buf).map_err(io_err(out))?;
    Ok(())
}

/// Parses `NAME=orthant` or `NAME=a,b;c,d` (generator rows separated by `;`).
/// Without `NAME=` the cone is named `C<position>`.
pub fn parse_cone_arg(arg: &str, position: usize, dim: usize) -> Result<(String, ConeSpec), HarnessError> {
    let (name, body) = match arg.split_once('=') {
        Some((n, b)) => (n.trim().to_string(), b.trim()),
        None => (format!("C{position}"), arg.trim()),
    };
    let path = format!("cones[{position}]");
    let config = if body.eq_ignore_ascii_case("orthant") {
        ConeConfig::Orthant {}
    } else {
        let rows = body
            .split(';')
            .map(|row| {
                row.split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|e| invalid(&path, format!("`{v}`: {e}"))))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        ConeConfig::Generators { rows }
    };
    let cone = config.build(dim).map_err(|e| invalid(&path, e))?;
    Ok((name, cone))
}
