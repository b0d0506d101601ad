//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use homopinn::optim::OptimizerKind;
use homopinn::problems::{self, SamplingMode};
use homopinn::trainer::TrainConfig;
use homopinn::{EpsSchedule, Homotopy};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "HOMOPINN_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Classical,
    S1,
    S2,
}

/// Path-parameter schedule: a named preset, a `{start, end, step}` range or an explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Preset { preset: String },
    Range { start: f64, end: f64, step: f64 },
    Values(Vec<f64>),
}

impl ScheduleSpec {
    pub fn resolve(&self) -> Result<EpsSchedule, CliError> {
        let s = match self {
            ScheduleSpec::Preset { preset } => preset_schedule(preset)?,
            ScheduleSpec::Range { start, end, step } => EpsSchedule::linear(*start, *end, *step)?,
            ScheduleSpec::Values(v) => EpsSchedule::new(v.clone())?,
        };
        Ok(s)
    }
}

/// Schedules of the named presets.
pub fn preset_schedule(name: &str) -> Result<EpsSchedule, CliError> {
    Ok(match name {
        "ac1d-table1" => EpsSchedule::ac1d_preset(),
        "ac2d-b2" => EpsSchedule::ac2d_preset(),
        "helmholtz-b4" => EpsSchedule::helmholtz_preset(1.0 / 50.0)?,
        "helmholtz-d5" => EpsSchedule::helmholtz_preset(0.1)?,
        "highfreq-table5" => EpsSchedule::highfreq_preset(),
        other => return Err(CliError::Config(format!("unknown preset `{other}`"))),
    })
}

pub const PRESETS: [&str; 5] = ["ac1d-table1", "ac2d-b2", "helmholtz-b4", "helmholtz-d5", "highfreq-table5"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollocationSpec {
    pub n_res: usize,
    pub n_bc: usize,
    #[serde(default = "default_mode")]
    pub mode: SamplingMode,
    /// Sampling seed; the experiment seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_mode() -> SamplingMode {
    SamplingMode::Grid
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSpec {
    /// Write `kernel.csv` with the kernel spectrum along the path.
    pub kernel: bool,
    /// Every how many path steps to take a spectrum (the last step is always included).
    pub kernel_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSpec {
    /// Nodes per side of the finite-difference reference grid.
    pub n: usize,
    /// Binary cache for the reference field; computed and written when missing.
    pub cache: Option<PathBuf>,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec { n: 256, cache: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: String,
    /// Space dimension; only read for `helmholtz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Layer widths; `[d, 30, 30, 30, 1]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
    pub collocation: CollocationSpec,
    pub schedule: ScheduleSpec,
    pub strategy: Strategy,
    /// Phase I settings; `train` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase1: Option<TrainConfig>,
    /// Path-tracking settings, or the whole run for `classical`.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

impl ExperimentConfig {
    /// Parses and validates a config, reporting the offending field path and position.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Config(format!("field `{path}`: {inner}"))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the seed override from the environment.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let problem = self.problem()?;
        self.schedule.resolve()?;
        let dims = self.dims(problem.as_ref());
        if dims.len() < 2 || dims[0] != problem.dim() || *dims.last().unwrap() != 1 || dims.contains(&0) {
            return Err(CliError::Config(format!(
                "net must start at the problem dimension {} and end in 1, got {dims:?}",
                problem.dim()
            )));
        }
        if self.collocation.n_res == 0 {
            return Err(CliError::Config("collocation.n_res must be positive".into()));
        }
        if problem.has_boundary() && self.collocation.n_bc == 0 {
            return Err(CliError::Config(format!("problem `{}` needs boundary points (n_bc > 0)", self.problem)));
        }
        self.train.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
        if let Some(p1) = &self.phase1 {
            p1.validate().map_err(|e| CliError::Config(format!("phase1: {e}")))?;
        }
        if self.analysis.kernel
            && (problem.dim() != 1 || self.collocation.mode != SamplingMode::Grid || problem.id() == "ac2d")
        {
            return Err(CliError::Config("analysis.kernel needs a 1D problem on a grid".into()));
        }
        if self.analysis.kernel_every == Some(0) {
            return Err(CliError::Config("analysis.kernel_every must be positive".into()));
        }
        if self.reference.n < 3 {
            return Err(CliError::Config("reference.n must be at least 3".into()));
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<Box<dyn Homotopy>, CliError> {
        if self.dim.is_some() && self.problem != "helmholtz" {
            return Err(CliError::Config(format!("`dim` only applies to helmholtz, not `{}`", self.problem)));
        }
        Ok(problems::problem_by_id(&self.problem, self.dim)?)
    }

    pub fn dims(&self, problem: &dyn Homotopy) -> Vec<usize> {
        self.net.clone().unwrap_or_else(|| vec![problem.dim(), 30, 30, 30, 1])
    }

    pub fn phase1_config(&self) -> &TrainConfig {
        self.phase1.as_ref().unwrap_or(&self.train)
    }

    /// Sets the learning rate of every training segment.
    pub fn set_lr(&mut self, lr: f64) {
        self.train.optimizer = self.train.optimizer.with_lr(lr);
        if let Some(p1) = &mut self.phase1 {
            p1.optimizer = p1.optimizer.with_lr(lr);
        }
    }

    /// Total epoch budget of the run: Phase I plus every Strategy 2 step, or
    /// the classical budget.
    pub fn epoch_budget(&self) -> Result<usize, CliError> {
        let steps = self.schedule.resolve()?.len() - 1;
        Ok(match self.strategy {
            Strategy::Classical => self.train.max_epochs,
            Strategy::S1 => self.phase1_config().max_epochs,
            Strategy::S2 => self.phase1_config().max_epochs + steps * self.train.step_epochs,
        })
    }

    /// The same experiment trained directly at the schedule target with the
    /// same total epoch budget.
    pub fn classical_counterpart(&self) -> Result<Self, CliError> {
        let mut c = self.clone();
        c.train = TrainConfig { max_epochs: self.epoch_budget()?, ..self.phase1_config().clone() };
        c.phase1 = None;
        c.strategy = Strategy::Classical;
        Ok(c)
    }

    /// Full config of a named preset.
    ///
    /// Budgets and learning rates are desk-scale choices; the problem sizes and
    /// schedules are the published ones (the Helmholtz preset `helmholtz-d5` is
    /// the scaled-down `d = 5` variant).
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let schedule = ScheduleSpec::Preset { preset: name.to_string() };
        let grid = |n_res, n_bc| CollocationSpec { n_res, n_bc, mode: SamplingMode::Grid, seed: None };
        let random = |n_res, n_bc| CollocationSpec { n_res, n_bc, mode: SamplingMode::UniformRandom, seed: None };
        let adam = |lr| OptimizerKind::adam(lr);
        let base = |problem: &str, dim, collocation, phase1: TrainConfig, train: TrainConfig| ExperimentConfig {
            problem: problem.to_string(),
            dim,
            net: None,
            seed: 0,
            collocation,
            schedule: schedule.clone(),
            strategy: Strategy::S2,
            phase1: Some(phase1),
            train,
            analysis: AnalysisSpec::default(),
            reference: ReferenceSpec::default(),
            out_dir: PathBuf::from(format!("runs/{name}")),
        };
        Ok(match name {
            "ac1d-table1" => base(
                "ac1d",
                None,
                grid(200, 2),
                TrainConfig { optimizer: adam(1e-3), max_epochs: 60_000, ..TrainConfig::default() },
                TrainConfig { optimizer: adam(1e-4), step_epochs: 1_000, ..TrainConfig::default() },
            ),
            "ac2d-b2" => base(
                "ac2d",
                None,
                grid(2500, 198),
                TrainConfig { optimizer: adam(1e-3), max_epochs: 2_000, ..TrainConfig::default() },
                TrainConfig { optimizer: adam(1e-3), step_epochs: 300, ..TrainConfig::default() },
            ),
            "helmholtz-b4" => base(
                "helmholtz",
                Some(20),
                random(10_000, 2_000),
                TrainConfig { optimizer: adam(1e-3), max_epochs: 5_000, ..TrainConfig::default() },
                TrainConfig { optimizer: adam(1e-3), step_epochs: 500, alpha: 0.0, ..TrainConfig::default() },
            ),
            "helmholtz-d5" => base(
                "helmholtz",
                Some(5),
                random(2_000, 500),
                TrainConfig { optimizer: adam(1e-3), max_epochs: 5_000, ..TrainConfig::default() },
                TrainConfig { optimizer: adam(1e-3), step_epochs: 500, alpha: 0.0, ..TrainConfig::default() },
            ),
            "highfreq-table5" => base(
                "highfreq",
                None,
                grid(300, 0),
                TrainConfig { optimizer: adam(1e-3), max_epochs: 10_000, ..TrainConfig::default() },
                TrainConfig { optimizer: adam(3e-3), step_epochs: 30_000, alpha: 0.0, ..TrainConfig::default() },
            ),
            other => return Err(CliError::Config(format!("unknown preset `{other}`"))),
        })
    }
}
