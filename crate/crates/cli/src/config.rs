//! Run configuration in a flat `key = value` text format.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored. Lists
//! are comma-separated, booleans are `true`/`false`. Unknown or repeated
//! keys are errors. See the README for the full key reference.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;
use ukan_core::layers::{BoundedGrid, LayerConfig, UkanConfig};
use ukan_core::tasks::RegressionTask;
use ukan_core::ModelKind;

#[derive(Debug, Error, PartialEq)]
#[error("config error at `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Moons,
    Regression(RegressionTask),
    Pinn,
    Mnist,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Moons => "moons",
            TaskKind::Regression(RegressionTask::I) => "regression1",
            TaskKind::Regression(RegressionTask::II) => "regression2",
            TaskKind::Regression(RegressionTask::III) => "regression3",
            TaskKind::Pinn => "pinn",
            TaskKind::Mnist => "mnist",
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            TaskKind::Moons => 2,
            TaskKind::Regression(t) => t.dim(),
            TaskKind::Pinn => 1,
            TaskKind::Mnist => 784,
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            TaskKind::Moons => 2,
            TaskKind::Regression(_) | TaskKind::Pinn => 1,
            TaskKind::Mnist => 10,
        }
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "moons" => TaskKind::Moons,
            "regression1" => TaskKind::Regression(RegressionTask::I),
            "regression2" => TaskKind::Regression(RegressionTask::II),
            "regression3" => TaskKind::Regression(RegressionTask::III),
            "pinn" => TaskKind::Pinn,
            "mnist" => TaskKind::Mnist,
            _ => {
                return Err(format!(
                    "unknown task `{s}` (moons, regression1, regression2, regression3, pinn, mnist)"
                ))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: TaskKind,
    pub model: ModelKind,
    pub widths: Vec<usize>,
    pub degree: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_size: usize,
    pub base_branch: bool,
    pub delta_g: f64,
    pub d_pe: usize,
    pub d_femb: usize,
    pub d_hidden: Option<usize>,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub decay_rate: f64,
    pub min_lr: Option<f64>,
    pub epochs: u64,
    /// 0 means full batch.
    pub batch_size: usize,
    pub eval_every: u64,
    /// Evaluations without validation improvement before stopping; 0 disables.
    pub patience: u64,
    pub seed: u64,
    pub n_train: Option<usize>,
    pub n_val: Option<usize>,
    pub noise: f64,
    pub pinn_rate: f64,
    pub pinn_t_lo: f64,
    pub pinn_t_hi: f64,
    pub collocation: usize,
    pub mnist_dir: Option<PathBuf>,
    pub input_scale: f64,
    pub input_shift: f64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskKind::Moons,
            model: ModelKind::Kan,
            widths: vec![2, 4, 2],
            degree: 3,
            grid_min: -1.0,
            grid_max: 1.0,
            grid_size: 5,
            base_branch: false,
            delta_g: 0.5,
            d_pe: 8,
            d_femb: 4,
            d_hidden: None,
            optimizer: OptimizerKind::Adam,
            lr: 0.01,
            weight_decay: 0.0,
            decay_rate: 1.0,
            min_lr: None,
            epochs: 1000,
            batch_size: 0,
            eval_every: 100,
            patience: 0,
            seed: 0,
            n_train: None,
            n_val: None,
            noise: 0.1,
            pinn_rate: 1.0,
            pinn_t_lo: -5.0,
            pinn_t_hi: 5.0,
            collocation: 100,
            mnist_dir: None,
            input_scale: 1.0,
            input_shift: 0.0,
            out_dir: PathBuf::from("runs"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| ConfigError::new(key, format!("cannot parse `{raw}`: {e}")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, ConfigError> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::new(key, format!("expected true or false, got `{raw}`"))),
    }
}

fn parse_optional<T: FromStr>(key: &str, raw: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    if raw == "auto" {
        Ok(None)
    } else {
        parse_value(key, raw).map(Some)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::new(&format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            let (key, value) = (key.trim(), value.trim());
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::new(key, "key given more than once"));
            }
        }
        let mut cfg = RunConfig::default();
        for (key, raw) in &entries {
            cfg.set(key, raw)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assigns one field from its textual value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        match key {
            "task" => self.task = raw.parse().map_err(|e: String| ConfigError::new(key, e))?,
            "model" => {
                self.model = match raw {
                    "kan" => ModelKind::Kan,
                    "ukan" => ModelKind::Ukan,
                    "mlp" => ModelKind::Mlp,
                    _ => return Err(ConfigError::new(key, format!("unknown model `{raw}` (kan, ukan, mlp)"))),
                }
            }
            "widths" => {
                self.widths = raw
                    .split(',')
                    .map(|w| parse_value::<usize>(key, w.trim()))
                    .collect::<Result<_, _>>()?
            }
            "degree" => self.degree = parse_value(key, raw)?,
            "grid_min" => self.grid_min = parse_value(key, raw)?,
            "grid_max" => self.grid_max = parse_value(key, raw)?,
            "grid_size" => self.grid_size = parse_value(key, raw)?,
            "base_branch" => self.base_branch = parse_bool(key, raw)?,
            "delta_g" => self.delta_g = parse_value(key, raw)?,
            "d_pe" => self.d_pe = parse_value(key, raw)?,
            "d_femb" => self.d_femb = parse_value(key, raw)?,
            "d_hidden" => self.d_hidden = parse_optional(key, raw)?,
            "optimizer" => {
                self.optimizer = match raw {
                    "sgd" => OptimizerKind::Sgd,
                    "adam" => OptimizerKind::Adam,
                    _ => return Err(ConfigError::new(key, format!("unknown optimizer `{raw}` (sgd, adam)"))),
                }
            }
            "lr" => self.lr = parse_value(key, raw)?,
            "weight_decay" => self.weight_decay = parse_value(key, raw)?,
            "decay_rate" => self.decay_rate = parse_value(key, raw)?,
            "min_lr" => self.min_lr = parse_optional(key, raw)?,
            "epochs" => self.epochs = parse_value(key, raw)?,
            "batch_size" => self.batch_size = parse_value(key, raw)?,
            "eval_every" => self.eval_every = parse_value(key, raw)?,
            "patience" => self.patience = parse_value(key, raw)?,
            "seed" => self.seed = parse_value(key, raw)?,
            "n_train" => self.n_train = parse_optional(key, raw)?,
            "n_val" => self.n_val = parse_optional(key, raw)?,
            "noise" => self.noise = parse_value(key, raw)?,
            "pinn_rate" => self.pinn_rate = parse_value(key, raw)?,
            "pinn_t_lo" => self.pinn_t_lo = parse_value(key, raw)?,
            "pinn_t_hi" => self.pinn_t_hi = parse_value(key, raw)?,
            "collocation" => self.collocation = parse_value(key, raw)?,
            "mnist_dir" => self.mnist_dir = (raw != "none").then(|| PathBuf::from(raw)),
            "input_scale" => self.input_scale = parse_value(key, raw)?,
            "input_shift" => self.input_shift = parse_value(key, raw)?,
            "out_dir" => self.out_dir = PathBuf::from(raw),
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |key: &str, msg: String| Err(ConfigError::new(key, msg));
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return err("widths", format!("need at least two positive widths, got {:?}", self.widths));
        }
        if self.widths[0] != self.task.input_dim() {
            return err(
                "widths",
                format!("task {} has {} inputs, widths start at {}", self.task.name(), self.task.input_dim(), self.widths[0]),
            );
        }
        if *self.widths.last().unwrap() != self.task.output_dim() {
            return err(
                "widths",
                format!(
                    "task {} has {} outputs, widths end at {}",
                    self.task.name(),
                    self.task.output_dim(),
                    self.widths.last().unwrap()
                ),
            );
        }
        if self.degree > ukan_core::bspline::MAX_DEGREE {
            return err("degree", format!("at most {}, got {}", ukan_core::bspline::MAX_DEGREE, self.degree));
        }
        match self.model {
            ModelKind::Kan => {
                if !(self.grid_min < self.grid_max) || !self.grid_min.is_finite() || !self.grid_max.is_finite() {
                    return err("grid_max", format!("need grid_min < grid_max, got [{}, {}]", self.grid_min, self.grid_max));
                }
                if self.grid_size == 0 {
                    return err("grid_size", "must be at least 1".into());
                }
            }
            ModelKind::Ukan => {
                if !(self.delta_g > 0.0) || !self.delta_g.is_finite() {
                    return err("delta_g", format!("must be positive, got {}", self.delta_g));
                }
                if self.d_pe % 2 != 0 {
                    return err("d_pe", format!("must be even, got {}", self.d_pe));
                }
                if self.d_pe + self.d_femb == 0 {
                    return err("d_pe", "d_pe + d_femb must be positive".into());
                }
                if self.d_hidden == Some(0) {
                    return err("d_hidden", "must be positive".into());
                }
            }
            ModelKind::Mlp => {}
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return err("lr", format!("must be positive, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return err("weight_decay", format!("must be non-negative, got {}", self.weight_decay));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return err("decay_rate", format!("must lie in (0, 1], got {}", self.decay_rate));
        }
        if let Some(m) = self.min_lr {
            if !(m > 0.0 && m <= self.lr) {
                return err("min_lr", format!("must lie in (0, lr], got {m}"));
            }
        }
        if self.eval_every == 0 {
            return err("eval_every", "must be at least 1".into());
        }
        if self.n_train == Some(0) || self.n_val == Some(0) {
            return err("n_train", "dataset sizes must be positive".into());
        }
        if self.task == TaskKind::Moons {
            if self.n_train.is_some_and(|n| n % 2 != 0) || self.n_val.is_some_and(|n| n % 2 != 0) {
                return err("n_train", "moons needs even dataset sizes".into());
            }
            if !(self.noise >= 0.0) {
                return err("noise", format!("must be non-negative, got {}", self.noise));
            }
        }
        if self.task == TaskKind::Pinn {
            if !(self.pinn_t_lo < self.pinn_t_hi) {
                return err("pinn_t_hi", format!("need pinn_t_lo < pinn_t_hi, got [{}, {}]", self.pinn_t_lo, self.pinn_t_hi));
            }
            if self.collocation == 0 {
                return err("collocation", "must be at least 1".into());
            }
            if self.input_scale != 1.0 || self.input_shift != 0.0 {
                return err("input_scale", "the pinn task takes raw time inputs".into());
            }
        }
        if self.task == TaskKind::Mnist && self.mnist_dir.is_none() {
            return err("mnist_dir", "required for the mnist task".into());
        }
        if !self.input_scale.is_finite() || !self.input_shift.is_finite() {
            return err("input_scale", "input transform must be finite".into());
        }
        Ok(())
    }

    pub fn layer_config(&self) -> LayerConfig {
        match self.model {
            ModelKind::Kan => LayerConfig::Kan {
                degree: self.degree,
                grid: BoundedGrid::new(self.grid_min, self.grid_max, self.grid_size)
                    .expect("validated grid"),
                base_branch: self.base_branch,
            },
            ModelKind::Ukan => LayerConfig::Ukan(UkanConfig {
                degree: self.degree,
                delta_g: self.delta_g,
                d_pe: self.d_pe,
                d_femb: self.d_femb,
                d_hidden: self.d_hidden,
            }),
            ModelKind::Mlp => LayerConfig::Linear,
        }
    }

    pub fn min_lr(&self) -> f64 {
        self.min_lr.unwrap_or(self.lr)
    }

    pub fn n_train(&self) -> usize {
        self.n_train.unwrap_or(match self.task {
            TaskKind::Moons => 1000,
            TaskKind::Regression(RegressionTask::III) => 50_000,
            TaskKind::Regression(_) => 10_000,
            TaskKind::Pinn => self.collocation,
            TaskKind::Mnist => 60_000,
        })
    }

    pub fn n_val(&self) -> usize {
        self.n_val.unwrap_or(match self.task {
            TaskKind::Moons => 1000,
            TaskKind::Regression(RegressionTask::III) => 10_000,
            TaskKind::Regression(_) => 2000,
            TaskKind::Pinn => 1001,
            TaskKind::Mnist => 10_000,
        })
    }

    /// Canonical text form; `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or("auto".to_string(), T::to_string)
        }
        let mut s = String::new();
        let widths: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        let lines = [
            ("task", self.task.name().to_string()),
            ("model", self.model.name().to_string()),
            ("widths", widths.join(",")),
            ("degree", self.degree.to_string()),
            ("grid_min", format!("{:?}", self.grid_min)),
            ("grid_max", format!("{:?}", self.grid_max)),
            ("grid_size", self.grid_size.to_string()),
            ("base_branch", self.base_branch.to_string()),
            ("delta_g", format!("{:?}", self.delta_g)),
            ("d_pe", self.d_pe.to_string()),
            ("d_femb", self.d_femb.to_string()),
            ("d_hidden", opt(&self.d_hidden)),
            (
                "optimizer",
                match self.optimizer {
                    OptimizerKind::Sgd => "sgd".into(),
                    OptimizerKind::Adam => "adam".into(),
                },
            ),
            ("lr", format!("{:?}", self.lr)),
            ("weight_decay", format!("{:?}", self.weight_decay)),
            ("decay_rate", format!("{:?}", self.decay_rate)),
            ("min_lr", self.min_lr.map_or("auto".into(), |v| format!("{v:?}"))),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("patience", self.patience.to_string()),
            ("seed", self.seed.to_string()),
            ("n_train", opt(&self.n_train)),
            ("n_val", opt(&self.n_val)),
            ("noise", format!("{:?}", self.noise)),
            ("pinn_rate", format!("{:?}", self.pinn_rate)),
            ("pinn_t_lo", format!("{:?}", self.pinn_t_lo)),
            ("pinn_t_hi", format!("{:?}", self.pinn_t_hi)),
            ("collocation", self.collocation.to_string()),
            (
                "mnist_dir",
                self.mnist_dir.as_ref().map_or("none".into(), |p| p.display().to_string()),
            ),
            ("input_scale", format!("{:?}", self.input_scale)),
            ("input_shift", format!("{:?}", self.input_shift)),
            ("out_dir", self.out_dir.display().to_string()),
        ];
        for (k, v) in lines {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }
}
