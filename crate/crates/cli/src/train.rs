//! Training and evaluation loops driven by a [`RunConfig`].

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use ukan_core::tasks::{gen_moons, gen_regression, load_mnist_idx, metric, pinn_loss, MetricKind, PinnProblem};
use ukan_core::{
    adam_step, sgd_step, AdamConfig, AdamState, Dataset, LayerError, LrSchedule, Model, Split, Tape, Targets,
    Tensor,
};

use crate::checkpoint::{Checkpoint, CheckpointError, OptimizerState};
use crate::config::{ConfigError, OptimizerKind, RunConfig, TaskKind};

pub const METRICS_HEADER: &str = "epoch,lr,metric,train,validation,wall_s";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
/// Points in the PINN evaluation grid.
pub const PINN_EVAL_POINTS: usize = 1001;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("diverged: non-finite loss in epoch {epoch}; last good checkpoint written")]
    Diverged { epoch: u64 },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] ukan_core::Error),
    #[error(transparent)]
    Bench(#[from] ukan_bench::BenchError),
}

macro_rules! core_error {
    ($($t:ty),*) => {$(
        impl From<$t> for RunError {
            fn from(e: $t) -> Self {
                RunError::Core(e.into())
            }
        }
    )*};
}
core_error!(ukan_core::TensorError, LayerError, ukan_core::OptimError, ukan_core::TaskError);

impl RunError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Diverged { .. } => 3,
            RunError::Checkpoint(_) => 4,
            _ => 1,
        }
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
        move |source| RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One evaluation row of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub epoch: u64,
    pub lr: f64,
    pub metric: &'static str,
    pub train: f64,
    pub validation: f64,
    pub wall_s: f64,
}

impl MetricRow {
    /// The row without the wall-clock column.
    pub fn metric_columns(&self) -> String {
        format!("{},{},{},{},{}", self.epoch, self.lr, self.metric, self.train, self.validation)
    }
}

impl std::fmt::Display for MetricRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{:.6}", self.metric_columns(), self.wall_s)
    }
}

/// Training and validation data for one task.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Dataset,
    pub validation: Dataset,
    pub pinn: Option<PinnProblem>,
}

fn data_seed(seed: u64, split: Split) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match split {
        Split::Train => 1,
        Split::Validation => 2,
    });
    rng.next_u64()
}

pub fn pinn_problem(cfg: &RunConfig) -> PinnProblem {
    PinnProblem {
        rate: cfg.pinn_rate,
        t_lo: cfg.pinn_t_lo,
        t_hi: cfg.pinn_t_hi,
        n_collocation: cfg.collocation,
        ..PinnProblem::default()
    }
}

fn analytic_dataset(problem: &PinnProblem, n: usize, split: Split) -> Result<Dataset, RunError> {
    let t = problem.grid(n);
    let f = t.values().iter().map(|&t| problem.solution(t)).collect();
    Ok(Dataset::new(t, Targets::Values(Tensor::new(vec![n, 1], f)?), split)?)
}

/// Generates or loads the datasets named by `cfg`. Synthetic data is drawn
/// from streams derived from the config seed.
pub fn load_task(cfg: &RunConfig) -> Result<TaskData, RunError> {
    let (train_seed, val_seed) = (data_seed(cfg.seed, Split::Train), data_seed(cfg.seed, Split::Validation));
    let (train, validation, pinn) = match cfg.task {
        TaskKind::Moons => (
            gen_moons(cfg.n_train(), cfg.noise, train_seed, Split::Train)?,
            gen_moons(cfg.n_val(), cfg.noise, val_seed, Split::Validation)?,
            None,
        ),
        TaskKind::Regression(task) => (
            gen_regression(task, cfg.n_train(), train_seed, Split::Train)?,
            gen_regression(task, cfg.n_val(), val_seed, Split::Validation)?,
            None,
        ),
        TaskKind::Pinn => {
            let problem = pinn_problem(cfg);
            (
                analytic_dataset(&problem, cfg.collocation, Split::Train)?,
                analytic_dataset(&problem, PINN_EVAL_POINTS, Split::Validation)?,
                Some(problem),
            )
        }
        TaskKind::Mnist => {
            let dir = cfg.mnist_dir.as_deref().expect("validated");
            let train = load_mnist_idx(
                dir.join("train-images-idx3-ubyte"),
                dir.join("train-labels-idx1-ubyte"),
                Split::Train,
            )?;
            let validation = load_mnist_idx(
                dir.join("t10k-images-idx3-ubyte"),
                dir.join("t10k-labels-idx1-ubyte"),
                Split::Validation,
            )?;
            let cap = |d: Dataset, n: Option<usize>| match n {
                Some(n) if n < d.len() => d.slice(0..n),
                _ => d,
            };
            (cap(train, cfg.n_train), cap(validation, cfg.n_val), None)
        }
    };
    let (train, validation) = if cfg.input_scale != 1.0 || cfg.input_shift != 0.0 {
        (
            train.affine_inputs(cfg.input_scale, cfg.input_shift),
            validation.affine_inputs(cfg.input_scale, cfg.input_shift),
        )
    } else {
        (train, validation)
    };
    Ok(TaskData {
        train,
        validation,
        pinn,
    })
}

pub fn build_model(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Model, LayerError> {
    Model::init(cfg.model, &cfg.widths, &cfg.layer_config(), rng)
}

pub fn schedule(cfg: &RunConfig) -> Result<LrSchedule, RunError> {
    Ok(LrSchedule::new(cfg.lr, cfg.decay_rate, cfg.min_lr())?)
}

/// Learning rate used during epoch `epoch` (1-based). Epoch 0 reports the
/// initial rate.
pub fn lr_for_epoch(schedule: &LrSchedule, epoch: u64) -> f64 {
    schedule.lr_at(epoch.saturating_sub(1))
}

fn metric_kind(task: TaskKind) -> MetricKind {
    match task {
        TaskKind::Moons | TaskKind::Mnist => MetricKind::Accuracy,
        TaskKind::Regression(_) => MetricKind::Rmse,
        TaskKind::Pinn => MetricKind::MseVsAnalytic,
    }
}

pub fn metric_name(task: TaskKind) -> &'static str {
    match metric_kind(task) {
        MetricKind::Accuracy => "accuracy",
        MetricKind::Rmse => "rmse",
        MetricKind::MseVsAnalytic => "mse_vs_analytic",
    }
}

/// Train and validation metrics of `model`. For the PINN the train column
/// is the residual loss on the evaluation grid.
pub fn evaluate(model: &Model, data: &TaskData, kind: TaskKind, threads: usize) -> Result<(f64, f64), RunError> {
    let validation = {
        let pred = model.predict(&data.validation.inputs, threads)?;
        metric(metric_kind(kind), &pred, &data.validation.targets)?
    };
    let train = match &data.pinn {
        Some(problem) => {
            let mut tape = Tape::new();
            let loss = pinn_loss(
                |tape, x| model.forward(tape, x),
                &mut tape,
                problem,
                &data.validation.inputs,
            )?;
            loss.item()?
        }
        None => {
            let pred = model.predict(&data.train.inputs, threads)?;
            metric(metric_kind(kind), &pred, &data.train.targets)?
        }
    };
    Ok((train, validation))
}

fn subset(data: &Dataset, rows: &[usize]) -> Result<Dataset, RunError> {
    let d = data.d_in();
    let mut inputs = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        inputs.extend_from_slice(data.inputs.row(r));
    }
    let targets = match &data.targets {
        Targets::Values(t) => {
            let w = t.shape()[1];
            let mut v = Vec::with_capacity(rows.len() * w);
            for &r in rows {
                v.extend_from_slice(t.row(r));
            }
            Targets::Values(Tensor::new(vec![rows.len(), w], v)?)
        }
        Targets::Classes(c) => Targets::Classes(rows.iter().map(|&r| c[r]).collect()),
    };
    Ok(Dataset::new(Tensor::new(vec![rows.len(), d], inputs)?, targets, data.split)?)
}

/// Fresh uniform collocation points on the problem domain.
fn collocation_sample(problem: &PinnProblem, rng: &mut ChaCha8Rng) -> Result<Dataset, RunError> {
    let t: Vec<f64> = (0..problem.n_collocation)
        .map(|_| rng.random_range(problem.t_lo..=problem.t_hi))
        .collect();
    let f = t.iter().map(|&t| problem.solution(t)).collect();
    let n = t.len();
    Ok(Dataset::new(
        Tensor::new(vec![n, 1], t)?,
        Targets::Values(Tensor::new(vec![n, 1], f)?),
        Split::Train,
    )?)
}

fn batch_loss(model: &Model, tape: &mut Tape, batch: &Dataset, pinn: Option<&PinnProblem>) -> Result<Tensor, RunError> {
    if let Some(problem) = pinn {
        return Ok(pinn_loss(|tape, x| model.forward(tape, x), tape, problem, &batch.inputs)?);
    }
    let pred = model.forward(tape, &batch.inputs)?;
    Ok(match &batch.targets {
        Targets::Values(t) => tape.mse(&pred, t)?,
        Targets::Classes(labels) => tape.softmax_cross_entropy(&pred, labels)?,
    })
}

fn optimizer_step(
    cfg: &RunConfig,
    model: &mut Model,
    grads: Vec<Tensor>,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<(), RunError> {
    let mut params = model.parameters_mut();
    match state {
        OptimizerState::Sgd => {
            let grads: Vec<Tensor> = if cfg.weight_decay > 0.0 {
                grads
                    .into_iter()
                    .zip(params.iter())
                    .map(|(mut g, p)| {
                        g.values_mut()
                            .iter_mut()
                            .zip(p.values())
                            .for_each(|(g, p)| *g += cfg.weight_decay * p);
                        g
                    })
                    .collect()
            } else {
                grads
            };
            let refs: Vec<&Tensor> = grads.iter().collect();
            sgd_step(&mut params, &refs, lr)?;
        }
        OptimizerState::Adam(adam) => {
            let refs: Vec<&Tensor> = grads.iter().collect();
            let config = AdamConfig {
                weight_decay: cfg.weight_decay,
                ..AdamConfig::default()
            };
            adam_step(&mut params, &refs, adam, lr, &config)?;
        }
    }
    Ok(())
}

/// Result of a completed (or early-stopped) training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub rows: Vec<MetricRow>,
    pub epochs_run: u64,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Runtime options that do not belong in the config file.
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    /// Threads for evaluation forward passes; training itself is serial.
    pub threads: usize,
    /// Echo metric rows to stderr as they are produced.
    pub verbose: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            threads: 1,
            verbose: false,
        }
    }
}

/// Trains the model described by `cfg`, writing the metrics CSV and the
/// final checkpoint into `cfg.out_dir`.
pub fn train(cfg: &RunConfig, options: TrainOptions) -> Result<TrainOutcome, RunError> {
    cfg.validate()?;
    let start = Instant::now();
    let data = load_task(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = build_model(cfg, &mut rng)?;
    let mut optimizer = match cfg.optimizer {
        OptimizerKind::Sgd => OptimizerState::Sgd,
        OptimizerKind::Adam => OptimizerState::Adam(AdamState::new(&model.parameters())),
    };
    let schedule = schedule(cfg)?;

    std::fs::create_dir_all(&cfg.out_dir).map_err(RunError::io(&cfg.out_dir))?;
    let metrics_path = cfg.out_dir.join(METRICS_FILE);
    let checkpoint_path = cfg.out_dir.join(CHECKPOINT_FILE);
    let mut log = std::fs::File::create(&metrics_path).map_err(RunError::io(&metrics_path))?;
    writeln!(log, "{METRICS_HEADER}").map_err(RunError::io(&metrics_path))?;

    let n = data.train.len();
    let batch = if cfg.batch_size == 0 || data.pinn.is_some() { n } else { cfg.batch_size.min(n) };
    let mut order: Vec<usize> = (0..n).collect();
    let mut rows = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.epochs {
        let lr = lr_for_epoch(&schedule, epoch);
        let good = Checkpoint::capture(cfg, epoch - 1, &rng, &model, &optimizer);
        if batch < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let owned;
            let batch_data = if let Some(problem) = &data.pinn {
                owned = collocation_sample(problem, &mut rng)?;
                &owned
            } else if batch < n {
                owned = subset(&data.train, chunk)?;
                &owned
            } else {
                &data.train
            };
            let mut tape = Tape::new();
            model.watch(&mut tape);
            let loss = batch_loss(&model, &mut tape, batch_data, data.pinn.as_ref())?;
            if !loss.item()?.is_finite() {
                good.save(&checkpoint_path).map_err(RunError::io(&checkpoint_path))?;
                return Err(RunError::Diverged { epoch });
            }
            let grads = model.gradients(&tape.backward(&loss)?)?;
            drop(tape);
            optimizer_step(cfg, &mut model, grads, &mut optimizer, lr)?;
        }
        epochs_run = epoch;

        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let (train, validation) = evaluate(&model, &data, cfg.task, options.threads)?;
            let row = MetricRow {
                epoch,
                lr,
                metric: metric_name(cfg.task),
                train,
                validation,
                wall_s: start.elapsed().as_secs_f64(),
            };
            writeln!(log, "{row}").map_err(RunError::io(&metrics_path))?;
            if options.verbose {
                eprintln!("{row}");
            }
            rows.push(row);
            if cfg.patience > 0 {
                if validation > best {
                    best = validation;
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= cfg.patience {
                        break;
                    }
                }
            }
        }
    }
    log.flush().map_err(RunError::io(&metrics_path))?;
    Checkpoint::capture(cfg, epochs_run, &rng, &model, &optimizer)
        .save(&checkpoint_path)
        .map_err(RunError::io(&checkpoint_path))?;
    Ok(TrainOutcome {
        rows,
        epochs_run,
        metrics_path,
        checkpoint_path,
    })
}

/// Metrics of a stored model on its task (or on `task`, when the widths
/// fit). Returns the row without the wall-clock column.
pub fn eval_checkpoint(path: &Path, task: Option<TaskKind>, threads: usize) -> Result<String, RunError> {
    let ckpt = Checkpoint::load(path)?;
    let model = ckpt.restore_model()?;
    let mut cfg = ckpt.config.clone();
    if let Some(task) = task {
        cfg.task = task;
        cfg.validate()?;
    }
    let data = load_task(&cfg)?;
    let (train, validation) = evaluate(&model, &data, cfg.task, threads)?;
    let row = MetricRow {
        epoch: ckpt.epoch,
        lr: lr_for_epoch(&schedule(&ckpt.config)?, ckpt.epoch),
        metric: metric_name(cfg.task),
        train,
        validation,
        wall_s: 0.0,
    };
    Ok(row.metric_columns())
}

/// Metric columns (all but `wall_s`) of a metrics CSV, one string per line.
pub fn metric_columns(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(i) => line[..i].to_string(),
            None => line.to_string(),
        })
        .collect()
}
