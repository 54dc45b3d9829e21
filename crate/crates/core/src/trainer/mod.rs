//! Training loops: two-stage Annealing-KD, vanilla KD, from-scratch
//! training and the two-hop teacher-assistant pipeline.
//!
//! Every loop shares the same epoch machinery. Shuffling and augmentation
//! are reseeded from `(run seed, global epoch index)`, so a run is a pure
//! function of its configuration and data. Teacher logits are computed once
//! per split up front unless augmentation forces per-batch evaluation.

mod checkpoint;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autograd::{adam_step, sgd_step, AdamState, AutogradError, Graph, NodeId, OptimizerState, Real, Tensor};
use crate::data::{augment_images, batches, mix_seed, DataError, Dataset, TaskKind, Targets};
use crate::distill::{
    cross_entropy_graph, regression_fit_graph, regression_fit_loss, stage_one_graph, vanilla_kd_graph,
    vanilla_kd_regression_graph, AnnealingSchedule, DistillError, StageOneLoss, VanillaKdConfig,
};
use crate::models::{Model, ModelError};

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CheckpointMeta, Stage, FORMAT_VERSION,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{what}: {left} vs {right}")]
    Mismatch {
        what: String,
        left: String,
        right: String,
    },
    #[error("cannot evaluate on an empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Scratch,
    VanillaKd(VanillaKdConfig),
    AnnealingKd {
        schedule: AnnealingSchedule,
        stage_one: StageOneLoss,
    },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Scratch => "scratch",
            Method::VanillaKd(_) => "kd",
            Method::AnnealingKd { .. } => "annealing-kd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// ×0.1 at 50% and again at 75% of the run's epochs.
    StepDecay,
}

impl LrSchedule {
    pub fn rate(self, base: f64, epoch: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::StepDecay => {
                let mut lr = base;
                if 2 * epoch >= total {
                    lr *= 0.1;
                }
                if 4 * epoch >= 3 * total {
                    lr *= 0.1;
                }
                lr
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OptimizerKind {
    /// SGD with classical momentum (`TrainConfig::momentum`).
    #[default]
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

enum Optimizer {
    Sgd(OptimizerState<Real>),
    Adam(AdamState<Real>),
}

impl Optimizer {
    fn new(cfg: &TrainConfig, params: &[Tensor]) -> Result<Self, AutogradError> {
        Ok(match cfg.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd(OptimizerState::new(cfg.lr, cfg.momentum, cfg.weight_decay, params)?),
            OptimizerKind::Adam { beta1, beta2, eps } => {
                Optimizer::Adam(AdamState::new(cfg.lr, beta1, beta2, eps, cfg.weight_decay, params)?)
            }
        })
    }

    fn set_lr(&mut self, lr: f64) {
        match self {
            Optimizer::Sgd(s) => s.lr = lr,
            Optimizer::Adam(s) => s.lr = lr,
        }
    }

    fn step(&mut self, params: &mut [Tensor], grads: &[Option<&Tensor>]) -> Result<(), AutogradError> {
        match self {
            Optimizer::Sgd(s) => sgd_step(params, grads, s),
            Optimizer::Adam(s) => adam_step(params, grads, s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub method: Method,
    /// Epochs for single-stage methods; Annealing-KD takes its count from
    /// the schedule.
    pub epochs: usize,
    pub lr_schedule: LrSchedule,
    /// Pad-crop-flip augmentation of image batches.
    pub augment: bool,
    /// Write wall-clock seconds into metrics; off keeps CSVs reproducible.
    pub record_seconds: bool,
    /// Rows per forward call during evaluation.
    pub eval_chunk: usize,
}

impl TrainConfig {
    pub fn new(method: Method, epochs: usize) -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Sgd,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 128,
            seed: 0,
            method,
            epochs,
            lr_schedule: LrSchedule::Constant,
            augment: false,
            record_seconds: false,
            eval_chunk: 500,
        }
    }

    pub fn total_epochs(&self) -> usize {
        match self.method {
            Method::AnnealingKd { schedule, .. } => schedule.total_epochs(),
            _ => self.epochs,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size < 1 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if self.eval_chunk < 1 {
            return Err(TrainError::Config("eval chunk must be at least 1".into()));
        }
        if self.total_epochs() < 1 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        match self.method {
            Method::VanillaKd(kd) => kd.validate()?,
            Method::AnnealingKd { schedule, .. } => {
                AnnealingSchedule::new(schedule.tau_max, schedule.k, schedule.n)?;
            }
            Method::Scratch => {}
        }
        Optimizer::new(self, &[])?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// 1-based epoch index across all stages of the run.
    pub epoch: usize,
    pub stage: Stage,
    pub temperature: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Accuracy for classification, MSE for regression.
    pub val_metric: f64,
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,stage,temperature,train_loss,val_loss,val_metric,seconds";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRecord {
    pub rows: Vec<MetricsRow>,
}

impl MetricsRecord {
    pub fn stage_rows(&self, stage: Stage) -> impl Iterator<Item = &MetricsRow> {
        self.rows.iter().filter(move |r| r.stage == stage)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch, r.stage, r.temperature, r.train_loss, r.val_loss, r.val_metric, r.seconds
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        fs::write(path, self.to_csv()).map_err(|source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Student holding the best parameters of the final stage.
    pub model: Model,
    pub metrics: MetricsRecord,
    pub best: CheckpointMeta,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::of_model(&self.model, self.best)
    }
}

#[derive(Debug, Clone)]
pub struct TakdOutcome {
    pub assistant: TrainOutcome,
    pub student: TrainOutcome,
}

/// Classification accuracy or regression MSE of `model` on `data`.
pub fn evaluate(model: &Model, data: &Dataset, task: TaskKind) -> Result<f64, TrainError> {
    evaluate_chunked(model, data, task, 500)
}

pub fn evaluate_chunked(model: &Model, data: &Dataset, task: TaskKind, chunk: usize) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if data.task() != task {
        return Err(TrainError::Mismatch {
            what: "task kind".into(),
            left: task.to_string(),
            right: data.task().to_string(),
        });
    }
    let logits = model.predict(&data.inputs, chunk.max(1))?;
    metric_of(&logits, &data.targets)
}

fn metric_of(logits: &Tensor, targets: &Targets) -> Result<f64, TrainError> {
    match targets {
        Targets::Classes { labels, .. } => Ok(accuracy(logits, labels)),
        Targets::Values(y) => Ok(regression_fit_loss(logits, y)?),
    }
}

fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| {
            let row = logits.row(i);
            let best = row
                .iter()
                .enumerate()
                .fold(0, |b, (j, &v)| if v > row[b] { j } else { b });
            best == l
        })
        .count();
    correct as f64 / labels.len() as f64
}

fn check_compatible(a: &Model, b: &Model, what: &str) -> Result<(), TrainError> {
    let (sa, sb) = (a.spec(), b.spec());
    if sa.output_dim != sb.output_dim {
        return Err(TrainError::Mismatch {
            what: format!("{what} output dimension"),
            left: sa.output_dim.to_string(),
            right: sb.output_dim.to_string(),
        });
    }
    if sa.input_shape != sb.input_shape {
        return Err(TrainError::Mismatch {
            what: format!("{what} input shape"),
            left: format!("{:?}", sa.input_shape),
            right: format!("{:?}", sb.input_shape),
        });
    }
    Ok(())
}

fn check_data(model: &Model, train: &Dataset, val: &Dataset) -> Result<(), TrainError> {
    for d in [train, val] {
        if d.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        if d.output_dim() != model.spec().output_dim {
            return Err(TrainError::Mismatch {
                what: "dataset targets vs model output dimension".into(),
                left: d.output_dim().to_string(),
                right: model.spec().output_dim.to_string(),
            });
        }
        if d.sample_shape() != model.spec().input_shape.as_slice() {
            return Err(TrainError::Mismatch {
                what: "dataset sample shape vs model input".into(),
                left: format!("{:?}", d.sample_shape()),
                right: format!("{:?}", model.spec().input_shape),
            });
        }
    }
    if train.task() != val.task() {
        return Err(TrainError::Mismatch {
            what: "train vs validation task".into(),
            left: train.task().to_string(),
            right: val.task().to_string(),
        });
    }
    Ok(())
}

/// Frozen teacher with logits cached for the train and validation splits.
struct TeacherView<'a> {
    model: &'a Model,
    train: Tensor,
    val: Tensor,
}

impl<'a> TeacherView<'a> {
    fn new(model: &'a Model, train: &Dataset, val: &Dataset, chunk: usize) -> Result<Self, TrainError> {
        Ok(TeacherView {
            model,
            train: model.predict(&train.inputs, chunk)?,
            val: model.predict(&val.inputs, chunk)?,
        })
    }
}

#[derive(Clone, Copy)]
enum Objective {
    Hard,
    Kd(VanillaKdConfig),
    StageOne { kind: StageOneLoss, phi: f64 },
}

impl Objective {
    fn build(
        self,
        g: &mut Graph<Real>,
        zs: NodeId,
        zt: Option<&Tensor>,
        targets: &Targets,
    ) -> Result<NodeId, TrainError> {
        let teacher = |g: &mut Graph<Real>| {
            zt.map(|t| g.constant(t.clone()))
                .ok_or_else(|| TrainError::Config("objective needs teacher logits".into()))
        };
        Ok(match (self, targets) {
            (Objective::Hard, Targets::Classes { labels, .. }) => cross_entropy_graph(g, zs, labels)?,
            (Objective::Hard, Targets::Values(y)) => {
                let y = g.constant(y.clone());
                regression_fit_graph(g, zs, y)?
            }
            (Objective::Kd(cfg), Targets::Classes { labels, .. }) => {
                let zt = teacher(g)?;
                vanilla_kd_graph(g, zs, zt, labels, &cfg)?
            }
            (Objective::Kd(cfg), Targets::Values(y)) => {
                let zt = teacher(g)?;
                let y = g.constant(y.clone());
                vanilla_kd_regression_graph(g, zs, zt, y, &cfg)?
            }
            (Objective::StageOne { kind, phi }, _) => {
                let zt = teacher(g)?;
                stage_one_graph(g, kind, zs, zt, phi)?
            }
        })
    }

    fn uses_teacher(self) -> bool {
        !matches!(self, Objective::Hard)
    }
}

/// Lowest-or-highest tracker that snapshots parameters on strict improvement.
struct Best {
    maximize: bool,
    meta: Option<CheckpointMeta>,
    params: Vec<Tensor>,
}

impl Best {
    fn new(maximize: bool) -> Self {
        Best {
            maximize,
            meta: None,
            params: Vec::new(),
        }
    }

    fn offer(&mut self, model: &Model, meta: CheckpointMeta) {
        let better = match self.meta {
            None => true,
            Some(m) if self.maximize => meta.metric > m.metric,
            Some(m) => meta.metric < m.metric,
        };
        if better && meta.metric.is_finite() || self.meta.is_none() {
            self.meta = Some(meta);
            self.params = model.params().to_vec();
        }
    }

    fn restore(self, model: &mut Model) -> Result<CheckpointMeta, TrainError> {
        let meta = self
            .meta
            .ok_or_else(|| TrainError::Config("no epoch was trained".into()))?;
        model.set_params(self.params)?;
        Ok(meta)
    }
}

struct Session<'a> {
    cfg: &'a TrainConfig,
    train: &'a Dataset,
    val: &'a Dataset,
    teacher: Option<&'a TeacherView<'a>>,
    metrics: MetricsRecord,
    total_epochs: usize,
}

impl Session<'_> {
    /// One epoch at global index `epoch` (0-based); returns the metrics row.
    fn epoch(
        &mut self,
        model: &mut Model,
        opt: &mut Optimizer,
        objective: Objective,
        epoch: usize,
        stage: Stage,
        temperature: f64,
    ) -> Result<MetricsRow, TrainError> {
        let start = Instant::now();
        opt.set_lr(self.cfg.lr_schedule.rate(self.cfg.lr, epoch, self.total_epochs));
        let teacher = if objective.uses_teacher() {
            Some(self.teacher.ok_or_else(|| TrainError::Config("objective needs a teacher".into()))?)
        } else {
            None
        };
        let augment = self.cfg.augment && self.train.inputs.shape().len() == 4;
        let mut aug_rng = ChaCha8Rng::seed_from_u64(mix_seed(self.cfg.seed, 0xa0_0000 + epoch as u64));
        let mut loss_sum = 0.0;
        for batch in batches(self.train, self.cfg.batch_size, mix_seed(self.cfg.seed, epoch as u64))? {
            let inputs = if augment {
                augment_images(&batch.inputs, &mut aug_rng)
            } else {
                batch.inputs
            };
            let zt = match teacher {
                Some(t) if augment => Some(t.model.forward(&inputs)?),
                Some(t) => Some(t.train.gather_rows(&batch.indices)),
                None => None,
            };
            let mut g = Graph::new();
            let params = model.bind(&mut g, true);
            let x = g.constant(inputs);
            let zs = model.forward_graph(&mut g, x, &params)?;
            let loss = objective.build(&mut g, zs, zt.as_ref(), &batch.targets)?;
            loss_sum += g.value(loss).item() * batch.indices.len() as f64;
            let grads = g.backward(loss)?;
            let grads: Vec<_> = params.iter().map(|&p| grads.get(p)).collect();
            opt.step(model.params_mut(), &grads)?;
        }
        let (val_loss, val_metric) = self.validate(model, objective)?;
        let row = MetricsRow {
            epoch: epoch + 1,
            stage,
            temperature,
            train_loss: loss_sum / self.train.len() as f64,
            val_loss,
            val_metric,
            seconds: if self.cfg.record_seconds {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        log::debug!(
            "epoch {} stage {} T={} train {:.6} val {:.6} metric {:.6}",
            row.epoch,
            row.stage,
            row.temperature,
            row.train_loss,
            row.val_loss,
            row.val_metric
        );
        self.metrics.rows.push(row.clone());
        Ok(row)
    }

    fn validate(&self, model: &Model, objective: Objective) -> Result<(f64, f64), TrainError> {
        let logits = model.predict(&self.val.inputs, self.cfg.eval_chunk)?;
        let mut g = Graph::new();
        let zs = g.constant(logits.clone());
        let zt = self.teacher.map(|t| &t.val);
        let loss = objective.build(&mut g, zs, zt, &self.val.targets)?;
        Ok((g.value(loss).item(), metric_of(&logits, &self.val.targets)?))
    }
}

fn maximize_metric(data: &Dataset) -> bool {
    data.task() == TaskKind::Classification
}

fn new_optimizer(cfg: &TrainConfig, model: &Model) -> Result<Optimizer, TrainError> {
    Ok(Optimizer::new(cfg, model.params())?)
}

/// Called after the last stage-I epoch at each temperature with the
/// current (not best) student.
pub trait StageObserver {
    fn temperature_done(&mut self, temperature: u32, phi: f64, student: &Model);
}

impl<F: FnMut(u32, f64, &Model)> StageObserver for F {
    fn temperature_done(&mut self, temperature: u32, phi: f64, student: &Model) {
        self(temperature, phi, student)
    }
}

pub fn train_annealing_kd(
    student: Model,
    teacher: &Model,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_annealing_kd_observed(student, teacher, train, val, cfg, &mut |_: u32, _: f64, _: &Model| {})
}

pub fn train_annealing_kd_observed(
    student: Model,
    teacher: &Model,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn StageObserver,
) -> Result<TrainOutcome, TrainError> {
    let stage_one = train_stage_one(student, teacher, train, val, cfg, observer)?;
    let Method::AnnealingKd { schedule, .. } = cfg.method else {
        unreachable!("checked by train_stage_one")
    };
    if schedule.n == 0 {
        return Ok(stage_one);
    }
    let two = train_stage_two(stage_one.model, train, val, cfg, schedule.stage_one_epochs(), schedule.n)?;
    let mut metrics = stage_one.metrics;
    metrics.rows.extend(two.metrics.rows);
    Ok(TrainOutcome {
        model: two.model,
        metrics,
        best: two.best,
    })
}

/// Annealed logit matching over the full temperature sweep. The returned
/// model holds the best checkpoint at the final temperature.
pub fn train_stage_one(
    mut student: Model,
    teacher: &Model,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn StageObserver,
) -> Result<TrainOutcome, TrainError> {
    let Method::AnnealingKd { schedule, stage_one } = cfg.method else {
        return Err(TrainError::Config(format!(
            "annealing-kd training needs an annealing schedule, got {}",
            cfg.method.name()
        )));
    };
    cfg.validate()?;
    check_compatible(teacher, &student, "teacher vs student")?;
    check_data(&student, train, val)?;
    let view = TeacherView::new(teacher, train, val, cfg.eval_chunk)?;
    let mut session = Session {
        cfg,
        train,
        val,
        teacher: Some(&view),
        metrics: MetricsRecord::default(),
        total_epochs: schedule.total_epochs(),
    };
    let mut opt = new_optimizer(cfg, &student)?;
    let mut epoch = 0;
    let mut best = Best::new(false);
    for t in schedule.temperatures() {
        let phi = schedule.factor(t)?;
        best = Best::new(false);
        let objective = Objective::StageOne { kind: stage_one, phi };
        for _ in 0..schedule.k {
            let row = session.epoch(&mut student, &mut opt, objective, epoch, Stage::One, t as f64)?;
            epoch += 1;
            best.offer(
                &student,
                CheckpointMeta {
                    epoch: row.epoch,
                    stage: Stage::One,
                    temperature: t as f64,
                    metric: row.val_loss,
                },
            );
        }
        observer.temperature_done(t, phi, &student);
    }
    let best = best.restore(&mut student)?;
    Ok(TrainOutcome {
        model: student,
        metrics: session.metrics,
        best,
    })
}

/// Hard-target fine-tuning for `epochs` epochs starting at global epoch
/// `first_epoch`. Needs no teacher.
pub fn train_stage_two(
    mut student: Model,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    first_epoch: usize,
    epochs: usize,
) -> Result<TrainOutcome, TrainError> {
    check_data(&student, train, val)?;
    if epochs == 0 {
        return Err(TrainError::Config("stage II needs at least one epoch".into()));
    }
    let mut session = Session {
        cfg,
        train,
        val,
        teacher: None,
        metrics: MetricsRecord::default(),
        total_epochs: cfg.total_epochs().max(first_epoch + epochs),
    };
    let mut opt = new_optimizer(cfg, &student)?;
    let mut best = Best::new(maximize_metric(val));
    for epoch in first_epoch..first_epoch + epochs {
        let row = session.epoch(&mut student, &mut opt, Objective::Hard, epoch, Stage::Two, 1.0)?;
        best.offer(
            &student,
            CheckpointMeta {
                epoch: row.epoch,
                stage: Stage::Two,
                temperature: 1.0,
                metric: row.val_metric,
            },
        );
    }
    let best = best.restore(&mut student)?;
    Ok(TrainOutcome {
        model: student,
        metrics: session.metrics,
        best,
    })
}

pub fn train_vanilla_kd(
    student: Model,
    teacher: &Model,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let Method::VanillaKd(kd) = cfg.method else {
        return Err(TrainError::Config(format!(
            "vanilla KD needs a kd method config, got {}",
            cfg.method.name()
        )));
    };
    check_compatible(teacher, &student, "teacher vs student")?;
    check_data(&student, train, val)?;
    cfg.validate()?;
    let view = TeacherView::new(teacher, train, val, cfg.eval_chunk)?;
    single_stage(student, Some(&view), train, val, cfg, Objective::Kd(kd), kd.temperature)
}

pub fn train_scratch(student: Model, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    if cfg.method != Method::Scratch {
        return Err(TrainError::Config(format!(
            "scratch training got a {} method config",
            cfg.method.name()
        )));
    }
    check_data(&student, train, val)?;
    cfg.validate()?;
    single_stage(student, None, train, val, cfg, Objective::Hard, 1.0)
}

fn single_stage(
    mut student: Model,
    teacher: Option<&TeacherView<'_>>,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    objective: Objective,
    temperature: f64,
) -> Result<TrainOutcome, TrainError> {
    let mut session = Session {
        cfg,
        train,
        val,
        teacher,
        metrics: MetricsRecord::default(),
        total_epochs: cfg.epochs,
    };
    let mut opt = new_optimizer(cfg, &student)?;
    let mut best = Best::new(maximize_metric(val));
    for epoch in 0..cfg.epochs {
        let row = session.epoch(&mut student, &mut opt, objective, epoch, Stage::Single, temperature)?;
        best.offer(
            &student,
            CheckpointMeta {
                epoch: row.epoch,
                stage: Stage::Single,
                temperature,
                metric: row.val_metric,
            },
        );
    }
    let best = best.restore(&mut student)?;
    Ok(TrainOutcome {
        model: student,
        metrics: session.metrics,
        best,
    })
}

/// Teacher → assistant by vanilla KD, then assistant → student.
pub fn train_takd(
    teacher: &Model,
    assistant: Model,
    student: Model,
    train: &Dataset,
    val: &Dataset,
    cfg_assistant: &TrainConfig,
    cfg_student: &TrainConfig,
) -> Result<TakdOutcome, TrainError> {
    check_compatible(teacher, &assistant, "teacher vs assistant")?;
    check_compatible(&assistant, &student, "assistant vs student")?;
    let assistant = if cfg_assistant.epochs == 0 {
        TrainOutcome {
            model: assistant,
            metrics: MetricsRecord::default(),
            best: CheckpointMeta {
                epoch: 0,
                stage: Stage::Single,
                temperature: 1.0,
                metric: f64::NAN,
            },
        }
    } else {
        train_vanilla_kd(assistant, teacher, train, val, cfg_assistant)?
    };
    let student = train_vanilla_kd(student, &assistant.model, train, val, cfg_student)?;
    Ok(TakdOutcome { assistant, student })
}
