//! Multi-seed experiment runs driven by an [`ExperimentConfig`].
//!
//! Output layout of [`run_experiment`]:
//!
//! ```text
//! <out>/config.txt          rendered configuration
//! <out>/summary.csv         one row per successful seed
//! <out>/seed-<s>/metrics.csv
//! <out>/seed-<s>/best.ckpt
//! <out>/seed-<s>/teacher.ckpt        when the teacher was trained here
//! <out>/seed-<s>/teacher_metrics.csv
//! <out>/seed-<s>/assistant_metrics.csv
//! <out>/seed-<s>/FAILED      error text, only when the seed failed
//! <out>/FAILED               present when any seed failed
//! ```

mod config;

pub use config::{
    AnnealingSection, Arch, ConfigError, DataConfig, ExperimentConfig, KdSection, LandscapeSection, MethodName,
    NetConfig, TrainSection,
};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{
    gen_blob_classification, load_cifar_with, mix_seed, sine_splits, CifarOptions, DataError, DataSplits, Dataset,
    Split, TaskKind,
};
use crate::distill::{annealing_factor, regression_fit_loss, AnnealingSchedule, DistillError, VanillaKdConfig};
use crate::landscape::{loss_slice, random_direction, stage_one_loss, Axis, LandscapeError, LossGrid};
use crate::models::{Model, ModelError};
use crate::trainer::{
    evaluate_chunked, load_checkpoint, save_checkpoint, train_annealing_kd_observed, train_scratch, train_takd,
    train_vanilla_kd, CheckpointError, Method, StageObserver, TrainConfig, TrainError, TrainOutcome,
};

/// Overrides the CIFAR directory named in a config.
pub const CIFAR_DIR_ENV: &str = "AKD_CIFAR_DIR";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("config error: {0}")]
    Invalid(String),
    #[error("output directory {0} already exists and is not empty; pass --force to reuse it")]
    OutputExists(PathBuf),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Summary { path: PathBuf, message: String },
    #[error("{} seed(s) failed: {}", .0.len(), .0.iter().map(|(s, e)| format!("seed {s}: {e}")).collect::<Vec<_>>().join("; "))]
    SeedsFailed(Vec<(u64, String)>),
}

impl RunError {
    /// True for problems with the user's input rather than with the run.
    pub fn is_config(&self) -> bool {
        matches!(self, RunError::Config(_) | RunError::Invalid(_) | RunError::OutputExists(_))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), RunError> {
    fs::write(path, contents).map_err(io_err(path))
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(ExperimentConfig::parse(&text)?)
}

/// Train/validation/test data for one seed.
pub fn load_splits(cfg: &ExperimentConfig, seed: u64) -> Result<DataSplits, RunError> {
    match &cfg.data {
        DataConfig::Sine(s) => Ok(sine_splits(&crate::data::SineConfig { seed, ..s.clone() })?),
        DataConfig::Blobs {
            classes,
            dim,
            train_per_class,
            val_per_class,
            test_per_class,
        } => {
            let per = train_per_class + val_per_class + test_per_class;
            let all = gen_blob_classification(*classes, per, *dim, seed)?;
            let range = |from: usize, count: usize, split| {
                let idx: Vec<usize> = (from * classes..(from + count) * classes).collect();
                all.subset(&idx).with_split(split)
            };
            Ok(DataSplits {
                train: range(0, *train_per_class, Split::Train),
                val: range(*train_per_class, *val_per_class, Split::Validation),
                test: range(train_per_class + val_per_class, *test_per_class, Split::Test),
                normalization: None,
            })
        }
        DataConfig::Cifar {
            variant,
            dir,
            subset,
            val_count,
            test_subset,
        } => {
            let dir = std::env::var_os(CIFAR_DIR_ENV)
                .map(PathBuf::from)
                .or_else(|| dir.clone())
                .ok_or_else(|| {
                    RunError::Invalid(format!("CIFAR data needs [data] dir or the {CIFAR_DIR_ENV} variable"))
                })?;
            let opts = CifarOptions {
                variant: *variant,
                subset: *subset,
                seed,
                val_count: *val_count,
                test_subset: *test_subset,
            };
            Ok(load_cifar_with(&dir, &opts)?)
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, method: Method, seed: u64, eval_chunk: usize) -> TrainConfig {
        let mut c = TrainConfig::new(method, self.epochs);
        c.optimizer = self.optimizer;
        c.lr = self.lr;
        c.momentum = self.momentum;
        c.weight_decay = self.weight_decay;
        c.batch_size = self.batch_size;
        c.seed = seed;
        c.lr_schedule = self.lr_schedule;
        c.augment = self.augment;
        c.record_seconds = self.record_seconds;
        c.eval_chunk = eval_chunk;
        c
    }
}

impl ExperimentConfig {
    fn kd_config(&self) -> Result<VanillaKdConfig, RunError> {
        let kd = self
            .kd
            .ok_or_else(|| RunError::Invalid(format!("method {} needs a [kd] section", self.method.as_str())))?;
        VanillaKdConfig::new(kd.temperature, kd.lambda).map_err(|e| RunError::Invalid(e.to_string()))
    }

    /// Trainer method for the student network.
    pub fn student_method(&self) -> Result<Method, RunError> {
        Ok(match self.method {
            MethodName::Scratch => Method::Scratch,
            MethodName::Kd | MethodName::Takd => Method::VanillaKd(self.kd_config()?),
            MethodName::AnnealingKd => {
                let a = self
                    .annealing
                    .ok_or_else(|| RunError::Invalid("annealing-kd needs an [annealing] section".into()))?;
                Method::AnnealingKd {
                    schedule: AnnealingSchedule::new(a.tau_max, a.k, a.n).map_err(|e| RunError::Invalid(e.to_string()))?,
                    stage_one: a.stage_one,
                }
            }
        })
    }

    /// Student training config for `seed`.
    pub fn student_train_config(&self, seed: u64) -> Result<TrainConfig, RunError> {
        let c = self.train.to_train_config(self.student_method()?, seed, self.eval_chunk);
        c.validate().map_err(|e| RunError::Invalid(format!("[train]: {e}")))?;
        Ok(c)
    }

    /// Fails when the configured data cannot be located.
    pub fn check_data_source(&self) -> Result<(), RunError> {
        if let DataConfig::Cifar { dir: None, .. } = &self.data {
            if std::env::var_os(CIFAR_DIR_ENV).is_none() {
                return Err(RunError::Invalid(format!(
                    "CIFAR data needs [data] dir or the {CIFAR_DIR_ENV} variable"
                )));
            }
        }
        Ok(())
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<(), RunError> {
        self.student_train_config(0)?;
        for (name, net) in [("teacher", &self.teacher), ("assistant", &self.assistant)] {
            if let Some(NetConfig { train: Some(t), checkpoint: None, .. }) = net {
                let method = match name {
                    "assistant" => Method::VanillaKd(self.kd_config()?),
                    _ => Method::Scratch,
                };
                t.to_train_config(method, 0, self.eval_chunk)
                    .validate()
                    .map_err(|e| RunError::Invalid(format!("[{name}.train]: {e}")))?;
            }
        }
        if let Some(l) = &self.landscape {
            Axis::symmetric(l.radius, l.steps).map_err(|e| RunError::Invalid(format!("[landscape]: {e}")))?;
            if l.directions == 0 {
                return Err(RunError::Invalid("[landscape] directions must be at least 1".into()));
            }
            if let Some(a) = &self.annealing {
                if let Some(t) = l.temperatures.iter().find(|&&t| t < 1 || t > a.tau_max) {
                    return Err(RunError::Invalid(format!(
                        "[landscape] temperature {t} outside 1..={}",
                        a.tau_max
                    )));
                }
            }
        }
        Ok(())
    }
}

fn build_net(net: &NetConfig, data: &Dataset, seed: u64) -> Result<Model, RunError> {
    let spec = net.arch.spec(
        data.sample_shape(),
        data.output_dim(),
        net.activation,
        net.init,
        seed.wrapping_add(net.seed_offset),
    );
    Ok(Model::build(&spec)?)
}

/// Student network for `seed`, shaped for the configured data.
pub fn build_student(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<Model, RunError> {
    build_net(&cfg.student, data, seed)
}

/// One summary line.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub seed: u64,
    pub method: String,
    pub task: TaskKind,
    /// Test accuracy (classification) or test MSE against targets (regression).
    pub final_metric: f64,
    /// Validation metric of the selected checkpoint.
    pub best_metric: f64,
    /// Test MSE between student and teacher outputs; NaN without a teacher.
    pub teacher_mse: f64,
    pub seconds: f64,
}

pub const SUMMARY_HEADER: &str = "seed,method,task,final_metric,best_metric,teacher_mse,seconds";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.seed, r.method, r.task, r.final_metric, r.best_metric, r.teacher_mse, r.seconds
            ));
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, RunError> {
        let err = |line: usize, message: String| RunError::Summary {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == SUMMARY_HEADER => {}
            Some((i, h)) => return Err(err(i + 1, format!("unexpected header {h:?}"))),
            None => return Err(err(0, "empty summary".into())),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 7 {
                return Err(err(i + 1, format!("expected 7 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(i + 1, format!("bad number {s:?}")));
            rows.push(SummaryRow {
                seed: f[0].parse().map_err(|_| err(i + 1, format!("bad seed {:?}", f[0])))?,
                method: f[1].to_string(),
                task: f[2].parse().map_err(|_| err(i + 1, format!("bad task {:?}", f[2])))?,
                final_metric: num(f[3])?,
                best_metric: num(f[4])?,
                teacher_mse: num(f[5])?,
                seconds: num(f[6])?,
            });
        }
        if rows.is_empty() {
            return Err(err(0, "summary has no rows".into()));
        }
        Ok(Summary { rows })
    }

    pub fn read(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Summary::parse(&text, path)
    }
}

/// Everything produced for one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub splits: DataSplits,
    pub teacher: Option<Model>,
    /// Present when the teacher was trained rather than loaded.
    pub teacher_outcome: Option<TrainOutcome>,
    pub assistant: Option<TrainOutcome>,
    pub student: TrainOutcome,
    pub summary: SummaryRow,
}

fn load_or_init(
    cfg: &ExperimentConfig,
    net: &NetConfig,
    splits: &DataSplits,
    seed: u64,
) -> Result<(Model, Option<TrainConfig>), RunError> {
    let mut model = build_net(net, &splits.train, seed)?;
    if let Some(path) = &net.checkpoint {
        load_checkpoint(path)?.apply(&mut model)?;
        return Ok((model, None));
    }
    let section = net
        .train
        .as_ref()
        .ok_or_else(|| RunError::Invalid("network needs a checkpoint or a training section".into()))?;
    Ok((model, Some(section.to_train_config(Method::Scratch, seed, cfg.eval_chunk))))
}

/// Runs one seed end to end without writing anything.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun, RunError> {
    run_seed_observed(cfg, seed, &mut |_: u32, _: f64, _: &Model| {})
}

/// [`run_seed`] with a hook into annealing stage I.
pub fn run_seed_observed(
    cfg: &ExperimentConfig,
    seed: u64,
    observer: &mut dyn StageObserver,
) -> Result<SeedRun, RunError> {
    let start = Instant::now();
    let student_cfg = cfg.student_train_config(seed)?;
    let splits = load_splits(cfg, seed)?;

    let (teacher, teacher_outcome) = match &cfg.teacher {
        None => (None, None),
        Some(net) => {
            let (model, train_cfg) = load_or_init(cfg, net, &splits, seed)?;
            match train_cfg {
                None => (Some(model), None),
                Some(c) => {
                    log::info!("seed {seed}: training teacher for {} epochs", c.epochs);
                    let out = train_scratch(model, &splits.train, &splits.val, &c)?;
                    (Some(out.model.clone()), Some(out))
                }
            }
        }
    };

    let student = build_student(cfg, &splits.train, seed)?;
    let need_teacher = || {
        teacher
            .as_ref()
            .ok_or_else(|| RunError::Invalid(format!("method {} needs a teacher", cfg.method.as_str())))
    };
    log::info!("seed {seed}: training student with {}", cfg.method.as_str());
    let (student_out, assistant_out) = match cfg.method {
        MethodName::Scratch => (train_scratch(student, &splits.train, &splits.val, &student_cfg)?, None),
        MethodName::Kd => (
            train_vanilla_kd(student, need_teacher()?, &splits.train, &splits.val, &student_cfg)?,
            None,
        ),
        MethodName::AnnealingKd => (
            train_annealing_kd_observed(student, need_teacher()?, &splits.train, &splits.val, &student_cfg, observer)?,
            None,
        ),
        MethodName::Takd => {
            let net = cfg
                .assistant
                .as_ref()
                .ok_or_else(|| RunError::Invalid("takd needs an [assistant] section".into()))?;
            let mut assistant = build_net(net, &splits.train, seed)?;
            let assistant_cfg = match &net.checkpoint {
                Some(path) => {
                    load_checkpoint(path)?.apply(&mut assistant)?;
                    TrainConfig {
                        epochs: 0,
                        ..student_cfg.clone()
                    }
                }
                None => net
                    .train
                    .as_ref()
                    .ok_or_else(|| RunError::Invalid("[assistant] needs a checkpoint or [assistant.train]".into()))?
                    .to_train_config(student_cfg.method, seed, cfg.eval_chunk),
            };
            let r = train_takd(
                need_teacher()?,
                assistant,
                student,
                &splits.train,
                &splits.val,
                &assistant_cfg,
                &student_cfg,
            )?;
            (r.student, Some(r.assistant))
        }
    };
    finish(cfg, seed, splits, teacher, teacher_outcome, assistant_out, student_out, start)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    cfg: &ExperimentConfig,
    seed: u64,
    splits: DataSplits,
    teacher: Option<Model>,
    teacher_outcome: Option<TrainOutcome>,
    assistant: Option<TrainOutcome>,
    student: TrainOutcome,
    start: Instant,
) -> Result<SeedRun, RunError> {
    let task = splits.test.task();
    let final_metric = evaluate_chunked(&student.model, &splits.test, task, cfg.eval_chunk)?;
    let best_metric = student
        .metrics
        .rows
        .iter()
        .find(|r| r.epoch == student.best.epoch)
        .map_or(f64::NAN, |r| r.val_metric);
    let teacher_mse = match &teacher {
        Some(t) => {
            let zs = student.model.predict(&splits.test.inputs, cfg.eval_chunk)?;
            let zt = t.predict(&splits.test.inputs, cfg.eval_chunk)?;
            regression_fit_loss(&zs, &zt)?
        }
        None => f64::NAN,
    };
    let seconds = if cfg.train.record_seconds {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    let summary = SummaryRow {
        seed,
        method: cfg.method.as_str().to_string(),
        task,
        final_metric,
        best_metric,
        teacher_mse,
        seconds,
    };
    Ok(SeedRun {
        seed,
        splits,
        teacher,
        teacher_outcome,
        assistant,
        student,
        summary,
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Reuse a non-empty output directory.
    pub force: bool,
    /// Replaces the configured seed list.
    pub seeds: Option<Vec<u64>>,
    /// Worker threads for running seeds; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// Creates `out`, refusing a non-empty directory unless `force` is set.
pub fn prepare_output(out: &Path, force: bool) -> Result<(), RunError> {
    if out.exists() {
        let mut entries = fs::read_dir(out).map_err(io_err(out))?;
        if entries.next().is_some() && !force {
            return Err(RunError::OutputExists(out.to_path_buf()));
        }
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let marker = out.join("FAILED");
    if marker.exists() {
        fs::remove_file(&marker).map_err(io_err(&marker))?;
    }
    Ok(())
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn write_seed(dir: &Path, run: &SeedRun) -> Result<(), RunError> {
    run.student.metrics.write_csv(&dir.join("metrics.csv"))?;
    save_checkpoint(&dir.join("best.ckpt"), &run.student.checkpoint())?;
    if let Some(t) = &run.teacher_outcome {
        save_checkpoint(&dir.join("teacher.ckpt"), &t.checkpoint())?;
        t.metrics.write_csv(&dir.join("teacher_metrics.csv"))?;
    }
    if let Some(a) = &run.assistant {
        if !a.metrics.rows.is_empty() {
            a.metrics.write_csv(&dir.join("assistant_metrics.csv"))?;
            save_checkpoint(&dir.join("assistant.ckpt"), &a.checkpoint())?;
        }
    }
    Ok(())
}

fn run_one(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<SummaryRow, String> {
    let dir = seed_dir(out, seed);
    let go = || -> Result<SummaryRow, RunError> {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let marker = dir.join("FAILED");
        if marker.exists() {
            fs::remove_file(&marker).map_err(io_err(&marker))?;
        }
        let run = run_seed(cfg, seed)?;
        write_seed(&dir, &run)?;
        Ok(run.summary)
    };
    go().map_err(|e| {
        let msg = e.to_string();
        log::error!("seed {seed} failed: {msg}");
        let _ = fs::create_dir_all(&dir);
        let _ = fs::write(dir.join("FAILED"), format!("{msg}\n"));
        msg
    })
}

/// Runs every seed, writing per-seed artifacts and `summary.csv`.
///
/// Seeds run in parallel; the summary keeps the seed order of the config.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<Summary, RunError> {
    cfg.validate()?;
    cfg.check_data_source()?;
    let seeds = opts.seeds.clone().unwrap_or_else(|| cfg.seeds.clone());
    if seeds.is_empty() {
        return Err(RunError::Invalid("seed list is empty".into()));
    }
    prepare_output(out, opts.force)?;
    write_file(&out.join("config.txt"), cfg.render())?;

    let work = || -> Vec<Result<SummaryRow, String>> { seeds.par_iter().map(|&s| run_one(cfg, out, s)).collect() };
    let results = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| RunError::Invalid(format!("cannot build a pool of {n} threads: {e}")))?
            .install(work),
        None => work(),
    };

    let mut summary = Summary::default();
    let mut failed = Vec::new();
    for (seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(row) => summary.rows.push(row),
            Err(e) => failed.push((*seed, e)),
        }
    }
    write_file(&out.join("summary.csv"), summary.to_csv())?;
    if !failed.is_empty() {
        let text: String = failed.iter().map(|(s, e)| format!("seed {s}: {e}\n")).collect();
        write_file(&out.join("FAILED"), text)?;
        return Err(RunError::SeedsFailed(failed));
    }
    Ok(summary)
}

/// Scores a stored student checkpoint on one split of `seed`'s data.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, seed: u64, ckpt: &Path, split: Split) -> Result<f64, RunError> {
    let splits = load_splits(cfg, seed)?;
    let mut model = build_student(cfg, &splits.train, seed)?;
    load_checkpoint(ckpt)?.apply(&mut model)?;
    let data = match split {
        Split::Train => &splits.train,
        Split::Validation => &splits.val,
        Split::Test => &splits.test,
    };
    Ok(evaluate_chunked(&model, data, data.task(), cfg.eval_chunk)?)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-method statistics across summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodStats {
    pub method: String,
    pub median_final: f64,
    pub median_teacher_mse: f64,
    /// `(seed, final_metric)` in input order.
    pub per_seed: Vec<(u64, f64)>,
}

/// Groups rows by method and orders methods best first: highest accuracy
/// for classification, lowest MSE for regression.
pub fn compare(summaries: &[Summary]) -> Result<(TaskKind, Vec<MethodStats>), RunError> {
    let first = summaries
        .iter()
        .flat_map(|s| &s.rows)
        .next()
        .ok_or_else(|| RunError::Invalid("nothing to compare".into()))?;
    let task = first.task;
    let mut stats: Vec<MethodStats> = Vec::new();
    for row in summaries.iter().flat_map(|s| &s.rows) {
        if row.task != task {
            return Err(RunError::Invalid(format!(
                "cannot compare {task} and {} summaries",
                row.task
            )));
        }
        let i = match stats.iter().position(|m| m.method == row.method) {
            Some(i) => i,
            None => {
                stats.push(MethodStats {
                    method: row.method.clone(),
                    median_final: f64::NAN,
                    median_teacher_mse: f64::NAN,
                    per_seed: Vec::new(),
                });
                stats.len() - 1
            }
        };
        stats[i].per_seed.push((row.seed, row.final_metric));
    }
    for m in &mut stats {
        let mut v: Vec<f64> = m.per_seed.iter().map(|p| p.1).collect();
        m.median_final = median(&mut v);
        let mut t: Vec<f64> = summaries
            .iter()
            .flat_map(|s| &s.rows)
            .filter(|r| r.method == m.method && r.teacher_mse.is_finite())
            .map(|r| r.teacher_mse)
            .collect();
        m.median_teacher_mse = median(&mut t);
    }
    let higher_better = task == TaskKind::Classification;
    stats.sort_by(|a, b| {
        let o = a.median_final.total_cmp(&b.median_final);
        if higher_better {
            o.reverse()
        } else {
            o
        }
    });
    Ok((task, stats))
}

pub fn render_comparison(task: TaskKind, stats: &[MethodStats]) -> String {
    let metric = match task {
        TaskKind::Classification => "accuracy",
        TaskKind::Regression => "mse",
    };
    let mut out = format!("method\tmedian_{metric}\tmedian_teacher_mse\tper_seed\n");
    for m in stats {
        let seeds: Vec<String> = m.per_seed.iter().map(|(s, v)| format!("{s}:{v}")).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            m.method,
            m.median_final,
            m.median_teacher_mse,
            seeds.join(" ")
        ));
    }
    out
}

/// One 1-D or 2-D slice of the stage-I loss around a student snapshot.
#[derive(Debug, Clone)]
pub struct LandscapeSlice {
    pub temperature: u32,
    pub phi: f64,
    pub direction_seed: u64,
    pub grid: LossGrid,
}

/// Trains an annealing student for `seed`, snapshots it at the end of the
/// configured temperatures and slices the stage-I loss around each snapshot.
pub fn landscape_study(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<LandscapeSlice>, RunError> {
    let Method::AnnealingKd { schedule, stage_one } = cfg.student_method()? else {
        return Err(RunError::Invalid("landscape needs method = annealing-kd".into()));
    };
    let l = cfg.landscape.clone().unwrap_or_default();
    cfg.validate()?;
    cfg.check_data_source()?;
    let temps = if l.temperatures.is_empty() {
        let mut t = vec![schedule.tau_max];
        if schedule.tau_max != 1 {
            t.push(1);
        }
        t
    } else {
        l.temperatures.clone()
    };
    let mut snapshots: Vec<(u32, f64, Model)> = Vec::new();
    let mut observer = |t: u32, phi: f64, m: &Model| {
        if temps.contains(&t) {
            snapshots.push((t, phi, m.clone()));
        }
    };
    let run = run_seed_observed(cfg, seed, &mut observer)?;
    let teacher = run.teacher.as_ref().expect("annealing runs have a teacher");
    let inputs = &run.splits.train.inputs;
    let teacher_logits = teacher.predict(inputs, cfg.eval_chunk)?;
    let axis = Axis::symmetric(l.radius, l.steps)?;

    let mut out = Vec::new();
    for t in &temps {
        let (_, phi, model) = snapshots
            .iter()
            .find(|s| s.0 == *t)
            .ok_or_else(|| RunError::Invalid(format!("temperature {t} was never reached")))?;
        debug_assert_eq!(*phi, annealing_factor(*t, schedule.tau_max)?);
        for d in 0..l.directions as u64 {
            let dseed = l.direction_seed + d;
            let d1 = random_direction(model, dseed, l.norm);
            let d2 = l.plane.then(|| random_direction(model, mix_seed(dseed, 0x2d), l.norm));
            let beta = l.plane.then_some(axis);
            let values = loss_slice(
                model,
                |m: &Model| stage_one_loss(m, inputs, &teacher_logits, stage_one, *phi),
                &d1,
                d2.as_ref(),
                axis,
                beta,
            )?;
            out.push(LandscapeSlice {
                temperature: *t,
                phi: *phi,
                direction_seed: dseed,
                grid: LossGrid {
                    alpha: axis,
                    beta,
                    seed: dseed,
                    temperature: *t as f64,
                    values,
                },
            });
        }
    }
    Ok(out)
}

/// Writes `T<t>-d<seed>.grid` files and `sharpness.csv` into `out`.
pub fn write_landscape(out: &Path, slices: &[LandscapeSlice]) -> Result<(), RunError> {
    let mut csv = String::from("temperature,phi,direction_seed,sharpness\n");
    for s in slices {
        let name = format!("T{}-d{}.grid", s.temperature, s.direction_seed);
        write_file(&out.join(name), s.grid.render())?;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            s.temperature,
            s.phi,
            s.direction_seed,
            s.grid.sharpness()
        ));
    }
    write_file(&out.join("sharpness.csv"), csv)
}
