//! Line-oriented experiment configuration.
//!
//! ```text
//! [experiment]
//! method = annealing-kd
//! seeds = 0, 1, 2
//!
//! [data]
//! kind = sine
//!
//! [student]
//! arch = mlp 1-10-1
//! ```
//!
//! Blank lines and text after `#` are ignored. Every key must be known to
//! its section and may appear once.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::data::{CifarVariant, SineConfig};
use crate::distill::StageOneLoss;
use crate::landscape::NormMode;
use crate::models::{Activation, Init, ModelSpec};
use crate::trainer::{LrSchedule, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    /// 1-based line number; 0 when the problem is the file as a whole.
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodName {
    Scratch,
    Kd,
    Takd,
    AnnealingKd,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Scratch => "scratch",
            MethodName::Kd => "kd",
            MethodName::Takd => "takd",
            MethodName::AnnealingKd => "annealing-kd",
        }
    }
}

impl FromStr for MethodName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "scratch" => Ok(MethodName::Scratch),
            "kd" => Ok(MethodName::Kd),
            "takd" => Ok(MethodName::Takd),
            "annealing-kd" => Ok(MethodName::AnnealingKd),
            _ => Err(format!("unknown method {s:?}; expected scratch, kd, takd or annealing-kd")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataConfig {
    Sine(SineConfig),
    Cifar {
        variant: CifarVariant,
        dir: Option<PathBuf>,
        subset: Option<usize>,
        val_count: Option<usize>,
        test_subset: Option<usize>,
    },
    Blobs {
        classes: usize,
        dim: usize,
        train_per_class: usize,
        val_per_class: usize,
        test_per_class: usize,
    },
}

/// Architecture without input/output sizes, which come from the data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arch {
    /// Hidden widths only.
    Mlp(Vec<usize>),
    PlainCnn(usize),
    ResNetSmall(usize),
}

impl Arch {
    pub fn spec(&self, input_shape: &[usize], outputs: usize, activation: Activation, init: Init, seed: u64) -> ModelSpec {
        match self {
            Arch::Mlp(hidden) => {
                let mut sizes = vec![input_shape.iter().product()];
                sizes.extend(hidden);
                sizes.push(outputs);
                ModelSpec::mlp(&sizes, activation, seed).with_init(init)
            }
            Arch::PlainCnn(d) => {
                let mut s = ModelSpec::plain_cnn(*d, input_shape, outputs, seed).with_init(init);
                s.activation = activation;
                s
            }
            Arch::ResNetSmall(d) => {
                let mut s = ModelSpec::resnet_small(*d, input_shape, outputs, seed).with_init(init);
                s.activation = activation;
                s
            }
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arch::Mlp(h) => write!(
                f,
                "mlp {}",
                h.iter().map(ToString::to_string).collect::<Vec<_>>().join("-")
            ),
            Arch::PlainCnn(d) => write!(f, "plain-cnn {d}"),
            Arch::ResNetSmall(d) => write!(f, "resnet-small {d}"),
        }
    }
}

impl FromStr for Arch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.split_whitespace();
        let family = parts.next().unwrap_or("");
        let arg = parts.next().unwrap_or("");
        if parts.next().is_some() {
            return Err(format!("arch {s:?} has extra words"));
        }
        let depth = || arg.parse::<usize>().map_err(|_| format!("bad depth {arg:?}"));
        match family {
            "mlp" => {
                let hidden = if arg.is_empty() {
                    Vec::new()
                } else {
                    arg.split('-')
                        .map(|w| w.parse::<usize>().map_err(|_| format!("bad width {w:?}")))
                        .collect::<Result<_, _>>()?
                };
                Ok(Arch::Mlp(hidden))
            }
            "plain-cnn" => Ok(Arch::PlainCnn(depth()?)),
            "resnet-small" => Ok(Arch::ResNetSmall(depth()?)),
            _ => Err(format!(
                "unknown arch {s:?}; expected `mlp <hidden widths>`, `plain-cnn <depth>` or `resnet-small <depth>`"
            )),
        }
    }
}

fn init_to_string(init: Init) -> String {
    match init {
        Init::Standard => "standard".into(),
        Init::Knots { gain, lo, hi } => format!("knots {gain} {lo} {hi}"),
    }
}

fn parse_init(s: &str) -> Result<Init, String> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    match parts.as_slice() {
        ["standard"] => Ok(Init::Standard),
        ["knots", g, lo, hi] => {
            let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number {v:?}"));
            Ok(Init::Knots {
                gain: num(g)?,
                lo: num(lo)?,
                hi: num(hi)?,
            })
        }
        _ => Err(format!("unknown init {s:?}; expected `standard` or `knots <gain> <lo> <hi>`")),
    }
}

/// Optimizer and loop settings for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_schedule: LrSchedule,
    pub augment: bool,
    pub record_seconds: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            optimizer: OptimizerKind::Sgd,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 128,
            epochs: 160,
            lr_schedule: LrSchedule::Constant,
            augment: false,
            record_seconds: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub arch: Arch,
    pub activation: Activation,
    pub init: Init,
    /// Added to the run seed to seed this network's initialisation.
    pub seed_offset: u64,
    /// Pretrained parameters; when absent the network is trained with `train`.
    pub checkpoint: Option<PathBuf>,
    pub train: Option<TrainSection>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdSection {
    pub temperature: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealingSection {
    pub tau_max: u32,
    pub k: usize,
    pub n: usize,
    pub stage_one: StageOneLoss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeSection {
    pub radius: f64,
    pub steps: usize,
    pub directions: usize,
    pub direction_seed: u64,
    pub norm: NormMode,
    /// Two-dimensional grids when set.
    pub plane: bool,
    pub temperatures: Vec<u32>,
}

impl Default for LandscapeSection {
    fn default() -> Self {
        LandscapeSection {
            radius: 1.0,
            steps: 21,
            directions: 5,
            direction_seed: 0,
            norm: NormMode::Filter,
            plane: false,
            temperatures: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: MethodName,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    pub eval_chunk: usize,
    pub data: DataConfig,
    pub teacher: Option<NetConfig>,
    pub assistant: Option<NetConfig>,
    pub student: NetConfig,
    pub train: TrainSection,
    pub kd: Option<KdSection>,
    pub annealing: Option<AnnealingSection>,
    pub landscape: Option<LandscapeSection>,
}

// ---------------------------------------------------------------------------
// Raw syntax

struct Entry {
    key: String,
    value: String,
    line: usize,
    used: std::cell::Cell<bool>,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

const SECTIONS: &[&str] = &[
    "experiment",
    "data",
    "teacher",
    "teacher.train",
    "assistant",
    "assistant.train",
    "student",
    "train",
    "kd",
    "annealing",
    "landscape",
];

fn tokenize(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::new(n, format!("malformed section header {line:?}")))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::new(
                    n,
                    format!("unknown section [{name}]; known: {}", SECTIONS.join(", ")),
                ));
            }
            if let Some(prev) = sections.iter().find(|s| s.name == name) {
                return Err(ConfigError::new(
                    n,
                    format!("duplicate section [{name}] (first on line {})", prev.line),
                ));
            }
            sections.push(Section {
                name: name.to_string(),
                line: n,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::new(n, format!("expected `key = value`, found {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::new(n, "empty key"));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| ConfigError::new(n, format!("key {key:?} appears before any [section]")))?;
        if let Some(prev) = section.entries.iter().find(|e| e.key == key) {
            return Err(ConfigError::new(
                n,
                format!("duplicate key {key:?} in [{}] (first on line {})", section.name, prev.line),
            ));
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line: n,
            used: std::cell::Cell::new(false),
        });
    }
    Ok(sections)
}

struct View<'a> {
    section: &'a Section,
}

impl<'a> View<'a> {
    fn raw(&self, key: &str) -> Option<&'a Entry> {
        let e = self.section.entries.iter().find(|e| e.key == key)?;
        e.used.set(true);
        Some(e)
    }

    fn opt_with<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => parse(&e.value).map(Some).map_err(|m| {
                ConfigError::new(e.line, format!("[{}] {key}: {m}", self.section.name))
            }),
        }
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.opt_with(key, |v| v.parse::<T>().map_err(|e| format!("cannot parse {v:?}: {e}")))
    }

    fn req<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key)?.ok_or_else(|| self.missing(key))
    }

    fn req_with<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, ConfigError> {
        self.opt_with(key, parse)?.ok_or_else(|| self.missing(key))
    }

    fn missing(&self, key: &str) -> ConfigError {
        ConfigError::new(
            self.section.line,
            format!("[{}] is missing required key {key:?}", self.section.name),
        )
    }
}

fn list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("cannot parse {s:?}: {e}")))
        .collect()
}

fn parse_optimizer(v: &str) -> Result<OptimizerKind, String> {
    match v {
        "sgd" => Ok(OptimizerKind::Sgd),
        "adam" => Ok(OptimizerKind::adam()),
        _ => Err(format!("unknown optimizer {v:?}; expected sgd or adam")),
    }
}

fn parse_schedule(v: &str) -> Result<LrSchedule, String> {
    match v {
        "constant" => Ok(LrSchedule::Constant),
        "step" => Ok(LrSchedule::StepDecay),
        _ => Err(format!("unknown lr_schedule {v:?}; expected constant or step")),
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, found {v:?}")),
    }
}

fn parse_train(v: &View<'_>) -> Result<TrainSection, ConfigError> {
    let d = TrainSection::default();
    Ok(TrainSection {
        optimizer: v.opt_with("optimizer", parse_optimizer)?.unwrap_or(d.optimizer),
        lr: v.opt("lr")?.unwrap_or(d.lr),
        momentum: v.opt("momentum")?.unwrap_or(d.momentum),
        weight_decay: v.opt("weight_decay")?.unwrap_or(d.weight_decay),
        batch_size: v.opt("batch_size")?.unwrap_or(d.batch_size),
        epochs: v.opt("epochs")?.unwrap_or(d.epochs),
        lr_schedule: v.opt_with("lr_schedule", parse_schedule)?.unwrap_or(d.lr_schedule),
        augment: v.opt_with("augment", parse_bool)?.unwrap_or(d.augment),
        record_seconds: v.opt_with("record_seconds", parse_bool)?.unwrap_or(d.record_seconds),
    })
}

fn parse_net(v: &View<'_>, train: Option<&View<'_>>) -> Result<NetConfig, ConfigError> {
    Ok(NetConfig {
        arch: v.req_with("arch", Arch::from_str)?,
        activation: v
            .opt_with("activation", |s| s.parse::<Activation>().map_err(|e| e.to_string()))?
            .unwrap_or(Activation::Relu),
        init: v.opt_with("init", parse_init)?.unwrap_or_default(),
        seed_offset: v.opt("seed_offset")?.unwrap_or(0),
        checkpoint: v.opt::<String>("checkpoint")?.map(PathBuf::from),
        train: train.map(parse_train).transpose()?,
    })
}

fn parse_data(v: &View<'_>) -> Result<DataConfig, ConfigError> {
    let kind: String = v.req("kind")?;
    match kind.as_str() {
        "sine" => {
            let d = SineConfig::default();
            Ok(DataConfig::Sine(SineConfig {
                train: v.opt("train")?.unwrap_or(d.train),
                val: v.opt("val")?.unwrap_or(d.val),
                test: v.opt("test")?.unwrap_or(d.test),
                noise_sd: v.opt("noise")?.unwrap_or(d.noise_sd),
                x_range: (
                    v.opt("x_min")?.unwrap_or(d.x_range.0),
                    v.opt("x_max")?.unwrap_or(d.x_range.1),
                ),
                seed: 0,
            }))
        }
        "cifar10" | "cifar100" => Ok(DataConfig::Cifar {
            variant: if kind == "cifar10" {
                CifarVariant::Ten
            } else {
                CifarVariant::Hundred
            },
            dir: v.opt::<String>("dir")?.map(PathBuf::from),
            subset: v.opt("subset")?,
            val_count: v.opt("val_count")?,
            test_subset: v.opt("test_subset")?,
        }),
        "blobs" => Ok(DataConfig::Blobs {
            classes: v.req("classes")?,
            dim: v.req("dim")?,
            train_per_class: v.req("train_per_class")?,
            val_per_class: v.opt("val_per_class")?.unwrap_or(20),
            test_per_class: v.opt("test_per_class")?.unwrap_or(20),
        }),
        other => Err(ConfigError::new(
            v.raw("kind").map_or(v.section.line, |e| e.line),
            format!("unknown data kind {other:?}; expected sine, cifar10, cifar100 or blobs"),
        )),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let sections = tokenize(text)?;
        let get = |name: &str| sections.iter().find(|s| s.name == name).map(|section| View { section });
        let need = |name: &str| {
            get(name).ok_or_else(|| ConfigError::new(0, format!("missing required section [{name}]")))
        };

        let exp = need("experiment")?;
        let method: MethodName = exp.req_with("method", MethodName::from_str)?;
        let seeds = exp.opt_with("seeds", list::<u64>)?.unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            return Err(ConfigError::new(exp.section.line, "[experiment] seeds must not be empty"));
        }
        let output = exp.opt::<String>("output")?.map(PathBuf::from);
        let eval_chunk = exp.opt("eval_chunk")?.unwrap_or(500);

        let data = parse_data(&need("data")?)?;
        let teacher = get("teacher")
            .map(|t| parse_net(&t, get("teacher.train").as_ref()))
            .transpose()?;
        let assistant = get("assistant")
            .map(|t| parse_net(&t, get("assistant.train").as_ref()))
            .transpose()?;
        let student = parse_net(&need("student")?, None)?;
        let train = match get("train") {
            Some(v) => parse_train(&v)?,
            None => TrainSection::default(),
        };
        let kd = get("kd")
            .map(|v| -> Result<KdSection, ConfigError> {
                Ok(KdSection {
                    temperature: v.req("temperature")?,
                    lambda: v.req("lambda")?,
                })
            })
            .transpose()?;
        let annealing = get("annealing")
            .map(|v| -> Result<AnnealingSection, ConfigError> {
                Ok(AnnealingSection {
                    tau_max: v.req("tau_max")?,
                    k: v.req("k")?,
                    n: v.req("n")?,
                    stage_one: v
                        .opt_with("stage_one", |s| s.parse::<StageOneLoss>().map_err(|e| e.to_string()))?
                        .unwrap_or_default(),
                })
            })
            .transpose()?;
        let landscape = get("landscape")
            .map(|v| -> Result<LandscapeSection, ConfigError> {
                let d = LandscapeSection::default();
                Ok(LandscapeSection {
                    radius: v.opt("radius")?.unwrap_or(d.radius),
                    steps: v.opt("steps")?.unwrap_or(d.steps),
                    directions: v.opt("directions")?.unwrap_or(d.directions),
                    direction_seed: v.opt("direction_seed")?.unwrap_or(d.direction_seed),
                    norm: v
                        .opt_with("norm", |s| s.parse::<NormMode>().map_err(|e| e.to_string()))?
                        .unwrap_or(d.norm),
                    plane: v.opt_with("plane", parse_bool)?.unwrap_or(d.plane),
                    temperatures: v.opt_with("temperatures", list::<u32>)?.unwrap_or_default(),
                })
            })
            .transpose()?;

        for s in &sections {
            if let Some(e) = s.entries.iter().find(|e| !e.used.get()) {
                return Err(ConfigError::new(
                    e.line,
                    format!("unknown key {:?} in [{}]", e.key, s.name),
                ));
            }
        }

        let cfg = ExperimentConfig {
            method,
            seeds,
            output,
            eval_chunk,
            data,
            teacher,
            assistant,
            student,
            train,
            kd,
            annealing,
            landscape,
        };
        cfg.check_required(&sections)?;
        Ok(cfg)
    }

    fn check_required(&self, sections: &[Section]) -> Result<(), ConfigError> {
        let line_of = |name: &str| sections.iter().find(|s| s.name == name).map_or(0, |s| s.line);
        let method_line = line_of("experiment");
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::new(
                    method_line,
                    format!("method {} requires {what}", self.method.as_str()),
                ))
            }
        };
        match self.method {
            MethodName::Scratch => {}
            MethodName::Kd => {
                need(self.teacher.is_some(), "a [teacher] section")?;
                need(self.kd.is_some(), "a [kd] section")?;
            }
            MethodName::Takd => {
                need(self.teacher.is_some(), "a [teacher] section")?;
                need(self.assistant.is_some(), "an [assistant] section")?;
                need(self.kd.is_some(), "a [kd] section")?;
            }
            MethodName::AnnealingKd => {
                need(self.teacher.is_some(), "a [teacher] section")?;
                need(self.annealing.is_some(), "an [annealing] section (tau_max, k, n)")?;
            }
        }
        for (name, net) in [("teacher", &self.teacher), ("assistant", &self.assistant)] {
            if let Some(net) = net {
                if net.checkpoint.is_none() && net.train.is_none() {
                    return Err(ConfigError::new(
                        line_of(name),
                        format!("[{name}] needs either `checkpoint` or a [{name}.train] section"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "[experiment]");
        let _ = writeln!(o, "method = {}", self.method.as_str());
        let seeds: Vec<String> = self.seeds.iter().map(ToString::to_string).collect();
        let _ = writeln!(o, "seeds = {}", seeds.join(", "));
        if let Some(p) = &self.output {
            let _ = writeln!(o, "output = {}", p.display());
        }
        let _ = writeln!(o, "eval_chunk = {}", self.eval_chunk);

        let _ = writeln!(o, "\n[data]");
        match &self.data {
            DataConfig::Sine(s) => {
                let _ = writeln!(o, "kind = sine");
                let _ = writeln!(o, "train = {}\nval = {}\ntest = {}", s.train, s.val, s.test);
                let _ = writeln!(o, "noise = {}", s.noise_sd);
                let _ = writeln!(o, "x_min = {}\nx_max = {}", s.x_range.0, s.x_range.1);
            }
            DataConfig::Cifar {
                variant,
                dir,
                subset,
                val_count,
                test_subset,
            } => {
                let kind = match variant {
                    CifarVariant::Ten => "cifar10",
                    CifarVariant::Hundred => "cifar100",
                };
                let _ = writeln!(o, "kind = {kind}");
                if let Some(d) = dir {
                    let _ = writeln!(o, "dir = {}", d.display());
                }
                for (k, v) in [("subset", subset), ("val_count", val_count), ("test_subset", test_subset)] {
                    if let Some(v) = v {
                        let _ = writeln!(o, "{k} = {v}");
                    }
                }
            }
            DataConfig::Blobs {
                classes,
                dim,
                train_per_class,
                val_per_class,
                test_per_class,
            } => {
                let _ = writeln!(o, "kind = blobs\nclasses = {classes}\ndim = {dim}");
                let _ = writeln!(
                    o,
                    "train_per_class = {train_per_class}\nval_per_class = {val_per_class}\ntest_per_class = {test_per_class}"
                );
            }
        }

        for (name, net) in [
            ("teacher", self.teacher.as_ref()),
            ("assistant", self.assistant.as_ref()),
            ("student", Some(&self.student)),
        ] {
            let Some(net) = net else { continue };
            let _ = writeln!(o, "\n[{name}]");
            let _ = writeln!(o, "arch = {}", net.arch);
            let _ = writeln!(o, "activation = {}", net.activation);
            let _ = writeln!(o, "init = {}", init_to_string(net.init));
            let _ = writeln!(o, "seed_offset = {}", net.seed_offset);
            if let Some(c) = &net.checkpoint {
                let _ = writeln!(o, "checkpoint = {}", c.display());
            }
            if let Some(t) = &net.train {
                let _ = writeln!(o, "\n[{name}.train]");
                render_train(&mut o, t);
            }
        }
        let _ = writeln!(o, "\n[train]");
        render_train(&mut o, &self.train);
        if let Some(kd) = &self.kd {
            let _ = writeln!(o, "\n[kd]\ntemperature = {}\nlambda = {}", kd.temperature, kd.lambda);
        }
        if let Some(a) = &self.annealing {
            let _ = writeln!(
                o,
                "\n[annealing]\ntau_max = {}\nk = {}\nn = {}\nstage_one = {}",
                a.tau_max, a.k, a.n, a.stage_one
            );
        }
        if let Some(l) = &self.landscape {
            let _ = writeln!(o, "\n[landscape]");
            let _ = writeln!(o, "radius = {}\nsteps = {}\ndirections = {}", l.radius, l.steps, l.directions);
            let _ = writeln!(o, "direction_seed = {}\nnorm = {}\nplane = {}", l.direction_seed, l.norm, l.plane);
            if !l.temperatures.is_empty() {
                let t: Vec<String> = l.temperatures.iter().map(ToString::to_string).collect();
                let _ = writeln!(o, "temperatures = {}", t.join(", "));
            }
        }
        o
    }
}

fn render_train(o: &mut String, t: &TrainSection) {
    let opt = match t.optimizer {
        OptimizerKind::Sgd => "sgd",
        OptimizerKind::Adam { .. } => "adam",
    };
    let schedule = match t.lr_schedule {
        LrSchedule::Constant => "constant",
        LrSchedule::StepDecay => "step",
    };
    let _ = writeln!(o, "optimizer = {opt}\nlr = {}\nmomentum = {}", t.lr, t.momentum);
    let _ = writeln!(o, "weight_decay = {}\nbatch_size = {}\nepochs = {}", t.weight_decay, t.batch_size, t.epochs);
    let _ = writeln!(
        o,
        "lr_schedule = {schedule}\naugment = {}\nrecord_seconds = {}",
        t.augment, t.record_seconds
    );
}
