//! Distillation objectives and the annealing schedule.
//!
//! Every loss comes in two forms: a graph builder that appends nodes to an
//! existing [`Graph`] (used by the trainer, where `z_s` carries gradient) and
//! a tensor-level convenience wrapper returning the scalar value. Teacher
//! logits always enter the graph as constants, so no gradient can reach them.

use thiserror::Error;

use crate::autograd::{AutogradError, Element, Graph, NodeId, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistillError {
    #[error("temperature {t} outside 1..={tau_max}")]
    TemperatureOutOfRange { t: u32, tau_max: u32 },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid distillation config: {0}")]
    Config(String),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
}

/// `Φ(T) = 1 − (T − 1)/τ_max`
pub fn annealing_factor(t: u32, tau_max: u32) -> Result<f64, DistillError> {
    if t < 1 || t > tau_max {
        return Err(DistillError::TemperatureOutOfRange { t, tau_max });
    }
    Ok((tau_max - t + 1) as f64 / tau_max as f64)
}

/// Stage I runs `k` epochs at each integer temperature from `tau_max` down
/// to 1; stage II runs `n` epochs on hard targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnealingSchedule {
    pub tau_max: u32,
    pub k: usize,
    pub n: usize,
}

impl AnnealingSchedule {
    pub fn new(tau_max: u32, k: usize, n: usize) -> Result<Self, DistillError> {
        if tau_max < 1 {
            return Err(DistillError::Schedule("tau_max must be at least 1".into()));
        }
        if k < 1 {
            return Err(DistillError::Schedule("k (epochs per temperature) must be at least 1".into()));
        }
        Ok(AnnealingSchedule { tau_max, k, n })
    }

    /// `τ_max, τ_max − 1, …, 1`
    pub fn temperatures(&self) -> impl Iterator<Item = u32> {
        (1..=self.tau_max).rev()
    }

    pub fn factor(&self, t: u32) -> Result<f64, DistillError> {
        annealing_factor(t, self.tau_max)
    }

    pub fn stage_one_epochs(&self) -> usize {
        self.tau_max as usize * self.k
    }

    pub fn total_epochs(&self) -> usize {
        self.stage_one_epochs() + self.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanillaKdConfig {
    pub temperature: f64,
    pub lambda: f64,
}

impl VanillaKdConfig {
    pub fn new(temperature: f64, lambda: f64) -> Result<Self, DistillError> {
        let cfg = VanillaKdConfig { temperature, lambda };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DistillError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(DistillError::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(DistillError::Config(format!("lambda {} not in [0,1]", self.lambda)));
        }
        Ok(())
    }
}

/// Divergence used in stage I.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StageOneLoss {
    /// Squared distance to the annealed teacher logits.
    #[default]
    Mse,
    /// `KL(σ(Φ·z_t) ∥ σ(z_s))`, one-logit outputs padded to two classes.
    KlDiv,
}

impl std::fmt::Display for StageOneLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StageOneLoss::Mse => "mse",
            StageOneLoss::KlDiv => "kl",
        })
    }
}

impl std::str::FromStr for StageOneLoss {
    type Err = DistillError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mse" => Ok(StageOneLoss::Mse),
            "kl" => Ok(StageOneLoss::KlDiv),
            other => Err(DistillError::Config(format!(
                "unknown stage-one loss {other:?}; expected mse or kl"
            ))),
        }
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<(), DistillError> {
    if a != b {
        return Err(AutogradError::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        }
        .into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Graph builders

/// `mean_b ‖z_s − Φ·z_t‖²`
pub fn annealing_kd_graph<T: Element>(
    g: &mut Graph<T>,
    zs: NodeId,
    zt: NodeId,
    phi: f64,
) -> Result<NodeId, DistillError> {
    same_shape("annealing_kd_loss", g.value(zs).shape(), g.value(zt).shape())?;
    let target = g.scale(zt, phi)?;
    Ok(g.mse(zs, target)?)
}

/// Stage-I KL ablation: teacher logits annealed by `Φ`, student unscaled.
pub fn annealing_kl_graph<T: Element>(
    g: &mut Graph<T>,
    zs: NodeId,
    zt: NodeId,
    phi: f64,
) -> Result<NodeId, DistillError> {
    same_shape("annealing_kl_loss", g.value(zs).shape(), g.value(zt).shape())?;
    let (zs, zt) = pad_single_logit(g, zs, zt)?;
    let target = g.scale(zt, phi)?;
    let p_t = g.log_softmax(target, 1.0)?;
    let p_s = g.log_softmax(zs, 1.0)?;
    Ok(g.kl_div(p_t, p_s)?)
}

pub fn stage_one_graph<T: Element>(
    g: &mut Graph<T>,
    kind: StageOneLoss,
    zs: NodeId,
    zt: NodeId,
    phi: f64,
) -> Result<NodeId, DistillError> {
    match kind {
        StageOneLoss::Mse => annealing_kd_graph(g, zs, zt, phi),
        StageOneLoss::KlDiv => annealing_kl_graph(g, zs, zt, phi),
    }
}

fn pad_single_logit<T: Element>(
    g: &mut Graph<T>,
    zs: NodeId,
    zt: NodeId,
) -> Result<(NodeId, NodeId), DistillError> {
    let shape = g.value(zs).shape();
    if shape.len() == 2 && shape[1] == 1 {
        Ok((g.pad_zero_logit(zs)?, g.pad_zero_logit(zt)?))
    } else {
        Ok((zs, zt))
    }
}

/// `(1 − λ)·CE(y, σ(z_s)) + λ·T²·KL(σ(z_t/T) ∥ σ(z_s/T))`
///
/// The endpoints `λ = 0` and `λ = 1` build only the surviving term.
pub fn vanilla_kd_graph<T: Element>(
    g: &mut Graph<T>,
    zs: NodeId,
    zt: NodeId,
    labels: &[usize],
    cfg: &VanillaKdConfig,
) -> Result<NodeId, DistillError> {
    cfg.validate()?;
    same_shape("vanilla_kd_loss", g.value(zs).shape(), g.value(zt).shape())?;
    let hard = if cfg.lambda < 1.0 {
        Some(g.cross_entropy(zs, labels)?)
    } else {
        None
    };
    let soft = if cfg.lambda > 0.0 {
        let p_t = g.log_softmax(zt, cfg.temperature)?;
        let p_s = g.log_softmax(zs, cfg.temperature)?;
        Some(g.kl_div(p_t, p_s)?)
    } else {
        None
    };
    blend(g, hard, soft, cfg.lambda, cfg.temperature * cfg.temperature)
}

/// Regression counterpart: `(1 − λ)·MSE(z_s, y) + λ·MSE(z_s, z_t)`, both
/// averaged over elements.
///
/// Temperature does not appear because `T²·‖z_s/T − z_t/T‖² = ‖z_s − z_t‖²`.
pub fn vanilla_kd_regression_graph<T: Element>(
    g: &mut Graph<T>,
    zs: NodeId,
    zt: NodeId,
    y: NodeId,
    cfg: &VanillaKdConfig,
) -> Result<NodeId, DistillError> {
    cfg.validate()?;
    same_shape("vanilla_kd_loss", g.value(zs).shape(), g.value(zt).shape())?;
    let hard = if cfg.lambda < 1.0 {
        Some(regression_fit_graph(g, zs, y)?)
    } else {
        None
    };
    let soft = if cfg.lambda > 0.0 {
        Some(elementwise_mse(g, zs, zt)?)
    } else {
        None
    };
    blend(g, hard, soft, cfg.lambda, 1.0)
}

fn blend<T: Element>(
    g: &mut Graph<T>,
    hard: Option<NodeId>,
    soft: Option<NodeId>,
    lambda: f64,
    soft_gain: f64,
) -> Result<NodeId, DistillError> {
    Ok(match (hard, soft) {
        (Some(h), None) => h,
        (None, Some(s)) => g.scale(s, soft_gain)?,
        (Some(h), Some(s)) => {
            let h = g.scale(h, 1.0 - lambda)?;
            let s = g.scale(s, lambda * soft_gain)?;
            g.add(h, s)?
        }
        (None, None) => unreachable!("lambda is in [0,1]"),
    })
}

pub fn cross_entropy_graph<T: Element>(
    g: &mut Graph<T>,
    zs: NodeId,
    labels: &[usize],
) -> Result<NodeId, DistillError> {
    Ok(g.cross_entropy(zs, labels)?)
}

pub fn regression_fit_graph<T: Element>(
    g: &mut Graph<T>,
    pred: NodeId,
    target: NodeId,
) -> Result<NodeId, DistillError> {
    same_shape("regression_fit_loss", g.value(pred).shape(), g.value(target).shape())?;
    elementwise_mse(g, pred, target)
}

/// Squared error averaged over every element.
fn elementwise_mse<T: Element>(g: &mut Graph<T>, a: NodeId, b: NodeId) -> Result<NodeId, DistillError> {
    let shape = g.value(a).shape();
    let per_row = if shape.len() >= 2 { g.value(a).row_len() } else { shape[0] };
    let sq = g.mse(a, b)?;
    if per_row == 1 {
        Ok(sq)
    } else {
        Ok(g.scale(sq, 1.0 / per_row as f64)?)
    }
}

// ---------------------------------------------------------------------------
// Tensor-level wrappers

fn eval<T: Element>(
    zs: &Tensor<T>,
    other: &Tensor<T>,
    build: impl FnOnce(&mut Graph<T>, NodeId, NodeId) -> Result<NodeId, DistillError>,
) -> Result<f64, DistillError> {
    let mut g = Graph::new();
    let a = g.constant(zs.clone());
    let b = g.constant(other.clone());
    let out = build(&mut g, a, b)?;
    Ok(g.value(out).item())
}

pub fn annealing_kd_loss<T: Element>(zs: &Tensor<T>, zt: &Tensor<T>, phi: f64) -> Result<f64, DistillError> {
    eval(zs, zt, |g, a, b| annealing_kd_graph(g, a, b, phi))
}

pub fn annealing_kl_loss<T: Element>(zs: &Tensor<T>, zt: &Tensor<T>, phi: f64) -> Result<f64, DistillError> {
    eval(zs, zt, |g, a, b| annealing_kl_graph(g, a, b, phi))
}

pub fn vanilla_kd_loss<T: Element>(
    zs: &Tensor<T>,
    zt: &Tensor<T>,
    labels: &[usize],
    cfg: &VanillaKdConfig,
) -> Result<f64, DistillError> {
    eval(zs, zt, |g, a, b| vanilla_kd_graph(g, a, b, labels, cfg))
}

pub fn cross_entropy_loss<T: Element>(zs: &Tensor<T>, labels: &[usize]) -> Result<f64, DistillError> {
    let mut g = Graph::new();
    let a = g.constant(zs.clone());
    let out = cross_entropy_graph(&mut g, a, labels)?;
    Ok(g.value(out).item())
}

pub fn regression_fit_loss<T: Element>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64, DistillError> {
    eval(pred, target, regression_fit_graph)
}
