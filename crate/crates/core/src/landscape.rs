//! Loss-landscape slices along random directions in parameter space.
//!
//! A direction is a set of Gaussian tensors shaped like the model's
//! parameters. Under filter normalization each filter block of the direction
//! is rescaled to the norm of the matching parameter block, which makes
//! slices comparable across layers and across networks of different scale.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::autograd::{Graph, Real, Tensor};
use crate::distill::{stage_one_graph, StageOneLoss};
use crate::models::{Model, ParamInfo};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandscapeError {
    #[error("direction has {found} tensors, model has {expected}")]
    DirectionCount { expected: usize, found: usize },
    #[error("direction tensor {index} has shape {found:?}, parameter has {expected:?}")]
    DirectionShape {
        index: usize,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("grid file line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Filter,
    None,
}

impl std::fmt::Display for NormMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormMode::Filter => "filter",
            NormMode::None => "none",
        })
    }
}

impl FromStr for NormMode {
    type Err = LandscapeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "filter" => Ok(NormMode::Filter),
            "none" => Ok(NormMode::None),
            other => Err(LandscapeError::Grid(format!(
                "unknown normalization {other:?}; expected filter or none"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub tensors: Vec<Tensor>,
    pub mode: NormMode,
    pub seed: u64,
}

/// Element index lists for every filter of a parameter tensor. Tensors
/// without a filter axis form a single filter.
fn filters(info: &ParamInfo) -> Vec<Vec<usize>> {
    let numel: usize = info.shape.iter().product();
    let Some(axis) = info.filter_axis else {
        return vec![(0..numel).collect()];
    };
    let count = info.shape[axis];
    let inner: usize = info.shape[axis + 1..].iter().product();
    let mut out = vec![Vec::with_capacity(numel / count); count];
    for i in 0..numel {
        out[(i / inner) % count].push(i);
    }
    out
}

fn block_norm(data: &[Real], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| (data[i] as f64).powi(2)).sum::<f64>().sqrt()
}

pub fn random_direction(model: &Model, seed: u64, mode: NormMode) -> Direction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = Vec::with_capacity(model.params().len());
    for (p, info) in model.params().iter().zip(model.param_info()) {
        let mut d: Vec<Real> = (0..p.numel())
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v as Real
            })
            .collect();
        if mode == NormMode::Filter {
            for idx in filters(info) {
                let target = block_norm(p.data(), &idx);
                let current = block_norm(&d, &idx);
                let scale = if target == 0.0 || current == 0.0 { 0.0 } else { target / current };
                for &i in &idx {
                    d[i] = (d[i] as f64 * scale) as Real;
                }
            }
        }
        tensors.push(Tensor::new(p.shape().to_vec(), d).expect("parameter shape"));
    }
    Direction { tensors, mode, seed }
}

/// `‖d_f‖ / ‖θ_f‖` for every filter with non-zero parameter norm.
pub fn filter_ratios(model: &Model, direction: &Direction) -> Vec<f64> {
    let mut out = Vec::new();
    for ((p, info), d) in model.params().iter().zip(model.param_info()).zip(&direction.tensors) {
        for idx in filters(info) {
            let theta = block_norm(p.data(), &idx);
            if theta > 0.0 {
                out.push(block_norm(d.data(), &idx) / theta);
            }
        }
    }
    out
}

fn check_direction(model: &Model, d: &Direction) -> Result<(), LandscapeError> {
    if d.tensors.len() != model.params().len() {
        return Err(LandscapeError::DirectionCount {
            expected: model.params().len(),
            found: d.tensors.len(),
        });
    }
    for (i, (p, t)) in model.params().iter().zip(&d.tensors).enumerate() {
        if p.shape() != t.shape() {
            return Err(LandscapeError::DirectionShape {
                index: i,
                expected: p.shape().to_vec(),
                found: t.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Evenly spaced coordinates from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self, LandscapeError> {
        if steps < 1 {
            return Err(LandscapeError::Grid("steps must be at least 1".into()));
        }
        if !(min.is_finite() && max.is_finite() && min <= max) {
            return Err(LandscapeError::Grid(format!("bad range [{min}, {max}]")));
        }
        Ok(Axis { min, max, steps })
    }

    /// Symmetric about zero, so an odd step count puts a point exactly at 0.
    pub fn symmetric(radius: f64, steps: usize) -> Result<Self, LandscapeError> {
        Axis::new(-radius, radius, steps)
    }

    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| self.min * ((last - i as f64) / last) + self.max * (i as f64 / last))
            .collect()
    }

    pub fn spacing(&self) -> f64 {
        if self.steps < 2 {
            0.0
        } else {
            (self.max - self.min) / (self.steps - 1) as f64
        }
    }
}

/// Loss values over a 1D or 2D grid, row-major with the first axis outer.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrid {
    pub alpha: Axis,
    pub beta: Option<Axis>,
    pub seed: u64,
    pub temperature: f64,
    pub values: Vec<f64>,
}

impl LossGrid {
    pub fn columns(&self) -> usize {
        self.beta.map_or(1, |b| b.steps)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.columns() + j]
    }

    /// Largest `|v[i−1] − 2v[i] + v[i+1]| / h²` along every grid line.
    pub fn sharpness(&self) -> f64 {
        let cols = self.columns();
        let mut worst: f64 = 0.0;
        if self.alpha.steps >= 3 {
            for j in 0..cols {
                let line: Vec<f64> = (0..self.alpha.steps).map(|i| self.at(i, j)).collect();
                worst = worst.max(max_second_difference(&line, self.alpha.spacing()));
            }
        }
        if let Some(beta) = self.beta.filter(|b| b.steps >= 3) {
            for i in 0..self.alpha.steps {
                let line = &self.values[i * cols..(i + 1) * cols];
                worst = worst.max(max_second_difference(line, beta.spacing()));
            }
        }
        worst
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# loss grid\n");
        let _ = writeln!(out, "alpha = {} {} {}", self.alpha.min, self.alpha.max, self.alpha.steps);
        match self.beta {
            Some(b) => {
                let _ = writeln!(out, "beta = {} {} {}", b.min, b.max, b.steps);
            }
            None => out.push_str("beta = none\n"),
        }
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "temperature = {}", self.temperature);
        out.push_str("values\n");
        for row in self.values.chunks(self.columns()) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, LandscapeError> {
        let err = |line: usize, message: String| LandscapeError::Parse { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut header = |key: &str| -> Result<(usize, String), LandscapeError> {
            loop {
                let (n, l) = lines
                    .next()
                    .ok_or_else(|| err(0, format!("missing {key} header")))?;
                if l.is_empty() || l.starts_with('#') {
                    continue;
                }
                let value = l
                    .strip_prefix(key)
                    .and_then(|r| r.trim_start().strip_prefix('='))
                    .ok_or_else(|| err(n, format!("expected `{key} = …`, found {l:?}")))?;
                return Ok((n, value.trim().to_string()));
            }
        };
        let axis = |n: usize, v: &str| -> Result<Axis, LandscapeError> {
            let parts: Vec<&str> = v.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(err(n, "axis needs `min max steps`".into()));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(n, e.to_string()));
            let steps = parts[2].parse::<usize>().map_err(|e| err(n, e.to_string()))?;
            Axis::new(num(parts[0])?, num(parts[1])?, steps).map_err(|e| err(n, e.to_string()))
        };
        let (n, v) = header("alpha")?;
        let alpha = axis(n, &v)?;
        let (n, v) = header("beta")?;
        let beta = if v == "none" { None } else { Some(axis(n, &v)?) };
        let (n, v) = header("seed")?;
        let seed = v.parse().map_err(|e: std::num::ParseIntError| err(n, e.to_string()))?;
        let (n, v) = header("temperature")?;
        let temperature = v.parse().map_err(|e: std::num::ParseFloatError| err(n, e.to_string()))?;
        let mut values = Vec::new();
        let mut saw_marker = false;
        for (n, l) in lines {
            if !saw_marker {
                if l.is_empty() {
                    continue;
                }
                if l != "values" {
                    return Err(err(n, format!("expected `values`, found {l:?}")));
                }
                saw_marker = true;
                continue;
            }
            for tok in l.split_whitespace() {
                values.push(tok.parse::<f64>().map_err(|e| err(n, format!("{tok:?}: {e}")))?);
            }
        }
        let expected = alpha.steps * beta.map_or(1, |b| b.steps);
        if values.len() != expected {
            return Err(err(0, format!("expected {expected} values, found {}", values.len())));
        }
        Ok(LossGrid {
            alpha,
            beta,
            seed,
            temperature,
            values,
        })
    }
}

pub fn max_second_difference(values: &[f64], h: f64) -> f64 {
    values
        .windows(3)
        .map(|w| (w[0] - 2.0 * w[1] + w[2]).abs() / (h * h))
        .fold(0.0, f64::max)
}

fn perturbed(model: &Model, d1: &Direction, a: f64, d2: Option<(&Direction, f64)>) -> Model {
    let mut m = model.clone();
    for (i, p) in m.params_mut().iter_mut().enumerate() {
        let u = d1.tensors[i].data();
        let v = d2.map(|(d, b)| (d.tensors[i].data(), b));
        for (k, x) in p.data_mut().iter_mut().enumerate() {
            let mut shift = a * u[k] as f64;
            if let Some((v, b)) = v {
                shift += b * v[k] as f64;
            }
            *x += shift as Real;
        }
    }
    m
}

/// Evaluates `loss` at `θ + α·d1 (+ β·d2)` over the grid. The model itself
/// is never modified; each point works on its own copy.
pub fn loss_slice<F>(
    model: &Model,
    loss: F,
    d1: &Direction,
    d2: Option<&Direction>,
    alpha: Axis,
    beta: Option<Axis>,
) -> Result<Vec<f64>, LandscapeError>
where
    F: Fn(&Model) -> f64 + Sync,
{
    check_direction(model, d1)?;
    if let Some(d) = d2 {
        check_direction(model, d)?;
    }
    if d2.is_some() != beta.is_some() {
        return Err(LandscapeError::Grid("second direction and second axis go together".into()));
    }
    let alphas = alpha.points();
    let betas = beta.map(|b| b.points());
    let points: Vec<(f64, Option<f64>)> = alphas
        .iter()
        .flat_map(|&a| match &betas {
            Some(bs) => bs.iter().map(|&b| (a, Some(b))).collect::<Vec<_>>(),
            None => vec![(a, None)],
        })
        .collect();
    Ok(points
        .par_iter()
        .map(|&(a, b)| {
            let m = perturbed(model, d1, a, d2.zip(b));
            loss(&m)
        })
        .collect())
}

/// Stage-I loss of `model` on `inputs` against `Φ`-annealed teacher logits.
/// Failures such as non-finite activations come back as NaN.
pub fn stage_one_loss(model: &Model, inputs: &Tensor, teacher_logits: &Tensor, kind: StageOneLoss, phi: f64) -> f64 {
    let eval = || -> Option<f64> {
        let logits = model.predict(inputs, 1000).ok()?;
        let mut g = Graph::new();
        let zs = g.constant(logits);
        let zt = g.constant(teacher_logits.clone());
        let out = stage_one_graph(&mut g, kind, zs, zt, phi).ok()?;
        Some(g.value(out).item())
    };
    eval().unwrap_or(f64::NAN)
}
