//! Central finite-difference oracle for every differentiable graph op.
//!
//! Each case builds `L = Σ op(inputs) ⊙ R` with a fixed random `R` (or the
//! op output itself when it is already scalar), differentiates it with the
//! tape, and compares against `(L(x+h) − L(x−h)) / 2h` evaluated through a
//! fresh forward pass for every perturbed coordinate.

use akd_core::autograd::{Graph, OpKind, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-3;
pub const CASES_PER_OP: u64 = 100;

pub struct Case {
    pub kind: OpKind,
    pub inputs: Vec<Tensor<f64>>,
    /// Which inputs are differentiated (others enter as constants).
    pub differentiable: Vec<bool>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_f64(shape, &v).unwrap()
}

/// Values bounded away from zero so relu kinks stay out of the stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n)
        .map(|_| {
            let mag = rng.random_range(0.05..2.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::from_f64(shape, &v).unwrap()
}

/// Distinct values spaced ≥ 0.01 apart, so pooling winners are stable.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.013 - 1.0).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
    Tensor::from_f64(shape, &v).unwrap()
}

pub const OP_NAMES: &[&str] = &[
    "matmul",
    "add",
    "mul",
    "conv2d",
    "maxpool2d",
    "global_avg_pool",
    "reshape",
    "relu",
    "sigmoid",
    "mse",
    "scale",
    "mean",
    "sum",
    "log_softmax",
    "softmax",
    "kl_div",
    "cross_entropy",
    "pad_zero_logit",
];

pub fn make_case(op: &str, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut d = |lo: usize, hi: usize| rng.random_range(lo..=hi);
    let (m, k, n) = (d(1, 4), d(1, 5), d(1, 4));
    let c = d(1, 3);
    let (h, w) = (2 * d(1, 3), 2 * d(1, 3));
    let oc = d(1, 3);
    let ksz = if d(0, 1) == 0 { 1 } else { 3 };
    let stride = d(1, 2);
    let padding = if ksz == 3 { d(0, 1) } else { 0 };
    let temperature = [0.5, 1.0, 2.0, 4.0][d(0, 3)];
    let broadcast = d(0, 2);
    let factor = if d(0, 1) == 0 { -1.7 } else { 0.3 };
    let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
    let r = &mut rng;
    let both = vec![true, true];
    match op {
        "matmul" => Case {
            kind: OpKind::MatMul,
            inputs: vec![uniform(r, &[m, k], -1.0, 1.0), uniform(r, &[k, n], -1.0, 1.0)],
            differentiable: both,
        },
        "add" | "mul" => {
            let rhs_shape = match broadcast {
                0 => vec![m, n],
                1 => vec![n],
                _ => vec![1],
            };
            Case {
                kind: if op == "add" { OpKind::Add } else { OpKind::Mul },
                inputs: vec![uniform(r, &[m, n], -1.0, 1.0), uniform(r, &rhs_shape, -1.0, 1.0)],
                differentiable: both,
            }
        }
        "conv2d" => Case {
            kind: OpKind::Conv2d { stride, padding },
            inputs: vec![
                uniform(r, &[m.min(2), c, h + 1, w + 2], -1.0, 1.0),
                uniform(r, &[oc, c, ksz, ksz], -1.0, 1.0),
                uniform(r, &[oc], -0.5, 0.5),
            ],
            differentiable: vec![true, true, true],
        },
        "maxpool2d" => Case {
            kind: OpKind::MaxPool2d { size: 2 },
            inputs: vec![distinct(r, &[m.min(2), c, h, w])],
            differentiable: vec![true],
        },
        "global_avg_pool" => Case {
            kind: OpKind::GlobalAvgPool,
            inputs: vec![uniform(r, &[m, c, h, w], -1.0, 1.0)],
            differentiable: vec![true],
        },
        "reshape" => Case {
            kind: OpKind::Reshape {
                shape: vec![m * k * n],
            },
            inputs: vec![uniform(r, &[m, k, n], -1.0, 1.0)],
            differentiable: vec![true],
        },
        "relu" => Case {
            kind: OpKind::Relu,
            inputs: vec![away_from_zero(r, &[m, n])],
            differentiable: vec![true],
        },
        "sigmoid" => Case {
            kind: OpKind::Sigmoid,
            inputs: vec![uniform(r, &[m, n], -4.0, 4.0)],
            differentiable: vec![true],
        },
        "mse" => Case {
            kind: OpKind::Mse,
            inputs: vec![uniform(r, &[m, n], -2.0, 2.0), uniform(r, &[m, n], -2.0, 2.0)],
            differentiable: both,
        },
        "scale" => Case {
            kind: OpKind::Scale { factor },
            inputs: vec![uniform(r, &[m, n], -1.0, 1.0)],
            differentiable: vec![true],
        },
        "mean" | "sum" => Case {
            kind: if op == "mean" { OpKind::Mean } else { OpKind::Sum },
            inputs: vec![uniform(r, &[m, k, n], -1.0, 1.0)],
            differentiable: vec![true],
        },
        "log_softmax" | "softmax" => Case {
            kind: if op == "softmax" {
                OpKind::Softmax { temperature }
            } else {
                OpKind::LogSoftmax { temperature }
            },
            inputs: vec![uniform(r, &[m, n + 1], -3.0, 3.0)],
            differentiable: vec![true],
        },
        "kl_div" => Case {
            kind: OpKind::KlDiv,
            inputs: vec![
                uniform(r, &[m, n + 1], -2.5, -0.1),
                uniform(r, &[m, n + 1], -2.5, -0.1),
            ],
            differentiable: both,
        },
        "cross_entropy" => Case {
            kind: OpKind::CrossEntropy { labels },
            inputs: vec![uniform(r, &[m, n], -3.0, 3.0)],
            differentiable: vec![true],
        },
        "pad_zero_logit" => Case {
            kind: OpKind::PadZeroLogit,
            inputs: vec![uniform(r, &[m, n], -1.0, 1.0)],
            differentiable: vec![true],
        },
        other => panic!("no gradient case for {other}"),
    }
}

/// Builds the scalar objective and returns (graph, loss, leaf ids).
fn objective(case: &Case, inputs: &[Tensor<f64>], weights: Option<&Tensor<f64>>) -> f64 {
    let mut g = Graph::<f64>::new();
    let ids: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = g.forward_op(case.kind.clone(), &ids).unwrap();
    match weights {
        None => g.value(out).item(),
        Some(w) => g
            .value(out)
            .data()
            .iter()
            .zip(w.data())
            .map(|(a, b)| a * b)
            .sum(),
    }
}

/// Relative error ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-8).
pub fn check(case: &Case, seed: u64) -> f64 {
    let mut g = Graph::<f64>::new();
    let ids: Vec<_> = case
        .inputs
        .iter()
        .zip(&case.differentiable)
        .map(|(t, &d)| if d { g.parameter(t.clone()) } else { g.constant(t.clone()) })
        .collect();
    let out = g.forward_op(case.kind.clone(), &ids).unwrap();
    let out_shape = g.value(out).shape().to_vec();
    let weights = if g.value(out).numel() == 1 {
        None
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
        Some(uniform(&mut rng, &out_shape, -1.0, 1.0))
    };
    let loss = match &weights {
        None => out,
        Some(w) => {
            let wid = g.constant(w.clone());
            let prod = g.mul(out, wid).unwrap();
            g.sum(prod).unwrap()
        }
    };
    let grads = g.backward(loss).unwrap();

    let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
    for (i, &d) in case.differentiable.iter().enumerate() {
        if !d {
            continue;
        }
        let analytic = grads.get(ids[i]).unwrap().to_f64_vec();
        for (j, a) in analytic.iter().enumerate() {
            let mut plus = case.inputs.clone();
            plus[i].data_mut()[j] += STEP;
            let mut minus = case.inputs.clone();
            minus[i].data_mut()[j] -= STEP;
            let numeric =
                (objective(case, &plus, weights.as_ref()) - objective(case, &minus, weights.as_ref()))
                    / (2.0 * STEP);
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
    }
    diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(1e-8)
}

/// Worst relative error over `CASES_PER_OP` seeded cases for one op.
pub fn worst_error(op: &str) -> f64 {
    (0..CASES_PER_OP)
        .map(|seed| check(&make_case(op, seed), seed))
        .fold(0.0, f64::max)
}
