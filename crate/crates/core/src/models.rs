//! Teacher, assistant and student network builders.
//!
//! Three families are supported:
//!
//! * `mlp`: fully connected layers with a shared hidden activation.
//! * `plain-cnn`: stacks of 3×3 conv + activation, 2×2 max-pool after each
//!   stage, one final linear layer. Depth counts weight layers (convs plus the
//!   classifier): depth 2 is `[16]`, depth 4 is `[16] [32] [64]`, depth 10 is
//!   `[16,16] [32,32] [64,64] [128,128,128]`.
//! * `resnet-small`: the 6n+2 CIFAR layout with widths 16/32/64. Residual
//!   branches carry a scalar gate initialised to zero instead of batch norm,
//!   so a fresh network starts as a chain of identity blocks.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autograd::{AutogradError, Graph, NodeId, Real, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unsupported {what}: {got}; allowed: {allowed}")]
    Unsupported {
        what: &'static str,
        got: String,
        allowed: &'static str,
    },
    #[error("input shape {got:?} does not match model input {expected:?}")]
    InputShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("parameter {index} has shape {got:?}, model expects {expected:?}")]
    ParamShape {
        index: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("model expects {expected} parameter tensors, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error(transparent)]
    Autograd(#[from] AutogradError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            other => Err(ModelError::Unsupported {
                what: "activation",
                got: other.into(),
                allowed: "sigmoid, relu",
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Family {
    /// Layer widths including input and output, e.g. `[1, 100, 1]`.
    Mlp { sizes: Vec<usize> },
    PlainCnn { depth: usize },
    ResNetSmall { depth: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Mlp { .. } => "mlp",
            Family::PlainCnn { .. } => "plain-cnn",
            Family::ResNetSmall { .. } => "resnet-small",
        }
    }
}

pub const CNN_DEPTHS: &str = "2, 4, 10";
pub const RESNET_DEPTHS: &str = "8, 20, 110";

/// Weight initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Init {
    /// He-uniform (relu) or Xavier-uniform (sigmoid) weights, zero biases.
    #[default]
    Standard,
    /// First MLP layer only: weights `U(−gain, gain)` and biases chosen so
    /// each unit's hyperplane passes through a uniform point of the box
    /// `[lo, hi]^d`. Later layers use [`Init::Standard`].
    Knots { gain: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub activation: Activation,
    /// Per-sample input shape: `[features]` for mlp, `[C,H,W]` for CNNs.
    pub input_shape: Vec<usize>,
    pub output_dim: usize,
    pub seed: u64,
    pub init: Init,
}

impl ModelSpec {
    pub fn mlp(sizes: &[usize], activation: Activation, seed: u64) -> Self {
        ModelSpec {
            family: Family::Mlp {
                sizes: sizes.to_vec(),
            },
            activation,
            input_shape: sizes.first().map(|&d| vec![d]).unwrap_or_default(),
            output_dim: sizes.last().copied().unwrap_or(0),
            seed,
            init: Init::Standard,
        }
    }

    pub fn plain_cnn(depth: usize, input_shape: &[usize], classes: usize, seed: u64) -> Self {
        ModelSpec {
            family: Family::PlainCnn { depth },
            activation: Activation::Relu,
            input_shape: input_shape.to_vec(),
            output_dim: classes,
            seed,
            init: Init::Standard,
        }
    }

    pub fn resnet_small(depth: usize, input_shape: &[usize], classes: usize, seed: u64) -> Self {
        ModelSpec {
            family: Family::ResNetSmall { depth },
            activation: Activation::Relu,
            input_shape: input_shape.to_vec(),
            output_dim: classes,
            seed,
            init: Init::Standard,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.output_dim == 0 {
            return Err(ModelError::Unsupported {
                what: "output dimension",
                got: "0".into(),
                allowed: "≥ 1",
            });
        }
        if let Init::Knots { gain, lo, hi } = self.init {
            if !matches!(self.family, Family::Mlp { .. }) {
                return Err(ModelError::Unsupported {
                    what: "init scheme",
                    got: format!("knots for {}", self.family.name()),
                    allowed: "knots for mlp only",
                });
            }
            if !(gain > 0.0 && gain.is_finite() && lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(ModelError::Unsupported {
                    what: "knot init parameters",
                    got: format!("gain {gain}, range [{lo}, {hi}]"),
                    allowed: "positive gain and a non-empty finite range",
                });
            }
        }
        match &self.family {
            Family::Mlp { sizes } => {
                if sizes.len() < 2 || sizes.contains(&0) {
                    return Err(ModelError::Unsupported {
                        what: "mlp layer list",
                        got: format!("{sizes:?}"),
                        allowed: "at least input and output widths, all positive",
                    });
                }
                if self.input_shape != [sizes[0]] || self.output_dim != sizes[sizes.len() - 1] {
                    return Err(ModelError::InputShape {
                        expected: vec![sizes[0]],
                        got: self.input_shape.clone(),
                    });
                }
            }
            Family::PlainCnn { depth } => {
                let pools = cnn_stages(*depth)
                    .ok_or_else(|| ModelError::Unsupported {
                        what: "plain-cnn depth",
                        got: depth.to_string(),
                        allowed: CNN_DEPTHS,
                    })?
                    .len();
                self.check_image_input(1 << pools)?;
            }
            Family::ResNetSmall { depth } => {
                if ![8, 20, 110].contains(depth) {
                    return Err(ModelError::Unsupported {
                        what: "resnet-small depth",
                        got: depth.to_string(),
                        allowed: RESNET_DEPTHS,
                    });
                }
                self.check_image_input(4)?;
            }
        }
        Ok(())
    }

    fn check_image_input(&self, divisor: usize) -> Result<(), ModelError> {
        let s = &self.input_shape;
        if s.len() != 3 || s.contains(&0) || s[1] % divisor != 0 || s[2] % divisor != 0 {
            return Err(ModelError::Unsupported {
                what: "image input shape",
                got: format!("{s:?}"),
                allowed: "[C,H,W] with H and W divisible by the network's total downsampling",
            });
        }
        Ok(())
    }

    /// Depth-110 ResNets build fine but take far too long for desk runs.
    pub fn is_desk_scale(&self) -> bool {
        !matches!(self.family, Family::ResNetSmall { depth: 110 })
    }

    /// Architecture descriptor, independent of the init seed.
    pub fn descriptor(&self) -> String {
        let arch = match &self.family {
            Family::Mlp { sizes } => sizes
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("-"),
            Family::PlainCnn { depth } | Family::ResNetSmall { depth } => depth.to_string(),
        };
        let input = self
            .input_shape
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("x");
        format!(
            "{}:{}:{}:in={}:out={}",
            self.family.name(),
            arch,
            self.activation,
            input,
            self.output_dim
        )
    }
}

fn cnn_stages(depth: usize) -> Option<Vec<Vec<usize>>> {
    match depth {
        2 => Some(vec![vec![16]]),
        4 => Some(vec![vec![16], vec![32], vec![64]]),
        10 => Some(vec![
            vec![16, 16],
            vec![32, 32],
            vec![64, 64],
            vec![128, 128, 128],
        ]),
        _ => None,
    }
}

/// Metadata for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    /// Axis that indexes filters (output units), if the tensor has one.
    pub filter_axis: Option<usize>,
}

#[derive(Debug, Clone)]
enum Layer {
    Linear {
        w: usize,
        b: usize,
    },
    Conv {
        w: usize,
        b: usize,
        stride: usize,
    },
    Activation,
    MaxPool,
    Flatten,
    GlobalAvgPool,
    Block {
        conv1: (usize, usize),
        conv2: (usize, usize),
        gate: usize,
        proj: Option<(usize, usize)>,
        stride: usize,
    },
}

/// An instantiated network: spec, parameters, and the layer program that
/// consumes them.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    params: Vec<Tensor>,
    info: Vec<ParamInfo>,
    program: Vec<Layer>,
}

struct Builder {
    rng: ChaCha8Rng,
    activation: Activation,
    params: Vec<Tensor>,
    info: Vec<ParamInfo>,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, filter_axis: Option<usize>, data: Vec<Real>) -> usize {
        self.params.push(Tensor::new(shape.clone(), data).expect("builder shapes are consistent"));
        self.info.push(ParamInfo {
            name,
            shape,
            filter_axis,
        });
        self.params.len() - 1
    }

    fn bound(&self, fan_in: usize, fan_out: usize) -> f64 {
        match self.activation {
            Activation::Relu => (6.0 / fan_in as f64).sqrt(),
            Activation::Sigmoid => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        }
    }

    fn uniform(&mut self, n: usize, bound: f64) -> Vec<Real> {
        (0..n)
            .map(|_| self.rng.random_range(-bound..bound) as Real)
            .collect()
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Layer {
        let bound = self.bound(fan_in, fan_out);
        let wd = self.uniform(fan_in * fan_out, bound);
        let w = self.push(format!("{name}.weight"), vec![fan_in, fan_out], Some(1), wd);
        let b = self.push(format!("{name}.bias"), vec![fan_out], None, vec![0.0; fan_out]);
        Layer::Linear { w, b }
    }

    fn knot_linear(&mut self, name: &str, fan_in: usize, fan_out: usize, gain: f64, lo: f64, hi: f64) -> Layer {
        let wd = self.uniform(fan_in * fan_out, gain);
        let mut bd = vec![0.0; fan_out];
        for (j, bias) in bd.iter_mut().enumerate() {
            let mut dot = 0.0;
            for i in 0..fan_in {
                dot += wd[i * fan_out + j] as f64 * self.rng.random_range(lo..hi);
            }
            *bias = -dot as Real;
        }
        let w = self.push(format!("{name}.weight"), vec![fan_in, fan_out], Some(1), wd);
        let b = self.push(format!("{name}.bias"), vec![fan_out], None, bd);
        Layer::Linear { w, b }
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> (usize, usize) {
        let bound = self.bound(cin * k * k, cout * k * k);
        let wd = self.uniform(cout * cin * k * k, bound);
        let w = self.push(format!("{name}.weight"), vec![cout, cin, k, k], Some(0), wd);
        let b = self.push(format!("{name}.bias"), vec![cout], None, vec![0.0; cout]);
        (w, b)
    }
}

impl Model {
    /// Instantiates `spec` with seeded He-uniform (relu) or Xavier-uniform
    /// (sigmoid) weights and zero biases.
    pub fn build(spec: &ModelSpec) -> Result<Model, ModelError> {
        spec.validate()?;
        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            activation: spec.activation,
            params: Vec::new(),
            info: Vec::new(),
        };
        let mut program = Vec::new();
        match &spec.family {
            Family::Mlp { sizes } => {
                for (i, pair) in sizes.windows(2).enumerate() {
                    let name = format!("fc{i}");
                    program.push(match spec.init {
                        Init::Knots { gain, lo, hi } if i == 0 && sizes.len() > 2 => {
                            b.knot_linear(&name, pair[0], pair[1], gain, lo, hi)
                        }
                        _ => b.linear(&name, pair[0], pair[1]),
                    });
                    if i + 2 < sizes.len() {
                        program.push(Layer::Activation);
                    }
                }
            }
            Family::PlainCnn { depth } => {
                let stages = cnn_stages(*depth).expect("validated");
                let (mut ch, mut h, mut w) = (spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]);
                let mut idx = 0;
                for stage in &stages {
                    for &width in stage {
                        let (cw, cb) = b.conv(&format!("conv{idx}"), ch, width, 3);
                        program.push(Layer::Conv { w: cw, b: cb, stride: 1 });
                        program.push(Layer::Activation);
                        ch = width;
                        idx += 1;
                    }
                    program.push(Layer::MaxPool);
                    h /= 2;
                    w /= 2;
                }
                program.push(Layer::Flatten);
                program.push(b.linear("fc", ch * h * w, spec.output_dim));
            }
            Family::ResNetSmall { depth } => {
                let per_stage = (depth - 2) / 6;
                let (sw, sb) = b.conv("stem", spec.input_shape[0], 16, 3);
                program.push(Layer::Conv { w: sw, b: sb, stride: 1 });
                program.push(Layer::Activation);
                let mut ch = 16;
                for (s, width) in [16usize, 32, 64].into_iter().enumerate() {
                    for blk in 0..per_stage {
                        let stride = if s > 0 && blk == 0 { 2 } else { 1 };
                        let name = format!("stage{s}.block{blk}");
                        let conv1 = b.conv(&format!("{name}.conv1"), ch, width, 3);
                        let conv2 = b.conv(&format!("{name}.conv2"), width, width, 3);
                        let gate = b.push(format!("{name}.gate"), vec![1], None, vec![0.0]);
                        let proj = (stride != 1 || ch != width)
                            .then(|| b.conv(&format!("{name}.proj"), ch, width, 1));
                        program.push(Layer::Block {
                            conv1,
                            conv2,
                            gate,
                            proj,
                            stride,
                        });
                        ch = width;
                    }
                }
                program.push(Layer::GlobalAvgPool);
                program.push(b.linear("fc", ch, spec.output_dim));
            }
        }
        Ok(Model {
            spec: spec.clone(),
            params: b.params,
            info: b.info,
            program,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_info(&self) -> &[ParamInfo] {
        &self.info
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Replaces all parameters after checking count and shapes.
    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<(), ModelError> {
        check_param_shapes(&self.info, params.iter().map(|p| p.shape()))?;
        self.params = params;
        Ok(())
    }

    /// Zeroes every parameter in place.
    pub fn zero_params(&mut self) {
        for p in &mut self.params {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn check_batch(&self, batch: &[usize]) -> Result<(), ModelError> {
        if batch.len() != self.spec.input_shape.len() + 1 || batch[1..] != self.spec.input_shape[..] {
            let mut expected = vec![batch.first().copied().unwrap_or(1)];
            expected.extend_from_slice(&self.spec.input_shape);
            return Err(ModelError::InputShape {
                expected,
                got: batch.to_vec(),
            });
        }
        Ok(())
    }

    /// Adds every parameter to `g` as a leaf, trainable or constant.
    pub fn bind(&self, g: &mut Graph<Real>, trainable: bool) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    g.parameter(p.clone())
                } else {
                    g.constant(p.clone())
                }
            })
            .collect()
    }

    /// Records the forward pass on `g`; returns the logits node `[B, out]`.
    pub fn forward_graph(
        &self,
        g: &mut Graph<Real>,
        input: NodeId,
        params: &[NodeId],
    ) -> Result<NodeId, ModelError> {
        self.check_batch(g.value(input).shape())?;
        let act = |g: &mut Graph<Real>, x: NodeId| match self.spec.activation {
            Activation::Relu => g.relu(x),
            Activation::Sigmoid => g.sigmoid(x),
        };
        let mut x = input;
        for layer in &self.program {
            x = match *layer {
                Layer::Linear { w, b } => {
                    let y = g.matmul(x, params[w])?;
                    g.add(y, params[b])?
                }
                Layer::Conv { w, b, stride } => g.conv2d(x, params[w], params[b], stride, 1)?,
                Layer::Activation => act(g, x)?,
                Layer::MaxPool => g.maxpool2d(x, 2)?,
                Layer::Flatten => {
                    let s = g.value(x).shape();
                    let flat = [s[0], s[1..].iter().product()];
                    g.reshape(x, &flat)?
                }
                Layer::GlobalAvgPool => g.global_avg_pool(x)?,
                Layer::Block {
                    conv1,
                    conv2,
                    gate,
                    proj,
                    stride,
                } => {
                    let h = g.conv2d(x, params[conv1.0], params[conv1.1], stride, 1)?;
                    let h = act(g, h)?;
                    let h = g.conv2d(h, params[conv2.0], params[conv2.1], 1, 1)?;
                    let h = g.mul(h, params[gate])?;
                    let shortcut = match proj {
                        Some((pw, pb)) => g.conv2d(x, params[pw], params[pb], stride, 0)?,
                        None => x,
                    };
                    let sum = g.add(shortcut, h)?;
                    act(g, sum)?
                }
            };
        }
        Ok(x)
    }

    /// Raw logits for a batch; parameters are untouched.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor, ModelError> {
        self.check_batch(batch.shape())?;
        let mut g = Graph::new();
        let params = self.bind(&mut g, false);
        let input = g.constant(batch.clone());
        let out = self.forward_graph(&mut g, input, &params)?;
        Ok(g.value(out).clone())
    }

    /// Logits for a whole input tensor, evaluated in chunks of `chunk` rows.
    pub fn predict(&self, inputs: &Tensor, chunk: usize) -> Result<Tensor, ModelError> {
        let n = inputs.rows();
        if n <= chunk {
            return self.forward(inputs);
        }
        let mut data = Vec::with_capacity(n * self.spec.output_dim);
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let idx: Vec<usize> = (start..end).collect();
            data.extend_from_slice(self.forward(&inputs.gather_rows(&idx))?.data());
            start = end;
        }
        Ok(Tensor::new(vec![n, self.spec.output_dim], data)?)
    }
}

pub(crate) fn check_param_shapes<'a>(
    info: &[ParamInfo],
    shapes: impl ExactSizeIterator<Item = &'a [usize]>,
) -> Result<(), ModelError> {
    if shapes.len() != info.len() {
        return Err(ModelError::ParamCount {
            expected: info.len(),
            got: shapes.len(),
        });
    }
    for (index, (pi, s)) in info.iter().zip(shapes).enumerate() {
        if pi.shape != s {
            return Err(ModelError::ParamShape {
                index,
                expected: pi.shape.clone(),
                got: s.to_vec(),
            });
        }
    }
    Ok(())
}
