use akd_core::autograd::{Graph, Real, Tensor};
use akd_core::data::{sine_splits, SineConfig};
use akd_core::models::{Activation, Model, ModelSpec};
use akd_core::trainer::{train_scratch, Method, TrainConfig};
use proptest::prelude::*;

fn tensor(shape: &[usize], seed: u64) -> Tensor {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0).collect();
    Tensor::from_f64(shape, &v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unreached_parameter_gets_exact_zero_gradient(rows in 1usize..5, cols in 1usize..5, seed in 0u64..1000) {
        let mut g = Graph::<Real>::new();
        let used = g.parameter(tensor(&[rows, cols], seed));
        let unused = g.parameter(tensor(&[cols, 3], seed + 1));
        let s = g.sigmoid(used).unwrap();
        let loss = g.sum(s).unwrap();
        let grads = g.backward(loss).unwrap();
        let z = g.gradient(&grads, unused);
        prop_assert_eq!(z.shape(), &[cols, 3][..]);
        prop_assert!(z.data().iter().all(|&v| v == 0.0));
        prop_assert!(g.gradient(&grads, used).data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn model_build_is_deterministic(hidden in 1usize..20, seed in any::<u64>(), relu in any::<bool>()) {
        let act = if relu { Activation::Relu } else { Activation::Sigmoid };
        let spec = ModelSpec::mlp(&[3, hidden, 2], act, seed);
        let a = Model::build(&spec).unwrap();
        let b = Model::build(&spec).unwrap();
        prop_assert_eq!(a.params(), b.params());
    }

    #[test]
    fn forward_leaves_parameters_alone(seed in 0u64..1000, calls in 1usize..5) {
        let m = Model::build(&ModelSpec::mlp(&[2, 7, 3], Activation::Relu, seed)).unwrap();
        let before = m.params().to_vec();
        let x = tensor(&[4, 2], seed);
        let first = m.forward(&x).unwrap();
        for _ in 0..calls {
            prop_assert_eq!(&m.forward(&x).unwrap(), &first);
        }
        prop_assert_eq!(m.params(), &before[..]);
    }
}

#[test]
fn cnn_forward_is_pure_too() {
    let m = Model::build(&ModelSpec::plain_cnn(2, &[3, 8, 8], 4, 5)).unwrap();
    let before = m.params().to_vec();
    let x = tensor(&[2, 3, 8, 8], 9);
    let a = m.forward(&x).unwrap();
    assert_eq!(m.forward(&x).unwrap(), a);
    assert_eq!(m.params(), &before[..]);
}

#[test]
fn logits_are_not_normalized() {
    let m = Model::build(&ModelSpec::mlp(&[2, 8, 3], Activation::Relu, 3)).unwrap();
    let z = m.forward(&tensor(&[5, 2], 2)).unwrap();
    let sums: Vec<f64> = (0..5).map(|i| z.row(i).iter().map(|&v| v as f64).sum()).collect();
    assert!(sums.iter().any(|s| (s - 1.0).abs() > 1e-3), "{sums:?}");
}

#[test]
fn identical_runs_give_bitwise_identical_trajectories() {
    let splits = sine_splits(&SineConfig::default()).unwrap();
    let spec = ModelSpec::mlp(&[1, 8, 1], Activation::Sigmoid, 3);
    let mut cfg = TrainConfig::new(Method::Scratch, 15);
    cfg.batch_size = 16;
    cfg.lr = 0.05;
    let run = || train_scratch(Model::build(&spec).unwrap(), &splits.train, &splits.val, &cfg).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.model.params(), b.model.params());
}
