use akd_core::data::{gen_blobs_around, sine_splits, Dataset, SineConfig, Split, TaskKind};
use akd_core::distill::{annealing_factor, AnnealingSchedule, StageOneLoss, VanillaKdConfig};
use akd_core::landscape::stage_one_loss;
use akd_core::models::{Activation, Model, ModelSpec};
use akd_core::trainer::{
    evaluate, train_annealing_kd, train_annealing_kd_observed, train_scratch, train_stage_one, train_stage_two,
    train_takd, train_vanilla_kd, Method, Stage, TrainConfig, TrainOutcome,
};
use proptest::prelude::*;

fn blobs(seed: u64) -> (Dataset, Dataset) {
    let centers = vec![vec![0.0, 1.5], vec![1.3, -0.8], vec![-1.3, -0.8]];
    let all = gen_blobs_around(&centers, 30, 0.6, seed).unwrap();
    let train: Vec<usize> = (0..60).collect();
    let val: Vec<usize> = (60..90).collect();
    (all.subset(&train), all.subset(&val).with_split(Split::Validation))
}

fn net(hidden: usize, seed: u64) -> Model {
    Model::build(&ModelSpec::mlp(&[2, hidden, 3], Activation::Relu, seed)).unwrap()
}

fn trained_teacher(train: &Dataset, val: &Dataset) -> Model {
    let mut c = TrainConfig::new(Method::Scratch, 20);
    c.batch_size = 16;
    c.lr = 0.05;
    train_scratch(net(16, 100), train, val, &c).unwrap().model
}

fn cfg(method: Method, epochs: usize, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(method, epochs);
    c.batch_size = 16;
    c.lr = if matches!(method, Method::AnnealingKd { .. }) { 0.01 } else { 0.05 };
    c.seed = seed;
    c
}

fn annealing(tau: u32, k: usize, n: usize) -> Method {
    Method::AnnealingKd {
        schedule: AnnealingSchedule::new(tau, k, n).unwrap(),
        stage_one: StageOneLoss::Mse,
    }
}

fn assert_best_contract(out: &TrainOutcome, stage: Stage, maximize: bool, val: &Dataset) {
    let rows: Vec<_> = out.metrics.stage_rows(stage).collect();
    let best = rows
        .iter()
        .map(|r| r.val_metric)
        .fold(if maximize { f64::NEG_INFINITY } else { f64::INFINITY }, |a, b| {
            if maximize { a.max(b) } else { a.min(b) }
        });
    assert_eq!(out.best.metric, best);
    assert_eq!(out.best.stage, stage);
    let row = rows.iter().find(|r| r.epoch == out.best.epoch).unwrap();
    assert_eq!(row.val_metric, best);
    let again = evaluate(&out.model, val, val.task()).unwrap();
    assert!((again - best).abs() < 1e-9, "{again} vs {best}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn temperature_trace_covers_schedule(tau in 1u32..6, k in 1usize..4, n in 0usize..3, seed in 0u64..100) {
        let (train, val) = blobs(seed);
        let teacher = trained_teacher(&train, &val);
        let out = train_annealing_kd(net(4, seed), &teacher, &train, &val, &cfg(annealing(tau, k, n), 0, seed)).unwrap();
        let one: Vec<_> = out.metrics.stage_rows(Stage::One).collect();
        prop_assert_eq!(one.len(), tau as usize * k);
        for w in one.windows(2) {
            prop_assert!(w[0].temperature >= w[1].temperature);
        }
        for t in 1..=tau {
            prop_assert_eq!(one.iter().filter(|r| r.temperature == t as f64).count(), k);
        }
        let two: Vec<_> = out.metrics.stage_rows(Stage::Two).collect();
        prop_assert_eq!(two.len(), n);
        prop_assert!(two.iter().all(|r| r.temperature == 1.0));
        let epochs: Vec<usize> = out.metrics.rows.iter().map(|r| r.epoch).collect();
        prop_assert_eq!(epochs, (1..=tau as usize * k + n).collect::<Vec<_>>());
    }

    #[test]
    fn vanilla_kd_without_soft_term_is_scratch(seed in 0u64..100) {
        let (train, val) = blobs(seed);
        let teacher = trained_teacher(&train, &val);
        let kd = train_vanilla_kd(
            net(6, seed),
            &teacher,
            &train,
            &val,
            &cfg(Method::VanillaKd(VanillaKdConfig::new(4.0, 0.0).unwrap()), 8, seed),
        )
        .unwrap();
        let sc = train_scratch(net(6, seed), &train, &val, &cfg(Method::Scratch, 8, seed)).unwrap();
        prop_assert_eq!(kd.metrics.rows.len(), sc.metrics.rows.len());
        for (a, b) in kd.metrics.rows.iter().zip(&sc.metrics.rows) {
            prop_assert!((a.train_loss - b.train_loss).abs() <= 1e-12);
            prop_assert!((a.val_loss - b.val_loss).abs() <= 1e-12);
            prop_assert_eq!(a.val_metric, b.val_metric);
        }
        prop_assert_eq!(kd.model.params(), sc.model.params());
    }
}

#[test]
fn best_checkpoint_contract_for_single_stage_methods() {
    let (train, val) = blobs(7);
    let teacher = trained_teacher(&train, &val);
    let sc = train_scratch(net(6, 1), &train, &val, &cfg(Method::Scratch, 12, 1)).unwrap();
    assert_best_contract(&sc, Stage::Single, true, &val);
    let kd = train_vanilla_kd(
        net(6, 1),
        &teacher,
        &train,
        &val,
        &cfg(Method::VanillaKd(VanillaKdConfig::new(4.0, 0.7).unwrap()), 12, 1),
    )
    .unwrap();
    assert_best_contract(&kd, Stage::Single, true, &val);
}

#[test]
fn best_checkpoint_contract_for_regression_and_stage_two() {
    let s = sine_splits(&SineConfig::default()).unwrap();
    let spec = ModelSpec::mlp(&[1, 12, 1], Activation::Sigmoid, 4);
    let mut c = cfg(Method::Scratch, 30, 2);
    c.lr = 0.1;
    let teacher = train_scratch(Model::build(&spec.clone().with_seed(9)).unwrap(), &s.train, &s.val, &c).unwrap();
    assert_best_contract(&teacher, Stage::Single, false, &s.val);
    c.method = annealing(3, 4, 6);
    let out = train_annealing_kd(Model::build(&spec).unwrap(), &teacher.model, &s.train, &s.val, &c).unwrap();
    assert_best_contract(&out, Stage::Two, false, &s.val);
}

#[test]
fn stage_one_keeps_lowest_validation_loss_at_last_temperature() {
    let s = sine_splits(&SineConfig::default()).unwrap();
    let spec = ModelSpec::mlp(&[1, 12, 1], Activation::Sigmoid, 4);
    let mut c = cfg(Method::Scratch, 30, 2);
    c.lr = 0.1;
    let teacher = train_scratch(Model::build(&spec.clone().with_seed(9)).unwrap(), &s.train, &s.val, &c).unwrap().model;
    c.method = annealing(4, 5, 0);
    let out = train_annealing_kd(Model::build(&spec).unwrap(), &teacher, &s.train, &s.val, &c).unwrap();
    let last: Vec<_> = out.metrics.stage_rows(Stage::One).filter(|r| r.temperature == 1.0).collect();
    let min = last.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(out.best.stage, Stage::One);
    assert_eq!(out.best.temperature, 1.0);
    assert_eq!(last.iter().find(|r| r.epoch == out.best.epoch).unwrap().val_loss, min);
    let zt = teacher.predict(&s.val.inputs, 500).unwrap();
    let again = stage_one_loss(&out.model, &s.val.inputs, &zt, StageOneLoss::Mse, annealing_factor(1, 4).unwrap());
    assert!((again - min).abs() < 1e-9, "{again} vs {min}");
}

#[test]
fn teacher_is_never_modified() {
    let (train, val) = blobs(3);
    let teacher = trained_teacher(&train, &val);
    let before = teacher.params().to_vec();
    let kd = Method::VanillaKd(VanillaKdConfig::new(4.0, 0.5).unwrap());
    train_vanilla_kd(net(6, 1), &teacher, &train, &val, &cfg(kd, 4, 1)).unwrap();
    assert_eq!(teacher.params(), &before[..]);
    train_annealing_kd(net(6, 1), &teacher, &train, &val, &cfg(annealing(3, 2, 2), 0, 1)).unwrap();
    assert_eq!(teacher.params(), &before[..]);
    let mut kl = cfg(annealing(3, 2, 2), 0, 1);
    kl.method = Method::AnnealingKd {
        schedule: AnnealingSchedule::new(3, 2, 2).unwrap(),
        stage_one: StageOneLoss::KlDiv,
    };
    train_annealing_kd(net(6, 1), &teacher, &train, &val, &kl).unwrap();
    assert_eq!(teacher.params(), &before[..]);
    let c = cfg(kd, 3, 1);
    train_takd(&teacher, net(10, 2), net(4, 3), &train, &val, &c, &c).unwrap();
    assert_eq!(teacher.params(), &before[..]);
}

#[test]
fn stage_two_does_not_depend_on_teacher() {
    let (train, val) = blobs(11);
    let c = cfg(annealing(3, 2, 5), 0, 4);
    let full = {
        let teacher = trained_teacher(&train, &val);
        train_annealing_kd(net(6, 2), &teacher, &train, &val, &c).unwrap()
    };
    let after_one = {
        let teacher = trained_teacher(&train, &val);
        let one = train_stage_one(net(6, 2), &teacher, &train, &val, &c, &mut |_: u32, _: f64, _: &Model| {}).unwrap();
        drop(teacher);
        one
    };
    let two = train_stage_two(after_one.model, &train, &val, &c, 6, 5).unwrap();
    assert_eq!(two.model.params(), full.model.params());
    assert_eq!(&full.metrics.rows[6..], &two.metrics.rows[..]);
}

#[test]
fn observer_sees_every_temperature_once_in_order() {
    let (train, val) = blobs(5);
    let teacher = trained_teacher(&train, &val);
    let mut seen = Vec::new();
    let mut obs = |t: u32, phi: f64, _: &Model| seen.push((t, phi));
    train_annealing_kd_observed(net(4, 1), &teacher, &train, &val, &cfg(annealing(4, 1, 0), 0, 0), &mut obs).unwrap();
    let want: Vec<(u32, f64)> = (1..=4).rev().map(|t| (t, annealing_factor(t, 4).unwrap())).collect();
    assert_eq!(seen, want);
}

#[test]
fn annealing_run_is_deterministic() {
    let s = sine_splits(&SineConfig::default()).unwrap();
    let spec = ModelSpec::mlp(&[1, 6, 1], Activation::Sigmoid, 4);
    let teacher = Model::build(&spec.clone().with_seed(1)).unwrap();
    let c = cfg(annealing(3, 3, 3), 0, 8);
    let a = train_annealing_kd(Model::build(&spec).unwrap(), &teacher, &s.train, &s.val, &c).unwrap();
    let b = train_annealing_kd(Model::build(&spec).unwrap(), &teacher, &s.train, &s.val, &c).unwrap();
    assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(s.train.task(), TaskKind::Regression);
}

