use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use akd_core::data::{write_cifar_file, CifarRecord, CifarVariant};

const TINY: &str = "
[experiment]
method = annealing-kd
seeds = 0, 1

[data]
kind = sine
train = 24
val = 12
test = 30

[teacher]
arch = mlp 12
activation = sigmoid
init = knots 30 0 1
seed_offset = 1000

[teacher.train]
lr = 0.05
weight_decay = 0
batch_size = 8
epochs = 10

[student]
arch = mlp 4
activation = sigmoid
seed_offset = 2000

[train]
optimizer = adam
lr = 0.01
weight_decay = 0
batch_size = 8

[annealing]
tau_max = 3
k = 2
n = 2

[landscape]
radius = 0.5
steps = 5
directions = 2
";

fn akd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_akd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("AKD_CIFAR_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_then_refuse_then_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.conf", TINY);
    let out = dir.path().join("run");
    let o = akd(&["train", "--config", &cfg, "--out", s(&out), "--threads", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("seed-0/metrics.csv").is_file());
    assert!(out.join("seed-1/best.ckpt").is_file());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("seed,method,task"));

    let again = akd(&["train", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(code(&again), 1);
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));

    let forced = akd(&["train", "--config", &cfg, "--out", s(&out), "--force", "--seeds", "5"]);
    assert_eq!(code(&forced), 0);
    assert!(out.join("seed-5/metrics.csv").is_file());
}

#[test]
fn config_problems_exit_with_one_and_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace("\nn = 2\n", "\nn = 2\nm = 3\n");
    let line = text.lines().position(|l| l == "m = 3").unwrap() + 1;
    let cfg = write(dir.path(), "bad.conf", &text);
    let o = akd(&["train", "--config", &cfg, "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&format!("line {line}:")) && err.contains("unknown key \"m\""), "{err}");

    let takd = write(dir.path(), "takd.conf", &TINY.replace("annealing-kd", "takd"));
    assert_eq!(code(&akd(&["train", "--config", &takd, "--out", s(&dir.path().join("y"))])), 1);
    assert_eq!(code(&akd(&["train", "--config", s(&dir.path().join("none.conf"))])), 1);
    assert_eq!(code(&akd(&["train"])), 1);
    assert_eq!(code(&akd(&["frobnicate"])), 1);
    assert_eq!(code(&akd(&["--help"])), 0);
    let no_out = akd(&["train", "--config", &cfg.replace("bad", "takd")]);
    assert_eq!(code(&no_out), 1);
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ckpt");
    let text = TINY.replace("[teacher.train]", &format!("checkpoint = {}\n\n[teacher.train]", missing.display()));
    let cfg = write(dir.path(), "a.conf", &text);
    let out = dir.path().join("run");
    let o = akd(&["train", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(out.join("FAILED").is_file());
    assert!(out.join("seed-0/FAILED").is_file());
}

#[test]
fn eval_compare_and_landscape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.conf", TINY);
    let scratch = write(dir.path(), "s.conf", &TINY.replace("method = annealing-kd", "method = scratch"));
    let (ra, rs) = (dir.path().join("ra"), dir.path().join("rs"));
    assert_eq!(code(&akd(&["train", "--config", &cfg, "--out", s(&ra)])), 0);
    assert_eq!(code(&akd(&["train", "--config", &scratch, "--out", s(&rs)])), 0);

    let e = akd(&["eval", "--config", &cfg, "--out", s(&ra)]);
    assert_eq!(code(&e), 0);
    let text = String::from_utf8_lossy(&e.stdout);
    assert_eq!(text.lines().count(), 3, "{text}");
    let summary = fs::read_to_string(ra.join("summary.csv")).unwrap();
    let first_metric = summary.lines().nth(1).unwrap().split(',').nth(3).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(first_metric), "{text} / {summary}");

    let c = akd(&["compare", s(&ra), s(&rs.join("summary.csv"))]);
    assert_eq!(code(&c), 0);
    let table = String::from_utf8_lossy(&c.stdout);
    assert!(table.starts_with("method\tmedian_mse"));
    assert_eq!(table.lines().count(), 3);

    let empty = write(dir.path(), "empty.csv", "");
    assert_eq!(code(&akd(&["compare", &empty])), 1);
    let cls = write(
        dir.path(),
        "cls.csv",
        "seed,method,task,final_metric,best_metric,teacher_mse,seconds\n0,kd,classification,0.5,0.5,NaN,0\n",
    );
    assert_eq!(code(&akd(&["compare", s(&ra), &cls])), 1);

    let land = dir.path().join("land");
    let l = akd(&["landscape", "--config", &cfg, "--out", s(&land), "--seeds", "0"]);
    assert_eq!(code(&l), 0, "{}", String::from_utf8_lossy(&l.stderr));
    for f in ["T3-d0.grid", "T3-d1.grid", "T1-d0.grid", "T1-d1.grid", "sharpness.csv"] {
        assert!(land.join("seed-0").join(f).is_file(), "{f}");
    }
    let scratch_land = akd(&["landscape", "--config", &scratch, "--out", s(&dir.path().join("l2"))]);
    assert_eq!(code(&scratch_land), 1);
}

#[test]
fn cifar_directory_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cifar");
    fs::create_dir(&data).unwrap();
    let variant = CifarVariant::Ten;
    let recs: Vec<CifarRecord> = (0..20)
        .map(|i| CifarRecord {
            coarse: None,
            label: (i % 10) as u8,
            pixels: (0..3072).map(|p| ((p * 7 + i * 31) % 256) as u8).collect(),
        })
        .collect();
    for f in variant.train_files() {
        write_cifar_file(&data.join(f), &recs, variant).unwrap();
    }
    write_cifar_file(&data.join(variant.test_file()), &recs, variant).unwrap();
    let cfg = write(
        dir.path(),
        "c.conf",
        "[experiment]\nmethod = scratch\nseeds = 0\n\n[data]\nkind = cifar10\nsubset = 30\nval_count = 10\n\n[student]\narch = plain-cnn 2\n\n[train]\nepochs = 1\nbatch_size = 16\n",
    );
    let out = dir.path().join("run");
    let without = akd(&["train", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(code(&without), 1);
    let with = Command::new(env!("CARGO_BIN_EXE_akd"))
        .args(["train", "--config", &cfg, "--out", s(&out), "--force"])
        .env("AKD_CIFAR_DIR", &data)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(code(&with), 0, "{}", String::from_utf8_lossy(&with.stderr));
    assert!(out.join("seed-0/best.ckpt").is_file());
}
