//! Datasets: the three-sinusoid regression toy, CIFAR-10/100 binary batches,
//! Gaussian blobs for fast classification fixtures, and seeded batching.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::autograd::{AutogradError, Real, Tensor};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset parameter: {0}")]
    Invalid(String),
    #[error("{file}: expected {expected} bytes, found {found}")]
    Ingest {
        file: PathBuf,
        expected: String,
        found: usize,
    },
    #[error("{file}: record {record} has label {label}, but there are only {classes} classes")]
    Label {
        file: PathBuf,
        record: usize,
        label: usize,
        classes: usize,
    },
    #[error("{file}: {source}")]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Tensor(#[from] AutogradError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Regression,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Classification => "classification",
            TaskKind::Regression => "regression",
        })
    }
}

impl std::str::FromStr for TaskKind {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "regression" => Ok(TaskKind::Regression),
            other => Err(DataError::Invalid(format!(
                "unknown task kind {other:?}; expected classification or regression"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, classes: usize },
    Values(Tensor),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gather(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes { labels, classes } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
            Targets::Values(t) => Targets::Values(t.gather_rows(idx)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub targets: Targets,
    pub split: Split,
}

impl Dataset {
    pub fn new(inputs: Tensor, targets: Targets, split: Split) -> Result<Self, DataError> {
        if inputs.rows() != targets.len() {
            return Err(DataError::Invalid(format!(
                "{} inputs but {} targets",
                inputs.rows(),
                targets.len()
            )));
        }
        if let Targets::Classes { labels, classes } = &targets {
            if let Some(&bad) = labels.iter().find(|&&l| l >= *classes) {
                return Err(DataError::Invalid(format!(
                    "label {bad} outside [0, {classes})"
                )));
            }
        }
        Ok(Dataset {
            inputs,
            targets,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> TaskKind {
        match self.targets {
            Targets::Classes { .. } => TaskKind::Classification,
            Targets::Values(_) => TaskKind::Regression,
        }
    }

    /// Per-sample input shape.
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    /// Output width a model needs for this dataset.
    pub fn output_dim(&self) -> usize {
        match &self.targets {
            Targets::Classes { classes, .. } => *classes,
            Targets::Values(t) => t.row_len(),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.gather_rows(idx),
            targets: self.targets.gather(idx),
            split: self.split,
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

/// Train / validation / test triple.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Per-channel statistics used to standardise image inputs.
    pub normalization: Option<ChannelStats>,
}

// ---------------------------------------------------------------------------
// Sinusoid regression

/// `sin(3πx) + sin(6πx) + sin(9πx)`
pub fn sine_target(x: f64) -> f64 {
    (3.0 * PI * x).sin() + (6.0 * PI * x).sin() + (9.0 * PI * x).sin()
}

/// Samples `count` points with `x ~ U(range)` and `y = f(x) + N(0, noise_sd²)`.
pub fn gen_sine_dataset(
    count: usize,
    seed: u64,
    noise_sd: f64,
    x_range: (f64, f64),
) -> Result<Dataset, DataError> {
    if count == 0 {
        return Err(DataError::Invalid("sine dataset needs at least one sample".into()));
    }
    let (lo, hi) = x_range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(DataError::Invalid(format!("empty x range [{lo}, {hi}]")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(DataError::Invalid(format!("noise sd {noise_sd} must be non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).expect("validated sd");
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    for _ in 0..count {
        let x = rng.random_range(lo..hi) as Real as f64;
        let y = sine_target(x) + if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        xs.push(x as Real);
        ys.push(y as Real);
    }
    Dataset::new(
        Tensor::new(vec![count, 1], xs)?,
        Targets::Values(Tensor::new(vec![count, 1], ys)?),
        Split::Train,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SineConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub noise_sd: f64,
    pub x_range: (f64, f64),
    pub seed: u64,
}

impl Default for SineConfig {
    fn default() -> Self {
        SineConfig {
            train: 80,
            val: 40,
            test: 200,
            noise_sd: 0.05,
            x_range: (0.0, 1.0),
            seed: 0,
        }
    }
}

/// Independent train/val/test draws with seeds derived from `cfg.seed`.
pub fn sine_splits(cfg: &SineConfig) -> Result<DataSplits, DataError> {
    let draw = |n, k: u64, split| {
        gen_sine_dataset(n, mix_seed(cfg.seed, k), cfg.noise_sd, cfg.x_range).map(|d| d.with_split(split))
    };
    Ok(DataSplits {
        train: draw(cfg.train, 1, Split::Train)?,
        val: draw(cfg.val, 2, Split::Validation)?,
        test: draw(cfg.test, 3, Split::Test)?,
        normalization: None,
    })
}

/// Writes a one-feature regression dataset as `x,y` CSV.
pub fn write_xy_csv(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    let Targets::Values(y) = &ds.targets else {
        return Err(DataError::Invalid("x,y export needs a regression dataset".into()));
    };
    if ds.inputs.row_len() != 1 || y.row_len() != 1 {
        return Err(DataError::Invalid("x,y export needs one input and one target".into()));
    }
    let mut out = String::from("x,y\n");
    for (x, y) in ds.inputs.data().iter().zip(y.data()) {
        out.push_str(&format!("{x},{y}\n"));
    }
    fs::write(path, out).map_err(|source| DataError::Io {
        file: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Gaussian blobs

/// Blobs around seeded random centers drawn from `N(0, 5²)` per coordinate,
/// unit spread.
pub fn gen_blob_classification(
    classes: usize,
    per_class: usize,
    dim: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    if classes < 2 {
        return Err(DataError::Invalid(format!("need at least 2 classes, got {classes}")));
    }
    if dim == 0 {
        return Err(DataError::Invalid("blob dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xb10b));
    let spread = Normal::new(0.0, 5.0).expect("constant sd");
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| spread.sample(&mut rng)).collect())
        .collect();
    gen_blobs_around(&centers, per_class, 1.0, seed)
}

/// Blobs around explicit centers with isotropic standard deviation `sd`.
/// Samples are interleaved by class.
pub fn gen_blobs_around(
    centers: &[Vec<f64>],
    per_class: usize,
    sd: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if centers.len() < 2 {
        return Err(DataError::Invalid("need at least 2 class centers".into()));
    }
    if per_class == 0 {
        return Err(DataError::Invalid("per_class must be at least 1".into()));
    }
    let dim = centers[0].len();
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(DataError::Invalid("centers must share one positive dimension".into()));
    }
    if !(sd >= 0.0 && sd.is_finite()) {
        return Err(DataError::Invalid(format!("sd {sd} must be non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sd).expect("validated sd");
    let n = centers.len() * per_class;
    let mut xs = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..per_class {
        for (label, c) in centers.iter().enumerate() {
            xs.extend(c.iter().map(|&m| (m + noise.sample(&mut rng)) as Real));
            labels.push(label);
        }
    }
    Dataset::new(
        Tensor::new(vec![n, dim], xs)?,
        Targets::Classes {
            labels,
            classes: centers.len(),
        },
        Split::Train,
    )
}

// ---------------------------------------------------------------------------
// CIFAR binary format

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = 3 * CIFAR_SIDE * CIFAR_SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarVariant {
    Ten,
    Hundred,
}

impl CifarVariant {
    pub fn classes(self) -> usize {
        match self {
            CifarVariant::Ten => 10,
            CifarVariant::Hundred => 100,
        }
    }

    pub fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Ten => 1,
            CifarVariant::Hundred => 2,
        }
    }

    pub fn record_len(self) -> usize {
        self.label_bytes() + CIFAR_PIXELS
    }

    pub fn train_files(self) -> Vec<&'static str> {
        match self {
            CifarVariant::Ten => vec![
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ],
            CifarVariant::Hundred => vec!["train.bin"],
        }
    }

    pub fn test_file(self) -> &'static str {
        match self {
            CifarVariant::Ten => "test_batch.bin",
            CifarVariant::Hundred => "test.bin",
        }
    }
}

/// One raw record: labels plus R, G, B planes of 1024 bytes each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CifarRecord {
    /// CIFAR-100 coarse label; absent for CIFAR-10.
    pub coarse: Option<u8>,
    pub label: u8,
    pub pixels: Vec<u8>,
}

pub fn parse_cifar_bytes(
    bytes: &[u8],
    variant: CifarVariant,
    file: &Path,
) -> Result<Vec<CifarRecord>, DataError> {
    let rec = variant.record_len();
    if bytes.is_empty() || bytes.len() % rec != 0 {
        return Err(DataError::Ingest {
            file: file.to_path_buf(),
            expected: format!("a positive multiple of {rec}"),
            found: bytes.len(),
        });
    }
    bytes
        .chunks(rec)
        .enumerate()
        .map(|(i, chunk)| {
            let (coarse, label) = match variant {
                CifarVariant::Ten => (None, chunk[0]),
                CifarVariant::Hundred => (Some(chunk[0]), chunk[1]),
            };
            if label as usize >= variant.classes() {
                return Err(DataError::Label {
                    file: file.to_path_buf(),
                    record: i,
                    label: label as usize,
                    classes: variant.classes(),
                });
            }
            Ok(CifarRecord {
                coarse,
                label,
                pixels: chunk[variant.label_bytes()..].to_vec(),
            })
        })
        .collect()
}

pub fn encode_cifar(records: &[CifarRecord], variant: CifarVariant) -> Vec<u8> {
    let mut out = Vec::with_capacity(records.len() * variant.record_len());
    for r in records {
        if variant == CifarVariant::Hundred {
            out.push(r.coarse.unwrap_or(0));
        }
        out.push(r.label);
        out.extend_from_slice(&r.pixels);
    }
    out
}

pub fn read_cifar_file(path: &Path, variant: CifarVariant) -> Result<Vec<CifarRecord>, DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        file: path.to_path_buf(),
        source,
    })?;
    parse_cifar_bytes(&bytes, variant, path)
}

/// Writes records in the binary batch layout.
pub fn write_cifar_file(path: &Path, records: &[CifarRecord], variant: CifarVariant) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        file: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&encode_cifar(records, variant)).map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub sd: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CifarOptions {
    pub variant: CifarVariant,
    /// Stratified training subset size; `None` keeps every remaining image.
    pub subset: Option<usize>,
    /// Shuffle seed for the validation carve and the subset draw.
    pub seed: u64,
    /// Validation images; defaults to 5000, or a tenth of `subset`.
    pub val_count: Option<usize>,
    /// Optional cap on test images (stratified, same seed).
    pub test_subset: Option<usize>,
}

impl CifarOptions {
    pub fn new(variant: CifarVariant) -> Self {
        CifarOptions {
            variant,
            subset: None,
            seed: 0,
            val_count: None,
            test_subset: None,
        }
    }
}

/// Loads CIFAR with an optional `(count, seed)` stratified training subset.
pub fn load_cifar(
    dir: &Path,
    variant: CifarVariant,
    subset: Option<(usize, u64)>,
) -> Result<DataSplits, DataError> {
    let mut opts = CifarOptions::new(variant);
    if let Some((count, seed)) = subset {
        opts.subset = Some(count);
        opts.seed = seed;
    }
    load_cifar_with(dir, &opts)
}

pub fn load_cifar_with(dir: &Path, opts: &CifarOptions) -> Result<DataSplits, DataError> {
    let variant = opts.variant;
    let mut train = Vec::new();
    for name in variant.train_files() {
        train.extend(read_cifar_file(&dir.join(name), variant)?);
    }
    let mut test = read_cifar_file(&dir.join(variant.test_file()), variant)?;

    let val_count = opts
        .val_count
        .unwrap_or_else(|| opts.subset.map_or(5000, |s| (s / 10).max(1)));
    let needed = val_count + opts.subset.unwrap_or(1);
    if needed > train.len() {
        return Err(DataError::Invalid(format!(
            "{} training images cannot supply {val_count} validation plus a training subset of {}",
            train.len(),
            opts.subset.unwrap_or(1)
        )));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let (pool, val_idx) = order.split_at(order.len() - val_count);
    let classes = variant.classes();
    let mut train_idx = match opts.subset {
        Some(count) => stratified(pool, |i| train[i].label as usize, classes, count),
        None => pool.to_vec(),
    };
    train_idx.sort_unstable();
    if let Some(count) = opts.test_subset {
        let ids: Vec<usize> = (0..test.len()).collect();
        let mut keep = stratified(&ids, |i| test[i].label as usize, classes, count.min(test.len()));
        keep.sort_unstable();
        test = keep.into_iter().map(|i| test[i].clone()).collect();
    }

    let pick = |idx: &[usize]| idx.iter().map(|&i| train[i].clone()).collect::<Vec<_>>();
    let train_recs = pick(&train_idx);
    let val_recs = pick(val_idx);
    let stats = channel_stats(&train_recs);
    Ok(DataSplits {
        train: records_to_dataset(&train_recs, classes, &stats, Split::Train)?,
        val: records_to_dataset(&val_recs, classes, &stats, Split::Validation)?,
        test: records_to_dataset(&test, classes, &stats, Split::Test)?,
        normalization: Some(stats),
    })
}

/// Takes `count` indices from `pool` (in pool order) with per-class quotas
/// as even as possible.
fn stratified(pool: &[usize], label: impl Fn(usize) -> usize, classes: usize, count: usize) -> Vec<usize> {
    let mut quota: Vec<usize> = (0..classes)
        .map(|c| count / classes + usize::from(c < count % classes))
        .collect();
    let mut out = Vec::with_capacity(count);
    for &i in pool {
        let c = label(i);
        if quota[c] > 0 {
            quota[c] -= 1;
            out.push(i);
        }
    }
    // Classes short of their quota are topped up from whatever is left.
    if out.len() < count {
        let taken: std::collections::HashSet<usize> = out.iter().copied().collect();
        out.extend(pool.iter().filter(|i| !taken.contains(i)).take(count - out.len()));
    }
    out
}

fn channel_stats(records: &[CifarRecord]) -> ChannelStats {
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut mean = [0.0; 3];
    let mut sd = [0.0; 3];
    let n = (records.len() * plane) as f64;
    for c in 0..3 {
        let sum: f64 = records
            .iter()
            .flat_map(|r| &r.pixels[c * plane..(c + 1) * plane])
            .map(|&p| p as f64 / 255.0)
            .sum();
        mean[c] = sum / n;
        let var: f64 = records
            .iter()
            .flat_map(|r| &r.pixels[c * plane..(c + 1) * plane])
            .map(|&p| (p as f64 / 255.0 - mean[c]).powi(2))
            .sum::<f64>()
            / n;
        sd[c] = var.sqrt().max(1e-12);
    }
    ChannelStats { mean, sd }
}

fn records_to_dataset(
    records: &[CifarRecord],
    classes: usize,
    stats: &ChannelStats,
    split: Split,
) -> Result<Dataset, DataError> {
    if records.is_empty() {
        return Err(DataError::Invalid(format!("{split:?} split is empty")));
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut xs = Vec::with_capacity(records.len() * CIFAR_PIXELS);
    for r in records {
        for (i, &p) in r.pixels.iter().enumerate() {
            let c = i / plane;
            xs.push(((p as f64 / 255.0 - stats.mean[c]) / stats.sd[c]) as Real);
        }
    }
    Dataset::new(
        Tensor::new(vec![records.len(), 3, CIFAR_SIDE, CIFAR_SIDE], xs)?,
        Targets::Classes {
            labels: records.iter().map(|r| r.label as usize).collect(),
            classes,
        },
        split,
    )
}

/// Zero-pad by 4, random 32×32 crop, random horizontal flip, per image.
pub fn augment_images(batch: &Tensor, rng: &mut impl Rng) -> Tensor {
    const PAD: usize = 4;
    let s = batch.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let mut out = vec![0.0 as Real; batch.numel()];
    for i in 0..n {
        let dy = rng.random_range(0..=2 * PAD) as isize - PAD as isize;
        let dx = rng.random_range(0..=2 * PAD) as isize - PAD as isize;
        let flip = rng.random_bool(0.5);
        for ch in 0..c {
            let base = (i * c + ch) * h * w;
            for y in 0..h {
                let sy = y as isize + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for x in 0..w {
                    let xx = if flip { w - 1 - x } else { x };
                    let sx = xx as isize + dx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    out[base + y * w + x] = batch.data()[base + sy as usize * w + sx as usize];
                }
            }
        }
    }
    Tensor::new(s.to_vec(), out).expect("same shape")
}

// ---------------------------------------------------------------------------
// Batching

/// SplitMix64-style seed derivation.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// Row indices into the source dataset.
    pub indices: Vec<usize>,
    pub inputs: Tensor,
    pub targets: Targets,
}

/// Lazily materialised shuffled batches; the last one may be partial.
pub struct Batches<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(Batch {
            inputs: self.data.inputs.gather_rows(&indices),
            targets: self.data.targets.gather(&indices),
            indices,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for Batches<'_> {}

pub fn batches(ds: &Dataset, batch_size: usize, epoch_seed: u64) -> Result<Batches<'_>, DataError> {
    if batch_size == 0 {
        return Err(DataError::Invalid("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    Ok(Batches {
        data: ds,
        order,
        batch_size,
        pos: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_reference_points() {
        assert_eq!(sine_target(0.0), 0.0);
        assert!(sine_target(1.0 / 6.0).abs() < 1e-12);
        let expected = 0.5 + 3f64.sqrt() / 2.0 + 1.0;
        assert!((sine_target(1.0 / 18.0) - expected).abs() < 1e-12);
        assert!((expected - 2.3660).abs() < 1e-4);
    }

    #[test]
    fn noiseless_sine_matches_formula() {
        let ds = gen_sine_dataset(50, 3, 0.0, (0.0, 1.0)).unwrap();
        let Targets::Values(y) = &ds.targets else { unreachable!() };
        for (x, y) in ds.inputs.data().iter().zip(y.data()) {
            let xv = *x as f64;
            assert!((0.0..1.0).contains(&xv));
            // x is stored rounded; recompute from the stored value's source is
            // not possible, so compare at the storage precision.
            assert!((sine_target(xv) - *y as f64).abs() < 1e-5);
        }
    }

    #[test]
    fn sine_rejects_bad_parameters() {
        assert!(gen_sine_dataset(0, 0, 0.1, (0.0, 1.0)).is_err());
        assert!(gen_sine_dataset(5, 0, 0.1, (1.0, 1.0)).is_err());
        assert!(gen_sine_dataset(5, 0, -0.1, (0.0, 1.0)).is_err());
    }

    #[test]
    fn blobs_are_seeded_and_validated() {
        let a = gen_blob_classification(3, 10, 4, 7).unwrap();
        let b = gen_blob_classification(3, 10, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert!(gen_blob_classification(3, 0, 4, 7).is_err());
        assert!(gen_blob_classification(1, 10, 4, 7).is_err());
    }

    #[test]
    fn batch_sizes_cover_everything() {
        let ds = gen_blob_classification(5, 21, 2, 0).unwrap();
        assert_eq!(ds.len(), 105);
        let sizes: Vec<usize> = batches(&ds, 32, 1).unwrap().map(|b| b.indices.len()).collect();
        assert_eq!(sizes, vec![32, 32, 32, 9]);
        let mut seen: Vec<usize> = batches(&ds, 32, 1).unwrap().flat_map(|b| b.indices).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..105).collect::<Vec<_>>());
        assert!(batches(&ds, 0, 1).is_err());
    }

    #[test]
    fn shuffle_depends_on_seed_only() {
        let ds = gen_blob_classification(2, 50, 1, 0).unwrap();
        let order = |s| batches(&ds, 100, s).unwrap().next().unwrap().indices;
        assert_eq!(order(5), order(5));
        assert_ne!(order(5), order(6));
    }

    #[test]
    fn cifar_record_arithmetic() {
        let bytes = vec![3u8; 30_730];
        let recs = parse_cifar_bytes(&bytes, CifarVariant::Ten, Path::new("x.bin")).unwrap();
        assert_eq!(recs.len(), 10);
        assert_eq!(encode_cifar(&recs, CifarVariant::Ten), bytes);
    }

    #[test]
    fn cifar_rejects_bad_label_and_short_file() {
        let mut bytes = vec![0u8; 3073 * 2];
        bytes[3073] = 10;
        let err = parse_cifar_bytes(&bytes, CifarVariant::Ten, Path::new("b.bin")).unwrap_err();
        assert!(matches!(err, DataError::Label { record: 1, label: 10, .. }));
        let err = parse_cifar_bytes(&bytes[..3000], CifarVariant::Ten, Path::new("b.bin")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("b.bin") && msg.contains("3073"), "{msg}");
    }

    #[test]
    fn cifar100_keeps_both_labels() {
        let mut bytes = vec![0u8; 3074];
        bytes[0] = 19;
        bytes[1] = 99;
        let recs = parse_cifar_bytes(&bytes, CifarVariant::Hundred, Path::new("t.bin")).unwrap();
        assert_eq!((recs[0].coarse, recs[0].label), (Some(19), 99));
        assert_eq!(encode_cifar(&recs, CifarVariant::Hundred), bytes);
    }

    #[test]
    fn stratified_quota() {
        let pool: Vec<usize> = (0..100).collect();
        let picked = stratified(&pool, |i| i % 4, 4, 10);
        let mut counts = [0; 4];
        for i in &picked {
            counts[i % 4] += 1;
        }
        assert_eq!(counts, [3, 3, 2, 2]);
    }

    #[test]
    fn augmentation_keeps_shape() {
        let t = Tensor::<Real>::full(&[2, 3, 8, 8], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = augment_images(&t, &mut rng);
        assert_eq!(a.shape(), t.shape());
        assert!(a.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }
}
