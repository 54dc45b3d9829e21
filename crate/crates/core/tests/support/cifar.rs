//! Synthetic CIFAR-format files whose pixels carry a class-dependent tint,
//! so small networks can separate the classes.

use std::path::Path;

use akd_core::data::{write_cifar_file, CifarRecord, CifarVariant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PIXELS: usize = 3 * 32 * 32;

pub fn records(count: usize, variant: CifarVariant, seed: u64) -> Vec<CifarRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = variant.classes();
    (0..count)
        .map(|i| {
            let label = (i % classes) as u8;
            let tint = [label as u32 * 23 % 200, label as u32 * 61 % 200, label as u32 * 97 % 200];
            let pixels = (0..PIXELS)
                .map(|p| (tint[p / 1024] + rng.random_range(0..56)) as u8)
                .collect();
            CifarRecord {
                coarse: matches!(variant, CifarVariant::Hundred).then_some(label / 5),
                label,
                pixels,
            }
        })
        .collect()
}

/// Writes every file the loader expects, `per_file` records each.
pub fn write_dataset(dir: &Path, variant: CifarVariant, per_file: usize, seed: u64) {
    for (k, name) in variant.train_files().into_iter().enumerate() {
        write_cifar_file(&dir.join(name), &records(per_file, variant, seed + k as u64), variant).unwrap();
    }
    write_cifar_file(&dir.join(variant.test_file()), &records(per_file, variant, seed + 99), variant).unwrap();
}
