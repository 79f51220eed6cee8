#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use voodoo_core::data::{encode_idx_images, encode_idx_labels, DatasetKind, Split};
use voodoo_core::rng::GaussianRng;
use voodoo_core::Matrix;

pub const SIDE: usize = 8;

/// Ten classes of 8×8 images, each a bright 2×2 block at its own position
/// over a noisy dark background, written under the MNIST file names.
pub fn write_fixture(dir: &Path, train: usize, test: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for (split, n, seed) in [(Split::Train, train, 11), (Split::Test, test, 12)] {
        let mut rng = GaussianRng::new(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
        let x = Matrix::from_fn(n, SIDE * SIDE, |i, p| {
            let (r, c) = (p / SIDE, p % SIDE);
            let class = labels[i];
            let hot = r / 2 == class / 4 && c / 2 == class % 4;
            let v: f64 = if hot { 0.9 } else { 0.1 } + 0.05 * rng.next_gaussian();
            (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
        });
        let files = DatasetKind::Mnist.files(split);
        std::fs::write(dir.join(files[0]), encode_idx_images(&x, SIDE, SIDE)).unwrap();
        std::fs::write(dir.join(files[1]), encode_idx_labels(&labels)).unwrap();
    }
}

/// Runs the `voodoo` binary with the data-dir variable cleared unless given.
pub fn voodoo(args: &[&str], env_data_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_voodoo"));
    cmd.args(args).env_remove("VOODOO_DATA_DIR");
    if let Some(dir) = env_data_dir {
        cmd.env("VOODOO_DATA_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}
