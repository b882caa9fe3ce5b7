#![allow(dead_code)]

use rand::Rng;
use uset_core::data::{box_muller, rng_from_seed};
use uset_core::{Dataset, Samples};

/// Two Gaussian blobs in the plane, `m` points, centers `±shift`, both labels present.
pub fn blobs(m: usize, shift: f64, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    for i in 0..m {
        let label: i8 = if i < 2 {
            if i == 0 {
                1
            } else {
                -1
            }
        } else if rng.gen::<bool>() {
            1
        } else {
            -1
        };
        let (a, b) = box_muller(&mut rng);
        let c = shift * label as f64;
        rows.push([a + c, b + c]);
        y.push(label);
    }
    Dataset::new(Samples::from_rows(&rows).unwrap(), y).unwrap()
}

/// Cosine of the angle between two expansions in their RKHS.
pub fn rkhs_cosine(a: &uset_core::KernelExpansion, b: &uset_core::KernelExpansion) -> f64 {
    a.inner(b).unwrap() / (a.rkhs_norm().unwrap() * b.rkhs_norm().unwrap())
}
