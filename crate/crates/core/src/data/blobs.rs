use rand_distr::{Distribution, StandardNormal};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_from;
use crate::tensor::Tensor;

/// Minimum distance between two cluster centers, in units of `spread`.
pub const CENTER_SEPARATION: f64 = 6.0;

/// Cluster centers: a regular polygon in the first two coordinates (a
/// line when `dim == 1`) with neighbouring centers `6·spread` apart.
/// Independent of the seed, so train and test draws share centers.
fn centers(classes: usize, dim: usize, spread: f64) -> Vec<Vec<f64>> {
    let gap = CENTER_SEPARATION * spread;
    (0..classes)
        .map(|c| {
            let mut p = vec![0.0; dim];
            if dim == 1 {
                p[0] = gap * (c as f64 - (classes - 1) as f64 / 2.0);
            } else {
                let radius = gap / (2.0 * (std::f64::consts::PI / classes as f64).sin());
                let angle = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
                p[0] = radius * angle.cos();
                p[1] = radius * angle.sin();
            }
            p
        })
        .collect()
}

/// Isotropic Gaussian clusters, one per class, `n_per_class` points each.
/// Examples are interleaved by class.
pub fn gen_blobs<T: Scalar>(
    n_per_class: usize,
    classes: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset<T>> {
    if classes < 2 || dim < 1 {
        return Err(Error::contract(format!("blobs need classes ≥ 2 and dim ≥ 1, got {classes}, {dim}")));
    }
    if n_per_class == 0 || spread.is_nan() || spread <= 0.0 {
        return Err(Error::contract("blobs need n_per_class ≥ 1 and spread > 0"));
    }
    let centers = centers(classes, dim, spread);
    let mut rng = rng_from(seed);
    let n = n_per_class * classes;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n_per_class {
        for (c, center) in centers.iter().enumerate() {
            for &mu in center {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(T::of(mu + spread * z));
            }
            labels.push(c);
        }
    }
    let inputs = Tensor::new(vec![n, dim], data)?;
    LabeledDataset::new(inputs, labels, classes, format!("blobs-c{classes}-d{dim}"))
}
