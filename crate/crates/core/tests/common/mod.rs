#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vgpencr::grouped_model::{center, CenteredDataset, GroupSpec, GroupedDesign};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Linear data whose first `active` groups carry unit-scale signal.
pub fn linear_data(
    rng: &mut ChaCha8Rng,
    n: usize,
    sizes: &[usize],
    active: usize,
    signal: f64,
    noise: f64,
) -> (DVector<f64>, GroupedDesign) {
    let spec = GroupSpec::new(sizes.to_vec()).unwrap();
    let p = spec.num_predictors();
    let x = gaussian_matrix(rng, n, p);
    let mut beta = DVector::zeros(p);
    for g in 0..active.min(spec.num_groups()) {
        for j in spec.range(g) {
            beta[j] = signal * if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }
    let y = &x * &beta + gaussian_vector(rng, n) * noise + DVector::from_element(n, 3.0);
    (y, GroupedDesign::new(x, spec).unwrap())
}

pub fn random_sizes(rng: &mut ChaCha8Rng, groups: usize, max_size: usize) -> Vec<usize> {
    (0..groups).map(|_| rng.random_range(1..=max_size)).collect()
}

pub fn centered(y: &DVector<f64>, design: &GroupedDesign) -> CenteredDataset {
    center(y, design).unwrap()
}
