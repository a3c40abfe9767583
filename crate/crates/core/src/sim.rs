//! Seeded generators for the three benchmark designs: an additive model with
//! spline-expanded uniforms, a categorical model with pairwise interactions,
//! and a longitudinal varying-coefficient model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{expand_varying_coefficient_design, SplineBasisSpec, Subject};
use crate::error::{Error, Result};
use crate::grouped_model::{GroupSpec, GroupedDesign};

pub const TEST_SIZE: usize = 200;
pub const GAM_BASIS_DIM: usize = 4;
pub const VC_BASIS_DIM: usize = 8;
pub const VC_DOMAIN: [f64; 2] = [0.0, 20.5];
const VC_SKIP_PROB: f64 = 0.6;
const VC_TIMES: usize = 20;
const VC_TAIL_CORR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Gam,
    Cat,
    Vc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub scenario: Scenario,
    /// 1-based.
    pub active_groups: Vec<usize>,
    /// Exact coefficients when the truth lies in the design's span.
    pub beta0: Option<Vec<f64>>,
    pub sigma_true: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub y_raw: DVector<f64>,
    /// Noiseless mean response.
    pub signal: DVector<f64>,
    pub design: GroupedDesign,
    /// Pre-expansion covariates: `z` for the additive and categorical designs,
    /// `[subject, t, x_1, …, x_G]` per observation for the varying-coefficient design.
    pub raw_covariates: DMatrix<f64>,
    pub truth: SimTruth,
    pub seed: u64,
    /// Bases used to expand `raw_covariates`, shared between train and test.
    pub bases: Vec<SplineBasisSpec>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gam_signal(z: &[f64]) -> f64 {
    use std::f64::consts::PI;
    5.0 * (PI * z[0]).sin() + 2.5 * (z[2] * z[2] - 0.5) + z[3].exp() + 3.0 * z[4]
}

pub fn gen_gam(n: usize, g: usize, seed: u64) -> Result<(SimDataset, SimDataset)> {
    gen_gam_with_noise(n, g, seed, 1.0)
}

/// As [`gen_gam`] with noise standard deviation `noise_sd` (0 gives the bare signal).
pub fn gen_gam_with_noise(
    n: usize,
    g: usize,
    seed: u64,
    noise_sd: f64,
) -> Result<(SimDataset, SimDataset)> {
    if g < 5 {
        return Err(Error::GTooSmall { got: g, min: 5 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rows: usize, rng: &mut ChaCha8Rng| {
        let mut z = DMatrix::zeros(rows, g);
        for i in 0..rows {
            for k in 0..g {
                z[(i, k)] = rng.random::<f64>();
            }
        }
        let signal = DVector::from_fn(rows, |i, _| {
            let row: Vec<f64> = (0..5).map(|k| z[(i, k)]).collect();
            gam_signal(&row)
        });
        let y = DVector::from_fn(rows, |i, _| signal[i] + noise_sd * normal(rng));
        (z, signal, y)
    };
    let (z_train, s_train, y_train) = draw(n, &mut rng);
    let (z_test, s_test, y_test) = draw(TEST_SIZE, &mut rng);

    let bases = (0..g)
        .map(|k| SplineBasisSpec::natural_cubic(z_train.column(k).as_slice(), GAM_BASIS_DIM))
        .collect::<Result<Vec<_>>>()?;
    let expand = |z: &DMatrix<f64>| -> Result<GroupedDesign> {
        let mut x = DMatrix::zeros(z.nrows(), g * GAM_BASIS_DIM);
        for (k, spec) in bases.iter().enumerate() {
            let block = spec.evaluate_many(z.column(k).as_slice())?;
            x.columns_mut(k * GAM_BASIS_DIM, GAM_BASIS_DIM).copy_from(&block);
        }
        GroupedDesign::new(x, GroupSpec::uniform(g, GAM_BASIS_DIM)?)
    };
    let truth = SimTruth {
        scenario: Scenario::Gam,
        active_groups: vec![1, 3, 4, 5],
        beta0: None,
        sigma_true: 1.0,
    };
    let train = SimDataset {
        y_raw: y_train,
        signal: s_train,
        design: expand(&z_train)?,
        raw_covariates: z_train,
        truth: truth.clone(),
        seed,
        bases: bases.clone(),
    };
    let test = SimDataset {
        y_raw: y_test,
        signal: s_test,
        design: expand(&z_test)?,
        raw_covariates: z_test,
        truth,
        seed,
        bases,
    };
    Ok((train, test))
}

/// Level probabilities of categorical predictor `k` (0-based).
pub fn categorical_probs(k: usize) -> [f64; 3] {
    match k {
        0 => [0.3, 0.65, 0.05],
        2 => [0.2, 0.5, 0.3],
        3 => [0.5, 0.2, 0.3],
        _ => [1.0 / 3.0; 3],
    }
}

/// Mean response given the levels (1, 2 or 3) of the first two predictors.
pub fn categorical_signal(z1: u8, z2: u8) -> f64 {
    let main1 = match z1 {
        2 => 2.0,
        3 => -1.0,
        _ => 0.0,
    };
    let main2 = match z2 {
        2 => 4.5,
        3 => 5.0,
        _ => 0.0,
    };
    let inter = match (z1, z2) {
        (2, 2) => 1.5,
        (2, 3) => -3.5,
        (3, 2) => 2.0,
        (3, 3) => 4.0,
        _ => 0.0,
    };
    main1 + main2 + inter
}

/// Group sizes of the categorical design: `K` main effects of 2 columns,
/// then `C(K, 2)` interactions of 4 columns in lexicographic pair order.
pub fn categorical_spec(k: usize) -> Result<GroupSpec> {
    let pairs = k * (k - 1) / 2;
    let mut sizes = vec![2; k];
    sizes.extend(std::iter::repeat_n(4, pairs));
    GroupSpec::new(sizes)
}

/// Reference-coded dummies (level 1 as reference) plus all pairwise products.
pub fn categorical_design(levels: &DMatrix<f64>) -> Result<GroupedDesign> {
    let (n, k) = levels.shape();
    let spec = categorical_spec(k)?;
    let mut x = DMatrix::zeros(n, spec.num_predictors());
    for i in 0..n {
        let dummy = |j: usize| {
            let l = levels[(i, j)];
            [(l == 2.0) as u8 as f64, (l == 3.0) as u8 as f64]
        };
        for j in 0..k {
            let d = dummy(j);
            x[(i, 2 * j)] = d[0];
            x[(i, 2 * j + 1)] = d[1];
        }
        let mut col = 2 * k;
        for a in 0..k {
            for b in a + 1..k {
                let (da, db) = (dummy(a), dummy(b));
                for va in da {
                    for vb in db {
                        x[(i, col)] = va * vb;
                        col += 1;
                    }
                }
            }
        }
    }
    GroupedDesign::new(x, spec)
}

pub fn gen_categorical(n: usize, k: usize, seed: u64) -> Result<(SimDataset, SimDataset)> {
    if k < 3 {
        return Err(Error::KTooSmall { got: k, min: 3 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rows: usize, rng: &mut ChaCha8Rng| {
        let mut z = DMatrix::zeros(rows, k);
        for i in 0..rows {
            for j in 0..k {
                let p = categorical_probs(j);
                let u = rng.random::<f64>() * p.iter().sum::<f64>();
                z[(i, j)] = if u < p[0] {
                    1.0
                } else if u < p[0] + p[1] {
                    2.0
                } else {
                    3.0
                };
            }
        }
        let signal =
            DVector::from_fn(rows, |i, _| categorical_signal(z[(i, 0)] as u8, z[(i, 1)] as u8));
        let y = DVector::from_fn(rows, |i, _| signal[i] + normal(rng));
        (z, signal, y)
    };
    let (z_train, s_train, y_train) = draw(n, &mut rng);
    let (z_test, s_test, y_test) = draw(TEST_SIZE, &mut rng);

    let spec = categorical_spec(k)?;
    let mut beta0 = vec![0.0; spec.num_predictors()];
    beta0[0..2].copy_from_slice(&[2.0, -1.0]);
    beta0[2..4].copy_from_slice(&[4.5, 5.0]);
    let inter = spec.range(k);
    beta0[inter].copy_from_slice(&[1.5, -3.5, 2.0, 4.0]);
    let truth = SimTruth {
        scenario: Scenario::Cat,
        active_groups: vec![1, 2, k + 1],
        beta0: Some(beta0),
        sigma_true: 1.0,
    };
    let train = SimDataset {
        y_raw: y_train,
        signal: s_train,
        design: categorical_design(&z_train)?,
        raw_covariates: z_train,
        truth: truth.clone(),
        seed,
        bases: Vec::new(),
    };
    let test = SimDataset {
        y_raw: y_test,
        signal: s_test,
        design: categorical_design(&z_test)?,
        raw_covariates: z_test,
        truth,
        seed,
        bases: Vec::new(),
    };
    Ok((train, test))
}

/// True coefficient function `g` (1-based) of the varying-coefficient design.
pub fn vc_coefficient(g: usize, t: f64) -> f64 {
    use std::f64::consts::PI;
    match g {
        1 => 10.0 * (PI * t / 15.0).sin(),
        2 => -0.6 * t + 6.0,
        3 => -1.0 + 2.0 * (PI * (t - 25.0) / 8.0).sin(),
        4 => 1.0 + 2.0 * (PI * (t - 25.0) / 15.0).cos(),
        5 => 2.0 + 10.0 / (1.0 + (10.0 - t).exp()),
        6 => -5.0,
        _ => 0.0,
    }
}

fn draw_times(rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let times: Vec<f64> = (1..=VC_TIMES)
            .filter_map(|t| {
                let skip = rng.random::<f64>() < VC_SKIP_PROB;
                let jitter = rng.random_range(-0.5..0.5);
                (!skip).then_some(t as f64 + jitter)
            })
            .collect();
        if !times.is_empty() {
            return times;
        }
    }
}

fn draw_subject(rng: &mut ChaCha8Rng, g: usize) -> Subject {
    let times = draw_times(rng);
    let m = times.len();
    let mut covariates = vec![vec![0.0; g]; m];
    for (row, &t) in covariates.iter_mut().zip(&times) {
        let x1 = t / 10.0 + 2.0 * rng.random::<f64>();
        row[0] = x1;
        let sd = ((1.0 + x1) / (2.0 + x1)).sqrt();
        for v in &mut row[1..5] {
            *v = sd * normal(rng);
        }
        row[5] = 1.5 * (t / 40.0).exp() + normal(rng);
    }
    // Stationary Gaussian process with corr 0.5^|t−s|, i.e. AR(1) along the grid.
    for k in 6..g {
        let mut prev = normal(rng);
        covariates[0][k] = prev;
        for j in 1..m {
            let rho = VC_TAIL_CORR.powf(times[j] - times[j - 1]);
            prev = rho * prev + (1.0 - rho * rho).sqrt() * normal(rng);
            covariates[j][k] = prev;
        }
    }
    Subject { times, covariates }
}

type VcSample = (GroupedDesign, DMatrix<f64>, DVector<f64>, DVector<f64>);

fn vc_sample(
    rng: &mut ChaCha8Rng,
    n: usize,
    g: usize,
    noise_sd: f64,
    spec: &SplineBasisSpec,
) -> Result<VcSample> {
    let subjects: Vec<Subject> = (0..n).map(|_| draw_subject(rng, g)).collect();
    let rows: usize = subjects.iter().map(|s| s.times.len()).sum();
    let mut raw = DMatrix::zeros(rows, g + 2);
    let mut signal = DVector::zeros(rows);
    let mut i = 0;
    for (s_idx, s) in subjects.iter().enumerate() {
        for (&t, x) in s.times.iter().zip(&s.covariates) {
            raw[(i, 0)] = s_idx as f64;
            raw[(i, 1)] = t;
            for (k, &v) in x.iter().enumerate() {
                raw[(i, k + 2)] = v;
            }
            signal[i] = x
                .iter()
                .take(6)
                .enumerate()
                .map(|(k, &v)| v * vc_coefficient(k + 1, t))
                .sum();
            i += 1;
        }
    }
    let y = signal.map(|s| s + noise_sd * normal(rng));
    let design = expand_varying_coefficient_design(&subjects, g, spec)?;
    Ok((design, raw, signal, y))
}

/// `n` training subjects and `n` independent test subjects.
pub fn gen_varying_coeff(n: usize, g: usize, seed: u64) -> Result<(SimDataset, SimDataset)> {
    gen_varying_coeff_with_noise(n, g, seed, 1.0)
}

pub fn gen_varying_coeff_with_noise(
    n: usize,
    g: usize,
    seed: u64,
    noise_sd: f64,
) -> Result<(SimDataset, SimDataset)> {
    if g < 6 {
        return Err(Error::GTooSmall { got: g, min: 6 });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one subject".into()));
    }
    let spec = SplineBasisSpec::bspline(VC_DOMAIN, VC_BASIS_DIM, 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = vc_sample(&mut rng, n, g, noise_sd, &spec)?;
    let test = vc_sample(&mut rng, n, g, noise_sd, &spec)?;
    let truth = SimTruth {
        scenario: Scenario::Vc,
        active_groups: (1..=6).collect(),
        beta0: None,
        sigma_true: 1.0,
    };
    let pack = |(design, raw, signal, y): (GroupedDesign, DMatrix<f64>, DVector<f64>, DVector<f64>)| {
        SimDataset {
            y_raw: y,
            signal,
            design,
            raw_covariates: raw,
            truth: truth.clone(),
            seed,
            bases: vec![spec.clone()],
        }
    };
    Ok((pack(train), pack(test)))
}

pub fn generate(
    scenario: Scenario,
    n: usize,
    size: usize,
    seed: u64,
) -> Result<(SimDataset, SimDataset)> {
    match scenario {
        Scenario::Gam => gen_gam(n, size, seed),
        Scenario::Cat => gen_categorical(n, size, seed),
        Scenario::Vc => gen_varying_coeff(n, size, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gam_shapes_and_truth() {
        let (train, test) = gen_gam(200, 50, 1).unwrap();
        assert_eq!(train.design.x().shape(), (200, 200));
        assert_eq!(test.design.n(), TEST_SIZE);
        assert_eq!(train.truth.active_groups, vec![1, 3, 4, 5]);
        assert!(matches!(gen_gam(200, 4, 1), Err(Error::GTooSmall { .. })));
    }

    #[test]
    fn categorical_structure() {
        let (train, _) = gen_categorical(200, 10, 3).unwrap();
        assert_eq!(train.design.spec().num_groups(), 55);
        assert_eq!(train.design.p(), 200);
        assert_eq!(train.truth.active_groups, vec![1, 2, 11]);
        assert_eq!(categorical_spec(12).unwrap().num_groups(), 78);
        assert_eq!(categorical_spec(15).unwrap().num_groups(), 120);
        assert!(matches!(gen_categorical(200, 2, 1), Err(Error::KTooSmall { .. })));
    }

    #[test]
    fn categorical_truth_is_linear_in_design() {
        let (train, _) = gen_categorical(100, 4, 9).unwrap();
        let beta0 = DVector::from_vec(train.truth.beta0.clone().unwrap());
        let fitted = train.design.x() * beta0;
        assert!((fitted - &train.signal).amax() < 1e-12);
        assert_eq!(categorical_signal(2, 2) - categorical_signal(1, 1), 8.0);
    }

    #[test]
    fn vc_shapes() {
        let (train, test) = gen_varying_coeff(50, 30, 2).unwrap();
        assert_eq!(train.design.spec().sizes(), &[8; 30]);
        assert_eq!(train.raw_covariates.ncols(), 32);
        assert_eq!(train.design.n(), train.y_raw.len());
        assert!(test.design.n() > 0);
        assert!(matches!(gen_varying_coeff(50, 5, 1), Err(Error::GTooSmall { .. })));
    }

    #[test]
    fn same_seed_same_data() {
        let a = gen_varying_coeff(10, 8, 5).unwrap();
        let b = gen_varying_coeff(10, 8, 5).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = gen_gam(30, 6, 5).unwrap();
        let d = gen_gam(30, 6, 5).unwrap();
        assert_eq!(c.0, d.0);
    }
}
