//! Replication harness: simulate, fit, cross-validate, sparsify and score.

use std::time::Instant;

use log::warn;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavi::{select_tau, CaviFit, CaviOptions, HyperParams, DEFAULT_TAU_GRID};
use crate::error::{Error, Result};
use crate::grouped_model::center;
use crate::metrics::{confusion, mcc, mise, mspe, youden, MISE_DOMAIN, MISE_GRID};
use crate::pencr::{cross_validate_with_fit, CvOptions, Mode, PreparedProblem, SparseEstimate};
use crate::predict::{make_model, predict_rows};
use crate::sim::{generate, vc_coefficient, Scenario, SimDataset};

/// Coefficient functions reported individually for the varying-coefficient design.
pub const VC_REPORTED: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub scenario: Scenario,
    /// Training rows, or subjects for the varying-coefficient design.
    pub n: usize,
    /// `G` for the additive and varying-coefficient designs, `K` for the categorical one.
    pub size: usize,
    pub replications: usize,
    pub seed_base: u64,
    pub modes: Vec<Mode>,
    pub hyper: HyperParams,
    pub tau_grid: Vec<f64>,
    pub cavi: CaviOptions,
    pub cv: CvOptions,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl BenchConfig {
    pub fn new(scenario: Scenario, n: usize, size: usize, replications: usize, seed_base: u64) -> Self {
        Self {
            scenario,
            n,
            size,
            replications,
            seed_base,
            modes: vec![Mode::Grouped],
            hyper: HyperParams::default(),
            tau_grid: DEFAULT_TAU_GRID.to_vec(),
            cavi: CaviOptions::default(),
            cv: CvOptions::default(),
            threads: None,
        }
    }
}

/// One method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub scenario: Scenario,
    pub size: usize,
    pub replication: usize,
    pub seed: u64,
    pub method: Mode,
    pub tau: f64,
    pub lambda: f64,
    pub n_selected: usize,
    pub exact_recovery: bool,
    pub all_or_nothing: bool,
    pub youden: Option<f64>,
    pub mcc: Option<f64>,
    pub mspe: f64,
    /// `MISE_g` for `g = 1..=6`; empty outside the varying-coefficient design.
    pub mise: Vec<f64>,
    /// Mean MISE over the truly-zero coefficient functions.
    pub mise_zero: Option<f64>,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub records: Vec<ReplicationRecord>,
    /// `(replication, message)` for replications that failed outright.
    pub failures: Vec<(usize, String)>,
}

impl BenchReport {
    pub fn success_rate(&self, replications: usize) -> f64 {
        let failed = self.failures.len();
        (replications - failed) as f64 / replications as f64
    }
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    if config.replications == 0 {
        return Err(Error::InvalidArgument("replications must be at least 1".into()));
    }
    if config.modes.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    let work = || {
        (0..config.replications)
            .into_par_iter()
            .map(|r| (r, run_replication(config, r)))
            .collect::<Vec<_>>()
    };
    let results = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(mut recs) => records.append(&mut recs),
            Err(e) => {
                warn!("replication {r} failed: {e}");
                failures.push((r, e.to_string()));
            }
        }
    }
    Ok(BenchReport { records, failures })
}

/// Simulate replication `index` and score every requested method on it.
pub fn run_replication(config: &BenchConfig, index: usize) -> Result<Vec<ReplicationRecord>> {
    let seed = config.seed_base.wrapping_add(index as u64);
    let (train, test) = generate(config.scenario, config.n, config.size, seed)?;

    let start = Instant::now();
    let data = center(&train.y_raw, &train.design)?;
    let selection = select_tau(&data, &config.hyper, &config.tau_grid, &config.cavi)?;
    let fit_seconds = start.elapsed().as_secs_f64();

    config
        .modes
        .iter()
        .map(|&mode| {
            let start = Instant::now();
            let cv = CvOptions {
                mode,
                seed,
                cavi: config.cavi,
                ..config.cv
            };
            let est = fit_sparse(&train, &selection.fit, &cv)?;
            let runtime = fit_seconds + start.elapsed().as_secs_f64();
            score(config, index, seed, &train, &test, &selection.fit, &est, runtime)
        })
        .collect()
}

/// Cross-validate `λ` and sparsify the full-data fit at the chosen value.
pub fn fit_sparse(train: &SimDataset, fit: &CaviFit, cv: &CvOptions) -> Result<SparseEstimate> {
    let cv_result = cross_validate_with_fit(&train.y_raw, &train.design, fit, cv)?;
    PreparedProblem::new(fit, cv.mode, &cv.pencr)?.sparsify(cv_result.chosen_lambda, &cv.pencr.solver)
}

#[allow(clippy::too_many_arguments)]
fn score(
    config: &BenchConfig,
    index: usize,
    seed: u64,
    train: &SimDataset,
    test: &SimDataset,
    fit: &CaviFit,
    est: &SparseEstimate,
    runtime: f64,
) -> Result<ReplicationRecord> {
    let spec = train.design.spec();
    let groups = spec.num_groups();
    let selected: Vec<usize> = est.selected.iter().map(|g| g + 1).collect();
    let truth = &train.truth.active_groups;
    let counts = confusion(&selected, truth, groups)?;

    let stats = center(&train.y_raw, &train.design)?.stats;
    let model = make_model(&est.beta_tilde, &stats)?;
    let pred = predict_rows(&model, test.design.x())?;
    let err = mspe(pred.as_slice(), test.y_raw.as_slice())?;

    let beta = DVector::from_column_slice(&est.beta_tilde);
    let all_or_nothing = spec.ranges().all(|r| {
        let block = beta.rows(r.start, r.len());
        block.iter().all(|&v| v == 0.0) || block.iter().all(|&v| v != 0.0)
    });

    let (mise_vals, mise_zero) = if config.scenario == Scenario::Vc {
        let basis = &train.bases[0];
        let mise_of = |g: usize| -> Result<f64> {
            let r = spec.range(g - 1);
            let coef = beta.rows(r.start, r.len()).into_owned();
            let mut failure = None;
            let v = mise(
                |t| match basis.evaluate(t) {
                    Ok(b) => b.iter().zip(coef.iter()).map(|(b, c)| b * c).sum(),
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                },
                |t| vc_coefficient(g, t),
                MISE_DOMAIN,
                MISE_GRID,
            );
            failure.map_or(Ok(v), Err)
        };
        let reported = (1..=VC_REPORTED).map(mise_of).collect::<Result<Vec<_>>>()?;
        let zeros = (VC_REPORTED + 1..=groups).map(mise_of).collect::<Result<Vec<_>>>()?;
        let pooled = (!zeros.is_empty()).then(|| zeros.iter().sum::<f64>() / zeros.len() as f64);
        (reported, pooled)
    } else {
        (Vec::new(), None)
    };

    Ok(ReplicationRecord {
        scenario: config.scenario,
        size: config.size,
        replication: index,
        seed,
        method: est.mode,
        tau: fit.hyper.tau,
        lambda: est.lambda,
        n_selected: selected.len(),
        exact_recovery: counts.fp == 0 && counts.fn_ == 0,
        all_or_nothing,
        youden: youden(&counts),
        mcc: mcc(&counts),
        mspe: err,
        mise: mise_vals,
        mise_zero,
        runtime_seconds: runtime,
    })
}

/// Mean and standard error of one metric over the replications where it is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub method: Mode,
    pub metric: String,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub count: usize,
    pub missing: usize,
}

/// `(metric name, value)` pairs of a record, in a fixed order.
pub fn record_metrics(r: &ReplicationRecord) -> Vec<(String, Option<f64>)> {
    let mut out = vec![
        ("youden".to_string(), r.youden),
        ("mcc".to_string(), r.mcc),
        ("mspe".to_string(), Some(r.mspe)),
        ("runtime_seconds".to_string(), Some(r.runtime_seconds)),
    ];
    for (g, v) in r.mise.iter().enumerate() {
        out.push((format!("mise_{}", g + 1), Some(*v)));
    }
    if !r.mise.is_empty() {
        out.push(("mise_zero".to_string(), r.mise_zero));
    }
    out
}

pub fn summarize(records: &[ReplicationRecord]) -> Vec<MetricSummary> {
    let mut methods: Vec<Mode> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut out = Vec::new();
    for method in methods {
        let rows: Vec<&ReplicationRecord> = records.iter().filter(|r| r.method == method).collect();
        let names: Vec<String> = record_metrics(rows[0]).into_iter().map(|(n, _)| n).collect();
        for (m, name) in names.into_iter().enumerate() {
            let values: Vec<Option<f64>> = rows
                .iter()
                .map(|r| record_metrics(r).get(m).and_then(|(_, v)| *v))
                .collect();
            let present: Vec<f64> = values.iter().flatten().copied().collect();
            let count = present.len();
            let (mean, se) = if count == 0 {
                (None, None)
            } else {
                let mean = present.iter().sum::<f64>() / count as f64;
                let se = if count > 1 {
                    let var = present.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                        / (count - 1) as f64;
                    Some((var / count as f64).sqrt())
                } else {
                    None
                };
                (Some(mean), se)
            };
            out.push(MetricSummary {
                method,
                metric: name,
                mean,
                se,
                count,
                missing: values.len() - count,
            });
        }
    }
    out
}
