use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use vgpencr::basis::{natural_cubic_basis, SplineBasisSpec};
use vgpencr::bench::{record_metrics, run_bench, summarize, BenchConfig, ReplicationRecord};
use vgpencr::cavi::{run_cavi, select_tau, CaviFit, FitSummary};
use vgpencr::grouped_model::{center, CenteredDataset, CenteringStats, GroupSpec, GroupedDesign};
use vgpencr::pencr::{cross_validate_with_fit, CvResult, PreparedProblem, SparseEstimate};
use vgpencr::predict::{make_model, predict_rows, PredictionModel};
use vgpencr::sim::{generate, SimDataset, SimTruth};

use crate::config::{LambdaSpec, RunConfig};
use crate::data::{read_json, read_matrix, write_columns, write_json, write_matrix};

/// Everything `predict` needs, plus the fit it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub groups: GroupSpec,
    /// Per raw predictor when the design was spline-expanded; empty otherwise.
    pub bases: Vec<SplineBasisSpec>,
    pub stats: CenteringStats,
    pub estimate: SparseEstimate,
    pub chosen_lambda: Option<f64>,
    pub fit: FitSummary,
    pub predictor: PredictionModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TruthFile {
    seed: u64,
    n: usize,
    size: usize,
    truth: SimTruth,
    groups: GroupSpec,
    bases: Vec<SplineBasisSpec>,
}

struct Training {
    y: DVector<f64>,
    design: GroupedDesign,
    bases: Vec<SplineBasisSpec>,
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> anyhow::Result<&'a Path> {
    path.as_deref().with_context(|| format!("missing --{what}"))
}

fn expand_columns(raw: &DMatrix<f64>, bases: &[SplineBasisSpec]) -> anyhow::Result<DMatrix<f64>> {
    ensure!(
        raw.ncols() == bases.len(),
        "expected {} raw predictor columns, found {}",
        bases.len(),
        raw.ncols()
    );
    let blocks = raw
        .column_iter()
        .zip(bases)
        .map(|(col, b)| b.evaluate_many(col.as_slice()))
        .collect::<vgpencr::Result<Vec<_>>>()?;
    let width = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(raw.nrows(), width);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(&b);
        at += b.ncols();
    }
    Ok(out)
}

fn load_training(cfg: &RunConfig) -> anyhow::Result<Training> {
    let table = read_matrix(require(&cfg.input, "input")?)?;
    ensure!(table.ncols() >= 2, "data needs a response and at least one predictor column");
    let y = table.column(0).into_owned();
    let raw = table.columns(1, table.ncols() - 1).into_owned();

    if let Some(dim) = cfg.basis_dim {
        if cfg.groups.is_some() || cfg.sizes.is_some() {
            bail!("basis_dim derives the groups; drop --groups and --sizes");
        }
        let (blocks, bases): (Vec<_>, Vec<_>) = raw
            .column_iter()
            .map(|c| natural_cubic_basis(c.as_slice(), dim))
            .collect::<vgpencr::Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let sizes: Vec<usize> = blocks.iter().map(|b| b.ncols()).collect();
        let x = expand_columns(&raw, &bases)?;
        let design = GroupedDesign::new(x, GroupSpec::new(sizes)?)?;
        return Ok(Training { y, design, bases });
    }

    let spec = match (&cfg.groups, &cfg.sizes) {
        (Some(path), _) => read_json::<GroupSpec>(path)?,
        (None, Some(sizes)) => GroupSpec::new(sizes.clone())?,
        (None, None) => bail!("missing --groups or --sizes"),
    };
    let design = GroupedDesign::new(raw, spec)?;
    Ok(Training {
        y,
        design,
        bases: Vec::new(),
    })
}

fn fit_full(cfg: &RunConfig, data: &CenteredDataset) -> anyhow::Result<CaviFit> {
    let hyper = cfg.hyper();
    hyper.validate()?;
    let fit = if cfg.tau.is_some() {
        run_cavi(data, &hyper, &cfg.cavi())?
    } else {
        let sel = select_tau(data, &hyper, &cfg.tau_grid(), &cfg.cavi())?;
        info!("selected tau = {}", sel.tau);
        sel.fit
    };
    if !fit.converged {
        warn!("CAVI did not converge in {} cycles", fit.cycles_run);
    }
    Ok(fit)
}

pub fn fit(cfg: &RunConfig) -> anyhow::Result<()> {
    let output = require(&cfg.output, "output")?;
    let mode = cfg.single_mode()?;
    let train = load_training(cfg)?;
    let data = center(&train.y, &train.design)?;
    let fit = fit_full(cfg, &data)?;

    let cv_opts = cfg.cv(mode);
    let (lambda, chosen) = match cfg.lambda.unwrap_or(LambdaSpec::Cv) {
        LambdaSpec::Fixed(l) => (l, None),
        LambdaSpec::Cv => {
            let cv = cross_validate_with_fit(&train.y, &train.design, &fit, &cv_opts)?;
            info!("cross-validated lambda = {}", cv.chosen_lambda);
            (cv.chosen_lambda, Some(cv.chosen_lambda))
        }
    };
    let estimate = PreparedProblem::new(&fit, mode, &cv_opts.pencr)?.sparsify(lambda, &cv_opts.pencr.solver)?;
    if !estimate.converged {
        warn!("group lasso stopped before reaching its tolerance");
    }
    let predictor = make_model(&estimate.beta_tilde, &data.stats)?;
    let model = ModelFile {
        groups: train.design.spec().clone(),
        bases: train.bases,
        stats: data.stats.clone(),
        estimate,
        chosen_lambda: chosen,
        fit: fit.summary(),
        predictor,
    };
    write_json(output, &model)
}

pub fn cv(cfg: &RunConfig) -> anyhow::Result<()> {
    let mode = cfg.single_mode()?;
    let train = load_training(cfg)?;
    let data = center(&train.y, &train.design)?;
    let fit = fit_full(cfg, &data)?;
    let result: CvResult = cross_validate_with_fit(&train.y, &train.design, &fit, &cfg.cv(mode))?;
    eprintln!("chosen_lambda={}", result.chosen_lambda);
    let header = ["lambda", "mean", "se"].map(String::from);
    write_columns(
        cfg.output.as_deref(),
        &header,
        &[&result.lambdas, &result.mean_cv_error, &result.se_cv_error],
    )
}

pub fn predict(cfg: &RunConfig) -> anyhow::Result<()> {
    let model: ModelFile = read_json(require(&cfg.model, "model")?)?;
    let mut raw = read_matrix(require(&cfg.input, "input")?)?;
    let expected = if model.bases.is_empty() {
        model.groups.num_predictors()
    } else {
        model.bases.len()
    };
    if raw.ncols() == expected + 1 {
        info!("dropping the leading response column of the input");
        raw = raw.remove_column(0);
    }
    let x = if model.bases.is_empty() {
        raw
    } else {
        expand_columns(&raw, &model.bases)?
    };
    let pred = predict_rows(&model.predictor, &x)?;
    write_columns(cfg.output.as_deref(), &["prediction".to_string()], &[pred.as_slice()])
}

fn dataset_table(d: &SimDataset) -> (Vec<String>, DMatrix<f64>) {
    let x = d.design.x();
    let mut table = DMatrix::zeros(x.nrows(), x.ncols() + 1);
    table.column_mut(0).copy_from(&d.y_raw);
    table.columns_mut(1, x.ncols()).copy_from(x);
    let header = std::iter::once("y".to_string())
        .chain((1..=x.ncols()).map(|j| format!("x{j}")))
        .collect();
    (header, table)
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<()> {
    let scenario = cfg.require_scenario()?;
    let (n, size) = (cfg.scenario_n(scenario), cfg.scenario_size(scenario));
    let seed = cfg.seed.unwrap_or(0);
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let (train, test) = generate(scenario, n, size, seed)?;
    for (name, d) in [("train.csv", &train), ("test.csv", &test)] {
        let (header, table) = dataset_table(d);
        write_matrix(&dir.join(name), &header, &table)?;
    }
    write_json(&dir.join("groups.json"), train.design.spec())?;
    let truth = TruthFile {
        seed,
        n,
        size,
        truth: train.truth.clone(),
        groups: train.design.spec().clone(),
        bases: train.bases.clone(),
    };
    write_json(&dir.join("truth.json"), &truth)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn results_header(records: &[ReplicationRecord]) -> Vec<String> {
    let mut h: Vec<String> = [
        "scenario",
        "size",
        "replication",
        "seed",
        "method",
        "tau",
        "lambda",
        "n_selected",
        "exact_recovery",
        "all_or_nothing",
        "youden",
        "mcc",
        "mspe",
    ]
    .map(String::from)
    .to_vec();
    let mise_cols = records.iter().map(|r| r.mise.len()).max().unwrap_or(0);
    h.extend((1..=mise_cols).map(|g| format!("mise_{g}")));
    if mise_cols > 0 {
        h.push("mise_zero".into());
    }
    h.push("runtime_seconds".into());
    h
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn write_results(path: &Path, records: &[ReplicationRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let header = results_header(records);
    let mise_cols = header.iter().filter(|h| h.starts_with("mise_") && *h != "mise_zero").count();
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            label(&r.scenario),
            r.size.to_string(),
            r.replication.to_string(),
            r.seed.to_string(),
            label(&r.method),
            r.tau.to_string(),
            r.lambda.to_string(),
            r.n_selected.to_string(),
            r.exact_recovery.to_string(),
            r.all_or_nothing.to_string(),
            opt(r.youden),
            opt(r.mcc),
            r.mspe.to_string(),
        ];
        if mise_cols > 0 {
            row.extend((0..mise_cols).map(|g| opt(r.mise.get(g).copied())));
            row.push(opt(r.mise_zero));
        }
        row.push(r.runtime_seconds.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(path: &Path, records: &[ReplicationRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["method", "metric", "mean", "se", "count", "missing"])?;
    for s in summarize(records) {
        w.write_record([
            label(&s.method),
            s.metric.clone(),
            opt(s.mean),
            opt(s.se),
            s.count.to_string(),
            s.missing.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (replication, method, metric).
fn write_plot(path: &Path, records: &[ReplicationRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["scenario", "size", "method", "replication", "metric", "value"])?;
    for r in records {
        for (metric, value) in record_metrics(r) {
            w.write_record([
                label(&r.scenario),
                r.size.to_string(),
                label(&r.method),
                r.replication.to_string(),
                metric,
                opt(value),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Returns the fraction of replications that succeeded.
pub fn bench(cfg: &RunConfig) -> anyhow::Result<f64> {
    let scenario = cfg.require_scenario()?;
    let mut bc = BenchConfig::new(
        scenario,
        cfg.scenario_n(scenario),
        cfg.scenario_size(scenario),
        cfg.replications.unwrap_or(20),
        cfg.seed.unwrap_or(0),
    );
    bc.modes = cfg.modes();
    bc.hyper = cfg.hyper();
    bc.hyper.validate()?;
    if let Some(tau) = cfg.tau {
        bc.tau_grid = vec![tau];
    } else {
        bc.tau_grid = cfg.tau_grid();
    }
    bc.cavi = cfg.cavi();
    bc.cv = cfg.cv(bc.modes[0]);
    bc.threads = cfg.threads;

    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let report = run_bench(&bc)?;
    for (rep, msg) in &report.failures {
        warn!("replication {rep} failed: {msg}");
    }
    write_results(&dir.join("results.csv"), &report.records)?;
    write_summary(&dir.join("summary.csv"), &report.records)?;
    write_plot(&dir.join("plot.csv"), &report.records)?;
    Ok(report.success_rate(bc.replications))
}
