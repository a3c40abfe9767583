//! Penalized credible region sparsification of a variational fit.
//!
//! The Gaussian variational posterior `N(μ, Σ)` defines elliptical credible
//! regions; the sparsest member of such a region, in Lagrangian form, is
//!
//! ```text
//! minimize  (β − μ)ᵀ Σ⁻¹ (β − μ) + λ Σ_g √p_g ‖β_g‖ / û_g²
//! ```
//!
//! Substituting `β = Dβ*` with `D = BlockDiag(û_g² I)` gives a plain group
//! lasso in `β*` with design `LᵀD` and response `Lᵀμ`, where `L Lᵀ = Σ⁻¹`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavi::{run_cavi, CaviFit, CaviOptions, HyperParams};
use crate::error::{Error, Result};
use crate::group_lasso::{
    lambda_grid, lambda_max, solve, solve_on_grid, LassoSolution, SolverOptions, WorkingProblem,
};
use crate::grouped_model::{center, GroupSpec, GroupedDesign};
use crate::predict::{make_model, predict_rows};

pub const SCALE_FLOOR: f64 = 1e-8;
/// Default smallest `λ/λ_max` of the cross-validation grid.
pub const CV_LAMBDA_MIN_RATIO: f64 = 1e-5;

/// How `û_g ≈ E‖β_g‖` is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMode {
    /// `sqrt(‖μ_g‖² + tr Σ_gg)`.
    SecondMoment,
    /// `‖μ_g‖`.
    MeanNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Grouped,
    /// Every coordinate penalized on its own.
    Nongrouped,
}

impl Mode {
    pub fn default_scale(self) -> ScaleMode {
        match self {
            Mode::Grouped => ScaleMode::SecondMoment,
            Mode::Nongrouped => ScaleMode::MeanNorm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PencrOptions {
    /// `None` picks [`Mode::default_scale`].
    pub scale_mode: Option<ScaleMode>,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseEstimate {
    pub beta_tilde: Vec<f64>,
    /// Selected groups of the fit's grouping, 0-based in memory and 1-based on disk.
    #[serde(with = "one_based")]
    pub selected: Vec<usize>,
    pub lambda: f64,
    /// One scale per penalized block: per group, or per coordinate in nongrouped mode.
    pub u_hat: Vec<f64>,
    pub mode: Mode,
    pub scale_mode: ScaleMode,
    pub converged: bool,
}

mod one_based {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|g| g + 1).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        let raw = Vec::<usize>::deserialize(d)?;
        raw.into_iter()
            .map(|g| {
                g.checked_sub(1)
                    .ok_or_else(|| serde::de::Error::custom("group indices are 1-based"))
            })
            .collect()
    }
}

/// `û` for the blocks of `spec`, which must tile the same `p` columns as the fit.
pub fn compute_scales(fit: &CaviFit, spec: &GroupSpec, mode: ScaleMode) -> Vec<f64> {
    let mu = &fit.state.mu_beta;
    let traces: Vec<f64> = if mode == ScaleMode::MeanNorm {
        vec![0.0; spec.num_groups()]
    } else if spec == &fit.spec {
        fit.state.covariance_summary().group_traces.clone()
    } else {
        let diag = fit.state.precision().inverse_diagonal();
        spec.ranges().map(|r| diag.rows(r.start, r.len()).sum()).collect()
    };
    spec.ranges()
        .zip(traces)
        .map(|(r, t)| {
            let sq = mu.rows(r.start, r.len()).norm_squared() + t;
            sq.sqrt().max(SCALE_FLOOR)
        })
        .collect()
}

/// Per-group `û_g` under the fit's own grouping.
pub fn compute_group_scales(fit: &CaviFit, mode: ScaleMode) -> Vec<f64> {
    compute_scales(fit, &fit.spec, mode)
}

/// `X* = LᵀD`, `Y* = Lᵀμ` for blocks `spec` and scales `u_hat`.
pub fn build_working_problem(
    fit: &CaviFit,
    spec: &GroupSpec,
    u_hat: &[f64],
) -> Result<WorkingProblem> {
    let p = fit.state.mu_beta.len();
    if spec.num_predictors() != p {
        return Err(Error::SizeMismatch {
            expected: p,
            actual: spec.num_predictors(),
        });
    }
    if u_hat.len() != spec.num_groups() {
        return Err(Error::LengthMismatch {
            expected: spec.num_groups(),
            actual: u_hat.len(),
        });
    }
    let factor = fit.state.precision();
    let lt = factor.l().transpose();
    let d = diag_scaling(spec, u_hat);
    let mut xstar: DMatrix<f64> = lt;
    for (j, mut col) in xstar.column_iter_mut().enumerate() {
        col *= d[j];
    }
    let ystar = factor.lt_mul(&fit.state.mu_beta);
    if xstar.iter().chain(ystar.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("working problem is not finite".into()));
    }
    WorkingProblem::new(xstar, ystar, spec.clone())
}

fn diag_scaling(spec: &GroupSpec, u_hat: &[f64]) -> DVector<f64> {
    let sq: Vec<f64> = u_hat.iter().map(|u| u * u).collect();
    spec.expand(&sq)
}

/// A fit reduced to its group lasso, ready to be solved at any `λ`.
#[derive(Debug, Clone)]
pub struct PreparedProblem {
    pub problem: WorkingProblem,
    pub u_hat: Vec<f64>,
    pub mode: Mode,
    pub scale_mode: ScaleMode,
    fit_spec: GroupSpec,
    d: DVector<f64>,
}

impl PreparedProblem {
    pub fn new(fit: &CaviFit, mode: Mode, options: &PencrOptions) -> Result<Self> {
        let scale_mode = options.scale_mode.unwrap_or(mode.default_scale());
        let spec = match mode {
            Mode::Grouped => fit.spec.clone(),
            Mode::Nongrouped => GroupSpec::singletons(fit.spec.num_predictors())?,
        };
        let u_hat = compute_scales(fit, &spec, scale_mode);
        let problem = build_working_problem(fit, &spec, &u_hat)?;
        let d = diag_scaling(&spec, &u_hat);
        Ok(Self {
            problem,
            u_hat,
            mode,
            scale_mode,
            fit_spec: fit.spec.clone(),
            d,
        })
    }

    pub fn lambda_max(&self) -> f64 {
        lambda_max(&self.problem)
    }

    /// Map a working-problem solution back to `β̃ = Dβ*`.
    pub fn estimate(&self, solution: &LassoSolution) -> SparseEstimate {
        let beta = self.d.component_mul(&solution.beta_star);
        let selected = self
            .fit_spec
            .ranges()
            .enumerate()
            .filter(|(_, r)| beta.rows(r.start, r.len()).iter().any(|&v| v != 0.0))
            .map(|(g, _)| g)
            .collect();
        SparseEstimate {
            beta_tilde: beta.as_slice().to_vec(),
            selected,
            lambda: solution.lambda,
            u_hat: self.u_hat.clone(),
            mode: self.mode,
            scale_mode: self.scale_mode,
            converged: solution.converged,
        }
    }

    pub fn sparsify(&self, lambda: f64, solver: &SolverOptions) -> Result<SparseEstimate> {
        Ok(self.estimate(&solve(&self.problem, lambda, None, solver)?))
    }

    /// Estimates along `lambdas`, warm-started in the given order.
    pub fn path(&self, lambdas: &[f64], solver: &SolverOptions) -> Result<Vec<SparseEstimate>> {
        let path = solve_on_grid(&self.problem, lambdas, solver)?;
        Ok(path.solutions.iter().map(|s| self.estimate(s)).collect())
    }
}

pub fn sparsify(fit: &CaviFit, lambda: f64, options: &PencrOptions) -> Result<SparseEstimate> {
    if !(lambda >= 0.0) {
        return Err(Error::NegativeLambda(lambda));
    }
    PreparedProblem::new(fit, Mode::Grouped, options)?.sparsify(lambda, &options.solver)
}

pub fn sparsify_nongrouped(
    fit: &CaviFit,
    lambda: f64,
    options: &PencrOptions,
) -> Result<SparseEstimate> {
    if !(lambda >= 0.0) {
        return Err(Error::NegativeLambda(lambda));
    }
    PreparedProblem::new(fit, Mode::Nongrouped, options)?.sparsify(lambda, &options.solver)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvRule {
    #[default]
    Min,
    /// Largest `λ` whose mean error is within one standard error of the minimum.
    OneSe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub rule: CvRule,
    pub seed: u64,
    pub mode: Mode,
    pub pencr: PencrOptions,
    pub cavi: CaviOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            n_lambda: 100,
            lambda_min_ratio: CV_LAMBDA_MIN_RATIO,
            rule: CvRule::Min,
            seed: 0,
            mode: Mode::Grouped,
            pencr: PencrOptions::default(),
            cavi: CaviOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    pub mean_cv_error: Vec<f64>,
    pub se_cv_error: Vec<f64>,
    pub chosen_lambda: f64,
    pub rule: CvRule,
    pub folds_used: usize,
}

impl CvResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,mean,se\n");
        for ((l, m), s) in self
            .lambdas
            .iter()
            .zip(&self.mean_cv_error)
            .zip(&self.se_cv_error)
        {
            out.push_str(&format!("{l},{m},{s}\n"));
        }
        out
    }
}

/// Seeded shuffle of `0..n` dealt round-robin into `folds` held-out sets.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (i, j) in idx.into_iter().enumerate() {
        out[i % folds].push(j);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// Fit on the full data with `hyper`, then cross-validate `λ`.
pub fn cross_validate_lambda(
    raw_y: &DVector<f64>,
    design: &GroupedDesign,
    hyper: &HyperParams,
    options: &CvOptions,
) -> Result<CvResult> {
    let data = center(raw_y, design)?;
    let fit = run_cavi(&data, hyper, &options.cavi)?;
    cross_validate_with_fit(raw_y, design, &fit, options)
}

/// Cross-validate `λ` on a grid anchored at the `λ_max` of `full_fit`. Each
/// training fold is refitted with `full_fit.hyper`.
pub fn cross_validate_with_fit(
    raw_y: &DVector<f64>,
    design: &GroupedDesign,
    full_fit: &CaviFit,
    options: &CvOptions,
) -> Result<CvResult> {
    let n = design.n();
    if raw_y.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: raw_y.len(),
        });
    }
    if options.folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {}",
            options.folds
        )));
    }
    if n < 2 * options.folds {
        return Err(Error::FoldTooSmall {
            fold: options.folds - 1,
            size: n / options.folds,
        });
    }
    if options.n_lambda < 2 {
        return Err(Error::InvalidArgument("n_lambda must be at least 2".into()));
    }

    let full = PreparedProblem::new(full_fit, options.mode, &options.pencr)?;
    let lmax = full.lambda_max();
    let lambdas = lambda_grid(
        if lmax > 0.0 { lmax } else { 1.0 },
        options.n_lambda,
        options.lambda_min_ratio,
    );

    let folds = fold_assignment(n, options.folds, options.seed);
    let per_fold: Vec<Result<Vec<f64>>> = folds
        .par_iter()
        .map(|held_out| fold_errors(raw_y, design, full_fit, held_out, &lambdas, options))
        .collect();

    let mut curves = Vec::new();
    let mut first_err = None;
    for (k, res) in per_fold.into_iter().enumerate() {
        match res {
            Ok(c) => curves.push(c),
            Err(e) => {
                warn!("cross-validation fold {} skipped: {e}", k + 1);
                first_err.get_or_insert(e);
            }
        }
    }
    let failed = options.folds - curves.len();
    if 2 * failed > options.folds || curves.is_empty() {
        return Err(first_err.unwrap_or(Error::AllFitsFailed(options.folds)));
    }

    let k = curves.len() as f64;
    let mut mean = vec![0.0; lambdas.len()];
    let mut se = vec![0.0; lambdas.len()];
    for i in 0..lambdas.len() {
        let m = curves.iter().map(|c| c[i]).sum::<f64>() / k;
        let var = if curves.len() > 1 {
            curves.iter().map(|c| (c[i] - m).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        mean[i] = m;
        se[i] = (var / k).sqrt();
    }

    let best = (0..mean.len()).fold(0, |b, i| if mean[i] < mean[b] { i } else { b });
    let chosen = match options.rule {
        CvRule::Min => best,
        CvRule::OneSe => {
            let cutoff = mean[best] + se[best];
            (0..mean.len()).find(|&i| mean[i] <= cutoff).unwrap_or(best)
        }
    };

    Ok(CvResult {
        chosen_lambda: lambdas[chosen],
        lambdas,
        mean_cv_error: mean,
        se_cv_error: se,
        rule: options.rule,
        folds_used: curves.len(),
    })
}

/// Held-out MSPE at every `λ` for one fold.
fn fold_errors(
    raw_y: &DVector<f64>,
    design: &GroupedDesign,
    full_fit: &CaviFit,
    held_out: &[usize],
    lambdas: &[f64],
    options: &CvOptions,
) -> Result<Vec<f64>> {
    let mut is_test = vec![false; design.n()];
    for &i in held_out {
        is_test[i] = true;
    }
    let train: Vec<usize> = (0..design.n()).filter(|&i| !is_test[i]).collect();

    let train_design = design.select_rows(&train)?;
    let train_y = DVector::from_iterator(train.len(), train.iter().map(|&i| raw_y[i]));
    let data = center(&train_y, &train_design)?;
    let fit = run_cavi(&data, &full_fit.hyper, &options.cavi)?;

    let prepared = PreparedProblem::new(&fit, options.mode, &options.pencr)?;
    let estimates = prepared.path(lambdas, &options.pencr.solver)?;

    let test_x = design.x().select_rows(held_out.iter());
    let test_y = DVector::from_iterator(held_out.len(), held_out.iter().map(|&i| raw_y[i]));
    let mut errors = Vec::with_capacity(lambdas.len());
    for est in &estimates {
        let model = make_model(&est.beta_tilde, &data.stats)?;
        let pred = predict_rows(&model, &test_x)?;
        let mse = (pred - &test_y).norm_squared() / held_out.len() as f64;
        if !mse.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite held-out error at lambda = {}",
                est.lambda
            )));
        }
        errors.push(mse);
    }
    Ok(errors)
}
