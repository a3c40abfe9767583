//! Coordinate-ascent variational inference for the grouped horseshoe model.
//!
//! The mean-field family is
//!
//! ```text
//! q(β) = N(μ, Σ),  q(σ²) = InvGa(r + (n+p)/2, s_σ²),
//! q(b_g) = Ga((p_g+1)/2, s_bg),  q(c_g) = Exp(s_cg)
//! ```
//!
//! and one cycle applies the block updates in the order of the published
//! algorithm: local scales, then the mean (paired with the previous cycle's
//! covariance), then the noise rate, then the covariance. The covariance is
//! never formed; the state keeps the Cholesky factor of the precision
//! `Σ⁻¹ = m_{1/σ²} (XᵀX + M_τ)`.

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grouped_model::{CenteredDataset, GroupSpec};
use crate::linalg::PrecisionFactor;

/// Relative ELBO drop that aborts a fit as an update-order bug.
pub const DIVERGENCE_REL_TOL: f64 = 1e-6;
const PARAM_TOL_FACTOR: f64 = 10.0;

pub const DEFAULT_TAU_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Inverse-gamma shape of the noise variance prior.
    pub r: f64,
    /// Inverse-gamma rate of the noise variance prior.
    pub s: f64,
    /// Global scale, held fixed within a fit.
    pub tau: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            r: 0.01,
            s: 0.01,
            tau: 1.0,
        }
    }
}

impl HyperParams {
    pub fn with_tau(self, tau: f64) -> Self {
        Self { tau, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r", self.r), ("s", self.s), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "hyperparameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Stopping rule for [`run_cavi`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaviOptions {
    pub min_cycles: usize,
    pub max_cycles: usize,
    pub rel_tol: f64,
}

impl Default for CaviOptions {
    fn default() -> Self {
        Self {
            min_cycles: 2,
            max_cycles: 500,
            rel_tol: 1e-4,
        }
    }
}

/// Moments of `q(β)` that every update needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSummary {
    /// `tr(Σ_gg)` per group.
    pub group_traces: Vec<f64>,
    /// `tr(XᵀX Σ)`.
    pub xtx_trace: f64,
    /// `log |Σ|`.
    pub log_det: f64,
}

/// All variational parameters after some number of cycles.
#[derive(Debug, Clone)]
pub struct CaviState {
    pub mu_beta: DVector<f64>,
    prec: PrecisionFactor,
    pub m_b: Vec<f64>,
    pub m_inv_sigma2: f64,
    pub s_sigma2: f64,
    pub s_b: Vec<f64>,
    pub s_c: Vec<f64>,
    pub m_c: Vec<f64>,
    pub cycle: usize,
    pub elbo_trace: Vec<f64>,
    summary: CovarianceSummary,
}

impl CaviState {
    /// Lower Cholesky factor `L` with `L Lᵀ = Σ⁻¹`.
    pub fn prec_factor(&self) -> DMatrix<f64> {
        self.prec.l()
    }

    pub fn precision(&self) -> &PrecisionFactor {
        &self.prec
    }

    pub fn covariance_summary(&self) -> &CovarianceSummary {
        &self.summary
    }

    /// `E_q ‖β_g‖² = ‖μ_g‖² + tr(Σ_gg)` per group.
    pub fn group_second_moments(&self, spec: &GroupSpec) -> Vec<f64> {
        group_second_moments(&self.mu_beta, &self.summary.group_traces, spec)
    }

    pub fn last_elbo(&self) -> Option<f64> {
        self.elbo_trace.last().copied()
    }
}

#[derive(Debug, Clone)]
pub struct CaviFit {
    pub state: CaviState,
    pub hyper: HyperParams,
    pub spec: GroupSpec,
    pub converged: bool,
    pub cycles_run: usize,
}

impl CaviFit {
    pub fn summary(&self) -> FitSummary {
        FitSummary {
            mu_beta: self.state.mu_beta.as_slice().to_vec(),
            m_b: self.state.m_b.clone(),
            m_inv_sigma2: self.state.m_inv_sigma2,
            elbo_trace: self.state.elbo_trace.clone(),
            cycles_run: self.cycles_run,
            converged: self.converged,
            tau: self.hyper.tau,
        }
    }
}

/// Serializable digest of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub mu_beta: Vec<f64>,
    pub m_b: Vec<f64>,
    pub m_inv_sigma2: f64,
    pub elbo_trace: Vec<f64>,
    pub cycles_run: usize,
    pub converged: bool,
    pub tau: f64,
}

/// Cross products reused by every cycle.
#[derive(Debug, Clone)]
pub struct Gram {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
}

impl Gram {
    pub fn new(data: &CenteredDataset) -> Self {
        let x = data.x();
        Self {
            xtx: x.tr_mul(x),
            xty: x.tr_mul(&data.y),
        }
    }
}

fn group_second_moments(mu: &DVector<f64>, traces: &[f64], spec: &GroupSpec) -> Vec<f64> {
    spec.ranges()
        .zip(traces)
        .map(|(r, &t)| mu.rows(r.start, r.len()).norm_squared() + t)
        .collect()
}

fn noise_shape(data: &CenteredDataset, hyper: &HyperParams) -> f64 {
    hyper.r + (data.n() + data.p()) as f64 / 2.0
}

/// Factor `m_{1/σ²}(XᵀX + M_τ)` and summarize its inverse.
fn factor_precision(
    gram: &Gram,
    spec: &GroupSpec,
    m_b: &[f64],
    m_inv_sigma2: f64,
    tau: f64,
) -> Result<(PrecisionFactor, CovarianceSummary)> {
    let mut a = gram.xtx.clone();
    for (g, r) in spec.ranges().enumerate() {
        let shrink = m_b[g] / tau;
        for j in r {
            a[(j, j)] += shrink;
        }
    }
    a *= m_inv_sigma2;
    let prec = PrecisionFactor::new(a)?;
    let diag = prec.inverse_diagonal();
    let group_traces: Vec<f64> = spec
        .ranges()
        .map(|r| diag.rows(r.start, r.len()).sum())
        .collect();
    // tr(XᵀXΣ) = (p − tr(M_τ A⁻¹)) / m_{1/σ²} with A = XᵀX + M_τ and Σ = A⁻¹/m_{1/σ²}.
    let p = spec.num_predictors() as f64;
    let m_trace: f64 = group_traces
        .iter()
        .zip(m_b)
        .map(|(&t, &mb)| mb / tau * t * m_inv_sigma2)
        .sum();
    let xtx_trace = ((p - m_trace) / m_inv_sigma2).max(0.0);
    let summary = CovarianceSummary {
        group_traces,
        xtx_trace,
        log_det: prec.log_det_inverse(),
    };
    Ok((prec, summary))
}

fn residual_ss(data: &CenteredDataset, mu: &DVector<f64>) -> f64 {
    (&data.y - data.x() * mu).norm_squared()
}

fn sample_variance(y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let m = y.mean();
    y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Starting point: `m_b = 1`, ridge-regularized least squares mean, and a
/// residual-based noise precision.
pub fn init_cavi(data: &CenteredDataset, hyper: &HyperParams) -> Result<CaviState> {
    init_with_gram(data, &Gram::new(data), hyper)
}

fn init_with_gram(data: &CenteredDataset, gram: &Gram, hyper: &HyperParams) -> Result<CaviState> {
    hyper.validate()?;
    let spec = data.spec();
    let (n, p, groups) = (data.n(), data.p(), spec.num_groups());

    let trace = gram.xtx.trace();
    let eps = if trace > 0.0 { 1e-6 * trace / p as f64 } else { 1e-6 };
    let mut ridge = gram.xtx.clone();
    for j in 0..p {
        ridge[(j, j)] += eps;
    }
    let mu_beta = PrecisionFactor::new(ridge)?.solve(&gram.xty);

    let rss = residual_ss(data, &mu_beta);
    let y_scale = data.y.norm_squared().max(1.0);
    let m_inv_sigma2 = if n > p + 1 && rss > 1e-12 * y_scale {
        (n - p) as f64 / rss
    } else {
        1.0 / sample_variance(&data.y).max(1e-12)
    };

    let m_b = vec![1.0; groups];
    let s_b: Vec<f64> = spec.sizes().iter().map(|&pg| (pg as f64 + 1.0) / 2.0).collect();
    let s_c = vec![2.0; groups];
    let m_c = vec![0.5; groups];
    let (prec, summary) = factor_precision(gram, spec, &m_b, m_inv_sigma2, hyper.tau)?;

    Ok(CaviState {
        mu_beta,
        prec,
        m_b,
        m_inv_sigma2,
        s_sigma2: noise_shape(data, hyper) / m_inv_sigma2,
        s_b,
        s_c,
        m_c,
        cycle: 0,
        elbo_trace: Vec::new(),
        summary,
    })
}

/// One block cycle; appends the new ELBO to the trace.
pub fn cavi_cycle(
    state: &CaviState,
    data: &CenteredDataset,
    hyper: &HyperParams,
) -> Result<CaviState> {
    cycle_with_gram(state, data, &Gram::new(data), hyper)
}

fn check_dims(state: &CaviState, data: &CenteredDataset) -> Result<()> {
    if state.mu_beta.len() != data.p() {
        return Err(Error::LengthMismatch {
            expected: data.p(),
            actual: state.mu_beta.len(),
        });
    }
    if state.m_b.len() != data.spec().num_groups() {
        return Err(Error::LengthMismatch {
            expected: data.spec().num_groups(),
            actual: state.m_b.len(),
        });
    }
    Ok(())
}

fn cycle_with_gram(
    state: &CaviState,
    data: &CenteredDataset,
    gram: &Gram,
    hyper: &HyperParams,
) -> Result<CaviState> {
    check_dims(state, data)?;
    let spec = data.spec();
    let tau = hyper.tau;
    let m_sig_old = state.m_inv_sigma2;
    let second = state.group_second_moments(spec);

    // q(c) then q(b), from the previous cycle's moments.
    let mut s_b = Vec::with_capacity(spec.num_groups());
    let mut m_b = Vec::with_capacity(spec.num_groups());
    for (g, &pg) in spec.sizes().iter().enumerate() {
        let rate = 1.0 / (1.0 + state.m_b[g]) + m_sig_old * second[g] / (2.0 * tau);
        s_b.push(rate);
        m_b.push((pg as f64 + 1.0) / 2.0 / rate);
    }

    // Mean paired with the previous covariance: m_{1/σ²} Σ Xᵀy = (XᵀX + M_τ,old)⁻¹ Xᵀy.
    let mu_beta = state.prec.solve(&(&gram.xty * m_sig_old));

    // Noise rate from the previous mean, covariance and local scales.
    let shrink_term: f64 = second
        .iter()
        .zip(&state.m_b)
        .map(|(&e, &mb)| mb / tau * e)
        .sum();
    let s_sigma2 = hyper.s
        + 0.5 * (shrink_term + state.summary.xtx_trace + residual_ss(data, &state.mu_beta));
    let m_inv_sigma2 = noise_shape(data, hyper) / s_sigma2;

    let (prec, summary) = factor_precision(gram, spec, &m_b, m_inv_sigma2, tau)?;

    let s_c: Vec<f64> = m_b.iter().map(|mb| 1.0 + mb).collect();
    let m_c: Vec<f64> = s_c.iter().map(|sc| 1.0 / sc).collect();

    let mut next = CaviState {
        mu_beta,
        prec,
        m_b,
        m_inv_sigma2,
        s_sigma2,
        s_b,
        s_c,
        m_c,
        cycle: state.cycle + 1,
        elbo_trace: state.elbo_trace.clone(),
        summary,
    };
    let value = elbo(&next, data, hyper);
    if !value.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "non-finite ELBO at cycle {}",
            next.cycle
        )));
    }
    if let Some(prev) = state.last_elbo() {
        if value < prev - DIVERGENCE_REL_TOL * prev.abs() {
            return Err(Error::DivergenceDetected {
                cycle: next.cycle,
                previous: prev,
                current: value,
            });
        }
    }
    next.elbo_trace.push(value);
    Ok(next)
}

/// Evidence lower bound of the current variational state, including every
/// additive constant so values are comparable across `τ`.
pub fn elbo(state: &CaviState, data: &CenteredDataset, hyper: &HyperParams) -> f64 {
    let spec = data.spec();
    let (n, p, groups) = (data.n() as f64, data.p() as f64, spec.num_groups() as f64);
    let (r, s, tau) = (hyper.r, hyper.s, hyper.tau);
    let r_sig = noise_shape(data, hyper);
    let m_sig = state.m_inv_sigma2;

    let second = state.group_second_moments(spec);
    let shrink: f64 = second.iter().zip(&state.m_b).map(|(e, mb)| mb * e).sum();
    let fit = residual_ss(data, &state.mu_beta) + state.summary.xtx_trace;

    let mut total = -n / 2.0 * (2.0 * PI).ln() - p / 2.0 * tau.ln()
        - m_sig * (shrink / (2.0 * tau) + 0.5 * fit + s)
        - 2.0 * groups * ln_gamma(0.5);
    for (g, &pg) in spec.sizes().iter().enumerate() {
        let r_b = (pg as f64 + 1.0) / 2.0;
        total += ln_gamma(r_b)
            - state.s_c[g].ln()
            - r_b * (state.s_b[g].ln() - 1.0)
            - (state.m_b[g] + 1.0) * state.m_c[g];
    }
    total += r * s.ln() - ln_gamma(r) + p / 2.0 * ((2.0 * PI).ln() + 1.0)
        + 0.5 * state.summary.log_det
        - r_sig * state.s_sigma2.ln()
        + ln_gamma(r_sig)
        + r_sig;
    total
}

/// Largest relative move of the mean (against its largest entry), the local
/// scales and the noise precision between two states.
pub fn parameter_change(a: &CaviState, b: &CaviState) -> f64 {
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE);
    let scale = a.mu_beta.amax().max(b.mu_beta.amax());
    let mean = if scale > 0.0 {
        (&a.mu_beta - &b.mu_beta).amax() / scale
    } else {
        0.0
    };
    a.m_b
        .iter()
        .zip(&b.m_b)
        .map(|(x, y)| rel(*x, *y))
        .fold(mean.max(rel(a.m_inv_sigma2, b.m_inv_sigma2)), f64::max)
}

/// Iterate cycles until the relative ELBO change drops below `rel_tol` and no
/// parameter moves by more than `10·rel_tol` (after at least `min_cycles`),
/// or `max_cycles` is reached.
pub fn run_cavi(
    data: &CenteredDataset,
    hyper: &HyperParams,
    options: &CaviOptions,
) -> Result<CaviFit> {
    if options.min_cycles < 2 {
        return Err(Error::InvalidArgument(format!(
            "min_cycles must be at least 2, got {}",
            options.min_cycles
        )));
    }
    if !(options.rel_tol > 0.0) || options.max_cycles < options.min_cycles {
        return Err(Error::InvalidArgument(
            "need rel_tol > 0 and max_cycles >= min_cycles".into(),
        ));
    }
    let gram = Gram::new(data);
    let mut state = init_with_gram(data, &gram, hyper)?;
    let mut converged = false;
    while state.cycle < options.max_cycles {
        let previous = state;
        state = cycle_with_gram(&previous, data, &gram, hyper)?;
        let trace = &state.elbo_trace;
        if state.cycle >= options.min_cycles && trace.len() >= 2 {
            let (prev, last) = (trace[trace.len() - 2], trace[trace.len() - 1]);
            if (last - prev).abs() / last.abs() < options.rel_tol
                && parameter_change(&previous, &state) < PARAM_TOL_FACTOR * options.rel_tol
            {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        warn!(
            "CAVI stopped at max_cycles = {} without reaching rel_tol = {}",
            options.max_cycles, options.rel_tol
        );
    }
    Ok(CaviFit {
        cycles_run: state.cycle,
        state,
        hyper: *hyper,
        spec: data.spec().clone(),
        converged,
    })
}

/// Run exactly `cycles` cycles with no convergence test. Used to study
/// estimates after a fixed budget; `run_cavi` is the production entry point.
pub fn run_cavi_fixed(data: &CenteredDataset, hyper: &HyperParams, cycles: usize) -> Result<CaviFit> {
    if cycles == 0 {
        return Err(Error::InvalidArgument("need at least one cycle".into()));
    }
    let gram = Gram::new(data);
    let mut state = init_with_gram(data, &gram, hyper)?;
    for _ in 0..cycles {
        state = cycle_with_gram(&state, data, &gram, hyper)?;
    }
    Ok(CaviFit {
        cycles_run: state.cycle,
        state,
        hyper: *hyper,
        spec: data.spec().clone(),
        converged: false,
    })
}

#[derive(Debug, Clone)]
pub struct TauSelection {
    pub tau: f64,
    /// Final ELBO per grid point, `None` where the fit failed.
    pub elbos: Vec<Option<f64>>,
    pub fit: CaviFit,
}

/// Fit once per grid value and keep the largest final ELBO; ties within
/// `1e-12` go to the smaller `τ`.
pub fn select_tau(
    data: &CenteredDataset,
    base: &HyperParams,
    grid: &[f64],
    options: &CaviOptions,
) -> Result<TauSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("tau grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument(format!("tau grid value {bad} is not positive")));
    }
    let fits: Vec<Result<CaviFit>> = grid
        .par_iter()
        .map(|&tau| run_cavi(data, &base.with_tau(tau), options))
        .collect();

    let mut best: Option<usize> = None;
    let mut elbos = Vec::with_capacity(grid.len());
    for (i, fit) in fits.iter().enumerate() {
        match fit {
            Ok(f) => {
                let value = f.state.last_elbo().unwrap_or(f64::NEG_INFINITY);
                elbos.push(Some(value));
                best = match best {
                    None => Some(i),
                    Some(b) => {
                        let bv = elbos[b].unwrap();
                        if value > bv + 1e-12 || ((value - bv).abs() <= 1e-12 && grid[i] < grid[b])
                        {
                            Some(i)
                        } else {
                            Some(b)
                        }
                    }
                };
            }
            Err(e) => {
                warn!("tau = {} skipped: {e}", grid[i]);
                elbos.push(None);
            }
        }
    }
    let b = best.ok_or(Error::AllFitsFailed(grid.len()))?;
    let fit = fits.into_iter().nth(b).unwrap()?;
    Ok(TauSelection {
        tau: grid[b],
        elbos,
        fit,
    })
}
