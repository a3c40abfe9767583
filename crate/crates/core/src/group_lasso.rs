//! Weighted group lasso
//!
//! ```text
//! minimize  ‖Y* − X*β‖² + λ Σ_g w_g ‖β_g‖
//! ```
//!
//! by block coordinate descent. Each visit to group `g` moves the block to the
//! fixed point of the majorized prox step
//!
//! ```text
//! β_g ← S(β_g + (2/γ_g) X*_gᵀ(Y* − X*β), λ w_g / γ_g)
//! ```
//!
//! with `γ_g ≥ λ_max(2 X*_gᵀX*_g)` and `S` the group soft-threshold. The fixed
//! point is found from an eigendecomposition of the block Gram matrix and a
//! scalar secular equation; plain prox steps are the fallback. Every few
//! sweeps an Anderson extrapolation of the recent iterates is tried and kept
//! only if it lowers the objective. The quadratic carries no ½.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grouped_model::GroupSpec;
use crate::linalg::{power_iteration, spectral_upper_bound};

const POWER_ITERATIONS: usize = 50;
const POWER_TOL: f64 = 1e-9;
const GAMMA_INFLATION: f64 = 1.001;
/// Prox steps per block visit when the secular solve is unusable.
const INNER_STEPS: usize = 200;
const SECULAR_ITERATIONS: usize = 200;
/// Sweeps between Anderson extrapolation attempts.
const ACCEL_WINDOW: usize = 5;

/// Proximal operator of `t‖·‖₂`: zero when `‖v‖ ≤ t`, else `(1 − t/‖v‖) v`.
pub fn group_soft_threshold(v: &DVector<f64>, t: f64) -> DVector<f64> {
    debug_assert!(t >= 0.0);
    let norm = v.norm();
    if norm <= t {
        DVector::zeros(v.len())
    } else {
        v * (1.0 - t / norm)
    }
}

#[derive(Debug, Clone)]
pub struct WorkingProblem {
    pub xstar: DMatrix<f64>,
    pub ystar: DVector<f64>,
    pub spec: GroupSpec,
    pub weights: Vec<f64>,
    pub gamma: Vec<f64>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    blocks: Vec<SymmetricEigen<f64, nalgebra::Dyn>>,
}

impl WorkingProblem {
    /// Weights default to `√p_g`.
    pub fn new(xstar: DMatrix<f64>, ystar: DVector<f64>, spec: GroupSpec) -> Result<Self> {
        let weights = spec.sizes().iter().map(|&s| (s as f64).sqrt()).collect();
        Self::with_weights(xstar, ystar, spec, weights)
    }

    pub fn with_weights(
        xstar: DMatrix<f64>,
        ystar: DVector<f64>,
        spec: GroupSpec,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let p = spec.num_predictors();
        if xstar.ncols() != p {
            return Err(Error::SizeMismatch {
                expected: p,
                actual: xstar.ncols(),
            });
        }
        if ystar.len() != xstar.nrows() {
            return Err(Error::LengthMismatch {
                expected: xstar.nrows(),
                actual: ystar.len(),
            });
        }
        if weights.len() != spec.num_groups() {
            return Err(Error::LengthMismatch {
                expected: spec.num_groups(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("group weights must be positive".into()));
        }
        let gram = xstar.tr_mul(&xstar);
        let xty = xstar.tr_mul(&ystar);
        let gamma = spec
            .ranges()
            .map(|r| {
                let block = gram.view((r.start, r.start), (r.len(), r.len())) * 2.0;
                let (top, converged) = power_iteration(&block, POWER_ITERATIONS, POWER_TOL);
                let g = if converged {
                    top * GAMMA_INFLATION
                } else {
                    spectral_upper_bound(&block)
                };
                // An all-zero block never moves; any positive step works.
                if g > 0.0 {
                    g
                } else {
                    1.0
                }
            })
            .collect();
        let blocks = spec
            .ranges()
            .map(|r| gram.view((r.start, r.start), (r.len(), r.len())).into_owned().symmetric_eigen())
            .collect();
        Ok(Self {
            xstar,
            ystar,
            spec,
            weights,
            gamma,
            gram,
            xty,
            blocks,
        })
    }

    pub fn p(&self) -> usize {
        self.spec.num_predictors()
    }

    /// `‖Y* − X*β‖² + λ Σ w_g ‖β_g‖`.
    pub fn objective(&self, beta: &DVector<f64>, lambda: f64) -> f64 {
        let loss = (&self.ystar - &self.xstar * beta).norm_squared();
        loss + lambda * self.penalty(beta)
    }

    pub fn penalty(&self, beta: &DVector<f64>) -> f64 {
        self.spec
            .ranges()
            .zip(&self.weights)
            .map(|(r, w)| w * beta.rows(r.start, r.len()).norm())
            .sum()
    }

    /// Per-group KKT residuals at `beta`; see [`LassoSolution::max_kkt_violation`].
    pub fn kkt_residuals(&self, beta: &DVector<f64>, lambda: f64) -> Vec<f64> {
        let resid = &self.ystar - &self.xstar * beta;
        let corr = self.xstar.tr_mul(&resid) * 2.0;
        self.spec
            .ranges()
            .zip(&self.weights)
            .map(|(r, &w)| {
                let grad = corr.rows(r.start, r.len());
                let b = beta.rows(r.start, r.len());
                let bn = b.norm();
                if bn == 0.0 {
                    (grad.norm() - lambda * w).max(0.0)
                } else {
                    (grad - b * (lambda * w / bn)).norm()
                }
            })
            .collect()
    }

    /// `lambda,group,size,norm,kkt` rows for offline inspection.
    pub fn kkt_report_csv(&self, solution: &LassoSolution) -> String {
        let resid = self.kkt_residuals(&solution.beta_star, solution.lambda);
        let mut out = String::from("lambda,group,size,norm,kkt\n");
        for (g, r) in self.spec.ranges().enumerate() {
            let norm = solution.beta_star.rows(r.start, r.len()).norm();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                solution.lambda,
                g + 1,
                r.len(),
                norm,
                resid[g]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub beta_star: DVector<f64>,
    pub lambda: f64,
    /// Full sweeps over the groups.
    pub iterations: usize,
    pub max_kkt_violation: f64,
    pub objective: f64,
    /// `false` when `max_iter` ran out; the iterate is still the best one found.
    pub converged: bool,
}

impl LassoSolution {
    /// 0-based indices of groups with a nonzero block.
    pub fn active_groups(&self, spec: &GroupSpec) -> Vec<usize> {
        spec.ranges()
            .enumerate()
            .filter(|(_, r)| self.beta_star.rows(r.start, r.len()).iter().any(|&v| v != 0.0))
            .map(|(g, _)| g)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub solutions: Vec<LassoSolution>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

/// Smallest `λ` with an all-zero solution: `max_g 2‖X*_gᵀY*‖ / w_g`.
pub fn lambda_max(problem: &WorkingProblem) -> f64 {
    problem
        .spec
        .ranges()
        .zip(&problem.weights)
        .map(|(r, w)| 2.0 * problem.xty.rows(r.start, r.len()).norm() / w)
        .fold(0.0, f64::max)
}

/// `n` log-spaced values from `lambda_max` down to `lambda_max * min_ratio`.
pub fn lambda_grid(lambda_max: f64, n: usize, min_ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * min_ratio).ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lambda_max
            } else {
                (hi + (lo - hi) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn solve(
    problem: &WorkingProblem,
    lambda: f64,
    warm: Option<&DVector<f64>>,
    options: &SolverOptions,
) -> Result<LassoSolution> {
    if !(lambda >= 0.0) {
        return Err(Error::NegativeLambda(lambda));
    }
    let p = problem.p();
    let mut beta = match warm {
        Some(w) if w.len() != p => {
            return Err(Error::LengthMismatch {
                expected: p,
                actual: w.len(),
            })
        }
        Some(w) => w.clone(),
        None => DVector::zeros(p),
    };
    let gram = &problem.gram;
    let xty = &problem.xty;
    let mut fitted = gram * &beta;
    let kkt_target = 100.0 * options.tol * (1.0 + lambda);

    let mut iterations = 0;
    let mut converged = false;
    let mut last_objective = if cfg!(debug_assertions) {
        problem.objective(&beta, lambda)
    } else {
        f64::NAN
    };

    let mut history: Vec<DVector<f64>> = vec![beta.clone()];

    while iterations < options.max_iter {
        iterations += 1;
        let mut max_rel = 0.0f64;
        for (g, r) in problem.spec.ranges().enumerate() {
            let (start, len) = (r.start, r.len());
            let block = gram.view((start, start), (len, len));
            let old = beta.rows(start, len).into_owned();
            // Correlation of the partial residual that excludes group g.
            let h = xty.rows(start, len) - fitted.rows(start, len) + block * &old;
            let thresh = lambda * problem.weights[g];
            let step = 2.0 / problem.gamma[g];

            let new = if 2.0 * h.norm() / problem.weights[g] <= lambda {
                DVector::zeros(len)
            } else if let Some(b) = block_minimizer(&problem.blocks[g], &h, thresh) {
                b
            } else {
                let mut b = old.clone();
                for _ in 0..INNER_STEPS {
                    let z = &b + (&h - block * &b) * step;
                    let next = group_soft_threshold(&z, thresh / problem.gamma[g]);
                    let moved = (&next - &b).norm();
                    b = next;
                    if moved <= 1e-3 * options.tol * (1.0 + b.norm()) {
                        break;
                    }
                }
                b
            };

            let delta = &new - &old;
            let dn = delta.norm();
            if dn > 0.0 {
                fitted += gram.columns(start, len) * &delta;
                beta.rows_mut(start, len).copy_from(&new);
            }
            max_rel = max_rel.max(dn / (1.0 + new.norm()));
        }

        if cfg!(debug_assertions) {
            let obj = problem.objective(&beta, lambda);
            debug_assert!(
                obj <= last_objective + 1e-9 * last_objective.abs().max(1.0),
                "objective increased from {last_objective} to {obj}"
            );
            last_objective = obj;
        }

        history.push(beta.clone());
        if history.len() > ACCEL_WINDOW {
            if let Some(candidate) = anderson(&history) {
                let obj = problem.objective(&candidate, lambda);
                if obj < problem.objective(&beta, lambda) {
                    beta = candidate;
                    fitted = gram * &beta;
                    last_objective = obj;
                }
            }
            history.clear();
            history.push(beta.clone());
            continue;
        }

        if max_rel < options.tol {
            fitted = gram * &beta;
            let kkt = max_violation(problem, &beta, lambda);
            if kkt <= kkt_target {
                converged = true;
                break;
            }
        }
    }

    if !converged {
        warn!("group lasso hit max_iter = {} at lambda = {lambda}", options.max_iter);
    }
    Ok(LassoSolution {
        objective: problem.objective(&beta, lambda),
        max_kkt_violation: max_violation(problem, &beta, lambda),
        beta_star: beta,
        lambda,
        iterations,
        converged,
    })
}

/// Affine combination of the iterates whose combined step is smallest.
fn anderson(iterates: &[DVector<f64>]) -> Option<DVector<f64>> {
    let k = iterates.len() - 1;
    let p = iterates[0].len();
    let mut u = DMatrix::zeros(p, k);
    for i in 0..k {
        u.set_column(i, &(&iterates[i + 1] - &iterates[i]));
    }
    let mut gram = u.tr_mul(&u);
    let scale = gram.trace();
    if !(scale > 0.0) {
        return None;
    }
    for i in 0..k {
        gram[(i, i)] += 1e-10 * scale;
    }
    let w = gram.cholesky()?.solve(&DVector::from_element(k, 1.0));
    let total = w.sum();
    if !(total.abs() > 0.0) || w.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut out = DVector::zeros(p);
    for i in 0..k {
        out += &iterates[i + 1] * (w[i] / total);
    }
    Some(out)
}

/// Minimizer of `bᵀHb − 2hᵀb + t‖b‖` for `2‖h‖ > t`, where `eig` decomposes `H`.
///
/// The minimizer solves `(H + νI) b = h` with `ν = t / (2‖b‖)`; in the eigenbasis
/// `2ν‖b(ν)‖ − t` increases in `ν`, so a bracketed Newton iteration finds it.
fn block_minimizer(
    eig: &SymmetricEigen<f64, nalgebra::Dyn>,
    h: &DVector<f64>,
    t: f64,
) -> Option<DVector<f64>> {
    let evals = &eig.eigenvalues;
    let q = &eig.eigenvectors;
    let ht = q.tr_mul(h);
    let coef = |nu: f64| -> DVector<f64> {
        DVector::from_fn(ht.len(), |i, _| ht[i] / (evals[i].max(0.0) + nu))
    };
    if evals.iter().any(|e| !e.is_finite()) {
        return None;
    }
    let min_eval = evals.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_eval > 0.0) {
        return None;
    }
    if t == 0.0 {
        return Some(q * coef(0.0));
    }

    let hn = h.norm();
    let max_eval = evals.iter().cloned().fold(0.0, f64::max);
    let secular = |nu: f64| -> (f64, f64) {
        let c = coef(nu);
        let cn = c.norm();
        let dcn = -(0..c.len())
            .map(|i| c[i] * c[i] / (evals[i].max(0.0) + nu))
            .sum::<f64>()
            / cn;
        (2.0 * nu * cn - t, 2.0 * cn + 2.0 * nu * dcn)
    };
    let (mut lo, mut hi) = (0.0, t * max_eval / (2.0 * hn - t) * (1.0 + 1e-12) + f64::MIN_POSITIVE);
    let mut nu = 0.5 * hi;
    for _ in 0..SECULAR_ITERATIONS {
        let (val, slope) = secular(nu);
        if val == 0.0 {
            break;
        }
        if val < 0.0 {
            lo = nu;
        } else {
            hi = nu;
        }
        let newton = nu - val / slope;
        let next = if newton > lo && newton < hi && slope > 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - nu).abs() <= 1e-15 * nu || hi - lo <= 1e-15 * hi {
            nu = next;
            break;
        }
        nu = next;
    }
    let b = q * coef(nu);
    b.iter().all(|v| v.is_finite()).then_some(b)
}

fn max_violation(problem: &WorkingProblem, beta: &DVector<f64>, lambda: f64) -> f64 {
    problem
        .kkt_residuals(beta, lambda)
        .into_iter()
        .fold(0.0, f64::max)
}

/// Solve along a log-spaced grid from `λ_max`, warm-starting each point.
pub fn solve_path(
    problem: &WorkingProblem,
    n_lambda: usize,
    lambda_min_ratio: f64,
    options: &SolverOptions,
) -> Result<LassoPath> {
    if n_lambda < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_lambda must be at least 2, got {n_lambda}"
        )));
    }
    if !(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0) {
        return Err(Error::InvalidArgument(
            "lambda_min_ratio must lie in (0, 1)".into(),
        ));
    }
    let lmax = lambda_max(problem);
    // Y* = 0 makes every λ ≥ 0 give the zero solution; any positive anchor works.
    let anchor = if lmax > 0.0 { lmax } else { 1.0 };
    solve_on_grid(problem, &lambda_grid(anchor, n_lambda, lambda_min_ratio), options)
}

/// Solve at each of `lambdas` (any order), chaining warm starts.
pub fn solve_on_grid(
    problem: &WorkingProblem,
    lambdas: &[f64],
    options: &SolverOptions,
) -> Result<LassoPath> {
    let mut solutions: Vec<LassoSolution> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let warm = solutions.last().map(|s| &s.beta_star);
        let sol = solve(problem, lambda, warm, options)?;
        if !sol.converged {
            warn!("path point lambda = {lambda} flagged as not converged");
        }
        solutions.push(sol);
    }
    Ok(LassoPath {
        lambdas: lambdas.to_vec(),
        solutions,
    })
}
