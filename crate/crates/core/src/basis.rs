//! Spline bases: natural cubic splines for additive models, clamped B-splines
//! for varying-coefficient models.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouped_model::{GroupSpec, GroupedDesign};

const CLAMP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplineKind {
    NaturalCubic,
    Bspline,
}

/// Everything needed to re-evaluate a basis at new points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasisSpec {
    pub kind: SplineKind,
    pub dim: usize,
    /// Distinct knots including both boundary knots, strictly increasing.
    pub knots: Vec<f64>,
    pub degree: usize,
    pub domain: [f64; 2],
}

impl SplineBasisSpec {
    /// Natural cubic basis with boundary knots at the extremes of `z` and
    /// `dim − 1` interior knots at equispaced quantiles. The basis spans the
    /// natural splines on those knots modulo constants, so it has `dim` columns.
    pub fn natural_cubic(z: &[f64], dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("basis dim must be at least 2, got {dim}")));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("non-finite spline input".into()));
        }
        let mut sorted = z.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = match (sorted.first(), sorted.last()) {
            (Some(&lo), Some(&hi)) if hi > lo => (lo, hi),
            _ => return Err(Error::DegenerateInput("spline input has no spread".into())),
        };
        let count = dim + 1;
        let mut knots = Vec::with_capacity(count);
        knots.push(lo);
        for k in 1..count - 1 {
            knots.push(quantile(&sorted, k as f64 / (count - 1) as f64));
        }
        knots.push(hi);
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateInput(
                "quantile knots are not distinct; too many ties in spline input".into(),
            ));
        }
        Ok(Self {
            kind: SplineKind::NaturalCubic,
            dim,
            knots,
            degree: 3,
            domain: [lo, hi],
        })
    }

    /// Clamped B-spline basis of dimension `dim` with equispaced interior knots.
    pub fn bspline(domain: [f64; 2], dim: usize, degree: usize) -> Result<Self> {
        let [lo, hi] = domain;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidArgument(format!("bad domain [{lo}, {hi}]")));
        }
        if dim < degree + 1 || dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "B-spline dim {dim} is too small for degree {degree}"
            )));
        }
        let segments = dim - degree;
        let knots = (0..=segments)
            .map(|k| {
                if k == segments {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / segments as f64
                }
            })
            .collect();
        Ok(Self {
            kind: SplineKind::Bspline,
            dim,
            knots,
            degree,
            domain,
        })
    }

    pub fn evaluate(&self, t: f64) -> Result<Vec<f64>> {
        match self.kind {
            SplineKind::NaturalCubic => Ok(natural_row(&self.knots, t)),
            SplineKind::Bspline => bspline_basis(t, self),
        }
    }

    /// One row per point.
    pub fn evaluate_many(&self, ts: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(ts.len(), self.dim);
        for (i, &t) in ts.iter().enumerate() {
            for (j, v) in self.evaluate(t)?.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

/// Type-7 sample quantile of sorted data.
fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let i = h.floor() as usize;
    let frac = h - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Truncated-power natural spline basis without the constant:
/// `z, d_1 − d_{K−1}, …, d_{K−2} − d_{K−1}`.
fn natural_row(knots: &[f64], z: f64) -> Vec<f64> {
    let count = knots.len();
    let last = knots[count - 1];
    let d = |k: usize| {
        let a = (z - knots[k]).max(0.0).powi(3);
        let b = (z - last).max(0.0).powi(3);
        (a - b) / (last - knots[k])
    };
    let tail = d(count - 2);
    let mut row = Vec::with_capacity(count - 1);
    row.push(z);
    for k in 0..count - 2 {
        row.push(d(k) - tail);
    }
    row
}

/// Evaluate a natural cubic basis fitted to `z` at the same points.
pub fn natural_cubic_basis(z: &[f64], dim: usize) -> Result<(DMatrix<f64>, SplineBasisSpec)> {
    let spec = SplineBasisSpec::natural_cubic(z, dim)?;
    let m = spec.evaluate_many(z)?;
    Ok((m, spec))
}

/// B-spline values at `t` by the Cox–de Boor recursion.
pub fn bspline_basis(t: f64, spec: &SplineBasisSpec) -> Result<Vec<f64>> {
    let [lo, hi] = spec.domain;
    let t = if t < lo || t > hi || t.is_nan() {
        let gap = if t < lo { lo - t } else { t - hi };
        if gap < CLAMP_SLACK {
            warn!("t = {t} clamped into [{lo}, {hi}]");
            t.clamp(lo, hi)
        } else {
            return Err(Error::OutOfDomain { t, lo, hi });
        }
    } else {
        t
    };

    let deg = spec.degree;
    let mut full = Vec::with_capacity(spec.knots.len() + 2 * deg);
    full.extend(std::iter::repeat_n(lo, deg));
    full.extend_from_slice(&spec.knots);
    full.extend(std::iter::repeat_n(hi, deg));

    // Knot span: full[span] ≤ t < full[span + 1], with t = hi folded into the last span.
    let n_basis = spec.dim;
    let span = if t >= hi {
        n_basis - 1
    } else {
        let mut s = deg;
        while s + 1 < n_basis && full[s + 1] <= t {
            s += 1;
        }
        s
    };

    let mut local = vec![0.0; deg + 1];
    let mut left = vec![0.0; deg + 1];
    let mut right = vec![0.0; deg + 1];
    local[0] = 1.0;
    for j in 1..=deg {
        left[j] = t - full[span + 1 - j];
        right[j] = full[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = local[r] / (right[r + 1] + left[j - r]);
            local[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        local[j] = saved;
    }

    let mut out = vec![0.0; n_basis];
    for (r, v) in local.into_iter().enumerate() {
        out[span - deg + r] = v;
    }
    Ok(out)
}

/// Repeated measurements of one subject: `covariates[j]` is observed at `times[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub times: Vec<f64>,
    pub covariates: Vec<Vec<f64>>,
}

/// Stack `u_ij = B(t_ij) x_ij` over subjects and their times, giving one
/// group of `spec.dim` columns per covariate.
pub fn expand_varying_coefficient_design(
    subjects: &[Subject],
    g: usize,
    spec: &SplineBasisSpec,
) -> Result<GroupedDesign> {
    let d = spec.dim;
    let mut rows = 0;
    for (i, s) in subjects.iter().enumerate() {
        if s.times.is_empty() {
            return Err(Error::EmptyObservation(i));
        }
        if s.covariates.len() != s.times.len() {
            return Err(Error::LengthMismatch {
                expected: s.times.len(),
                actual: s.covariates.len(),
            });
        }
        if let Some(row) = s.covariates.iter().find(|r| r.len() != g) {
            return Err(Error::LengthMismatch {
                expected: g,
                actual: row.len(),
            });
        }
        rows += s.times.len();
    }

    let mut u = DMatrix::zeros(rows, g * d);
    let mut i = 0;
    for s in subjects {
        for (&t, x) in s.times.iter().zip(&s.covariates) {
            let b = spec.evaluate(t)?;
            for (k, &xk) in x.iter().enumerate() {
                for (l, &bl) in b.iter().enumerate() {
                    u[(i, k * d + l)] = bl * xk;
                }
            }
            i += 1;
        }
    }
    GroupedDesign::new(u, GroupSpec::uniform(g, d)?)
}
