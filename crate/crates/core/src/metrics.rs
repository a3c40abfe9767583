//! Group-selection and prediction metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts over groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Compare selected against true groups, both as 1-based indices into `1..=groups`.
pub fn confusion(selected: &[usize], truth: &[usize], groups: usize) -> Result<ConfusionCounts> {
    let mut sel = vec![false; groups];
    let mut tru = vec![false; groups];
    for (set, flags) in [(selected, &mut sel), (truth, &mut tru)] {
        for &g in set {
            if g == 0 || g > groups {
                return Err(Error::IndexOutOfRange { index: g, groups });
            }
            flags[g - 1] = true;
        }
    }
    let mut c = ConfusionCounts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (s, t) in sel.into_iter().zip(tru) {
        match (s, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `TP/(TP+FN) + TN/(TN+FP) − 1`, or `None` when either class is empty.
pub fn youden(c: &ConfusionCounts) -> Option<f64> {
    let pos = c.tp + c.fn_;
    let neg = c.tn + c.fp;
    if pos == 0 || neg == 0 {
        return None;
    }
    Some(c.tp as f64 / pos as f64 + c.tn as f64 / neg as f64 - 1.0)
}

/// Matthews correlation coefficient, or `None` when a marginal is zero.
pub fn mcc(c: &ConfusionCounts) -> Option<f64> {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let margins = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if margins.contains(&0.0) {
        return None;
    }
    let denom = margins.iter().product::<f64>().sqrt();
    Some((tp * tn - fp * fn_) / denom)
}

pub fn mspe(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(Error::LengthMismatch {
            expected: actual.len(),
            actual: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("MSPE of an empty test set".into()));
    }
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum();
    Ok(sse / pred.len() as f64)
}

/// `∫ (f̂ − f)²` over `domain` by the trapezoid rule on `grid_points` equispaced nodes.
pub fn mise<F, G>(mut estimate: F, mut truth: G, domain: [f64; 2], grid_points: usize) -> f64
where
    F: FnMut(f64) -> f64,
    G: FnMut(f64) -> f64,
{
    assert!(grid_points >= 2, "trapezoid rule needs at least two nodes");
    let [lo, hi] = domain;
    let h = (hi - lo) / (grid_points - 1) as f64;
    let mut total = 0.0;
    for i in 0..grid_points {
        let t = if i + 1 == grid_points { hi } else { lo + h * i as f64 };
        let e = (estimate(t) - truth(t)).powi(2);
        let w = if i == 0 || i + 1 == grid_points { 0.5 } else { 1.0 };
        total += w * e;
    }
    total * h
}

/// Default integration range and node count for coefficient functions.
pub const MISE_DOMAIN: [f64; 2] = [0.0, 20.0];
pub const MISE_GRID: usize = 401;
