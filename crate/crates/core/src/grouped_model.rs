//! Grouping metadata, design assembly and the centering transform.
//!
//! The regression is fitted on centered data so the intercept never enters the
//! variational model; [`CenteringStats`] keeps what is needed to map estimates
//! back to the response scale (see [`crate::predict`]).

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition of `p` predictors into `G` contiguous groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GroupSizes", into = "GroupSizes")]
pub struct GroupSpec {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    p: usize,
}

#[derive(Serialize, Deserialize)]
struct GroupSizes {
    sizes: Vec<usize>,
}

impl TryFrom<GroupSizes> for GroupSpec {
    type Error = Error;

    fn try_from(value: GroupSizes) -> Result<Self> {
        GroupSpec::new(value.sizes)
    }
}

impl From<GroupSpec> for GroupSizes {
    fn from(value: GroupSpec) -> Self {
        GroupSizes { sizes: value.sizes }
    }
}

impl GroupSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidArgument("at least one group is required".into()));
        }
        if let Some(g) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyGroup(g));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Ok(Self {
            sizes,
            offsets,
            p: acc,
        })
    }

    /// Every predictor in its own group.
    pub fn singletons(p: usize) -> Result<Self> {
        Self::new(vec![1; p])
    }

    /// `groups` groups of identical size.
    pub fn uniform(groups: usize, size: usize) -> Result<Self> {
        Self::new(vec![size; groups])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn num_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_predictors(&self) -> usize {
        self.p
    }

    pub fn size(&self, g: usize) -> usize {
        self.sizes[g]
    }

    /// Column range of group `g` (0-based).
    pub fn range(&self, g: usize) -> Range<usize> {
        self.offsets[g]..self.offsets[g] + self.sizes[g]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.num_groups()).map(move |g| self.range(g))
    }

    /// Group owning column `j`.
    pub fn group_of(&self, j: usize) -> usize {
        match self.offsets.binary_search(&j) {
            Ok(g) => g,
            Err(g) => g - 1,
        }
    }

    /// Expand one value per group into one value per column.
    pub fn expand(&self, per_group: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.p);
        for (g, r) in self.ranges().enumerate() {
            for j in r {
                out[j] = per_group[g];
            }
        }
        out
    }
}

/// Dense `n × p` design whose columns are laid out group by group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDesign {
    x: DMatrix<f64>,
    spec: GroupSpec,
}

impl GroupedDesign {
    pub fn new(x: DMatrix<f64>, spec: GroupSpec) -> Result<Self> {
        if x.ncols() != spec.num_predictors() {
            return Err(Error::SizeMismatch {
                expected: spec.num_predictors(),
                actual: x.ncols(),
            });
        }
        if x.nrows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "design needs at least 2 rows, got {}",
                x.nrows()
            )));
        }
        Ok(Self { x, spec })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows selected by `idx`, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(idx.iter());
        Self::new(x, self.spec.clone())
    }
}

/// Copy `raw` into a design grouped by `sizes`.
pub fn build_grouped_design(raw: &DMatrix<f64>, sizes: &[usize]) -> Result<GroupedDesign> {
    let spec = GroupSpec::new(sizes.to_vec())?;
    GroupedDesign::new(raw.clone(), spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringStats {
    pub y_bar: f64,
    pub x_bar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenteredDataset {
    pub y: DVector<f64>,
    pub design: GroupedDesign,
    pub stats: CenteringStats,
}

impl CenteredDataset {
    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn p(&self) -> usize {
        self.design.p()
    }

    pub fn spec(&self) -> &GroupSpec {
        self.design.spec()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        self.design.x()
    }
}

/// `v₀ + mean(v − v₀)`, exact for constant input.
fn shifted_mean(v: &[f64]) -> f64 {
    match v.first() {
        Some(&v0) => v0 + v.iter().map(|x| x - v0).sum::<f64>() / v.len() as f64,
        None => 0.0,
    }
}

/// Subtract the sample mean from the response and from every design column.
pub fn center(y_raw: &DVector<f64>, design: &GroupedDesign) -> Result<CenteredDataset> {
    let n = design.n();
    if y_raw.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: y_raw.len(),
        });
    }
    let y_bar = shifted_mean(y_raw.as_slice());
    let y = y_raw.map(|v| v - y_bar);

    let mut x = design.x().clone();
    let mut x_bar = Vec::with_capacity(x.ncols());
    for mut col in x.column_iter_mut() {
        let m = shifted_mean(col.as_slice());
        col.apply(|v| *v -= m);
        x_bar.push(m);
    }
    if !y_bar.is_finite() || x_bar.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite values in data".into()));
    }

    Ok(CenteredDataset {
        y,
        design: GroupedDesign::new(x, design.spec().clone())?,
        stats: CenteringStats { y_bar, x_bar },
    })
}
