//! Observation matrices with optional per-row probability weights.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An `n x p` sample together with the probability mass carried by each row.
///
/// Without explicit weights every row carries `1/n`, which is the empirical
/// distribution. Explicit weights let the same solvers evaluate functionals at
/// perturbed distributions such as `(1 - eps) F_n + eps delta_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    x: DMatrix<f64>,
    weights: Vec<f64>,
    uniform: bool,
    column_names: Option<Vec<String>>,
}

impl DataSet {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 || p < 1 {
            return Err(Error::InvalidData(format!(
                "need at least 2 rows and 1 column, got {n} x {p}"
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite entry at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        Ok(Self {
            x,
            weights: vec![1.0 / n as f64; n],
            uniform: true,
            column_names: None,
        })
    }

    /// Replaces the uniform row weights. They must be nonnegative and sum to one.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidData("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidData(format!("weights sum to {total}, not 1")));
        }
        self.weights = weights;
        self.uniform = false;
        Ok(self)
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: names.len(),
            });
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn has_uniform_weights(&self) -> bool {
        self.uniform
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// Returns the sample with one extra row holding mass `eps`, all other rows
    /// scaled by `1 - eps`.
    pub fn contaminate(&self, x: &DVector<f64>, eps: f64) -> Result<Self> {
        if x.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: x.len(),
            });
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
        }
        let (n, p) = (self.n(), self.p());
        let mut m = DMatrix::zeros(n + 1, p);
        m.rows_mut(0, n).copy_from(&self.x);
        m.row_mut(n).copy_from(&x.transpose());
        let mut w: Vec<f64> = self.weights.iter().map(|v| v * (1.0 - eps)).collect();
        w.push(eps);
        // Renormalize away the rounding drift of the scaled sum.
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let mut out = DataSet::new(m)?.with_weights(w)?;
        out.column_names = self.column_names.clone();
        Ok(out)
    }
}
