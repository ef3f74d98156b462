//! Gaussian causation entropy from nested least-squares regressions.
//!
//! For equation `i` the Euler rate `(x_{i,k+1} − x_{i,k}) / τ` is regressed
//! on all candidate features. With `RSS` the residual sum of squares,
//!
//! ```text
//! CE_{i,j} = ½ ln(RSS_{−j} / RSS_full)
//! ```
//!
//! where `RSS_{−j}` drops feature `j`. All regressions share one Gram matrix.

use nalgebra::{DMatrix, DVector};

use super::library::CandidateLibrary;
use crate::error::{Error, Result};
use crate::sde::Trajectory;

/// Ridge scale used when the Gram matrix is numerically singular.
pub const RIDGE: f64 = 1e-10;

/// Feature matrix and Euler rates assembled from a full-state trajectory.
#[derive(Debug, Clone)]
pub struct RegressionData {
    /// `K × M` features evaluated at `x_k`.
    pub features: DMatrix<f64>,
    /// `K × N` rates `(x_{k+1} − x_k) / τ`.
    pub rates: DMatrix<f64>,
    pub dt: f64,
}

impl RegressionData {
    pub fn from_trajectory(full: &Trajectory, library: &CandidateLibrary) -> Result<Self> {
        Self::with_stride(full, library, 1)
    }

    /// Rates `(x_{k+s} − x_k) / (s τ)` on the non-overlapping nodes
    /// `k = 0, s, 2s, …`.
    pub fn with_stride(full: &Trajectory, library: &CandidateLibrary, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidInput("differencing stride must be positive".into()));
        }
        if full.dim() != library.dim() {
            return Err(Error::Dimension {
                what: "library state",
                expected: library.dim(),
                found: full.dim(),
            });
        }
        let grid = full.grid();
        let (k_rows, m, n) = (grid.steps() / stride, library.len(), full.dim());
        let dt = grid.dt() * stride as f64;
        let mut features = DMatrix::zeros(k_rows, m);
        let mut rates = DMatrix::zeros(k_rows, n);
        let mut row = vec![0.0; m];
        for k in 0..k_rows {
            let (x0, x1) = (full.row(k * stride), full.row((k + 1) * stride));
            library.eval_into(x0, &mut row);
            for j in 0..m {
                features[(k, j)] = row[j];
            }
            for i in 0..n {
                rates[(k, i)] = (x1[i] - x0[i]) / dt;
            }
        }
        Ok(Self { features, rates, dt })
    }

    pub fn samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_equations(&self) -> usize {
        self.rates.ncols()
    }
}

/// Causation entropies of every (equation, feature) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CausationEntropy {
    /// `N × M`, nonnegative.
    pub values: DMatrix<f64>,
    /// Whether the ridge had to be applied to the Gram matrix.
    pub ridge_applied: bool,
}

/// Residual sum of squares of regressing on the columns in `keep`.
fn rss_subset(gram: &DMatrix<f64>, ftr: &DVector<f64>, rtr: f64, keep: &[usize], ridge: f64) -> Option<f64> {
    let p = keep.len();
    if p == 0 {
        return Some(rtr);
    }
    let mut g = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    for (a, &i) in keep.iter().enumerate() {
        b[a] = ftr[i];
        for (c, &j) in keep.iter().enumerate() {
            g[(a, c)] = gram[(i, j)];
        }
        g[(a, a)] += ridge;
    }
    let chol = g.cholesky()?;
    let coef = chol.solve(&b);
    Some((rtr - b.dot(&coef)).max(0.0))
}

pub fn causation_entropy(data: &RegressionData) -> Result<CausationEntropy> {
    let (m, n) = (data.n_features(), data.n_equations());
    if data.samples() < 10 * m {
        return Err(Error::Underdetermined(format!(
            "{} samples for {m} features; need at least {}",
            data.samples(),
            10 * m
        )));
    }
    let gram = data.features.tr_mul(&data.features);
    let scale = gram.trace() / m as f64;
    let all: Vec<usize> = (0..m).collect();

    let mut ridge = 0.0;
    let mut ridge_applied = false;
    let mut values = DMatrix::zeros(n, m);
    for i in 0..n {
        let r = data.rates.column(i);
        let ftr = data.features.tr_mul(&r);
        let rtr = r.dot(&r);
        let rss = |keep: &[usize], ridge: f64| rss_subset(&gram, &ftr, rtr, keep, ridge);
        let full = match rss(&all, ridge) {
            Some(v) => v,
            None => {
                ridge = RIDGE * scale;
                ridge_applied = true;
                rss(&all, ridge).ok_or_else(|| Error::Underdetermined("feature Gram matrix is singular".into()))?
            }
        };
        for j in 0..m {
            let keep: Vec<usize> = (0..m).filter(|&c| c != j).collect();
            let reduced = rss(&keep, ridge)
                .ok_or_else(|| Error::Underdetermined("feature Gram matrix is singular".into()))?
                .max(full);
            values[(i, j)] = if reduced <= full * (1.0 + 1e-12) {
                0.0
            } else if full > 0.0 {
                0.5 * (reduced / full).ln()
            } else {
                f64::INFINITY
            };
        }
    }
    Ok(CausationEntropy { values, ridge_applied })
}

/// Binary structure `N × M`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndicatorMatrix {
    rows: usize,
    cols: usize,
    active: Vec<bool>,
}

impl IndicatorMatrix {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut active = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                active.push(f(i, j));
            }
        }
        Self { rows, cols, active }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.active[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        self.active[i * self.cols + j] = on;
    }

    /// Active feature indices of equation `i`.
    pub fn active(&self, i: usize) -> Vec<usize> {
        (0..self.cols).filter(|&j| self.get(i, j)).collect()
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Frobenius norm of the difference of two indicator matrices.
    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        (self.active.iter().zip(&other.active).filter(|(a, b)| a != b).count() as f64).sqrt()
    }
}

/// `C_{i,j} = 1` iff `CE_{i,j} ≥ r`, with the constant column forced on.
pub fn identify_structure(ce: &CausationEntropy, threshold: f64, constant: usize) -> IndicatorMatrix {
    let v = &ce.values;
    IndicatorMatrix::from_fn(v.nrows(), v.ncols(), |i, j| j == constant || v[(i, j)] >= threshold)
}
