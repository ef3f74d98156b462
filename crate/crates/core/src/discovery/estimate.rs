//! Equality-constrained maximum-likelihood coefficients on Euler increments.
//!
//! With additive Gaussian noise of amplitude `σ_i` in equation `i`, the
//! increment likelihood is maximized by the weighted least-squares problem
//!
//! ```text
//! min Σ_i σ_i⁻² ‖r_i − F_{S_i} θ_i‖²   subject to   A θ = b
//! ```
//!
//! solved on the null space of `A` obtained by Gauss–Jordan elimination.

use nalgebra::{DMatrix, DVector};

use super::causation::{IndicatorMatrix, RegressionData};
use crate::error::{Error, Result};

/// `Σ coeff · θ[eq][feature] = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, usize, f64)>,
    pub rhs: f64,
}

impl LinearConstraint {
    /// `θ[a] + θ[b] = 0`.
    pub fn cancel(a: (usize, usize), b: (usize, usize)) -> Self {
        Self {
            terms: vec![(a.0, a.1, 1.0), (b.0, b.1, 1.0)],
            rhs: 0.0,
        }
    }

    /// Whether every referenced coefficient is active in `structure`.
    pub fn is_active(&self, structure: &IndicatorMatrix) -> bool {
        self.terms.iter().all(|&(i, j, _)| structure.get(i, j))
    }

    pub fn residual(&self, theta: &DMatrix<f64>) -> f64 {
        self.terms.iter().map(|&(i, j, c)| c * theta[(i, j)]).sum::<f64>() - self.rhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEstimate {
    /// `N × M` coefficients; inactive entries are zero.
    pub theta: DMatrix<f64>,
    /// Residual-based noise amplitude per equation.
    pub sigma: Vec<f64>,
    /// Constraints that were enforced.
    pub constraints: Vec<LinearConstraint>,
}

/// Reduced row echelon form in place; returns pivot columns. Entries below
/// `tol` are treated as zero.
fn rref(a: &mut DMatrix<f64>, tol: f64) -> Vec<usize> {
    let (rows, cols) = a.shape();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols.saturating_sub(1) {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs())) else {
            break;
        };
        if a[(p, c)].abs() <= tol {
            continue;
        }
        a.swap_rows(r, p);
        let inv = a[(r, c)];
        for j in 0..cols {
            a[(r, j)] /= inv;
        }
        for i in 0..rows {
            if i != r && a[(i, c)] != 0.0 {
                let f = a[(i, c)];
                for j in 0..cols {
                    a[(i, j)] -= f * a[(r, j)];
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

/// Affine parameterization `θ = θ₀ + N z` of `{θ : A θ = b}`.
fn null_space(a: &DMatrix<f64>, b: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (rows, n) = a.shape();
    if rows == 0 {
        return Ok((DVector::zeros(n), DMatrix::identity(n, n)));
    }
    let mut aug = DMatrix::zeros(rows, n + 1);
    aug.view_mut((0, 0), (rows, n)).copy_from(a);
    for (i, &v) in b.iter().enumerate() {
        aug[(i, n)] = v;
    }
    let pivots = rref(&mut aug, 1e-12);
    for i in pivots.len()..rows {
        if aug[(i, n)].abs() > 1e-12 {
            return Err(Error::Infeasible(format!(
                "constraint row {i} reduces to 0 = {}",
                aug[(i, n)]
            )));
        }
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let mut theta0 = DVector::zeros(n);
    let mut basis = DMatrix::zeros(n, free.len());
    for (r, &p) in pivots.iter().enumerate() {
        theta0[p] = aug[(r, n)];
        for (f, &c) in free.iter().enumerate() {
            basis[(p, f)] = -aug[(r, c)];
        }
    }
    for (f, &c) in free.iter().enumerate() {
        basis[(c, f)] = 1.0;
    }
    Ok((theta0, basis))
}

/// Constrained weighted least squares on the active features.
///
/// `weights[i]` is the noise amplitude `σ_i` of equation `i`. Constraints
/// that reference an inactive coefficient are dropped.
pub fn estimate_params(
    data: &RegressionData,
    structure: &IndicatorMatrix,
    sigma: &[f64],
    constraints: &[LinearConstraint],
) -> Result<ParamEstimate> {
    let (n_eq, m) = (data.n_equations(), data.n_features());
    if structure.rows() != n_eq || structure.cols() != m || sigma.len() != n_eq {
        return Err(Error::Dimension {
            what: "structure",
            expected: n_eq * m,
            found: structure.rows() * structure.cols(),
        });
    }
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidInput("noise amplitudes must be positive".into()));
    }

    // unknown index for each active (equation, feature)
    let mut slot = vec![vec![None; m]; n_eq];
    let mut unknowns = Vec::new();
    for (i, row) in slot.iter_mut().enumerate() {
        for j in structure.active(i) {
            row[j] = Some(unknowns.len());
            unknowns.push((i, j));
        }
    }
    let p = unknowns.len();
    let active: Vec<LinearConstraint> = constraints
        .iter()
        .filter(|c| c.is_active(structure))
        .cloned()
        .collect();
    let mut a = DMatrix::zeros(active.len(), p);
    let mut b = vec![0.0; active.len()];
    for (r, c) in active.iter().enumerate() {
        for &(i, j, coeff) in &c.terms {
            a[(r, slot[i][j].expect("active constraint term"))] += coeff;
        }
        b[r] = c.rhs;
    }
    let (theta0, basis) = null_space(&a, &b)?;

    // block-diagonal normal equations, then projected onto the null space
    let gram = data.features.tr_mul(&data.features);
    let mut normal = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for i in 0..n_eq {
        let w = sigma[i].powi(-2);
        let ftr = data.features.tr_mul(&data.rates.column(i));
        let idx = structure.active(i);
        for (a_, &ja) in idx.iter().enumerate() {
            let ua = slot[i][ja].expect("active");
            rhs[ua] = w * ftr[ja];
            for &jb in &idx[..=a_] {
                let ub = slot[i][jb].expect("active");
                normal[(ua, ub)] = w * gram[(ja, jb)];
                normal[(ub, ua)] = normal[(ua, ub)];
            }
        }
    }
    let reduced = basis.transpose() * &normal * &basis;
    let reduced_rhs = basis.transpose() * (rhs - &normal * &theta0);
    let z = if basis.ncols() == 0 {
        DVector::zeros(0)
    } else {
        reduced
            .cholesky()
            .ok_or_else(|| Error::Underdetermined("constrained normal equations are singular".into()))?
            .solve(&reduced_rhs)
    };
    let flat = theta0 + &basis * z;

    let mut theta = DMatrix::zeros(n_eq, m);
    for (u, &(i, j)) in unknowns.iter().enumerate() {
        theta[(i, j)] = flat[u];
    }
    // σ̂² = τ RSS / K on the rates
    let fitted = &data.features * theta.transpose();
    let k = data.samples() as f64;
    let sigma_hat = (0..n_eq)
        .map(|i| {
            let rss = (data.rates.column(i) - fitted.column(i)).norm_squared();
            (data.dt * rss / k).sqrt()
        })
        .collect();
    Ok(ParamEstimate {
        theta,
        sigma: sigma_hat,
        constraints: active,
    })
}
