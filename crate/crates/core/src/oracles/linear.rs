//! Kalman–Bucy filter and Rauch–Tung–Striebel smoother moments for linear
//! models, integrated on the same Euler grid as the ensemble methods.

use nalgebra::{DMatrix, DVector};

use crate::ensemble::{symmetrize, MomentKind, MomentSeries};
use crate::error::{Error, Pass, Result};
use crate::sde::{FnDynamics, NoiseCov, SdeModel, Trajectory};

/// `dx = F x dt + Σ^{1/2} dB`, `dy = H x dt + Γ^{1/2} dW`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(f: DMatrix<f64>, h: DMatrix<f64>, sigma: DMatrix<f64>, gamma: DMatrix<f64>) -> Result<Self> {
        let n = f.nrows();
        if !f.is_square() || h.ncols() != n || sigma.shape() != (n, n) || gamma.shape() != (h.nrows(), h.nrows()) {
            return Err(Error::InvalidInput("inconsistent linear model shapes".into()));
        }
        Ok(Self { f, h, sigma, gamma })
    }

    /// Scalar model `dx = a x dt + √s dB`, `dy = b x dt + √g dW`.
    pub fn scalar(a: f64, b: f64, s: f64, g: f64) -> Self {
        let m = |v| DMatrix::from_element(1, 1, v);
        Self {
            f: m(a),
            h: m(b),
            sigma: m(s),
            gamma: m(g),
        }
    }

    pub fn n_x(&self) -> usize {
        self.f.nrows()
    }

    pub fn n_y(&self) -> usize {
        self.h.nrows()
    }

    pub fn sde_model(&self) -> Result<SdeModel> {
        let (f, h) = (self.f.clone(), self.h.clone());
        let dynamics = FnDynamics::new(
            self.n_x(),
            self.n_y(),
            move |x, _, _, out| mat_vec(&f, x, out),
            move |x, _, _, out| mat_vec(&h, x, out),
        );
        SdeModel::new(
            dynamics,
            NoiseCov::cholesky(self.sigma.clone())?,
            NoiseCov::cholesky(self.gamma.clone())?,
        )
    }

    /// Stationary filter variance of a scalar model (positive Riccati root).
    pub fn stationary_filter_variance(&self) -> f64 {
        let (a, b, s, g) = (self.f[(0, 0)], self.h[(0, 0)], self.sigma[(0, 0)], self.gamma[(0, 0)]);
        g * (a + (a * a + b * b * s / g).sqrt()) / (b * b)
    }

    /// Stationary smoother variance of a scalar model.
    pub fn stationary_smoother_variance(&self) -> f64 {
        let (a, s) = (self.f[(0, 0)], self.sigma[(0, 0)]);
        let pf = self.stationary_filter_variance();
        s / (2.0 * (a + s / pf))
    }
}

fn mat_vec(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o = (0..a.ncols()).map(|c| a[(r, c)] * x[c]).sum();
    }
}

/// Kalman–Bucy filter mean and covariance driven by the observation path.
pub fn kalman_bucy_moments(
    lm: &LinearModel,
    y: &Trajectory,
    prior_mean: &[f64],
    prior_cov: &DMatrix<f64>,
) -> Result<MomentSeries> {
    let n = lm.n_x();
    if prior_mean.len() != n || prior_cov.shape() != (n, n) {
        return Err(Error::Dimension {
            what: "prior",
            expected: n,
            found: prior_mean.len(),
        });
    }
    if prior_cov.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite {
            what: "prior covariance",
            step: 0,
        });
    }
    let grid = *y.grid();
    let tau = grid.dt();
    let gamma_inv = lm
        .gamma
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite {
            what: "observation noise covariance",
            step: 0,
        })?;
    let ht_gi = lm.h.transpose() * &gamma_inv;
    let info = &ht_gi * &lm.h;

    let mut out = MomentSeries::new(grid, n, MomentKind::Filter, true);
    let mut mean = DVector::from_column_slice(prior_mean);
    let mut p = prior_cov.clone();
    out.set(0, mean.as_slice(), Some(&p));
    let mut dy = vec![0.0; lm.n_y()];
    for k in 0..grid.steps() {
        y.increment(k, &mut dy);
        let dy = DVector::from_column_slice(&dy);
        let gain = &p * &ht_gi;
        let innov = dy - &lm.h * &mean * tau;
        mean = &mean + &lm.f * &mean * tau + gain * innov;
        let dp = &lm.f * &p + &p * lm.f.transpose() + &lm.sigma - &p * &info * &p;
        p += dp * tau;
        symmetrize(&mut p);
        if p.clone().cholesky().is_none() {
            return Err(Error::Divergence {
                pass: Pass::Oracle,
                step: k + 1,
            });
        }
        out.set(k + 1, mean.as_slice(), Some(&p));
    }
    Ok(out)
}

/// RTS smoother moments integrated backward from the terminal filter moments.
pub fn rts_moments(lm: &LinearModel, filter: &MomentSeries) -> Result<MomentSeries> {
    let n = lm.n_x();
    if filter.dim() != n || !filter.has_covariances() {
        return Err(Error::InvalidInput(
            "smoother oracle needs filter moments with covariances".into(),
        ));
    }
    let grid = *filter.grid();
    let tau = grid.dt();
    let last = grid.steps();
    let mut out = MomentSeries::new(grid, n, MomentKind::Smoother, true);
    let mut mean = DVector::from_column_slice(filter.mean(last));
    let mut p: DMatrix<f64> = filter.cov(last).expect("covariances").into_owned();
    out.set(last, mean.as_slice(), Some(&p));
    for k in (0..last).rev() {
        let pf: DMatrix<f64> = filter.cov(k + 1).expect("covariances").into_owned();
        let mf = DVector::from_column_slice(filter.mean(k + 1));
        let chol = pf.cholesky().ok_or(Error::NotPositiveDefinite {
            what: "filter covariance",
            step: k + 1,
        })?;
        // Σ P_f⁻¹
        let s_pinv = chol.solve(&lm.sigma).transpose();
        let a = &lm.f + &s_pinv;
        mean = &mean - (&lm.f * &mean + &s_pinv * (&mean - mf)) * tau;
        let dp = &a * &p + &p * a.transpose() - &lm.sigma;
        p -= dp * tau;
        symmetrize(&mut p);
        out.set(k, mean.as_slice(), Some(&p));
    }
    Ok(out)
}
