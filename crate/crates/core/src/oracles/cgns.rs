//! Closed-form conditional-Gaussian filter and smoother for the dyad with
//! `u` observed and `v` hidden.
//!
//! Conditioned on the path of `u`, the hidden `v` obeys linear dynamics and
//! enters the `u` equation linearly through the coefficient `c u`, so the
//! posterior stays Gaussian with
//!
//! ```text
//! dμ = (−d_v μ − c u² + F_v) dt + (R c u / σ_u²) (du − ((−d_u + c μ) u + F_u) dt)
//! dR = (−2 d_v R + σ_v² − (R c u / σ_u)²) dt
//! ```
//!
//! and the backward smoother
//!
//! ```text
//! dμ_s/dt = −d_v μ_s − c u² + F_v + σ_v² R⁻¹ (μ_s − μ)
//! dR_s/dt = 2 (−d_v + σ_v² / R) R_s − σ_v²
//! ```

use nalgebra::DMatrix;

use super::OracleMoments;
use crate::ensemble::{MomentKind, MomentSeries};
use crate::error::{Error, Pass, Result};
use crate::models::{DyadConfig, DyadDirection};
use crate::sde::Trajectory;

pub fn cgns_dyad_moments(
    cfg: &DyadConfig,
    u_obs: &Trajectory,
    prior_mean: f64,
    prior_var: f64,
) -> Result<OracleMoments> {
    if cfg.direction != DyadDirection::VToU {
        return Err(Error::InvalidInput(
            "the conditional-Gaussian oracle requires v hidden and u observed".into(),
        ));
    }
    if u_obs.dim() != 1 {
        return Err(Error::Dimension {
            what: "observed dyad component",
            expected: 1,
            found: u_obs.dim(),
        });
    }
    if !(prior_var > 0.0) {
        return Err(Error::InvalidInput("prior variance must be positive".into()));
    }
    let grid = *u_obs.grid();
    let tau = grid.dt();
    let (c, su2, sv2) = (cfg.c, cfg.sigma_u.powi(2), cfg.sigma_v.powi(2));

    let mut filter = MomentSeries::new(grid, 1, MomentKind::Filter, true);
    let mut mu = prior_mean;
    let mut r = prior_var;
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    filter.set(0, &[mu], Some(&one(r)));
    for k in 0..grid.steps() {
        let u = u_obs.row(k)[0];
        let du = u_obs.row(k + 1)[0] - u;
        let gain = r * c * u / su2;
        let innov = du - ((-cfg.d_u + c * mu) * u + cfg.f_u) * tau;
        let mu_next = mu + (-cfg.d_v * mu - c * u * u + cfg.f_v) * tau + gain * innov;
        let r_next = r + (-2.0 * cfg.d_v * r + sv2 - (r * c * u).powi(2) / su2) * tau;
        mu = mu_next;
        r = r_next;
        if !(r > 0.0) || !mu.is_finite() {
            return Err(Error::Divergence {
                pass: Pass::Oracle,
                step: k + 1,
            });
        }
        filter.set(k + 1, &[mu], Some(&one(r)));
    }

    let last = grid.steps();
    let mut smoother = MomentSeries::new(grid, 1, MomentKind::Smoother, true);
    let mut ms = mu;
    let mut rs = r;
    smoother.set(last, &[ms], Some(&one(rs)));
    for k in (0..last).rev() {
        let u = u_obs.row(k + 1)[0];
        let mf = filter.mean(k + 1)[0];
        let rf = filter.variance(k + 1, 0).expect("covariances");
        let a1 = -cfg.d_v;
        let drift = a1 * ms - c * u * u + cfg.f_v + sv2 / rf * (ms - mf);
        let dr = 2.0 * (a1 + sv2 / rf) * rs - sv2;
        ms -= drift * tau;
        rs -= dr * tau;
        if !(rs > 0.0) || !ms.is_finite() {
            return Err(Error::Divergence {
                pass: Pass::Oracle,
                step: k,
            });
        }
        smoother.set(k, &[ms], Some(&one(rs)));
    }

    Ok(OracleMoments { filter, smoother })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{integrate_truth, NoiseStream, TimeGrid};

    fn dyad_data(cfg: &DyadConfig, t: f64, seed: u64) -> (Trajectory, Trajectory) {
        let grid = TimeGrid::new(0.0, t, 0.005).unwrap();
        integrate_truth(&cfg.model().unwrap(), &grid, &[0.0], &[0.5], &NoiseStream::new(seed)).unwrap()
    }

    #[test]
    fn uncoupled_variance_relaxes_to_stationary() {
        let cfg = DyadConfig {
            c: 0.0,
            ..Default::default()
        };
        let (_, u) = dyad_data(&cfg, 20.0, 4);
        let o = cgns_dyad_moments(&cfg, &u, 0.0, 0.01).unwrap();
        let last = u.grid().steps();
        assert!((o.filter.variance(last, 0).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn smoother_variance_below_filter() {
        let cfg = DyadConfig::default();
        let (_, u) = dyad_data(&cfg, 50.0, 5);
        let o = cgns_dyad_moments(&cfg, &u, 0.0, 0.01).unwrap();
        for k in 0..u.len() {
            let (f, s) = (o.filter.variance(k, 0).unwrap(), o.smoother.variance(k, 0).unwrap());
            assert!(s <= f + 1e-8, "k={k}: {s} > {f}");
        }
    }

    #[test]
    fn rejects_hidden_u() {
        let cfg = DyadConfig {
            direction: DyadDirection::UToV,
            ..Default::default()
        };
        let (_, v) = dyad_data(&cfg, 1.0, 1);
        assert!(cgns_dyad_moments(&cfg, &v, 0.0, 1.0).is_err());
    }
}
