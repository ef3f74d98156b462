//! Assimilative causal inference: information gained by the smoother over
//! the filter, and the causal influence range (CIR) read off lagged smoothers.
//!
//! A lagged smoother with lag `L` at time `t` conditions on observations in
//! `[0, min(t + L, T)]`. One backward pass started at a right end `e` yields
//! lagged-smoother moments at every earlier node `k` with lag `e − k`, so
//! the sweep runs one pass per right end on the evaluation grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ensemble::{empirical_cov, MomentSeries};
use crate::error::{Error, Result};
use crate::filter::FilterRun;
use crate::sde::SdeModel;
use crate::smoother::{backward_pass, SmootherOptions, SmootherRun};

/// `KL(N(μ_s, P_s) ‖ N(μ_f, P_f))` in nats; both covariances receive the
/// ridge `jitter · tr(P) / n`.
pub fn gaussian_kl(
    mean_s: &[f64],
    cov_s: &DMatrix<f64>,
    mean_f: &[f64],
    cov_f: &DMatrix<f64>,
    jitter: f64,
) -> Result<f64> {
    let n = mean_s.len();
    if mean_f.len() != n || cov_s.shape() != (n, n) || cov_f.shape() != (n, n) {
        return Err(Error::Dimension {
            what: "Gaussian moments",
            expected: n,
            found: mean_f.len(),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let ridge = |p: &DMatrix<f64>| {
        let mut p = p.clone();
        let lambda = jitter * p.trace() / n as f64;
        for j in 0..n {
            p[(j, j)] += lambda;
        }
        p
    };
    let singular = |what| Error::NotPositiveDefinite { what, step: 0 };
    let lf = ridge(cov_f).cholesky().ok_or(singular("filter covariance"))?;
    let ls = ridge(cov_s).cholesky().ok_or(singular("smoother covariance"))?;
    let log_det = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();

    let trace = lf.solve(&ridge(cov_s)).trace();
    let d = DVector::from_column_slice(mean_f) - DVector::from_column_slice(mean_s);
    let quad = d.dot(&lf.solve(&d));
    let kl = 0.5 * (trace - n as f64 + quad + log_det(&lf.l()) - log_det(&ls.l()));
    if !kl.is_finite() {
        return Err(singular("filter covariance"));
    }
    Ok(kl)
}

/// ACI metric at node `k`: `KL(smoother ‖ filter)`.
pub fn aci_metric(filter: &MomentSeries, smoother: &MomentSeries, k: usize, jitter: f64) -> Result<f64> {
    if filter.grid() != smoother.grid() || filter.dim() != smoother.dim() {
        return Err(Error::InvalidInput("filter and smoother moments live on different grids".into()));
    }
    let (Some(pf), Some(ps)) = (filter.cov(k), smoother.cov(k)) else {
        return Err(Error::InvalidInput("ACI metric needs recorded covariances".into()));
    };
    gaussian_kl(
        smoother.mean(k),
        &ps.into_owned(),
        filter.mean(k),
        &pf.into_owned(),
        jitter,
    )
}

#[derive(Debug, Clone)]
pub struct AciOptions {
    /// Number of uniformly spaced positive lags.
    pub lags: usize,
    /// Largest lag in model time units.
    pub max_lag: f64,
    /// Evaluation every `stride` grid steps.
    pub stride: usize,
    /// CIR is the shortest lag reaching this fraction of the full-window metric.
    pub saturation: f64,
    /// Full-window metrics below this give CIR 0.
    pub floor: f64,
    pub smoother: SmootherOptions,
}

impl Default for AciOptions {
    fn default() -> Self {
        Self {
            lags: 25,
            max_lag: 10.0,
            stride: 20,
            saturation: 0.95,
            floor: 1e-6,
            smoother: SmootherOptions::default(),
        }
    }
}

impl AciOptions {
    fn validate(&self) -> Result<()> {
        if self.lags == 0 || self.stride == 0 || !(self.max_lag > 0.0) {
            return Err(Error::InvalidInput("lag grid needs positive lags, stride and range".into()));
        }
        if !(self.saturation > 0.0 && self.saturation < 1.0) {
            return Err(Error::InvalidInput(format!(
                "saturation must lie in (0, 1), got {}",
                self.saturation
            )));
        }
        Ok(())
    }

    /// Lag spacing in grid steps, rounded up to a multiple of the stride.
    pub fn lag_spacing(&self, dt: f64) -> usize {
        let raw = (self.max_lag / self.lags as f64 / dt).round().max(1.0) as usize;
        raw.div_ceil(self.stride) * self.stride
    }
}

/// Lagged-smoother ACI metrics on the evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedMetrics {
    /// Evaluation nodes.
    pub nodes: Vec<usize>,
    /// Positive lags in grid steps, ascending.
    pub lag_steps: Vec<usize>,
    /// `metrics[(e, l)]`: metric at `nodes[e]` with lag `lag_steps[l]`,
    /// right end clamped to the window.
    pub metrics: DMatrix<f64>,
    /// Full-window metric at each evaluation node.
    pub full: Vec<f64>,
    /// Last grid node of the window.
    pub last: usize,
}

/// ACI metric and CIR along a run.
#[derive(Debug, Clone, PartialEq)]
pub struct AciSeries {
    pub times: Vec<f64>,
    pub metric: Vec<f64>,
    /// Causal influence range in model time units.
    pub cir: Vec<f64>,
}

fn smoother_moments_at(ens: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = ens.ncols() as f64;
    let mean: Vec<f64> = ens.row_iter().map(|r| r.sum() / m).collect();
    Ok((mean, empirical_cov(ens)?))
}

/// Run the lagged-smoother sweep. `full` must be the full-window smoother
/// of `frun` with covariances.
pub fn lagged_smoother_sweep(
    model: &SdeModel,
    frun: &FilterRun,
    full: &SmootherRun,
    opts: &AciOptions,
) -> Result<LaggedMetrics> {
    opts.validate()?;
    let grid = *frun.grid();
    let last = grid.steps();
    let spacing = opts.lag_spacing(grid.dt());
    let lag_steps: Vec<usize> = (1..=opts.lags).map(|j| j * spacing).collect();
    let max_lag = *lag_steps.last().expect("at least one lag");
    let nodes: Vec<usize> = (0..=last).step_by(opts.stride).collect();
    let jitter = opts.smoother.jitter;

    let full_metric = nodes
        .iter()
        .map(|&k| aci_metric(&frun.moments, &full.moments, k, jitter))
        .collect::<Result<Vec<_>>>()?;

    // Right ends strictly inside the window; lags reaching `last` reuse the
    // full smoother.
    let ends: Vec<usize> = nodes.iter().copied().filter(|&e| e > 0 && e < last).collect();
    let per_end: Vec<Vec<(usize, usize, f64)>> = ends
        .par_iter()
        .map(|&end| {
            let start = end.saturating_sub(max_lag);
            let mut out = Vec::new();
            backward_pass(model, frun, end, start, &opts.smoother, |k, ens| {
                if k == end || k % opts.stride != 0 {
                    return Ok(());
                }
                let lag = end - k;
                if let Some(l) = lag_steps.iter().position(|&s| s == lag) {
                    let (ms, ps) = smoother_moments_at(ens.matrix())?;
                    let pf = frun.moments.cov(k).ok_or_else(|| {
                        Error::InvalidInput("ACI metric needs recorded covariances".into())
                    })?;
                    let kl = gaussian_kl(&ms, &ps, frun.moments.mean(k), &pf.into_owned(), jitter)?;
                    out.push((k / opts.stride, l, kl));
                }
                Ok(())
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut metrics = DMatrix::from_element(nodes.len(), lag_steps.len(), f64::NAN);
    for (e, &k) in nodes.iter().enumerate() {
        for (l, &lag) in lag_steps.iter().enumerate() {
            if k + lag >= last {
                metrics[(e, l)] = full_metric[e];
            }
        }
    }
    for (e, l, kl) in per_end.into_iter().flatten() {
        metrics[(e, l)] = kl;
    }
    Ok(LaggedMetrics {
        nodes,
        lag_steps,
        metrics,
        full: full_metric,
        last,
    })
}

/// Causal influence range from lagged metrics, in model time units.
///
/// The lag set at node `k` is the positive lag grid plus the full-window
/// lag `T − t_k`, so the result never exceeds the remaining window.
pub fn cir(lagged: &LaggedMetrics, dt: f64, saturation: f64, floor: f64) -> Vec<f64> {
    lagged
        .nodes
        .iter()
        .enumerate()
        .map(|(e, &k)| {
            let full = lagged.full[e];
            if !(full >= floor) {
                return 0.0;
            }
            let remaining = lagged.last - k;
            let lag = lagged
                .lag_steps
                .iter()
                .enumerate()
                .find(|&(l, _)| lagged.metrics[(e, l)] >= saturation * full)
                .map_or(remaining, |(_, &lag)| lag.min(remaining));
            lag as f64 * dt
        })
        .collect()
}

/// ACI metric and CIR on the evaluation grid.
pub fn aci_series(model: &SdeModel, frun: &FilterRun, full: &SmootherRun, opts: &AciOptions) -> Result<AciSeries> {
    let lagged = lagged_smoother_sweep(model, frun, full, opts)?;
    let grid = frun.grid();
    let cir = cir(&lagged, grid.dt(), opts.saturation, opts.floor);
    Ok(AciSeries {
        times: lagged.nodes.iter().map(|&k| grid.time(k)).collect(),
        metric: lagged.full.clone(),
        cir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{gaussian_ensemble, run_filter, FilterOptions};
    use crate::sde::{integrate_truth, FnDynamics, NoiseCov, NoiseStream, TimeGrid};
    use crate::smoother::run_smoother;

    fn one(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn closed_form_scalar_values() {
        assert!(gaussian_kl(&[0.3], &one(2.0), &[0.3], &one(2.0), 0.0).unwrap().abs() < 1e-15);
        assert!((gaussian_kl(&[1.0], &one(1.0), &[0.0], &one(1.0), 0.0).unwrap() - 0.5).abs() < 1e-15);
        let expected = 0.5 * (2.0 - 1.0 - 2f64.ln());
        assert!((gaussian_kl(&[0.0], &one(2.0), &[0.0], &one(1.0), 0.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn singular_filter_covariance_is_rejected() {
        assert!(gaussian_kl(&[0.0], &one(1.0), &[0.0], &one(0.0), 0.0).is_err());
    }

    #[test]
    fn lag_spacing_is_stride_aligned() {
        let opts = AciOptions::default();
        assert_eq!(opts.lag_spacing(0.005), 80);
        let odd = AciOptions { stride: 30, ..Default::default() };
        assert_eq!(odd.lag_spacing(0.005), 90);
    }

    #[test]
    fn long_lags_reproduce_the_full_smoother() {
        let model = SdeModel::new(
            FnDynamics::new(1, 1, |x, _, _, o| o[0] = -x[0], |x, _, _, o| o[0] = x[0]),
            NoiseCov::isotropic(1, 1.0).unwrap(),
            NoiseCov::isotropic(1, 1.0).unwrap(),
        )
        .unwrap();
        let grid = TimeGrid::new(0.0, 3.0, 0.01).unwrap();
        let (_, y) = integrate_truth(&model, &grid, &[0.5], &[0.0], &NoiseStream::new(1)).unwrap();
        let init = gaussian_ensemble(&[0.0], 1.0, 40, &NoiseStream::new(2)).unwrap();
        let frun = run_filter(&model, &y, &init, &NoiseStream::new(3), &FilterOptions::default()).unwrap();
        let srun = run_smoother(&model, &frun, &SmootherOptions::default()).unwrap();
        let opts = AciOptions {
            lags: 5,
            max_lag: 1.0,
            stride: 10,
            ..Default::default()
        };
        let lagged = lagged_smoother_sweep(&model, &frun, &srun, &opts).unwrap();
        assert_eq!(lagged.lag_steps, vec![20, 40, 60, 80, 100]);
        assert!(lagged.metrics.iter().all(|v| v.is_finite() && *v >= -1e-10));
        // node 0 with lag 300 would be the full window; lag 100 at node 200 reaches the end
        let e = lagged.nodes.iter().position(|&k| k == 200).unwrap();
        assert_eq!(lagged.metrics[(e, 4)], lagged.full[e]);
        let c = cir(&lagged, 0.01, 0.95, 1e-6);
        for (&k, &v) in lagged.nodes.iter().zip(&c) {
            assert!(v >= 0.0 && v <= 0.01 * (300 - k) as f64 + 1e-12);
        }
        assert_eq!(*c.last().unwrap(), 0.0);
    }
}
