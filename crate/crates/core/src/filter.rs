//! Forward pass: the derivative-free stochastic ensemble Kalman–Bucy filter
//! (EnKBF) on an Euler–Maruyama grid, with optional localization of the
//! state/observation cross-covariance and multiplicative inflation.
//!
//! One step advances every member with
//!
//! ```text
//! x⁽ⁱ⁾ ← x⁽ⁱ⁾ + τ f(x⁽ⁱ⁾) + √τ Σ^{1/2} B⁽ⁱ⁾ + P̃_xh Γ⁻¹ (Δy − τ h(x⁽ⁱ⁾) − √τ Γ^{1/2} W⁽ⁱ⁾)
//! ```
//!
//! where `P̃_xh` is the (optionally tapered) empirical cross-covariance between
//! members and their observation drifts, evaluated before the update.

use nalgebra::DMatrix;

use crate::ensemble::{Ensemble, EnsembleHistory, MomentKind, MomentSeries};
use crate::error::{Error, Pass, Result};
use crate::localization::LocalizationMatrix;
use crate::sde::{is_blown_up, NoiseStream, SdeModel, Tag, TimeGrid, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterVariant {
    /// Innovation against member-simulated observation increments.
    Stochastic,
    /// Innovation against `τ (h(x⁽ⁱ⁾) + h̄) / 2`, no simulated noise.
    Deterministic,
}

#[derive(Debug, Clone)]
pub struct FilterOptions {
    /// `n_x × n_y` taper applied to `P_xh`.
    pub localization: Option<LocalizationMatrix>,
    /// Inflation `δ²`; anomalies are scaled by `δ` after every step.
    pub inflation: f64,
    pub variant: FilterVariant,
    /// `false` forces the gain to zero (pure ensemble forecast).
    pub assimilate: bool,
    pub record_covariances: bool,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            localization: None,
            inflation: 1.0,
            variant: FilterVariant::Stochastic,
            assimilate: true,
            record_covariances: true,
        }
    }
}

/// Completed forward pass.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub history: EnsembleHistory,
    pub moments: MomentSeries,
    pub observations: Trajectory,
    pub noise: NoiseStream,
    pub options: FilterOptions,
}

impl FilterRun {
    pub fn grid(&self) -> &TimeGrid {
        self.observations.grid()
    }

    pub fn ensemble_size(&self) -> usize {
        self.history.size()
    }
}

/// Per-step scratch buffers, reused across steps.
pub(crate) struct StepBuffers {
    fx: Vec<f64>,
    hx: Vec<f64>,
    b: Vec<f64>,
    w: Vec<f64>,
    x_mean: Vec<f64>,
    h_mean: Vec<f64>,
    pxh: Vec<f64>,
    gain: Vec<f64>,
    innov: Vec<f64>,
}

impl StepBuffers {
    pub(crate) fn new(n_x: usize, n_y: usize, m: usize) -> Self {
        Self {
            fx: vec![0.0; n_x * m],
            hx: vec![0.0; n_y * m],
            b: vec![0.0; n_x * m],
            w: vec![0.0; n_y * m],
            x_mean: vec![0.0; n_x],
            h_mean: vec![0.0; n_y],
            pxh: vec![0.0; n_x * n_y],
            gain: vec![0.0; n_x * n_y],
            innov: vec![0.0; n_y],
        }
    }
}

fn check_options(model: &SdeModel, opts: &FilterOptions) -> Result<()> {
    if !(opts.inflation >= 1.0) || !opts.inflation.is_finite() {
        return Err(Error::InvalidInput(format!(
            "inflation must be >= 1, got {}",
            opts.inflation
        )));
    }
    if let Some(c) = &opts.localization {
        if c.matrix().shape() != (model.n_x(), model.n_y()) {
            return Err(Error::Dimension {
                what: "filter localization taper",
                expected: model.n_x() * model.n_y(),
                found: c.matrix().len(),
            });
        }
    }
    Ok(())
}

/// Advance `ens` from node `k` to `k + 1` given the observation `y_k` and
/// increment `Δy_{k+1}`.
#[allow(clippy::too_many_arguments)]
pub fn enkbf_step(
    model: &SdeModel,
    ens: &mut Ensemble,
    k: usize,
    t: f64,
    tau: f64,
    y_k: &[f64],
    dy: &[f64],
    noise: &NoiseStream,
    opts: &FilterOptions,
) -> Result<()> {
    check_options(model, opts)?;
    let mut buf = StepBuffers::new(model.n_x(), model.n_y(), ens.size());
    step_with(model, ens, k, t, tau, y_k, dy, noise, opts, &mut buf)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn step_with(
    model: &SdeModel,
    ens: &mut Ensemble,
    k: usize,
    t: f64,
    tau: f64,
    y_k: &[f64],
    dy: &[f64],
    noise: &NoiseStream,
    opts: &FilterOptions,
    buf: &mut StepBuffers,
) -> Result<()> {
    let (n_x, n_y, m) = (model.n_x(), model.n_y(), ens.size());
    let sqrt_tau = tau.sqrt();

    for i in 0..m {
        let x = ens.member(i);
        model.signal_drift(x, y_k, t, &mut buf.fx[i * n_x..(i + 1) * n_x]);
        model.observation_drift(x, y_k, t, &mut buf.hx[i * n_y..(i + 1) * n_y]);
    }

    let assimilate = opts.assimilate && n_y > 0 && m > 1;
    if assimilate {
        column_mean(ens.matrix().as_slice(), n_x, m, &mut buf.x_mean);
        column_mean(&buf.hx, n_y, m, &mut buf.h_mean);
        buf.pxh.fill(0.0);
        let xs = ens.matrix().as_slice();
        for i in 0..m {
            let xi = &xs[i * n_x..(i + 1) * n_x];
            let hi = &buf.hx[i * n_y..(i + 1) * n_y];
            for c in 0..n_y {
                let dh = hi[c] - buf.h_mean[c];
                let col = &mut buf.pxh[c * n_x..(c + 1) * n_x];
                for r in 0..n_x {
                    col[r] += (xi[r] - buf.x_mean[r]) * dh;
                }
            }
        }
        let scale = 1.0 / (m as f64 - 1.0);
        match &opts.localization {
            Some(taper) => {
                for (p, c) in buf.pxh.iter_mut().zip(taper.matrix().as_slice()) {
                    *p *= scale * c;
                }
            }
            None => buf.pxh.iter_mut().for_each(|p| *p *= scale),
        }
        // gain = P̃_xh Γ⁻¹
        let g_inv = model.gamma_inv();
        buf.gain.fill(0.0);
        for c in 0..n_y {
            for l in 0..n_y {
                let g = g_inv[(l, c)];
                if g == 0.0 {
                    continue;
                }
                for r in 0..n_x {
                    buf.gain[c * n_x + r] += buf.pxh[l * n_x + r] * g;
                }
            }
        }
        if opts.variant == FilterVariant::Stochastic {
            noise.fill_block(Tag::Observation, k, n_y, &mut buf.w);
        }
    }

    let has_signal_noise = !model.sigma().is_zero();
    if has_signal_noise {
        noise.fill_block(Tag::Signal, k, n_x, &mut buf.b);
    }

    for i in 0..m {
        if assimilate {
            let hi = &buf.hx[i * n_y..(i + 1) * n_y];
            match opts.variant {
                FilterVariant::Stochastic => {
                    for c in 0..n_y {
                        buf.innov[c] = dy[c] - tau * hi[c];
                    }
                    model
                        .gamma()
                        .add_scaled(-sqrt_tau, &buf.w[i * n_y..(i + 1) * n_y], &mut buf.innov);
                }
                FilterVariant::Deterministic => {
                    for c in 0..n_y {
                        buf.innov[c] = dy[c] - 0.5 * tau * (hi[c] + buf.h_mean[c]);
                    }
                }
            }
        }
        let x = ens.member_mut(i);
        for (xr, fr) in x.iter_mut().zip(&buf.fx[i * n_x..(i + 1) * n_x]) {
            *xr += tau * fr;
        }
        if has_signal_noise {
            model
                .sigma()
                .add_scaled(sqrt_tau, &buf.b[i * n_x..(i + 1) * n_x], x);
        }
        if assimilate {
            for c in 0..n_y {
                let v = buf.innov[c];
                for (r, xr) in x.iter_mut().enumerate() {
                    *xr += buf.gain[c * n_x + r] * v;
                }
            }
        }
    }

    if opts.inflation > 1.0 {
        ens.inflate(opts.inflation.sqrt())?;
    }

    if is_blown_up(ens.matrix().as_slice()) {
        return Err(Error::Divergence {
            pass: Pass::Filter,
            step: k + 1,
        });
    }
    Ok(())
}

pub(crate) fn column_mean(data: &[f64], n: usize, m: usize, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..m {
        for (o, v) in out.iter_mut().zip(&data[i * n..(i + 1) * n]) {
            *o += v;
        }
    }
    let inv = 1.0 / m as f64;
    out.iter_mut().for_each(|o| *o *= inv);
}

/// Run the filter over the whole observation record.
pub fn run_filter(
    model: &SdeModel,
    observations: &Trajectory,
    init: &Ensemble,
    noise: &NoiseStream,
    opts: &FilterOptions,
) -> Result<FilterRun> {
    check_options(model, opts)?;
    if observations.dim() != model.n_y() {
        return Err(Error::Dimension {
            what: "observation trajectory",
            expected: model.n_y(),
            found: observations.dim(),
        });
    }
    if init.dim() != model.n_x() {
        return Err(Error::Dimension {
            what: "initial ensemble",
            expected: model.n_x(),
            found: init.dim(),
        });
    }
    let grid = *observations.grid();
    let m = init.size();
    let record_cov = opts.record_covariances && m > 1;
    let mut history = EnsembleHistory::with_capacity(model.n_x(), m, grid.len());
    let mut moments = MomentSeries::new(grid, model.n_x(), MomentKind::Filter, record_cov);

    let mut ens = init.clone();
    history.push(&ens);
    moments.record(0, ens.matrix())?;

    let mut buf = StepBuffers::new(model.n_x(), model.n_y(), m);
    let mut dy = vec![0.0; model.n_y()];
    for k in 0..grid.steps() {
        observations.increment(k, &mut dy);
        step_with(
            model,
            &mut ens,
            k,
            grid.time(k),
            grid.dt(),
            observations.row(k),
            &dy,
            noise,
            opts,
            &mut buf,
        )?;
        history.push(&ens);
        moments.record(k + 1, ens.matrix())?;
    }

    Ok(FilterRun {
        history,
        moments,
        observations: observations.clone(),
        noise: *noise,
        options: opts.clone(),
    })
}

/// Ensemble of `m` members `mean + spread · N(0, I)` drawn from the
/// `Init` substream.
pub fn gaussian_ensemble(mean: &[f64], spread: f64, m: usize, noise: &NoiseStream) -> Result<Ensemble> {
    let n = mean.len();
    let mut buf = vec![0.0; n * m];
    noise.fill_block(Tag::Init, 0, n, &mut buf);
    for (i, v) in buf.iter_mut().enumerate() {
        *v = mean[i % n.max(1)] + spread * *v;
    }
    Ensemble::new(DMatrix::from_vec(n, m, buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{integrate_truth, FnDynamics, NoiseCov};

    fn ou_model() -> SdeModel {
        SdeModel::new(
            FnDynamics::new(1, 1, |x, _, _, o| o[0] = -x[0], |x, _, _, o| o[0] = x[0]),
            NoiseCov::isotropic(1, 1.0).unwrap(),
            NoiseCov::isotropic(1, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn ou_data(steps: usize) -> Trajectory {
        let grid = TimeGrid::with_steps(0.0, 0.01, steps).unwrap();
        integrate_truth(&ou_model(), &grid, &[0.5], &[0.0], &NoiseStream::new(1))
            .unwrap()
            .1
    }

    #[test]
    fn zero_steps_keeps_initial_moments() {
        let y = ou_data(0);
        let init = gaussian_ensemble(&[0.0], 1.0, 20, &NoiseStream::new(2)).unwrap();
        let run = run_filter(&ou_model(), &y, &init, &NoiseStream::new(3), &FilterOptions::default())
            .unwrap();
        assert_eq!(run.history.len(), 1);
        assert_eq!(run.moments.mean(0), init.mean().as_slice());
    }

    #[test]
    fn zero_gain_is_pure_forecast() {
        let model = ou_model();
        let y = ou_data(50);
        let init = gaussian_ensemble(&[0.0], 1.0, 8, &NoiseStream::new(2)).unwrap();
        let noise = NoiseStream::new(4);
        let opts = FilterOptions {
            assimilate: false,
            ..Default::default()
        };
        let run = run_filter(&model, &y, &init, &noise, &opts).unwrap();
        // each member follows its own Euler–Maruyama path
        for i in 0..8 {
            let mut x = init.member(i)[0];
            for k in 0..50 {
                let b = noise.gaussian(Tag::Signal, i, k, 1)[0];
                x = x + 0.01 * (-x) + 0.1 * b;
                assert_eq!(run.history.member(k + 1, i)[0], x);
            }
        }
    }

    #[test]
    fn linear_gain_matches_covariance_form() {
        // with h(x) = H x the derivative-free gain equals P Hᵀ Γ⁻¹
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, -0.2, 0.0, 2.0]);
        let h2 = h.clone();
        let model = SdeModel::new(
            FnDynamics::new(
                3,
                2,
                |_, _, _, o| o.fill(0.0),
                move |x, _, _, o| {
                    let v = &h2 * nalgebra::DVector::from_column_slice(x);
                    o.copy_from_slice(v.as_slice());
                },
            ),
            NoiseCov::isotropic(3, 0.0).unwrap(),
            NoiseCov::diagonal(&[0.5, 2.0]).unwrap(),
        )
        .unwrap();
        let ens0 = gaussian_ensemble(&[0.0, 1.0, -1.0], 1.0, 12, &NoiseStream::new(8)).unwrap();
        let dy = [0.3, -0.1];
        let opts = FilterOptions {
            variant: FilterVariant::Deterministic,
            ..Default::default()
        };
        let mut ens = ens0.clone();
        enkbf_step(&model, &mut ens, 0, 0.0, 0.1, &[0.0, 0.0], &dy, &NoiseStream::new(1), &opts)
            .unwrap();

        let p = ens0.covariance().unwrap();
        let gain = &p * h.transpose() * model.gamma_inv();
        let hbar = &h * ens0.mean();
        for i in 0..12 {
            let xi = nalgebra::DVector::from_column_slice(ens0.member(i));
            let hx = &h * &xi;
            let innov = nalgebra::DVector::from_column_slice(&dy) - (hx + &hbar) * 0.05;
            let expected = xi + &gain * innov;
            for r in 0..3 {
                assert!((ens.member(i)[r] - expected[r]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_deflation() {
        let y = ou_data(2);
        let init = gaussian_ensemble(&[0.0], 1.0, 4, &NoiseStream::new(2)).unwrap();
        let opts = FilterOptions {
            inflation: 0.99,
            ..Default::default()
        };
        assert!(run_filter(&ou_model(), &y, &init, &NoiseStream::new(3), &opts).is_err());
    }

    #[test]
    fn divergence_reports_step() {
        let model = SdeModel::new(
            FnDynamics::new(1, 1, |x, _, _, o| o[0] = x[0] * x[0], |_, _, _, o| o[0] = 0.0),
            NoiseCov::isotropic(1, 0.0).unwrap(),
            NoiseCov::isotropic(1, 1.0).unwrap(),
        )
        .unwrap();
        let y = Trajectory::from_flat(TimeGrid::with_steps(0.0, 0.1, 200).unwrap(), 1, vec![0.0; 201])
            .unwrap();
        let init = gaussian_ensemble(&[1.0], 0.01, 4, &NoiseStream::new(2)).unwrap();
        let err = run_filter(&model, &y, &init, &NoiseStream::new(3), &FilterOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { pass: Pass::Filter, step } if step > 1));
    }
}
