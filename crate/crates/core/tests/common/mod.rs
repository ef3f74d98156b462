//! Invariant checks shared by the property suite and the acceptance run.
#![allow(dead_code)]

use kalman_bucy::aci::gaussian_kl;
use kalman_bucy::discovery::{
    causation_entropy, estimate_params, identify_structure, IndicatorMatrix, LinearConstraint, RegressionData,
};
use kalman_bucy::ensemble::{empirical_cov, empirical_mean, inflate};
use kalman_bucy::filter::{gaussian_ensemble, run_filter, FilterOptions};
use kalman_bucy::localization::{gaspari_cohn, ring_distance, schur_localize, LocalizationMatrix};
use kalman_bucy::models::Lorenz96Config;
use kalman_bucy::sde::{integrate_truth, FnDynamics, NoiseCov, NoiseStream, SdeModel, Tag, TimeGrid};
use kalman_bucy::smoother::{run_smoother, SmootherOptions};
use nalgebra::DMatrix;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn gaspari_cohn_reference() -> Check {
    ensure!(gaspari_cohn(0.0).unwrap() == 1.0, "G(0) ≠ 1");
    ensure!((gaspari_cohn(1.0).unwrap() - 5.0 / 24.0).abs() < 1e-14, "G(1) ≠ 5/24");
    ensure!(gaspari_cohn(2.0).unwrap() == 0.0, "G(2) ≠ 0");
    ensure!(gaspari_cohn(-0.1).is_err(), "negative distance accepted");
    for knot in [1.0f64, 2.0] {
        let (lo, hi) = (gaspari_cohn(knot - 1e-9).unwrap(), gaspari_cohn(knot + 1e-9).unwrap());
        ensure!((lo - hi).abs() < 1e-8, "jump at {knot}: {lo} vs {hi}");
    }
    Ok(())
}

pub fn gaspari_cohn_vanishes(r: f64) -> Check {
    let g = gaspari_cohn(r).unwrap();
    ensure!(g == 0.0, "G({r}) = {g}");
    Ok(())
}

pub fn gaspari_cohn_monotone(a: f64, b: f64) -> Check {
    let (lo, hi) = (a.min(b), a.max(b));
    let (g_lo, g_hi) = (gaspari_cohn(lo).unwrap(), gaspari_cohn(hi).unwrap());
    ensure!((0.0..=1.0).contains(&g_lo) && (0.0..=1.0).contains(&g_hi), "weight outside [0, 1]");
    ensure!(g_hi <= g_lo + 1e-15, "G({hi}) = {g_hi} > G({lo}) = {g_lo}");
    Ok(())
}

/// `factor` is a column-major `40 × 9` factor of the covariance.
pub fn schur_keeps_psd(factor: Vec<f64>) -> Check {
    let a = DMatrix::from_vec(40, 9, factor);
    let p = &a * a.transpose();
    let taper = LocalizationMatrix::periodic(40, 3.0).unwrap();
    let localized = schur_localize(&p, &taper).unwrap();
    let min = localized.clone().symmetric_eigenvalues().min();
    ensure!(min >= -1e-8 * p.trace().max(1.0), "min eigenvalue {min}");
    ensure!(localized.transpose() == localized, "localized covariance not symmetric");
    Ok(())
}

/// `values` is a column-major `3 × 8` ensemble.
pub fn inflation_scales(values: Vec<f64>, delta: f64) -> Check {
    let members = DMatrix::from_vec(3, 8, values);
    let mut inflated = members.clone();
    inflate(&mut inflated, delta).unwrap();
    let (m0, m1) = (empirical_mean(&members), empirical_mean(&inflated));
    let scale = members.amax().max(1.0);
    for (a, b) in m0.iter().zip(m1.iter()) {
        ensure!((a - b).abs() <= 1e-12 * scale, "mean moved from {a} to {b}");
    }
    let (p0, p1) = (empirical_cov(&members).unwrap(), empirical_cov(&inflated).unwrap());
    let tol = 1e-11 * p0.amax() * delta * delta;
    for (a, b) in p0.iter().zip(p1.iter()) {
        ensure!((a * delta * delta - b).abs() <= tol, "covariance {b} ≠ δ²·{a}");
    }
    Ok(())
}

fn brownian() -> SdeModel {
    SdeModel::new(
        FnDynamics::new(1, 1, |_, _, _, o| o[0] = 0.0, |x, _, _, o| o[0] = x[0]),
        NoiseCov::isotropic(1, 1.0).unwrap(),
        NoiseCov::isotropic(1, 1.0).unwrap(),
    )
    .unwrap()
}

/// Without assimilation and drift the backward recursion retraces the
/// forward member paths.
pub fn smoother_replays_filter(seed: u64) -> Check {
    let model = brownian();
    let grid = TimeGrid::with_steps(0.0, 0.01, 60).unwrap();
    let (_, y) = integrate_truth(&model, &grid, &[0.0], &[0.0], &NoiseStream::new(seed)).unwrap();
    let init = gaussian_ensemble(&[0.0], 1.0, 6, &NoiseStream::new(seed ^ 1)).unwrap();
    let opts = FilterOptions {
        assimilate: false,
        ..Default::default()
    };
    let frun = run_filter(&model, &y, &init, &NoiseStream::new(seed ^ 2), &opts).unwrap();
    let srun = run_smoother(&model, &frun, &SmootherOptions::default()).unwrap();
    let h = srun.history.unwrap();
    ensure!(h.view(60) == frun.history.view(60), "smoother does not start at the filter ensemble");
    for k in 0..=60 {
        for i in 0..6 {
            let (s, f) = (h.member(k, i)[0], frun.history.member(k, i)[0]);
            ensure!((s - f).abs() < 1e-12, "member {i} at step {k}: {s} vs {f}");
        }
    }
    Ok(())
}

pub fn keyed_noise_blocks(seed: u64, step: usize, dim: usize) -> Check {
    let noise = NoiseStream::new(seed);
    let m = 7;
    let mut block = vec![0.0; dim * m];
    noise.fill_block(Tag::Signal, step, dim, &mut block);
    for i in 0..m {
        ensure!(
            noise.gaussian(Tag::Signal, i, step, dim)[..] == block[i * dim..(i + 1) * dim],
            "member {i} differs from its block slice"
        );
    }
    Ok(())
}

fn spd(values: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_column_slice(3, 3, values);
    &a * a.transpose() + DMatrix::identity(3, 3) * 0.05
}

/// `a`, `b` are 9 factor entries; `ma`, `mb` are 3-vectors.
pub fn kl_nonnegative(a: &[f64], b: &[f64], ma: &[f64], mb: &[f64]) -> Check {
    let (pa, pb) = (spd(a), spd(b));
    let kl = gaussian_kl(ma, &pa, mb, &pb, 1e-8).unwrap();
    ensure!(kl >= -1e-10, "KL = {kl}");
    let self_kl = gaussian_kl(ma, &pa, ma, &pa, 1e-8).unwrap();
    ensure!(self_kl.abs() < 1e-10, "KL(p‖p) = {self_kl}");
    Ok(())
}

pub const SAMPLES: usize = 60;

/// Two equations over four features; `features` is `SAMPLES × 4`
/// column-major, `coeffs` 8 entries, `noise` `SAMPLES × 2`.
pub fn regression(features: Vec<f64>, coeffs: &[f64], noise: &[f64]) -> RegressionData {
    let features = DMatrix::from_vec(SAMPLES, 4, features);
    let mut rates = DMatrix::zeros(SAMPLES, 2);
    for r in 0..SAMPLES {
        for i in 0..2 {
            rates[(r, i)] = (0..4).map(|j| coeffs[i * 4 + j] * features[(r, j)]).sum::<f64>() + noise[r * 2 + i];
        }
    }
    RegressionData {
        features,
        rates,
        dt: 0.01,
    }
}

pub fn causation_entropy_monotone(data: &RegressionData, r1: f64, r2: f64) -> Check {
    let ce = causation_entropy(data).unwrap();
    ensure!(ce.values.iter().all(|&v| v >= 0.0), "negative causation entropy");
    let (lo, hi) = (r1.min(r2), r1.max(r2));
    let (c_lo, c_hi) = (identify_structure(&ce, lo, 0), identify_structure(&ce, hi, 0));
    for i in 0..2 {
        for j in 0..4 {
            ensure!(!c_hi.get(i, j) || c_lo.get(i, j), "({i}, {j}) active at {hi} but not at {lo}");
        }
        ensure!(c_hi.get(i, 0), "constant column dropped");
    }
    Ok(())
}

pub fn constraints_hold_exactly(data: &RegressionData, sigma: [f64; 2]) -> Check {
    let structure = IndicatorMatrix::from_fn(2, 4, |_, _| true);
    let constraints = [LinearConstraint::cancel((0, 1), (1, 2)), LinearConstraint::cancel((0, 3), (1, 1))];
    let est = estimate_params(data, &structure, &sigma, &constraints).unwrap();
    for c in &constraints {
        let r = c.residual(&est.theta);
        ensure!(r == 0.0, "constraint residual {r}");
    }
    ensure!(est.sigma.iter().all(|&s| s > 0.0), "nonpositive noise estimate");
    Ok(())
}

/// Two localized, inflated Lorenz-96 filter/smoother runs agree bit for bit.
pub fn lorenz96_bit_reproducible() -> Check {
    let lattice = Lorenz96Config::default();
    let model = lattice.model().unwrap();
    let (x0, y0) = lattice.split(&lattice.spin_up(5.0, 0.005));
    let grid = TimeGrid::new(0.0, 2.0, 0.001).unwrap();
    let (hid, obs) = (lattice.hidden_sites(), lattice.observed_sites());
    let run = || {
        let (_, y) = integrate_truth(&model, &grid, &x0, &y0, &NoiseStream::new(5)).unwrap();
        let init = gaussian_ensemble(&x0, 0.1, 10, &NoiseStream::new(6)).unwrap();
        let opts = FilterOptions {
            localization: Some(LocalizationMatrix::between(&hid, &obs, 3.0, ring_distance(40)).unwrap()),
            inflation: 1.005,
            ..Default::default()
        };
        let frun = run_filter(&model, &y, &init, &NoiseStream::new(7), &opts).unwrap();
        let sopts = SmootherOptions {
            localization: Some(LocalizationMatrix::periodic_sites(&hid, 40, 3.0).unwrap()),
            ..Default::default()
        };
        let srun = run_smoother(&model, &frun, &sopts).unwrap();
        (frun.moments, srun.moments, srun.history)
    };
    let (a, b) = (run(), run());
    ensure!(a == b, "repeated runs differ");
    Ok(())
}
