//! Brute-force particle oracle: a bootstrap filter on the Euler-discretized
//! model followed by marginal forward-filtering/backward-smoothing (FFBSm).
//!
//! Cost is `O(N² K)`, so it is meant for short windows.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::OracleMoments;
use crate::ensemble::{MomentKind, MomentSeries};
use crate::error::{Error, Result};
use crate::sde::{NoiseStream, SdeModel, Tag, Trajectory};

#[derive(Debug, Clone)]
pub struct ParticleOptions {
    pub particles: usize,
    pub prior_mean: Vec<f64>,
    pub prior_spread: f64,
    /// Resample when the effective sample size drops below this fraction.
    pub resample_fraction: f64,
    /// Abort when the effective sample size falls below this count.
    pub min_ess: f64,
}

impl ParticleOptions {
    pub fn new(particles: usize, prior_mean: Vec<f64>, prior_spread: f64) -> Self {
        Self {
            particles,
            prior_mean,
            prior_spread,
            resample_fraction: 0.5,
            min_ess: 10.0,
        }
    }
}

fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

fn normalize_log(logw: &[f64], out: &mut [f64]) {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, l) in out.iter_mut().zip(logw) {
        *o = (l - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

fn weighted_moments(particles: &[f64], weights: &[f64], n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let mut mean = vec![0.0; n];
    for (j, w) in weights.iter().enumerate() {
        for r in 0..n {
            mean[r] += w * particles[j * n + r];
        }
    }
    let mut cov = DMatrix::zeros(n, n);
    for (j, w) in weights.iter().enumerate() {
        let x = &particles[j * n..(j + 1) * n];
        for r in 0..n {
            for c in 0..n {
                cov[(r, c)] += w * (x[r] - mean[r]) * (x[c] - mean[c]);
            }
        }
    }
    (mean, cov)
}

/// Systematic resampling; returns ancestor indices.
fn systematic(weights: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = weights.len();
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut j = 0;
    for i in 0..n {
        let u = u0 + i as f64 / n as f64;
        while u > cum && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

pub fn particle_ffbs(
    model: &SdeModel,
    y: &Trajectory,
    noise: &NoiseStream,
    opts: &ParticleOptions,
) -> Result<OracleMoments> {
    let (n, n_y, big_n) = (model.n_x(), model.n_y(), opts.particles);
    if opts.prior_mean.len() != n {
        return Err(Error::Dimension {
            what: "particle prior mean",
            expected: n,
            found: opts.prior_mean.len(),
        });
    }
    if big_n == 0 {
        return Err(Error::InvalidInput("particle count must be positive".into()));
    }
    if (big_n as f64) < opts.min_ess {
        return Err(Error::EssCollapse {
            step: 0,
            ess: big_n as f64,
        });
    }
    let grid = *y.grid();
    let tau = grid.dt();
    let sqrt_tau = tau.sqrt();
    let k_steps = grid.steps();

    // transition precision (τΣ)⁻¹ and observation precision (τΓ)⁻¹
    let sigma_chol = model
        .sigma()
        .matrix()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite {
            what: "signal noise covariance",
            step: 0,
        })?;
    let trans_prec = sigma_chol.inverse() / tau;
    let obs_prec = model.gamma_inv() / tau;

    let mut rng = ChaCha8Rng::seed_from_u64(noise.derive(0x5E5A_3713).seed());

    let mut parts = vec![0.0; n * big_n];
    noise.fill_block(Tag::Init, 0, n, &mut parts);
    for (i, p) in parts.iter_mut().enumerate() {
        *p = opts.prior_mean[i % n] + opts.prior_spread * *p;
    }
    let mut weights = vec![1.0 / big_n as f64; big_n];

    // stored filter particles, weights and transition means x_k + τ f(x_k)
    let mut all_parts: Vec<Vec<f64>> = Vec::with_capacity(k_steps + 1);
    let mut all_w: Vec<Vec<f64>> = Vec::with_capacity(k_steps + 1);
    let mut all_means: Vec<Vec<f64>> = Vec::with_capacity(k_steps);

    let mut filter = MomentSeries::new(grid, n, MomentKind::Filter, true);
    let (m0, p0) = weighted_moments(&parts, &weights, n);
    filter.set(0, &m0, Some(&p0));

    let mut fx = vec![0.0; n];
    let mut hx = vec![0.0; n_y];
    let mut dy = vec![0.0; n_y];
    let mut b = vec![0.0; n * big_n];
    let mut logw = vec![0.0; big_n];
    let mut resid = DVector::zeros(n_y);

    for k in 0..k_steps {
        let t = grid.time(k);
        let yk = y.row(k);
        // transition means from the current (unresampled) filter particles
        let mut tmeans = vec![0.0; n * big_n];
        for j in 0..big_n {
            model.signal_drift(&parts[j * n..(j + 1) * n], yk, t, &mut fx);
            for r in 0..n {
                tmeans[j * n + r] = parts[j * n + r] + tau * fx[r];
            }
        }
        all_parts.push(parts.clone());
        all_w.push(weights.clone());

        let ancestors: Vec<usize> = if ess(&weights) < opts.resample_fraction * big_n as f64 {
            let a = systematic(&weights, &mut rng);
            weights.fill(1.0 / big_n as f64);
            a
        } else {
            (0..big_n).collect()
        };

        noise.fill_block(Tag::Particle, k, n, &mut b);
        let mut next = vec![0.0; n * big_n];
        for j in 0..big_n {
            let a = ancestors[j];
            let x = &mut next[j * n..(j + 1) * n];
            x.copy_from_slice(&tmeans[a * n..(a + 1) * n]);
            model.sigma().add_scaled(sqrt_tau, &b[j * n..(j + 1) * n], x);
        }
        all_means.push(tmeans);

        y.increment(k, &mut dy);
        for j in 0..big_n {
            model.observation_drift(&next[j * n..(j + 1) * n], yk, t, &mut hx);
            for c in 0..n_y {
                resid[c] = dy[c] - tau * hx[c];
            }
            logw[j] = weights[j].ln() - 0.5 * resid.dot(&(&obs_prec * &resid));
        }
        normalize_log(&logw, &mut weights);
        let e = ess(&weights);
        if !e.is_finite() || e < opts.min_ess {
            return Err(Error::EssCollapse { step: k + 1, ess: e });
        }
        parts = next;
        let (m, p) = weighted_moments(&parts, &weights, n);
        filter.set(k + 1, &m, Some(&p));
    }
    all_parts.push(parts);
    all_w.push(weights);

    // backward smoothing weights
    let mut smoother = MomentSeries::new(grid, n, MomentKind::Smoother, true);
    let mut ws = all_w[k_steps].clone();
    let (m, p) = weighted_moments(&all_parts[k_steps], &ws, n);
    smoother.set(k_steps, &m, Some(&p));

    let mut logk = vec![0.0; big_n];
    let mut diff = DVector::zeros(n);
    for k in (0..k_steps).rev() {
        let next = &all_parts[k + 1];
        let means = &all_means[k];
        let wk = &all_w[k];
        let log_wk: Vec<f64> = wk.iter().map(|w| w.ln()).collect();
        let mut acc = vec![0.0; big_n];
        for l in 0..big_n {
            if ws[l] < 1e-300 {
                continue;
            }
            let xl = &next[l * n..(l + 1) * n];
            let mut max = f64::NEG_INFINITY;
            for r in 0..big_n {
                for c in 0..n {
                    diff[c] = xl[c] - means[r * n + c];
                }
                let q = if n == 1 {
                    diff[0] * diff[0] * trans_prec[(0, 0)]
                } else {
                    diff.dot(&(&trans_prec * &diff))
                };
                logk[r] = log_wk[r] - 0.5 * q;
                max = max.max(logk[r]);
            }
            let mut denom = 0.0;
            for v in logk.iter_mut() {
                let d = *v - max;
                *v = if d > -60.0 { d.exp() } else { 0.0 };
                denom += *v;
            }
            let scale = ws[l] / denom;
            for r in 0..big_n {
                if logk[r] != 0.0 {
                    acc[r] += logk[r] * scale;
                }
            }
        }
        let total: f64 = acc.iter().sum();
        acc.iter_mut().for_each(|a| *a /= total);
        ws = acc;
        let (m, p) = weighted_moments(&all_parts[k], &ws, n);
        smoother.set(k, &m, Some(&p));
    }

    Ok(OracleMoments { filter, smoother })
}
