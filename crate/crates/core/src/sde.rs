//! Continuous-time signal/observation model, time grids, keyed Gaussian
//! noise and the Euler–Maruyama integrator used to generate reference runs.
//!
//! The hidden signal `x` and the observation process `y` evolve as
//!
//! ```text
//! dx = f(x, y, t) dt + Σ^{1/2} dB
//! dy = h(x, y, t) dt + Γ^{1/2} dW
//! ```
//!
//! in the Itô sense. Observations are a dynamical component of the model, so
//! a data set is simply the `y` path on a uniform grid.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Pass, Result};

/// Any state component whose magnitude exceeds this value aborts a run.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

pub(crate) fn is_blown_up(values: &[f64]) -> bool {
    values
        .iter()
        .any(|v| !v.is_finite() || v.abs() > BLOWUP_THRESHOLD)
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

/// Purpose tag of a noise substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    /// Signal noise `B_k` of the reference run.
    TruthSignal,
    /// Observation noise `W_k` of the reference run.
    TruthObs,
    /// Per-member signal noise `B_k^{(i)}`; reused by the smoother.
    Signal,
    /// Per-member simulated observation noise `W_k^{(i)}`.
    Observation,
    /// Ensemble initialization.
    Init,
    /// Particle propagation in the particle oracle.
    Particle,
    Custom(u64),
}

impl Tag {
    fn code(self) -> u64 {
        match self {
            Tag::TruthSignal => 1,
            Tag::TruthObs => 2,
            Tag::Signal => 3,
            Tag::Observation => 4,
            Tag::Init => 5,
            Tag::Particle => 6,
            Tag::Custom(c) => 0x1000 + c,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based source of standard Gaussian vectors.
///
/// Every draw is addressed by `(tag, member, step)`: the tag selects a ChaCha
/// key, the step selects the ChaCha stream and the member selects a fixed
/// offset inside that stream. Nothing is mutated, so the same address always
/// yields the same vector and a whole step of an ensemble can be read in one
/// contiguous sweep that is bit-identical to member-by-member draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent stream derived from this one (e.g. for replicates).
    pub fn derive(&self, salt: u64) -> Self {
        let mut s = self.seed ^ salt.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        Self::new(splitmix64(&mut s))
    }

    fn rng(&self, tag: Tag, step: usize) -> ChaCha8Rng {
        let mut state = self.seed ^ tag.code().wrapping_mul(0xA076_1D64_78BD_642F);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(step as u64);
        rng
    }

    /// 32-bit words consumed per member for a `dim`-vector (Box–Muller pairs).
    fn words_per_member(dim: usize) -> u128 {
        4 * dim.div_ceil(2) as u128
    }

    /// Fill `out` with the Gaussian vector addressed by `(tag, member, step)`.
    pub fn fill(&self, tag: Tag, member: usize, step: usize, out: &mut [f64]) {
        let mut rng = self.rng(tag, step);
        rng.set_word_pos(member as u128 * Self::words_per_member(out.len()));
        fill_normals(&mut rng, out);
    }

    pub fn gaussian(&self, tag: Tag, member: usize, step: usize, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.fill(tag, member, step, &mut out);
        out
    }

    /// Draws for members `0..members` at one step, stored member-major
    /// (`out[i * dim .. (i + 1) * dim]` is member `i`).
    pub fn fill_block(&self, tag: Tag, step: usize, dim: usize, out: &mut [f64]) {
        if dim == 0 {
            return;
        }
        debug_assert_eq!(out.len() % dim, 0);
        let mut rng = self.rng(tag, step);
        for member in out.chunks_exact_mut(dim) {
            fill_normals(&mut rng, member);
        }
    }
}

/// Box–Muller with a fixed consumption of two `u64` per pair, so stream
/// offsets can be computed from the dimension alone.
fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    for pair in out.chunks_mut(2) {
        let u1 = 1.0 - (rng.next_u64() >> 11) as f64 * SCALE;
        let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        pair[0] = r * c;
        if pair.len() > 1 {
            pair[1] = r * s;
        }
    }
}

// ---------------------------------------------------------------------------
// Noise covariances
// ---------------------------------------------------------------------------

/// A noise covariance together with a square-root factor `S` (`S Sᵀ = C`).
#[derive(Debug, Clone)]
pub struct NoiseCov {
    cov: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    /// Standard deviations when the covariance is diagonal.
    diag_sd: Option<Vec<f64>>,
}

impl NoiseCov {
    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        if variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "noise variances must be finite and nonnegative".into(),
            ));
        }
        let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
        Ok(Self {
            cov: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(variances)),
            sqrt: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&sd)),
            diag_sd: Some(sd),
        })
    }

    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::diagonal(&vec![variance; dim])
    }

    /// Use a caller-supplied square root; it must reproduce `cov` to 1e-12
    /// relative Frobenius error.
    pub fn with_sqrt(cov: DMatrix<f64>, sqrt: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() || sqrt.shape() != cov.shape() {
            return Err(Error::InvalidInput("noise factor shapes do not match".into()));
        }
        if (&cov - cov.transpose()).norm() > 1e-12 * cov.norm().max(1e-300) {
            return Err(Error::InvalidInput("noise covariance is not symmetric".into()));
        }
        let recon = &sqrt * sqrt.transpose();
        let scale = cov.norm();
        if (&recon - &cov).norm() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidInput(
                "square-root factor does not reproduce the covariance".into(),
            ));
        }
        let diag_sd = if is_diagonal(&cov) && is_diagonal(&sqrt) {
            Some(sqrt.diagonal().iter().map(|v| v.abs()).collect())
        } else {
            None
        };
        Ok(Self { cov, sqrt, diag_sd })
    }

    /// Cholesky square root of a dense SPD covariance.
    pub fn cholesky(cov: DMatrix<f64>) -> Result<Self> {
        if is_diagonal(&cov) {
            let v: Vec<f64> = cov.diagonal().iter().copied().collect();
            return Self::diagonal(&v);
        }
        let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite {
            what: "noise covariance",
            step: 0,
        })?;
        Self::with_sqrt(cov, chol.l())
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn sqrt(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    pub fn is_zero(&self) -> bool {
        self.cov.iter().all(|v| *v == 0.0)
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        if let Some(sd) = &self.diag_sd {
            if sd.iter().any(|s| *s == 0.0) {
                return Err(Error::NotPositiveDefinite {
                    what: "noise covariance",
                    step: 0,
                });
            }
            let inv: Vec<f64> = sd.iter().map(|s| 1.0 / (s * s)).collect();
            return Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(inv)));
        }
        self.cov
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(Error::NotPositiveDefinite {
                what: "noise covariance",
                step: 0,
            })
    }

    /// `out += scale · S z`.
    pub(crate) fn add_scaled(&self, scale: f64, z: &[f64], out: &mut [f64]) {
        match &self.diag_sd {
            Some(sd) => {
                for ((o, s), zi) in out.iter_mut().zip(sd).zip(z) {
                    *o += scale * s * zi;
                }
            }
            None => {
                let n = self.dim();
                for (r, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for c in 0..n {
                        acc += self.sqrt[(r, c)] * z[c];
                    }
                    *o += scale * acc;
                }
            }
        }
    }
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|r| (0..m.ncols()).all(|c| r == c || m[(r, c)] == 0.0))
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Drift functions of the signal/observation system.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    /// `out = f(x, y, t)`.
    fn signal_drift(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]);
    /// `out = h(x, y, t)`.
    fn observation_drift(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]);
}

type DriftFn = dyn Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync;

/// Dynamics assembled from two closures.
pub struct FnDynamics {
    n_x: usize,
    n_y: usize,
    f: Box<DriftFn>,
    h: Box<DriftFn>,
}

impl FnDynamics {
    pub fn new(
        n_x: usize,
        n_y: usize,
        f: impl Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
        h: impl Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            n_x,
            n_y,
            f: Box::new(f),
            h: Box::new(h),
        }
    }
}

impl Dynamics for FnDynamics {
    fn state_dim(&self) -> usize {
        self.n_x
    }
    fn obs_dim(&self) -> usize {
        self.n_y
    }
    fn signal_drift(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        (self.f)(x, y, t, out)
    }
    fn observation_drift(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        (self.h)(x, y, t, out)
    }
}

/// Hidden-signal plus observation SDE with constant noise covariances.
#[derive(Clone)]
pub struct SdeModel {
    dynamics: Arc<dyn Dynamics>,
    sigma: NoiseCov,
    gamma: NoiseCov,
    gamma_inv: DMatrix<f64>,
}

impl std::fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeModel")
            .field("n_x", &self.n_x())
            .field("n_y", &self.n_y())
            .field("sigma", &self.sigma.cov)
            .field("gamma", &self.gamma.cov)
            .finish()
    }
}

impl SdeModel {
    /// `sigma` may be degenerate (e.g. zero); `gamma` must be positive definite.
    pub fn new(dynamics: impl Dynamics + 'static, sigma: NoiseCov, gamma: NoiseCov) -> Result<Self> {
        Self::from_arc(Arc::new(dynamics), sigma, gamma)
    }

    pub fn from_arc(dynamics: Arc<dyn Dynamics>, sigma: NoiseCov, gamma: NoiseCov) -> Result<Self> {
        if sigma.dim() != dynamics.state_dim() {
            return Err(Error::Dimension {
                what: "signal noise covariance",
                expected: dynamics.state_dim(),
                found: sigma.dim(),
            });
        }
        if gamma.dim() != dynamics.obs_dim() {
            return Err(Error::Dimension {
                what: "observation noise covariance",
                expected: dynamics.obs_dim(),
                found: gamma.dim(),
            });
        }
        let gamma_inv = if gamma.dim() == 0 {
            DMatrix::zeros(0, 0)
        } else {
            gamma.inverse()?
        };
        Ok(Self {
            dynamics,
            sigma,
            gamma,
            gamma_inv,
        })
    }

    pub fn n_x(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn n_y(&self) -> usize {
        self.dynamics.obs_dim()
    }

    pub fn sigma(&self) -> &NoiseCov {
        &self.sigma
    }

    pub fn gamma(&self) -> &NoiseCov {
        &self.gamma
    }

    pub fn gamma_inv(&self) -> &DMatrix<f64> {
        &self.gamma_inv
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    pub fn signal_drift(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        self.dynamics.signal_drift(x, y, t, out)
    }

    pub fn observation_drift(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        self.dynamics.observation_drift(x, y, t, out)
    }

    /// Same dynamics with a different observation noise.
    pub fn with_gamma(&self, gamma: NoiseCov) -> Result<Self> {
        Self::from_arc(self.dynamics.clone(), self.sigma.clone(), gamma)
    }
}

// ---------------------------------------------------------------------------
// Grids and trajectories
// ---------------------------------------------------------------------------

/// Uniform grid `t_k = t0 + k·dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    /// Grid covering `[t0, t_end]`; `(t_end - t0) / dt` must be an integer up
    /// to rounding.
    pub fn new(t0: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !t0.is_finite() || !t_end.is_finite() || t_end < t0 {
            return Err(Error::InvalidInput(format!(
                "invalid grid [{t0}, {t_end}] with dt = {dt}"
            )));
        }
        let span = t_end - t0;
        let steps = (span / dt).round();
        let tol = 1e-9 * span.abs().max(1.0);
        if (steps * dt - span).abs() > tol {
            return Err(Error::InvalidInput(format!(
                "window length {span} is not a multiple of dt = {dt}"
            )));
        }
        Ok(Self {
            t0,
            dt,
            steps: steps as usize,
        })
    }

    pub fn with_steps(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !t0.is_finite() {
            return Err(Error::InvalidInput(format!("invalid step dt = {dt}")));
        }
        Ok(Self { t0, dt, steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps `K`; the grid has `K + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.steps)
    }

    /// Nearest grid index to `t`, clamped to the grid.
    pub fn index_of(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt).round();
        k.clamp(0.0, self.steps as f64) as usize
    }

    /// Indices `k` with `t_a ≤ t_k ≤ t_b` (half-step slack at both ends).
    pub fn window(&self, t_a: f64, t_b: f64) -> std::ops::RangeInclusive<usize> {
        let lo = ((t_a - self.t0) / self.dt - 1e-6).ceil().max(0.0) as usize;
        let hi_f = ((t_b - self.t0) / self.dt + 1e-6).floor();
        if hi_f < 0.0 {
            #[allow(clippy::reversed_empty_ranges)]
            return 1..=0;
        }
        let hi = (hi_f as usize).min(self.steps);
        lo..=hi
    }

    /// The sub-grid between node indices `a` and `b`.
    pub fn slice(&self, a: usize, b: usize) -> TimeGrid {
        TimeGrid {
            t0: self.time(a),
            dt: self.dt,
            steps: b - a,
        }
    }
}

/// Values of a vector-valued path on a grid, stored row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn from_flat(grid: TimeGrid, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() * dim {
            return Err(Error::Dimension {
                what: "trajectory values",
                expected: grid.len() * dim,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("trajectory has non-finite entries".into()));
        }
        Ok(Self { grid, dim, data })
    }

    pub fn from_rows(grid: TimeGrid, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("ragged trajectory rows".into()));
        }
        Self::from_flat(grid, dim, rows.concat())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Component `j` over all nodes.
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.data.iter().skip(j).step_by(self.dim.max(1)).copied().collect()
    }

    /// `Δ_{k+1} = v_{k+1} − v_k` written into `out`.
    pub fn increment(&self, k: usize, out: &mut [f64]) {
        let (a, b) = (self.row(k), self.row(k + 1));
        for ((o, x1), x0) in out.iter_mut().zip(b).zip(a) {
            *o = x1 - x0;
        }
    }

    /// Selected components as a new trajectory.
    pub fn select(&self, components: &[usize]) -> Trajectory {
        let mut data = Vec::with_capacity(self.len() * components.len());
        for k in 0..self.len() {
            let row = self.row(k);
            data.extend(components.iter().map(|&j| row[j]));
        }
        Trajectory {
            grid: self.grid,
            dim: components.len(),
            data,
        }
    }

    /// Nodes `a..=b` as a trajectory on the corresponding sub-grid.
    pub fn slice(&self, a: usize, b: usize) -> Trajectory {
        Trajectory {
            grid: self.grid.slice(a, b),
            dim: self.dim,
            data: self.data[a * self.dim..(b + 1) * self.dim].to_vec(),
        }
    }
}

// ---------------------------------------------------------------------------
// Reference integration
// ---------------------------------------------------------------------------

/// Euler–Maruyama reference run of the coupled system.
///
/// The signal is advanced explicitly and the observation drift is evaluated at
/// the already-advanced signal:
///
/// ```text
/// x_{k+1} = x_k + τ f(x_k, y_k, t_k) + √τ Σ^{1/2} B_k
/// y_{k+1} = y_k + τ h(x_{k+1}, y_k, t_k) + √τ Γ^{1/2} W_k
/// ```
///
/// `B_k` and `W_k` are keyed draws `(TruthSignal, 0, k)` and `(TruthObs, 0, k)`.
pub fn integrate_truth(
    model: &SdeModel,
    grid: &TimeGrid,
    x0: &[f64],
    y0: &[f64],
    noise: &NoiseStream,
) -> Result<(Trajectory, Trajectory)> {
    let (n_x, n_y) = (model.n_x(), model.n_y());
    if x0.len() != n_x {
        return Err(Error::Dimension {
            what: "initial state",
            expected: n_x,
            found: x0.len(),
        });
    }
    if y0.len() != n_y {
        return Err(Error::Dimension {
            what: "initial observation",
            expected: n_y,
            found: y0.len(),
        });
    }
    if is_blown_up(x0) || is_blown_up(y0) {
        return Err(Error::InvalidInput("initial condition is not finite".into()));
    }

    let tau = grid.dt();
    let sqrt_tau = tau.sqrt();
    let mut xs = Vec::with_capacity(grid.len() * n_x);
    let mut ys = Vec::with_capacity(grid.len() * n_y);
    xs.extend_from_slice(x0);
    ys.extend_from_slice(y0);

    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut drift_x = vec![0.0; n_x];
    let mut drift_y = vec![0.0; n_y];
    let mut b = vec![0.0; n_x];
    let mut w = vec![0.0; n_y];

    for k in 0..grid.steps() {
        let t = grid.time(k);
        model.signal_drift(&x, &y, t, &mut drift_x);
        noise.fill(Tag::TruthSignal, 0, k, &mut b);
        for (xi, fi) in x.iter_mut().zip(&drift_x) {
            *xi += tau * fi;
        }
        model.sigma().add_scaled(sqrt_tau, &b, &mut x);

        model.observation_drift(&x, &y, t, &mut drift_y);
        noise.fill(Tag::TruthObs, 0, k, &mut w);
        for (yi, hi) in y.iter_mut().zip(&drift_y) {
            *yi += tau * hi;
        }
        model.gamma().add_scaled(sqrt_tau, &w, &mut y);

        if is_blown_up(&x) || is_blown_up(&y) {
            return Err(Error::Divergence {
                pass: Pass::Truth,
                step: k + 1,
            });
        }
        xs.extend_from_slice(&x);
        ys.extend_from_slice(&y);
    }

    Ok((
        Trajectory {
            grid: *grid,
            dim: n_x,
            data: xs,
        },
        Trajectory {
            grid: *grid,
            dim: n_y,
            data: ys,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(f: fn(f64) -> f64, sigma2: f64) -> SdeModel {
        let dynamics = FnDynamics::new(
            1,
            1,
            move |x, _y, _t, out| out[0] = f(x[0]),
            |x, _y, _t, out| out[0] = x[0],
        );
        SdeModel::new(
            dynamics,
            NoiseCov::isotropic(1, sigma2).unwrap(),
            NoiseCov::isotropic(1, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_drift_and_noise_keeps_state() {
        let model = scalar_model(|_| 0.0, 0.0);
        let grid = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        let (x, _) = integrate_truth(&model, &grid, &[2.5], &[0.0], &NoiseStream::new(1)).unwrap();
        assert!((0..grid.len()).all(|k| x.row(k)[0] == 2.5));
    }

    #[test]
    fn explicit_euler_single_step() {
        let model = scalar_model(|x| -x, 0.0);
        let grid = TimeGrid::with_steps(0.0, 0.1, 1).unwrap();
        let (x, _) = integrate_truth(&model, &grid, &[1.0], &[0.0], &NoiseStream::new(1)).unwrap();
        assert!((x.row(1)[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn deterministic_euler_converges_first_order() {
        let model = scalar_model(|x| -x, 0.0);
        let err = |dt: f64| {
            let grid = TimeGrid::new(0.0, 1.0, dt).unwrap();
            let (x, _) =
                integrate_truth(&model, &grid, &[1.0], &[0.0], &NoiseStream::new(3)).unwrap();
            (x.row(grid.steps())[0] - (-1.0f64).exp()).abs()
        };
        let (e1, e2) = (err(0.01), err(0.005));
        assert!(e1 < 0.01);
        let ratio = e1 / e2;
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn rerun_is_bit_identical() {
        let model = scalar_model(|x| -x, 1.0);
        let grid = TimeGrid::new(0.0, 5.0, 0.01).unwrap();
        let a = integrate_truth(&model, &grid, &[0.3], &[0.0], &NoiseStream::new(7)).unwrap();
        let b = integrate_truth(&model, &grid, &[0.3], &[0.0], &NoiseStream::new(7)).unwrap();
        assert_eq!(a, b);
        let c = integrate_truth(&model, &grid, &[0.3], &[0.0], &NoiseStream::new(8)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn increments_recover_observations() {
        let model = scalar_model(|x| -x, 1.0);
        let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let (_, y) = integrate_truth(&model, &grid, &[0.3], &[0.5], &NoiseStream::new(7)).unwrap();
        let mut acc = y.row(0)[0];
        let mut dy = [0.0];
        for k in 0..grid.steps() {
            y.increment(k, &mut dy);
            acc += dy[0];
        }
        assert!((acc - y.row(grid.steps())[0]).abs() < 1e-12);
    }

    #[test]
    fn blowup_reports_step() {
        let model = scalar_model(|x| x * x, 0.0);
        let grid = TimeGrid::new(0.0, 10.0, 0.1).unwrap();
        let err = integrate_truth(&model, &grid, &[1.0], &[0.0], &NoiseStream::new(1)).unwrap_err();
        match err {
            Error::Divergence { pass, step } => {
                assert_eq!(pass, Pass::Truth);
                assert!(step > 1 && step < grid.steps());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn keyed_draws_are_deterministic_and_distinct() {
        let noise = NoiseStream::new(11);
        let a = noise.gaussian(Tag::Signal, 1, 0, 5);
        assert_eq!(a, noise.gaussian(Tag::Signal, 1, 0, 5));
        assert_ne!(a, noise.gaussian(Tag::Signal, 2, 0, 5));
        assert_ne!(a, noise.gaussian(Tag::Signal, 1, 1, 5));
        assert_ne!(a, noise.gaussian(Tag::Observation, 1, 0, 5));
    }

    #[test]
    fn block_draw_matches_member_draws() {
        let noise = NoiseStream::new(5);
        for dim in [1, 2, 3] {
            let mut block = vec![0.0; 7 * dim];
            noise.fill_block(Tag::Signal, 4, dim, &mut block);
            for i in 0..7 {
                assert_eq!(&block[i * dim..(i + 1) * dim], noise.gaussian(Tag::Signal, i, 4, dim));
            }
        }
    }

    #[test]
    fn million_draws_are_standard_normal() {
        let noise = NoiseStream::new(2024);
        let mut buf = vec![0.0; 1_000_000];
        noise.fill_block(Tag::Custom(9), 0, 2, &mut buf);
        let n = buf.len() as f64;
        let mean = buf.iter().sum::<f64>() / n;
        let var = buf.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn sqrt_factor_is_validated() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let chol = NoiseCov::cholesky(cov.clone()).unwrap();
        let s = chol.sqrt();
        assert!((s * s.transpose() - &cov).norm() < 1e-12);
        let bad = DMatrix::identity(2, 2);
        assert!(NoiseCov::with_sqrt(cov, bad).is_err());
    }

    #[test]
    fn grid_rejects_non_multiple_window() {
        assert!(TimeGrid::new(0.0, 1.0, 0.3).is_err());
        let g = TimeGrid::new(0.0, 100.0, 0.005).unwrap();
        assert_eq!(g.steps(), 20_000);
        let w = g.window(20.0, 100.0);
        assert_eq!((*w.start(), *w.end()), (4000, 20_000));
    }
}
