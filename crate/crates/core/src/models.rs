//! Benchmark systems: stochastic Lorenz-96, the nonlinear dyad and stochastic
//! Lorenz-84, each packaged as an [`SdeModel`] under its observation split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::{Dynamics, NoiseCov, SdeModel};

// ---------------------------------------------------------------------------
// Lorenz-96
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lorenz96Config {
    pub n: usize,
    pub forcing: f64,
    /// Noise variance of observed (even, 1-based) sites.
    pub sigma_obs_sq: f64,
    /// Noise variance of hidden (odd, 1-based) sites.
    pub sigma_hid_sq: f64,
}

impl Default for Lorenz96Config {
    fn default() -> Self {
        Self {
            n: 40,
            forcing: 8.0,
            sigma_obs_sq: 0.1,
            sigma_hid_sq: 5.0,
        }
    }
}

/// Lorenz-96 tendency on a periodic lattice.
pub fn lorenz96_drift(x: &[f64], forcing: f64, out: &mut [f64]) {
    let n = x.len();
    for j in 0..n {
        out[j] = lorenz96_site(|s| x[s], n, j, forcing);
    }
}

#[inline]
fn lorenz96_site(value: impl Fn(usize) -> f64, n: usize, j: usize, forcing: f64) -> f64 {
    let jp1 = (j + 1) % n;
    let jm1 = (j + n - 1) % n;
    let jm2 = (j + n - 2) % n;
    (value(jp1) - value(jm2)) * value(jm1) - value(j) + forcing
}

impl Lorenz96Config {
    fn validate(&self) -> Result<()> {
        if self.n < 4 || self.n % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "Lorenz-96 dimension must be even and at least 4, got {}",
                self.n
            )));
        }
        if !(self.sigma_obs_sq > 0.0 && self.sigma_hid_sq > 0.0) {
            return Err(Error::InvalidInput("Lorenz-96 noise variances must be positive".into()));
        }
        Ok(())
    }

    /// 0-based lattice site of hidden component `j` (1-based odd sites).
    pub fn hidden_site(j: usize) -> usize {
        2 * j
    }

    /// 0-based lattice site of observed component `j` (1-based even sites).
    pub fn observed_site(j: usize) -> usize {
        2 * j + 1
    }

    pub fn hidden_sites(&self) -> Vec<usize> {
        (0..self.n / 2).map(Self::hidden_site).collect()
    }

    pub fn observed_sites(&self) -> Vec<usize> {
        (0..self.n / 2).map(Self::observed_site).collect()
    }

    /// Interleave hidden and observed components into the lattice state.
    pub fn assemble(&self, hidden: &[f64], observed: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n];
        for (j, v) in hidden.iter().enumerate() {
            full[Self::hidden_site(j)] = *v;
        }
        for (j, v) in observed.iter().enumerate() {
            full[Self::observed_site(j)] = *v;
        }
        full
    }

    /// Split a lattice state into (hidden, observed).
    pub fn split(&self, full: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            full.iter().step_by(2).copied().collect(),
            full.iter().skip(1).step_by(2).copied().collect(),
        )
    }

    pub fn model(&self) -> Result<SdeModel> {
        self.validate()?;
        let half = self.n / 2;
        SdeModel::new(
            Lorenz96Dynamics {
                n: self.n,
                forcing: self.forcing,
            },
            NoiseCov::isotropic(half, self.sigma_hid_sq)?,
            NoiseCov::isotropic(half, self.sigma_obs_sq)?,
        )
    }

    /// Deterministic Euler spin-up from the rest state `F` with `+0.01` at
    /// the first site.
    pub fn spin_up(&self, duration: f64, dt: f64) -> Vec<f64> {
        let mut x = vec![self.forcing; self.n];
        x[0] += 0.01;
        let mut rate = vec![0.0; self.n];
        let steps = (duration / dt).round() as usize;
        for _ in 0..steps {
            lorenz96_drift(&x, self.forcing, &mut rate);
            for (xi, r) in x.iter_mut().zip(&rate) {
                *xi += dt * r;
            }
        }
        x
    }
}

struct Lorenz96Dynamics {
    n: usize,
    forcing: f64,
}

impl Lorenz96Dynamics {
    #[inline]
    fn value(x: &[f64], y: &[f64], site: usize) -> f64 {
        if site % 2 == 0 {
            x[site / 2]
        } else {
            y[site / 2]
        }
    }
}

impl Dynamics for Lorenz96Dynamics {
    fn state_dim(&self) -> usize {
        self.n / 2
    }

    fn obs_dim(&self) -> usize {
        self.n / 2
    }

    fn signal_drift(&self, x: &[f64], y: &[f64], _t: f64, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = lorenz96_site(|s| Self::value(x, y, s), self.n, 2 * j, self.forcing);
        }
    }

    fn observation_drift(&self, x: &[f64], y: &[f64], _t: f64, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = lorenz96_site(|s| Self::value(x, y, s), self.n, 2 * j + 1, self.forcing);
        }
    }
}

// ---------------------------------------------------------------------------
// Dyad
// ---------------------------------------------------------------------------

/// Which dyad component is hidden; the other one is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DyadDirection {
    /// `v` hidden, `u` observed: does `v` drive `u`?
    VToU,
    /// `u` hidden, `v` observed.
    UToV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadConfig {
    pub d_u: f64,
    pub f_u: f64,
    pub sigma_u: f64,
    pub c: f64,
    pub d_v: f64,
    pub f_v: f64,
    pub sigma_v: f64,
    pub direction: DyadDirection,
}

impl Default for DyadConfig {
    fn default() -> Self {
        Self {
            d_u: 0.5,
            f_u: 1.0,
            sigma_u: 0.5,
            c: 2.0,
            d_v: 0.5,
            f_v: 0.8,
            sigma_v: 1.0,
            direction: DyadDirection::VToU,
        }
    }
}

/// `(du/dt, dv/dt)` of the dyad without noise.
pub fn dyad_drift(u: f64, v: f64, cfg: &DyadConfig) -> (f64, f64) {
    (
        (-cfg.d_u + cfg.c * v) * u + cfg.f_u,
        -cfg.d_v * v - cfg.c * u * u + cfg.f_v,
    )
}

impl DyadConfig {
    /// Validation for the benchmark. A zero coupling is allowed so that the
    /// uncoupled control can be built.
    fn validate(&self) -> Result<()> {
        if !(self.d_u > 0.0 && self.d_v > 0.0) {
            return Err(Error::InvalidInput("dyad damping must be positive".into()));
        }
        if !(self.sigma_u > 0.0 && self.sigma_v > 0.0) {
            return Err(Error::InvalidInput("dyad noise amplitudes must be positive".into()));
        }
        Ok(())
    }

    /// Anti-damping threshold `d_u / c` above which `u` grows.
    pub fn threshold(&self) -> f64 {
        self.d_u / self.c
    }

    pub fn model(&self) -> Result<SdeModel> {
        self.validate()?;
        let (hid_var, obs_var) = match self.direction {
            DyadDirection::VToU => (self.sigma_v.powi(2), self.sigma_u.powi(2)),
            DyadDirection::UToV => (self.sigma_u.powi(2), self.sigma_v.powi(2)),
        };
        SdeModel::new(
            DyadDynamics { cfg: self.clone() },
            NoiseCov::isotropic(1, hid_var)?,
            NoiseCov::isotropic(1, obs_var)?,
        )
    }

    /// `(u, v)` from a (hidden, observed) pair under this direction.
    pub fn to_uv(&self, hidden: f64, observed: f64) -> (f64, f64) {
        match self.direction {
            DyadDirection::VToU => (observed, hidden),
            DyadDirection::UToV => (hidden, observed),
        }
    }

    /// (hidden, observed) from `(u, v)`.
    pub fn from_uv(&self, u: f64, v: f64) -> (f64, f64) {
        match self.direction {
            DyadDirection::VToU => (v, u),
            DyadDirection::UToV => (u, v),
        }
    }
}

struct DyadDynamics {
    cfg: DyadConfig,
}

impl Dynamics for DyadDynamics {
    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn signal_drift(&self, x: &[f64], y: &[f64], _t: f64, out: &mut [f64]) {
        let (u, v) = self.cfg.to_uv(x[0], y[0]);
        let (du, dv) = dyad_drift(u, v, &self.cfg);
        out[0] = match self.cfg.direction {
            DyadDirection::VToU => dv,
            DyadDirection::UToV => du,
        };
    }

    fn observation_drift(&self, x: &[f64], y: &[f64], _t: f64, out: &mut [f64]) {
        let (u, v) = self.cfg.to_uv(x[0], y[0]);
        let (du, dv) = dyad_drift(u, v, &self.cfg);
        out[0] = match self.cfg.direction {
            DyadDirection::VToU => du,
            DyadDirection::UToV => dv,
        };
    }
}

// ---------------------------------------------------------------------------
// Lorenz-84
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lorenz84Config {
    pub a: f64,
    pub b: f64,
    pub f: f64,
    pub g: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
}

impl Default for Lorenz84Config {
    fn default() -> Self {
        Self {
            a: 0.25,
            b: 4.0,
            f: 8.0,
            g: 1.0,
            sigma_x: 0.1,
            sigma_y: 0.1,
            sigma_z: 0.1,
        }
    }
}

/// `(dx/dt, dy/dt, dz/dt)` of Lorenz-84 without noise.
pub fn lorenz84_drift(x: f64, y: f64, z: f64, cfg: &Lorenz84Config) -> (f64, f64, f64) {
    (
        -(y * y + z * z) - cfg.a * (x - cfg.f),
        -cfg.b * x * z + x * y - y + cfg.g,
        cfg.b * x * y + x * z - z,
    )
}

impl Lorenz84Config {
    /// Hidden `x`, observed `(y, z)`.
    pub fn model(&self) -> Result<SdeModel> {
        if !(self.sigma_x > 0.0 && self.sigma_y > 0.0 && self.sigma_z > 0.0) {
            return Err(Error::InvalidInput("Lorenz-84 noise amplitudes must be positive".into()));
        }
        SdeModel::new(
            Lorenz84Dynamics { cfg: self.clone() },
            NoiseCov::diagonal(&[self.sigma_x.powi(2)])?,
            NoiseCov::diagonal(&[self.sigma_y.powi(2), self.sigma_z.powi(2)])?,
        )
    }
}

struct Lorenz84Dynamics {
    cfg: Lorenz84Config,
}

impl Dynamics for Lorenz84Dynamics {
    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn signal_drift(&self, x: &[f64], y: &[f64], _t: f64, out: &mut [f64]) {
        out[0] = lorenz84_drift(x[0], y[0], y[1], &self.cfg).0;
    }

    fn observation_drift(&self, x: &[f64], y: &[f64], _t: f64, out: &mut [f64]) {
        let (_, dy, dz) = lorenz84_drift(x[0], y[0], y[1], &self.cfg);
        out[0] = dy;
        out[1] = dz;
    }
}
