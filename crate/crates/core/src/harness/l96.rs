//! Localization/inflation sweep of the Lorenz-96 twin experiment.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{num, CsvSink};
use super::{config_hash, ExperimentOutput};
use crate::error::{Error, Result};
use crate::filter::{gaussian_ensemble, run_filter, FilterOptions};
use crate::localization::{ring_distance, LocalizationMatrix};
use crate::models::Lorenz96Config;
use crate::oracles::rmse;
use crate::sde::{integrate_truth, NoiseStream, SdeModel, TimeGrid, Trajectory};
use crate::smoother::{run_smoother, MemberRecord, SmootherOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L96TableConfig {
    pub seed: u64,
    pub n: usize,
    pub forcing: f64,
    pub sigma_obs_sq: f64,
    pub sigma_hid_sq: f64,
    pub dt: f64,
    pub t_end: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub members: usize,
    /// Deterministic spin-up length of the reference initial state.
    pub spin_up: f64,
    /// Standard deviation of the initial ensemble around the reference.
    pub init_spread: f64,
    pub deltas: Vec<f64>,
    pub radii: Vec<f64>,
}

impl Default for L96TableConfig {
    fn default() -> Self {
        let model = Lorenz96Config::default();
        Self {
            seed: 1,
            n: model.n,
            forcing: model.forcing,
            sigma_obs_sq: model.sigma_obs_sq,
            sigma_hid_sq: model.sigma_hid_sq,
            dt: 0.005,
            t_end: 100.0,
            window_start: 20.0,
            window_end: 100.0,
            members: 10,
            spin_up: 20.0,
            init_spread: 0.1,
            deltas: vec![1.0, 1.0001, 1.001, 1.005, 1.01, 1.02],
            radii: vec![1.0, 2.0, 3.0, 4.0, 5.0, 8.0, 15.0, 18.0],
        }
    }
}

impl L96TableConfig {
    pub fn model_config(&self) -> Lorenz96Config {
        Lorenz96Config {
            n: self.n,
            forcing: self.forcing,
            sigma_obs_sq: self.sigma_obs_sq,
            sigma_hid_sq: self.sigma_hid_sq,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.window_start >= 0.0 && self.window_start < self.window_end && self.window_end <= self.t_end) {
            return Err(Error::Config(format!(
                "window [{}, {}] must lie inside [0, {}]",
                self.window_start, self.window_end, self.t_end
            )));
        }
        if self.members < 2 {
            return Err(Error::Config("at least two members are needed".into()));
        }
        if self.deltas.iter().any(|d| !(*d >= 1.0)) || self.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config("inflation must be ≥ 1 and radii > 0".into()));
        }
        Ok(())
    }
}

/// Reference run and everything shared by the sweep cells.
pub struct L96Setup {
    pub config: L96TableConfig,
    pub model: SdeModel,
    pub hidden: Trajectory,
    pub observed: Trajectory,
}

impl L96Setup {
    pub fn new(config: &L96TableConfig) -> Result<Self> {
        config.validate()?;
        let lattice = config.model_config();
        let model = lattice.model()?;
        let x_ref = lattice.spin_up(config.spin_up, config.dt);
        let (x0, y0) = lattice.split(&x_ref);
        let grid = TimeGrid::new(0.0, config.t_end, config.dt)?;
        let (hidden, observed) = integrate_truth(&model, &grid, &x0, &y0, &NoiseStream::new(config.seed))?;
        Ok(Self {
            config: config.clone(),
            model,
            hidden,
            observed,
        })
    }

    /// Filter and smoother RMSE over the evaluation window for one cell;
    /// a divergent pass yields NaN.
    pub fn run_cell(&self, delta2: f64, r0: f64) -> Result<L96Cell> {
        let cfg = &self.config;
        let lattice = cfg.model_config();
        let (hid, obs) = (lattice.hidden_sites(), lattice.observed_sites());
        let c1 = LocalizationMatrix::between(&hid, &obs, r0, ring_distance(cfg.n))?;
        // wide tapers wrap around the ring and lose definiteness
        let c2 = match LocalizationMatrix::periodic_sites(&hid, cfg.n, r0) {
            Ok(c) => Some(c),
            Err(Error::NotPositiveDefinite { .. }) => None,
            Err(e) => return Err(e),
        };
        let noise = NoiseStream::new(cfg.seed).derive(1);
        let init = gaussian_ensemble(self.hidden.row(0), cfg.init_spread, cfg.members, &noise.derive(1))?;
        let fopts = FilterOptions {
            localization: Some(c1),
            inflation: delta2,
            record_covariances: false,
            ..Default::default()
        };
        let nan = |filter| L96Cell {
            delta2,
            r0,
            filter,
            smoother: f64::NAN,
        };
        let frun = match run_filter(&self.model, &self.observed, &init, &noise.derive(2), &fopts) {
            Ok(f) => f,
            Err(e) if e.is_divergence() => return Ok(nan(f64::NAN)),
            Err(e) => return Err(e),
        };
        let (a, b) = (cfg.window_start, cfg.window_end);
        let filter = rmse(&frun.moments, &self.hidden, a, b)?;
        let Some(c2) = c2 else {
            return Ok(nan(filter));
        };
        let sopts = SmootherOptions {
            localization: Some(c2),
            members: MemberRecord::None,
            record_covariances: false,
            ..Default::default()
        };
        let smoother = match run_smoother(&self.model, &frun, &sopts) {
            Ok(s) => rmse(&s.moments, &self.hidden, a, b)?,
            Err(e) if e.is_divergence() => f64::NAN,
            Err(e) => return Err(e),
        };
        Ok(L96Cell {
            delta2,
            r0,
            filter,
            smoother,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L96Cell {
    pub delta2: f64,
    pub r0: f64,
    pub filter: f64,
    pub smoother: f64,
}

/// Full `(δ², r0)` sweep in row-major order over `deltas × radii`.
pub fn l96_sweep(config: &L96TableConfig) -> Result<Vec<L96Cell>> {
    let setup = L96Setup::new(config)?;
    let cells: Vec<(f64, f64)> = config
        .deltas
        .iter()
        .flat_map(|&d| config.radii.iter().map(move |&r| (d, r)))
        .collect();
    cells
        .par_iter()
        .map(|&(d, r)| setup.run_cell(d, r))
        .collect()
}

pub fn run_l96_table(config: &L96TableConfig, out: &Path) -> Result<ExperimentOutput> {
    let hash = config_hash(config)?;
    let cells = l96_sweep(config)?;
    let mut files: Vec<PathBuf> = Vec::new();
    for (name, pick) in [
        ("l96_filter.csv", (|c: &L96Cell| c.filter) as fn(&L96Cell) -> f64),
        ("l96_smoother.csv", |c: &L96Cell| c.smoother),
    ] {
        let mut sink = CsvSink::create(&out.join(name), &hash, config.seed, &["delta2", "r0", "rmse"])?;
        for c in &cells {
            sink.row(&[num(c.delta2), num(c.r0), num(pick(c))])?;
        }
        files.push(sink.finish()?);
    }
    Ok(ExperimentOutput { hash, files })
}
