//! Dyad experiments: ACI/CIR series in both causal directions, the uncoupled
//! control and the ensemble-size convergence against the conditional-Gaussian
//! oracle.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{num, CsvSink};
use super::{config_hash, ExperimentOutput};
use crate::aci::{aci_series, AciOptions, AciSeries};
use crate::error::{Error, Result};
use crate::filter::{gaussian_ensemble, run_filter, FilterOptions};
use crate::models::{DyadConfig, DyadDirection};
use crate::oracles::{cgns_dyad_moments, rmse};
use crate::sde::{integrate_truth, NoiseStream, TimeGrid, Trajectory};
use crate::smoother::{run_smoother, MemberRecord, SmootherOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DyadExperimentConfig {
    pub seed: u64,
    pub d_u: f64,
    pub f_u: f64,
    pub sigma_u: f64,
    pub c: f64,
    pub d_v: f64,
    pub f_v: f64,
    pub sigma_v: f64,
    pub dt: f64,
    pub u0: f64,
    pub v0: f64,
    pub prior_mean_u: f64,
    pub prior_mean_v: f64,
    pub prior_spread: f64,
    /// Window of the ACI runs.
    pub t_aci: f64,
    pub aci_members: Vec<usize>,
    pub lags: usize,
    pub max_lag: f64,
    pub stride: usize,
    pub saturation: f64,
    pub floor: f64,
    /// Reference runs tried before giving up on a sign-constant `u`.
    pub max_reseeds: usize,
    /// Emit the `c = 0` control series.
    pub control: bool,
    /// Window of the RMSE-vs-m runs.
    pub t_rmse: f64,
    pub rmse_members: Vec<usize>,
    pub rmse_seeds: usize,
}

impl Default for DyadExperimentConfig {
    fn default() -> Self {
        let d = DyadConfig::default();
        let aci = AciOptions::default();
        Self {
            seed: 1,
            d_u: d.d_u,
            f_u: d.f_u,
            sigma_u: d.sigma_u,
            c: d.c,
            d_v: d.d_v,
            f_v: d.f_v,
            sigma_v: d.sigma_v,
            dt: 0.005,
            u0: 1.0,
            v0: 0.0,
            prior_mean_u: 1.0,
            prior_mean_v: 0.0,
            prior_spread: 0.5,
            t_aci: 30.0,
            aci_members: vec![10, 50],
            lags: aci.lags,
            max_lag: aci.max_lag,
            stride: aci.stride,
            saturation: aci.saturation,
            floor: aci.floor,
            max_reseeds: 2000,
            control: true,
            t_rmse: 500.0,
            rmse_members: vec![5, 10, 20, 50, 100, 200],
            rmse_seeds: 3,
        }
    }
}

/// Reference `(u, v)` path.
#[derive(Debug, Clone)]
pub struct DyadTruth {
    pub u: Trajectory,
    pub v: Trajectory,
    /// Reference runs rejected before this one.
    pub rejected: usize,
}

impl DyadExperimentConfig {
    pub fn dyad(&self, direction: DyadDirection) -> DyadConfig {
        DyadConfig {
            d_u: self.d_u,
            f_u: self.f_u,
            sigma_u: self.sigma_u,
            c: self.c,
            d_v: self.d_v,
            f_v: self.f_v,
            sigma_v: self.sigma_v,
            direction,
        }
    }

    pub fn aci_options(&self) -> AciOptions {
        AciOptions {
            lags: self.lags,
            max_lag: self.max_lag,
            stride: self.stride,
            saturation: self.saturation,
            floor: self.floor,
            smoother: SmootherOptions {
                members: MemberRecord::None,
                ..Default::default()
            },
        }
    }

    fn prior_mean(&self, direction: DyadDirection) -> f64 {
        match direction {
            DyadDirection::VToU => self.prior_mean_v,
            DyadDirection::UToV => self.prior_mean_u,
        }
    }

    /// One reference run on `[0, t_end]` keyed by `salt`.
    pub fn truth(&self, t_end: f64, salt: u64) -> Result<DyadTruth> {
        let grid = TimeGrid::new(0.0, t_end, self.dt)?;
        let model = self.dyad(DyadDirection::VToU).model()?;
        let noise = NoiseStream::new(self.seed).derive(salt);
        let (v, u) = integrate_truth(&model, &grid, &[self.v0], &[self.u0], &noise)?;
        Ok(DyadTruth { u, v, rejected: 0 })
    }

    /// Reference run whose `u` stays positive on the whole window, so that
    /// the `u → v` direction is not split across the two branches of `u²`.
    pub fn sign_constant_truth(&self, t_end: f64) -> Result<DyadTruth> {
        for attempt in 0..=self.max_reseeds {
            let mut truth = self.truth(t_end, attempt as u64)?;
            if truth.u.as_flat().iter().all(|&u| u > 0.0) {
                truth.rejected = attempt;
                return Ok(truth);
            }
        }
        Err(Error::InvalidInput(format!(
            "no reference run with positive u found in {} attempts",
            self.max_reseeds + 1
        )))
    }
}

/// ACI/CIR series for one direction and ensemble size on a given reference.
pub fn dyad_aci(
    config: &DyadExperimentConfig,
    truth: &DyadTruth,
    direction: DyadDirection,
    members: usize,
) -> Result<AciSeries> {
    let dyad = config.dyad(direction);
    let model = dyad.model()?;
    let observed = match direction {
        DyadDirection::VToU => &truth.u,
        DyadDirection::UToV => &truth.v,
    };
    let noise = NoiseStream::new(config.seed)
        .derive(0xAC1)
        .derive(members as u64)
        .derive(direction as u64);
    let init = gaussian_ensemble(&[config.prior_mean(direction)], config.prior_spread, members, &noise.derive(1))?;
    let frun = run_filter(&model, observed, &init, &noise.derive(2), &FilterOptions::default())?;
    let opts = config.aci_options();
    let full = run_smoother(&model, &frun, &opts.smoother)?;
    aci_series(&model, &frun, &full, &opts)
}

/// Filter/smoother RMSE of the hidden `v` at one ensemble size, with the
/// conditional-Gaussian oracle values on the same reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadRmse {
    pub members: usize,
    pub replicate: usize,
    pub filter: f64,
    pub smoother: f64,
    pub oracle_filter: f64,
    pub oracle_smoother: f64,
}

pub fn dyad_rmse(config: &DyadExperimentConfig, truth: &DyadTruth, members: usize, replicate: usize) -> Result<DyadRmse> {
    let dyad = config.dyad(DyadDirection::VToU);
    let model = dyad.model()?;
    let (t0, t1) = (0.0, truth.u.grid().t_end());
    let oracle = cgns_dyad_moments(&dyad, &truth.u, config.prior_mean_v, config.prior_spread.powi(2))?;
    let noise = NoiseStream::new(config.seed)
        .derive(0x5EE)
        .derive(replicate as u64)
        .derive(members as u64);
    let init = gaussian_ensemble(&[config.prior_mean_v], config.prior_spread, members, &noise.derive(1))?;
    let fopts = FilterOptions {
        record_covariances: false,
        ..Default::default()
    };
    let frun = run_filter(&model, &truth.u, &init, &noise.derive(2), &fopts)?;
    let sopts = SmootherOptions {
        members: MemberRecord::None,
        record_covariances: false,
        ..Default::default()
    };
    let srun = run_smoother(&model, &frun, &sopts)?;
    Ok(DyadRmse {
        members,
        replicate,
        filter: rmse(&frun.moments, &truth.v, t0, t1)?,
        smoother: rmse(&srun.moments, &truth.v, t0, t1)?,
        oracle_filter: rmse(&oracle.filter, &truth.v, t0, t1)?,
        oracle_smoother: rmse(&oracle.smoother, &truth.v, t0, t1)?,
    })
}

/// RMSE-vs-m over `rmse_seeds` independent references.
pub fn dyad_rmse_sweep(config: &DyadExperimentConfig) -> Result<Vec<DyadRmse>> {
    let truths: Vec<DyadTruth> = (0..config.rmse_seeds)
        .map(|r| config.truth(config.t_rmse, 0x7000 + r as u64))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..config.rmse_seeds)
        .flat_map(|r| config.rmse_members.iter().map(move |&m| (r, m)))
        .collect();
    jobs.par_iter()
        .map(|&(r, m)| dyad_rmse(config, &truths[r], m, r))
        .collect()
}

/// Maximal runs of indices where `values[i] > threshold`.
pub fn exceedance_events(values: &[f64], threshold: f64) -> Vec<std::ops::Range<usize>> {
    let mut events = Vec::new();
    let mut start = None;
    for (i, &v) in values.iter().enumerate() {
        match (v > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                events.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        events.push(s..values.len());
    }
    events
}

/// Time of the largest metric value inside `event`.
pub fn peak_time(series: &AciSeries, event: std::ops::Range<usize>) -> f64 {
    let k = event
        .max_by(|&a, &b| series.metric[a].total_cmp(&series.metric[b]))
        .expect("nonempty event");
    series.times[k]
}

/// Reference `v` at the evaluation times of `series`.
pub fn hidden_at(truth: &DyadTruth, series: &AciSeries) -> Vec<f64> {
    let grid = truth.v.grid();
    series.times.iter().map(|&t| truth.v.row(grid.index_of(t))[0]).collect()
}

fn direction_name(d: DyadDirection) -> &'static str {
    match d {
        DyadDirection::VToU => "v_to_u",
        DyadDirection::UToV => "u_to_v",
    }
}

fn write_series(path: &Path, hash: &str, seed: u64, s: &AciSeries) -> Result<std::path::PathBuf> {
    let mut sink = CsvSink::create(path, hash, seed, &["t", "aci_metric", "cir"])?;
    for k in 0..s.times.len() {
        sink.row(&[num(s.times[k]), num(s.metric[k]), num(s.cir[k])])?;
    }
    sink.finish()
}

pub fn run_dyad_aci(config: &DyadExperimentConfig, out: &Path) -> Result<ExperimentOutput> {
    let hash = config_hash(config)?;
    let mut files = Vec::new();
    let truth = config.sign_constant_truth(config.t_aci)?;

    let mut sink = CsvSink::create(&out.join("dyad_truth.csv"), &hash, config.seed, &["t", "u", "v"])?;
    for k in 0..truth.u.len() {
        sink.row(&[num(truth.u.grid().time(k)), num(truth.u.row(k)[0]), num(truth.v.row(k)[0])])?;
    }
    files.push(sink.finish()?);

    let jobs: Vec<(DyadDirection, usize)> = [DyadDirection::VToU, DyadDirection::UToV]
        .into_iter()
        .flat_map(|d| config.aci_members.iter().map(move |&m| (d, m)))
        .collect();
    let series: Vec<AciSeries> = jobs
        .par_iter()
        .map(|&(d, m)| dyad_aci(config, &truth, d, m))
        .collect::<Result<_>>()?;
    for ((d, m), s) in jobs.iter().zip(&series) {
        let name = format!("aci_{}_m{m}.csv", direction_name(*d));
        files.push(write_series(&out.join(name), &hash, config.seed, s)?);
    }

    if config.control {
        let uncoupled = DyadExperimentConfig {
            c: 0.0,
            ..config.clone()
        };
        let truth = uncoupled.truth(config.t_aci, 0)?;
        let m = config.aci_members.iter().copied().max().unwrap_or(50);
        let s = dyad_aci(&uncoupled, &truth, DyadDirection::VToU, m)?;
        files.push(write_series(&out.join(format!("aci_control_m{m}.csv")), &hash, config.seed, &s)?);
    }

    let rows = dyad_rmse_sweep(config)?;
    let mut sink = CsvSink::create(
        &out.join("dyad_rmse.csv"),
        &hash,
        config.seed,
        &["members", "replicate", "filter", "smoother", "oracle_filter", "oracle_smoother"],
    )?;
    for r in &rows {
        sink.row(&[
            r.members.to_string(),
            r.replicate.to_string(),
            num(r.filter),
            num(r.smoother),
            num(r.oracle_filter),
            num(r.oracle_smoother),
        ])?;
    }
    files.push(sink.finish()?);
    Ok(ExperimentOutput { hash, files })
}
