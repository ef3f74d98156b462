//! Scalar linear-Gaussian consistency checks of the ensemble moments against
//! the Kalman–Bucy and RTS equations.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{num, CsvSink};
use super::{config_hash, ExperimentOutput};
use crate::ensemble::{cross_covariance, empirical_cov};
use crate::error::{Error, Result};
use crate::filter::{gaussian_ensemble, run_filter, FilterOptions, FilterRun, FilterVariant};
use crate::oracles::{kalman_bucy_moments, rts_moments, LinearModel};
use crate::sde::{integrate_truth, NoiseStream, SdeModel, TimeGrid, Trajectory};
use crate::smoother::{backward_pass, run_smoother, MemberRecord, SmootherOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    pub seed: u64,
    pub f: f64,
    pub h: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Nodes closer than this to either end are excluded from averages.
    pub burn_in: f64,
    pub x0: f64,
    pub prior_mean: f64,
    pub prior_spread: f64,
    pub members: Vec<usize>,
    pub seeds: usize,
    pub cross_members: usize,
    pub cross_seeds: usize,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            f: -1.0,
            h: 1.0,
            sigma: 1.0,
            gamma: 1.0,
            dt: 0.005,
            t_end: 50.0,
            burn_in: 5.0,
            x0: 0.0,
            prior_mean: 0.0,
            prior_spread: 1.0,
            members: vec![10, 50, 200, 1000, 2000],
            seeds: 3,
            cross_members: 2000,
            cross_seeds: 5,
        }
    }
}

impl LinearConfig {
    pub fn linear_model(&self) -> LinearModel {
        LinearModel::scalar(self.f, self.h, self.sigma, self.gamma)
    }

    fn window(&self) -> Result<(f64, f64)> {
        let (a, b) = (self.burn_in, self.t_end - self.burn_in);
        if !(a >= 0.0 && a < b) {
            return Err(Error::Config(format!(
                "burn-in {} leaves no averaging window in [0, {}]",
                self.burn_in, self.t_end
            )));
        }
        Ok((a, b))
    }

    fn observations(&self, model: &SdeModel, replicate: usize) -> Result<Trajectory> {
        let grid = TimeGrid::new(0.0, self.t_end, self.dt)?;
        let noise = NoiseStream::new(self.seed).derive(replicate as u64);
        Ok(integrate_truth(model, &grid, &[self.x0], &[0.0], &noise)?.1)
    }

    fn filter(&self, model: &SdeModel, y: &Trajectory, m: usize, replicate: usize, variant: FilterVariant) -> Result<FilterRun> {
        let noise = NoiseStream::new(self.seed).derive(1000 + replicate as u64).derive(m as u64);
        let init = gaussian_ensemble(&[self.prior_mean], self.prior_spread, m, &noise.derive(1))?;
        let opts = FilterOptions {
            variant,
            ..Default::default()
        };
        run_filter(model, y, &init, &noise.derive(2), &opts)
    }
}

/// Time-averaged relative errors of one ensemble run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentErrors {
    pub members: usize,
    pub replicate: usize,
    /// Mean of `|P_ens − P_kb| / P_kb` against the Riccati solution.
    pub filter_var: f64,
    /// Mean of `|P_ens − P_rts| / P_rts` against the RTS solution.
    pub smoother_var: f64,
    /// Same averages against the stationary values.
    pub filter_var_stationary: f64,
    pub smoother_var_stationary: f64,
    /// Mean-path RMSE against the oracle means, over `√P_f` stationary.
    pub filter_mean: f64,
    pub smoother_mean: f64,
}

pub fn moment_errors(config: &LinearConfig, m: usize, replicate: usize) -> Result<MomentErrors> {
    let (a, b) = config.window()?;
    let lm = config.linear_model();
    let model = lm.sde_model()?;
    let y = config.observations(&model, replicate)?;
    let prior_cov = DMatrix::from_element(1, 1, config.prior_spread.powi(2));
    let kb = kalman_bucy_moments(&lm, &y, &[config.prior_mean], &prior_cov)?;
    let rts = rts_moments(&lm, &kb)?;
    let frun = config.filter(&model, &y, m, replicate, FilterVariant::Stochastic)?;
    let srun = run_smoother(
        &model,
        &frun,
        &SmootherOptions {
            members: MemberRecord::None,
            ..Default::default()
        },
    )?;
    let (pf, ps) = (lm.stationary_filter_variance(), lm.stationary_smoother_variance());
    let window = y.grid().window(a, b);
    let count = window.clone().count() as f64;
    let mut acc = [0.0; 6];
    for k in window {
        let (vf, vs) = (
            frun.moments.variance(k, 0).expect("covariances recorded"),
            srun.moments.variance(k, 0).expect("covariances recorded"),
        );
        let (of, os) = (kb.variance(k, 0).expect("oracle"), rts.variance(k, 0).expect("oracle"));
        acc[0] += (vf - of).abs() / of;
        acc[1] += (vs - os).abs() / os;
        acc[2] += (vf - pf).abs() / pf;
        acc[3] += (vs - ps).abs() / ps;
        acc[4] += (frun.moments.mean(k)[0] - kb.mean(k)[0]).powi(2);
        acc[5] += (srun.moments.mean(k)[0] - rts.mean(k)[0]).powi(2);
    }
    Ok(MomentErrors {
        members: m,
        replicate,
        filter_var: acc[0] / count,
        smoother_var: acc[1] / count,
        filter_var_stationary: acc[2] / count,
        smoother_var_stationary: acc[3] / count,
        filter_mean: (acc[4] / count).sqrt() / pf.sqrt(),
        smoother_mean: (acc[5] / count).sqrt() / pf.sqrt(),
    })
}

/// Member filter–smoother cross-covariance `C_k = cov_i(x_f⁽ⁱ⁾, x_s⁽ⁱ⁾)`
/// alongside the filter variance `P_f,k`, over the averaging window.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCovSeries {
    pub variant: FilterVariant,
    pub replicate: usize,
    pub times: Vec<f64>,
    pub filter_var: Vec<f64>,
    pub cross: Vec<f64>,
}

impl CrossCovSeries {
    /// Mean signed deviation `⟨C_k − P_f,k⟩`.
    pub fn deviation(&self) -> f64 {
        let n = self.cross.len() as f64;
        self.cross.iter().zip(&self.filter_var).map(|(c, p)| c - p).sum::<f64>() / n
    }
}

pub fn cross_covariance_series(config: &LinearConfig, variant: FilterVariant, replicate: usize) -> Result<CrossCovSeries> {
    let (a, b) = config.window()?;
    let model = config.linear_model().sde_model()?;
    let y = config.observations(&model, replicate)?;
    let frun = config.filter(&model, &y, config.cross_members, replicate, variant)?;
    let grid = *y.grid();
    let window = grid.window(a, b);
    let (lo, hi) = (*window.start(), *window.end());
    let mut pairs = Vec::with_capacity(hi - lo + 1);
    backward_pass(&model, &frun, grid.steps(), lo, &SmootherOptions::default(), |k, ens| {
        if k <= hi {
            let xf = frun.history.view(k).into_owned();
            let c = cross_covariance(&xf, ens.matrix())?[(0, 0)];
            let p = empirical_cov(&xf)?[(0, 0)];
            pairs.push((k, p, c));
        }
        Ok(())
    })?;
    pairs.reverse();
    Ok(CrossCovSeries {
        variant,
        replicate,
        times: pairs.iter().map(|p| grid.time(p.0)).collect(),
        filter_var: pairs.iter().map(|p| p.1).collect(),
        cross: pairs.iter().map(|p| p.2).collect(),
    })
}

fn variant_name(v: FilterVariant) -> &'static str {
    match v {
        FilterVariant::Stochastic => "stochastic",
        FilterVariant::Deterministic => "deterministic",
    }
}

pub fn run_linear_consistency(config: &LinearConfig, out: &Path) -> Result<ExperimentOutput> {
    let hash = config_hash(config)?;
    let jobs: Vec<(usize, usize)> = config
        .members
        .iter()
        .flat_map(|&m| (0..config.seeds).map(move |r| (m, r)))
        .collect();
    let errors: Vec<MomentErrors> = jobs
        .par_iter()
        .map(|&(m, r)| moment_errors(config, m, r))
        .collect::<Result<_>>()?;
    let mut files = Vec::new();
    let mut sink = CsvSink::create(
        &out.join("linear_moments.csv"),
        &hash,
        config.seed,
        &[
            "members",
            "replicate",
            "filter_var_err",
            "smoother_var_err",
            "filter_var_err_stationary",
            "smoother_var_err_stationary",
            "filter_mean_err",
            "smoother_mean_err",
        ],
    )?;
    for e in &errors {
        sink.row(&[
            e.members.to_string(),
            e.replicate.to_string(),
            num(e.filter_var),
            num(e.smoother_var),
            num(e.filter_var_stationary),
            num(e.smoother_var_stationary),
            num(e.filter_mean),
            num(e.smoother_mean),
        ])?;
    }
    files.push(sink.finish()?);

    let jobs: Vec<(FilterVariant, usize)> = [FilterVariant::Stochastic, FilterVariant::Deterministic]
        .into_iter()
        .flat_map(|v| (0..config.cross_seeds).map(move |r| (v, r)))
        .collect();
    let series: Vec<CrossCovSeries> = jobs
        .par_iter()
        .map(|&(v, r)| cross_covariance_series(config, v, r))
        .collect::<Result<_>>()?;
    let mut sink = CsvSink::create(
        &out.join("linear_crosscov.csv"),
        &hash,
        config.seed,
        &["variant", "replicate", "deviation"],
    )?;
    for s in &series {
        sink.row(&[variant_name(s.variant).into(), s.replicate.to_string(), num(s.deviation())])?;
    }
    files.push(sink.finish()?);

    let first: Vec<&CrossCovSeries> = series.iter().filter(|s| s.replicate == 0).collect();
    if let [sto, det] = first.as_slice() {
        let mut sink = CsvSink::create(
            &out.join("linear_crosscov_series.csv"),
            &hash,
            config.seed,
            &["t", "filter_var_stochastic", "cross_stochastic", "filter_var_deterministic", "cross_deterministic"],
        )?;
        for k in 0..sto.times.len() {
            sink.row(&[
                num(sto.times[k]),
                num(sto.filter_var[k]),
                num(sto.cross[k]),
                num(det.filter_var[k]),
                num(det.cross[k]),
            ])?;
        }
        files.push(sink.finish()?);
    }
    Ok(ExperimentOutput { hash, files })
}
