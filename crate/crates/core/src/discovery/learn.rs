//! Iterative learning: conditional sampling of the hidden path with the
//! EnKBF/EnKBS pair, causation-entropy structure identification, and
//! constrained parameter estimation.

use nalgebra::DMatrix;

use super::causation::{causation_entropy, identify_structure, IndicatorMatrix, RegressionData};
use super::estimate::{estimate_params, LinearConstraint};
use super::model::PolynomialModel;
use crate::error::{Error, Result};
use crate::filter::{gaussian_ensemble, run_filter, FilterOptions};
use crate::sde::{NoiseStream, Trajectory};
use crate::smoother::{run_smoother, MemberRecord, SmootherOptions};

/// Which smoother output completes the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    Member(usize),
    Mean,
}

#[derive(Debug, Clone)]
pub struct LearnOptions {
    pub iterations: usize,
    pub ensemble: usize,
    /// Causation-entropy threshold `r`.
    pub threshold: f64,
    /// Differencing stride of the rates entering the causation entropy.
    pub ce_stride: usize,
    /// Initial ensemble `N(prior_mean, prior_spread² I)` for the hidden state.
    pub prior_mean: Vec<f64>,
    pub prior_spread: f64,
    pub sample: SampleSource,
    pub constraints: Vec<LinearConstraint>,
    pub smoother: SmootherOptions,
}

impl LearnOptions {
    pub fn new(hidden_dim: usize) -> Self {
        Self {
            iterations: 120,
            ensemble: 50,
            threshold: 1e-3,
            ce_stride: 10,
            prior_mean: vec![0.0; hidden_dim],
            prior_spread: 0.1,
            sample: SampleSource::Member(0),
            constraints: Vec::new(),
            smoother: SmootherOptions {
                members: MemberRecord::None,
                record_covariances: false,
                ..Default::default()
            },
        }
    }
}

/// Diagnostics of one completed iteration (numbered from 1).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub structure: IndicatorMatrix,
    pub theta: DMatrix<f64>,
    pub sigma: Vec<f64>,
    /// The sampling pass diverged once and was rerun with fresh noise.
    pub restarted: bool,
    pub ridge_applied: bool,
}

#[derive(Debug, Clone)]
pub struct LearnState {
    pub model: PolynomialModel,
    pub history: Vec<IterationRecord>,
    /// Hidden path used in the last iteration.
    pub sample: Option<Trajectory>,
}

impl LearnState {
    /// Final structure when it repeated on the last two iterations.
    pub fn stable_structure(&self) -> Option<&IndicatorMatrix> {
        match self.history.as_slice() {
            [.., a, b] if a.structure == b.structure => Some(&b.structure),
            _ => None,
        }
    }

    /// `‖C − C_stable‖_F` per iteration, or `None` before stabilization.
    pub fn structure_errors(&self) -> Option<Vec<f64>> {
        let stable = self.stable_structure()?;
        Some(self.history.iter().map(|r| r.structure.distance(stable)).collect())
    }

    /// First iteration from which the structure error stays zero.
    pub fn structure_converged_at(&self) -> Option<usize> {
        let errors = self.structure_errors()?;
        let tail = errors.iter().rev().take_while(|&&e| e == 0.0).count();
        Some(self.history[errors.len() - tail].iteration)
    }
}

/// Hidden path from one filter/smoother pass under `model`; returns the
/// requested sample and the smoother mean.
pub fn sample_hidden(
    model: &PolynomialModel,
    observed: &Trajectory,
    opts: &LearnOptions,
    noise: &NoiseStream,
) -> Result<(Trajectory, Trajectory)> {
    let grid = *observed.grid();
    if model.hidden.is_empty() {
        let empty = Trajectory::from_flat(grid, 0, Vec::new())?;
        return Ok((empty.clone(), empty));
    }
    if opts.ensemble < 5 {
        return Err(Error::InvalidInput(format!(
            "conditional sampling needs at least 5 members, got {}",
            opts.ensemble
        )));
    }
    let sde = model.sde_model()?;
    let init = gaussian_ensemble(&opts.prior_mean, opts.prior_spread, opts.ensemble, &noise.derive(1))?;
    let frun = run_filter(&sde, observed, &init, &noise.derive(2), &FilterOptions::default())?;
    let mut sopts = opts.smoother.clone();
    sopts.members = match opts.sample {
        SampleSource::Member(i) => MemberRecord::Subset(vec![i]),
        SampleSource::Mean => MemberRecord::None,
    };
    let srun = run_smoother(&sde, &frun, &sopts)?;
    let n = sde.n_x();
    let mut means = Vec::with_capacity(grid.len() * n);
    for k in 0..grid.len() {
        means.extend_from_slice(srun.moments.mean(k));
    }
    let mean = Trajectory::from_flat(grid, n, means)?;
    let sample = match (opts.sample, &srun.history) {
        (SampleSource::Member(_), Some(h)) => {
            let mut data = Vec::with_capacity(grid.len() * n);
            for k in 0..grid.len() {
                data.extend_from_slice(h.member(k, 0));
            }
            Trajectory::from_flat(grid, n, data)?
        }
        _ => mean.clone(),
    };
    Ok((sample, mean))
}

/// Interleave hidden and observed paths into the full state.
pub fn complete(model: &PolynomialModel, hidden: &Trajectory, observed: &Trajectory) -> Result<Trajectory> {
    let grid = *observed.grid();
    let d = model.dim();
    let mut data = vec![0.0; grid.len() * d];
    for k in 0..grid.len() {
        let row = &mut data[k * d..(k + 1) * d];
        for (&i, &v) in model.hidden.iter().zip(hidden.row(k)) {
            row[i] = v;
        }
        for (&i, &v) in model.observed.iter().zip(observed.row(k)) {
            row[i] = v;
        }
    }
    Trajectory::from_flat(grid, d, data)
}

/// One structure/parameter update on a completed dataset.
fn update(
    model: &PolynomialModel,
    full: &Trajectory,
    opts: &LearnOptions,
) -> Result<(PolynomialModel, IndicatorMatrix, bool)> {
    let ce = causation_entropy(&RegressionData::with_stride(full, &model.library, opts.ce_stride)?)?;
    let data = RegressionData::from_trajectory(full, &model.library)?;
    let structure = identify_structure(&ce, opts.threshold, model.library.constant_index());
    let est = estimate_params(&data, &structure, &model.sigma, &opts.constraints)?;
    let mut sigma = est.sigma;
    for &h in &model.hidden {
        sigma[h] = model.sigma[h];
    }
    let next = PolynomialModel {
        theta: est.theta,
        sigma,
        ..model.clone()
    };
    Ok((next, structure, ce.ridge_applied))
}

/// Run the learning loop from `initial`; `observer` sees every iteration.
pub fn learn(
    observed: &Trajectory,
    initial: PolynomialModel,
    opts: &LearnOptions,
    noise: &NoiseStream,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<LearnState> {
    if observed.dim() != initial.observed.len() {
        return Err(Error::Dimension {
            what: "observed data",
            expected: initial.observed.len(),
            found: observed.dim(),
        });
    }
    let mut state = LearnState {
        model: initial,
        history: Vec::with_capacity(opts.iterations),
        sample: None,
    };
    for it in 1..=opts.iterations {
        let base = noise.derive(it as u64);
        let (sample, restarted) = match sample_hidden(&state.model, observed, opts, &base) {
            Ok((s, _)) => (s, false),
            Err(e) if e.is_divergence() => {
                let retry = base.derive(0x5EED);
                let (s, _) = sample_hidden(&state.model, observed, opts, &retry)?;
                (s, true)
            }
            Err(e) => return Err(e),
        };
        let full = complete(&state.model, &sample, observed)?;
        let (model, structure, ridge_applied) = update(&state.model, &full, opts)?;
        let record = IterationRecord {
            iteration: it,
            structure,
            theta: model.theta.clone(),
            sigma: model.sigma.clone(),
            restarted,
            ridge_applied,
        };
        observer(&record);
        state.history.push(record);
        state.model = model;
        state.sample = Some(sample);
    }
    Ok(state)
}
