//! Causality-based discovery of the stochastic Lorenz-84 system from `(y, z)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{num, CsvSink};
use super::{config_hash, ExperimentOutput};
use crate::discovery::{learn, IndicatorMatrix, LearnOptions, LearnState, PolynomialModel, SampleSource};
use crate::error::{Error, Result};
use crate::models::Lorenz84Config;
use crate::sde::{integrate_truth, NoiseStream, TimeGrid, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L84Config {
    pub seed: u64,
    pub a: f64,
    pub b: f64,
    pub f: f64,
    pub g: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Length of the discarded run before the recorded window.
    pub spin_up: f64,
    pub iterations: usize,
    pub members: usize,
    pub threshold: f64,
    pub ce_stride: usize,
    pub prior_spread: f64,
    /// `member` (member 0 of the smoother) or `mean`.
    pub sample: String,
    pub constraints: bool,
    /// Write every `sample_every`-th node of the final hidden sample.
    pub sample_every: usize,
}

impl Default for L84Config {
    fn default() -> Self {
        let m = Lorenz84Config::default();
        Self {
            seed: 1,
            a: m.a,
            b: m.b,
            f: m.f,
            g: m.g,
            sigma_x: m.sigma_x,
            sigma_y: m.sigma_y,
            sigma_z: m.sigma_z,
            dt: 0.001,
            t_end: 500.0,
            spin_up: 10.0,
            iterations: 120,
            members: 50,
            threshold: 1e-3,
            ce_stride: 10,
            prior_spread: 0.1,
            sample: "member".into(),
            constraints: true,
            sample_every: 10,
        }
    }
}

impl L84Config {
    pub fn system(&self) -> Lorenz84Config {
        Lorenz84Config {
            a: self.a,
            b: self.b,
            f: self.f,
            g: self.g,
            sigma_x: self.sigma_x,
            sigma_y: self.sigma_y,
            sigma_z: self.sigma_z,
        }
    }

    pub fn learn_options(&self) -> Result<LearnOptions> {
        let mut opts = LearnOptions::new(1);
        opts.iterations = self.iterations;
        opts.ensemble = self.members;
        opts.threshold = self.threshold;
        opts.ce_stride = self.ce_stride;
        opts.prior_spread = self.prior_spread;
        opts.sample = match self.sample.as_str() {
            "member" => SampleSource::Member(0),
            "mean" => SampleSource::Mean,
            other => return Err(Error::Config(format!("sample must be `member` or `mean`, got `{other}`"))),
        };
        if self.constraints {
            opts.constraints = PolynomialModel::lorenz84_constraints(&crate::discovery::CandidateLibrary::lorenz84());
        }
        Ok(opts)
    }

    /// Reference `(x, (y, z))` on `[0, t_end]` after the spin-up from
    /// `(1, 0, 1)`.
    pub fn truth(&self) -> Result<(Trajectory, Trajectory)> {
        let model = self.system().model()?;
        let root = NoiseStream::new(self.seed);
        let spin = TimeGrid::new(0.0, self.spin_up, self.dt)?;
        let (xs, ys) = integrate_truth(&model, &spin, &[1.0], &[0.0, 1.0], &root.derive(0))?;
        let last = spin.steps();
        let grid = TimeGrid::new(0.0, self.t_end, self.dt)?;
        integrate_truth(&model, &grid, xs.row(last), ys.row(last), &root.derive(1))
    }
}

/// Outcome of a discovery run together with its reference.
#[derive(Debug, Clone)]
pub struct L84Discovery {
    pub state: LearnState,
    pub truth_model: PolynomialModel,
    pub hidden: Trajectory,
}

impl L84Discovery {
    /// Support of the true system with the constant column forced on.
    pub fn true_structure(&self) -> IndicatorMatrix {
        let mut s = self.truth_model.structure();
        let c = self.truth_model.library.constant_index();
        for i in 0..s.rows() {
            s.set(i, c, true);
        }
        s
    }

    /// `‖C_it − C_true‖_F` per iteration.
    pub fn truth_distances(&self) -> Vec<f64> {
        let t = self.true_structure();
        self.state.history.iter().map(|r| r.structure.distance(&t)).collect()
    }
}

pub fn l84_discover(config: &L84Config) -> Result<L84Discovery> {
    let (hidden, observed) = config.truth()?;
    let opts = config.learn_options()?;
    let initial = PolynomialModel::lorenz84_initial_guess(config.sigma_x);
    let noise = NoiseStream::new(config.seed).derive(2);
    let state = learn(&observed, initial, &opts, &noise, |_| {})?;
    Ok(L84Discovery {
        state,
        truth_model: PolynomialModel::lorenz84(&config.system()),
        hidden,
    })
}

const EQUATIONS: [&str; 3] = ["x", "y", "z"];

pub fn run_l84_discover(config: &L84Config, out: &Path) -> Result<ExperimentOutput> {
    let hash = config_hash(config)?;
    let run = l84_discover(config)?;
    let lib = &run.truth_model.library;
    let mut files = Vec::new();

    let mut header = vec![
        "iteration".to_owned(),
        "structure_error".to_owned(),
        "truth_distance".to_owned(),
        "restarted".to_owned(),
    ];
    for eq in EQUATIONS {
        header.extend((0..lib.len()).map(|j| format!("{eq}:{}", lib.name(j))));
    }
    header.extend(EQUATIONS.iter().map(|eq| format!("sigma_{eq}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut sink = CsvSink::create(&out.join("l84_iterations.csv"), &hash, config.seed, &header)?;
    let errors = run.state.structure_errors();
    let distances = run.truth_distances();
    for (n, r) in run.state.history.iter().enumerate() {
        let mut row = vec![
            r.iteration.to_string(),
            errors.as_ref().map_or_else(|| num(f64::NAN), |e| num(e[n])),
            num(distances[n]),
            r.restarted.to_string(),
        ];
        row.extend(r.theta.transpose().iter().map(|&v| num(v)));
        row.extend(r.sigma.iter().map(|&v| num(v)));
        sink.row(&row)?;
    }
    files.push(sink.finish()?);

    let mut sink = CsvSink::create(
        &out.join("l84_coefficients.csv"),
        &hash,
        config.seed,
        &["equation", "feature", "estimate", "truth"],
    )?;
    let theta = &run.state.model.theta;
    for (i, eq) in EQUATIONS.iter().enumerate() {
        for j in 0..lib.len() {
            sink.row(&[
                (*eq).into(),
                lib.name(j),
                num(theta[(i, j)]),
                num(run.truth_model.theta[(i, j)]),
            ])?;
        }
    }
    files.push(sink.finish()?);

    if let Some(sample) = &run.state.sample {
        let mut sink = CsvSink::create(&out.join("l84_sample.csv"), &hash, config.seed, &["t", "x_true", "x_sample"])?;
        for k in (0..sample.len()).step_by(config.sample_every.max(1)) {
            sink.row(&[num(sample.grid().time(k)), num(run.hidden.row(k)[0]), num(sample.row(k)[0])])?;
        }
        files.push(sink.finish()?);
    }
    Ok(ExperimentOutput { hash, files })
}
