use std::sync::Arc;

use nalgebra::DMatrix;

use super::causation::IndicatorMatrix;
use super::estimate::LinearConstraint;
use super::library::CandidateLibrary;
use crate::error::{Error, Result};
use crate::models::Lorenz84Config;
use crate::sde::{Dynamics, NoiseCov, SdeModel};

/// Polynomial SDE `dx_i = Σ_j θ_{ij} φ_j(x) dt + σ_i dW_i` over a candidate
/// library, with the state split into hidden and observed components.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialModel {
    pub library: CandidateLibrary,
    /// `N × M`, one row per state equation.
    pub theta: DMatrix<f64>,
    /// Noise amplitude per equation.
    pub sigma: Vec<f64>,
    /// Full-state indices of the hidden components.
    pub hidden: Vec<usize>,
    /// Full-state indices of the observed components.
    pub observed: Vec<usize>,
}

impl PolynomialModel {
    pub fn new(
        library: CandidateLibrary,
        theta: DMatrix<f64>,
        sigma: Vec<f64>,
        hidden: Vec<usize>,
        observed: Vec<usize>,
    ) -> Result<Self> {
        let d = library.dim();
        if theta.shape() != (d, library.len()) || sigma.len() != d {
            return Err(Error::Dimension {
                what: "polynomial coefficients",
                expected: d * library.len(),
                found: theta.len(),
            });
        }
        let mut all: Vec<usize> = hidden.iter().chain(&observed).copied().collect();
        all.sort_unstable();
        if all != (0..d).collect::<Vec<_>>() {
            return Err(Error::InvalidInput(
                "hidden and observed indices must partition the state".into(),
            ));
        }
        Ok(Self {
            library,
            theta,
            sigma,
            hidden,
            observed,
        })
    }

    fn from_terms(sigma: Vec<f64>, rows: [&[(&str, f64)]; 3]) -> Self {
        let library = CandidateLibrary::lorenz84();
        let mut theta = DMatrix::zeros(3, library.len());
        for (i, row) in rows.iter().enumerate() {
            for &(name, v) in row.iter() {
                theta[(i, library.index_by_name(name).expect("library feature"))] = v;
            }
        }
        Self {
            library,
            theta,
            sigma,
            hidden: vec![0],
            observed: vec![1, 2],
        }
    }

    /// The stochastic Lorenz-84 system written in the candidate library.
    pub fn lorenz84(cfg: &Lorenz84Config) -> Self {
        Self::from_terms(
            vec![cfg.sigma_x, cfg.sigma_y, cfg.sigma_z],
            [
                &[("1", cfg.a * cfg.f), ("x", -cfg.a), ("y^2", -1.0), ("z^2", -1.0)],
                &[("1", cfg.g), ("y", -1.0), ("xy", 1.0), ("xz", -cfg.b)],
                &[("z", -1.0), ("xy", cfg.b), ("xz", 1.0)],
            ],
        )
    }

    /// Starting model for Lorenz-84 discovery.
    pub fn lorenz84_initial_guess(sigma_x: f64) -> Self {
        Self::from_terms(
            vec![sigma_x, 1.0, 1.0],
            [
                &[("y^2", 1.0), ("z^2", -1.0), ("1", 2.0), ("xy^2", 1.0), ("xz^2", -1.0)],
                &[
                    ("y", -1.0),
                    ("y^2", -2.0),
                    ("z^2", 1.0),
                    ("1", 1.0),
                    ("xy", -1.0),
                    ("xz", -8.0),
                    ("xyz", -1.0),
                ],
                &[("z", -1.0), ("z^2", 1.0), ("yz", -1.0), ("xy", 8.0), ("xz", 1.0), ("xz^2", 1.0)],
            ],
        )
    }

    /// Quadratic-energy cancellations for `(x, y, z)`:
    /// `θˣ_{y²} + θʸ_{xy} = 0`, `θˣ_{z²} + θᶻ_{xz} = 0`, `θʸ_{xz} + θᶻ_{xy} = 0`.
    pub fn lorenz84_constraints(library: &CandidateLibrary) -> Vec<LinearConstraint> {
        let f = |name: &str| library.index_by_name(name).expect("library feature");
        vec![
            LinearConstraint::cancel((0, f("y^2")), (1, f("xy"))),
            LinearConstraint::cancel((0, f("z^2")), (2, f("xz"))),
            LinearConstraint::cancel((1, f("xz")), (2, f("xy"))),
        ]
    }

    pub fn dim(&self) -> usize {
        self.library.dim()
    }

    /// Nonzero-coefficient pattern.
    pub fn structure(&self) -> IndicatorMatrix {
        IndicatorMatrix::from_fn(self.theta.nrows(), self.theta.ncols(), |i, j| self.theta[(i, j)] != 0.0)
    }

    /// Full-state drift.
    pub fn drift(&self, state: &[f64], out: &mut [f64]) {
        let mut phi = vec![0.0; self.library.len()];
        self.library.eval_into(state, &mut phi);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.theta.row(i).iter().zip(&phi).map(|(t, p)| t * p).sum();
        }
    }

    /// The model as a partially observed SDE with the hidden components as
    /// signal and the observed ones as observation process.
    pub fn sde_model(&self) -> Result<SdeModel> {
        let var = |idx: &[usize]| idx.iter().map(|&i| self.sigma[i].powi(2)).collect::<Vec<_>>();
        let dynamics = PolynomialDynamics::new(self);
        SdeModel::from_arc(
            Arc::new(dynamics),
            NoiseCov::diagonal(&var(&self.hidden))?,
            NoiseCov::diagonal(&var(&self.observed))?,
        )
    }
}

/// [`Dynamics`] view of a [`PolynomialModel`]; terms with zero coefficient
/// are skipped.
#[derive(Debug, Clone)]
pub struct PolynomialDynamics {
    hidden: Vec<usize>,
    observed: Vec<usize>,
    dim: usize,
    /// Per equation: `(coefficient, powers)` of active terms.
    rows: Vec<Vec<(f64, Vec<u32>)>>,
}

impl PolynomialDynamics {
    pub fn new(model: &PolynomialModel) -> Self {
        let rows = (0..model.dim())
            .map(|i| {
                model
                    .library
                    .terms()
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| model.theta[(i, j)] != 0.0)
                    .map(|(j, t)| (model.theta[(i, j)], t.powers().to_vec()))
                    .collect()
            })
            .collect();
        Self {
            hidden: model.hidden.clone(),
            observed: model.observed.clone(),
            dim: model.dim(),
            rows,
        }
    }

    #[inline]
    fn full_state(&self, x: &[f64], y: &[f64], out: &mut [f64; 8]) {
        for (&i, &v) in self.hidden.iter().zip(x) {
            out[i] = v;
        }
        for (&i, &v) in self.observed.iter().zip(y) {
            out[i] = v;
        }
    }

    #[inline]
    fn rate(&self, eq: usize, s: &[f64]) -> f64 {
        let mut total = 0.0;
        for (c, powers) in &self.rows[eq] {
            let mut v = *c;
            for (&x, &p) in s.iter().zip(powers) {
                for _ in 0..p {
                    v *= x;
                }
            }
            total += v;
        }
        total
    }

    fn fill(&self, x: &[f64], y: &[f64], eqs: &[usize], out: &mut [f64]) {
        if self.dim <= 8 {
            let mut s = [0.0; 8];
            self.full_state(x, y, &mut s);
            for (o, &i) in out.iter_mut().zip(eqs) {
                *o = self.rate(i, &s[..self.dim]);
            }
        } else {
            let mut s = vec![0.0; self.dim];
            for (&i, &v) in self.hidden.iter().zip(x) {
                s[i] = v;
            }
            for (&i, &v) in self.observed.iter().zip(y) {
                s[i] = v;
            }
            for (o, &i) in out.iter_mut().zip(eqs) {
                *o = self.rate(i, &s);
            }
        }
    }
}

impl Dynamics for PolynomialDynamics {
    fn state_dim(&self) -> usize {
        self.hidden.len()
    }

    fn obs_dim(&self) -> usize {
        self.observed.len()
    }

    fn signal_drift(&self, x: &[f64], y: &[f64], _t: f64, out: &mut [f64]) {
        self.fill(x, y, &self.hidden, out);
    }

    fn observation_drift(&self, x: &[f64], y: &[f64], _t: f64, out: &mut [f64]) {
        self.fill(x, y, &self.observed, out);
    }
}
