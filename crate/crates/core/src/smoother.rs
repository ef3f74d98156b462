//! Backward pass: the ensemble Kalman–Bucy smoother (EnKBS).
//!
//! Starting from the terminal filter ensemble, every member is integrated
//! backward with
//!
//! ```text
//! x_s⁽ⁱ⁾(k) = x_s⁽ⁱ⁾(k+1) − τ f(x_s⁽ⁱ⁾(k+1)) − √τ Σ^{1/2} B_k⁽ⁱ⁾ − τ Σ P̃_f⁻¹ (x_s⁽ⁱ⁾(k+1) − x_f⁽ⁱ⁾(k+1))
//! ```
//!
//! where `B_k⁽ⁱ⁾` are the forward-pass signal increments, regenerated from
//! their noise keys.

use nalgebra::DMatrix;

use crate::ensemble::{empirical_cov, Ensemble, EnsembleHistory, MomentKind, MomentSeries};
use crate::error::{Error, Pass, Result};
use crate::filter::FilterRun;
use crate::localization::LocalizationMatrix;
use crate::sde::{is_blown_up, SdeModel, Tag};

/// Which smoother members to keep.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum MemberRecord {
    #[default]
    All,
    Subset(Vec<usize>),
    None,
}

#[derive(Debug, Clone)]
pub struct SmootherOptions {
    /// `n_x × n_x` taper applied to the filter covariance before inversion.
    pub localization: Option<LocalizationMatrix>,
    /// Ridge `λ = jitter · tr(P̃_f) / n_x` added before factorization.
    pub jitter: f64,
    pub members: MemberRecord,
    pub record_covariances: bool,
}

impl Default for SmootherOptions {
    fn default() -> Self {
        Self {
            localization: None,
            jitter: 1e-8,
            members: MemberRecord::All,
            record_covariances: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmootherRun {
    /// Recorded members; with [`MemberRecord::Subset`] the columns follow
    /// the subset order.
    pub history: Option<EnsembleHistory>,
    pub moments: MomentSeries,
}

/// Gain `τ Σ P̃_f⁻¹` for the filter ensemble `x_f`, or `None` when `Σ = 0`.
pub fn smoother_gain(
    model: &SdeModel,
    x_f: &DMatrix<f64>,
    tau: f64,
    step: usize,
    opts: &SmootherOptions,
) -> Result<Option<DMatrix<f64>>> {
    if model.sigma().is_zero() {
        return Ok(None);
    }
    let n = model.n_x();
    let mut p = empirical_cov(x_f)?;
    if let Some(c) = &opts.localization {
        p = c.apply(&p)?;
    }
    let lambda = opts.jitter * p.trace() / n as f64;
    for j in 0..n {
        p[(j, j)] += lambda;
    }
    let chol = p.cholesky().ok_or(Error::NotPositiveDefinite {
        what: "localized filter covariance",
        step,
    })?;
    // Σ P⁻¹ = (P⁻¹ Σ)ᵀ since both factors are symmetric
    let z = chol.solve(model.sigma().matrix());
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite {
            what: "localized filter covariance",
            step,
        });
    }
    Ok(Some(z.transpose() * tau))
}

fn check_options(model: &SdeModel, opts: &SmootherOptions) -> Result<()> {
    if let Some(c) = &opts.localization {
        if c.matrix().shape() != (model.n_x(), model.n_x()) {
            return Err(Error::Dimension {
                what: "smoother localization taper",
                expected: model.n_x() * model.n_x(),
                found: c.matrix().len(),
            });
        }
    }
    if !(opts.jitter >= 0.0) {
        return Err(Error::InvalidInput("jitter must be nonnegative".into()));
    }
    Ok(())
}

/// One backward step from node `k + 1` to `k`, in place.
pub fn enkbs_step(
    model: &SdeModel,
    frun: &FilterRun,
    s_ens: &mut Ensemble,
    k: usize,
    opts: &SmootherOptions,
) -> Result<()> {
    let (n_x, m) = (model.n_x(), s_ens.size());
    let grid = frun.grid();
    let tau = grid.dt();
    let t1 = grid.time(k + 1);
    let y1 = frun.observations.row(k + 1);
    let x_f = frun.history.view(k + 1);

    let gain = smoother_gain(model, &x_f.into_owned(), tau, k + 1, opts)?;

    let mut fx = vec![0.0; n_x];
    let mut b = vec![0.0; n_x * m];
    let has_noise = !model.sigma().is_zero();
    if has_noise {
        frun.noise.fill_block(Tag::Signal, k, n_x, &mut b);
    }
    let sqrt_tau = tau.sqrt();
    let mut diff = vec![0.0; n_x];
    for i in 0..m {
        let xs = s_ens.member_mut(i);
        model.signal_drift(xs, y1, t1, &mut fx);
        if gain.is_some() {
            let xf = frun.history.member(k + 1, i);
            for r in 0..n_x {
                diff[r] = xs[r] - xf[r];
            }
        }
        for (x, f) in xs.iter_mut().zip(&fx) {
            *x -= tau * f;
        }
        if has_noise {
            model
                .sigma()
                .add_scaled(-sqrt_tau, &b[i * n_x..(i + 1) * n_x], xs);
        }
        if let Some(g) = &gain {
            for c in 0..n_x {
                let d = diff[c];
                if d == 0.0 {
                    continue;
                }
                for (r, x) in xs.iter_mut().enumerate() {
                    *x -= g[(r, c)] * d;
                }
            }
        }
    }
    if is_blown_up(s_ens.matrix().as_slice()) {
        return Err(Error::Divergence {
            pass: Pass::Smoother,
            step: k,
        });
    }
    Ok(())
}

/// Backward pass from node `end` down to node `start`, calling `visit` on
/// the smoother ensemble at every node (starting with `end`, where it equals
/// the filter ensemble).
pub fn backward_pass(
    model: &SdeModel,
    frun: &FilterRun,
    end: usize,
    start: usize,
    opts: &SmootherOptions,
    mut visit: impl FnMut(usize, &Ensemble) -> Result<()>,
) -> Result<()> {
    check_options(model, opts)?;
    if end >= frun.history.len() || start > end {
        return Err(Error::InvalidInput(format!(
            "invalid backward window {start}..={end}"
        )));
    }
    let mut s_ens = frun.history.ensemble(end);
    visit(end, &s_ens)?;
    for k in (start..end).rev() {
        enkbs_step(model, frun, &mut s_ens, k, opts)?;
        visit(k, &s_ens)?;
    }
    Ok(())
}

/// Full-window smoother initialized with the terminal filter ensemble.
pub fn run_smoother(model: &SdeModel, frun: &FilterRun, opts: &SmootherOptions) -> Result<SmootherRun> {
    let grid = *frun.grid();
    let m = frun.ensemble_size();
    let record_cov = opts.record_covariances && m > 1;
    let mut moments = MomentSeries::new(grid, model.n_x(), MomentKind::Smoother, record_cov);
    let subset: Option<Vec<usize>> = match &opts.members {
        MemberRecord::All => Some((0..m).collect()),
        MemberRecord::Subset(ids) => {
            if ids.iter().any(|&i| i >= m) {
                return Err(Error::InvalidInput("recorded member index out of range".into()));
            }
            Some(ids.clone())
        }
        MemberRecord::None => None,
    };
    let mut history = subset
        .as_ref()
        .map(|ids| EnsembleHistory::zeros(model.n_x(), ids.len(), grid.len()));

    backward_pass(model, frun, grid.steps(), 0, opts, |k, ens| {
        moments.record(k, ens.matrix())?;
        if let (Some(h), Some(ids)) = (&mut history, &subset) {
            if ids.len() == m {
                h.set(k, ens);
            } else {
                let members: Vec<Vec<f64>> = ids.iter().map(|&i| ens.member(i).to_vec()).collect();
                h.set(k, &Ensemble::from_members(&members)?);
            }
        }
        Ok(())
    })?;

    Ok(SmootherRun { history, moments })
}
