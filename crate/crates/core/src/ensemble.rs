//! Ensemble containers, empirical moments and multiplicative inflation.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};
use crate::sde::{SdeModel, TimeGrid};

/// `m` members of dimension `n`, stored as the columns of an `n × m` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(members: DMatrix<f64>) -> Result<Self> {
        if members.ncols() == 0 {
            return Err(Error::InvalidInput("ensemble needs at least one member".into()));
        }
        Ok(Self { members })
    }

    pub fn from_members(members: &[Vec<f64>]) -> Result<Self> {
        let n = members.first().map_or(0, |v| v.len());
        if members.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidInput("ensemble members differ in dimension".into()));
        }
        Self::new(DMatrix::from_fn(n, members.len(), |r, c| members[c][r]))
    }

    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn size(&self) -> usize {
        self.members.ncols()
    }

    pub fn member(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.members.as_slice()[i * n..(i + 1) * n]
    }

    pub fn member_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.dim();
        &mut self.members.as_mut_slice()[i * n..(i + 1) * n]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.members
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.members
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.members
    }

    pub fn mean(&self) -> DVector<f64> {
        empirical_mean(&self.members)
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        empirical_cov(&self.members)
    }

    /// `x⁽ⁱ⁾ ← x̄ + δ (x⁽ⁱ⁾ − x̄)`.
    pub fn inflate(&mut self, delta: f64) -> Result<()> {
        inflate(&mut self.members, delta)
    }
}

/// Column mean of an `n × m` member matrix.
pub fn empirical_mean(members: &DMatrix<f64>) -> DVector<f64> {
    let m = members.ncols() as f64;
    members.column_sum() / m
}

/// Member deviations from the column mean.
pub fn anomalies(members: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = empirical_mean(members);
    let mut a = members.clone();
    for mut col in a.column_iter_mut() {
        col -= &mean;
    }
    a
}

/// Unbiased covariance `1/(m−1) Σ (x⁽ⁱ⁾ − x̄)(x⁽ⁱ⁾ − x̄)ᵀ`, built from anomaly
/// outer products and symmetrized.
pub fn empirical_cov(members: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = members.ncols();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "covariance needs at least two members, got {m}"
        )));
    }
    let a = anomalies(members);
    let mut p = &a * a.transpose() / (m as f64 - 1.0);
    symmetrize(&mut p);
    Ok(p)
}

/// `1/(m−1) Σ (a⁽ⁱ⁾ − ā)(b⁽ⁱ⁾ − b̄)ᵀ` for two member matrices with equal `m`.
pub fn cross_covariance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.ncols();
    if b.ncols() != m {
        return Err(Error::Dimension {
            what: "cross-covariance ensembles",
            expected: m,
            found: b.ncols(),
        });
    }
    if m < 2 {
        return Err(Error::InvalidInput("cross-covariance needs at least two members".into()));
    }
    Ok(anomalies(a) * anomalies(b).transpose() / (m as f64 - 1.0))
}

/// Observation-drift values `h(x⁽ⁱ⁾, y, t)` for every member, `n_y × m`.
pub fn observation_values(ens: &Ensemble, model: &SdeModel, t: f64, y: &[f64]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(model.n_y(), ens.size());
    let n_y = model.n_y();
    for i in 0..ens.size() {
        let out = &mut h.as_mut_slice()[i * n_y..(i + 1) * n_y];
        model.observation_drift(ens.member(i), y, t, out);
    }
    h
}

/// Cross-covariance `P_xh` between members and their observation drifts.
pub fn cross_cov_xh(ens: &Ensemble, model: &SdeModel, t: f64, y: &[f64]) -> Result<DMatrix<f64>> {
    cross_covariance(ens.matrix(), &observation_values(ens, model, t, y))
}

pub fn inflate(members: &mut DMatrix<f64>, delta: f64) -> Result<()> {
    if !(delta >= 1.0) || !delta.is_finite() {
        return Err(Error::InvalidInput(format!("inflation factor must be >= 1, got {delta}")));
    }
    if delta == 1.0 {
        return Ok(());
    }
    let mean = empirical_mean(members);
    for mut col in members.column_iter_mut() {
        for (x, mu) in col.iter_mut().zip(mean.iter()) {
            *x = mu + delta * (*x - mu);
        }
    }
    Ok(())
}

pub(crate) fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            let v = 0.5 * (p[(r, c)] + p[(c, r)]);
            p[(r, c)] = v;
            p[(c, r)] = v;
        }
    }
}

// ---------------------------------------------------------------------------
// Histories and moment series
// ---------------------------------------------------------------------------

/// Member states at every grid node, one contiguous `n × m` block per node.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleHistory {
    dim: usize,
    size: usize,
    data: Vec<f64>,
}

impl EnsembleHistory {
    pub fn with_capacity(dim: usize, size: usize, nodes: usize) -> Self {
        Self {
            dim,
            size,
            data: Vec::with_capacity(dim * size * nodes),
        }
    }

    /// Placeholder history of `nodes` zero blocks, filled with [`Self::set`].
    pub fn zeros(dim: usize, size: usize, nodes: usize) -> Self {
        Self {
            dim,
            size,
            data: vec![0.0; dim * size * nodes],
        }
    }

    pub fn push(&mut self, ens: &Ensemble) {
        debug_assert_eq!((ens.dim(), ens.size()), (self.dim, self.size));
        self.data.extend_from_slice(ens.matrix().as_slice());
    }

    pub fn set(&mut self, k: usize, ens: &Ensemble) {
        let block = self.dim * self.size;
        self.data[k * block..(k + 1) * block].copy_from_slice(ens.matrix().as_slice());
    }

    pub fn len(&self) -> usize {
        let block = self.dim * self.size;
        if block == 0 {
            0
        } else {
            self.data.len() / block
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn view(&self, k: usize) -> DMatrixView<'_, f64> {
        let block = self.dim * self.size;
        DMatrixView::from_slice(&self.data[k * block..(k + 1) * block], self.dim, self.size)
    }

    pub fn ensemble(&self, k: usize) -> Ensemble {
        Ensemble {
            members: self.view(k).into_owned(),
        }
    }

    pub fn member(&self, k: usize, i: usize) -> &[f64] {
        let start = (k * self.size + i) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Path of member `i`, component `j` over all nodes.
    pub fn member_component(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.member(k, i)[j]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    Filter,
    Smoother,
}

/// Means and (optionally) covariances on every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    grid: TimeGrid,
    dim: usize,
    kind: MomentKind,
    means: Vec<f64>,
    covs: Option<Vec<f64>>,
}

impl MomentSeries {
    pub fn new(grid: TimeGrid, dim: usize, kind: MomentKind, with_covariances: bool) -> Self {
        let nodes = grid.len();
        Self {
            grid,
            dim,
            kind,
            means: vec![0.0; nodes * dim],
            covs: with_covariances.then(|| vec![0.0; nodes * dim * dim]),
        }
    }

    /// Record the moments of `members` at node `k`.
    pub fn record(&mut self, k: usize, members: &DMatrix<f64>) -> Result<()> {
        let n = self.dim;
        let mean = empirical_mean(members);
        self.means[k * n..(k + 1) * n].copy_from_slice(mean.as_slice());
        if let Some(covs) = &mut self.covs {
            let p = empirical_cov(members)?;
            covs[k * n * n..(k + 1) * n * n].copy_from_slice(p.as_slice());
        }
        Ok(())
    }

    pub fn set(&mut self, k: usize, mean: &[f64], cov: Option<&DMatrix<f64>>) {
        let n = self.dim;
        self.means[k * n..(k + 1) * n].copy_from_slice(mean);
        if let (Some(covs), Some(p)) = (&mut self.covs, cov) {
            covs[k * n * n..(k + 1) * n * n].copy_from_slice(p.as_slice());
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> MomentKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn has_covariances(&self) -> bool {
        self.covs.is_some()
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn cov(&self, k: usize) -> Option<DMatrixView<'_, f64>> {
        let n = self.dim;
        self.covs
            .as_ref()
            .map(|c| DMatrixView::from_slice(&c[k * n * n..(k + 1) * n * n], n, n))
    }

    pub fn variance(&self, k: usize, j: usize) -> Option<f64> {
        self.cov(k).map(|p| p[(j, j)])
    }

    pub fn trace(&self, k: usize) -> Option<f64> {
        self.cov(k).map(|p| p.trace())
    }

    /// Component `j` of the mean over all nodes.
    pub fn mean_component(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.mean(k)[j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{FnDynamics, NoiseCov, NoiseStream, Tag};

    fn random_members(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let noise = NoiseStream::new(seed);
        let mut buf = vec![0.0; n * m];
        noise.fill_block(Tag::Custom(1), 0, n, &mut buf);
        DMatrix::from_vec(n, m, buf)
    }

    #[test]
    fn two_point_moments() {
        let e = Ensemble::from_members(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(e.mean()[0], 2.0);
        assert_eq!(e.covariance().unwrap()[(0, 0)], 2.0);
    }

    #[test]
    fn identical_members() {
        let v = vec![1.5, -2.0, 0.25];
        let e = Ensemble::from_members(&[v.clone(), v.clone(), v.clone()]).unwrap();
        assert_eq!(e.mean().as_slice(), v.as_slice());
        assert!(e.covariance().unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn large_sample_mean() {
        let e = Ensemble::new(random_members(1, 100_000, 4)).unwrap();
        assert!(e.mean()[0].abs() < 0.02);
    }

    #[test]
    fn single_member_covariance_is_rejected() {
        let e = Ensemble::from_members(&[vec![1.0]]).unwrap();
        assert!(e.covariance().is_err());
    }

    #[test]
    fn covariance_rank_is_bounded_by_members() {
        let e = Ensemble::new(random_members(40, 5, 9)).unwrap();
        let p = e.covariance().unwrap();
        let mut eig: Vec<f64> = p.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let largest = eig[39];
        assert!(eig[..36].iter().all(|v| v.abs() < 1e-10 * largest));
    }

    #[test]
    fn cross_covariance_of_linear_map() {
        let ens = Ensemble::new(random_members(4, 30, 11)).unwrap();
        let a = DMatrix::from_fn(3, 4, |r, c| (r as f64 + 1.0) * 0.3 - c as f64 * 0.7);
        let a2 = a.clone();
        let model = SdeModel::new(
            FnDynamics::new(
                4,
                3,
                |_, _, _, o| o.fill(0.0),
                move |x, _, _, o| {
                    let v = &a2 * DVector::from_column_slice(x);
                    o.copy_from_slice(v.as_slice());
                },
            ),
            NoiseCov::isotropic(4, 1.0).unwrap(),
            NoiseCov::isotropic(3, 1.0).unwrap(),
        )
        .unwrap();
        let pxh = cross_cov_xh(&ens, &model, 0.0, &[0.0; 3]).unwrap();
        let expected = ens.covariance().unwrap() * a.transpose();
        assert!((pxh - expected).abs().max() < 1e-10);
    }

    #[test]
    fn inflation_examples() {
        let mut e = Ensemble::from_members(&[vec![1.0], vec![3.0]]).unwrap();
        e.inflate(2.0).unwrap();
        assert_eq!(e.matrix().as_slice(), &[0.0, 4.0]);
        assert_eq!(e.mean()[0], 2.0);

        let mut e = Ensemble::new(random_members(3, 7, 2)).unwrap();
        let before = e.clone();
        e.inflate(1.0).unwrap();
        assert_eq!(e, before);
        assert!(e.inflate(0.9).is_err());
    }

    #[test]
    fn history_round_trip() {
        let e0 = Ensemble::new(random_members(3, 4, 1)).unwrap();
        let e1 = Ensemble::new(random_members(3, 4, 2)).unwrap();
        let mut h = EnsembleHistory::with_capacity(3, 4, 2);
        h.push(&e0);
        h.push(&e1);
        assert_eq!(h.len(), 2);
        assert_eq!(h.ensemble(1), e1);
        assert_eq!(h.member(0, 2), e0.member(2));
    }
}
