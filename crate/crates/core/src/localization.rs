//! Gaspari–Cohn tapers and Schur-product covariance localization.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compactly supported fifth-order Gaspari–Cohn correlation function.
pub fn gaspari_cohn(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidInput(format!("taper argument must be >= 0, got {r}")));
    }
    Ok(gc(r))
}

pub(crate) fn gc(r: f64) -> f64 {
    if r < 1.0 {
        let r2 = r * r;
        let r3 = r2 * r;
        1.0 - 5.0 / 3.0 * r2 + 5.0 / 8.0 * r3 + 0.5 * r2 * r2 - 0.25 * r3 * r2
    } else if r < 2.0 {
        gc_outer(r)
    } else {
        0.0
    }
}

fn gc_outer(r: f64) -> f64 {
    let r2 = r * r;
    let r3 = r2 * r;
    4.0 - 5.0 * r + 5.0 / 3.0 * r2 + 5.0 / 8.0 * r3 - 0.5 * r2 * r2 + r3 * r2 / 12.0
        - 2.0 / (3.0 * r)
}

/// `min(|i − j|, n − |i − j|)` for 0-based indices on a ring of `n` sites.
pub fn periodic_distance(i: usize, j: usize, n: usize) -> Result<f64> {
    if i >= n || j >= n {
        return Err(Error::InvalidInput(format!(
            "indices ({i}, {j}) out of range for ring of {n}"
        )));
    }
    let d = i.abs_diff(j);
    Ok(d.min(n - d) as f64)
}

/// Taper with entries `G(d(i, j) / r0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationMatrix {
    matrix: DMatrix<f64>,
    r0: f64,
}

impl LocalizationMatrix {
    /// Square taper over `n` indices; fails if it is not PSD to within
    /// `1e-8 · n`.
    pub fn build(n: usize, r0: f64, distance: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let sites: Vec<usize> = (0..n).collect();
        let taper = Self::between(&sites, &sites, r0, distance)?;
        let min_eig = taper
            .matrix
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if n > 0 && min_eig < -1e-8 * n as f64 {
            return Err(Error::NotPositiveDefinite {
                what: "localization matrix",
                step: 0,
            });
        }
        Ok(taper)
    }

    /// Square taper on a periodic lattice of `n` sites.
    pub fn periodic(n: usize, r0: f64) -> Result<Self> {
        Self::build(n, r0, |i, j| {
            let d = i.abs_diff(j);
            d.min(n - d) as f64
        })
    }

    /// Rectangular taper between two site lists (e.g. hidden × observed).
    /// No definiteness check applies.
    pub fn between(
        rows: &[usize],
        cols: &[usize],
        r0: f64,
        distance: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(Error::InvalidInput(format!("localization radius must be > 0, got {r0}")));
        }
        let matrix = DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
            gc(distance(rows[r], cols[c]) / r0)
        });
        Ok(Self { matrix, r0 })
    }

    /// Square taper over the given lattice sites of a periodic ring.
    pub fn periodic_sites(sites: &[usize], ring: usize, r0: f64) -> Result<Self> {
        let dist = ring_distance(ring);
        let square = Self::between(sites, sites, r0, &dist)?;
        let min_eig = square
            .matrix
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !sites.is_empty() && min_eig < -1e-8 * sites.len() as f64 {
            return Err(Error::NotPositiveDefinite {
                what: "localization matrix",
                step: 0,
            });
        }
        Ok(square)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn radius(&self) -> f64 {
        self.r0
    }

    pub fn apply(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        schur_localize(p, self)
    }
}

/// Periodic lattice distance as a closure.
pub fn ring_distance(n: usize) -> impl Fn(usize, usize) -> f64 {
    move |i, j| {
        let d = i.abs_diff(j);
        d.min(n - d) as f64
    }
}

/// Elementwise product `C ∘ P`.
pub fn schur_localize(p: &DMatrix<f64>, c: &LocalizationMatrix) -> Result<DMatrix<f64>> {
    if p.shape() != c.matrix.shape() {
        return Err(Error::Dimension {
            what: "localized covariance",
            expected: c.matrix.nrows() * c.matrix.ncols(),
            found: p.nrows() * p.ncols(),
        });
    }
    Ok(p.component_mul(&c.matrix))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taper_values() {
        assert_eq!(gaspari_cohn(0.0).unwrap(), 1.0);
        assert!((gaspari_cohn(1.0).unwrap() - 5.0 / 24.0).abs() < 1e-12);
        let inner = 1.0 - 5.0 / 3.0 + 5.0 / 8.0 + 0.5 - 0.25;
        assert!((inner - gc_outer(1.0)).abs() < 1e-12);
        assert_eq!(gaspari_cohn(2.5).unwrap(), 0.0);
        assert!(gaspari_cohn(-0.1).is_err());
    }

    #[test]
    fn taper_is_continuous() {
        let eps = 1e-6;
        assert!((gc(1.0 - eps) - gc(1.0 + eps)).abs() < 1e-4);
        assert!(gc(2.0 - eps).abs() < 1e-4);
    }

    #[test]
    fn ring_distances() {
        assert_eq!(periodic_distance(0, 0, 40).unwrap(), 0.0);
        assert_eq!(periodic_distance(0, 39, 40).unwrap(), 1.0);
        assert_eq!(periodic_distance(0, 20, 40).unwrap(), 20.0);
        assert!(periodic_distance(0, 40, 40).is_err());
    }

    #[test]
    fn build_examples() {
        let wide = LocalizationMatrix::periodic(40, 1e9).unwrap();
        assert!(wide.matrix().iter().all(|v| (v - 1.0).abs() < 1e-6));
        let c = LocalizationMatrix::periodic(40, 3.0).unwrap();
        assert_eq!(c.matrix()[(0, 7)], 0.0);
        assert!((0..40).all(|i| c.matrix()[(i, i)] == 1.0));
        assert!(LocalizationMatrix::periodic(40, 0.0).is_err());
    }

    #[test]
    fn schur_identities() {
        let p = DMatrix::from_fn(5, 5, |r, c| 1.0 / (1.0 + r as f64 + c as f64));
        let ones = LocalizationMatrix::periodic(5, 1e12).unwrap();
        assert!((schur_localize(&p, &ones).unwrap() - &p).abs().max() < 1e-9);
        let d = DMatrix::from_diagonal(&p.diagonal());
        let c = LocalizationMatrix::periodic(5, 1.0).unwrap();
        assert_eq!(schur_localize(&d, &c).unwrap(), d);
        assert!(schur_localize(&DMatrix::zeros(4, 4), &c).is_err());
    }
}
