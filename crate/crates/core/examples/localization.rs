//! Gaspari-Cohn tapering of a rank-deficient sample covariance on a ring.

use kalman_bucy::ensemble::empirical_cov;
use kalman_bucy::filter::gaussian_ensemble;
use kalman_bucy::localization::{gaspari_cohn, LocalizationMatrix};
use kalman_bucy::sde::NoiseStream;

fn main() -> kalman_bucy::Result<()> {
    for r in [0.0, 0.5, 1.0, 1.5, 2.0] {
        println!("G({r:.1}) = {:.4}", gaspari_cohn(r)?);
    }

    let (n, m) = (40, 10);
    let ens = gaussian_ensemble(&vec![0.0; n], 1.0, m, &NoiseStream::new(3))?;
    let p = empirical_cov(ens.matrix())?;
    let taper = LocalizationMatrix::periodic(n, 3.0)?;
    let localized = taper.apply(&p)?;

    let eig = |a: &nalgebra::DMatrix<f64>| {
        let e = a.clone().symmetric_eigenvalues();
        (e.iter().filter(|&&v| v > 1e-10).count(), e.min())
    };
    let (rank_p, min_p) = eig(&p);
    let (rank_l, min_l) = eig(&localized);
    println!("sample covariance: rank {rank_p}, min eigenvalue {min_p:.2e}");
    println!("localized:         rank {rank_l}, min eigenvalue {min_l:.2e}");
    println!(
        "spurious correlation P[0,20]: {:.3} -> {:.3}",
        p[(0, 20)],
        localized[(0, 20)]
    );
    Ok(())
}
