//! Exact conditional-Gaussian moments of the dyad against a bootstrap
//! particle filter with backward-simulation smoothing.

use kalman_bucy::harness::DyadExperimentConfig;
use kalman_bucy::models::DyadDirection;
use kalman_bucy::oracles::{cgns_dyad_moments, particle_ffbs, rmse, ParticleOptions};
use kalman_bucy::sde::NoiseStream;

fn main() -> kalman_bucy::Result<()> {
    let config = DyadExperimentConfig::default();
    let truth = config.truth(10.0, 0)?;
    let dyad = config.dyad(DyadDirection::VToU);
    let exact = cgns_dyad_moments(&dyad, &truth.u, config.prior_mean_v, config.prior_spread.powi(2))?;
    let opts = ParticleOptions::new(500, vec![config.prior_mean_v], config.prior_spread);
    let particles = particle_ffbs(&dyad.model()?, &truth.u, &NoiseStream::new(11), &opts)?;

    println!("{:>12} {:>10} {:>10}", "", "filter", "smoother");
    for (name, m) in [("exact", &exact), ("particles", &particles)] {
        println!(
            "{name:>12} {:>10.4} {:>10.4}",
            rmse(&m.filter, &truth.v, 0.0, 10.0)?,
            rmse(&m.smoother, &truth.v, 0.0, 10.0)?
        );
    }
    Ok(())
}
