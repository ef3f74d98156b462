//! Assimilative causal inference on the nonlinear dyad: information gain of
//! the smoother over the filter and the causal influence range, in both
//! directions.

use kalman_bucy::harness::dyad::dyad_aci;
use kalman_bucy::harness::DyadExperimentConfig;
use kalman_bucy::models::DyadDirection;

fn main() -> kalman_bucy::Result<()> {
    let config = DyadExperimentConfig {
        t_aci: 10.0,
        ..Default::default()
    };
    let truth = config.sign_constant_truth(config.t_aci)?;
    println!("reference accepted after {} rejected draws", truth.rejected);
    for direction in [DyadDirection::VToU, DyadDirection::UToV] {
        let s = dyad_aci(&config, &truth, direction, 50)?;
        let mean = s.metric.iter().sum::<f64>() / s.metric.len() as f64;
        let cir = s.cir.iter().sum::<f64>() / s.cir.len() as f64;
        println!("{direction:?}: mean ACI {mean:.3}, mean CIR {cir:.3}");
        for k in (0..s.times.len()).step_by(s.times.len() / 5) {
            println!("  t={:5.2} aci={:.3} cir={:.3}", s.times[k], s.metric[k], s.cir[k]);
        }
    }
    Ok(())
}
