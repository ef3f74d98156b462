//! Model discovery for stochastic Lorenz-84 with `x` hidden: alternate
//! smoother sampling of `x` with causation-entropy structure selection and
//! constrained estimation.

use kalman_bucy::harness::l84::l84_discover;
use kalman_bucy::harness::L84Config;

fn main() -> kalman_bucy::Result<()> {
    let config = L84Config {
        t_end: 20.0,
        iterations: 4,
        ..Default::default()
    };
    let run = l84_discover(&config)?;
    let lib = &run.truth_model.library;
    for (record, distance) in run.state.history.iter().zip(run.truth_distances()) {
        println!(
            "iteration {}: {} active terms, distance to true support {distance:.3}",
            record.iteration,
            record.structure.count()
        );
    }
    let theta = &run.state.model.theta;
    for (i, eq) in ["x", "y", "z"].iter().enumerate() {
        let terms: Vec<String> = (0..lib.len())
            .filter(|&j| theta[(i, j)] != 0.0)
            .map(|j| format!("{:+.3} {}", theta[(i, j)], lib.name(j)))
            .collect();
        println!("d{eq}/dt = {}", terms.join(" "));
    }
    Ok(())
}
