//! Ensemble filter/smoother variances against the Riccati and RTS values on
//! a scalar Ornstein-Uhlenbeck model.

use kalman_bucy::harness::linear::moment_errors;
use kalman_bucy::harness::LinearConfig;

fn main() -> kalman_bucy::Result<()> {
    let config = LinearConfig {
        t_end: 20.0,
        ..Default::default()
    };
    let lm = config.linear_model();
    println!(
        "stationary filter variance {:.4}, smoother variance {:.4}",
        lm.stationary_filter_variance(),
        lm.stationary_smoother_variance()
    );
    println!("{:>6} {:>12} {:>12}", "m", "filter err", "smoother err");
    for m in [10, 100, 1000] {
        let e = moment_errors(&config, m, 0)?;
        println!(
            "{m:>6} {:>11.2}% {:>11.2}%",
            100.0 * e.filter_var_stationary,
            100.0 * e.smoother_var_stationary
        );
    }
    Ok(())
}
