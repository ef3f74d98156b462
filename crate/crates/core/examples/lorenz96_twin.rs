//! Twin experiment on the partially observed Lorenz-96 ring: every other
//! site is observed, the rest are estimated by a localized, inflated
//! ensemble filter and smoother.

use kalman_bucy::harness::l96::L96Setup;
use kalman_bucy::harness::L96TableConfig;

fn main() -> kalman_bucy::Result<()> {
    let config = L96TableConfig {
        dt: 0.001,
        t_end: 10.0,
        window_start: 2.0,
        window_end: 10.0,
        spin_up: 5.0,
        ..Default::default()
    };
    let setup = L96Setup::new(&config)?;
    println!("{:>5} {:>8} {:>10} {:>10}", "r0", "delta2", "filter", "smoother");
    for r0 in [2.0, 3.0, 5.0] {
        let cell = setup.run_cell(1.005, r0)?;
        println!("{r0:>5} {:>8} {:>10.3} {:>10.3}", cell.delta2, cell.filter, cell.smoother);
    }
    Ok(())
}
