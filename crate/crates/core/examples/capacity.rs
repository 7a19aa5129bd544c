//! Capacity of a base station versus its power draw, the inverse map, and
//! the greenness metric.
//!
//! ```text
//! cargo run --example capacity
//! ```

use greengrid::comm_model::{capacity, greenness, min_power, BaseStationParams, CarbonModel};
use greengrid::grid_model::BusId;

fn main() -> greengrid::Result<()> {
    let bs = BaseStationParams {
        bus: BusId(1),
        p_c: 0.05,
        p_min: 0.0,
        p_max: 1.3,
        h2: 1.0,
        sigma2: 0.002,
    };
    println!("{:>8} {:>12} {:>12}", "p (pu)", "C (b/s/Hz)", "min_power(C)");
    for p in [0.05, 0.06, 0.1, 0.2, 0.5, 1.0, 1.3] {
        let c = capacity(p, &bs)?;
        println!("{p:>8.3} {c:>12.4} {:>12.6}", min_power(c, &bs));
    }
    match capacity(0.01, &bs) {
        Ok(c) => println!("below circuit power: {c}"),
        Err(e) => println!("below circuit power: {e}"),
    }

    let carbon = CarbonModel::default();
    for e0_kwh in [50.0, 100.0, 200.0] {
        println!(
            "30 b/s/Hz at {e0_kwh} kWh brown: f = {:.1} b/s/Hz per tCO2",
            greenness(30.0, e0_kwh, &carbon)?
        );
    }
    Ok(())
}
