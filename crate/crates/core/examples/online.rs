//! Online mirror descent on a stationary single-station feeder with noisy
//! green observations; prints the running optimality gap.
//!
//! ```text
//! cargo run --release --example online -- [SEED]
//! ```

use std::sync::Arc;

use greengrid::comm_model::{BaseStationParams, CapacityDemand, Metering};
use greengrid::grid_model::{BusId, BusKind, GridTopology, LossMatrix};
use greengrid::online::{convergence_gap, run_online, NoiseConfig, OnlineConfig, SlotInputs};
use greengrid::optimizer::AllocationProblem;
use nalgebra::DVector;
use num_complex::Complex64;

fn main() -> greengrid::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    // slack - station - green site; losses pull the station towards the site
    let y = Complex64::new(10.0, 0.0);
    let topo = GridTopology::chain(&[y, y]).with_kind(2, BusKind::Green);
    let loss = Arc::new(LossMatrix::from_topology(&topo)?);
    let bs = BaseStationParams {
        bus: BusId(1),
        p_c: 0.0,
        p_min: 0.0,
        p_max: 2.0,
        h2: 1.0,
        sigma2: 1.0,
    };
    let template = AllocationProblem::new(loss, 1.0, vec![bs], CapacityDemand::total(0.0), DVector::zeros(1));

    let horizon = 1600;
    let green = DVector::from_element(1, 6.0);
    let inputs = SlotInputs::stationary(green.clone(), CapacityDemand::total(0.0), horizon);
    let noise = NoiseConfig {
        relative_sigma: 0.2,
        seed,
    };
    let cfg = OnlineConfig::default();
    let traj = run_online(&template, &inputs, horizon, &noise, &cfg, &Metering::default())?;
    let gap = convergence_gap(&traj, &template, &inputs.green, &cfg.solver)?;

    for t in [1, 10, 100, 400, 1600] {
        let rec = &traj.records[t - 1];
        println!(
            "t = {t:>4}: g_obs {:.3}, p {:.4}, E0 {:.4}, mean gap {:.3e}",
            rec.g_observed[0], rec.p[0], rec.e0, gap[t - 1]
        );
    }
    println!("gap(1600)/gap(100) = {:.3}", gap[1599] / gap[99]);
    Ok(())
}
