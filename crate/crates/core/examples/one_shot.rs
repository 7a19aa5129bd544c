//! Solves the one-shot allocation on a two-station feeder and checks it
//! against the brute-force grid oracle and the Pareto test.
//!
//! ```text
//! cargo run --example one_shot
//! ```

use std::sync::Arc;

use greengrid::comm_model::{BaseStationParams, CapacityDemand};
use greengrid::grid_model::{BusId, BusKind, GridTopology, LossMatrix};
use greengrid::optimizer::{brute_force_oracle, e0_lipschitz, pareto_verify, solve_one_shot, AllocationProblem, SolverConfig};
use nalgebra::DVector;
use num_complex::Complex64;

fn main() -> greengrid::Result<()> {
    let y = Complex64::new(10.0, -5.0);
    let topo = GridTopology::chain(&[y, y, y]).with_kind(2, BusKind::Green);
    let loss = Arc::new(LossMatrix::from_topology(&topo)?);
    let stations = loss
        .load_order()
        .iter()
        .map(|&bus| BaseStationParams {
            bus,
            p_c: 0.05,
            p_min: 0.0,
            p_max: 1.0,
            h2: 1.0,
            sigma2: 0.002,
        })
        .collect::<Vec<_>>();
    let problem = AllocationProblem::new(
        loss,
        1.0,
        stations,
        CapacityDemand {
            c0: 14.0,
            per_bs_floor: Some(vec![5.0, 5.0]),
        },
        DVector::from_element(1, 0.4),
    )
    .with_voltage_band(0.95, 1.05);

    let cfg = SolverConfig::default();
    let alloc = solve_one_shot(&problem, &cfg)?;
    println!("stations at buses {:?}", problem.stations.iter().map(|s| s.bus).collect::<Vec<BusId>>());
    println!("p* = {:.6?}", alloc.p.as_slice());
    println!(
        "E0 = {:.6} pu, P_loss = {:.6} pu, capacity = {:.4}, KKT residual = {:.1e}",
        alloc.e0, alloc.p_loss, alloc.capacity_total, alloc.kkt_residual
    );
    println!("voltages {:.4?}", problem.voltages(&alloc.p).as_slice());

    let resolution = 1e-3;
    let oracle = brute_force_oracle(&problem, resolution)?;
    println!(
        "grid oracle at {resolution}: E0 = {:.6} (difference {:.2e}, bound {:.2e})",
        oracle.e0,
        (oracle.e0 - alloc.e0).abs(),
        e0_lipschitz(&problem) * resolution
    );
    println!("Pareto optimal on the grid: {}", pareto_verify(&alloc, &problem, resolution));
    Ok(())
}
