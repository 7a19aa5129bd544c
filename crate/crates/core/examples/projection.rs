//! Euclidean projection onto the feasible allocation set, the step the
//! online allocator takes after every gradient move.
//!
//! ```text
//! cargo run --example projection
//! ```

use std::sync::Arc;

use greengrid::comm_model::{BaseStationParams, CapacityDemand};
use greengrid::grid_model::{BusId, GridTopology, LossMatrix};
use greengrid::optimizer::{check_feasible, project_feasible, AllocationProblem, SolverConfig};
use nalgebra::DVector;
use num_complex::Complex64;

fn main() -> greengrid::Result<()> {
    let y = Complex64::new(10.0, 0.0);
    let loss = Arc::new(LossMatrix::from_topology(&GridTopology::chain(&[y, y]))?);
    let station = |bus| BaseStationParams {
        bus,
        p_c: 0.05,
        p_min: 0.0,
        p_max: 1.0,
        h2: 1.0,
        sigma2: 0.01,
    };
    let problem = AllocationProblem::new(
        loss,
        1.0,
        vec![station(BusId(1)), station(BusId(2))],
        CapacityDemand::total(8.0),
        DVector::zeros(0),
    );
    let cfg = SolverConfig::default();
    for omega in [[0.5, 0.5], [0.0, 0.0], [2.0, -1.0], [0.1, 0.9]] {
        let omega = DVector::from_row_slice(&omega);
        let before = check_feasible(&omega, &problem);
        let p = project_feasible(&omega, &problem, &cfg)?;
        println!(
            "omega {:.3?} ({} violations) -> p {:.4?}, capacity {:.4}, distance {:.4}",
            omega.as_slice(),
            before.violations.len(),
            p.as_slice(),
            problem.total_capacity(&p).unwrap_or(f64::NAN),
            (&p - &omega).norm()
        );
    }
    Ok(())
}
