//! Builds the loss matrix of a small radial feeder and compares the
//! linearised loss and voltages with an exact AC power flow.
//!
//! ```text
//! cargo run --example loss_matrix
//! ```

use greengrid::grid_model::{BusKind, GridTopology, LossInvariants, LossMatrix};
use greengrid::power_flow::{exact_power_flow_oracle, linearized_flow, InjectionState};
use num_complex::Complex64;

fn main() -> greengrid::Result<()> {
    // slack 0 - 1 - 2 - 3, with bus 2 hosting a solar site
    let y = Complex64::new(12.0, -6.0);
    let mut topo = GridTopology::chain(&[y, y, y]).with_kind(2, BusKind::Green);
    topo.slack_voltage = 1.02;
    let loss = LossMatrix::from_topology(&topo)?;

    println!("X = Re(Z), slack row and column zero:{}", loss.x_real());
    println!("B (load x load):{}", loss.b());
    println!("M (load x green):{}", loss.m());
    let inv = LossInvariants::of(&loss);
    println!("invariants hold: {} ({inv:?})\n", inv.hold());

    for (p, g) in [(0.1, 0.0), (0.1, 0.15), (0.3, 0.2)] {
        let state = InjectionState::from_slices(&[p, p], &[g]);
        let lin = linearized_flow(&state, &loss, topo.slack_voltage)?;
        let exact = exact_power_flow_oracle(&topo, &state)?;
        println!(
            "p = {p:.2} per load, g = {g:.2}: loss {:.6} (exact {:.6}), E0 {:.5}, V {:.4?} (exact {:.4?})",
            lin.p_loss,
            exact.p_loss,
            lin.e0,
            lin.v_mag.as_slice(),
            exact.v_mag.as_slice()
        );
    }
    Ok(())
}
