//! Traces the brown-import versus capacity frontier of one slot of a
//! bundled scenario.
//!
//! ```text
//! cargo run --example pareto_frontier -- [SCENARIO] [SLOT]
//! ```

use std::path::PathBuf;

use greengrid::optimizer::{pareto_ladder, pareto_sweep};
use greengrid::sim::load_scenario;

fn main() -> greengrid::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/toy.scenario"));
    let slot: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(12);

    let scenario = load_scenario(&path)?;
    let problem = scenario
        .template()
        .with_green(scenario.green(slot - 1))
        .with_demand(scenario.demand(slot - 1));
    let metering = scenario.metering();
    let ladder = pareto_ladder(&problem, 8, &scenario.solver)?;
    println!("{:>12} {:>12} {:>12}", "c0 (b/s/Hz)", "E0 (kW)", "P_loss (kW)");
    for (c0, alloc) in pareto_sweep(&problem, &ladder, &scenario.solver) {
        let alloc = alloc?;
        println!("{c0:>12.3} {:>12.2} {:>12.3}", metering.kw(alloc.e0), metering.kw(alloc.p_loss));
    }
    Ok(())
}
