//! Runs all three policies on the bundled IEEE 37-bus scenario and writes
//! the per-slot results, summaries and the policy comparison.
//!
//! ```text
//! cargo run --release --example ieee37_run -- [OUT_DIR]
//! ```

use std::path::PathBuf;

use greengrid::sim::{compare, load_scenario, run_policy, write_run_outputs, Policy};

fn main() -> greengrid::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("ieee37_out"));
    let scenario = load_scenario(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/ieee37.scenario"))?;
    let runs = Policy::ALL
        .iter()
        .map(|&p| run_policy(&scenario, p))
        .collect::<greengrid::Result<Vec<_>>>()?;
    write_run_outputs(&runs, &out)?;

    println!("{:<11} {:>10} {:>10} {:>10} {:>12}", "policy", "E0 kWh", "loss kW", "ncap", "var ncap");
    for run in &runs {
        let s = run.summary();
        println!(
            "{:<11} {:>10.3} {:>10.3} {:>10.5} {:>12.4e}",
            s.policy.name(),
            s.mean_e0_kwh,
            s.mean_p_loss_kw,
            s.mean_ncap,
            s.mean_station_var_ncap
        );
    }
    let cmp = compare(&runs)?;
    cmp.write_table(std::io::stdout()).map_err(|e| greengrid::Error::Validation(vec![e.to_string()]))?;
    println!("outputs in {}", out.display());
    Ok(())
}
