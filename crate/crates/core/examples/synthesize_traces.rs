//! Regenerates the bundled IEEE 37-bus traces.
//!
//! ```text
//! cargo run --example synthesize_traces -- [OUT_DIR]
//! ```

use std::path::PathBuf;

use greengrid::grid_model::{load_feeder, BusKind};
use greengrid::sim::synth::{synth_green, synth_users, SolarSite, SynthConfig, UserSite, WindSite};
use greengrid::sim::save_trace;

fn main() -> greengrid::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| data.clone());
    let feeder = load_feeder(data.join("ieee37.feeder"))?;

    let solar = ["742", "725", "735"].map(|b| SolarSite {
        id: format!("solar_{b}"),
        peak_kw: 300.0,
    });
    let wind = ["731", "741"].map(|b| WindSite {
        id: format!("wind_{b}"),
        mean_kw: 150.0,
        rated_kw: 300.0,
    });
    // uneven demand across stations
    let users = feeder
        .topology
        .buses_of(BusKind::Load)
        .into_iter()
        .enumerate()
        .map(|(k, bus)| UserSite {
            id: feeder.label(bus).to_string(),
            mean_users: 30.0 + 20.0 * ((k * 7) % 11) as f64 / 10.0,
        })
        .collect();
    let cfg = SynthConfig {
        slots: 1152,
        seed: 37,
        solar: solar.to_vec(),
        wind: wind.to_vec(),
        users,
        ..SynthConfig::default()
    };

    std::fs::create_dir_all(&out).map_err(|e| greengrid::Error::Io { path: out.clone(), source: e })?;
    save_trace(&synth_green(&cfg), out.join("ieee37_green.csv"))?;
    save_trace(&synth_users(&cfg), out.join("ieee37_users.csv"))?;
    println!("wrote {} slots to {}", cfg.slots, out.display());
    Ok(())
}
