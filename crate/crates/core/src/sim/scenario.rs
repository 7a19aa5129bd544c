//! Scenario file format (TOML, `schema = 1`).
//!
//! ```toml
//! schema = 1
//! name = "ieee37"
//! feeder = "ieee37.feeder"        # paths are relative to this file
//! slot_seconds = 300
//! horizon = 1000
//! slack_voltage = 1.03            # optional, defaults to the feeder's
//! v_min = 0.95                    # optional voltage band
//! v_max = 1.05
//! carbon_eta = 5e-4               # tCO2 per kWh
//!
//! [demand]
//! users = "ieee37_users.csv"      # active users per load bus label
//! r_user = 0.1                    # bits/s/Hz per user
//! floor_fraction = 0.5            # share of each station's demand it must meet alone
//!
//! [green]
//! trace = "ieee37_green.csv"      # kW per site
//! sites = [{ bus = "742", column = "solar_742" }]
//!
//! [stations]                      # defaults for every load bus, per unit
//! p_c = 0.05
//! p_min = 0.0
//! p_max = 1.3
//! h2 = 1.0
//! sigma2 = 0.002
//! overrides = [{ bus = "720", p_max = 0.8 }]
//!
//! [noise]
//! relative_sigma = 0.2
//! seed = 42
//!
//! [solver]                        # optional
//! [online]                        # optional: step0, schedule, gradient
//! [report]
//! tracked_buses = ["720", "730"]
//! ```
//!
//! Both traces may be sampled faster than `slot_seconds` by an integer
//! factor (`trace_slot_seconds` in the scenario root); they are averaged per
//! slot.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use serde::Deserialize;

use super::trace::{load_trace, Trace, TraceKind};
use crate::comm_model::{BaseStationParams, CapacityDemand, CarbonModel, Metering};
use crate::error::{Error, Result};
use crate::grid_model::feeder::{load_feeder, toml_error, Feeder};
use crate::grid_model::{BusId, BusKind, LossMatrix};
use crate::online::{GradientRule, NoiseConfig, OnlineConfig, SlotInputs, StepSchedule};
use crate::optimizer::{AllocationProblem, SolverConfig};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema: u32,
    #[serde(default)]
    name: String,
    feeder: PathBuf,
    #[serde(default = "default_slot_seconds")]
    slot_seconds: f64,
    trace_slot_seconds: Option<f64>,
    horizon: usize,
    slack_voltage: Option<f64>,
    v_min: Option<f64>,
    v_max: Option<f64>,
    #[serde(default = "default_eta")]
    carbon_eta: f64,
    demand: RawDemand,
    green: RawGreen,
    stations: RawStations,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    online: RawOnline,
    #[serde(default)]
    report: RawReport,
}

fn default_slot_seconds() -> f64 {
    300.0
}

fn default_eta() -> f64 {
    CarbonModel::default().eta
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDemand {
    users: PathBuf,
    r_user: f64,
    #[serde(default)]
    floor_fraction: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGreen {
    trace: PathBuf,
    sites: Vec<RawSite>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSite {
    bus: String,
    column: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStations {
    p_c: f64,
    #[serde(default)]
    p_min: f64,
    p_max: f64,
    h2: f64,
    sigma2: f64,
    #[serde(default)]
    overrides: Vec<RawOverride>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    bus: String,
    p_c: Option<f64>,
    p_min: Option<f64>,
    p_max: Option<f64>,
    h2: Option<f64>,
    sigma2: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    #[serde(default = "default_sigma")]
    relative_sigma: f64,
    #[serde(default)]
    seed: u64,
}

impl Default for RawNoise {
    fn default() -> Self {
        RawNoise {
            relative_sigma: default_sigma(),
            seed: 0,
        }
    }
}

fn default_sigma() -> f64 {
    NoiseConfig::default().relative_sigma
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    tol_feas: Option<f64>,
    tol_opt: Option<f64>,
    max_iters: Option<usize>,
    barrier_growth: Option<f64>,
}

#[derive(Clone, Copy, Default, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
enum RawSchedule {
    #[default]
    InverseSqrt,
    Constant,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOnline {
    step0: Option<f64>,
    #[serde(default)]
    schedule: RawSchedule,
    #[serde(default)]
    gradient: GradientRule,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    #[serde(default)]
    tracked_buses: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreenSite {
    pub bus: BusId,
    pub column: String,
}

/// Validated scenario with its feeder and traces loaded.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub path: PathBuf,
    pub feeder: Feeder,
    pub loss: Arc<LossMatrix>,
    pub slot_seconds: f64,
    pub horizon: usize,
    pub slack_voltage: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub carbon: CarbonModel,
    /// One per load bus, in `loss.load_order()`.
    pub stations: Vec<BaseStationParams>,
    /// One per green bus, in `loss.green_order()`.
    pub green_sites: Vec<GreenSite>,
    pub r_user: f64,
    pub floor_fraction: f64,
    pub noise: NoiseConfig,
    pub solver: SolverConfig,
    pub online: OnlineConfig,
    pub tracked: Vec<BusId>,
    /// Per slot, already resampled and aligned to the horizon.
    pub green_trace: Trace,
    pub users_trace: Trace,
    green_columns: Vec<usize>,
    user_columns: Vec<usize>,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text, path)
}

/// Parses scenario text; relative paths resolve against `origin`'s directory.
pub fn parse_scenario(text: &str, origin: impl Into<PathBuf>) -> Result<Scenario> {
    let origin = origin.into();
    let raw: RawScenario = toml::from_str(text).map_err(|e| toml_error(&origin, text, e))?;
    let base = origin.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    let mut problems = Vec::new();
    if raw.schema != 1 {
        problems.push(format!("unsupported schema {} (expected 1)", raw.schema));
    }
    if raw.horizon == 0 {
        problems.push("horizon must be at least 1 slot".into());
    }
    if !(raw.slot_seconds > 0.0) {
        problems.push("slot_seconds must be positive".into());
    }
    if !(raw.carbon_eta > 0.0) {
        problems.push("carbon_eta must be positive".into());
    }
    if !(raw.demand.r_user >= 0.0) || !(0.0..=1.0).contains(&raw.demand.floor_fraction) {
        problems.push("demand needs r_user >= 0 and floor_fraction in [0, 1]".into());
    }
    if !(raw.noise.relative_sigma >= 0.0) {
        problems.push("noise relative_sigma must be nonnegative".into());
    }
    let resample = match raw.trace_slot_seconds {
        None => 1,
        Some(ts) => {
            let factor = raw.slot_seconds / ts;
            if !(ts > 0.0) || (factor - factor.round()).abs() > 1e-9 || factor < 1.0 {
                problems.push(format!(
                    "slot_seconds {} is not a whole multiple of trace_slot_seconds {ts}",
                    raw.slot_seconds
                ));
                1
            } else {
                factor.round() as usize
            }
        }
    };

    let feeder = load_feeder(resolve(&raw.feeder))?;
    let topo = &feeder.topology;
    let loss = Arc::new(LossMatrix::from_topology(topo)?);
    let slack_voltage = raw.slack_voltage.unwrap_or(topo.slack_voltage);
    let v_min = raw.v_min.unwrap_or(f64::NEG_INFINITY);
    let v_max = raw.v_max.unwrap_or(f64::INFINITY);
    if !(slack_voltage > 0.0) || !(v_min <= slack_voltage && slack_voltage <= v_max) {
        problems.push(format!(
            "need v_min <= slack voltage <= v_max, got {v_min} <= {slack_voltage} <= {v_max}"
        ));
    }

    let lookup = |label: &str, want: BusKind, what: &str| -> std::result::Result<BusId, String> {
        match feeder.resolve(label) {
            None => Err(format!("{what}: bus {label:?} does not exist in the feeder")),
            Some(id) if topo.bus(id).map(|b| b.kind) != Some(want) => {
                Err(format!("{what}: bus {label:?} is not a {want:?} bus"))
            }
            Some(id) => Ok(id),
        }
    };

    // stations
    let s = &raw.stations;
    let mut stations: Vec<BaseStationParams> = loss
        .load_order()
        .iter()
        .map(|&bus| BaseStationParams {
            bus,
            p_c: s.p_c,
            p_min: s.p_min,
            p_max: s.p_max,
            h2: s.h2,
            sigma2: s.sigma2,
        })
        .collect();
    for o in &s.overrides {
        let bus = match lookup(&o.bus, BusKind::Load, "station override") {
            Ok(b) => b,
            Err(e) => {
                problems.push(e);
                continue;
            }
        };
        let k = loss.load_order().iter().position(|&b| b == bus).expect("load bus");
        let st = &mut stations[k];
        st.p_c = o.p_c.unwrap_or(st.p_c);
        st.p_min = o.p_min.unwrap_or(st.p_min);
        st.p_max = o.p_max.unwrap_or(st.p_max);
        st.h2 = o.h2.unwrap_or(st.h2);
        st.sigma2 = o.sigma2.unwrap_or(st.sigma2);
    }
    for st in &stations {
        if let Err(e) = st.validate() {
            problems.push(e);
        }
    }

    // green placement
    let mut green_sites: Vec<Option<GreenSite>> = vec![None; loss.n_green()];
    for site in &raw.green.sites {
        let bus = match lookup(&site.bus, BusKind::Green, "green site") {
            Ok(b) => b,
            Err(e) => {
                problems.push(e);
                continue;
            }
        };
        let k = loss.green_order().iter().position(|&b| b == bus).expect("green bus");
        if green_sites[k].is_some() {
            problems.push(format!("green bus {:?} has more than one site", site.bus));
        }
        green_sites[k] = Some(GreenSite {
            bus,
            column: site.column.clone(),
        });
    }
    for (k, site) in green_sites.iter().enumerate() {
        if site.is_none() {
            problems.push(format!(
                "green bus {:?} has no site in [green].sites",
                feeder.label(loss.green_order()[k])
            ));
        }
    }

    let mut tracked = Vec::new();
    for label in &raw.report.tracked_buses {
        match lookup(label, BusKind::Load, "tracked bus") {
            Ok(b) => tracked.push(b),
            Err(e) => problems.push(e),
        }
    }

    // traces
    let mut load = |p: &Path, kind| -> Result<Option<Trace>> {
        let trace = load_trace(resolve(p), kind)?;
        let trace = if resample > 1 { trace.resample_mean(resample) } else { trace };
        if trace.len() < raw.horizon {
            problems.push(format!(
                "{}: covers {} slots, horizon is {}",
                resolve(p).display(),
                trace.len(),
                raw.horizon
            ));
            return Ok(None);
        }
        Ok(Some(trace))
    };
    let green_trace = load(&raw.green.trace, TraceKind::GreenGenerationKw)?;
    let users_trace = load(&raw.demand.users, TraceKind::ActiveUsers)?;

    let mut green_columns = Vec::new();
    if let Some(t) = &green_trace {
        for site in green_sites.iter().flatten() {
            match t.column(&site.column) {
                Some(c) => green_columns.push(c),
                None => problems.push(format!("green trace has no column {:?}", site.column)),
            }
        }
    }
    let mut user_columns = Vec::new();
    if let Some(t) = &users_trace {
        for &bus in loss.load_order() {
            match t.column(feeder.label(bus)) {
                Some(c) => user_columns.push(c),
                None => problems.push(format!("users trace has no column for load bus {:?}", feeder.label(bus))),
            }
        }
    }

    if !problems.is_empty() {
        return Err(Error::Validation(
            problems
                .into_iter()
                .map(|p| format!("{}: {p}", origin.display()))
                .collect(),
        ));
    }

    let solver_default = SolverConfig::default();
    let solver = SolverConfig {
        tol_feas: raw.solver.tol_feas.unwrap_or(solver_default.tol_feas),
        tol_opt: raw.solver.tol_opt.unwrap_or(solver_default.tol_opt),
        max_iters: raw.solver.max_iters.unwrap_or(solver_default.max_iters),
        barrier_growth: raw.solver.barrier_growth.unwrap_or(solver_default.barrier_growth),
    };
    if let Err(e) = solver.validate() {
        return Err(Error::Validation(vec![format!("{}: {e}", origin.display())]));
    }
    let schedule = raw.online.step0.map(|d| match raw.online.schedule {
        RawSchedule::InverseSqrt => StepSchedule::InverseSqrt { delta0: d },
        RawSchedule::Constant => StepSchedule::Constant { delta: d },
    });
    let schedule = match (schedule, raw.online.schedule) {
        (None, RawSchedule::Constant) => Some(StepSchedule::Constant {
            delta: crate::online::default_step0(&loss, slack_voltage),
        }),
        (s, _) => s,
    };

    Ok(Scenario {
        name: raw.name,
        path: origin,
        slot_seconds: raw.slot_seconds,
        horizon: raw.horizon,
        slack_voltage,
        v_min,
        v_max,
        carbon: CarbonModel { eta: raw.carbon_eta },
        stations,
        green_sites: green_sites.into_iter().flatten().collect(),
        r_user: raw.demand.r_user,
        floor_fraction: raw.demand.floor_fraction,
        noise: NoiseConfig {
            relative_sigma: raw.noise.relative_sigma,
            seed: raw.noise.seed,
        },
        solver: solver.clone(),
        online: OnlineConfig {
            schedule,
            gradient: raw.online.gradient,
            solver,
        },
        tracked,
        green_trace: green_trace.expect("checked"),
        users_trace: users_trace.expect("checked"),
        green_columns,
        user_columns,
        loss,
        feeder,
    })
}

impl Scenario {
    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn metering(&self) -> Metering {
        Metering {
            kw_per_unit: 1000.0 * self.feeder.s_base_mva,
            slot_hours: self.slot_seconds / 3600.0,
            carbon: self.carbon,
        }
    }

    /// Problem with zero green generation and no demand; slot data is
    /// filled in from [`Scenario::slot_inputs`].
    pub fn template(&self) -> AllocationProblem {
        AllocationProblem::new(
            self.loss.clone(),
            self.slack_voltage,
            self.stations.clone(),
            CapacityDemand::default(),
            DVector::zeros(self.loss.n_green()),
        )
        .with_voltage_band(self.v_min, self.v_max)
    }

    /// True green generation of a 0-based slot, per unit, in green order.
    pub fn green(&self, slot: usize) -> DVector<f64> {
        let row = &self.green_trace.values[slot];
        let kw_per_unit = self.metering().kw_per_unit;
        DVector::from_iterator(self.green_columns.len(), self.green_columns.iter().map(|&c| row[c] / kw_per_unit))
    }

    /// Capacity demand of a 0-based slot: `c0 = r_user·Σ users` and each
    /// station must reach `floor_fraction·r_user·users_n` on its own.
    pub fn demand(&self, slot: usize) -> CapacityDemand {
        let row = &self.users_trace.values[slot];
        let floors: Vec<f64> = self.user_columns.iter().map(|&c| self.r_user * row[c]).collect();
        CapacityDemand {
            c0: floors.iter().sum(),
            per_bs_floor: Some(floors.iter().map(|f| f * self.floor_fraction).collect()),
        }
    }

    pub fn slot_inputs(&self) -> SlotInputs {
        SlotInputs {
            green: (0..self.horizon).map(|t| self.green(t)).collect(),
            demand: (0..self.horizon).map(|t| self.demand(t)).collect(),
        }
    }

    /// Labels of the stations, in load order.
    pub fn station_labels(&self) -> Vec<String> {
        self.loss
            .load_order()
            .iter()
            .map(|&b| self.feeder.label(b).to_string())
            .collect()
    }
}
