//! Scenario-driven runs of the allocation policies and their CSV reports.

pub mod scenario;
pub mod synth;
pub mod trace;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;

use crate::comm_model::capacity;
use crate::error::{Error, Result};
use crate::online::{observe, run_online, SlotRecord, Trajectory};
use crate::optimizer::solve_one_shot_from;

pub use scenario::{load_scenario, parse_scenario, Scenario};
pub use trace::{load_trace, save_trace, write_trace, Trace, TraceKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Online mirror descent on noisy observations.
    Online,
    /// Fresh one-shot solve on each slot's noisy observation.
    OneShot,
    /// One-shot solve with all energy imported (green forced to zero).
    BrownOnly,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Online, Policy::OneShot, Policy::BrownOnly];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Online => "online",
            Policy::OneShot => "oneshot",
            Policy::BrownOnly => "brown-only",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown policy {s:?} (expected online, oneshot or brown-only)"))
    }
}

/// One policy's run over a scenario's horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResults {
    pub policy: Policy,
    pub trajectory: Trajectory,
    pub station_labels: Vec<String>,
    /// Indices into the station order of the tracked buses.
    pub tracked: Vec<usize>,
    pub rows: Vec<SlotRow>,
}

/// Reported quantities of one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotRow {
    pub slot: usize,
    pub e0_kwh: f64,
    pub p_loss_kw: f64,
    pub capacity: f64,
    pub f: Option<f64>,
    pub green_kw: f64,
    pub load_kw: f64,
    /// Per station `C_n`.
    pub station_capacity: Vec<f64>,
    /// Per station `C_n / ((P_loss + E0)/N_b)` with powers in kW; `None`
    /// when `P_loss + E0 ≤ 0`.
    pub station_ncap: Vec<Option<f64>>,
}

impl SlotRow {
    /// Mean over stations of the normalised capacity, i.e.
    /// `C_total / (P_loss + E0)` with powers in kW.
    pub fn ncap(&self) -> Option<f64> {
        let n = self.station_ncap.len();
        let sum: Option<f64> = self.station_ncap.iter().copied().sum();
        sum.map(|s| s / n as f64)
    }
}

pub fn run_policy(scenario: &Scenario, policy: Policy) -> Result<RunResults> {
    let template = scenario.template();
    let inputs = scenario.slot_inputs();
    let metering = scenario.metering();
    let horizon = scenario.horizon;
    let trajectory = match policy {
        Policy::Online => run_online(&template, &inputs, horizon, &scenario.noise, &scenario.online, &metering)?,
        Policy::OneShot | Policy::BrownOnly => {
            let mut rng = scenario.noise.rng();
            let zero = DVector::zeros(template.loss.n_green());
            let mut records = Vec::with_capacity(horizon);
            let mut previous: Option<DVector<f64>> = None;
            for slot in 0..horizon {
                let t = slot + 1;
                let (g_true, g_obs) = if policy == Policy::BrownOnly {
                    (zero.clone(), zero.clone())
                } else {
                    let g = inputs.green[slot].clone();
                    let obs = observe(&g, &scenario.noise, &mut rng);
                    (g, obs)
                };
                let problem = inputs.problem(&template, slot, g_obs.clone());
                let alloc = solve_one_shot_from(&problem, &scenario.solver, previous.as_ref())
                    .map_err(|e| e.at_slot(t))?;
                previous = Some(alloc.p.clone());
                records.push(SlotRecord::evaluate(t, &template, &g_true, g_obs, alloc.p, &metering));
            }
            Trajectory { records }
        }
    };

    let tracked = scenario
        .tracked
        .iter()
        .map(|b| template.loss.load_order().iter().position(|x| x == b).expect("tracked load bus"))
        .collect();
    let n_b = scenario.n_stations() as f64;
    let rows = trajectory
        .records
        .iter()
        .map(|r| {
            let station_capacity: Vec<f64> = scenario
                .stations
                .iter()
                .zip(r.p.iter())
                .map(|(bs, &p)| capacity(p, bs).unwrap_or(f64::NAN))
                .collect();
            let per_station_kw = (metering.kw(r.p_loss) + metering.kw(r.e0)) / n_b;
            let station_ncap = station_capacity
                .iter()
                .map(|&c| (per_station_kw > 0.0).then(|| c / per_station_kw))
                .collect();
            SlotRow {
                slot: r.t,
                e0_kwh: metering.kwh(r.e0),
                p_loss_kw: metering.kw(r.p_loss),
                capacity: r.capacity_total,
                f: r.f,
                green_kw: metering.kw(r.g_true.sum()),
                load_kw: metering.kw(r.p.sum()),
                station_capacity,
                station_ncap,
            }
        })
        .collect();
    Ok(RunResults {
        policy,
        trajectory,
        station_labels: scenario.station_labels(),
        tracked,
        rows,
    })
}

/// Aggregates of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub policy: Policy,
    pub slots: usize,
    pub mean_e0_kwh: f64,
    pub mean_p_loss_kw: f64,
    pub mean_capacity: f64,
    /// Over slots where `f` is defined.
    pub mean_f: f64,
    pub mean_ncap: f64,
    pub var_ncap: f64,
    /// Mean over stations of the variance in time of each station's
    /// normalised capacity.
    pub mean_station_var_ncap: f64,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

impl RunResults {
    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    pub fn summary(&self) -> Summary {
        let col = |f: &dyn Fn(&SlotRow) -> Option<f64>| -> Vec<f64> { self.rows.iter().filter_map(f).collect() };
        let (mean_ncap, var_ncap) = mean_var(&col(&|r| r.ncap()));
        let n_b = self.station_labels.len();
        let station_var = (0..n_b)
            .map(|k| mean_var(&col(&|r| r.station_ncap[k])).1)
            .sum::<f64>()
            / n_b.max(1) as f64;
        Summary {
            policy: self.policy,
            slots: self.rows.len(),
            mean_e0_kwh: mean_var(&col(&|r| Some(r.e0_kwh))).0,
            mean_p_loss_kw: mean_var(&col(&|r| Some(r.p_loss_kw))).0,
            mean_capacity: mean_var(&col(&|r| Some(r.capacity))).0,
            mean_f: mean_var(&col(&|r| r.f)).0,
            mean_ncap,
            var_ncap,
            mean_station_var_ncap: station_var,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header of `results.csv` for the given tracked station labels.
pub fn results_header(tracked: &[String]) -> String {
    let mut h = String::from(
        "slot,policy,e0_kwh,p_loss_kw,capacity_bits_hz,f_bits_per_tonco2_hz,green_kw,load_kw,ncap",
    );
    for label in tracked {
        h.push_str(&format!(",cap_{label}"));
    }
    for label in tracked {
        h.push_str(&format!(",ncap_{label}"));
    }
    h
}

/// Writes per-slot rows of several runs; all must track the same buses.
pub fn write_results(runs: &[RunResults], mut out: impl Write) -> std::io::Result<()> {
    let Some(first) = runs.first() else {
        return Ok(());
    };
    let labels: Vec<String> = first.tracked.iter().map(|&k| first.station_labels[k].clone()).collect();
    writeln!(out, "{}", results_header(&labels))?;
    for run in runs {
        for r in &run.rows {
            write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.slot,
                run.policy,
                r.e0_kwh,
                r.p_loss_kw,
                r.capacity,
                opt(r.f),
                r.green_kw,
                r.load_kw,
                opt(r.ncap())
            )?;
            for &k in &run.tracked {
                write!(out, ",{}", r.station_capacity[k])?;
            }
            for &k in &run.tracked {
                write!(out, ",{}", opt(r.station_ncap[k]))?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn write_summary(runs: &[RunResults], mut out: impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "policy,slots,mean_e0_kwh,mean_p_loss_kw,mean_capacity_bits_hz,mean_f_bits_per_tonco2_hz,mean_ncap,var_ncap,mean_station_var_ncap"
    )?;
    for run in runs {
        let s = run.summary();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.policy,
            s.slots,
            s.mean_e0_kwh,
            s.mean_p_loss_kw,
            s.mean_capacity,
            s.mean_f,
            s.mean_ncap,
            s.var_ncap,
            s.mean_station_var_ncap
        )?;
    }
    Ok(())
}

/// Per-slot alignment of several runs plus summary deltas against the first.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub policies: Vec<Policy>,
    /// `(slot, per-run (e0_kwh, p_loss_kw, f))`.
    pub slots: Vec<(usize, Vec<(f64, f64, Option<f64>)>)>,
    pub summaries: Vec<Summary>,
    /// Against the first run: `(Δ mean E0, Δ mean f, Δ mean P_loss)`.
    pub deltas: Vec<(f64, f64, f64)>,
}

pub fn compare(results: &[RunResults]) -> Result<Comparison> {
    let Some(first) = results.first() else {
        return Err(Error::Validation(vec!["nothing to compare".into()]));
    };
    for r in results {
        if r.horizon() != first.horizon() {
            return Err(Error::MismatchedHorizons(first.horizon(), r.horizon()));
        }
    }
    let summaries: Vec<Summary> = results.iter().map(RunResults::summary).collect();
    let base = &summaries[0];
    let deltas = summaries
        .iter()
        .map(|s| {
            (
                s.mean_e0_kwh - base.mean_e0_kwh,
                s.mean_f - base.mean_f,
                s.mean_p_loss_kw - base.mean_p_loss_kw,
            )
        })
        .collect();
    let slots = (0..first.horizon())
        .map(|k| {
            (
                first.rows[k].slot,
                results
                    .iter()
                    .map(|r| (r.rows[k].e0_kwh, r.rows[k].p_loss_kw, r.rows[k].f))
                    .collect(),
            )
        })
        .collect();
    Ok(Comparison {
        policies: results.iter().map(|r| r.policy).collect(),
        slots,
        summaries,
        deltas,
    })
}

impl Comparison {
    pub fn write_table(&self, mut out: impl Write) -> std::io::Result<()> {
        write!(out, "slot")?;
        for p in &self.policies {
            write!(out, ",e0_kwh_{p},p_loss_kw_{p},f_{p}")?;
        }
        writeln!(out)?;
        for (slot, cells) in &self.slots {
            write!(out, "{slot}")?;
            for (e0, loss, f) in cells {
                write!(out, ",{e0},{loss},{}", opt(*f))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn write_deltas(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "policy,delta_mean_e0_kwh,delta_mean_f,delta_mean_p_loss_kw")?;
        for (p, (e0, f, loss)) in self.policies.iter().zip(&self.deltas) {
            writeln!(out, "{p},{e0},{f},{loss}")?;
        }
        Ok(())
    }
}

/// Writes `results.csv` and `summary.csv` (and `comparison.csv` plus
/// `deltas.csv` for more than one run) into `dir`.
pub fn write_run_outputs(runs: &[RunResults], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> Result<()> {
        let path = dir.join(name);
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| Error::io(&path, e))?;
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))
    };
    write("results.csv", &|b| write_results(runs, b))?;
    write("summary.csv", &|b| write_summary(runs, b))?;
    if runs.len() > 1 {
        let cmp = compare(runs)?;
        write("comparison.csv", &|b| cmp.write_table(b))?;
        write("deltas.csv", &|b| cmp.write_deltas(b))?;
    }
    Ok(())
}
