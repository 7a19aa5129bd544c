//! Feeder file format (TOML, `schema = 1`).
//!
//! ```toml
//! schema = 1
//! name = "two-bus"
//! s_base_mva = 1.0
//! v_base_kv = 4.8
//! slack_voltage = 1.0          # optional, default 1.0
//! buses = [
//!   { index = 0, label = "799", kind = "slack" },
//!   { index = 1, label = "701", kind = "load" },
//! ]
//! # g + jb is the series admittance; shunt_g + j shunt_b is the total
//! # shunt admittance, split evenly between the two ends.
//! branches = [
//!   { from = "799", to = "701", g = 10.0, b = -5.0, shunt_b = 0.0 },
//! ]
//! ```
//!
//! All quantities are per-unit on `s_base_mva` / `v_base_kv`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;

use super::{validate_topology, Branch, Bus, BusId, BusKind, GridTopology};
use crate::error::{Error, Result};

/// A feeder file: topology plus its per-unit bases.
#[derive(Clone, Debug, PartialEq)]
pub struct Feeder {
    pub name: String,
    pub s_base_mva: f64,
    pub v_base_kv: f64,
    pub topology: GridTopology,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeeder {
    schema: u32,
    #[serde(default)]
    name: String,
    s_base_mva: f64,
    v_base_kv: f64,
    #[serde(default = "one")]
    slack_voltage: f64,
    buses: Vec<RawBus>,
    branches: Vec<RawBranch>,
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBus {
    index: usize,
    label: String,
    kind: BusKind,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBranch {
    from: String,
    to: String,
    g: f64,
    #[serde(default)]
    b: f64,
    #[serde(default)]
    shunt_g: f64,
    #[serde(default)]
    shunt_b: f64,
}

pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub(crate) fn toml_error(path: &Path, text: &str, err: toml::de::Error) -> Error {
    let line = err.span().map(|s| line_of(text, s.start)).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: err.message().to_string(),
    }
}

pub fn load_feeder(path: impl AsRef<Path>) -> Result<Feeder> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feeder(&text, path)
}

/// Parses and validates feeder text; `origin` is only used in error messages.
pub fn parse_feeder(text: &str, origin: impl Into<PathBuf>) -> Result<Feeder> {
    let origin = origin.into();
    let raw: RawFeeder = toml::from_str(text).map_err(|e| toml_error(&origin, text, e))?;

    let mut problems = Vec::new();
    if raw.schema != 1 {
        problems.push(format!("unsupported schema {} (expected 1)", raw.schema));
    }
    if !(raw.s_base_mva > 0.0) || !(raw.v_base_kv > 0.0) {
        problems.push("s_base_mva and v_base_kv must be positive".to_string());
    }
    if !(raw.slack_voltage > 0.0) {
        problems.push("slack_voltage must be positive".to_string());
    }

    let mut by_label = HashMap::new();
    let buses: Vec<Bus> = raw
        .buses
        .into_iter()
        .map(|b| {
            if by_label.insert(b.label.clone(), b.index).is_some() {
                problems.push(format!("duplicate bus label {:?}", b.label));
            }
            Bus {
                id: BusId(b.index),
                kind: b.kind,
                label: b.label,
            }
        })
        .collect();

    let mut branches = Vec::with_capacity(raw.branches.len());
    for (k, br) in raw.branches.into_iter().enumerate() {
        let (Some(&from), Some(&to)) = (by_label.get(&br.from), by_label.get(&br.to)) else {
            problems.push(format!(
                "branch {k} ({} - {}) references an unknown bus label",
                br.from, br.to
            ));
            continue;
        };
        let half_shunt = Complex64::new(br.shunt_g, br.shunt_b) * 0.5;
        branches.push(Branch::new(from, to, Complex64::new(br.g, br.b)).with_shunts(half_shunt, half_shunt));
    }

    let topology = GridTopology {
        buses,
        branches,
        slack_voltage: raw.slack_voltage,
    };
    let report = validate_topology(&topology);
    problems.extend(report.violations.iter().map(|v| v.to_string()));
    if !problems.is_empty() {
        return Err(Error::Validation(
            problems
                .into_iter()
                .map(|p| format!("{}: {p}", origin.display()))
                .collect(),
        ));
    }

    Ok(Feeder {
        name: raw.name,
        s_base_mva: raw.s_base_mva,
        v_base_kv: raw.v_base_kv,
        topology,
    })
}

impl Feeder {
    /// Looks up a bus by label, falling back to a `#<index>` reference.
    pub fn resolve(&self, label: &str) -> Option<BusId> {
        if let Some(bus) = self.topology.bus_by_label(label) {
            return Some(bus.id);
        }
        let idx: usize = label.strip_prefix('#')?.parse().ok()?;
        self.topology.bus(BusId(idx)).map(|b| b.id)
    }

    pub fn label(&self, id: BusId) -> &str {
        self.topology
            .bus(id)
            .map(|b| b.label.as_str())
            .unwrap_or("?")
    }

    /// Serialises back to the feeder format. Shunts are written as totals.
    pub fn to_toml(&self) -> String {
        let kind = |k: BusKind| match k {
            BusKind::Slack => "slack",
            BusKind::Load => "load",
            BusKind::Green => "green",
        };
        let mut out = String::new();
        let _ = writeln!(out, "schema = 1");
        let _ = writeln!(out, "name = {:?}", self.name);
        let _ = writeln!(out, "s_base_mva = {:?}", self.s_base_mva);
        let _ = writeln!(out, "v_base_kv = {:?}", self.v_base_kv);
        let _ = writeln!(out, "slack_voltage = {:?}", self.topology.slack_voltage);
        let _ = writeln!(out, "buses = [");
        for b in &self.topology.buses {
            let _ = writeln!(
                out,
                "  {{ index = {}, label = {:?}, kind = \"{}\" }},",
                b.id.0,
                b.label,
                kind(b.kind)
            );
        }
        let _ = writeln!(out, "]");
        let _ = writeln!(out, "branches = [");
        for br in &self.topology.branches {
            let shunt = br.shunt_from + br.shunt_to;
            let _ = writeln!(
                out,
                "  {{ from = {:?}, to = {:?}, g = {:?}, b = {:?}, shunt_g = {:?}, shunt_b = {:?} }},",
                self.label(br.from),
                self.label(br.to),
                br.admittance.re,
                br.admittance.im,
                shunt.re,
                shunt.im
            );
        }
        let _ = writeln!(out, "]");
        out
    }
}
