//! Brown-import minimisation under capacity, box and voltage constraints.
//!
//! [`solve_one_shot`] minimises `E0(p) = Σp − Σg + P_loss(p, g)` over the
//! feasible set; [`project_feasible`] computes the Euclidean projection onto
//! the same set. Both run the log-barrier method in [`barrier`]. The grid
//! search in [`grid_search`] is an independent exhaustive reference for small
//! instances.

mod barrier;
pub mod grid_search;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::comm_model::{capacity, min_power, BaseStationParams, CapacityDemand};
use crate::error::{Error, Result};
use crate::grid_model::{BusId, LossMatrix};
use crate::power_flow::{loss_unchecked, voltage_unchecked};

use barrier::{BarrierSettings, CapacityRow, ConvexProgram};

pub use grid_search::{brute_force_oracle, e0_lipschitz, pareto_verify};

/// Weight of the `‖p‖²` regulariser that selects the minimum-norm optimum
/// when the loss quadratic is flat along some direction.
pub const TIKHONOV: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub tol_feas: f64,
    /// Relative objective accuracy.
    pub tol_opt: f64,
    /// Newton steps allowed per centering pass.
    pub max_iters: usize,
    /// Factor by which the barrier weight grows between centering passes.
    pub barrier_growth: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_feas: 1e-8,
            tol_opt: 1e-6,
            max_iters: 200,
            barrier_growth: 20.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.tol_feas > 0.0 && self.tol_opt > 0.0) {
            return Err("solver tolerances must be positive".into());
        }
        if self.max_iters == 0 {
            return Err("solver max_iters must be at least 1".into());
        }
        if !(self.barrier_growth > 1.0) {
            return Err("solver barrier_growth must exceed 1".into());
        }
        Ok(())
    }
}

/// Decision context for one time slot.
#[derive(Clone, Debug)]
pub struct AllocationProblem {
    pub loss: Arc<LossMatrix>,
    pub slack_voltage: f64,
    /// One station per load bus, in the loss matrix's `load_order`.
    pub stations: Vec<BaseStationParams>,
    pub demand: CapacityDemand,
    /// Green generation in `green_order`.
    pub green: DVector<f64>,
    /// Voltage bounds per non-slack bus, ascending bus order.
    pub v_min: DVector<f64>,
    pub v_max: DVector<f64>,
}

impl AllocationProblem {
    /// Problem without voltage limits.
    pub fn new(
        loss: Arc<LossMatrix>,
        slack_voltage: f64,
        stations: Vec<BaseStationParams>,
        demand: CapacityDemand,
        green: DVector<f64>,
    ) -> Self {
        let n = loss.non_slack_buses().len();
        AllocationProblem {
            loss,
            slack_voltage,
            stations,
            demand,
            green,
            v_min: DVector::from_element(n, f64::NEG_INFINITY),
            v_max: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn with_voltage_band(mut self, v_min: f64, v_max: f64) -> Self {
        self.v_min.fill(v_min);
        self.v_max.fill(v_max);
        self
    }

    pub fn with_green(&self, green: DVector<f64>) -> Self {
        AllocationProblem {
            green,
            ..self.clone()
        }
    }

    pub fn with_demand(&self, demand: CapacityDemand) -> Self {
        AllocationProblem {
            demand,
            ..self.clone()
        }
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n_load = self.loss.n_load();
        let n_bus = self.loss.non_slack_buses().len();
        let dims = [
            ("stations", n_load, self.stations.len()),
            ("green vector", self.loss.n_green(), self.green.len()),
            ("v_min", n_bus, self.v_min.len()),
            ("v_max", n_bus, self.v_max.len()),
        ];
        for (what, expected, got) in dims {
            if expected != got {
                return Err(Error::DimensionMismatch { what, expected, got });
            }
        }
        if let Some(f) = &self.demand.per_bs_floor {
            if f.len() != n_load {
                return Err(Error::DimensionMismatch {
                    what: "per-station capacity floors",
                    expected: n_load,
                    got: f.len(),
                });
            }
        }
        let mut problems = Vec::new();
        for (k, bs) in self.stations.iter().enumerate() {
            if bs.bus != self.loss.load_order()[k] {
                problems.push(format!(
                    "station {k} sits at {} but load order expects {}",
                    bs.bus,
                    self.loss.load_order()[k]
                ));
            }
            if let Err(e) = bs.validate() {
                problems.push(e);
            }
            if !(bs.p_max.is_finite()) {
                problems.push(format!("station {k}: p_max must be finite"));
            }
        }
        if !(self.slack_voltage > 0.0) {
            problems.push("slack voltage must be positive".into());
        }
        if !(self.demand.c0 >= 0.0) {
            problems.push("capacity demand c0 must be nonnegative".into());
        }
        if self.green.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            problems.push("green generation must be finite and nonnegative".into());
        }
        for k in 0..n_bus {
            if self.v_min[k] > self.v_max[k] {
                problems.push(format!("voltage band at row {k} is empty"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Per-station minimum draw from the capacity floor (`p_c` when the
    /// floor is zero or absent).
    pub fn station_minimum(&self, k: usize) -> f64 {
        min_power(self.demand.floor(k), &self.stations[k])
    }

    pub fn lower_bounds(&self) -> DVector<f64> {
        DVector::from_fn(self.n_stations(), |k, _| {
            self.stations[k].p_min.max(self.station_minimum(k))
        })
    }

    pub fn upper_bounds(&self) -> DVector<f64> {
        DVector::from_fn(self.n_stations(), |k, _| self.stations[k].p_max)
    }

    pub fn power_loss(&self, p: &DVector<f64>) -> f64 {
        loss_unchecked(&self.loss, p, &self.green, self.slack_voltage)
    }

    pub fn brown_import(&self, p: &DVector<f64>) -> f64 {
        p.sum() - self.green.sum() + self.power_loss(p)
    }

    pub fn voltages(&self, p: &DVector<f64>) -> DVector<f64> {
        voltage_unchecked(&self.loss, p, &self.green, self.slack_voltage)
    }

    /// Total capacity, or `None` if some station is below its circuit power.
    pub fn total_capacity(&self, p: &DVector<f64>) -> Option<f64> {
        self.stations
            .iter()
            .zip(p.iter())
            .map(|(bs, &pk)| capacity(pk, bs).ok())
            .sum()
    }

    /// Capacity with transmit power clamped at zero; used for residuals.
    fn clamped_capacity(&self, p: &DVector<f64>) -> f64 {
        self.stations
            .iter()
            .zip(p.iter())
            .map(|(bs, &pk)| capacity(pk.max(bs.p_c), bs).expect("clamped"))
            .sum()
    }

    /// Gradient of `E0` in `p`: `1 + (2/U²)(B p − M g)`.
    pub fn e0_gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        let u2 = self.slack_voltage * self.slack_voltage;
        let q = self.loss.b() * p - self.loss.m() * &self.green;
        q.map(|v| 1.0 + 2.0 * v / u2)
    }

    pub fn allocation(&self, p: DVector<f64>, tol_feas: f64, kkt_residual: f64) -> Allocation {
        let p_loss = self.power_loss(&p);
        let e0 = p.sum() - self.green.sum() + p_loss;
        let feasible = check_feasible(&p, self).is_feasible(tol_feas);
        Allocation {
            capacity_total: self.total_capacity(&p).unwrap_or(f64::NAN),
            p,
            e0,
            p_loss,
            feasible,
            kkt_residual,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    pub p: DVector<f64>,
    pub e0: f64,
    pub p_loss: f64,
    pub capacity_total: f64,
    pub feasible: bool,
    pub kkt_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Constraint {
    /// Network capacity floor `Σ C_n ≥ c0`.
    CapacityFloor,
    /// Per-station minimum draw from its capacity floor.
    StationMinimum(usize),
    LowerBound(usize),
    UpperBound(usize),
    VoltageLow(BusId),
    VoltageHigh(BusId),
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::CapacityFloor => write!(f, "capacity floor"),
            Constraint::StationMinimum(k) => write!(f, "station {k} minimum power"),
            Constraint::LowerBound(k) => write!(f, "station {k} p_min"),
            Constraint::UpperBound(k) => write!(f, "station {k} p_max"),
            Constraint::VoltageLow(b) => write!(f, "voltage at {b} below v_min"),
            Constraint::VoltageHigh(b) => write!(f, "voltage at {b} above v_max"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeasibilityReport {
    /// Every constraint with a positive residual.
    pub violations: Vec<(Constraint, f64)>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }

    pub fn max_residual(&self) -> f64 {
        self.violations.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }

    pub fn violates(&self, which: Constraint, tol: f64) -> bool {
        self.violations.iter().any(|(c, r)| *c == which && *r > tol)
    }
}

/// Residual of every constraint of the allocation problem at `p`.
pub fn check_feasible(p: &DVector<f64>, problem: &AllocationProblem) -> FeasibilityReport {
    let mut violations = Vec::new();
    let mut push = |c: Constraint, r: f64| {
        if r > 0.0 || r.is_nan() {
            violations.push((c, if r.is_nan() { f64::INFINITY } else { r }));
        }
    };
    if p.len() != problem.n_stations() || p.iter().any(|v| !v.is_finite()) {
        push(Constraint::CapacityFloor, f64::INFINITY);
        return FeasibilityReport { violations };
    }
    if problem.demand.c0 > 0.0 {
        push(Constraint::CapacityFloor, problem.demand.c0 - problem.clamped_capacity(p));
    }
    for (k, bs) in problem.stations.iter().enumerate() {
        push(Constraint::StationMinimum(k), problem.station_minimum(k) - p[k]);
        push(Constraint::LowerBound(k), bs.p_min - p[k]);
        push(Constraint::UpperBound(k), p[k] - bs.p_max);
    }
    let v = problem.voltages(p);
    for (row, bus) in problem.loss.non_slack_buses().into_iter().enumerate() {
        push(Constraint::VoltageLow(bus), problem.v_min[row] - v[row]);
        push(Constraint::VoltageHigh(bus), v[row] - problem.v_max[row]);
    }
    FeasibilityReport { violations }
}

enum Objective<'a> {
    BrownImport,
    Distance(&'a DVector<f64>),
}

/// A reduced barrier program: stations pinned by a degenerate box are fixed,
/// redundant rows are dropped.
struct Reduced {
    program: ConvexProgram,
    free: Vec<usize>,
    pinned: DVector<f64>,
}

impl Reduced {
    fn expand(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut full = self.pinned.clone();
        for (k, &j) in self.free.iter().enumerate() {
            full[j] = x[k];
        }
        full
    }

    fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.free.len(), |k, _| full[self.free[k]])
    }
}

fn reduce(problem: &AllocationProblem, objective: Objective<'_>) -> Result<Reduced> {
    let n = problem.n_stations();
    let lower = problem.lower_bounds();
    let upper = problem.upper_bounds();
    for k in 0..n {
        if lower[k] > upper[k] * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::infeasible(format!(
                "station {k}: minimum draw {} exceeds p_max {}",
                lower[k], upper[k]
            )));
        }
    }
    let c0 = problem.demand.c0;
    let max_capacity = problem.clamped_capacity(&upper);
    if c0 > max_capacity {
        return Err(Error::infeasible(format!(
            "capacity demand {c0} exceeds the {max_capacity} achievable at p_max"
        )));
    }

    let free: Vec<usize> = (0..n)
        .filter(|&k| upper[k] - lower[k] > 1e-12 * upper[k].abs().max(1.0))
        .collect();
    let mut pinned = upper.clone();
    for &k in &free {
        pinned[k] = 0.0;
    }
    let nf = free.len();
    let pick = |v: &DVector<f64>| DVector::from_fn(nf, |i, _| v[free[i]]);

    // objective over all stations, then restricted to the free ones
    let u2 = problem.slack_voltage * problem.slack_voltage;
    let (q_full, c_full) = match objective {
        Objective::BrownImport => {
            let q = problem.loss.b() * (2.0 / u2) + DMatrix::identity(n, n) * (2.0 * TIKHONOV);
            let c = (problem.loss.m() * &problem.green).map(|v| 1.0 - 2.0 * v / u2);
            (q, c)
        }
        Objective::Distance(omega) => (DMatrix::identity(n, n), -omega.clone()),
    };
    let q = DMatrix::from_fn(nf, nf, |r, c| q_full[(free[r], free[c])]);
    let c = DVector::from_fn(nf, |r, _| {
        c_full[free[r]]
            + (0..n)
                .filter(|j| !free.contains(j))
                .map(|j| q_full[(free[r], j)] * pinned[j])
                .sum::<f64>()
    });
    let (lo, hi) = (pick(&lower), pick(&upper));

    // voltage rows: (1/U)·V_L p within [U − v_max + rise, U − v_min + rise]
    let u = problem.slack_voltage;
    let vl = problem.loss.voltage_load_columns();
    let rise = problem.loss.voltage_green_columns() * &problem.green / u;
    let pinned_drop = vl * &pinned / u;
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for r in 0..vl.nrows() {
        let a = DVector::from_fn(nf, |i, _| vl[(r, free[i])] / u);
        let candidates = [
            (problem.v_min[r], 1.0, u - problem.v_min[r] + rise[r] - pinned_drop[r]),
            (problem.v_max[r], -1.0, problem.v_max[r] - u - rise[r] + pinned_drop[r]),
        ];
        for (bound, sign, rhs) in candidates {
            if !bound.is_finite() {
                continue;
            }
            let a = &a * sign;
            let worst: f64 = (0..nf).map(|i| a[i] * if a[i] > 0.0 { hi[i] } else { lo[i] }).sum();
            let best: f64 = (0..nf).map(|i| a[i] * if a[i] > 0.0 { lo[i] } else { hi[i] }).sum();
            if worst < rhs {
                continue; // slack over the whole box
            }
            if best > rhs {
                return Err(Error::infeasible(format!(
                    "voltage limit at {} cannot be met within the power bounds",
                    problem.loss.non_slack_buses()[r]
                )));
            }
            rows.push((a, rhs));
        }
    }
    let row_matrix = DMatrix::from_fn(rows.len(), nf, |r, c| rows[r].0[c]);
    let rhs = DVector::from_fn(rows.len(), |r, _| rows[r].1);

    let pinned_capacity: f64 = (0..n)
        .filter(|j| !free.contains(j))
        .map(|j| capacity(pinned[j].max(problem.stations[j].p_c), &problem.stations[j]).expect("clamped"))
        .sum();
    let floor = c0 - pinned_capacity;
    let cap_row = CapacityRow {
        gain: DVector::from_fn(nf, |i, _| problem.stations[free[i]].gain()),
        offset: DVector::from_fn(nf, |i, _| problem.stations[free[i]].p_c),
        floor,
    };
    let at_lower = cap_row.value(&lo).unwrap_or(f64::NEG_INFINITY);
    let capacity = if c0 > 0.0 && at_lower < floor {
        if nf == 0 {
            return Err(Error::infeasible("capacity demand not met by pinned stations"));
        }
        Some(cap_row)
    } else {
        None
    };

    Ok(Reduced {
        program: ConvexProgram {
            q,
            c,
            lower: lo,
            upper: hi,
            rows: row_matrix,
            rhs,
            capacity,
        },
        free,
        pinned,
    })
}

fn settings(cfg: &SolverConfig, scale: f64) -> BarrierSettings {
    BarrierSettings {
        gap: 1e-2 * cfg.tol_opt * scale.abs().max(1.0),
        complementarity: cfg.tol_feas,
        max_newton: cfg.max_iters,
        growth: cfg.barrier_growth,
    }
}

fn run(
    problem: &AllocationProblem,
    objective: Objective<'_>,
    cfg: &SolverConfig,
    start: Option<&DVector<f64>>,
    scale: f64,
) -> Result<(DVector<f64>, f64)> {
    problem.validate()?;
    let reduced = reduce(problem, objective)?;
    if reduced.free.is_empty() {
        return Ok((reduced.pinned.clone(), 0.0));
    }
    let start = start.map(|s| reduced.restrict(s));
    let out = reduced.program.solve(start.as_ref(), settings(cfg, scale))?;
    Ok((reduced.expand(&out.x), out.kkt_residual))
}

/// Minimises the brown import subject to every allocation constraint.
pub fn solve_one_shot(problem: &AllocationProblem, cfg: &SolverConfig) -> Result<Allocation> {
    solve_one_shot_from(problem, cfg, None)
}

/// [`solve_one_shot`] starting from `start` when it is strictly feasible.
pub fn solve_one_shot_from(
    problem: &AllocationProblem,
    cfg: &SolverConfig,
    start: Option<&DVector<f64>>,
) -> Result<Allocation> {
    problem.validate()?;
    let scale = problem.brown_import(&problem.upper_bounds());
    let (p, kkt) = run(problem, Objective::BrownImport, cfg, start, scale)?;
    let alloc = problem.allocation(p, cfg.tol_feas, kkt);
    if !alloc.feasible {
        return Err(Error::NoConvergence(format!(
            "solver returned a point violating constraints by {:e}",
            check_feasible(&alloc.p, problem).max_residual()
        )));
    }
    Ok(alloc)
}

/// Euclidean projection of `omega` onto the feasible set.
pub fn project_feasible(
    omega: &DVector<f64>,
    problem: &AllocationProblem,
    cfg: &SolverConfig,
) -> Result<DVector<f64>> {
    project_feasible_from(omega, problem, cfg, None)
}

/// [`project_feasible`] with an optional strictly feasible starting point.
pub fn project_feasible_from(
    omega: &DVector<f64>,
    problem: &AllocationProblem,
    cfg: &SolverConfig,
    start: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    if omega.len() != problem.n_stations() {
        return Err(Error::DimensionMismatch {
            what: "projection point",
            expected: problem.n_stations(),
            got: omega.len(),
        });
    }
    problem.validate()?;
    if check_feasible(omega, problem).violations.is_empty() {
        return Ok(omega.clone());
    }
    let (x, _) = run(problem, Objective::Distance(omega), cfg, start, 0.0)?;
    Ok(x)
}

/// Capacity achievable at the lower and at the upper power bounds.
pub fn capacity_range(problem: &AllocationProblem) -> (f64, f64) {
    (
        problem.clamped_capacity(&problem.lower_bounds()),
        problem.clamped_capacity(&problem.upper_bounds()),
    )
}

/// `points` capacity floors spanning from the capacity reached at the lower
/// power bounds to 95% of the way to the largest feasible floor (found by
/// bisection).
pub fn pareto_ladder(problem: &AllocationProblem, points: usize, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let (lo, hi) = capacity_range(problem);
    let feasible = |c0: f64| {
        let demand = CapacityDemand {
            c0,
            per_bs_floor: problem.demand.per_bs_floor.clone(),
        };
        solve_one_shot(&problem.with_demand(demand), cfg).is_ok()
    };
    if !feasible(lo) {
        return Err(Error::infeasible("the power lower bounds already violate a constraint"));
    }
    let top = if feasible(hi) {
        hi
    } else {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..40 {
            let mid = 0.5 * (a + b);
            if feasible(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        a
    };
    let span = 0.95 * (top - lo);
    Ok(match points {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n).map(|k| lo + span * k as f64 / (n - 1) as f64).collect(),
    })
}

/// Solves the one-shot problem for each network capacity floor in `ladder`,
/// tracing the brown-import/capacity trade-off.
pub fn pareto_sweep(
    problem: &AllocationProblem,
    ladder: &[f64],
    cfg: &SolverConfig,
) -> Vec<(f64, Result<Allocation>)> {
    ladder
        .iter()
        .map(|&c0| {
            let demand = CapacityDemand {
                c0,
                per_bs_floor: problem.demand.per_bs_floor.clone(),
            };
            (c0, solve_one_shot(&problem.with_demand(demand), cfg))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::{BusKind, GridTopology};
    use num_complex::Complex64;

    pub(crate) fn single_bs(c0: f64) -> AllocationProblem {
        let topo = GridTopology::chain(&[Complex64::new(10.0, 0.0)]);
        let loss = Arc::new(LossMatrix::from_topology(&topo).unwrap());
        let bs = BaseStationParams {
            bus: BusId(1),
            p_c: 0.0,
            p_min: 0.0,
            p_max: 10.0,
            h2: 1.0,
            sigma2: 1.0,
        };
        AllocationProblem::new(loss, 1.0, vec![bs], CapacityDemand::total(c0), DVector::zeros(0))
    }

    fn three_bus_green(g: f64) -> AllocationProblem {
        let topo = GridTopology::chain(&[Complex64::new(10.0, 0.0); 2]).with_kind(2, BusKind::Green);
        let loss = Arc::new(LossMatrix::from_topology(&topo).unwrap());
        let bs = BaseStationParams {
            bus: BusId(1),
            p_c: 0.0,
            p_min: 0.0,
            p_max: 2.0,
            h2: 1.0,
            sigma2: 1.0,
        };
        AllocationProblem::new(loss, 1.0, vec![bs], CapacityDemand::total(0.0), DVector::from_element(1, g))
    }

    #[test]
    fn box_interior_is_feasible() {
        let prob = single_bs(0.0);
        assert!(check_feasible(&DVector::from_element(1, 10.0), &prob).is_feasible(0.0));
    }

    #[test]
    fn zero_power_violates_floors() {
        let topo = GridTopology::chain(&[Complex64::new(10.0, 0.0)]);
        let loss = Arc::new(LossMatrix::from_topology(&topo).unwrap());
        let bs = BaseStationParams {
            bus: BusId(1),
            p_c: 0.2,
            p_min: 0.0,
            p_max: 10.0,
            h2: 1.0,
            sigma2: 1.0,
        };
        let demand = CapacityDemand {
            c0: 1.0,
            per_bs_floor: Some(vec![1.0]),
        };
        let prob = AllocationProblem::new(loss, 1.0, vec![bs], demand, DVector::zeros(0));
        let report = check_feasible(&DVector::zeros(1), &prob);
        assert!(report.violates(Constraint::CapacityFloor, 0.0));
        assert!(report.violates(Constraint::StationMinimum(0), 0.0));
    }

    #[test]
    fn voltage_violation_flagged() {
        // v1 = 1 − 0.1 p on the 3-bus toy; p = 1.5 gives 0.85 < 0.9
        let prob = three_bus_green(0.0).with_voltage_band(0.9, 1.1);
        let report = check_feasible(&DVector::from_element(1, 1.5), &prob);
        assert!(report.violates(Constraint::VoltageLow(BusId(1)), 0.0));
        assert!(report.violates(Constraint::VoltageLow(BusId(2)), 0.0));
        assert!(check_feasible(&DVector::from_element(1, 0.5), &prob).is_feasible(0.0));
    }

    #[test]
    fn zero_demand_optimum_at_zero() {
        let prob = three_bus_green(0.5);
        let alloc = solve_one_shot(&prob, &SolverConfig::default()).unwrap();
        assert!(alloc.p[0].abs() < 1e-8, "{}", alloc.p);
        // E0 = −g + 0.2·g²
        let expected = -0.5 + 0.2 * 0.25;
        assert!((alloc.e0 - expected).abs() < 1e-8, "{}", alloc.e0);
    }

    #[test]
    fn single_station_floor_active() {
        let alloc = solve_one_shot(&single_bs(1.0), &SolverConfig::default()).unwrap();
        assert!((alloc.p[0] - 1.0).abs() < 1e-7, "{}", alloc.p);
        assert!((alloc.e0 - 1.1).abs() < 1e-7);
        assert!(alloc.feasible);
        assert!(alloc.kkt_residual <= 1e-8);
    }

    #[test]
    fn demand_beyond_reach_is_infeasible() {
        // log2(1 + 10) ≈ 3.46
        let err = solve_one_shot(&single_bs(4.0), &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }), "{err}");
    }

    #[test]
    fn projection_examples() {
        let cfg = SolverConfig::default();
        let prob = single_bs(1.0);
        let inside = DVector::from_element(1, 3.0);
        assert_eq!(project_feasible(&inside, &prob, &cfg).unwrap(), inside);
        let x = project_feasible(&DVector::from_element(1, 0.5), &prob, &cfg).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-8, "{x}");

        let x = project_feasible(&DVector::from_element(1, 12.0), &single_bs(0.0), &cfg).unwrap();
        assert!((x[0] - 10.0).abs() < 1e-8, "{x}");
    }

    #[test]
    fn pinned_station_is_respected() {
        let mut prob = single_bs(0.0);
        prob.stations[0].p_min = 4.0;
        prob.stations[0].p_max = 4.0;
        let alloc = solve_one_shot(&prob, &SolverConfig::default()).unwrap();
        assert_eq!(alloc.p[0], 4.0);
    }

    #[test]
    fn validation_catches_dimension_errors() {
        let mut prob = single_bs(0.0);
        prob.green = DVector::zeros(2);
        assert!(matches!(
            solve_one_shot(&prob, &SolverConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
