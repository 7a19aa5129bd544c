//! Feeder topology, nodal admittance matrix and the real loss kernel.
//!
//! The loss kernel `X` is the real part of the inverse of the admittance
//! matrix with the slack row and column removed, padded back with zeros at the
//! slack index. With injections `s` at the non-slack buses, the linearised
//! branch loss is `sᵀ X s / U²` and the voltage profile is `U + X s / U`.

pub(crate) mod feeder;

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use feeder::{load_feeder, parse_feeder, Feeder};

/// Index of a bus within a topology. Index 0 is the slack bus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BusId(pub usize);

impl BusId {
    pub const SLACK: BusId = BusId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Load,
    Green,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Human-readable name, e.g. the feeder's node number.
    pub label: String,
}

impl Bus {
    pub fn new(id: usize, kind: BusKind) -> Self {
        Bus {
            id: BusId(id),
            kind,
            label: id.to_string(),
        }
    }
}

/// Pi-model line between two buses, per-unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    pub admittance: Complex64,
    pub shunt_from: Complex64,
    pub shunt_to: Complex64,
}

impl Branch {
    pub fn new(from: usize, to: usize, admittance: Complex64) -> Self {
        Branch {
            from: BusId(from),
            to: BusId(to),
            admittance,
            shunt_from: Complex64::new(0.0, 0.0),
            shunt_to: Complex64::new(0.0, 0.0),
        }
    }

    pub fn resistive(from: usize, to: usize, conductance: f64) -> Self {
        Branch::new(from, to, Complex64::new(conductance, 0.0))
    }

    pub fn with_shunts(mut self, from: Complex64, to: Complex64) -> Self {
        self.shunt_from = from;
        self.shunt_to = to;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridTopology {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    /// Slack voltage magnitude `U`, per-unit.
    pub slack_voltage: f64,
}

impl GridTopology {
    pub fn new(buses: Vec<Bus>, branches: Vec<Branch>) -> Self {
        GridTopology {
            buses,
            branches,
            slack_voltage: 1.0,
        }
    }

    /// Chain `0 - 1 - ... - n` with the given branch admittances. Every
    /// non-slack bus is a load bus.
    pub fn chain(admittances: &[Complex64]) -> Self {
        let mut buses = vec![Bus::new(0, BusKind::Slack)];
        let mut branches = Vec::with_capacity(admittances.len());
        for (k, &y) in admittances.iter().enumerate() {
            buses.push(Bus::new(k + 1, BusKind::Load));
            branches.push(Branch::new(k, k + 1, y));
        }
        GridTopology::new(buses, branches)
    }

    pub fn with_kind(mut self, bus: usize, kind: BusKind) -> Self {
        if let Some(b) = self.buses.iter_mut().find(|b| b.id.0 == bus) {
            b.kind = kind;
        }
        self
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn slack(&self) -> Option<BusId> {
        self.buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
    }

    /// Buses of the given kind, ascending by index.
    pub fn buses_of(&self, kind: BusKind) -> Vec<BusId> {
        let mut ids: Vec<BusId> = self
            .buses
            .iter()
            .filter(|b| b.kind == kind)
            .map(|b| b.id)
            .collect();
        ids.sort();
        ids
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_by_label(&self, label: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.label == label)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoSlack,
    MultipleSlack(Vec<BusId>),
    SlackNotZero(BusId),
    DuplicateBus(BusId),
    NonContiguous { expected: usize, found: BusId },
    UnknownBus { branch: usize, bus: BusId },
    SelfLoop { branch: usize },
    NonPassive { branch: usize, conductance: f64 },
    NonFiniteAdmittance { branch: usize },
    Disconnected(Vec<BusId>),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSlack => write!(f, "no slack bus"),
            Violation::MultipleSlack(ids) => write!(f, "multiple slack buses: {ids:?}"),
            Violation::SlackNotZero(id) => write!(f, "slack bus must have index 0, found {id}"),
            Violation::DuplicateBus(id) => write!(f, "duplicate bus id {id}"),
            Violation::NonContiguous { expected, found } => {
                write!(f, "bus indices must be contiguous: expected #{expected}, found {found}")
            }
            Violation::UnknownBus { branch, bus } => {
                write!(f, "branch {branch} references unknown bus {bus}")
            }
            Violation::SelfLoop { branch } => write!(f, "branch {branch} connects a bus to itself"),
            Violation::NonPassive { branch, conductance } => {
                write!(f, "nonpassive branch {branch}: conductance {conductance} < 0")
            }
            Violation::NonFiniteAdmittance { branch } => {
                write!(f, "branch {branch} has a non-finite admittance")
            }
            Violation::Disconnected(ids) => {
                write!(f, "disconnected: buses {ids:?} unreachable from slack")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

pub fn validate_topology(topology: &GridTopology) -> ValidationReport {
    let mut violations = Vec::new();

    let slacks: Vec<BusId> = topology
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .map(|b| b.id)
        .collect();
    match slacks.as_slice() {
        [] => violations.push(Violation::NoSlack),
        [only] if only.0 != 0 => violations.push(Violation::SlackNotZero(*only)),
        [_] => {}
        _ => violations.push(Violation::MultipleSlack(slacks.clone())),
    }

    let mut seen = HashSet::new();
    for bus in &topology.buses {
        if !seen.insert(bus.id) {
            violations.push(Violation::DuplicateBus(bus.id));
        }
    }
    let mut sorted: Vec<BusId> = seen.iter().copied().collect();
    sorted.sort();
    if let Some((expected, found)) = sorted
        .iter()
        .enumerate()
        .find(|(k, id)| id.0 != *k)
        .map(|(k, id)| (k, *id))
    {
        violations.push(Violation::NonContiguous { expected, found });
    }

    for (k, br) in topology.branches.iter().enumerate() {
        for end in [br.from, br.to] {
            if !seen.contains(&end) {
                violations.push(Violation::UnknownBus { branch: k, bus: end });
            }
        }
        if br.from == br.to {
            violations.push(Violation::SelfLoop { branch: k });
        }
        let parts = [br.admittance, br.shunt_from, br.shunt_to];
        if parts.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            violations.push(Violation::NonFiniteAdmittance { branch: k });
        } else if br.admittance.re < 0.0 {
            violations.push(Violation::NonPassive {
                branch: k,
                conductance: br.admittance.re,
            });
        }
    }

    if let Some(&root) = slacks.first() {
        let unreachable = unreachable_from(topology, root, &seen);
        if !unreachable.is_empty() {
            violations.push(Violation::Disconnected(unreachable));
        }
    }

    ValidationReport { violations }
}

fn unreachable_from(topology: &GridTopology, root: BusId, buses: &HashSet<BusId>) -> Vec<BusId> {
    let mut adjacency: BTreeMap<BusId, Vec<BusId>> = BTreeMap::new();
    for br in &topology.branches {
        if br.admittance.norm() == 0.0 {
            continue;
        }
        adjacency.entry(br.from).or_default().push(br.to);
        adjacency.entry(br.to).or_default().push(br.from);
    }
    let mut visited = HashSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(bus) = queue.pop_front() {
        for &next in adjacency.get(&bus).map(Vec::as_slice).unwrap_or(&[]) {
            if visited.insert(next) {
                queue.push_back(next);
            }
        }
    }
    let mut missing: Vec<BusId> = buses.difference(&visited).copied().collect();
    missing.sort();
    missing
}

/// Nodal admittance matrix indexed by `BusId`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceMatrix {
    pub y: DMatrix<Complex64>,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.y.nrows()
    }
}

pub fn build_admittance(topology: &GridTopology) -> Result<AdmittanceMatrix> {
    let report = validate_topology(topology);
    if !report.is_valid() {
        return Err(Error::InvalidTopology(report));
    }
    let n = topology.bus_count();
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for br in &topology.branches {
        let (f, t) = (br.from.0, br.to.0);
        y[(f, t)] -= br.admittance;
        y[(t, f)] -= br.admittance;
        y[(f, f)] += br.admittance + br.shunt_from;
        y[(t, t)] += br.admittance + br.shunt_to;
    }
    Ok(AdmittanceMatrix { y })
}

fn without_index<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>, skip: usize) -> DMatrix<T> {
    let keep: Vec<usize> = (0..m.nrows()).filter(|&k| k != skip).collect();
    DMatrix::from_fn(keep.len(), keep.len(), |r, c| m[(keep[r], keep[c])])
}

fn invert_checked(m: DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Some(m);
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..n).map(|k| u[(k, k)].norm()).collect();
    let largest = pivots.iter().cloned().fold(0.0, f64::max);
    let smallest = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(largest > 0.0) || smallest <= 1e-13 * largest {
        return None;
    }
    let inv = lu.try_inverse()?;
    if inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Some(inv)
    } else {
        None
    }
}

/// Real loss kernel with its load/green block partition.
#[derive(Clone, Debug, PartialEq)]
pub struct LossMatrix {
    x_real: DMatrix<f64>,
    slack: BusId,
    load_order: Vec<BusId>,
    green_order: Vec<BusId>,
    b: DMatrix<f64>,
    m: DMatrix<f64>,
    g_sub: DMatrix<f64>,
    /// Rows: non-slack buses ascending; columns: `load_order`.
    volt_load: DMatrix<f64>,
    /// Rows: non-slack buses ascending; columns: `green_order`.
    volt_green: DMatrix<f64>,
}

/// Builds the loss kernel. Every non-slack bus is placed in the load block;
/// use [`LossMatrix::partitioned`] to split off green buses.
pub fn build_loss_matrix(admittance: &AdmittanceMatrix, slack: BusId) -> Result<LossMatrix> {
    let n = admittance.dim();
    if slack.0 >= n {
        return Err(Error::PartitionMismatch(format!(
            "slack {slack} outside a {n}-bus matrix"
        )));
    }
    let reduced = without_index(&admittance.y, slack.0);
    let inverse = invert_checked(reduced).ok_or(Error::SingularReducedMatrix)?;

    let mut x_real = DMatrix::<f64>::zeros(n, n);
    let others: Vec<usize> = (0..n).filter(|&k| k != slack.0).collect();
    for (r, &br) in others.iter().enumerate() {
        for (c, &bc) in others.iter().enumerate() {
            x_real[(br, bc)] = 0.5 * (inverse[(r, c)].re + inverse[(c, r)].re);
        }
    }
    let load: Vec<BusId> = others.iter().map(|&k| BusId(k)).collect();
    LossMatrix::assemble(x_real, slack, load, Vec::new())
}

/// Splits the non-slack block of `X` into `B` (load × load), `M` (load × green)
/// and `Gsub` (green × green), following the given orders.
pub fn partition_blocks(
    x: &LossMatrix,
    load: &[BusId],
    green: &[BusId],
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = x.x_real.nrows();
    let mut seen = HashSet::new();
    for &id in load.iter().chain(green) {
        if id.0 >= n {
            return Err(Error::PartitionMismatch(format!("bus {id} out of range")));
        }
        if id == x.slack {
            return Err(Error::PartitionMismatch(format!(
                "slack bus {id} cannot be in a block"
            )));
        }
        if !seen.insert(id) {
            return Err(Error::PartitionMismatch(format!(
                "bus {id} appears twice (load and green sets must be disjoint)"
            )));
        }
    }
    if seen.len() != n - 1 {
        let missing: Vec<usize> = (0..n)
            .filter(|&k| k != x.slack.0 && !seen.contains(&BusId(k)))
            .collect();
        return Err(Error::PartitionMismatch(format!(
            "non-slack buses {missing:?} are in neither set"
        )));
    }
    let pick = |rows: &[BusId], cols: &[BusId]| {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
            x.x_real[(rows[r].0, cols[c].0)]
        })
    };
    Ok((pick(load, load), pick(load, green), pick(green, green)))
}

impl LossMatrix {
    /// Validates, assembles `Y`, builds `X` and partitions by bus kind.
    pub fn from_topology(topology: &GridTopology) -> Result<LossMatrix> {
        let y = build_admittance(topology)?;
        let slack = topology.slack().expect("validated topology has a slack bus");
        build_loss_matrix(&y, slack)?.partitioned(
            &topology.buses_of(BusKind::Load),
            &topology.buses_of(BusKind::Green),
        )
    }

    pub fn partitioned(&self, load: &[BusId], green: &[BusId]) -> Result<LossMatrix> {
        partition_blocks(self, load, green)?;
        LossMatrix::assemble(self.x_real.clone(), self.slack, load.to_vec(), green.to_vec())
    }

    fn assemble(
        x_real: DMatrix<f64>,
        slack: BusId,
        load_order: Vec<BusId>,
        green_order: Vec<BusId>,
    ) -> Result<LossMatrix> {
        let mut out = LossMatrix {
            x_real,
            slack,
            load_order,
            green_order,
            b: DMatrix::zeros(0, 0),
            m: DMatrix::zeros(0, 0),
            g_sub: DMatrix::zeros(0, 0),
            volt_load: DMatrix::zeros(0, 0),
            volt_green: DMatrix::zeros(0, 0),
        };
        let (b, m, g_sub) = partition_blocks(&out, &out.load_order, &out.green_order)?;
        let rows = out.non_slack_buses();
        out.volt_load = DMatrix::from_fn(rows.len(), out.load_order.len(), |r, c| {
            out.x_real[(rows[r].0, out.load_order[c].0)]
        });
        out.volt_green = DMatrix::from_fn(rows.len(), out.green_order.len(), |r, c| {
            out.x_real[(rows[r].0, out.green_order[c].0)]
        });
        out.b = b;
        out.m = m;
        out.g_sub = g_sub;
        Ok(out)
    }

    pub fn x_real(&self) -> &DMatrix<f64> {
        &self.x_real
    }

    pub fn slack(&self) -> BusId {
        self.slack
    }

    pub fn load_order(&self) -> &[BusId] {
        &self.load_order
    }

    pub fn green_order(&self) -> &[BusId] {
        &self.green_order
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn g_sub(&self) -> &DMatrix<f64> {
        &self.g_sub
    }

    pub fn n_load(&self) -> usize {
        self.load_order.len()
    }

    pub fn n_green(&self) -> usize {
        self.green_order.len()
    }

    /// Non-slack buses in ascending index order; this is the row order of
    /// voltage profiles.
    pub fn non_slack_buses(&self) -> Vec<BusId> {
        (0..self.x_real.nrows())
            .filter(|&k| k != self.slack.0)
            .map(BusId)
            .collect()
    }

    /// Sensitivity of non-slack voltages to load-bus injections.
    pub fn voltage_load_columns(&self) -> &DMatrix<f64> {
        &self.volt_load
    }

    /// Sensitivity of non-slack voltages to green-bus injections.
    pub fn voltage_green_columns(&self) -> &DMatrix<f64> {
        &self.volt_green
    }

    /// Non-slack block of `X`, rows and columns in ascending bus order.
    pub fn non_slack_block(&self) -> DMatrix<f64> {
        without_index(&self.x_real, self.slack.0)
    }
}

/// Structural checks of a loss kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossInvariants {
    /// Largest magnitude in the slack row and column (should be exactly 0).
    pub slack_max_abs: f64,
    /// `max |X_ij − X_ji|`.
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
}

impl LossInvariants {
    pub fn of(loss: &LossMatrix) -> Self {
        let x = loss.x_real();
        let s = loss.slack().0;
        let n = x.nrows();
        let slack_max_abs = (0..n)
            .map(|k| x[(s, k)].abs().max(x[(k, s)].abs()))
            .fold(0.0, f64::max);
        let asymmetry = (&x.transpose() - x).amax();
        let sym = (x + x.transpose()) * 0.5;
        let min_eigenvalue = nalgebra::SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        LossInvariants {
            slack_max_abs,
            asymmetry,
            min_eigenvalue,
        }
    }

    /// Zero slack row and column, symmetry within 1e-12 and no eigenvalue
    /// below −1e-10.
    pub fn hold(&self) -> bool {
        self.slack_max_abs == 0.0 && self.asymmetry <= 1e-12 && self.min_eigenvalue >= -1e-10
    }
}

/// Kernel `Y⁻¹ − Y⁻¹11ᵀY⁻¹ / (1ᵀY⁻¹1)` of the full admittance matrix. Only
/// defined when `Y` itself is invertible, i.e. when shunts are present.
///
/// For a balanced injection vector (the slack absorbs the net injection) its
/// real quadratic form approximates the one given by [`LossMatrix`] as the
/// shunts vanish.
pub fn centered_inverse_kernel(admittance: &AdmittanceMatrix) -> Result<DMatrix<Complex64>> {
    let inv = invert_checked(admittance.y.clone()).ok_or(Error::SingularReducedMatrix)?;
    let n = inv.nrows();
    let ones = nalgebra::DVector::from_element(n, Complex64::new(1.0, 0.0));
    let col = &inv * &ones;
    let row = ones.transpose() * &inv;
    let total: Complex64 = col.iter().sum();
    if total.norm() == 0.0 {
        return Err(Error::SingularReducedMatrix);
    }
    Ok(&inv - (col * row) / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn three_bus() -> GridTopology {
        GridTopology::chain(&[c(10.0), c(10.0)])
    }

    #[test]
    fn chain_is_valid() {
        assert!(validate_topology(&three_bus()).is_valid());
    }

    #[test]
    fn two_slacks_flagged() {
        let topo = three_bus().with_kind(1, BusKind::Slack);
        let report = validate_topology(&topo);
        assert!(report.to_string().contains("multiple slack"), "{report}");
    }

    #[test]
    fn disconnected_flagged() {
        let topo = GridTopology::new(
            vec![
                Bus::new(0, BusKind::Slack),
                Bus::new(1, BusKind::Load),
                Bus::new(2, BusKind::Load),
            ],
            vec![Branch::resistive(0, 1, 10.0)],
        );
        let report = validate_topology(&topo);
        assert_eq!(report.violations, vec![Violation::Disconnected(vec![BusId(2)])]);
        assert!(report.to_string().contains("disconnected"));
    }

    #[test]
    fn other_violations() {
        let mut topo = three_bus();
        topo.buses.push(Bus::new(2, BusKind::Load));
        topo.branches.push(Branch::resistive(1, 1, 1.0));
        topo.branches.push(Branch::resistive(1, 2, -1.0));
        topo.branches.push(Branch::resistive(1, 9, 1.0));
        let v = validate_topology(&topo).violations;
        assert!(v.contains(&Violation::DuplicateBus(BusId(2))));
        assert!(v.contains(&Violation::SelfLoop { branch: 2 }));
        assert!(v.iter().any(|x| matches!(x, Violation::NonPassive { branch: 3, .. })));
        assert!(v.contains(&Violation::UnknownBus { branch: 4, bus: BusId(9) }));

        let no_slack = three_bus().with_kind(0, BusKind::Load);
        assert_eq!(validate_topology(&no_slack).violations, vec![Violation::NoSlack]);
    }

    #[test]
    fn admittance_two_bus() {
        let y = build_admittance(&GridTopology::chain(&[c(10.0)])).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[c(10.0), c(-10.0), c(-10.0), c(10.0)]);
        assert_eq!(y.y, expected);
    }

    #[test]
    fn admittance_three_bus_with_shunt() {
        let y = build_admittance(&three_bus()).unwrap();
        let diag: Vec<f64> = (0..3).map(|k| y.y[(k, k)].re).collect();
        assert_eq!(diag, vec![10.0, 20.0, 10.0]);
        assert_eq!(y.y[(0, 1)].re, -10.0);
        assert_eq!(y.y[(1, 2)].re, -10.0);
        assert_eq!(y.y[(0, 2)].re, 0.0);

        let mut topo = three_bus();
        topo.branches[0] = topo.branches[0]
            .clone()
            .with_shunts(c(0.0), c(0.01));
        let y = build_admittance(&topo).unwrap();
        assert_relative_eq!(y.y[(1, 1)].re, 20.01, epsilon = 1e-15);
        let row_sums: Vec<f64> = (0..3).map(|r| y.y.row(r).iter().map(|z| z.re).sum()).collect();
        assert_relative_eq!(row_sums[0], 0.0);
        assert_relative_eq!(row_sums[1], 0.01, epsilon = 1e-12);
        assert_relative_eq!(row_sums[2], 0.0);
    }

    #[test]
    fn build_admittance_rejects_invalid() {
        let topo = three_bus().with_kind(2, BusKind::Slack);
        assert!(matches!(build_admittance(&topo), Err(Error::InvalidTopology(_))));
    }

    #[test]
    fn loss_matrix_two_bus() {
        let y = build_admittance(&GridTopology::chain(&[c(10.0)])).unwrap();
        let x = build_loss_matrix(&y, BusId(0)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.1]);
        assert_relative_eq!(*x.x_real(), expected, epsilon = 1e-15);
    }

    #[test]
    fn loss_matrix_three_bus_matches_hand_inverse() {
        // inverse of [[20,-10],[-10,10]] = (1/100)·[[10,10],[10,20]]
        let y = build_admittance(&three_bus()).unwrap();
        let x = build_loss_matrix(&y, BusId(0)).unwrap();
        let block = x.non_slack_block();
        let expected = DMatrix::from_row_slice(2, 2, &[0.1, 0.1, 0.1, 0.2]);
        assert_relative_eq!(block, expected, epsilon = 1e-14);
        assert!(x.x_real().row(0).iter().all(|&v| v == 0.0));
        assert!(x.x_real().column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_reduced_matrix() {
        // bus 2 electrically floating
        let mut y = build_admittance(&three_bus()).unwrap();
        for k in 0..3 {
            y.y[(2, k)] = c(0.0);
            y.y[(k, 2)] = c(0.0);
        }
        assert!(matches!(
            build_loss_matrix(&y, BusId(0)),
            Err(Error::SingularReducedMatrix)
        ));
    }

    #[test]
    fn partition_three_bus() {
        let topo = three_bus().with_kind(2, BusKind::Green);
        let x = LossMatrix::from_topology(&topo).unwrap();
        assert_relative_eq!(x.b()[(0, 0)], 0.1, epsilon = 1e-14);
        assert_relative_eq!(x.m()[(0, 0)], 0.1, epsilon = 1e-14);
        assert_relative_eq!(x.g_sub()[(0, 0)], 0.2, epsilon = 1e-14);
    }

    #[test]
    fn partition_all_load() {
        let x = LossMatrix::from_topology(&three_bus()).unwrap();
        assert_eq!(x.g_sub().shape(), (0, 0));
        assert_eq!(x.m().shape(), (2, 0));
        assert_relative_eq!(*x.b(), x.non_slack_block(), epsilon = 0.0);
    }

    #[test]
    fn partition_mismatch() {
        let x = LossMatrix::from_topology(&three_bus()).unwrap();
        let overlap = partition_blocks(&x, &[BusId(1), BusId(2)], &[BusId(2)]);
        assert!(matches!(overlap, Err(Error::PartitionMismatch(_))));
        let missing = partition_blocks(&x, &[BusId(1)], &[]);
        assert!(matches!(missing, Err(Error::PartitionMismatch(_))));
        let slack = partition_blocks(&x, &[BusId(0), BusId(1), BusId(2)], &[]);
        assert!(matches!(slack, Err(Error::PartitionMismatch(_))));
    }

    #[test]
    fn doubling_admittance_halves_kernel() {
        let x1 = LossMatrix::from_topology(&three_bus()).unwrap();
        let x2 = LossMatrix::from_topology(&GridTopology::chain(&[c(20.0), c(20.0)])).unwrap();
        assert_relative_eq!(x1.non_slack_block() * 0.5, x2.non_slack_block(), max_relative = 1e-12);
    }

    #[test]
    fn centered_kernel_needs_shunts() {
        let y = build_admittance(&three_bus()).unwrap();
        assert!(centered_inverse_kernel(&y).is_err());
    }

    #[test]
    fn centered_kernel_agrees_on_balanced_injections() {
        let tiny = Complex64::new(0.0, 1e-7);
        let mut topo = GridTopology::chain(&[Complex64::new(8.0, -4.0), Complex64::new(12.0, -3.0), c(5.0)]);
        topo.branches = topo.branches.into_iter().map(|b| b.with_shunts(tiny, tiny)).collect();
        let y = build_admittance(&topo).unwrap();
        let centered = centered_inverse_kernel(&y).unwrap().map(|z| z.re);
        let padded = LossMatrix::from_topology(&topo).unwrap();
        for s in [[0.3, -0.1, 0.05], [-0.2, 0.4, 0.1], [0.01, 0.0, -0.5]] {
            let ns = nalgebra::DVector::from_row_slice(&s);
            let full = nalgebra::DVector::from_fn(4, |k, _| if k == 0 { -ns.sum() } else { ns[k - 1] });
            let a = full.dot(&(&centered * &full));
            let b = ns.dot(&(padded.non_slack_block() * &ns));
            assert_relative_eq!(a, b, max_relative = 1e-4);
        }
    }
}
