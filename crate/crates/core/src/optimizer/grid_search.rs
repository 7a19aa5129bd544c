//! Exhaustive grid search over station powers, for at most three stations.
//!
//! The grid on station `k` is `{p_min, p_min + r, …}` plus `p_max` itself.
//! All axes but the last are enumerated point by point. Along the last axis
//! the feasible grid indices form an interval (capacity is monotone, voltage
//! rows are affine), and `E0` is a convex quadratic, so the best point of the
//! interval is found exactly from the vertex and the interval ends. The result
//! is identical to scanning every grid point.
//!
//! For a grid optimum `p_r` and the continuous optimum `p*`,
//! `E0(p_r) − E0(p*) ≤ L·r` where `L` is [`e0_lipschitz`], provided the grid
//! point obtained by rounding `p*` up stays feasible.

use nalgebra::DVector;

use super::{check_feasible, AllocationProblem, Allocation};
use crate::comm_model::capacity;
use crate::error::{Error, Result};

/// Largest number of stations the grid accepts.
pub const MAX_STATIONS: usize = 3;

/// Absolute slack granted to grid points on constraint boundaries.
const GRID_TOL: f64 = 1e-12;

/// Relative margin a grid point must beat the allocation by to dominate it.
const DOMINANCE_MARGIN: f64 = 1e-9;

/// Upper bound on enumerated outer grid points.
const MAX_OUTER_POINTS: usize = 50_000_000;

struct Grid<'a> {
    problem: &'a AllocationProblem,
    axes: Vec<Vec<f64>>,
    /// Capacity of each axis value, `p_c` clamped as in the residuals.
    caps: Vec<Vec<f64>>,
    /// First index on each axis meeting the station's minimum draw.
    first: Vec<usize>,
    b: Vec<Vec<f64>>,
    mg: Vec<f64>,
    e0_const: f64,
    inv_u2: f64,
    /// Voltage rows as `coef·p ≤ rhs`.
    volt_coef: Vec<Vec<f64>>,
    volt_rhs: Vec<f64>,
}

/// Feasible slice of the last axis for fixed outer coordinates.
struct Line {
    lo: usize,
    hi: usize,
    outer_cap: f64,
}

impl<'a> Grid<'a> {
    fn new(problem: &'a AllocationProblem, resolution: f64) -> Result<Self> {
        problem.validate()?;
        let n = problem.n_stations();
        if n > MAX_STATIONS {
            return Err(Error::TooLarge(n));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Validation(vec![format!(
                "grid resolution must be positive, got {resolution}"
            )]));
        }
        let mut axes = Vec::with_capacity(n);
        let mut caps = Vec::with_capacity(n);
        let mut first = Vec::with_capacity(n);
        for (k, bs) in problem.stations.iter().enumerate() {
            let span = bs.p_max - bs.p_min;
            let steps = (span / resolution + 1e-9).floor() as usize;
            let mut axis: Vec<f64> = (0..=steps).map(|i| bs.p_min + i as f64 * resolution).collect();
            if *axis.last().unwrap() < bs.p_max - 1e-12 * bs.p_max.abs().max(1.0) {
                axis.push(bs.p_max);
            }
            let minimum = problem.station_minimum(k);
            first.push(axis.partition_point(|&x| x < minimum - GRID_TOL));
            caps.push(
                axis.iter()
                    .map(|&x| capacity(x.max(bs.p_c), bs).expect("clamped"))
                    .collect(),
            );
            axes.push(axis);
        }
        let outer: usize = axes[..n.saturating_sub(1)]
            .iter()
            .map(|a| a.len())
            .product();
        if outer > MAX_OUTER_POINTS {
            return Err(Error::TooLarge(n));
        }

        let u = problem.slack_voltage;
        let inv_u2 = 1.0 / (u * u);
        let loss = &problem.loss;
        let g = &problem.green;
        let b = (0..n)
            .map(|i| (0..n).map(|j| loss.b()[(i, j)]).collect())
            .collect();
        let mg = (loss.m() * g).iter().copied().collect();
        let e0_const = -g.sum() + g.dot(&(loss.g_sub() * g)) * inv_u2;

        let vl = loss.voltage_load_columns();
        let rise = loss.voltage_green_columns() * g / u;
        let mut volt_coef = Vec::new();
        let mut volt_rhs = Vec::new();
        for r in 0..vl.nrows() {
            let row: Vec<f64> = (0..n).map(|k| vl[(r, k)] / u).collect();
            if problem.v_min[r].is_finite() {
                volt_coef.push(row.clone());
                volt_rhs.push(u - problem.v_min[r] + rise[r] + GRID_TOL);
            }
            if problem.v_max[r].is_finite() {
                volt_coef.push(row.iter().map(|c| -c).collect());
                volt_rhs.push(problem.v_max[r] - u - rise[r] + GRID_TOL);
            }
        }

        Ok(Grid {
            problem,
            axes,
            caps,
            first,
            b,
            mg,
            e0_const,
            inv_u2,
            volt_coef,
            volt_rhs,
        })
    }

    fn n(&self) -> usize {
        self.axes.len()
    }

    fn e0(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut quad = 0.0;
        for i in 0..n {
            let bx: f64 = (0..n).map(|j| self.b[i][j] * x[j]).sum();
            quad += x[i] * (bx - 2.0 * self.mg[i]);
        }
        x.iter().sum::<f64>() + quad * self.inv_u2 + self.e0_const
    }

    /// Feasible index interval on the last axis, or `None` if empty.
    fn line(&self, outer: &[f64]) -> Option<Line> {
        let last = self.n() - 1;
        let axis = &self.axes[last];
        let mut lo = self.first[last];
        let mut hi = axis.len() - 1;

        let outer_cap: f64 = outer
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let bs = &self.problem.stations[k];
                capacity(x.max(bs.p_c), bs).expect("clamped")
            })
            .sum();
        let c0 = self.problem.demand.c0;
        if c0 > 0.0 {
            let need = c0 - outer_cap - GRID_TOL;
            lo = lo.max(self.caps[last].partition_point(|&c| c < need));
        }

        for (coef, &rhs) in self.volt_coef.iter().zip(&self.volt_rhs) {
            let room = rhs - outer.iter().zip(coef).map(|(x, c)| x * c).sum::<f64>();
            let a = coef[last];
            if a > 0.0 {
                let bound = room / a;
                let end = axis.partition_point(|&x| x <= bound);
                if end == 0 {
                    return None;
                }
                hi = hi.min(end - 1);
            } else if a < 0.0 {
                let bound = room / a;
                lo = lo.max(axis.partition_point(|&x| x < bound));
            } else if room < 0.0 {
                return None;
            }
        }
        (lo <= hi).then_some(Line { lo, hi, outer_cap })
    }

    /// Lowest `E0` over last-axis indices `lo..=hi`.
    fn best_on_line(&self, point: &mut [f64], lo: usize, hi: usize) -> (f64, usize) {
        let last = self.n() - 1;
        let axis = &self.axes[last];
        // E0 along the axis is a·x² + b·x + const with a = B_ll/U²
        let a = self.b[last][last] * self.inv_u2;
        let lin: f64 = 1.0
            + 2.0 * self.inv_u2
                * ((0..last).map(|j| self.b[last][j] * point[j]).sum::<f64>() - self.mg[last]);
        let mut candidates = vec![lo, hi];
        if a > 0.0 {
            let vertex = -lin / (2.0 * a);
            let k = axis.partition_point(|&x| x < vertex);
            for c in [k.saturating_sub(1), k] {
                if (lo..=hi).contains(&c) {
                    candidates.push(c);
                }
            }
        }
        let mut best = (f64::INFINITY, lo);
        for c in candidates {
            point[last] = axis[c];
            let e = self.e0(point);
            if e < best.0 {
                best = (e, c);
            }
        }
        best
    }

    /// Calls `visit` with every feasible outer tuple and its line.
    fn for_each_line(&self, mut visit: impl FnMut(&mut Vec<f64>, Line) -> bool) {
        let n = self.n();
        let outer = n - 1;
        let mut idx: Vec<usize> = self.first[..outer].to_vec();
        if idx.iter().zip(&self.axes).any(|(&i, a)| i >= a.len()) {
            return;
        }
        let mut point = vec![0.0; n];
        loop {
            for k in 0..outer {
                point[k] = self.axes[k][idx[k]];
            }
            if let Some(line) = self.line(&point[..outer]) {
                if !visit(&mut point, line) {
                    return;
                }
            }
            let mut k = 0;
            loop {
                if k == outer {
                    return;
                }
                idx[k] += 1;
                if idx[k] < self.axes[k].len() {
                    break;
                }
                idx[k] = self.first[k];
                k += 1;
            }
        }
    }
}

/// Best feasible grid point for `E0`, with grid step `resolution` (per unit).
pub fn brute_force_oracle(problem: &AllocationProblem, resolution: f64) -> Result<Allocation> {
    if problem.n_stations() == 0 {
        let p = DVector::zeros(0);
        if !check_feasible(&p, problem).is_feasible(GRID_TOL) {
            return Err(Error::infeasible("no stations and an unmet capacity demand"));
        }
        return Ok(problem.allocation(p, GRID_TOL, 0.0));
    }
    let grid = Grid::new(problem, resolution)?;
    let last = grid.n() - 1;
    let mut best: Option<(f64, Vec<f64>)> = None;
    grid.for_each_line(|point, line| {
        let (e, k) = grid.best_on_line(point, line.lo, line.hi);
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            point[last] = grid.axes[last][k];
            best = Some((e, point.clone()));
        }
        true
    });
    let (_, p) = best.ok_or_else(|| Error::infeasible("no grid point satisfies the constraints"))?;
    let p = DVector::from_vec(p);
    debug_assert!(check_feasible(&p, problem).is_feasible(1e-9));
    Ok(problem.allocation(p, 1e-9, 0.0))
}

/// False when some feasible grid point has strictly more total capacity and
/// strictly less `E0` than `alloc`, or when `alloc` itself is infeasible.
/// Problems with more than [`MAX_STATIONS`] stations also give false.
pub fn pareto_verify(alloc: &Allocation, problem: &AllocationProblem, resolution: f64) -> bool {
    if alloc.p.len() != problem.n_stations() || !check_feasible(&alloc.p, problem).is_feasible(1e-8) {
        return false;
    }
    if problem.n_stations() == 0 {
        return true;
    }
    let Ok(grid) = Grid::new(problem, resolution) else {
        return false;
    };
    let Some(cap) = problem.total_capacity(&alloc.p) else {
        return false;
    };
    let e0 = problem.brown_import(&alloc.p);
    let cap_target = cap + DOMINANCE_MARGIN * cap.abs().max(1.0);
    let e0_target = e0 - DOMINANCE_MARGIN * e0.abs().max(1.0);
    let last = grid.n() - 1;

    let mut dominated = false;
    grid.for_each_line(|point, line| {
        let need = cap_target - line.outer_cap;
        let from = line.lo.max(grid.caps[last].partition_point(|&c| c <= need));
        if from <= line.hi && grid.best_on_line(point, from, line.hi).0 < e0_target {
            dominated = true;
        }
        !dominated
    });
    !dominated
}

/// `max ‖∇E0‖₁` over the power box. The gradient is affine, so the maximum
/// is attained at a vertex.
pub fn e0_lipschitz(problem: &AllocationProblem) -> f64 {
    let n = problem.n_stations();
    let lo = DVector::from_fn(n, |k, _| problem.stations[k].p_min);
    let hi = problem.upper_bounds();
    if n > 20 {
        // bound each gradient entry separately
        let u2 = problem.slack_voltage.powi(2);
        let mg = problem.loss.m() * &problem.green;
        return (0..n)
            .map(|i| {
                let spread: f64 = (0..n)
                    .map(|j| {
                        let b = problem.loss.b()[(i, j)];
                        (b * lo[j]).abs().max((b * hi[j]).abs())
                    })
                    .sum();
                1.0 + 2.0 * (spread + mg[i].abs()) / u2
            })
            .sum();
    }
    (0u32..1 << n)
        .map(|mask| {
            let v = DVector::from_fn(n, |k, _| if mask >> k & 1 == 1 { hi[k] } else { lo[k] });
            problem.e0_gradient(&v).lp_norm(1)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use num_complex::Complex64;

    use super::*;
    use crate::comm_model::{BaseStationParams, CapacityDemand};
    use crate::grid_model::{Branch, Bus, BusId, BusKind, GridTopology, LossMatrix};
    use crate::optimizer::{solve_one_shot, SolverConfig};

    fn single_bs(c0: f64) -> AllocationProblem {
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

    /// Star with two stations on unequal lines.
    fn two_bs(c0: f64) -> AllocationProblem {
        let topo = GridTopology::new(
            vec![
                Bus::new(0, BusKind::Slack),
                Bus::new(1, BusKind::Load),
                Bus::new(2, BusKind::Load),
            ],
            vec![Branch::resistive(0, 1, 10.0), Branch::resistive(0, 2, 2.0)],
        );
        let loss = Arc::new(LossMatrix::from_topology(&topo).unwrap());
        let bs = |bus| BaseStationParams {
            bus: BusId(bus),
            p_c: 0.1,
            p_min: 0.0,
            p_max: 2.0,
            h2: 1.0,
            sigma2: 1.0,
        };
        AllocationProblem::new(loss, 1.0, vec![bs(1), bs(2)], CapacityDemand::total(c0), DVector::zeros(0))
    }

    #[test]
    fn matches_single_station_optimum() {
        let alloc = brute_force_oracle(&single_bs(1.0), 1e-3).unwrap();
        assert!((alloc.p[0] - 1.0).abs() <= 1e-3, "{}", alloc.p);
        assert!((alloc.e0 - 1.1).abs() <= e0_lipschitz(&single_bs(1.0)) * 1e-3);
    }

    #[test]
    fn zero_demand_picks_origin() {
        let alloc = brute_force_oracle(&single_bs(0.0), 0.01).unwrap();
        assert_eq!(alloc.p[0], 0.0);
    }

    #[test]
    fn empty_grid_is_infeasible() {
        assert!(matches!(
            brute_force_oracle(&single_bs(4.0), 0.01),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn agrees_with_scan_of_every_point() {
        let prob = two_bs(1.5).with_voltage_band(0.8, 1.2);
        let res = 0.01;
        let fast = brute_force_oracle(&prob, res).unwrap();
        let mut best = f64::INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let p = DVector::from_row_slice(&[i as f64 * res, j as f64 * res]);
                if check_feasible(&p, &prob).is_feasible(GRID_TOL) {
                    best = best.min(prob.brown_import(&p));
                }
            }
        }
        assert!((fast.e0 - best).abs() < 1e-12, "{} vs {best}", fast.e0);
    }

    #[test]
    fn solver_output_is_not_dominated() {
        let prob = two_bs(1.5);
        let alloc = solve_one_shot(&prob, &SolverConfig::default()).unwrap();
        assert!(pareto_verify(&alloc, &prob, 1e-3));
    }

    #[test]
    fn slack_interior_point_is_dominated() {
        let prob = two_bs(1.5);
        let opt = solve_one_shot(&prob, &SolverConfig::default()).unwrap();
        let p = &opt.p + DVector::from_element(2, 0.3);
        let alloc = prob.allocation(p, 1e-8, 0.0);
        assert!(!pareto_verify(&alloc, &prob, 1e-2));
    }

    #[test]
    fn infeasible_allocation_fails() {
        let prob = two_bs(1.5);
        let alloc = prob.allocation(DVector::from_element(2, 0.1), 1e-8, 0.0);
        assert!(!pareto_verify(&alloc, &prob, 1e-2));
    }

    #[test]
    fn lipschitz_of_single_station() {
        // ∇E0 = 1 + 0.2 p on [0, 10]
        assert!((e0_lipschitz(&single_bs(0.0)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_four_stations() {
        let topo = GridTopology::chain(&[Complex64::new(10.0, 0.0); 4]);
        let loss = Arc::new(LossMatrix::from_topology(&topo).unwrap());
        let stations = (1..=4)
            .map(|b| BaseStationParams {
                bus: BusId(b),
                p_c: 0.0,
                p_min: 0.0,
                p_max: 1.0,
                h2: 1.0,
                sigma2: 1.0,
            })
            .collect();
        let prob = AllocationProblem::new(loss, 1.0, stations, CapacityDemand::total(0.0), DVector::zeros(0));
        assert!(matches!(brute_force_oracle(&prob, 0.1), Err(Error::TooLarge(4))));
    }
}
