//! Log-barrier interior-point method for the allocation programs.
//!
//! Every program handled here has the form
//!
//! ```text
//! minimise   ½ xᵀQx + cᵀx
//! subject to l < x < u
//!            A x ≤ r
//!            Σ_j log2(1 + k_j (x_j − o_j)) ≥ floor     (optional)
//! ```
//!
//! A phase-one problem (minimise a common slack `s` added to every
//! non-box constraint) finds a strictly feasible start when none is given.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Concave capacity row `Σ log2(1 + gain·(x − offset)) ≥ floor`.
#[derive(Clone, Debug)]
pub(crate) struct CapacityRow {
    pub gain: DVector<f64>,
    pub offset: DVector<f64>,
    pub floor: f64,
}

impl CapacityRow {
    pub fn value(&self, x: &DVector<f64>) -> Option<f64> {
        let mut total = 0.0;
        for j in 0..x.len() {
            let arg = self.gain[j] * (x[j] - self.offset[j]);
            if arg <= -1.0 {
                return None;
            }
            total += arg.ln_1p();
        }
        Some(total / std::f64::consts::LN_2)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ConvexProgram {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub rows: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub capacity: Option<CapacityRow>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BarrierSettings {
    /// Target duality gap, absolute, in objective units.
    pub gap: f64,
    /// Upper bound on the complementarity product `1/t`.
    pub complementarity: f64,
    pub max_newton: usize,
    pub growth: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct BarrierOutcome {
    pub x: DVector<f64>,
    pub kkt_residual: f64,
}

impl ConvexProgram {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    fn constraint_count(&self) -> usize {
        2 * self.dim() + self.rows.nrows() + usize::from(self.capacity.is_some())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }

    /// True when `x` is strictly inside every constraint.
    pub fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        Barrier::new(self, false).slacks(&x.clone()).is_some()
    }

    /// Runs phase one if needed, then the barrier path to `settings.gap`.
    pub fn solve(&self, start: Option<&DVector<f64>>, settings: BarrierSettings) -> Result<BarrierOutcome> {
        if let Some(x) = start.filter(|x| x.len() == self.dim() && self.well_inside(x)) {
            if let Ok(out) = self.follow_path(x.clone(), settings) {
                return Ok(out);
            }
        }
        let midpoint = (&self.lower + &self.upper) * 0.5;
        let x0 = if self.strictly_feasible(&midpoint) {
            midpoint
        } else {
            self.phase_one(&midpoint, settings)?
        };
        self.follow_path(x0, settings)
    }

    /// Warm starts hugging the boundary make the first centering crawl, so
    /// they are only used with every slack above a small relative margin.
    fn well_inside(&self, x: &DVector<f64>) -> bool {
        const MARGIN: f64 = 1e-6;
        let Some(sl) = Barrier::new(self, false).slacks(x) else {
            return false;
        };
        let width = &self.upper - &self.lower;
        let boxed = (0..self.dim()).all(|j| sl.below[j].min(sl.above[j]) >= MARGIN * width[j].min(1.0));
        let rows = (0..sl.rows.len()).all(|k| sl.rows[k] >= MARGIN * self.rhs[k].abs().max(1.0));
        let cap = sl.capacity.as_ref().is_none_or(|(surplus, _)| *surplus >= MARGIN);
        boxed && rows && cap
    }

    fn follow_path(&self, x0: DVector<f64>, settings: BarrierSettings) -> Result<BarrierOutcome> {
        let barrier = Barrier::new(self, false);
        let m = self.constraint_count() as f64;
        let t_final = (m / settings.gap).max(1.0 / settings.complementarity);
        let mut t = 1.0f64.min(t_final);
        let mut z = x0;
        loop {
            barrier.center(&mut z, t, settings.max_newton)?;
            if t >= t_final {
                break;
            }
            t = (t * settings.growth).min(t_final);
        }
        if let Some((x, kkt_residual)) = self.polish(&z, t) {
            return Ok(BarrierOutcome { x, kkt_residual });
        }
        let kkt_residual = barrier.kkt_residual(&z, t);
        Ok(BarrierOutcome { x: z, kkt_residual })
    }

    /// Active-set refinement of a barrier point. Constraints with slack below
    /// `1/√t` are held at equality and the KKT system is solved by Newton's
    /// method. Returns the refined point and its KKT residual, or `None` when
    /// the guessed active set is not confirmed (singular system, violated
    /// constraint, wrong-signed multiplier, or a worse objective).
    fn polish(&self, x: &DVector<f64>, t: f64) -> Option<(DVector<f64>, f64)> {
        let ln2 = std::f64::consts::LN_2;
        let sl = Barrier::new(self, false).slacks(x)?;
        let thresh = 1.0 / t.sqrt();
        let n = self.dim();

        let mut fixed: Vec<Option<bool>> = vec![None; n]; // Some(true): at upper
        let mut xk = x.clone();
        for j in 0..n {
            if sl.below[j] < thresh && sl.below[j] <= sl.above[j] {
                fixed[j] = Some(false);
                xk[j] = self.lower[j];
            } else if sl.above[j] < thresh {
                fixed[j] = Some(true);
                xk[j] = self.upper[j];
            }
        }
        let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
        let rows: Vec<usize> = (0..sl.rows.len()).filter(|&k| sl.rows[k] < thresh).collect();
        let cap = match (&self.capacity, &sl.capacity) {
            (Some(c), Some((surplus, _))) if *surplus < thresh => Some((c, 1.0 / (t * surplus))),
            _ => None,
        };
        let (nf, ne) = (free.len(), rows.len() + usize::from(cap.is_some()));
        if ne > nf {
            return None;
        }

        let cap_terms = |x: &DVector<f64>| -> Option<(f64, DVector<f64>, DVector<f64>)> {
            let (c, _) = cap?;
            let mut h = 0.0;
            let mut grad = DVector::zeros(n);
            let mut curv = DVector::zeros(n);
            for j in 0..n {
                let arg = 1.0 + c.gain[j] * (x[j] - c.offset[j]);
                if !(arg > 0.0) {
                    return Some((f64::NAN, grad, curv));
                }
                h += arg.ln() / ln2;
                grad[j] = c.gain[j] / (arg * ln2);
                curv[j] = c.gain[j] * c.gain[j] / (arg * arg * ln2);
            }
            Some((h, grad, curv))
        };

        let mut nu = DVector::zeros(rows.len());
        let mut mu = cap.map_or(0.0, |(_, m)| m);
        let mut converged = nf == 0;
        for _ in 0..30 {
            if nf == 0 {
                break;
            }
            let gf = &self.q * &xk + &self.c;
            let terms = cap_terms(&xk);
            if terms.as_ref().is_some_and(|(h, _, _)| !h.is_finite()) {
                return None;
            }
            let dim = nf + ne;
            let mut kkt = DMatrix::zeros(dim, dim);
            let mut rhs = DVector::zeros(dim);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    kkt[(a, b)] = self.q[(i, j)];
                }
                rhs[a] = -gf[i];
            }
            for (e, &k) in rows.iter().enumerate() {
                for (a, &i) in free.iter().enumerate() {
                    kkt[(nf + e, a)] = self.rows[(k, i)];
                    kkt[(a, nf + e)] = self.rows[(k, i)];
                }
                rhs[nf + e] = self.rhs[k] - self.rows.row(k).dot(&xk.transpose());
            }
            if let (Some((c, _)), Some((h, grad, curv))) = (cap, &terms) {
                let e = nf + rows.len();
                for (a, &i) in free.iter().enumerate() {
                    kkt[(a, a)] += mu * curv[i];
                    kkt[(e, a)] = grad[i];
                    kkt[(a, e)] = grad[i];
                }
                rhs[e] = c.floor - h;
            }
            let sol = kkt.lu().solve(&rhs)?;
            if sol.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let mut step = 0.0f64;
            for (a, &i) in free.iter().enumerate() {
                xk[i] += sol[a];
                step = step.max(sol[a].abs());
            }
            for e in 0..rows.len() {
                nu[e] = sol[nf + e];
            }
            if cap.is_some() {
                mu = -sol[nf + rows.len()];
            }
            if step <= 1e-15 * xk.amax().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return None;
        }

        // stationarity, primal feasibility and multiplier signs
        let gf = &self.q * &xk + &self.c;
        let scale = gf.amax().max(1.0);
        let mut lagrangian = gf.clone();
        for (e, &k) in rows.iter().enumerate() {
            lagrangian += self.rows.row(k).transpose() * nu[e];
        }
        let terms = cap_terms(&xk);
        if let Some((h, grad, _)) = &terms {
            if !h.is_finite() {
                return None;
            }
            lagrangian -= grad * mu;
        }
        let mut residual = 0.0f64;
        for &i in &free {
            residual = residual.max(lagrangian[i].abs() / scale);
        }
        for j in 0..n {
            let sign = match fixed[j] {
                Some(false) => -lagrangian[j],
                Some(true) => lagrangian[j],
                None => 0.0,
            };
            residual = residual.max(sign / scale);
            let tol = 1e-12 * self.lower[j].abs().max(self.upper[j].abs()).max(1.0);
            if xk[j] < self.lower[j] - tol || xk[j] > self.upper[j] + tol {
                return None;
            }
            xk[j] = xk[j].clamp(self.lower[j], self.upper[j]);
        }
        for e in 0..nu.len() {
            residual = residual.max(-nu[e] / scale);
        }
        residual = residual.max(-mu / scale);
        let violation = &self.rows * &xk - &self.rhs;
        for k in 0..violation.len() {
            residual = residual.max(violation[k] / self.rhs[k].abs().max(1.0));
        }
        if let (Some(c), Some((h, _, _))) = (&self.capacity, &terms) {
            residual = residual.max((c.floor - h) / c.floor.abs().max(1.0));
        } else if let Some(c) = &self.capacity {
            let h = c.value(&xk)?;
            residual = residual.max((c.floor - h) / c.floor.abs().max(1.0));
        }
        let worse = self.objective(&xk) > self.objective(x) + 1e-12 * self.objective(x).abs().max(1.0);
        if residual > 1e-9 || worse {
            return None;
        }
        Some((xk, residual.max(0.0)))
    }

    fn phase_one(&self, x0: &DVector<f64>, settings: BarrierSettings) -> Result<DVector<f64>> {
        let barrier = Barrier::new(self, true);
        let n = self.dim();
        let mut z = DVector::zeros(n + 1);
        z.rows_mut(0, n).copy_from(x0);
        z[n] = barrier.worst_violation(x0) + 1.0;

        let m = self.constraint_count() as f64 + 1.0;
        let t_final = m / settings.gap.min(1e-10);
        let mut t = 1.0;
        loop {
            barrier.center(&mut z, t, settings.max_newton)?;
            if z[n] < 0.0 {
                return Ok(z.rows(0, n).into_owned());
            }
            if t >= t_final {
                return Err(Error::infeasible(format!(
                    "no strictly feasible allocation exists (best common constraint slack {:.3e})",
                    -z[n]
                )));
            }
            t = (t * settings.growth).min(t_final);
        }
    }
}

struct Barrier<'a> {
    prog: &'a ConvexProgram,
    phase_one: bool,
}

struct Slacks {
    below: DVector<f64>,
    above: DVector<f64>,
    rows: DVector<f64>,
    /// (capacity surplus, per-variable log arguments)
    capacity: Option<(f64, DVector<f64>)>,
}

impl<'a> Barrier<'a> {
    fn new(prog: &'a ConvexProgram, phase_one: bool) -> Self {
        Barrier { prog, phase_one }
    }

    fn split(&self, z: &DVector<f64>) -> (DVector<f64>, f64) {
        let n = self.prog.dim();
        let s = if self.phase_one { z[n] } else { 0.0 };
        (z.rows(0, n).into_owned(), s)
    }

    fn slacks(&self, z: &DVector<f64>) -> Option<Slacks> {
        let p = self.prog;
        let (x, s) = self.split(z);
        let below = &x - &p.lower;
        let above = &p.upper - &x;
        if below.iter().chain(above.iter()).any(|&v| !(v > 0.0)) {
            return None;
        }
        let rows = (&p.rhs - &p.rows * &x).add_scalar(s);
        if rows.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let capacity = match &p.capacity {
            None => None,
            Some(cap) => {
                let args = DVector::from_fn(x.len(), |j, _| 1.0 + cap.gain[j] * (x[j] - cap.offset[j]));
                if args.iter().any(|&a| !(a > 0.0)) {
                    return None;
                }
                let surplus = args.iter().map(|a| a.ln()).sum::<f64>() / std::f64::consts::LN_2
                    - cap.floor
                    + s;
                if !(surplus > 0.0) {
                    return None;
                }
                Some((surplus, args))
            }
        };
        Some(Slacks {
            below,
            above,
            rows,
            capacity,
        })
    }

    /// Largest violation of the relaxed (non-box) constraints at `x`.
    fn worst_violation(&self, x: &DVector<f64>) -> f64 {
        let p = self.prog;
        let mut worst = 0.0f64;
        let rows = &p.rows * x - &p.rhs;
        for &v in rows.iter() {
            worst = worst.max(v);
        }
        if let Some(cap) = &p.capacity {
            let have = cap.value(x).unwrap_or(f64::NEG_INFINITY);
            worst = worst.max(cap.floor - have);
        }
        worst
    }

    fn objective(&self, z: &DVector<f64>) -> f64 {
        if self.phase_one {
            z[self.prog.dim()]
        } else {
            self.prog.objective(z)
        }
    }

    /// `max(1, ‖∇f0‖∞)`.
    fn objective_scale(&self, z: &DVector<f64>) -> f64 {
        if self.phase_one {
            return 1.0;
        }
        let x = z.rows(0, self.prog.dim());
        (&self.prog.q * x + &self.prog.c).amax().max(1.0)
    }

    fn value(&self, z: &DVector<f64>, t: f64) -> Option<f64> {
        let sl = self.slacks(z)?;
        let mut phi = 0.0;
        phi -= sl.below.iter().map(|v| v.ln()).sum::<f64>();
        phi -= sl.above.iter().map(|v| v.ln()).sum::<f64>();
        phi -= sl.rows.iter().map(|v| v.ln()).sum::<f64>();
        if let Some((surplus, _)) = sl.capacity {
            phi -= surplus.ln();
        }
        Some(t * self.objective(z) + phi)
    }

    fn grad_hess(&self, z: &DVector<f64>, t: f64, sl: &Slacks) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.prog;
        let n = p.dim();
        let dim = z.len();
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);

        if self.phase_one {
            grad[n] = t;
        } else {
            let x = z.rows(0, n);
            let gx = (&p.q * x + &p.c) * t;
            grad.rows_mut(0, n).copy_from(&gx);
            hess.view_mut((0, 0), (n, n)).copy_from(&(&p.q * t));
        }

        for j in 0..n {
            let (a, b) = (sl.below[j], sl.above[j]);
            grad[j] += -1.0 / a + 1.0 / b;
            hess[(j, j)] += 1.0 / (a * a) + 1.0 / (b * b);
        }

        if p.rows.nrows() > 0 {
            let inv = sl.rows.map(|r| 1.0 / r);
            let gx = p.rows.transpose() * &inv;
            for j in 0..n {
                grad[j] += gx[j];
            }
            let mut scaled = p.rows.clone();
            for (k, mut row) in scaled.row_iter_mut().enumerate() {
                row *= inv[k];
            }
            let hx = scaled.transpose() * &scaled;
            let mut block = hess.view_mut((0, 0), (n, n));
            block += hx;
            if self.phase_one {
                grad[n] -= inv.sum();
                let cross = scaled.transpose() * &inv;
                for j in 0..n {
                    hess[(j, n)] -= cross[j];
                    hess[(n, j)] -= cross[j];
                }
                hess[(n, n)] += inv.dot(&inv);
            }
        }

        if let (Some(cap), Some((h, args))) = (&p.capacity, &sl.capacity) {
            let ln2 = std::f64::consts::LN_2;
            let mut dh = DVector::zeros(dim);
            for j in 0..n {
                dh[j] = cap.gain[j] / (args[j] * ln2);
            }
            if self.phase_one {
                dh[n] = 1.0;
            }
            grad -= &dh / *h;
            hess += (&dh * dh.transpose()) / (h * h);
            for j in 0..n {
                let d2 = -cap.gain[j] * cap.gain[j] / (args[j] * args[j] * ln2);
                hess[(j, j)] -= d2 / h;
            }
        }
        (grad, hess)
    }

    /// Damped Newton minimisation of `t·f0 + φ`.
    fn center(&self, z: &mut DVector<f64>, t: f64, max_newton: usize) -> Result<()> {
        const DECREMENT_TOL: f64 = 1e-10;
        const STATIONARITY_TOL: f64 = 1e-11;
        // Newton converges quadratically once λ < 0.2; a dozen such steps
        // reach the rounding floor, which can sit above the tolerances at
        // large t.
        const QUADRATIC_STEPS: usize = 12;
        let mut quadratic = 0;
        for _ in 0..max_newton {
            let sl = self
                .slacks(z)
                .expect("barrier iterate left the strict interior");
            let (grad, hess) = self.grad_hess(z, t, &sl);
            let dz = solve_spd(hess, &grad).ok_or_else(|| {
                Error::NoConvergence("barrier Newton system is not positive definite".into())
            })?;
            let decrement2 = -grad.dot(&dz);
            if !decrement2.is_finite() {
                return Err(Error::NoConvergence("non-finite Newton decrement".into()));
            }
            let stationary = grad.amax() <= t * STATIONARITY_TOL * self.objective_scale(z);
            if (decrement2 * 0.5 <= DECREMENT_TOL && stationary) || quadratic >= QUADRATIC_STEPS {
                return Ok(());
            }

            let mut alpha = 1.0;
            while self.slacks(&(&*z + &dz * alpha)).is_none() {
                alpha *= 0.5;
                if alpha < 1e-20 {
                    return Err(Error::NoConvergence("line search stalled at the boundary".into()));
                }
            }
            // Full steps are safe near the centre; elsewhere backtrack on value.
            if decrement2.sqrt() < 0.2 {
                quadratic += 1;
            } else {
                let f0 = self.value(z, t).expect("interior");
                loop {
                    let trial = self.value(&(&*z + &dz * alpha), t).unwrap_or(f64::INFINITY);
                    if trial <= f0 - 0.25 * alpha * decrement2 || alpha < 1e-12 {
                        break;
                    }
                    alpha *= 0.5;
                }
            }
            *z += &dz * alpha;
        }
        Err(Error::NoConvergence(format!(
            "centering did not converge within {max_newton} Newton steps (t = {t:e})"
        )))
    }

    /// Scaled stationarity residual and complementarity using the barrier's
    /// implied multipliers `λ = 1/(t·slack)`.
    fn kkt_residual(&self, z: &DVector<f64>, t: f64) -> f64 {
        let Some(sl) = self.slacks(z) else {
            return f64::INFINITY;
        };
        let (g, _) = self.grad_hess(z, t, &sl);
        let stationarity = g.amax() / t / self.objective_scale(z);
        stationarity.max(1.0 / t)
    }
}

fn solve_spd(mut hess: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut shift = 0.0;
    for _ in 0..8 {
        if let Some(chol) = Cholesky::new(hess.clone()) {
            let dz = chol.solve(&(-grad));
            if dz.iter().all(|v| v.is_finite()) {
                return Some(dz);
            }
        }
        let next = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
        for k in 0..hess.nrows() {
            hess[(k, k)] += next - shift;
        }
        shift = next;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> BarrierSettings {
        BarrierSettings {
            gap: 1e-10,
            complementarity: 1e-8,
            max_newton: 200,
            growth: 20.0,
        }
    }

    fn boxed(n: usize, lo: f64, hi: f64) -> ConvexProgram {
        ConvexProgram {
            q: DMatrix::identity(n, n),
            c: DVector::zeros(n),
            lower: DVector::from_element(n, lo),
            upper: DVector::from_element(n, hi),
            rows: DMatrix::zeros(0, n),
            rhs: DVector::zeros(0),
            capacity: None,
        }
    }

    #[test]
    fn box_projection_clamps() {
        let mut prog = boxed(2, 0.0, 1.0);
        prog.c = DVector::from_row_slice(&[-2.0, 0.5]); // minimiser of ½‖x − (2, −0.5)‖²
        let out = prog.solve(None, settings()).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-8, "{}", out.x);
        assert!(out.x[1].abs() < 1e-8, "{}", out.x);
        assert!(out.kkt_residual <= 1e-8, "{}", out.kkt_residual);
    }

    #[test]
    fn phase_one_finds_interior_of_halfspace() {
        // x0 + x1 ≥ 1.8 inside [0,1]², start at the midpoint (infeasible)
        let mut prog = boxed(2, 0.0, 1.0);
        prog.rows = DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]);
        prog.rhs = DVector::from_row_slice(&[-1.8]);
        let out = prog.solve(None, settings()).unwrap();
        assert!((out.x[0] - 0.9).abs() < 1e-7 && (out.x[1] - 0.9).abs() < 1e-7, "{}", out.x);
    }

    #[test]
    fn phase_one_detects_infeasibility() {
        let mut prog = boxed(2, 0.0, 1.0);
        prog.rows = DMatrix::from_row_slice(1, 2, &[-1.0, -1.0]);
        prog.rhs = DVector::from_row_slice(&[-2.5]);
        assert!(matches!(prog.solve(None, settings()), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn capacity_row_active() {
        // min x s.t. log2(1 + x) ≥ 1, x in (0, 10) → x = 1
        let prog = ConvexProgram {
            q: DMatrix::zeros(1, 1),
            c: DVector::from_row_slice(&[1.0]),
            lower: DVector::from_row_slice(&[0.0]),
            upper: DVector::from_row_slice(&[10.0]),
            rows: DMatrix::zeros(0, 1),
            rhs: DVector::zeros(0),
            capacity: Some(CapacityRow {
                gain: DVector::from_row_slice(&[1.0]),
                offset: DVector::from_row_slice(&[0.0]),
                floor: 1.0,
            }),
        };
        let out = prog.solve(None, settings()).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-8, "{}", out.x);
    }
}
