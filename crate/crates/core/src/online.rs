//! Stochastic online mirror descent on the brown-import objective.
//!
//! With the mirror map `F(x) = ½‖x‖²` both `∇F` and its conjugate are the
//! identity, so the dual-space step `ω = ∇F*(∇F(p) − δ∇f)` reduces to
//! `p − δ∇f` and the Bregman projection to the Euclidean one.
//!
//! Slot `t` proceeds as: observe `ĝ(t)`, build the slot's constraints from
//! `ĝ(t)` and its demand, then step from `p(t−1)` using the gradient at
//! `ĝ(t)` and project. Slot 1 is initialised by the one-shot solution on the
//! observed data.

use nalgebra::{DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::comm_model::{CapacityDemand, Metering};
use crate::error::{Error, Result};
use crate::grid_model::LossMatrix;
use crate::optimizer::{
    check_feasible, project_feasible_from, solve_one_shot, solve_one_shot_from, AllocationProblem,
    SolverConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation of the multiplicative observation error.
    pub relative_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            relative_sigma: 0.2,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        NoiseConfig {
            relative_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// `ĝ_m = max(0, g_m (1 + ε_m))` with i.i.d. `ε_m ~ N(0, σ²)`.
pub fn observe<R: Rng + ?Sized>(g_true: &DVector<f64>, noise: &NoiseConfig, rng: &mut R) -> DVector<f64> {
    if noise.relative_sigma == 0.0 {
        return g_true.clone();
    }
    let normal = Normal::new(0.0, noise.relative_sigma).expect("finite sigma");
    g_true.map(|g| (g * (1.0 + normal.sample(rng))).max(0.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientRule {
    /// `1 + (2/U²)(B p − M g)`, the gradient of the brown import.
    #[default]
    Exact,
    /// `2 B p − 2 M g`: the loss quadratic alone, without the linear term
    /// or the `1/U²` factor.
    QuadraticOnly,
}

/// Gradient of the brown import in `p` at observed green `g_obs`.
pub fn gradient(p: &DVector<f64>, g_obs: &DVector<f64>, loss: &LossMatrix, u: f64) -> Result<DVector<f64>> {
    gradient_with(GradientRule::Exact, p, g_obs, loss, u)
}

pub fn gradient_with(
    rule: GradientRule,
    p: &DVector<f64>,
    g_obs: &DVector<f64>,
    loss: &LossMatrix,
    u: f64,
) -> Result<DVector<f64>> {
    for (what, expected, got) in [
        ("load power vector", loss.n_load(), p.len()),
        ("green vector", loss.n_green(), g_obs.len()),
    ] {
        if expected != got {
            return Err(Error::DimensionMismatch { what, expected, got });
        }
    }
    let q = (loss.b() * p - loss.m() * g_obs) * 2.0;
    Ok(match rule {
        GradientRule::Exact => q.map(|v| 1.0 + v / (u * u)),
        GradientRule::QuadraticOnly => q,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `δ_t = delta0 / √t`.
    InverseSqrt { delta0: f64 },
    Constant { delta: f64 },
}

impl StepSchedule {
    /// `δ0 = U² / (2 λ_max(B))`, the reciprocal of the loss curvature.
    pub fn default_for(loss: &LossMatrix, u: f64) -> Self {
        StepSchedule::InverseSqrt {
            delta0: default_step0(loss, u),
        }
    }

    pub fn step(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::InverseSqrt { delta0 } => delta0 / (t.max(1) as f64).sqrt(),
            StepSchedule::Constant { delta } => delta,
        }
    }
}

pub fn default_step0(loss: &LossMatrix, u: f64) -> f64 {
    let b = loss.b();
    if b.nrows() == 0 {
        return 1.0;
    }
    let lambda = SymmetricEigen::new(b.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max);
    if lambda > 0.0 {
        u * u / (2.0 * lambda)
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineConfig {
    /// `None` selects [`StepSchedule::default_for`].
    pub schedule: Option<StepSchedule>,
    pub gradient: GradientRule,
    pub solver: SolverConfig,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            schedule: None,
            gradient: GradientRule::Exact,
            solver: SolverConfig::default(),
        }
    }
}

impl OnlineConfig {
    fn schedule_for(&self, problem: &AllocationProblem) -> StepSchedule {
        self.schedule
            .unwrap_or_else(|| StepSchedule::default_for(&problem.loss, problem.slack_voltage))
    }
}

/// Iterate of the mirror descent. The divergence is fixed to `½‖x − y‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct MirrorState {
    pub t: usize,
    pub p: DVector<f64>,
    pub step: f64,
}

impl MirrorState {
    pub fn new(p: DVector<f64>, schedule: &StepSchedule) -> Self {
        MirrorState {
            t: 1,
            p,
            step: schedule.step(1),
        }
    }
}

/// One mirror-descent step: `ω = p − δ_t ∇`, then projection onto the
/// feasible set of `problem` (whose green vector should be `g_obs`).
pub fn md_step(
    state: &MirrorState,
    g_obs: &DVector<f64>,
    problem: &AllocationProblem,
    schedule: &StepSchedule,
    rule: GradientRule,
    solver: &SolverConfig,
) -> Result<MirrorState> {
    let grad = gradient_with(rule, &state.p, g_obs, &problem.loss, problem.slack_voltage)?;
    let omega = &state.p - grad * state.step;
    let p = project_feasible_from(&omega, problem, solver, Some(&state.p))?;
    let t = state.t + 1;
    Ok(MirrorState {
        t,
        p,
        step: schedule.step(t),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotRecord {
    pub t: usize,
    pub g_true: DVector<f64>,
    pub g_observed: DVector<f64>,
    pub p: DVector<f64>,
    /// Brown import at the true green generation, per unit.
    pub e0: f64,
    pub p_loss: f64,
    pub capacity_total: f64,
    /// Bits per ton CO2 per Hz; `None` when nothing was imported.
    pub f: Option<f64>,
}

impl SlotRecord {
    /// Evaluates `p` against the true green generation of the slot.
    pub fn evaluate(
        t: usize,
        template: &AllocationProblem,
        g_true: &DVector<f64>,
        g_observed: DVector<f64>,
        p: DVector<f64>,
        metering: &Metering,
    ) -> Self {
        let truth = template.with_green(g_true.clone());
        let p_loss = truth.power_loss(&p);
        let e0 = p.sum() - g_true.sum() + p_loss;
        let capacity_total = truth.total_capacity(&p).unwrap_or(f64::NAN);
        SlotRecord {
            t,
            g_true: g_true.clone(),
            g_observed,
            e0,
            p_loss,
            capacity_total,
            f: metering.greenness(capacity_total, e0),
            p,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<SlotRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn mean_e0(&self) -> f64 {
        mean(self.records.iter().map(|r| r.e0))
    }

    pub fn mean_p_loss(&self) -> f64 {
        mean(self.records.iter().map(|r| r.p_loss))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Slot-indexed inputs: true green generation and capacity demand.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotInputs {
    pub green: Vec<DVector<f64>>,
    pub demand: Vec<CapacityDemand>,
}

impl SlotInputs {
    /// The same green vector and demand for `horizon` slots.
    pub fn stationary(green: DVector<f64>, demand: CapacityDemand, horizon: usize) -> Self {
        SlotInputs {
            green: vec![green; horizon],
            demand: vec![demand; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.green.len().min(self.demand.len())
    }

    /// Slot problem (0-based `slot`) with green replaced by `green`.
    pub fn problem(&self, template: &AllocationProblem, slot: usize, green: DVector<f64>) -> AllocationProblem {
        let mut p = template.with_green(green);
        p.demand = self.demand[slot].clone();
        p
    }
}

/// Runs the online allocator for `horizon` slots.
pub fn run_online(
    template: &AllocationProblem,
    inputs: &SlotInputs,
    horizon: usize,
    noise: &NoiseConfig,
    cfg: &OnlineConfig,
    metering: &Metering,
) -> Result<Trajectory> {
    if inputs.horizon() < horizon {
        return Err(Error::Validation(vec![format!(
            "traces cover {} slots but the horizon is {horizon}",
            inputs.horizon()
        )]));
    }
    let schedule = cfg.schedule_for(template);
    let mut rng = noise.rng();
    let mut records = Vec::with_capacity(horizon);
    let mut state: Option<MirrorState> = None;
    for slot in 0..horizon {
        let t = slot + 1;
        let g_true = &inputs.green[slot];
        let g_obs = observe(g_true, noise, &mut rng);
        let problem = inputs.problem(template, slot, g_obs.clone());
        let next = match &state {
            None => {
                let alloc = solve_one_shot(&problem, &cfg.solver).map_err(|e| e.at_slot(t))?;
                MirrorState::new(alloc.p, &schedule)
            }
            Some(s) => md_step(s, &g_obs, &problem, &schedule, cfg.gradient, &cfg.solver)
                .map_err(|e| e.at_slot(t))?,
        };
        debug_assert!(check_feasible(&next.p, &problem).is_feasible(cfg.solver.tol_feas * 10.0));
        records.push(SlotRecord::evaluate(t, template, g_true, g_obs, next.p.clone(), metering));
        state = Some(next);
    }
    Ok(Trajectory { records })
}

/// Running mean of `E0(p(t); g(t)) − E0(p*; g(t))`, where `p*` solves the
/// one-shot problem at the slot-averaged green generation over the
/// trajectory and `template`'s demand.
pub fn convergence_gap(
    traj: &Trajectory,
    template: &AllocationProblem,
    green: &[DVector<f64>],
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    let n = traj.len();
    if green.len() < n {
        return Err(Error::Validation(vec![format!(
            "green trace covers {} slots, trajectory has {n}",
            green.len()
        )]));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mean_g = green[..n]
        .iter()
        .fold(DVector::zeros(template.loss.n_green()), |acc, g| acc + g)
        / n as f64;
    let start = traj.records.first().map(|r| &r.p);
    let p_star = solve_one_shot_from(&template.with_green(mean_g), solver, start)?.p;

    let mut sum = 0.0;
    Ok(traj
        .records
        .iter()
        .zip(green)
        .enumerate()
        .map(|(k, (rec, g))| {
            let truth = template.with_green(g.clone());
            sum += truth.brown_import(&rec.p) - truth.brown_import(&p_star);
            sum / (k + 1) as f64
        })
        .collect())
}
