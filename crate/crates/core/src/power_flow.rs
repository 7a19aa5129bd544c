//! Linearised power-flow quantities and an exact Newton-Raphson reference.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid_model::{build_admittance, BusKind, GridTopology, LossMatrix};

/// Load consumption `p` (ordered by the loss matrix's `load_order`) and green
/// generation `g` (ordered by `green_order`), per-unit.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionState {
    pub p: DVector<f64>,
    pub g: DVector<f64>,
}

impl InjectionState {
    pub fn new(p: DVector<f64>, g: DVector<f64>) -> Self {
        InjectionState { p, g }
    }

    pub fn from_slices(p: &[f64], g: &[f64]) -> Self {
        InjectionState::new(DVector::from_row_slice(p), DVector::from_row_slice(g))
    }

    pub fn zeros(n_load: usize, n_green: usize) -> Self {
        InjectionState::new(DVector::zeros(n_load), DVector::zeros(n_green))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        InjectionState::new(&self.p * factor, &self.g * factor)
    }

    fn check(&self, loss: &LossMatrix) -> Result<()> {
        if self.p.len() != loss.n_load() {
            return Err(Error::DimensionMismatch {
                what: "load vector",
                expected: loss.n_load(),
                got: self.p.len(),
            });
        }
        if self.g.len() != loss.n_green() {
            return Err(Error::DimensionMismatch {
                what: "green vector",
                expected: loss.n_green(),
                got: self.g.len(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowResult {
    pub p_loss: f64,
    /// Brown import at the slack bus, `Σp − Σg + p_loss`.
    pub e0: f64,
    /// Non-slack voltage magnitudes, ascending bus order.
    pub v_mag: DVector<f64>,
}

impl FlowResult {
    /// Greenness and related metrics are only meaningful for a positive import.
    pub fn negative_import(&self) -> bool {
        self.e0 <= 0.0
    }
}

/// Brown import together with the loss it includes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrownImport {
    pub e0: f64,
    pub p_loss: f64,
}

impl BrownImport {
    pub fn negative_import(&self) -> bool {
        self.e0 <= 0.0
    }
}

pub(crate) fn loss_unchecked(loss: &LossMatrix, p: &DVector<f64>, g: &DVector<f64>, u: f64) -> f64 {
    let bp = loss.b() * p;
    let mg = loss.m() * g;
    let gg = loss.g_sub() * g;
    let q = p.dot(&bp) - 2.0 * p.dot(&mg) + g.dot(&gg);
    (q / (u * u)).max(0.0)
}

pub fn power_loss(state: &InjectionState, loss: &LossMatrix, u: f64) -> Result<f64> {
    state.check(loss)?;
    Ok(loss_unchecked(loss, &state.p, &state.g, u))
}

pub fn brown_energy(state: &InjectionState, loss: &LossMatrix, u: f64) -> Result<BrownImport> {
    let p_loss = power_loss(state, loss, u)?;
    Ok(BrownImport {
        e0: state.p.sum() - state.g.sum() + p_loss,
        p_loss,
    })
}

pub(crate) fn voltage_unchecked(
    loss: &LossMatrix,
    p: &DVector<f64>,
    g: &DVector<f64>,
    u: f64,
) -> DVector<f64> {
    let drop = loss.voltage_load_columns() * p;
    let rise = loss.voltage_green_columns() * g;
    (rise - drop).map(|dv| u + dv / u)
}

/// Non-slack voltage magnitudes `U + X s / U`, where `s` injects `+g` at green
/// buses and `−p` at load buses. Rows follow ascending bus order.
pub fn voltage_profile(state: &InjectionState, loss: &LossMatrix, u: f64) -> Result<DVector<f64>> {
    state.check(loss)?;
    Ok(voltage_unchecked(loss, &state.p, &state.g, u))
}

pub fn linearized_flow(state: &InjectionState, loss: &LossMatrix, u: f64) -> Result<FlowResult> {
    let import = brown_energy(state, loss, u)?;
    Ok(FlowResult {
        p_loss: import.p_loss,
        e0: import.e0,
        v_mag: voltage_unchecked(loss, &state.p, &state.g, u),
    })
}

const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_TOL: f64 = 1e-10;

/// Solves the full AC bus power balance with the slack held at
/// `topology.slack_voltage` and zero reactive injection elsewhere.
///
/// `state` is ordered like a loss matrix built from the same topology
/// (load and green buses each ascending by index).
pub fn exact_power_flow_oracle(topology: &GridTopology, state: &InjectionState) -> Result<FlowResult> {
    let admittance = build_admittance(topology)?;
    let y = &admittance.y;
    let n = y.nrows();
    let slack = topology.slack().expect("validated").0;
    let u = topology.slack_voltage;

    let load = topology.buses_of(BusKind::Load);
    let green = topology.buses_of(BusKind::Green);
    if state.p.len() != load.len() {
        return Err(Error::DimensionMismatch {
            what: "load vector",
            expected: load.len(),
            got: state.p.len(),
        });
    }
    if state.g.len() != green.len() {
        return Err(Error::DimensionMismatch {
            what: "green vector",
            expected: green.len(),
            got: state.g.len(),
        });
    }
    let mut injection = vec![0.0; n];
    for (k, id) in load.iter().enumerate() {
        injection[id.0] -= state.p[k];
    }
    for (k, id) in green.iter().enumerate() {
        injection[id.0] += state.g[k];
    }

    let unknown: Vec<usize> = (0..n).filter(|&k| k != slack).collect();
    let m = unknown.len();
    let mut v = vec![Complex64::new(u, 0.0); n];

    let mismatch = |v: &[Complex64]| -> (Vec<Complex64>, DVector<f64>) {
        let current: Vec<Complex64> = (0..n)
            .map(|r| (0..n).map(|c| y[(r, c)] * v[c]).sum())
            .collect();
        let mut f = DVector::zeros(2 * m);
        for (k, &bus) in unknown.iter().enumerate() {
            let s = v[bus] * current[bus].conj();
            f[k] = s.re - injection[bus];
            f[m + k] = s.im;
        }
        (current, f)
    };

    let j = Complex64::new(0.0, 1.0);
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITERS {
        let (current, f) = mismatch(&v);
        let residual = f.amax();
        if !residual.is_finite() {
            break;
        }
        if residual <= NEWTON_TOL {
            converged = true;
            break;
        }
        // unknowns: [Re V_k ..., Im V_k ...]
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for (r, &bus) in unknown.iter().enumerate() {
            for (c, &col) in unknown.iter().enumerate() {
                let mut ds_de = v[bus] * y[(bus, col)].conj();
                let mut ds_df = -j * v[bus] * y[(bus, col)].conj();
                if bus == col {
                    ds_de += current[bus].conj();
                    ds_df += j * current[bus].conj();
                }
                jac[(r, c)] = ds_de.re;
                jac[(r, m + c)] = ds_df.re;
                jac[(m + r, c)] = ds_de.im;
                jac[(m + r, m + c)] = ds_df.im;
            }
        }
        let Some(step) = jac.lu().solve(&(-f)) else {
            break;
        };
        for (k, &bus) in unknown.iter().enumerate() {
            v[bus] += Complex64::new(step[k], step[m + k]);
        }
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "Newton power flow did not reach residual {NEWTON_TOL:e} in {NEWTON_MAX_ITERS} iterations"
        )));
    }

    let (current, _) = mismatch(&v);
    let p_loss: f64 = (0..n).map(|k| (v[k] * current[k].conj()).re).sum();
    Ok(FlowResult {
        p_loss,
        e0: state.p.sum() - state.g.sum() + p_loss,
        v_mag: DVector::from_iterator(m, unknown.iter().map(|&k| v[k].norm())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::GridTopology;
    use approx::assert_relative_eq;

    fn three_bus() -> (GridTopology, LossMatrix) {
        let topo = GridTopology::chain(&[Complex64::new(10.0, 0.0); 2]).with_kind(2, BusKind::Green);
        let loss = LossMatrix::from_topology(&topo).unwrap();
        (topo, loss)
    }

    #[test]
    fn zero_injection() {
        let (_, loss) = three_bus();
        let s = InjectionState::zeros(1, 1);
        assert_eq!(power_loss(&s, &loss, 1.0).unwrap(), 0.0);
        assert_eq!(brown_energy(&s, &loss, 1.0).unwrap().e0, 0.0);
        assert_eq!(voltage_profile(&s, &loss, 1.03).unwrap().as_slice(), &[1.03, 1.03]);
    }

    #[test]
    fn three_bus_loss_and_import() {
        let (_, loss) = three_bus();
        let only_load = InjectionState::from_slices(&[1.0], &[0.0]);
        assert_relative_eq!(power_loss(&only_load, &loss, 1.0).unwrap(), 0.1, epsilon = 1e-14);
        assert_relative_eq!(brown_energy(&only_load, &loss, 1.0).unwrap().e0, 1.1, epsilon = 1e-14);

        // 0.1·1 − 2·0.1·1 + 0.2·1
        let both = InjectionState::from_slices(&[1.0], &[1.0]);
        assert_relative_eq!(power_loss(&both, &loss, 1.0).unwrap(), 0.1, epsilon = 1e-14);
        assert_relative_eq!(brown_energy(&both, &loss, 1.0).unwrap().e0, 0.1, epsilon = 1e-14);
    }

    #[test]
    fn three_bus_voltages() {
        let (_, loss) = three_bus();
        let v = voltage_profile(&InjectionState::from_slices(&[1.0], &[0.0]), &loss, 1.0).unwrap();
        assert_relative_eq!(v, DVector::from_row_slice(&[0.9, 0.9]), epsilon = 1e-14);
        let v = voltage_profile(&InjectionState::from_slices(&[0.0], &[1.0]), &loss, 1.0).unwrap();
        assert_relative_eq!(v, DVector::from_row_slice(&[1.1, 1.2]), epsilon = 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        let (_, loss) = three_bus();
        let s = InjectionState::zeros(2, 1);
        assert!(matches!(power_loss(&s, &loss, 1.0), Err(Error::DimensionMismatch { .. })));
        let s = InjectionState::zeros(1, 0);
        assert!(matches!(voltage_profile(&s, &loss, 1.0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn negative_import_flag() {
        let (_, loss) = three_bus();
        let s = InjectionState::from_slices(&[0.1], &[1.0]);
        assert!(brown_energy(&s, &loss, 1.0).unwrap().negative_import());
        let s = InjectionState::from_slices(&[1.0], &[0.1]);
        assert!(!brown_energy(&s, &loss, 1.0).unwrap().negative_import());
    }

    #[test]
    fn oracle_flat_at_zero() {
        let (topo, _) = three_bus();
        let r = exact_power_flow_oracle(&topo, &InjectionState::zeros(1, 1)).unwrap();
        assert!(r.p_loss.abs() < 1e-12);
        assert!(r.v_mag.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn oracle_light_load_close_to_linear() {
        let topo = GridTopology::chain(&[Complex64::new(10.0, 0.0); 2]);
        let loss = LossMatrix::from_topology(&topo).unwrap();
        let s = InjectionState::from_slices(&[0.01, 0.0], &[]);
        let exact = exact_power_flow_oracle(&topo, &s).unwrap();
        let lin = power_loss(&s, &loss, 1.0).unwrap();
        assert!((exact.p_loss - lin).abs() <= 0.05 * lin, "{} vs {lin}", exact.p_loss);
        assert_relative_eq!(exact.e0, 0.01 + exact.p_loss, epsilon = 1e-15);
    }

    #[test]
    fn oracle_overload_fails() {
        let topo = GridTopology::chain(&[Complex64::new(10.0, 0.0); 2]);
        let s = InjectionState::from_slices(&[1e6, 0.0], &[]);
        assert!(matches!(exact_power_flow_oracle(&topo, &s), Err(Error::NoConvergence(_))));
    }
}
