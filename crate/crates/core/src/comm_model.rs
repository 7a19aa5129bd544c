//! Downlink capacity of a base station as a function of its electrical draw,
//! and the greenness metric (bits per ton of CO2 per Hz).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_model::BusId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseStationParams {
    pub bus: BusId,
    /// Circuit power (cooling, processing) drawn regardless of transmission.
    pub p_c: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Power gain of the weakest user's channel, `|h|²`.
    pub h2: f64,
    /// Receiver noise power.
    pub sigma2: f64,
}

impl BaseStationParams {
    /// SNR per unit of transmit power.
    pub fn gain(&self) -> f64 {
        self.h2 / self.sigma2
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let finite = [self.p_c, self.p_min, self.p_max, self.h2, self.sigma2]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(format!("station at {}: non-finite parameter", self.bus));
        }
        if !(0.0 <= self.p_min && self.p_min <= self.p_max) {
            return Err(format!(
                "station at {}: need 0 <= p_min <= p_max, got [{}, {}]",
                self.bus, self.p_min, self.p_max
            ));
        }
        if self.p_c < 0.0 {
            return Err(format!("station at {}: negative circuit power", self.bus));
        }
        if !(self.h2 > 0.0 && self.sigma2 > 0.0) {
            return Err(format!("station at {}: h2 and sigma2 must be positive", self.bus));
        }
        Ok(())
    }
}

/// Network-wide capacity floor `c0` and optional per-station floors, bits/s/Hz.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CapacityDemand {
    pub c0: f64,
    pub per_bs_floor: Option<Vec<f64>>,
}

impl CapacityDemand {
    pub fn total(c0: f64) -> Self {
        CapacityDemand {
            c0,
            per_bs_floor: None,
        }
    }

    pub fn floor(&self, station: usize) -> f64 {
        self.per_bs_floor
            .as_ref()
            .and_then(|f| f.get(station).copied())
            .unwrap_or(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarbonModel {
    /// Tons of CO2 per kWh of brown energy.
    pub eta: f64,
}

impl Default for CarbonModel {
    fn default() -> Self {
        CarbonModel { eta: 5e-4 }
    }
}

/// Converts per-unit slot powers into the energy and greenness reported per
/// slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metering {
    /// kW represented by one per-unit of power (`1000·S_base` in MVA).
    pub kw_per_unit: f64,
    pub slot_hours: f64,
    pub carbon: CarbonModel,
}

impl Default for Metering {
    /// 1 MVA base, 5-minute slots.
    fn default() -> Self {
        Metering {
            kw_per_unit: 1000.0,
            slot_hours: 300.0 / 3600.0,
            carbon: CarbonModel::default(),
        }
    }
}

impl Metering {
    pub fn kw(&self, per_unit: f64) -> f64 {
        per_unit * self.kw_per_unit
    }

    pub fn kwh(&self, per_unit: f64) -> f64 {
        self.kw(per_unit) * self.slot_hours
    }

    /// Greenness of one slot, `None` when no brown energy was imported.
    pub fn greenness(&self, total_capacity: f64, e0_per_unit: f64) -> Option<f64> {
        greenness(total_capacity, self.kwh(e0_per_unit), &self.carbon).ok()
    }
}

/// `log2(1 + (p − p_c)·h2/σ²)`.
pub fn capacity(power: f64, bs: &BaseStationParams) -> Result<f64> {
    if power < bs.p_c {
        return Err(Error::BelowCircuitPower {
            power,
            circuit: bs.p_c,
        });
    }
    Ok(((power - bs.p_c) * bs.gain()).ln_1p() / std::f64::consts::LN_2)
}

/// Smallest draw reaching `rate` bits/s/Hz: `(2^rate − 1)·σ²/h2 + p_c`.
pub fn min_power(rate: f64, bs: &BaseStationParams) -> f64 {
    (rate * std::f64::consts::LN_2).exp_m1() / bs.gain() + bs.p_c
}

pub fn total_demand(users: &[f64], rate_per_user: f64) -> CapacityDemand {
    let floors: Vec<f64> = users.iter().map(|&u| u * rate_per_user).collect();
    CapacityDemand {
        c0: floors.iter().sum(),
        per_bs_floor: Some(floors),
    }
}

/// Bits per ton of CO2 per Hz: `capacity / (η·e0)` with `e0` in kWh.
pub fn greenness(total_capacity: f64, e0_kwh: f64, carbon: &CarbonModel) -> Result<f64> {
    if !(e0_kwh > 0.0) {
        return Err(Error::UndefinedMetric(e0_kwh));
    }
    Ok(total_capacity / (carbon.eta * e0_kwh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn station(p_c: f64, h2: f64, sigma2: f64) -> BaseStationParams {
        BaseStationParams {
            bus: BusId(1),
            p_c,
            p_min: 0.0,
            p_max: 10.0,
            h2,
            sigma2,
        }
    }

    #[test]
    fn capacity_examples() {
        let bs = station(0.5, 1.0, 1.0);
        assert_eq!(capacity(0.5, &bs).unwrap(), 0.0);
        assert_relative_eq!(capacity(1.5, &bs).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(capacity(3.5, &bs).unwrap(), 2.0, epsilon = 1e-15);
        assert!(matches!(capacity(0.4, &bs), Err(Error::BelowCircuitPower { .. })));
    }

    #[test]
    fn min_power_examples() {
        let bs = station(0.5, 1.0, 1.0);
        assert_eq!(min_power(0.0, &bs), 0.5);
        assert_relative_eq!(min_power(1.0, &bs), 1.5, epsilon = 1e-15);
        let bs = station(0.5, 1.0, 2.0);
        assert_relative_eq!(min_power(3.0, &bs), 14.5, epsilon = 1e-14);
    }

    #[test]
    fn demand_examples() {
        let d = total_demand(&[0.0, 0.0], 0.7);
        assert_eq!(d.per_bs_floor, Some(vec![0.0, 0.0]));
        assert_eq!(d.c0, 0.0);
        let d = total_demand(&[3.0], 0.5);
        assert_eq!((d.c0, d.floor(0)), (1.5, 1.5));
        let d = total_demand(&[1.0, 2.0], 1.0);
        assert_eq!(d.per_bs_floor, Some(vec![1.0, 2.0]));
        assert_eq!(d.c0, 3.0);
        assert_eq!(CapacityDemand::total(2.0).floor(0), 0.0);
    }

    #[test]
    fn greenness_examples() {
        let carbon = CarbonModel { eta: 0.001 };
        assert_relative_eq!(greenness(100.0, 10.0, &carbon).unwrap(), 10000.0, epsilon = 1e-9);
        assert_eq!(greenness(0.0, 10.0, &carbon).unwrap(), 0.0);
        assert!(matches!(greenness(5.0, 0.0, &carbon), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn station_validation() {
        assert!(station(0.1, 1.0, 1.0).validate().is_ok());
        assert!(station(-0.1, 1.0, 1.0).validate().is_err());
        assert!(station(0.1, 0.0, 1.0).validate().is_err());
        let mut bs = station(0.1, 1.0, 1.0);
        bs.p_min = 2.0;
        bs.p_max = 1.0;
        assert!(bs.validate().is_err());
    }

    proptest! {
        #[test]
        fn capacity_inverts_min_power(rate in 0.0f64..20.0, p_c in 0.0f64..2.0, gain in 0.1f64..1e4) {
            let bs = station(p_c, gain, 1.0);
            let back = capacity(min_power(rate, &bs), &bs).unwrap();
            prop_assert!((back - rate).abs() <= 1e-12 * rate.max(1.0));
        }

        #[test]
        fn capacity_increasing_and_concave(p in 0.01f64..5.0, gain in 0.1f64..100.0) {
            let bs = station(0.0, gain, 1.0);
            let h = 1e-3;
            let c = |x: f64| capacity(x, &bs).unwrap();
            prop_assert!(c(p + h) > c(p));
            prop_assert!(c(p + h) - 2.0 * c(p) + c(p - h.min(p)) <= 1e-12);
        }

        #[test]
        fn greenness_homogeneous(cap in 0.1f64..100.0, e0 in 0.1f64..100.0) {
            let carbon = CarbonModel::default();
            let f = greenness(cap, e0, &carbon).unwrap();
            prop_assert!((greenness(2.0 * cap, e0, &carbon).unwrap() - 2.0 * f).abs() <= 1e-9 * f);
            prop_assert!((greenness(cap, 2.0 * e0, &carbon).unwrap() - 0.5 * f).abs() <= 1e-9 * f);
        }
    }
}
