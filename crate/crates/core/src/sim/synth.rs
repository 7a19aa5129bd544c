//! Synthetic traces: diurnal solar, AR(1) wind and sinusoidal user counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::trace::{Trace, TraceKind};

#[derive(Clone, Debug, PartialEq)]
pub struct SolarSite {
    pub id: String,
    pub peak_kw: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindSite {
    pub id: String,
    pub mean_kw: f64,
    /// Ceiling on output, kW.
    pub rated_kw: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserSite {
    pub id: String,
    pub mean_users: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub slots: usize,
    pub slot_seconds: f64,
    /// Hour of day at slot 0.
    pub start_hour: f64,
    pub seed: u64,
    pub solar: Vec<SolarSite>,
    pub wind: Vec<WindSite>,
    pub users: Vec<UserSite>,
    /// Lag-one autocorrelation of the wind and cloud processes.
    pub ar_coefficient: f64,
    /// Relative amplitude of the daily user swing.
    pub user_swing: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            slots: 288,
            slot_seconds: 300.0,
            start_hour: 0.0,
            seed: 0,
            solar: Vec::new(),
            wind: Vec::new(),
            users: Vec::new(),
            ar_coefficient: 0.98,
            user_swing: 0.4,
        }
    }
}

impl SynthConfig {
    fn hour(&self, slot: usize) -> f64 {
        (self.start_hour + slot as f64 * self.slot_seconds / 3600.0).rem_euclid(24.0)
    }
}

/// Stationary AR(1) path with unit variance.
fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let innovation = (1.0 - phi * phi).sqrt();
    let mut x = normal.sample(rng);
    (0..n)
        .map(|_| {
            let out = x;
            x = phi * x + innovation * normal.sample(rng);
            out
        })
        .collect()
}

/// Solar output follows a half-sine between 06:00 and 18:00 scaled by a
/// cloud factor in `[0.5, 1]`; wind is an AR(1) around its mean, clipped to
/// `[0, rated]`.
pub fn synth_green(cfg: &SynthConfig) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for site in &cfg.solar {
        let clouds = ar1(&mut rng, cfg.slots, cfg.ar_coefficient);
        let series = (0..cfg.slots)
            .map(|t| {
                let h = cfg.hour(t);
                let sun = if (6.0..18.0).contains(&h) {
                    (std::f64::consts::PI * (h - 6.0) / 12.0).sin()
                } else {
                    0.0
                };
                let cloud = (0.85 + 0.15 * clouds[t]).clamp(0.5, 1.0);
                site.peak_kw * sun * cloud
            })
            .collect();
        columns.push((site.id.clone(), series));
    }
    for site in &cfg.wind {
        let gusts = ar1(&mut rng, cfg.slots, cfg.ar_coefficient);
        let series = gusts
            .iter()
            .map(|x| (site.mean_kw * (1.0 + 0.5 * x)).clamp(0.0, site.rated_kw))
            .collect();
        columns.push((site.id.clone(), series));
    }
    assemble(TraceKind::GreenGenerationKw, columns, cfg.slots)
}

/// Users swing sinusoidally over the day, peaking at 15:00, with a small
/// AR(1) perturbation; counts are rounded to whole users.
pub fn synth_users(cfg: &SynthConfig) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x05ee_d05e);
    let columns = cfg
        .users
        .iter()
        .map(|site| {
            let jitter = ar1(&mut rng, cfg.slots, cfg.ar_coefficient);
            let series = (0..cfg.slots)
                .map(|t| {
                    let phase = 2.0 * std::f64::consts::PI * (cfg.hour(t) - 9.0) / 24.0;
                    let level = 1.0 + cfg.user_swing * phase.sin() + 0.05 * jitter[t];
                    (site.mean_users * level).round().max(0.0)
                })
                .collect();
            (site.id.clone(), series)
        })
        .collect();
    assemble(TraceKind::ActiveUsers, columns, cfg.slots)
}

fn assemble(kind: TraceKind, columns: Vec<(String, Vec<f64>)>, slots: usize) -> Trace {
    Trace {
        kind,
        first_slot: 0,
        ids: columns.iter().map(|(id, _)| id.clone()).collect(),
        values: (0..slots)
            .map(|t| columns.iter().map(|(_, s)| s[t]).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SynthConfig {
        SynthConfig {
            slots: 288,
            seed: 5,
            solar: vec![SolarSite {
                id: "s".into(),
                peak_kw: 300.0,
            }],
            wind: vec![WindSite {
                id: "w".into(),
                mean_kw: 150.0,
                rated_kw: 300.0,
            }],
            users: vec![UserSite {
                id: "u".into(),
                mean_users: 50.0,
            }],
            ..SynthConfig::default()
        }
    }

    #[test]
    fn solar_is_dark_at_night_and_bounded() {
        let g = synth_green(&cfg());
        let solar: Vec<f64> = g.series(0).collect();
        assert_eq!(solar[0], 0.0); // midnight
        assert!(solar[144] > 150.0); // noon
        assert!(solar.iter().all(|&v| (0.0..=300.0).contains(&v)));
        assert!(g.series(1).all(|v| (0.0..=300.0).contains(&v)));
    }

    #[test]
    fn users_peak_in_the_afternoon() {
        let u = synth_users(&cfg());
        let series: Vec<f64> = u.series(0).collect();
        assert!(series[180] > series[36]); // 15:00 vs 03:00
        assert!(series.iter().all(|v| v.fract() == 0.0 && *v >= 0.0));
    }

    #[test]
    fn seeded() {
        assert_eq!(synth_green(&cfg()), synth_green(&cfg()));
        let mut other = cfg();
        other.seed = 6;
        assert_ne!(synth_green(&cfg()), synth_green(&other));
    }
}
