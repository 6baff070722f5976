//! Scene configuration for `simulate`.
//!
//! ```toml
//! version = 1
//! gates = 1000
//! pri = 500e-6
//! carrier_wavelength = 0.02155
//! seed = 7
//!
//! [noise]
//! second_trip_snr_db = 30.0
//!
//! [[block]]
//! trip = 2
//! range_km = [80.0, 90.0]
//! power_db = 0.0
//! velocity = -12.0
//! ```
//!
//! Trips are numbered from 1. A block or point gives either `trip` with gate
//! indices or a true range in km, which is aliased into its trip.

use orthocode::ambiguity::power_db;
use orthocode::trip::{
    locate, noise_power_for_snr, Mode, ScatterBlock, Scatterer, TripScene, VelocityEstimator,
};
use orthocode::waveform::OrthogonalSet;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    Coded,
    Uncoded,
    #[default]
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeSelection::Coded => vec![Mode::Coded],
            ModeSelection::Uncoded => vec![Mode::Uncoded],
            ModeSelection::Both => vec![Mode::Coded, Mode::Uncoded],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Complex noise power per received sample.
    pub power: Option<f64>,
    /// Filtered SNR of the mean second-trip block power, uncoded.
    pub second_trip_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub trip: Option<usize>,
    pub start_gate: Option<usize>,
    /// Exclusive.
    pub end_gate: Option<usize>,
    /// True range `[start, end)`.
    pub range_km: Option<[f64; 2]>,
    pub power_db: f64,
    #[serde(default)]
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub trip: Option<usize>,
    pub gate: Option<usize>,
    pub range_km: Option<f64>,
    pub power_db: f64,
    #[serde(default)]
    pub phase_deg: f64,
    #[serde(default)]
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {
    /// Gates `[start, end)` where the coded second-trip residual is compared
    /// with the noise floor.
    pub residual_gates: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub version: u32,
    pub gates: usize,
    pub pri: f64,
    pub carrier_wavelength: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pulses")]
    pub pulses: usize,
    #[serde(default = "default_estimator")]
    pub estimator: VelocityEstimator,
    #[serde(default)]
    pub mode: ModeSelection,
    pub noise: Option<NoiseSpec>,
    #[serde(default, rename = "block")]
    pub blocks: Vec<BlockSpec>,
    #[serde(default, rename = "point")]
    pub points: Vec<PointSpec>,
    #[serde(default)]
    pub report: ReportSpec,
}

fn default_pulses() -> usize {
    64
}

fn default_estimator() -> VelocityEstimator {
    VelocityEstimator::SpectralPeak
}

/// A scene resolved against a waveform set.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScene {
    pub scene: TripScene,
    pub residual_gates: Vec<usize>,
    /// Mean reflectivity power of the second-trip blocks and points, linear.
    pub second_trip_power: f64,
}

fn trip_slot(trip: usize) -> Result<usize> {
    match trip {
        1 | 2 => Ok(trip - 1),
        t => Err(CliError::Config(format!("trip {t} not simulated (only 1 and 2)"))),
    }
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let s: SceneConfig =
            toml::from_str(text).map_err(|e| CliError::Config(format!("scene: {e}")))?;
        if s.version != SCENE_VERSION {
            return Err(CliError::Config(format!(
                "unsupported scene version {} (expected {SCENE_VERSION})",
                s.version
            )));
        }
        Ok(s)
    }

    fn block_gates(&self, b: &BlockSpec, ts: f64) -> Result<(usize, usize, usize)> {
        match (b.trip, b.start_gate, b.end_gate, b.range_km) {
            (Some(t), Some(s), Some(e), None) => Ok((trip_slot(t)?, s, e)),
            (None, None, None, Some([r0, r1])) => {
                if !(r1 > r0 && r0 >= 0.0) {
                    return Err(CliError::Config(format!("block range [{r0}, {r1}] km is empty")));
                }
                let (t0, g0) = locate(r0 * 1e3, self.pri, ts);
                let (t1, g1) = locate(r1 * 1e3, self.pri, ts);
                if t0 != t1 {
                    return Err(CliError::Config(format!(
                        "block range [{r0}, {r1}] km straddles a trip boundary"
                    )));
                }
                Ok((trip_slot(t0 + 1)?, g0, g1))
            }
            _ => Err(CliError::Config(
                "block needs either trip/start_gate/end_gate or range_km".into(),
            )),
        }
    }

    fn point_gate(&self, p: &PointSpec, ts: f64) -> Result<(usize, usize)> {
        match (p.trip, p.gate, p.range_km) {
            (Some(t), Some(g), None) => Ok((trip_slot(t)?, g)),
            (None, None, Some(r)) if r >= 0.0 => {
                let (t, g) = locate(r * 1e3, self.pri, ts);
                Ok((trip_slot(t + 1)?, g))
            }
            _ => Err(CliError::Config("point needs either trip/gate or range_km".into())),
        }
    }

    /// Expand blocks (seeded), place points and set the noise level.
    pub fn resolve(&self, set: &OrthogonalSet) -> Result<ResolvedScene> {
        let ts = set.sample_period();
        let mut scene = TripScene::empty(self.gates, self.pri, self.carrier_wavelength);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut second_sum = 0.0;
        let mut second_count = 0usize;
        let mut second_end = None::<usize>;

        for b in &self.blocks {
            let (slot, start, end) = self.block_gates(b, ts)?;
            if start >= end || end > self.gates {
                return Err(CliError::Config(format!(
                    "block gates [{start}, {end}) invalid for {} gates",
                    self.gates
                )));
            }
            let power = 10f64.powf(b.power_db / 10.0);
            let block = ScatterBlock {
                start_gate: start,
                end_gate: end,
                power,
                velocity: b.velocity,
            };
            let scatterers = block.expand(&mut rng);
            if slot == 1 {
                second_sum += power * (end - start) as f64;
                second_count += end - start;
                second_end = second_end.max(Some(end));
                scene.second_trip.extend(scatterers);
            } else {
                scene.first_trip.extend(scatterers);
            }
        }
        for p in &self.points {
            let (slot, gate) = self.point_gate(p, ts)?;
            let amp = 10f64.powf(p.power_db / 20.0);
            let s = Scatterer {
                gate,
                reflectivity: Complex64::from_polar(amp, p.phase_deg.to_radians()),
                velocity: p.velocity,
            };
            if slot == 1 {
                second_sum += amp * amp;
                second_count += 1;
                second_end = second_end.max(Some(gate + 1));
                scene.second_trip.push(s);
            } else {
                scene.first_trip.push(s);
            }
        }

        let second_trip_power = if second_count == 0 {
            0.0
        } else {
            second_sum / second_count as f64
        };
        scene.noise_power = match &self.noise {
            None => 0.0,
            Some(NoiseSpec { power: Some(p), second_trip_snr_db: None }) => *p,
            Some(NoiseSpec { power: None, second_trip_snr_db: Some(snr) }) => {
                if second_count == 0 {
                    return Err(CliError::Config(
                        "second_trip_snr_db needs a second-trip block or point".into(),
                    ));
                }
                noise_power_for_snr(second_trip_power, &set.pairs[0], *snr)
            }
            Some(_) => {
                return Err(CliError::Config(
                    "noise takes exactly one of power or second_trip_snr_db".into(),
                ))
            }
        };
        scene
            .validate(set.code_len() as f64 * ts)
            .map_err(CliError::from)?;

        let residual_gates = match self.report.residual_gates {
            Some([a, b]) => {
                if a >= b || b > self.gates {
                    return Err(CliError::Config(format!(
                        "residual_gates [{a}, {b}) invalid for {} gates",
                        self.gates
                    )));
                }
                (a..b).collect()
            }
            None => default_residual(&scene, second_end, set),
        };

        Ok(ResolvedScene {
            scene,
            residual_gates,
            second_trip_power,
        })
    }
}

/// Gates past the filtered extent of the second-trip echoes and clear of
/// every first-trip echo's filtered extent.
fn default_residual(scene: &TripScene, second_end: Option<usize>, set: &OrthogonalSet) -> Vec<usize> {
    let Some(end) = second_end else {
        return Vec::new();
    };
    let ml = set.mainlobe();
    let before = ml.center;
    let after = set.code_len() + set.filter_len() - 2 - ml.center;
    let start = end - 1 + after + 1;
    (start..scene.gates)
        .filter(|&g| {
            scene
                .first_trip
                .iter()
                .all(|s| g + before < s.gate || g > s.gate + after)
        })
        .collect()
}

/// Mean of `values_db` over `gates` taken in the linear domain.
pub fn mean_db(values_db: &[f64], gates: &[usize]) -> f64 {
    if gates.is_empty() {
        return orthocode::ambiguity::DB_FLOOR;
    }
    let lin: f64 = gates.iter().map(|&g| 10f64.powf(values_db[g] / 10.0)).sum();
    power_db(lin / gates.len() as f64)
}
