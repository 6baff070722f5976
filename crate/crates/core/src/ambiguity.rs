//! Delay-Doppler analysis of code/filter pairs.
//!
//! Index alignment: delay `tau` is measured in samples from the mainlobe
//! center `c` of the convolution output, so
//!
//! ```text
//! chi(tau, fd) = sum_n a(n) exp(j 2 pi fd n) h[c + tau - n]
//! ```
//!
//! which is the `sum a(n) b(n + tau) exp(j 2 pi fd n)` form with `b` the
//! time-reversed filter indexed relative to the mainlobe tap (`b(p) = h[c - p]`,
//! sign of `tau` flipped so positive delay means later output). The sum runs
//! over the full valid overlap of code and filter. `(0, 0)` is the filtered
//! mainlobe, `|chi(0, 0)| = |mainlobe_gain|`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::waveform::{CodeFilterPair, MismatchedFilter, OrthogonalSet, PolyphaseCode};

/// Lowest reported level; exact zeros map here instead of `-inf`.
pub const DB_FLOOR: f64 = -300.0;

pub fn amplitude_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (20.0 * ratio.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

pub fn power_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Single ambiguity sample, complex.
pub fn ambiguity_value(code: &[Complex64], taps: &[Complex64], center: usize, tau: isize, fd: f64) -> Complex64 {
    let idx = center as isize + tau;
    let mut acc = Complex64::new(0.0, 0.0);
    if idx < 0 {
        return acc;
    }
    let idx = idx as usize;
    let lo = (idx + 1).saturating_sub(taps.len());
    let hi = idx.min(code.len().saturating_sub(1));
    for n in lo..=hi {
        if idx - n < taps.len() {
            acc += code[n] * Complex64::from_polar(1.0, 2.0 * PI * fd * n as f64) * taps[idx - n];
        }
    }
    acc
}

/// Full delay span of a pair: `-(N + Lf - 2) ..= N + Lf - 2`.
pub fn default_delays(code_len: usize, filter_len: usize) -> Vec<isize> {
    let m = (code_len + filter_len - 1) as isize;
    (-(m - 1)..=m - 1).collect()
}

/// `points` evenly spaced normalised Doppler values `fd * Ts` over `[-span, span]`.
pub fn doppler_axis(span: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| -span + 2.0 * span * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Default Doppler axis: 64 points over `fd * Ts` in `[-0.05, 0.05]`.
pub fn default_dopplers() -> Vec<f64> {
    doppler_axis(0.05, 64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityGrid {
    pub delay_axis: Vec<isize>,
    /// Normalised Doppler `fd * Ts`.
    pub doppler_axis: Vec<f64>,
    /// `|chi|`, one row per Doppler value.
    pub magnitudes: Vec<Vec<f64>>,
    /// Same grid in dB relative to `reference`.
    pub magnitudes_db: Vec<Vec<f64>>,
    /// `|chi(0, 0)|`.
    pub reference: f64,
}

impl AmbiguityGrid {
    pub fn row(&self, doppler_index: usize) -> &[f64] {
        &self.magnitudes_db[doppler_index]
    }
}

pub fn ambiguity(
    code: &PolyphaseCode,
    filter: &MismatchedFilter,
    delays: &[isize],
    dopplers: &[f64],
) -> AmbiguityGrid {
    let a = code.samples();
    let h = &filter.coefficients;
    let c = filter.mainlobe.center;
    let reference = ambiguity_value(a, h, c, 0, 0.0).norm();
    let magnitudes: Vec<Vec<f64>> = dopplers
        .par_iter()
        .map(|&fd| {
            delays
                .iter()
                .map(|&tau| ambiguity_value(a, h, c, tau, fd).norm())
                .collect()
        })
        .collect();
    let magnitudes_db = magnitudes
        .iter()
        .map(|row| row.iter().map(|&m| amplitude_db(m / reference)).collect())
        .collect();
    AmbiguityGrid {
        delay_axis: delays.to_vec(),
        doppler_axis: dopplers.to_vec(),
        magnitudes,
        magnitudes_db,
        reference,
    }
}

/// Filtered output of the pair in dB relative to the mainlobe sample, one
/// entry per output index (delay = index - center).
pub fn zero_doppler_cut(pair: &CodeFilterPair) -> Vec<f64> {
    let g = pair.mainlobe_gain.norm();
    pair.filtered_response()
        .iter()
        .map(|y| amplitude_db(y.norm() / g))
        .collect()
}

/// Peak of code `i` through filter `j`, relative to pair `j`'s mainlobe.
pub fn cross_ambiguity_peak(pair_i: &CodeFilterPair, pair_j: &CodeFilterPair) -> f64 {
    let g = pair_j.mainlobe_gain.norm();
    let peak = pair_j
        .response_to(&pair_i.code)
        .iter()
        .map(|y| y.norm())
        .fold(0.0, f64::max);
    amplitude_db(peak / g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidelobeMetrics {
    /// Largest sample outside the mainlobe window, dB re mainlobe.
    pub psl_db: f64,
    /// Off-window power over window power, dB.
    pub isl_db: f64,
    /// Contiguous samples around the center within 3 dB of it.
    pub mainlobe_width_measured: usize,
    /// `(fd * Ts, loss dB)`: peak within the window at that Doppler, re `(0, 0)`.
    pub doppler_loss_db: Vec<(f64, f64)>,
}

pub fn metrics(pair: &CodeFilterPair, dopplers: &[f64]) -> SidelobeMetrics {
    let y = pair.filtered_response();
    let ml = pair.filter.mainlobe;
    let g = y[ml.center].norm();

    let (mut peak_off, mut off, mut on) = (0.0f64, 0.0, 0.0);
    for (r, v) in y.iter().enumerate() {
        if ml.contains(r) {
            on += v.norm_sqr();
        } else {
            peak_off = peak_off.max(v.norm());
            off += v.norm_sqr();
        }
    }

    let half_power = g / std::f64::consts::SQRT_2;
    let mut width = 1;
    let mut r = ml.center;
    while r > 0 && y[r - 1].norm() >= half_power {
        width += 1;
        r -= 1;
    }
    let mut r = ml.center;
    while r + 1 < y.len() && y[r + 1].norm() >= half_power {
        width += 1;
        r += 1;
    }

    let h = half_width_delays(ml.half_width());
    let doppler_loss_db = dopplers
        .iter()
        .map(|&fd| {
            let peak = h
                .clone()
                .map(|tau| ambiguity_value(pair.code.samples(), &pair.filter.coefficients, ml.center, tau, fd).norm())
                .fold(0.0, f64::max);
            (fd, amplitude_db(peak / g))
        })
        .collect();

    SidelobeMetrics {
        psl_db: amplitude_db(peak_off / g),
        isl_db: power_db(off / on),
        mainlobe_width_measured: width,
        doppler_loss_db,
    }
}

fn half_width_delays(half: usize) -> std::ops::RangeInclusive<isize> {
    -(half as isize)..=half as isize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub pairs: Vec<SidelobeMetrics>,
    /// `cross_peaks_db[j][i]`: code `i` through filter `j`; `NaN`-free, the
    /// diagonal is left at 0 dB.
    pub cross_peaks_db: Vec<Vec<f64>>,
    pub worst_psl_db: f64,
    /// Largest off-diagonal cross peak; floor when the set has one code.
    pub worst_cross_db: f64,
}

pub fn set_metrics(set: &OrthogonalSet, dopplers: &[f64]) -> SetMetrics {
    let pairs: Vec<SidelobeMetrics> = set.pairs.iter().map(|p| metrics(p, dopplers)).collect();
    let k = set.len();
    let cross_peaks_db: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            (0..k)
                .map(|i| {
                    if i == j {
                        0.0
                    } else {
                        cross_ambiguity_peak(&set.pairs[i], &set.pairs[j])
                    }
                })
                .collect()
        })
        .collect();
    let worst_psl_db = pairs.iter().map(|m| m.psl_db).fold(DB_FLOOR, f64::max);
    let worst_cross_db = (0..k)
        .flat_map(|j| (0..k).filter(move |&i| i != j).map(move |i| (i, j)))
        .map(|(i, j)| cross_peaks_db[j][i])
        .fold(DB_FLOOR, f64::max);
    SetMetrics {
        pairs,
        cross_peaks_db,
        worst_psl_db,
        worst_cross_db,
    }
}
