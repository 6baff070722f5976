//! Alternating-code pulsed radar over a two-trip scene.
//!
//! Pulse `p` transmits code `coding[p]`. Its receive window holds first-trip
//! echoes of that code and second-trip echoes of the code sent one PRI
//! earlier, so in coded mode a filter only compresses its own trip. Doppler is
//! a per-pulse phase step `4 pi v PRI / lambda`; positive velocity means
//! approaching.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::ambiguity::power_db;
use crate::error::{Error, Result};
use crate::waveform::{convolve, CodeFilterPair, OrthogonalSet};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    /// Gate within its own trip.
    pub gate: usize,
    pub reflectivity: Complex64,
    /// Radial velocity, m/s, positive approaching.
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripScene {
    pub gates: usize,
    pub first_trip: Vec<Scatterer>,
    pub second_trip: Vec<Scatterer>,
    /// Complex noise power per received sample.
    pub noise_power: f64,
    /// Seconds.
    pub pri: f64,
    /// Meters.
    pub carrier_wavelength: f64,
}

impl TripScene {
    pub fn empty(gates: usize, pri: f64, carrier_wavelength: f64) -> Self {
        Self {
            gates,
            first_trip: Vec::new(),
            second_trip: Vec::new(),
            noise_power: 0.0,
            pri,
            carrier_wavelength,
        }
    }

    pub fn validate(&self, pulse_width: f64) -> Result<()> {
        if self.gates == 0 {
            return Err(Error::Config("scene needs at least one gate".into()));
        }
        if !(self.pri > pulse_width) {
            return Err(Error::Config(format!(
                "pri {} s must exceed the pulse width {pulse_width} s",
                self.pri
            )));
        }
        if !(self.noise_power >= 0.0) {
            return Err(Error::Config("noise_power must be non-negative".into()));
        }
        if !(self.carrier_wavelength > 0.0) {
            return Err(Error::Config("carrier_wavelength must be positive".into()));
        }
        for s in self.first_trip.iter().chain(&self.second_trip) {
            if s.gate >= self.gates {
                return Err(Error::Config(format!(
                    "scatterer gate {} outside 0..{}",
                    s.gate, self.gates
                )));
            }
        }
        Ok(())
    }

    /// Nyquist velocity `lambda / (4 PRI)`.
    pub fn nyquist_velocity(&self) -> f64 {
        self.carrier_wavelength / (4.0 * self.pri)
    }

    pub fn second_trip_gates(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self.second_trip.iter().map(|s| s.gate).collect();
        g.sort_unstable();
        g.dedup();
        g
    }
}

/// Range spacing of one gate, `c Ts / 2`.
pub fn gate_spacing(sample_period: f64) -> f64 {
    SPEED_OF_LIGHT * sample_period / 2.0
}

/// `c PRI / 2`.
pub fn unambiguous_range(pri: f64) -> f64 {
    SPEED_OF_LIGHT * pri / 2.0
}

/// Trip index (0 = first) and aliased gate of a target at `range` meters.
pub fn locate(range: f64, pri: f64, sample_period: f64) -> (usize, usize) {
    let r_max = unambiguous_range(pri);
    let trip = (range / r_max).floor().max(0.0) as usize;
    let aliased = range - trip as f64 * r_max;
    (trip, (aliased / gate_spacing(sample_period)).round() as usize)
}

/// A contiguous run of gates filled with independent complex Gaussian
/// reflectivities of mean power `power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterBlock {
    pub start_gate: usize,
    /// Exclusive.
    pub end_gate: usize,
    pub power: f64,
    pub velocity: f64,
}

impl ScatterBlock {
    pub fn expand<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Scatterer> {
        let normal = Normal::new(0.0, (self.power / 2.0).sqrt()).expect("finite power");
        (self.start_gate..self.end_gate)
            .map(|gate| Scatterer {
                gate,
                reflectivity: Complex64::new(normal.sample(rng), normal.sample(rng)),
                velocity: self.velocity,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Pulse `p` uses code `p mod k`.
    Coded,
    /// Every pulse uses code 0.
    Uncoded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseTrain {
    /// One receive window per PRI, `gates + N - 1` samples each.
    pub pulses: Vec<Vec<Complex64>>,
    pub coding: Vec<usize>,
    pub mode: Mode,
    pub pri: f64,
    pub carrier_wavelength: f64,
}

fn code_index(mode: Mode, k: usize, p: isize) -> usize {
    match mode {
        Mode::Coded => p.rem_euclid(k as isize) as usize,
        Mode::Uncoded => 0,
    }
}

fn add_echo(rx: &mut [Complex64], code: &[Complex64], s: &Scatterer, phase_step: f64, pulse: isize) {
    let a = s.reflectivity * Complex64::from_polar(1.0, phase_step * s.velocity * pulse as f64);
    for (r, &x) in rx[s.gate..].iter_mut().zip(code) {
        *r += a * x;
    }
}

pub fn simulate<R: Rng + ?Sized>(
    scene: &TripScene,
    set: &OrthogonalSet,
    pulses: usize,
    mode: Mode,
    rng: &mut R,
) -> Result<PulseTrain> {
    let k = set.len();
    let n = set.code_len();
    scene.validate(n as f64 * set.sample_period())?;
    if pulses < 2 * k || pulses % 2 != 0 {
        return Err(Error::Config(format!(
            "pulse count {pulses} must be even and at least {}",
            2 * k
        )));
    }
    let len = scene.gates + n - 1;
    let phase_step = 4.0 * PI * scene.pri / scene.carrier_wavelength;
    let noise = if scene.noise_power > 0.0 {
        Some(Normal::new(0.0, (scene.noise_power / 2.0).sqrt()).expect("finite noise"))
    } else {
        None
    };

    let coding: Vec<usize> = (0..pulses as isize).map(|p| code_index(mode, k, p)).collect();
    let mut out = Vec::with_capacity(pulses);
    for p in 0..pulses as isize {
        let mut rx = vec![Complex64::new(0.0, 0.0); len];
        let own = set.pairs[code_index(mode, k, p)].code.samples();
        for s in &scene.first_trip {
            add_echo(&mut rx, own, s, phase_step, p);
        }
        // sent one PRI earlier; pulse 0 sees the warm-up pulse -1
        let prev = set.pairs[code_index(mode, k, p - 1)].code.samples();
        for s in &scene.second_trip {
            add_echo(&mut rx, prev, s, phase_step, p - 1);
        }
        if let Some(nd) = &noise {
            for v in rx.iter_mut() {
                *v += Complex64::new(nd.sample(rng), nd.sample(rng));
            }
        }
        out.push(rx);
    }
    Ok(PulseTrain {
        pulses: out,
        coding,
        mode,
        pri: scene.pri,
        carrier_wavelength: scene.carrier_wavelength,
    })
}

/// Pulse-compressed samples, one value per gate per pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredTrain {
    pub gates: Vec<Vec<Complex64>>,
    pub coding: Vec<usize>,
    pub pri: f64,
    pub carrier_wavelength: f64,
}

impl FilteredTrain {
    pub fn num_gates(&self) -> usize {
        self.gates.first().map_or(0, |g| g.len())
    }

    pub fn num_pulses(&self) -> usize {
        self.gates.len()
    }

    /// Slow-time samples of one gate.
    pub fn gate_series(&self, gate: usize) -> Result<Vec<Complex64>> {
        if gate >= self.num_gates() {
            return Err(Error::IndexOutOfRange {
                index: gate,
                len: self.num_gates(),
            });
        }
        Ok(self.gates.iter().map(|p| p[gate]).collect())
    }
}

/// Filter pulse `p` with filter `coding[p]`; gate `g` is output sample
/// `g + mainlobe_center`.
pub fn receive(train: &PulseTrain, set: &OrthogonalSet) -> Result<FilteredTrain> {
    if let Some(&bad) = train.coding.iter().find(|&&c| c >= set.len()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: set.len(),
        });
    }
    let n = set.code_len();
    let center = set.mainlobe().center;
    let gates: Vec<Vec<Complex64>> = train
        .pulses
        .par_iter()
        .zip(&train.coding)
        .map(|(rx, &c)| {
            let y = convolve(rx, &set.pairs[c].filter.coefficients);
            let num_gates = rx.len() + 1 - n;
            y[center..center + num_gates].to_vec()
        })
        .collect();
    Ok(FilteredTrain {
        gates,
        coding: train.coding.clone(),
        pri: train.pri,
        carrier_wavelength: train.carrier_wavelength,
    })
}

/// Mean power per gate, linear.
pub fn mean_power(filtered: &FilteredTrain) -> Vec<f64> {
    let m = filtered.num_pulses() as f64;
    (0..filtered.num_gates())
        .map(|g| filtered.gates.iter().map(|p| p[g].norm_sqr()).sum::<f64>() / m)
        .collect()
}

pub fn power_profile(filtered: &FilteredTrain) -> Vec<f64> {
    mean_power(filtered).into_iter().map(power_db).collect()
}

/// Expected filtered noise level, `noise_power * ||h||^2`.
pub fn noise_floor(noise_power: f64, pair: &CodeFilterPair) -> f64 {
    noise_power * pair.filter.energy()
}

/// Noise power that puts an extended block of mean reflectivity power
/// `signal_power` `snr_db` above the filtered noise floor for `pair`.
pub fn noise_power_for_snr(signal_power: f64, pair: &CodeFilterPair, snr_db: f64) -> f64 {
    let response: f64 = pair.filtered_response().iter().map(|v| v.norm_sqr()).sum();
    signal_power * response / (pair.filter.energy() * 10f64.powf(snr_db / 10.0))
}

/// Mean of `uncoded_db - coded_db` over `gates`; zero for an empty gate list.
pub fn suppression_db(coded_db: &[f64], uncoded_db: &[f64], gates: &[usize]) -> f64 {
    if gates.is_empty() {
        return 0.0;
    }
    gates
        .iter()
        .map(|&g| uncoded_db[g] - coded_db[g])
        .sum::<f64>()
        / gates.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityEstimator {
    /// Peak of the all-pulse Doppler spectrum.
    SpectralPeak,
    /// Lag-1 pulse pair over all pulses.
    PulsePair,
    /// Lag-k pulse pair within each same-code sub-train.
    SubTrainPulsePair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DopplerSpectrum {
    /// `|DFT|^2 / M` in natural bin order.
    pub power: Vec<f64>,
    /// Velocity of each bin, m/s, aliased into `[-v_nyq, v_nyq)`.
    pub velocity_axis: Vec<f64>,
    pub peak_bin: usize,
    pub peak_velocity: f64,
    pub pulse_pair_velocity: f64,
}

fn bin_velocity(bin: usize, m: usize, pri: f64, wavelength: f64) -> f64 {
    let mut f = bin as f64 / m as f64;
    if f >= 0.5 {
        f -= 1.0;
    }
    wavelength * f / (2.0 * pri)
}

fn pulse_pair(series: &[Complex64], lag: usize, pri: f64, wavelength: f64) -> f64 {
    let r: Complex64 = series
        .iter()
        .zip(&series[lag.min(series.len())..])
        .map(|(a, b)| a.conj() * b)
        .sum();
    wavelength * r.arg() / (4.0 * PI * lag as f64 * pri)
}

/// DFT across pulses at one gate, with spectral-peak and pulse-pair velocities.
pub fn doppler_spectrum(filtered: &FilteredTrain, gate: usize) -> Result<DopplerSpectrum> {
    let mut series = filtered.gate_series(gate)?;
    let m = series.len();
    let (pri, lambda) = (filtered.pri, filtered.carrier_wavelength);
    let pulse_pair_velocity = pulse_pair(&series, 1, pri, lambda);
    FftPlanner::new().plan_fft_forward(m).process(&mut series);
    let power: Vec<f64> = series.iter().map(|v| v.norm_sqr() / m as f64).collect();
    let peak_bin = (0..m)
        .max_by(|&a, &b| power[a].total_cmp(&power[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    Ok(DopplerSpectrum {
        velocity_axis: (0..m).map(|b| bin_velocity(b, m, pri, lambda)).collect(),
        peak_velocity: bin_velocity(peak_bin, m, pri, lambda),
        power,
        peak_bin,
        pulse_pair_velocity,
    })
}

/// Per-gate velocity using `estimator`. `codes` is the code-set size, used by
/// the sub-train estimator.
pub fn velocity_field(
    filtered: &FilteredTrain,
    estimator: VelocityEstimator,
    codes: usize,
) -> Result<Vec<f64>> {
    (0..filtered.num_gates())
        .into_par_iter()
        .map(|g| match estimator {
            VelocityEstimator::SpectralPeak => doppler_spectrum(filtered, g).map(|s| s.peak_velocity),
            VelocityEstimator::PulsePair => filtered
                .gate_series(g)
                .map(|s| pulse_pair(&s, 1, filtered.pri, filtered.carrier_wavelength)),
            VelocityEstimator::SubTrainPulsePair => filtered
                .gate_series(g)
                .map(|s| pulse_pair(&s, codes.max(1), filtered.pri, filtered.carrier_wavelength)),
        })
        .collect()
}

/// Products of one simulated mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProducts {
    pub mode: Mode,
    pub power_db: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Per-gate Doppler power spectra, natural bin order.
    pub spectra: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub coded: Option<RunProducts>,
    pub uncoded: Option<RunProducts>,
    /// Present when both modes ran.
    pub suppression_db: Option<f64>,
    pub second_trip_gates: Vec<usize>,
    pub estimator: VelocityEstimator,
    /// Bin velocities shared by every spectrum.
    pub velocity_axis: Vec<f64>,
}

fn run_mode(
    scene: &TripScene,
    set: &OrthogonalSet,
    pulses: usize,
    mode: Mode,
    noise_rng: &mut (impl Rng + Clone),
    estimator: VelocityEstimator,
) -> Result<(RunProducts, Vec<f64>)> {
    let mut rng = noise_rng.clone();
    let train = simulate(scene, set, pulses, mode, &mut rng)?;
    let filtered = receive(&train, set)?;
    let spectra: Vec<DopplerSpectrum> = (0..filtered.num_gates())
        .into_par_iter()
        .map(|g| doppler_spectrum(&filtered, g))
        .collect::<Result<_>>()?;
    let codes = match mode {
        Mode::Coded => set.len(),
        Mode::Uncoded => 1,
    };
    let velocity = velocity_field(&filtered, estimator, codes)?;
    let axis = spectra.first().map_or_else(Vec::new, |s| s.velocity_axis.clone());
    Ok((
        RunProducts {
            mode,
            power_db: power_profile(&filtered),
            velocity,
            spectra: spectra.into_iter().map(|s| s.power).collect(),
        },
        axis,
    ))
}

/// Simulate, filter and reduce the requested modes. Both modes draw the same
/// noise realisation from `rng`.
pub fn run<R: Rng + Clone>(
    scene: &TripScene,
    set: &OrthogonalSet,
    pulses: usize,
    modes: &[Mode],
    rng: &mut R,
    estimator: VelocityEstimator,
) -> Result<SimResult> {
    let mut coded = None;
    let mut uncoded = None;
    let mut velocity_axis = Vec::new();
    for &mode in modes {
        let (products, axis) = run_mode(scene, set, pulses, mode, rng, estimator)?;
        velocity_axis = axis;
        match mode {
            Mode::Coded => coded = Some(products),
            Mode::Uncoded => uncoded = Some(products),
        }
    }
    let second_trip_gates = scene.second_trip_gates();
    let suppression_db = match (&coded, &uncoded) {
        (Some(c), Some(u)) => Some(suppression_db(&c.power_db, &u.power_db, &second_trip_gates)),
        _ => None,
    };
    Ok(SimResult {
        coded,
        uncoded,
        suppression_db,
        second_trip_gates,
        estimator,
        velocity_axis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::{cross_ambiguity_peak, DB_FLOOR};
    use crate::optimizer::{random_code_set, refit, OptimizerConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LAMBDA: f64 = 0.0216;

    fn small_set(k: usize) -> OrthogonalSet {
        let mut c = OptimizerConfig::small(8, 24);
        c.num_codes = k;
        let start = random_code_set(&c, &mut ChaCha8Rng::seed_from_u64(31));
        refit(&start, &c).unwrap()
    }

    fn scene(gates: usize) -> TripScene {
        TripScene::empty(gates, 500e-6, LAMBDA)
    }

    fn point(gate: usize, re: f64, velocity: f64) -> Scatterer {
        Scatterer {
            gate,
            reflectivity: Complex64::new(re, 0.0),
            velocity,
        }
    }

    #[test]
    fn empty_scene_is_silent() {
        let set = small_set(2);
        let t = simulate(&scene(30), &set, 4, Mode::Coded, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(t.pulses.iter().flatten().all(|v| *v == Complex64::new(0.0, 0.0)));
        assert_eq!(t.pulses[0].len(), 30 + 7);
        assert_eq!(t.coding, vec![0, 1, 0, 1]);
        let prof = power_profile(&receive(&t, &set).unwrap());
        assert!(prof.iter().all(|&v| v == DB_FLOOR));
    }

    #[test]
    fn stationary_uncoded_pulses_repeat() {
        let set = small_set(2);
        let mut s = scene(20);
        s.first_trip.push(point(5, 1.5, 0.0));
        let t = simulate(&s, &set, 4, Mode::Uncoded, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let code = set.pairs[0].code.samples();
        for p in &t.pulses {
            assert_eq!(p, &t.pulses[0]);
            for (i, v) in p.iter().enumerate() {
                let expected = if (5..13).contains(&i) { code[i - 5] * 1.5 } else { Complex64::new(0.0, 0.0) };
                assert!((v - expected).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn aliased_gate_for_500us_pri() {
        let ts = 0.5e-6;
        let r_max = unambiguous_range(500e-6);
        assert!((r_max - 74_948.1145).abs() < 1e-3);
        let (trip, gate) = locate(80_000.0, 500e-6, ts);
        assert_eq!(trip, 1);
        assert_eq!(gate, ((80_000.0 - r_max) / gate_spacing(ts)).round() as usize);
        assert_eq!(locate(10_000.0, 500e-6, ts), (0, (10_000.0 / gate_spacing(ts)).round() as usize));
    }

    #[test]
    fn validation_errors() {
        let set = small_set(2);
        let mut s = scene(10);
        s.first_trip.push(point(10, 1.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(simulate(&s, &set, 4, Mode::Coded, &mut rng).is_err());
        let s = scene(10);
        assert!(simulate(&s, &set, 3, Mode::Coded, &mut rng).is_err());
        assert!(simulate(&s, &set, 2, Mode::Coded, &mut rng).is_err());
        let mut s = scene(10);
        s.pri = 1e-6;
        assert!(simulate(&s, &set, 4, Mode::Coded, &mut rng).is_err());
    }

    #[test]
    fn single_scatterer_peak_power() {
        let set = small_set(2);
        let mut s = scene(40);
        s.first_trip.push(point(12, 2.0, 0.0));
        let t = simulate(&s, &set, 4, Mode::Coded, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let f = receive(&t, &set).unwrap();
        let p = mean_power(&f);
        let peak = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(peak, 12);
        let g2 = set.pairs[0].mainlobe_gain.norm_sqr();
        assert!((p[12] - 4.0 * g2).abs() < 1e-9 * 4.0 * g2);
    }

    #[test]
    fn stationary_spectrum_peaks_at_dc() {
        let set = small_set(2);
        let mut s = scene(20);
        s.first_trip.push(point(4, 1.0, 0.0));
        let t = simulate(&s, &set, 16, Mode::Coded, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let sp = doppler_spectrum(&receive(&t, &set).unwrap(), 4).unwrap();
        assert_eq!(sp.peak_bin, 0);
        assert_eq!(sp.peak_velocity, 0.0);
    }

    #[test]
    fn quarter_nyquist_line() {
        let set = small_set(2);
        let mut s = scene(20);
        let v = s.nyquist_velocity() / 4.0;
        s.first_trip.push(point(4, 1.0, v));
        let m = 32;
        let t = simulate(&s, &set, m, Mode::Coded, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let f = receive(&t, &set).unwrap();
        let sp = doppler_spectrum(&f, 4).unwrap();
        assert_eq!(sp.peak_bin, m / 8);
        assert!((sp.peak_velocity - v).abs() < 1e-12);
        assert!((sp.pulse_pair_velocity - v).abs() < 1e-9);
        let sub = velocity_field(&f, VelocityEstimator::SubTrainPulsePair, 2).unwrap();
        assert!((sub[4] - v).abs() < 1e-9);
        assert!(doppler_spectrum(&f, 20).is_err());
    }

    #[test]
    fn linearity_in_scene() {
        let set = small_set(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a = scene(30);
        let mut b = scene(30);
        for _ in 0..4 {
            a.first_trip.push(Scatterer { gate: rng.random_range(0..30), reflectivity: Complex64::new(rng.random(), rng.random()), velocity: rng.random_range(-5.0..5.0) });
            b.second_trip.push(Scatterer { gate: rng.random_range(0..30), reflectivity: Complex64::new(rng.random(), rng.random()), velocity: rng.random_range(-5.0..5.0) });
        }
        let mut ab = a.clone();
        ab.second_trip = b.second_trip.clone();
        let run = |s: &TripScene| receive(&simulate(s, &set, 6, Mode::Coded, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), &set).unwrap();
        let (fa, fb, fab) = (run(&a), run(&b), run(&ab));
        for p in 0..6 {
            for g in 0..30 {
                assert!((fa.gates[p][g] + fb.gates[p][g] - fab.gates[p][g]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_code_uncoded_is_plain_compression() {
        let set = small_set(1);
        let mut s = scene(25);
        s.first_trip.push(point(7, 1.0, 0.0));
        let coded = receive(&simulate(&s, &set, 4, Mode::Coded, &mut ChaCha8Rng::seed_from_u64(2)).unwrap(), &set).unwrap();
        let uncoded = receive(&simulate(&s, &set, 4, Mode::Uncoded, &mut ChaCha8Rng::seed_from_u64(2)).unwrap(), &set).unwrap();
        assert_eq!(coded, uncoded);
        // every gate is the compressed response shifted to gate 7
        let y = set.pairs[0].filtered_response();
        let c = set.mainlobe().center;
        for g in 0..25 {
            let idx = g as isize - 7 + c as isize;
            let expected = if idx >= 0 && (idx as usize) < y.len() { y[idx as usize] } else { Complex64::new(0.0, 0.0) };
            assert!((uncoded.gates[0][g] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn energy_accounting() {
        let set = small_set(2);
        let energy = |v: &[Complex64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>();
        for second in [false, true] {
            let mut s = scene(80);
            let target = point(20, 1.3, 2.0);
            if second {
                s.second_trip.push(target);
            } else {
                s.first_trip.push(target);
            }
            let t = simulate(&s, &set, 4, Mode::Coded, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
            for (p, rx) in t.pulses.iter().enumerate() {
                let h = &set.pairs[t.coding[p]].filter.coefficients;
                let sent = if second { (p + 1) % 2 } else { p % 2 };
                let expected = 1.69 * energy(&convolve(set.pairs[sent].code.samples(), h));
                let total = energy(&convolve(rx, h));
                assert!((total - expected).abs() <= 1e-9 * expected);
            }
        }
    }

    #[test]
    fn second_trip_residual_bounded_by_cross_peak() {
        let set = small_set(2);
        let mut s = scene(60);
        let amp = 0.8;
        s.second_trip.push(point(25, amp, 3.0));
        let t = simulate(&s, &set, 8, Mode::Coded, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let prof = power_profile(&receive(&t, &set).unwrap());
        let worst_cross = cross_ambiguity_peak(&set.pairs[0], &set.pairs[1])
            .max(cross_ambiguity_peak(&set.pairs[1], &set.pairs[0]));
        let g2 = set.pairs[0].mainlobe_gain.norm_sqr();
        let bound = power_db(amp * amp * g2) + worst_cross + 3.0;
        assert!(prof.iter().all(|&p| p <= bound));
    }

    #[test]
    fn suppression_examples() {
        let a = vec![-10.0, -20.0, -30.0];
        assert_eq!(suppression_db(&a, &a, &[0, 1, 2]), 0.0);
        assert_eq!(suppression_db(&a, &[0.0, 0.0, 0.0], &[1, 2]), 25.0);
        assert_eq!(suppression_db(&a, &a, &[]), 0.0);
    }

    #[test]
    fn doubling_reflectivity_shifts_profiles_by_6db() {
        let set = small_set(2);
        let build = |amp: f64| {
            let mut s = scene(60);
            s.second_trip.push(point(20, amp, 1.0));
            s.second_trip.push(point(24, -0.5 * amp, -2.0));
            s
        };
        let modes = [Mode::Coded, Mode::Uncoded];
        let r1 = run(&build(1.0), &set, 8, &modes, &mut ChaCha8Rng::seed_from_u64(5), VelocityEstimator::PulsePair).unwrap();
        let r2 = run(&build(2.0), &set, 8, &modes, &mut ChaCha8Rng::seed_from_u64(5), VelocityEstimator::PulsePair).unwrap();
        let six = 20.0 * 2f64.log10();
        for g in r1.second_trip_gates.iter().copied() {
            let du = r2.uncoded.as_ref().unwrap().power_db[g] - r1.uncoded.as_ref().unwrap().power_db[g];
            let dc = r2.coded.as_ref().unwrap().power_db[g] - r1.coded.as_ref().unwrap().power_db[g];
            assert!((du - six).abs() < 1e-9 && (dc - six).abs() < 1e-9);
        }
        assert!((r1.suppression_db.unwrap() - r2.suppression_db.unwrap()).abs() < 0.1);
    }

    #[test]
    fn noise_floor_calibration() {
        let set = small_set(2);
        let mut s = scene(400);
        s.noise_power = 0.3;
        let t = simulate(&s, &set, 64, Mode::Uncoded, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let p = mean_power(&receive(&t, &set).unwrap());
        let measured = p.iter().sum::<f64>() / p.len() as f64;
        let expected = noise_floor(0.3, &set.pairs[0]);
        assert!((measured / expected - 1.0).abs() < 0.05, "{measured} vs {expected}");
        let n = noise_power_for_snr(2.0, &set.pairs[0], 30.0);
        assert!(n > 0.0);
    }
}
