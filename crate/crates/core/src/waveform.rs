//! Core waveform types and correlation primitives.
//!
//! Every correlation in the crate uses the convention
//! `r_ab(lag) = sum_t a(t) * conj(b(t + lag))`, summed over the overlapping
//! support. Receive filtering is plain linear convolution, so a code of
//! length `N` through a filter of length `Lf` yields `N + Lf - 1` samples.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default tolerance on `| |s[n]| - 1 |` for a code to count as unimodular.
pub const UNIMODULAR_TOL: f64 = 1e-12;

/// Cross-correlation `sum_t a(t) conj(b(t + lag))`. Lags without overlap give
/// exactly zero.
pub fn crosscorrelation(a: &[Complex64], b: &[Complex64], lag: isize) -> Complex64 {
    let (na, nb) = (a.len() as isize, b.len() as isize);
    let start = 0.max(-lag);
    let end = na.min(nb - lag);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut t = start;
    while t < end {
        acc += a[t as usize] * b[(t + lag) as usize].conj();
        t += 1;
    }
    acc
}

pub fn autocorrelation(a: &[Complex64], lag: isize) -> Complex64 {
    crosscorrelation(a, a, lag)
}

/// Full linear convolution, length `a.len() + b.len() - 1`.
pub fn convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (o, &bj) in out[i..].iter_mut().zip(b) {
            *o += ai * bj;
        }
    }
    out
}

/// Single output sample `(a * b)[index]` of the linear convolution.
pub fn convolve_at(a: &[Complex64], b: &[Complex64], index: usize) -> Complex64 {
    let lo = (index + 1).saturating_sub(b.len());
    let hi = index.min(a.len().saturating_sub(1));
    let mut acc = Complex64::new(0.0, 0.0);
    for n in lo..=hi {
        acc += a[n] * b[index - n];
    }
    acc
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Unit-modulus transmit sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyphaseCode {
    samples: Vec<Complex64>,
    /// Seconds per sample.
    sample_period: f64,
}

impl PolyphaseCode {
    /// Validates unimodularity (within [`UNIMODULAR_TOL`]) and `N >= 2`.
    pub fn new(samples: Vec<Complex64>, sample_period: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidCode(format!(
                "length {} is below the minimum of 2",
                samples.len()
            )));
        }
        if !(sample_period > 0.0 && sample_period.is_finite()) {
            return Err(Error::InvalidCode(format!(
                "sample period {sample_period} must be positive"
            )));
        }
        let dev = max_modulus_deviation(&samples);
        if dev > UNIMODULAR_TOL {
            return Err(Error::InvalidCode(format!(
                "modulus deviates from 1 by {dev:.3e}"
            )));
        }
        Ok(Self {
            samples,
            sample_period,
        })
    }

    /// Builds `e^{j phi_n}` from phases; unimodular by construction.
    pub fn from_phases(phases: &[f64], sample_period: f64) -> Result<Self> {
        Self::new(
            phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect(),
            sample_period,
        )
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn phases(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.arg()).collect()
    }

    /// The code multiplied by a global phase `e^{j phi}`.
    pub fn rotated(&self, phi: f64) -> Self {
        let r = Complex64::from_polar(1.0, phi);
        Self {
            samples: self.samples.iter().map(|&s| s * r).collect(),
            sample_period: self.sample_period,
        }
    }

    /// Time-reversed conjugate, i.e. the matched filter taps.
    pub fn matched_taps(&self) -> Vec<Complex64> {
        self.samples.iter().rev().map(|s| s.conj()).collect()
    }
}

pub fn max_modulus_deviation(samples: &[Complex64]) -> f64 {
    samples
        .iter()
        .map(|s| (s.norm() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Protected window of filtered-output samples around the mainlobe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MainlobeGeometry {
    /// Index into the length `N + Lf - 1` filtered output.
    pub center: usize,
    /// Odd window width in samples.
    pub width: usize,
}

impl MainlobeGeometry {
    /// Window centered on the peak of the matched response when the matched
    /// taps sit at offset `(Lf - N) / 2` inside the longer filter. For a
    /// unimodular code that peak is always at `N - 1 + (Lf - N) / 2`, which is
    /// also the middle of the output.
    pub fn centered(code_len: usize, filter_len: usize, width: usize) -> Result<Self> {
        if filter_len < code_len {
            return Err(Error::FilterTooShort {
                code_len,
                filter_len,
            });
        }
        let g = Self {
            center: code_len - 1 + (filter_len - code_len) / 2,
            width,
        };
        g.validate(code_len, filter_len)?;
        Ok(g)
    }

    pub fn validate(&self, code_len: usize, filter_len: usize) -> Result<()> {
        if self.width == 0 || self.width % 2 == 0 {
            return Err(Error::InvalidGeometry(format!(
                "width {} must be odd and positive",
                self.width
            )));
        }
        let out_len = code_len + filter_len - 1;
        let half = self.width / 2;
        if self.center < half || self.center + half >= out_len {
            return Err(Error::InvalidGeometry(format!(
                "window {}±{} leaves output support 0..{}",
                self.center, half, out_len
            )));
        }
        Ok(())
    }

    pub fn half_width(&self) -> usize {
        self.width / 2
    }

    pub fn rows(&self) -> std::ops::RangeInclusive<usize> {
        self.center - self.half_width()..=self.center + self.half_width()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.rows().contains(&index)
    }
}

/// Receive-side coefficients, longer than the code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchedFilter {
    pub coefficients: Vec<Complex64>,
    pub mainlobe: MainlobeGeometry,
}

impl MismatchedFilter {
    pub fn new(
        coefficients: Vec<Complex64>,
        mainlobe: MainlobeGeometry,
        code_len: usize,
    ) -> Result<Self> {
        if coefficients.len() < code_len {
            return Err(Error::FilterTooShort {
                code_len,
                filter_len: coefficients.len(),
            });
        }
        mainlobe.validate(code_len, coefficients.len())?;
        Ok(Self {
            coefficients,
            mainlobe,
        })
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(|&c| c * s).collect(),
            mainlobe: self.mainlobe,
        }
    }

    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeFilterPair {
    pub code: PolyphaseCode,
    pub filter: MismatchedFilter,
    /// Filtered output at `filter.mainlobe.center`.
    pub mainlobe_gain: Complex64,
}

impl CodeFilterPair {
    pub fn new(code: PolyphaseCode, filter: MismatchedFilter) -> Result<Self> {
        filter.mainlobe.validate(code.len(), filter.len())?;
        if filter.len() < code.len() {
            return Err(Error::FilterTooShort {
                code_len: code.len(),
                filter_len: filter.len(),
            });
        }
        let mainlobe_gain =
            convolve_at(code.samples(), &filter.coefficients, filter.mainlobe.center);
        if mainlobe_gain.norm() == 0.0 {
            return Err(Error::InvalidGeometry("mainlobe gain is zero".into()));
        }
        Ok(Self {
            code,
            filter,
            mainlobe_gain,
        })
    }

    /// Code convolved with its filter, length `N + Lf - 1`.
    pub fn filtered_response(&self) -> Vec<Complex64> {
        convolve(self.code.samples(), &self.filter.coefficients)
    }

    /// Another code passed through this pair's filter.
    pub fn response_to(&self, code: &PolyphaseCode) -> Vec<Complex64> {
        convolve(code.samples(), &self.filter.coefficients)
    }

    pub fn output_len(&self) -> usize {
        self.code.len() + self.filter.len() - 1
    }
}

/// Jointly designed code/filter pairs sharing `N`, `Lf` and the mainlobe window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalSet {
    pub pairs: Vec<CodeFilterPair>,
    /// Summed pair error over all filters.
    pub isl_error: f64,
}

impl OrthogonalSet {
    pub fn new(pairs: Vec<CodeFilterPair>, isl_error: f64) -> Result<Self> {
        let first = pairs
            .first()
            .ok_or_else(|| Error::DimensionMismatch("empty set".into()))?;
        let (n, lf, ml) = (first.code.len(), first.filter.len(), first.filter.mainlobe);
        for (i, p) in pairs.iter().enumerate() {
            if p.code.len() != n || p.filter.len() != lf || p.filter.mainlobe != ml {
                return Err(Error::DimensionMismatch(format!(
                    "pair {i} has N={}, Lf={}, mainlobe {:?}; pair 0 has N={n}, Lf={lf}, {ml:?}",
                    p.code.len(),
                    p.filter.len(),
                    p.filter.mainlobe
                )));
            }
        }
        Ok(Self { pairs, isl_error })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn code_len(&self) -> usize {
        self.pairs[0].code.len()
    }

    pub fn filter_len(&self) -> usize {
        self.pairs[0].filter.len()
    }

    pub fn mainlobe(&self) -> MainlobeGeometry {
        self.pairs[0].filter.mainlobe
    }

    pub fn codes(&self) -> Vec<PolyphaseCode> {
        self.pairs.iter().map(|p| p.code.clone()).collect()
    }

    pub fn sample_period(&self) -> f64 {
        self.pairs[0].code.sample_period()
    }
}

/// Limits applied by [`check_constraints`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintTolerance {
    pub unimodular: f64,
    /// Relative gain imbalance limit.
    pub gain: f64,
    /// Phase imbalance limit in radians.
    pub phase: f64,
}

impl ConstraintTolerance {
    /// Same limit for gain and phase balance; unimodularity at [`UNIMODULAR_TOL`].
    pub fn balance(tol: f64) -> Self {
        Self {
            unimodular: UNIMODULAR_TOL,
            gain: tol,
            phase: tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub max_unimodular_deviation: f64,
    /// `(max |g| - min |g|) / max |g|` over the mainlobe gains.
    pub gain_imbalance: f64,
    /// Largest wrapped `|arg g_i - arg g_0|`.
    pub phase_imbalance: f64,
    pub failures: Vec<String>,
}

impl ConstraintReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn check_constraints(set: &OrthogonalSet, tol: ConstraintTolerance) -> ConstraintReport {
    let max_unimodular_deviation = set
        .pairs
        .iter()
        .map(|p| max_modulus_deviation(p.code.samples()))
        .fold(0.0, f64::max);

    let mags: Vec<f64> = set.pairs.iter().map(|p| p.mainlobe_gain.norm()).collect();
    let gmax = mags.iter().cloned().fold(0.0, f64::max);
    let gmin = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let gain_imbalance = if gmax > 0.0 { (gmax - gmin) / gmax } else { 0.0 };

    let ref_arg = set.pairs.first().map_or(0.0, |p| p.mainlobe_gain.arg());
    let phase_imbalance = set
        .pairs
        .iter()
        .map(|p| wrap_phase(p.mainlobe_gain.arg() - ref_arg).abs())
        .fold(0.0, f64::max);

    let mut failures = Vec::new();
    if max_unimodular_deviation > tol.unimodular {
        failures.push(format!(
            "unimodular deviation {max_unimodular_deviation:.3e} > {:.1e}",
            tol.unimodular
        ));
    }
    if gain_imbalance > tol.gain {
        failures.push(format!(
            "gain imbalance {gain_imbalance:.3e} > {:.1e}",
            tol.gain
        ));
    }
    if phase_imbalance > tol.phase {
        failures.push(format!(
            "phase imbalance {phase_imbalance:.3e} rad > {:.1e}",
            tol.phase
        ));
    }
    ConstraintReport {
        max_unimodular_deviation,
        gain_imbalance,
        phase_imbalance,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn brute_xcorr(a: &[Complex64], b: &[Complex64], lag: isize) -> Complex64 {
        let mut acc = c(0.0, 0.0);
        for t in 0..a.len() as isize {
            let u = t + lag;
            if u >= 0 && (u as usize) < b.len() {
                acc += a[t as usize] * b[u as usize].conj();
            }
        }
        acc
    }

    #[test]
    fn crosscorrelation_examples() {
        let ones = [c(1.0, 0.0), c(1.0, 0.0)];
        assert_eq!(crosscorrelation(&ones, &ones, 0), c(2.0, 0.0));
        assert_eq!(crosscorrelation(&ones, &ones, 2), c(0.0, 0.0));
        assert_eq!(crosscorrelation(&ones, &ones, -7), c(0.0, 0.0));
        let a = [c(1.0, 0.0), c(0.0, 1.0)];
        let b = [c(1.0, 0.0), c(-1.0, 0.0)];
        assert_eq!(crosscorrelation(&a, &b, 1), c(-1.0, 0.0));
        assert_eq!(crosscorrelation(&a, &b, 1), brute_xcorr(&a, &b, 1));
    }

    #[test]
    fn autocorrelation_examples() {
        let a = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)];
        assert_eq!(autocorrelation(&a, 1), c(0.0, -2.0));
        assert_eq!(autocorrelation(&a, 3), c(0.0, 0.0));
        let code = PolyphaseCode::from_phases(&[0.3, 1.2, -2.0, 0.7], 1.0).unwrap();
        let r0 = autocorrelation(code.samples(), 0);
        assert!((r0 - c(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn convolution_examples() {
        assert_eq!(convolve(&[c(1.0, 0.0)], &[c(1.0, 0.0)]), vec![c(1.0, 0.0)]);
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        assert_eq!(convolve(&[one, one], &[one, zero]), vec![one, one, zero]);
        let code = PolyphaseCode::from_phases(&vec![0.1; 40], 0.5e-6).unwrap();
        let filt = vec![one; 480];
        assert_eq!(convolve(code.samples(), &filt).len(), 519);
    }

    #[test]
    fn convolve_at_matches_full() {
        let a: Vec<_> = (0..5).map(|i| c(i as f64, 1.0 - i as f64)).collect();
        let b: Vec<_> = (0..9).map(|i| c((i * i) as f64 * 0.1, -(i as f64))).collect();
        let full = convolve(&a, &b);
        for (i, v) in full.iter().enumerate() {
            assert!((convolve_at(&a, &b, i) - v).norm() < 1e-12);
        }
    }

    #[test]
    fn code_validation() {
        assert!(PolyphaseCode::new(vec![c(1.0, 0.0)], 1.0).is_err());
        assert!(PolyphaseCode::new(vec![c(1.0, 0.0), c(1.1, 0.0)], 1.0).is_err());
        assert!(PolyphaseCode::new(vec![c(1.0, 0.0), c(0.0, 1.0)], 0.0).is_err());
        assert!(PolyphaseCode::new(vec![c(1.0, 0.0), c(0.0, -1.0)], 1.0).is_ok());
    }

    #[test]
    fn geometry_bounds() {
        let g = MainlobeGeometry::centered(40, 480, 5).unwrap();
        assert_eq!(g.center, 259);
        assert_eq!(g.rows(), 257..=261);
        assert!(MainlobeGeometry::centered(40, 39, 5).is_err());
        assert!(MainlobeGeometry::centered(4, 4, 4).is_err());
        assert!(MainlobeGeometry { center: 1, width: 5 }.validate(4, 4).is_err());
        assert!(MainlobeGeometry { center: 5, width: 5 }.validate(4, 4).is_err());
        assert!(MainlobeGeometry { center: 2, width: 5 }.validate(4, 4).is_ok());
    }

    #[test]
    fn centered_geometry_is_matched_peak() {
        let code = PolyphaseCode::from_phases(&[0.0, 2.1, 0.4, -1.3, 2.9, 0.8, -0.2], 1.0).unwrap();
        for lf in [7, 8, 20, 31] {
            let mut taps = vec![c(0.0, 0.0); lf];
            let off = (lf - code.len()) / 2;
            taps[off..off + code.len()].copy_from_slice(&code.matched_taps());
            let y = convolve(code.samples(), &taps);
            let peak = (0..y.len())
                .max_by(|&i, &j| y[i].norm().partial_cmp(&y[j].norm()).unwrap())
                .unwrap();
            let g = MainlobeGeometry::centered(code.len(), lf, 3).unwrap();
            assert_eq!(g.center, peak, "lf={lf}");
        }
    }

    fn pair_from(code: PolyphaseCode) -> CodeFilterPair {
        let g = MainlobeGeometry::centered(code.len(), code.len(), 1).unwrap();
        let f = MismatchedFilter::new(code.matched_taps(), g, code.len()).unwrap();
        CodeFilterPair::new(code, f).unwrap()
    }

    #[test]
    fn constraints_identical_pairs_pass() {
        let code = PolyphaseCode::from_phases(&[0.2, 1.0, -0.5, 2.2], 1.0).unwrap();
        let p = pair_from(code);
        let set = OrthogonalSet::new(vec![p.clone(), p], 0.0).unwrap();
        let r = check_constraints(&set, ConstraintTolerance::balance(1e-6));
        assert_eq!(r.gain_imbalance, 0.0);
        assert_eq!(r.phase_imbalance, 0.0);
        assert!(r.passed());
    }

    #[test]
    fn constraints_detect_phase_rotation() {
        let code = PolyphaseCode::from_phases(&[0.2, 1.0, -0.5, 2.2], 1.0).unwrap();
        let p1 = pair_from(code.clone());
        let rot = Complex64::from_polar(1.0, PI / 4.0);
        let p2 = CodeFilterPair::new(code, p1.filter.scaled(rot)).unwrap();
        let set = OrthogonalSet::new(vec![p1, p2], 0.0).unwrap();
        let r = check_constraints(&set, ConstraintTolerance::balance(1e-6));
        assert!((r.phase_imbalance - PI / 4.0).abs() < 1e-12);
        assert!(r.gain_imbalance < 1e-12);
        assert!(!r.passed());
    }

    #[test]
    fn set_rejects_mixed_dimensions() {
        let a = pair_from(PolyphaseCode::from_phases(&[0.0, 1.0, 2.0], 1.0).unwrap());
        let b = pair_from(PolyphaseCode::from_phases(&[0.0, 1.0], 1.0).unwrap());
        assert!(matches!(
            OrthogonalSet::new(vec![a, b], 0.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    fn unimodular(max_len: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec(0.0..2.0 * PI, 1..=max_len)
            .prop_map(|p| p.into_iter().map(|x| Complex64::from_polar(1.0, x)).collect())
    }

    proptest! {
        #[test]
        fn conjugate_symmetry(a in unimodular(24), b in unimodular(24), lag in -30isize..30) {
            let lhs = crosscorrelation(&a, &b, lag);
            let rhs = crosscorrelation(&b, &a, -lag).conj();
            prop_assert!((lhs - rhs).norm() < 1e-12);
            prop_assert!((lhs - brute_xcorr(&a, &b, lag)).norm() < 1e-12);
        }

        #[test]
        fn zero_lag_energy(a in unimodular(64)) {
            let r = autocorrelation(&a, 0);
            prop_assert!((r.re - a.len() as f64).abs() < 1e-12);
            prop_assert!(r.im.abs() < 1e-12);
            prop_assert_eq!(autocorrelation(&a, a.len() as isize), Complex64::new(0.0, 0.0));
        }

        #[test]
        fn matched_filtering_is_autocorrelation(a in unimodular(32)) {
            let taps: Vec<_> = a.iter().rev().map(|s| s.conj()).collect();
            let y = convolve(&a, &taps);
            let n = a.len() as isize;
            for (m, v) in y.iter().enumerate() {
                // output index m corresponds to lag (n - 1) - m
                let r = autocorrelation(&a, n - 1 - m as isize);
                prop_assert!((v - r).norm() < 1e-12);
            }
        }
    }
}
