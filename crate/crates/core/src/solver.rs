//! Closed-form minimum-ISL mismatched filters.
//!
//! For filter `h_i` the error is the energy it passes from every code in the
//! set, excluding only its own mainlobe window:
//!
//! ```text
//! e_i = sum_{r not in mainlobe} |(X_i h_i)_r|^2 + sum_{j != i} ||X_j h_i||^2
//!     = h_i^H G_i h_i
//! ```
//!
//! where `X_j` is the `(N + Lf - 1) x Lf` convolution matrix of code `j`. The
//! mainlobe is removed by deleting output rows of `X_i` (the columns of the
//! transposed form `h^T X`). Minimising `e_i` subject to `(X_i h_i)_c = L` at
//! the mainlobe center `c` gives
//!
//! ```text
//! h_i = L G_i^{-1} x_c^H / (x_c G_i^{-1} x_c^H)
//! ```
//!
//! with `x_c` the center row of `X_i`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{
    autocorrelation, convolve, MainlobeGeometry, MismatchedFilter, OrthogonalSet, PolyphaseCode,
};

/// Relative ridge used by default: `delta = 1e-10 * trace(G) / Lf`.
pub const DEFAULT_RIDGE: f64 = 1e-10;

/// `(N + Lf - 1) x Lf` Toeplitz matrix with `entries[r][c] = code[r - c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionMatrix {
    code: Vec<Complex64>,
    filter_len: usize,
}

impl ConvolutionMatrix {
    pub fn rows(&self) -> usize {
        self.code.len() + self.filter_len - 1
    }

    pub fn cols(&self) -> usize {
        self.filter_len
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        match r.checked_sub(c) {
            Some(k) if k < self.code.len() => self.code[k],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Row `r`, i.e. the linear functional producing output sample `r`.
    pub fn row(&self, r: usize) -> Vec<Complex64> {
        (0..self.filter_len).map(|c| self.entry(r, c)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows(), self.cols(), |r, c| self.entry(r, c))
    }

    /// Matrix-vector product, equal to `convolve(code, h)`.
    pub fn apply(&self, h: &[Complex64]) -> Result<Vec<Complex64>> {
        if h.len() != self.filter_len {
            return Err(Error::DimensionMismatch(format!(
                "filter has {} taps, matrix expects {}",
                h.len(),
                self.filter_len
            )));
        }
        Ok(convolve(&self.code, h))
    }

    /// Drop the output rows covered by `mainlobe`.
    pub fn without_mainlobe(self, mainlobe: MainlobeGeometry) -> Result<SidelobeMatrix> {
        mainlobe.validate(self.code.len(), self.filter_len)?;
        Ok(SidelobeMatrix {
            removed_rows: mainlobe.rows().collect(),
            matrix: self,
        })
    }
}

pub fn build_convolution_matrix(code: &[Complex64], filter_len: usize) -> Result<ConvolutionMatrix> {
    if code.is_empty() {
        return Err(Error::InvalidCode("empty code".into()));
    }
    if filter_len < code.len() {
        return Err(Error::FilterTooShort {
            code_len: code.len(),
            filter_len,
        });
    }
    Ok(ConvolutionMatrix {
        code: code.to_vec(),
        filter_len,
    })
}

/// Convolution matrix with the mainlobe rows deleted.
#[derive(Debug, Clone, PartialEq)]
pub struct SidelobeMatrix {
    pub matrix: ConvolutionMatrix,
    pub removed_rows: Vec<usize>,
}

impl SidelobeMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.rows() - self.removed_rows.len()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let keep: Vec<usize> = (0..self.matrix.rows())
            .filter(|r| !self.removed_rows.contains(r))
            .collect();
        DMatrix::from_fn(keep.len(), self.matrix.cols(), |r, c| {
            self.matrix.entry(keep[r], c)
        })
    }
}

/// Mainlobe level `L` the solved filter must reproduce at the window center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainScale(f64);

impl GainScale {
    pub fn new(level: f64) -> Result<Self> {
        if level > 0.0 && level.is_finite() {
            Ok(Self(level))
        } else {
            Err(Error::Config(format!("gain level {level} must be positive")))
        }
    }

    /// `L = N`, the matched-filter peak of a unimodular code.
    pub fn code_energy(code_len: usize) -> Self {
        Self(code_len as f64)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Which output rows of the *other* codes count as interference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossTermMode {
    /// Every cross-code output sample is penalised.
    #[default]
    Full,
    /// The mainlobe rows are deleted from every code's matrix, own and other.
    MainlobeDeleted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub gain: GainScale,
    /// Relative ridge: `delta = ridge * trace(G) / Lf`.
    pub ridge: f64,
    pub cross_terms: CrossTermMode,
}

impl SolverOptions {
    pub fn new(gain: GainScale) -> Self {
        Self {
            gain,
            ridge: DEFAULT_RIDGE,
            cross_terms: CrossTermMode::Full,
        }
    }
}

fn check_dims(codes: &[&[Complex64]], i: usize, filter_len: usize, ml: MainlobeGeometry) -> Result<()> {
    if i >= codes.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: codes.len(),
        });
    }
    let n = codes[i].len();
    if n == 0 {
        return Err(Error::InvalidCode("empty code".into()));
    }
    if let Some(bad) = codes.iter().position(|c| c.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "code {bad} has length {}, code {i} has {n}",
            codes[bad].len()
        )));
    }
    if filter_len < n {
        return Err(Error::FilterTooShort {
            code_len: n,
            filter_len,
        });
    }
    ml.validate(n, filter_len)
}

/// `G_i`, the `Lf x Lf` Hermitian Gram matrix of all sidelobe rows seen by filter `i`.
pub fn sidelobe_gram(
    codes: &[&[Complex64]],
    i: usize,
    filter_len: usize,
    mainlobe: MainlobeGeometry,
    mode: CrossTermMode,
) -> Result<DMatrix<Complex64>> {
    check_dims(codes, i, filter_len, mainlobe)?;
    let n = codes[i].len();
    let zero = Complex64::new(0.0, 0.0);

    // sum_j X_j^H X_j is Toeplitz: entry (a, b) = sum_n conj(x[n]) x[n + a - b].
    let mut lag_sum = vec![zero; 2 * n - 1];
    for code in codes {
        for d in -(n as isize - 1)..=(n as isize - 1) {
            lag_sum[(d + n as isize - 1) as usize] += autocorrelation(code, d).conj();
        }
    }
    let mut gram = DMatrix::from_fn(filter_len, filter_len, |a, b| {
        let d = a as isize - b as isize;
        if d.unsigned_abs() < n {
            lag_sum[(d + n as isize - 1) as usize]
        } else {
            zero
        }
    });

    let deleted: Vec<usize> = match mode {
        CrossTermMode::Full => vec![i],
        CrossTermMode::MainlobeDeleted => (0..codes.len()).collect(),
    };
    for &j in &deleted {
        let x = build_convolution_matrix(codes[j], filter_len)?;
        for r in mainlobe.rows() {
            let lo = (r + 1).saturating_sub(n);
            let hi = r.min(filter_len - 1);
            for a in lo..=hi {
                let xa = x.entry(r, a).conj();
                for b in lo..=hi {
                    gram[(a, b)] -= xa * x.entry(r, b);
                }
            }
        }
    }
    Ok(gram)
}

/// Quadratic form `h^H G_i h` for an arbitrary tap vector.
pub fn filter_error(
    codes: &[&[Complex64]],
    i: usize,
    taps: &[Complex64],
    mainlobe: MainlobeGeometry,
    mode: CrossTermMode,
) -> Result<f64> {
    let gram = sidelobe_gram(codes, i, taps.len(), mainlobe, mode)?;
    let h = DVector::from_column_slice(taps);
    let q = (h.adjoint() * &gram * &h)[(0, 0)];
    // G is PSD; rounding can leave a tiny negative real part.
    Ok(q.re.max(0.0))
}

/// Error of filter `i` in the set against every code in the set.
pub fn pair_error(set: &OrthogonalSet, i: usize, mode: CrossTermMode) -> Result<f64> {
    if i >= set.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: set.len(),
        });
    }
    let codes: Vec<&[Complex64]> = set.pairs.iter().map(|p| p.code.samples()).collect();
    let f = &set.pairs[i].filter;
    filter_error(&codes, i, &f.coefficients, f.mainlobe, mode)
}

/// Sum of [`pair_error`] over every filter.
pub fn set_error(set: &OrthogonalSet, mode: CrossTermMode) -> Result<f64> {
    (0..set.len()).map(|i| pair_error(set, i, mode)).sum()
}

fn condition_estimate(gram: &DMatrix<Complex64>) -> f64 {
    let eig = gram.clone().symmetric_eigen();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in eig.eigenvalues.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Minimum-error taps for code `i` with the response at the mainlobe center
/// pinned to `L`.
pub fn solve_filter_taps(
    codes: &[&[Complex64]],
    i: usize,
    filter_len: usize,
    mainlobe: MainlobeGeometry,
    opts: &SolverOptions,
) -> Result<Vec<Complex64>> {
    let mut gram = sidelobe_gram(codes, i, filter_len, mainlobe, opts.cross_terms)?;
    let trace: f64 = (0..filter_len).map(|d| gram[(d, d)].re).sum();
    let delta = opts.ridge * trace / filter_len as f64;
    for d in 0..filter_len {
        gram[(d, d)].re += delta;
    }

    let x = build_convolution_matrix(codes[i], filter_len)?;
    // Conjugated center row; the constraint is row . h = L.
    let rhs = DVector::from_iterator(
        filter_len,
        x.row(mainlobe.center).into_iter().map(|v| v.conj()),
    );

    let chol = match gram.clone().cholesky() {
        Some(c) => c,
        None => {
            return Err(Error::Singular {
                condition: condition_estimate(&gram),
            })
        }
    };
    let z = chol.solve(&rhs);
    let denom = rhs.dotc(&z);
    if !(denom.re > 0.0) || !denom.re.is_finite() {
        return Err(Error::Singular {
            condition: condition_estimate(&gram),
        });
    }
    let scale = opts.gain.value() / denom.re;
    Ok(z.iter().map(|&v| v * scale).collect())
}

pub fn solve_isl_filter(
    codes: &[PolyphaseCode],
    i: usize,
    filter_len: usize,
    mainlobe: MainlobeGeometry,
    opts: &SolverOptions,
) -> Result<MismatchedFilter> {
    let slices: Vec<&[Complex64]> = codes.iter().map(|c| c.samples()).collect();
    let taps = solve_filter_taps(&slices, i, filter_len, mainlobe, opts)?;
    MismatchedFilter::new(taps, mainlobe, codes[i].len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{convolve_at, CodeFilterPair};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_code(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
            .collect()
    }

    fn random_taps(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    /// Direct sum of sidelobe and cross-talk powers.
    fn brute_error(codes: &[&[Complex64]], i: usize, h: &[Complex64], ml: MainlobeGeometry) -> f64 {
        let mut e = 0.0;
        for (j, code) in codes.iter().enumerate() {
            for (r, y) in convolve(code, h).iter().enumerate() {
                if j == i && ml.contains(r) {
                    continue;
                }
                e += y.norm_sqr();
            }
        }
        e
    }

    #[test]
    fn convolution_matrix_examples() {
        let one = c(1.0, 0.0);
        let m = build_convolution_matrix(&[one, one], 2).unwrap().to_dense();
        let expected = DMatrix::from_row_slice(
            3,
            2,
            &[one, c(0.0, 0.0), one, one, c(0.0, 0.0), one],
        );
        assert_eq!(m, expected);

        let (a, b, cc) = (c(1.0, 2.0), c(-3.0, 0.5), c(0.0, -1.0));
        let m = build_convolution_matrix(&[a, b, cc], 3).unwrap().to_dense();
        assert_eq!((m.nrows(), m.ncols()), (5, 3));
        assert_eq!(m.column(0).iter().cloned().collect::<Vec<_>>(), vec![a, b, cc, c(0.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(m[(4, 2)], cc);

        let code = vec![one; 40];
        let m = build_convolution_matrix(&code, 480).unwrap();
        assert_eq!((m.rows(), m.cols()), (519, 480));
        assert!(matches!(
            build_convolution_matrix(&code, 39),
            Err(Error::FilterTooShort { .. })
        ));
    }

    #[test]
    fn matrix_product_is_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let code = random_code(&mut rng, 6);
        let h = random_taps(&mut rng, 11);
        let x = build_convolution_matrix(&code, 11).unwrap();
        let dense = x.to_dense() * DVector::from_column_slice(&h);
        let direct = x.apply(&h).unwrap();
        for (u, v) in dense.iter().zip(&direct) {
            assert!((u - v).norm() < 1e-12);
        }
        let sl = x.without_mainlobe(MainlobeGeometry { center: 8, width: 3 }).unwrap();
        assert_eq!(sl.rows(), 16 - 3);
        assert_eq!(sl.to_dense().nrows(), 13);
    }

    #[test]
    fn gram_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let codes = [random_code(&mut rng, 5), random_code(&mut rng, 5)];
        let slices: Vec<&[Complex64]> = codes.iter().map(|c| c.as_slice()).collect();
        let ml = MainlobeGeometry::centered(5, 9, 3).unwrap();
        let g = sidelobe_gram(&slices, 0, 9, ml, CrossTermMode::Full).unwrap();
        let own = build_convolution_matrix(&codes[0], 9).unwrap().without_mainlobe(ml).unwrap().to_dense();
        let other = build_convolution_matrix(&codes[1], 9).unwrap().to_dense();
        let expected = own.adjoint() * &own + other.adjoint() * &other;
        assert!((g - expected).norm() < 1e-12);
    }

    #[test]
    fn zero_filter_has_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let codes = [random_code(&mut rng, 4), random_code(&mut rng, 4)];
        let slices: Vec<&[Complex64]> = codes.iter().map(|c| c.as_slice()).collect();
        let ml = MainlobeGeometry::centered(4, 8, 3).unwrap();
        let e = filter_error(&slices, 0, &vec![c(0.0, 0.0); 8], ml, CrossTermMode::Full).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn single_sample_mainlobe_leaves_no_sidelobes() {
        let one = [c(1.0, 0.0)];
        let ml = MainlobeGeometry { center: 0, width: 1 };
        let e = filter_error(&[&one], 0, &[c(0.7, -0.2)], ml, CrossTermMode::Full).unwrap();
        assert_eq!(e, 0.0);
        // Nothing left to minimise: the Gram matrix is identically zero.
        let opts = SolverOptions::new(GainScale::new(1.0).unwrap());
        assert!(matches!(
            solve_filter_taps(&[&one], 0, 1, ml, &opts),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn error_matches_direct_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let one = c(1.0, 0.0);
        let codes = [vec![one, one]];
        let slices: Vec<&[Complex64]> = codes.iter().map(|c| c.as_slice()).collect();
        let ml = MainlobeGeometry::centered(2, 4, 1).unwrap();
        let h = random_taps(&mut rng, 4);
        let e = filter_error(&slices, 0, &h, ml, CrossTermMode::Full).unwrap();
        assert!((e - brute_error(&slices, 0, &h, ml)).abs() < 1e-12);

        for trial in 0..10 {
            let codes = [random_code(&mut rng, 7), random_code(&mut rng, 7), random_code(&mut rng, 7)];
            let slices: Vec<&[Complex64]> = codes.iter().map(|c| c.as_slice()).collect();
            let ml = MainlobeGeometry::centered(7, 19, 5).unwrap();
            let h = random_taps(&mut rng, 19);
            let i = trial % 3;
            let e = filter_error(&slices, i, &h, ml, CrossTermMode::Full).unwrap();
            let b = brute_error(&slices, i, &h, ml);
            assert!((e - b).abs() <= 1e-11 * b, "{e} vs {b}");
        }
    }

    #[test]
    fn mainlobe_deleted_mode_exempts_cross_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let codes = [random_code(&mut rng, 6), random_code(&mut rng, 6)];
        let slices: Vec<&[Complex64]> = codes.iter().map(|c| c.as_slice()).collect();
        let ml = MainlobeGeometry::centered(6, 12, 3).unwrap();
        let h = random_taps(&mut rng, 12);
        let full = filter_error(&slices, 0, &h, ml, CrossTermMode::Full).unwrap();
        let del = filter_error(&slices, 0, &h, ml, CrossTermMode::MainlobeDeleted).unwrap();
        let cross = convolve(&codes[1], &h);
        let window: f64 = ml.rows().map(|r| cross[r].norm_sqr()).sum();
        assert!((full - del - window).abs() < 1e-10);
    }

    #[test]
    fn two_tap_code_solution_is_kkt_optimal() {
        let one = c(1.0, 0.0);
        let code = [one, one];
        let ml = MainlobeGeometry::centered(2, 2, 1).unwrap();
        assert_eq!(ml.center, 1);
        let mut opts = SolverOptions::new(GainScale::new(2.0).unwrap());
        opts.ridge = 0.0;
        let h = solve_filter_taps(&[&code], 0, 2, ml, &opts).unwrap();
        assert!((convolve_at(&code, &h, 1) - c(2.0, 0.0)).norm() < 1e-12);
        // Symmetric problem: the matched filter [1, 1] is the optimum.
        assert!((h[0] - one).norm() < 1e-12 && (h[1] - one).norm() < 1e-12);
        let e0 = filter_error(&[&code], 0, &h, ml, CrossTermMode::Full).unwrap();
        // Gain-preserving direction for row [1, 1]: d = [t, -t].
        for t in [c(1e-3, 0.0), c(0.0, 0.2), c(-0.5, 0.5)] {
            let hp = [h[0] + t, h[1] - t];
            let e = filter_error(&[&code], 0, &hp, ml, CrossTermMode::Full).unwrap();
            assert!(e > e0);
        }
    }

    #[test]
    fn solved_filter_hits_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let codes: Vec<PolyphaseCode> = (0..2)
            .map(|_| PolyphaseCode::new(random_code(&mut rng, 8), 1.0).unwrap())
            .collect();
        let ml = MainlobeGeometry::centered(8, 32, 5).unwrap();
        let opts = SolverOptions::new(GainScale::code_energy(8));
        for i in 0..2 {
            let f = solve_isl_filter(&codes, i, 32, ml, &opts).unwrap();
            let pair = CodeFilterPair::new(codes[i].clone(), f).unwrap();
            assert!((pair.mainlobe_gain - c(8.0, 0.0)).norm() <= 1e-9 * 8.0);
        }
    }

    #[test]
    fn phase_rotation_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let codes: Vec<PolyphaseCode> = (0..2)
            .map(|_| PolyphaseCode::new(random_code(&mut rng, 8), 1.0).unwrap())
            .collect();
        let ml = MainlobeGeometry::centered(8, 24, 5).unwrap();
        let opts = SolverOptions::new(GainScale::code_energy(8));
        let phi = 1.234;
        let mut rotated = codes.clone();
        rotated[0] = codes[0].rotated(phi);
        let f = solve_isl_filter(&codes, 0, 24, ml, &opts).unwrap();
        let fr = solve_isl_filter(&rotated, 0, 24, ml, &opts).unwrap();
        let expected = f.scaled(Complex64::from_polar(1.0, -phi));
        let norm: f64 = f.energy().sqrt();
        let diff: f64 = expected
            .coefficients
            .iter()
            .zip(&fr.coefficients)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-10 * norm);
        let s: Vec<&[Complex64]> = codes.iter().map(|c| c.samples()).collect();
        let sr: Vec<&[Complex64]> = rotated.iter().map(|c| c.samples()).collect();
        let e = filter_error(&s, 0, &f.coefficients, ml, CrossTermMode::Full).unwrap();
        let er = filter_error(&sr, 0, &fr.coefficients, ml, CrossTermMode::Full).unwrap();
        assert!((e - er).abs() <= 1e-10 * e);
    }

    #[test]
    fn dimension_errors() {
        let one = c(1.0, 0.0);
        let a = [one, one, one];
        let b = [one, one];
        let ml = MainlobeGeometry { center: 2, width: 1 };
        assert!(matches!(
            filter_error(&[&a, &b], 0, &[one; 4], ml, CrossTermMode::Full),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            filter_error(&[&a], 3, &[one; 4], ml, CrossTermMode::Full),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(GainScale::new(0.0).is_err());
    }
}
