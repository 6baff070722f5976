//! Versioned JSON waveform file.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every phase and tap bit for bit.

use num_complex::Complex64;
use orthocode::ambiguity::{set_metrics, default_dopplers, SetMetrics};
use orthocode::optimizer::PhaseVector;
use orthocode::waveform::{
    check_constraints, CodeFilterPair, ConstraintReport, ConstraintTolerance, MainlobeGeometry,
    MismatchedFilter, OrthogonalSet, PolyphaseCode,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT_NAME: &str = "orthocode-waveform";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    /// Radians in `[0, 2 pi)`.
    pub phases: Vec<f64>,
    pub filter_re: Vec<f64>,
    pub filter_im: Vec<f64>,
    /// `[re, im]`.
    pub mainlobe_gain: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quantization {
    pub levels: usize,
    pub degradation_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub config_hash: String,
    pub seed: u64,
    pub restarts: usize,
    pub incumbent_restart: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub metrics: SetMetrics,
    pub constraints: ConstraintReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformFile {
    pub format: String,
    pub version: u32,
    pub code_length: usize,
    pub filter_length: usize,
    pub num_codes: usize,
    pub mainlobe: MainlobeGeometry,
    pub sample_period: f64,
    pub gain_level: f64,
    /// Gain and phase balance tolerance the set was checked against.
    pub balance_tol: f64,
    pub isl_error: f64,
    pub pairs: Vec<PairRecord>,
    pub quantization: Option<Quantization>,
    pub generator: Generator,
    pub snapshot: Snapshot,
}

impl WaveformFile {
    pub fn from_set(
        set: &OrthogonalSet,
        phases: &PhaseVector,
        gain_level: f64,
        balance_tol: f64,
        generator: Generator,
        quantization: Option<Quantization>,
    ) -> Self {
        let pairs = set
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| PairRecord {
                phases: phases.code_phases(i).to_vec(),
                filter_re: p.filter.coefficients.iter().map(|c| c.re).collect(),
                filter_im: p.filter.coefficients.iter().map(|c| c.im).collect(),
                mainlobe_gain: [p.mainlobe_gain.re, p.mainlobe_gain.im],
            })
            .collect();
        Self {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            code_length: set.code_len(),
            filter_length: set.filter_len(),
            num_codes: set.len(),
            mainlobe: set.mainlobe(),
            sample_period: set.sample_period(),
            gain_level,
            balance_tol,
            isl_error: set.isl_error,
            pairs,
            quantization,
            generator,
            snapshot: Snapshot {
                metrics: set_metrics(set, &default_dopplers()),
                constraints: check_constraints(set, ConstraintTolerance::balance(balance_tol)),
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("waveform file serialises");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let f: WaveformFile = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("waveform file: {e}")))?;
        if f.format != FORMAT_NAME {
            return Err(CliError::Config(format!("not a waveform file (format {:?})", f.format)));
        }
        if f.version != FORMAT_VERSION {
            return Err(CliError::Config(format!(
                "unsupported waveform file version {} (expected {FORMAT_VERSION})",
                f.version
            )));
        }
        if f.pairs.len() != f.num_codes {
            return Err(CliError::Config(format!(
                "num_codes {} but {} pairs stored",
                f.num_codes,
                f.pairs.len()
            )));
        }
        Ok(f)
    }

    /// Phases as stored, code-major.
    pub fn phases(&self) -> Result<PhaseVector> {
        let all = self.pairs.iter().flat_map(|p| p.phases.iter().copied()).collect();
        Ok(PhaseVector::new(all, self.code_length)?)
    }

    /// Rebuild the set. Stored mainlobe gains must match the recomputed ones.
    pub fn to_set(&self) -> Result<OrthogonalSet> {
        let mut pairs = Vec::with_capacity(self.pairs.len());
        for (i, rec) in self.pairs.iter().enumerate() {
            if rec.phases.len() != self.code_length
                || rec.filter_re.len() != self.filter_length
                || rec.filter_im.len() != self.filter_length
            {
                return Err(CliError::Config(format!("pair {i} has inconsistent lengths")));
            }
            let code = PolyphaseCode::from_phases(&rec.phases, self.sample_period)?;
            let taps = rec
                .filter_re
                .iter()
                .zip(&rec.filter_im)
                .map(|(&re, &im)| Complex64::new(re, im))
                .collect();
            let filter = MismatchedFilter::new(taps, self.mainlobe, self.code_length)?;
            let pair = CodeFilterPair::new(code, filter)?;
            let stored = Complex64::new(rec.mainlobe_gain[0], rec.mainlobe_gain[1]);
            if (pair.mainlobe_gain - stored).norm() > 1e-9 * stored.norm().max(1.0) {
                return Err(CliError::Config(format!(
                    "pair {i}: stored mainlobe gain {stored} disagrees with taps ({})",
                    pair.mainlobe_gain
                )));
            }
            pairs.push(pair);
        }
        Ok(OrthogonalSet::new(pairs, self.isl_error)?)
    }
}
