//! `synth`, `analyze` and `simulate` pipelines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use orthocode::ambiguity::{
    ambiguity, default_delays, doppler_axis, power_db, set_metrics, zero_doppler_cut, SetMetrics,
    DB_FLOOR,
};
use orthocode::optimizer::{quantize, scatter_multistart, OptimizationTrace, PhaseVector};
use orthocode::trip::{gate_spacing, noise_floor, run, SimResult, VelocityEstimator};
use orthocode::waveform::{check_constraints, ConstraintReport, ConstraintTolerance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{config_hash, SynthConfig};
use crate::error::{CliError, Result};
use crate::format::{Generator, Quantization, WaveformFile};
use crate::scene::{mean_db, ModeSelection, SceneConfig};

/// PSL target reported by `analyze` unless overridden.
pub const DEFAULT_PSL_TARGET_DB: f64 = -60.0;
/// Cross-ambiguity target reported by `analyze`.
pub const DEFAULT_CROSS_TARGET_DB: f64 = -40.0;
/// Sidelobe level quoted for the original design; reported, never enforced.
pub const PSL_ASPIRATION_DB: f64 = -150.0;

/// Write `contents` to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Debug, Clone, Default)]
pub struct SynthOverrides {
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub waveform: WaveformFile,
    pub trace: OptimizationTrace,
    pub files: Vec<PathBuf>,
}

/// Run the multistart synthesis described by `config` and write the waveform
/// file to `out`, with `<stem>.trace.csv` and `<stem>.restarts.csv` beside it.
pub fn cmd_synth(config: &SynthConfig, out: &Path, overrides: &SynthOverrides) -> Result<SynthOutcome> {
    let mut config = config.clone();
    if let Some(s) = overrides.seed {
        config.optimizer.seed = s;
    }
    if let Some(r) = overrides.restarts {
        config.optimizer.restarts = r;
    }
    let opt = config.optimizer_config()?;
    let (mut set, mut phases, trace) = scatter_multistart(&opt)?;

    let mut quantization = None;
    if let Some(levels) = config.quantize_levels {
        let (q, degradation_db) = quantize(&set, levels, &opt)?;
        phases = PhaseVector::from_codes(&q.codes())?;
        set = q;
        quantization = Some(Quantization { levels, degradation_db });
    }

    let report = check_constraints(&set, ConstraintTolerance::balance(opt.balance_tol));
    if !report.passed() {
        return Err(CliError::Constraint(report.failures.join("; ")));
    }

    let generator = Generator {
        config_hash: config_hash(&opt),
        seed: opt.rng_seed,
        restarts: opt.restarts,
        incumbent_restart: trace.incumbent_restart,
    };
    let waveform = WaveformFile::from_set(
        &set,
        &phases,
        opt.gain.value(),
        opt.balance_tol,
        generator,
        quantization,
    );

    let mut trace_csv = String::from("iteration,isl_error\n");
    for (i, e) in trace.errors.iter().enumerate() {
        writeln!(trace_csv, "{i},{e}").unwrap();
    }
    let mut restarts_csv = String::from("restart,isl_error,iterations,constraints_ok\n");
    for r in &trace.restarts {
        writeln!(
            restarts_csv,
            "{},{},{},{}",
            r.restart, r.isl_error, r.iterations, r.constraints_ok
        )
        .unwrap();
    }

    let trace_path = sibling(out, "trace.csv");
    let restarts_path = sibling(out, "restarts.csv");
    write_atomic(out, waveform.to_json().as_bytes())?;
    write_atomic(&trace_path, trace_csv.as_bytes())?;
    write_atomic(&restarts_path, restarts_csv.as_bytes())?;
    Ok(SynthOutcome {
        waveform,
        trace,
        files: vec![out.to_path_buf(), trace_path, restarts_path],
    })
}

pub fn load_waveform(path: &Path) -> Result<WaveformFile> {
    WaveformFile::parse(&read(path)?)
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub doppler_span: f64,
    pub doppler_points: usize,
    pub psl_target_db: f64,
    pub cross_target_db: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            doppler_span: 0.05,
            doppler_points: 64,
            psl_target_db: DEFAULT_PSL_TARGET_DB,
            cross_target_db: DEFAULT_CROSS_TARGET_DB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub code_length: usize,
    pub filter_length: usize,
    pub num_codes: usize,
    pub mainlobe_center: usize,
    pub mainlobe_width: usize,
    pub isl_error: f64,
    pub metrics: SetMetrics,
    pub constraints: ConstraintReport,
    pub psl_target_db: f64,
    pub meets_psl_target: bool,
    pub cross_target_db: f64,
    pub meets_cross_target: bool,
    pub psl_aspiration_db: f64,
    pub meets_psl_aspiration: bool,
}

/// Ambiguity grids, zero-Doppler cuts, cross peaks and a metrics report.
pub fn cmd_analyze(waveform: &WaveformFile, out_dir: &Path, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    if opts.doppler_points == 0 || !(opts.doppler_span >= 0.0) {
        return Err(CliError::Config("Doppler axis needs points > 0 and span >= 0".into()));
    }
    let set = waveform.to_set()?;
    let dopplers = doppler_axis(opts.doppler_span, opts.doppler_points);
    let delays = default_delays(set.code_len(), set.filter_len());
    let ml = set.mainlobe();

    for (i, pair) in set.pairs.iter().enumerate() {
        let mut cut = String::from("output_index,delay_samples,magnitude_db\n");
        for (idx, v) in zero_doppler_cut(pair).iter().enumerate() {
            writeln!(cut, "{idx},{},{v}", idx as isize - ml.center as isize).unwrap();
        }
        write_atomic(&out_dir.join(format!("zero_doppler_{i}.csv")), cut.as_bytes())?;

        let grid = ambiguity(&pair.code, &pair.filter, &delays, &dopplers);
        let mut csv = String::from("delay_samples,doppler_normalized,magnitude_db\n");
        for (d, fd) in grid.doppler_axis.iter().enumerate() {
            for (tau, v) in grid.delay_axis.iter().zip(grid.row(d)) {
                writeln!(csv, "{tau},{fd},{v}").unwrap();
            }
        }
        write_atomic(&out_dir.join(format!("ambiguity_{i}.csv")), csv.as_bytes())?;
    }

    let metrics = set_metrics(&set, &dopplers);
    let mut cross = String::from("code,filter,peak_db\n");
    for (j, row) in metrics.cross_peaks_db.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            if i != j {
                writeln!(cross, "{i},{j},{v}").unwrap();
            }
        }
    }
    write_atomic(&out_dir.join("cross_peaks.csv"), cross.as_bytes())?;

    let balance_tol = ConstraintTolerance::balance(waveform.balance_tol);
    let report = AnalysisReport {
        code_length: set.code_len(),
        filter_length: set.filter_len(),
        num_codes: set.len(),
        mainlobe_center: ml.center,
        mainlobe_width: ml.width,
        isl_error: set.isl_error,
        constraints: check_constraints(&set, balance_tol),
        psl_target_db: opts.psl_target_db,
        meets_psl_target: metrics.worst_psl_db <= opts.psl_target_db,
        cross_target_db: opts.cross_target_db,
        meets_cross_target: metrics.worst_cross_db <= opts.cross_target_db,
        psl_aspiration_db: PSL_ASPIRATION_DB,
        meets_psl_aspiration: metrics.worst_psl_db <= PSL_ASPIRATION_DB,
        metrics,
    };
    write_atomic(&out_dir.join("report.json"), json(&report).as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOverrides {
    pub pulses: Option<usize>,
    pub mode: Option<ModeSelection>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub pulses: usize,
    pub modes: ModeSelection,
    pub estimator: VelocityEstimator,
    pub seed: u64,
    pub gates: usize,
    pub gate_spacing_m: f64,
    pub noise_power: f64,
    /// Expected filtered noise in coded mode, averaged over the filters.
    pub noise_floor_db: f64,
    pub noise_floor_uncoded_db: f64,
    pub second_trip_power_db: f64,
    pub second_trip_gates: [usize; 2],
    /// Mean over second-trip gates of the per-gate dB difference.
    pub suppression_db: Option<f64>,
    /// Difference of the gate-averaged linear powers, in dB.
    pub suppression_mean_power_db: Option<f64>,
    pub residual_gates: Option<[usize; 2]>,
    pub residual_coded_db: Option<f64>,
    pub residual_uncoded_db: Option<f64>,
    pub residual_above_noise_db: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Coded and/or uncoded runs of `scene` with shared noise.
pub fn cmd_simulate(
    waveform: &WaveformFile,
    scene: &SceneConfig,
    out_dir: &Path,
    overrides: &SimulateOverrides,
) -> Result<(SimulationSummary, SimResult)> {
    let set = waveform.to_set()?;
    let pulses = overrides.pulses.unwrap_or(scene.pulses);
    let mode = overrides.mode.unwrap_or(scene.mode);
    let resolved = scene.resolve(&set)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(scene.seed);
    noise_rng.set_stream(1);
    let result = run(&resolved.scene, &set, pulses, &mode.modes(), &mut noise_rng, scene.estimator)?;

    let spacing = gate_spacing(set.sample_period());
    let coded = result.coded.as_ref();
    let uncoded = result.uncoded.as_ref();

    let mut profile = String::from(
        "gate,range_m,power_db_coded,power_db_uncoded,velocity_mps_coded,velocity_mps_uncoded\n",
    );
    for g in 0..scene.gates {
        writeln!(
            profile,
            "{g},{},{},{},{},{}",
            g as f64 * spacing,
            fmt_opt(coded.map(|r| r.power_db[g])),
            fmt_opt(uncoded.map(|r| r.power_db[g])),
            fmt_opt(coded.map(|r| r.velocity[g])),
            fmt_opt(uncoded.map(|r| r.velocity[g])),
        )
        .unwrap();
    }
    write_atomic(&out_dir.join("profile.csv"), profile.as_bytes())?;

    let mut spectra = String::from("gate,bin,velocity_mps,power_db_coded,power_db_uncoded\n");
    for g in 0..scene.gates {
        for (b, v) in result.velocity_axis.iter().enumerate() {
            writeln!(
                spectra,
                "{g},{b},{v},{},{}",
                fmt_opt(coded.map(|r| power_db(r.spectra[g][b]))),
                fmt_opt(uncoded.map(|r| power_db(r.spectra[g][b]))),
            )
            .unwrap();
        }
    }
    write_atomic(&out_dir.join("spectra.csv"), spectra.as_bytes())?;

    let residual = &resolved.residual_gates;
    // coded pulses cycle through every filter, uncoded ones use filter 0
    let noise = resolved.scene.noise_power;
    let coded_floor = set.pairs.iter().map(|p| noise_floor(noise, p)).sum::<f64>() / set.len() as f64;
    let (noise_floor_db, noise_floor_uncoded_db) = if noise > 0.0 {
        (power_db(coded_floor), power_db(noise_floor(noise, &set.pairs[0])))
    } else {
        (DB_FLOOR, DB_FLOOR)
    };
    let second = &result.second_trip_gates;
    let suppression_mean_power_db = match (coded, uncoded) {
        (Some(c), Some(u)) if !second.is_empty() => Some(mean_db(&u.power_db, second) - mean_db(&c.power_db, second)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    let residual_coded_db = (!residual.is_empty()).then(|| coded.map(|r| mean_db(&r.power_db, residual))).flatten();
    let residual_uncoded_db =
        (!residual.is_empty()).then(|| uncoded.map(|r| mean_db(&r.power_db, residual))).flatten();
    let summary = SimulationSummary {
        pulses,
        modes: mode,
        estimator: scene.estimator,
        seed: scene.seed,
        gates: scene.gates,
        gate_spacing_m: spacing,
        noise_power: resolved.scene.noise_power,
        noise_floor_db,
        noise_floor_uncoded_db,
        second_trip_power_db: power_db(resolved.second_trip_power),
        second_trip_gates: [
            second.first().copied().unwrap_or(0),
            second.last().map_or(0, |g| g + 1),
        ],
        suppression_db: result.suppression_db,
        suppression_mean_power_db,
        residual_gates: residual.first().map(|&a| [a, residual[residual.len() - 1] + 1]),
        residual_coded_db,
        residual_uncoded_db,
        residual_above_noise_db: residual_coded_db.map(|r| r - noise_floor_db),
    };
    write_atomic(&out_dir.join("summary.json"), json(&summary).as_bytes())?;
    Ok((summary, result))
}
