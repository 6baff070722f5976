use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use orthocode_cli::commands::{
    cmd_analyze, cmd_simulate, cmd_synth, load_waveform, AnalyzeOptions, SimulateOverrides,
    SynthOverrides,
};
use orthocode_cli::config::SynthConfig;
use orthocode_cli::scene::{ModeSelection, SceneConfig};
use orthocode_cli::{CliError, Result};

/// Orthogonal polyphase code sets with mismatched filters.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Coded,
    Uncoded,
    Both,
}

impl From<ModeArg> for ModeSelection {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Coded => ModeSelection::Coded,
            ModeArg::Uncoded => ModeSelection::Uncoded,
            ModeArg::Both => ModeSelection::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a code/filter set.
    Synth {
        /// Synthesis TOML; built-in headline settings when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Waveform file to write. Defaults to `$ORTHOCODE_OUT_DIR/waveform.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Ambiguity grids, zero-Doppler cuts and sidelobe metrics.
    Analyze {
        #[arg(long)]
        waveform: PathBuf,
        #[arg(long, env = "ORTHOCODE_OUT_DIR")]
        out_dir: PathBuf,
        /// Largest normalised Doppler `fd * Ts`; the axis covers `[-span, span]`.
        #[arg(long, default_value_t = 0.05)]
        doppler_span: f64,
        #[arg(long, default_value_t = 64)]
        doppler_points: usize,
        #[arg(long, default_value_t = orthocode_cli::commands::DEFAULT_PSL_TARGET_DB, allow_negative_numbers = true)]
        psl_target: f64,
    },
    /// Two-trip pulse-train simulation.
    Simulate {
        #[arg(long)]
        waveform: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, env = "ORTHOCODE_OUT_DIR")]
        out_dir: PathBuf,
        #[arg(long)]
        pulses: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
}

fn default_out() -> Result<PathBuf> {
    std::env::var_os("ORTHOCODE_OUT_DIR")
        .map(|d| PathBuf::from(d).join("waveform.json"))
        .ok_or_else(|| CliError::Config("--out not given and ORTHOCODE_OUT_DIR unset".into()))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out, seed, restarts } => {
            let cfg = match config {
                Some(p) => SynthConfig::parse(
                    &std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?,
                )?,
                None => SynthConfig::default(),
            };
            let out = match out {
                Some(o) => o,
                None => default_out()?,
            };
            let outcome = cmd_synth(&cfg, &out, &SynthOverrides { seed, restarts })?;
            let m = &outcome.waveform.snapshot.metrics;
            println!(
                "isl_error {:.6} | worst PSL {:.2} dB | worst cross {:.2} dB | restart {} of {} | {:.1} s",
                outcome.waveform.isl_error,
                m.worst_psl_db,
                m.worst_cross_db,
                outcome.trace.incumbent_restart,
                outcome.trace.restarts.len(),
                outcome.trace.wall_time.as_secs_f64()
            );
            for f in outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Analyze { waveform, out_dir, doppler_span, doppler_points, psl_target } => {
            let wf = load_waveform(&waveform)?;
            let opts = AnalyzeOptions {
                doppler_span,
                doppler_points,
                psl_target_db: psl_target,
                ..AnalyzeOptions::default()
            };
            let r = cmd_analyze(&wf, &out_dir, &opts)?;
            println!(
                "worst PSL {:.2} dB (target {} dB: {}) | worst cross {:.2} dB | aspiration {} dB: {}",
                r.metrics.worst_psl_db,
                r.psl_target_db,
                if r.meets_psl_target { "met" } else { "missed" },
                r.metrics.worst_cross_db,
                r.psl_aspiration_db,
                if r.meets_psl_aspiration { "met" } else { "missed" },
            );
        }
        Command::Simulate { waveform, scene, out_dir, pulses, mode } => {
            let wf = load_waveform(&waveform)?;
            let sc = SceneConfig::parse(
                &std::fs::read_to_string(&scene).map_err(|e| CliError::io(&scene, e))?,
            )?;
            let overrides = SimulateOverrides { pulses, mode: mode.map(Into::into) };
            let (s, _) = cmd_simulate(&wf, &sc, &out_dir, &overrides)?;
            match s.suppression_db {
                Some(v) => println!("second-trip suppression {v:.2} dB"),
                None => println!("single mode run, no suppression figure"),
            }
            if let Some(r) = s.residual_above_noise_db {
                println!("coded residual {r:+.2} dB re noise floor");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
