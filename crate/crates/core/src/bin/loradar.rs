use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use loradar::comms::BaselineAlphabet;
use loradar::harness::{
    emit_results, emit_trace, format_snr, run_experiment, ExperimentConfig, Scheme, DEFAULT_COMM_TRIALS,
    DEFAULT_SENSING_TRIALS,
};
use loradar::{Preset, WaveformParams};

#[derive(Parser)]
#[command(name = "loradar", version, about = "Monte-Carlo experiments for the LoRa-FMCW radar waveform")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Range, velocity and angle estimation.
    Sense(SenseArgs),
    /// Symbol demodulation.
    Comm(CommArgs),
}

#[derive(Args)]
struct Common {
    /// Waveform parameter file (TOML); overrides --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in parameter set.
    #[arg(long, default_value = "paper-1ghz")]
    preset: String,
    #[arg(long)]
    scheme: Option<String>,
    /// Comma-separated SNR grid in dB; `inf` runs noiseless.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<String>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Results CSV; the configuration goes to a .toml file beside it.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Also write per-trial records as JSON lines to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SenseArgs {
    #[command(flatten)]
    common: Common,
    /// Targets per scene.
    #[arg(long, default_value_t = 6)]
    targets: usize,
    /// Sampling rate of the uniform-dft baseline (Hz).
    #[arg(long, default_value_t = loradar::harness::DEFAULT_BASELINE_RATE_HZ)]
    baseline_rate: f64,
    /// Draw a new AIC index set for every symbol.
    #[arg(long)]
    per_symbol_sampling: bool,
    /// Skip phase compensation before velocity estimation.
    #[arg(long)]
    no_phase_compensation: bool,
}

#[derive(Args)]
struct CommArgs {
    #[command(flatten)]
    common: Common,
    /// Reference the SNR to the sweep bandwidth instead of the sample rate.
    #[arg(long)]
    in_band_noise: bool,
    /// Let the LoRa baseline decide over the full alphabet.
    #[arg(long)]
    full_alphabet: bool,
}

fn parse_snr(values: &[String]) -> anyhow::Result<Vec<f64>> {
    values
        .iter()
        .map(|v| match v.trim() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            s => s.parse::<f64>().with_context(|| format!("invalid SNR value `{s}`")),
        })
        .collect()
}

fn load_params(common: &Common) -> anyhow::Result<WaveformParams> {
    let mut params = match &common.config {
        Some(path) => WaveformParams::load(path)?,
        None => common.preset.parse::<Preset>()?.params(),
    };
    if let Some(seed) = common.seed {
        params.seed = seed;
    }
    Ok(params)
}

fn finish(cfg: ExperimentConfig, common: &Common) -> anyhow::Result<()> {
    let record = run_experiment(&cfg)?;
    emit_results(&record, &common.out)?;
    if let Some(trace) = &common.trace {
        emit_trace(&record, trace)?;
    }
    for p in &record.points {
        let snr = format_snr(p.snr_db);
        match (p.hit_rate, p.ser) {
            (Some(h), _) => println!(
                "{} snr={snr} dB hit_rate={h:.4} median range/velocity/angle error = {:.4} m / {:.4} m/s / {:.4} deg",
                cfg.scheme,
                p.median_range_error().unwrap_or(f64::NAN),
                p.median_velocity_error().unwrap_or(f64::NAN),
                p.median_angle_error().unwrap_or(f64::NAN).to_degrees()
            ),
            (_, Some(s)) => println!(
                "{} snr={snr} dB ser={s:.4} bits/symbol={} rate={:.3} Mbit/s",
                cfg.scheme,
                p.effective_bits.unwrap_or(0),
                p.comm_rate.unwrap_or(0.0) / 1e6
            ),
            _ => {}
        }
    }
    println!("wrote {}", common.out.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Sense(args) => {
            let c = &args.common;
            let scheme: Scheme = c.scheme.as_deref().unwrap_or("cs").parse()?;
            if scheme == Scheme::LoraBaseline {
                bail!("scheme lora-baseline applies to `comm` only");
            }
            let params = load_params(c)?;
            let mut cfg = ExperimentConfig::sensing(scheme, params);
            cfg.snr_db = match &c.snr {
                Some(v) => parse_snr(v)?,
                None => vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            };
            cfg.trials = c.trials.unwrap_or(DEFAULT_SENSING_TRIALS);
            cfg.seed = cfg.params.seed;
            cfg.scene.targets = args.targets;
            cfg.sensing.baseline_rate_hz = args.baseline_rate;
            cfg.sensing.per_symbol_sampling = args.per_symbol_sampling;
            cfg.sensing.phase_compensation = !args.no_phase_compensation;
            cfg.record_trace = c.trace.is_some();
            finish(cfg, c)
        }
        Command::Comm(args) => {
            let c = &args.common;
            let scheme: Scheme = c.scheme.as_deref().unwrap_or("cs").parse()?;
            if scheme == Scheme::UniformDft {
                bail!("scheme uniform-dft applies to `sense` only");
            }
            let params = load_params(c)?;
            let mut cfg = ExperimentConfig::comms(scheme, params);
            cfg.snr_db = match &c.snr {
                Some(v) => parse_snr(v)?,
                None => vec![-20.0, -15.0, -10.0, -5.0, 0.0],
            };
            cfg.trials = c.trials.unwrap_or(DEFAULT_COMM_TRIALS);
            cfg.seed = cfg.params.seed;
            cfg.comms.in_band_noise = args.in_band_noise;
            if args.full_alphabet {
                cfg.comms.baseline_alphabet = BaselineAlphabet::Full;
            }
            cfg.record_trace = c.trace.is_some();
            finish(cfg, c)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
