//! Monte-Carlo experiments: sensing hit rates and error distributions, symbol
//! error rates, and result serialisation.

mod output;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{comm_rx_samples, generate_scene, synthesize_if, synthesize_if_on, CommLink, IfGrid, SceneSpec, Target};
use crate::comms::{build_downchirp, dechirp, BaselineAlphabet, CommReceiver, LoraBaseline};
use crate::config::{Setup, WaveformParams};
use crate::error::{Error, Result};
use crate::sampling::{draw_random_set, FrameSampling};
use crate::sensing::{baseline_sampling, baseline_uniform_dft, PhaseCompensation, SensingEstimate, SensingProcessor};
use crate::waveform::{generate_payload, generate_schedule, Payload, TdmSchedule};

pub use output::{emit_results, emit_trace, format_snr, read_csv_rows, MetricRow};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "LORADAR_WORKERS";

pub const DEFAULT_SENSING_TRIALS: usize = 200;
pub const DEFAULT_COMM_TRIALS: usize = 2000;
/// Average rate of the uniform sensing baseline (Hz).
pub const DEFAULT_BASELINE_RATE_HZ: f64 = 28.125e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Cs,
    UniformDft,
    LoraBaseline,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Cs => "cs",
            Scheme::UniformDft => "uniform-dft",
            Scheme::LoraBaseline => "lora-baseline",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cs" => Ok(Scheme::Cs),
            "uniform-dft" => Ok(Scheme::UniformDft),
            "lora-baseline" => Ok(Scheme::LoraBaseline),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Sensing,
    Comms,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Sensing => "sensing",
            Task::Comms => "comms",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingOptions {
    /// Rate of the uniform-DFT baseline sampler (Hz).
    pub baseline_rate_hz: f64,
    /// Draw a fresh AIC index set for every symbol instead of one per frame.
    pub per_symbol_sampling: bool,
    pub phase_compensation: bool,
}

impl Default for SensingOptions {
    fn default() -> Self {
        Self {
            baseline_rate_hz: DEFAULT_BASELINE_RATE_HZ,
            per_symbol_sampling: false,
            phase_compensation: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommOptions {
    /// Reference the SNR to the sweep bandwidth instead of the sample rate.
    pub in_band_noise: bool,
    pub baseline_alphabet: BaselineAlphabet,
}

impl Default for CommOptions {
    fn default() -> Self {
        Self {
            in_band_noise: false,
            baseline_alphabet: BaselineAlphabet::Reduced,
        }
    }
}

/// Everything that determines an experiment's output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub task: Task,
    /// SNR grid in dB; `inf` means noiseless.
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub params: WaveformParams,
    pub scene: SceneSpec,
    #[serde(default)]
    pub sensing: SensingOptions,
    #[serde(default)]
    pub comms: CommOptions,
    /// Keep per-trial (truth, estimate) records for a trace file.
    #[serde(default)]
    pub record_trace: bool,
}

impl ExperimentConfig {
    pub fn sensing(scheme: Scheme, params: WaveformParams) -> Self {
        Self {
            scheme,
            task: Task::Sensing,
            snr_db: vec![10.0],
            trials: DEFAULT_SENSING_TRIALS,
            seed: params.seed,
            params,
            scene: SceneSpec::default_six(),
            sensing: SensingOptions::default(),
            comms: CommOptions::default(),
            record_trace: false,
        }
    }

    pub fn comms(scheme: Scheme, params: WaveformParams) -> Self {
        Self {
            task: Task::Comms,
            trials: DEFAULT_COMM_TRIALS,
            ..Self::sensing(scheme, params)
        }
    }

    pub fn check(&self) -> Result<Setup> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least one".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("the SNR grid is empty".into()));
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::Config("SNR values must be numbers or inf".into()));
        }
        match (self.task, self.scheme) {
            (Task::Sensing, Scheme::LoraBaseline) => {
                return Err(Error::Config("lora-baseline is a communication scheme".into()))
            }
            (Task::Comms, Scheme::UniformDft) => {
                return Err(Error::Config("uniform-dft is a sensing scheme".into()))
            }
            _ => {}
        }
        if !(self.sensing.baseline_rate_hz > 0.0) {
            return Err(Error::NonPositive("baseline_rate_hz"));
        }
        Setup::new(self.params.clone())
    }
}

/// Results at one SNR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub trials: usize,
    pub hit_rate: Option<f64>,
    pub range_errors: Vec<f64>,
    pub velocity_errors: Vec<f64>,
    pub angle_errors: Vec<f64>,
    pub failed_trials: usize,
    pub ser: Option<f64>,
    pub effective_bits: Option<u32>,
    /// Bits per second, effective bits over the symbol period.
    pub comm_rate: Option<f64>,
}

impl SnrPoint {
    fn empty(snr_db: f64, trials: usize) -> Self {
        Self {
            snr_db,
            trials,
            hit_rate: None,
            range_errors: Vec::new(),
            velocity_errors: Vec::new(),
            angle_errors: Vec::new(),
            failed_trials: 0,
            ser: None,
            effective_bits: None,
            comm_rate: None,
        }
    }

    pub fn median_range_error(&self) -> Option<f64> {
        median(&self.range_errors)
    }

    pub fn median_velocity_error(&self) -> Option<f64> {
        median(&self.velocity_errors)
    }

    pub fn median_angle_error(&self) -> Option<f64> {
        median(&self.angle_errors)
    }
}

/// Median of a sample, `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// One target's truth and its matched estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetTrace {
    pub truth: Target,
    pub range: Option<f64>,
    pub velocity: Option<f64>,
    pub angle: Option<f64>,
    pub hit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub snr_db: f64,
    pub trial: usize,
    pub targets: Vec<TargetTrace>,
    /// Transmitted and decided symbol of a communication trial.
    pub symbol: Option<(usize, usize)>,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub config: ExperimentConfig,
    pub params_hash: String,
    pub points: Vec<SnrPoint>,
    pub traces: Vec<TrialTrace>,
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Independent generator for one trial; it depends only on the run seed and
/// the (SNR index, trial index) pair.
pub fn trial_rng(seed: u64, snr_index: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((snr_index as u64) << 32) | trial as u64);
    rng
}

fn snr_option(snr_db: f64) -> Option<f64> {
    snr_db.is_finite().then_some(snr_db)
}

fn run_trials<T, F>(trials: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..trials).into_par_iter().map(f).collect()))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsRecord> {
    run_experiment_with(cfg, worker_count())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, workers: usize) -> Result<MetricsRecord> {
    match cfg.task {
        Task::Sensing => run_sensing_experiment_with(cfg, workers),
        Task::Comms => run_comms_experiment_with(cfg, workers),
    }
}

pub fn run_sensing_experiment(cfg: &ExperimentConfig) -> Result<MetricsRecord> {
    run_sensing_experiment_with(cfg, worker_count())
}

struct SensingTrial {
    hits: usize,
    targets: usize,
    range_errors: Vec<f64>,
    velocity_errors: Vec<f64>,
    angle_errors: Vec<f64>,
    trace: TrialTrace,
}

/// Greedy nearest-range association: repeatedly pair the closest remaining
/// (truth, estimate) ranges. Returns the estimate index per truth.
pub fn match_by_range(truths: &[f64], estimates: &[f64]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(truths.len() * estimates.len());
    for (i, t) in truths.iter().enumerate() {
        for (j, e) in estimates.iter().enumerate() {
            pairs.push(((t - e).abs(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut truth_of = vec![None; truths.len()];
    let mut used = vec![false; estimates.len()];
    for (_, i, j) in pairs {
        if truth_of[i].is_none() && !used[j] {
            truth_of[i] = Some(j);
            used[j] = true;
        }
    }
    truth_of
}

/// Wrapped angular distance.
fn angle_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

fn score_sensing(
    targets: &[Target],
    estimate: Option<&SensingEstimate>,
    setup: &Setup,
    snr_db: f64,
    trial: usize,
) -> SensingTrial {
    let k = targets.len();
    let mut out = SensingTrial {
        hits: 0,
        targets: k,
        range_errors: Vec::new(),
        velocity_errors: Vec::new(),
        angle_errors: Vec::new(),
        trace: TrialTrace {
            snr_db,
            trial,
            targets: Vec::with_capacity(k),
            symbol: None,
            failed: estimate.is_none(),
        },
    };
    let est = estimate.map(|e| e.targets()).unwrap_or_default();
    let truths: Vec<f64> = targets.iter().map(|t| t.range).collect();
    let ranges: Vec<f64> = est.iter().map(|e| e.range).collect();
    for (t, m) in targets.iter().zip(match_by_range(&truths, &ranges)) {
        let mut tt = TargetTrace {
            truth: *t,
            range: None,
            velocity: None,
            angle: None,
            hit: false,
        };
        if let Some(j) = m {
            let e = &est[j];
            let err = (e.range - t.range).abs();
            out.range_errors.push(err);
            tt.range = Some(e.range);
            tt.velocity = Some(e.velocity);
            tt.angle = Some(e.angle);
            if err < setup.derived.hit_threshold {
                tt.hit = true;
                out.hits += 1;
                out.velocity_errors.push((e.velocity - t.velocity).abs());
                out.angle_errors.push(angle_error(e.angle, t.angle));
            }
        }
        out.trace.targets.push(tt);
    }
    out
}

fn sensing_trial(
    cfg: &ExperimentConfig,
    setup: &Setup,
    processor: &SensingProcessor,
    snr_index: usize,
    trial: usize,
) -> SensingTrial {
    let snr_db = cfg.snr_db[snr_index];
    let mut rng = trial_rng(cfg.seed, snr_index, trial);
    let scene = match generate_scene(&cfg.scene, setup, &mut rng) {
        Ok(s) => s,
        Err(_) => return score_sensing(&[], None, setup, snr_db, trial),
    };
    let result = run_sensing_frame(cfg, setup, processor, &scene.targets, snr_option(snr_db), &mut rng);
    score_sensing(&scene.targets, result.ok().as_ref(), setup, snr_db, trial)
}

fn run_sensing_frame(
    cfg: &ExperimentConfig,
    setup: &Setup,
    processor: &SensingProcessor,
    targets: &[Target],
    snr_db: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<SensingEstimate> {
    let p = &setup.params;
    let scene = crate::channel::SensingScene::new(targets.to_vec())?;
    let payload = generate_payload(p.symbols, setup.derived.alphabet, rng)?;
    let k = targets.len();
    match cfg.scheme {
        Scheme::Cs => {
            let schedule = generate_schedule(p.symbols, p.tx_antennas, rng)?;
            let sampling = if cfg.sensing.per_symbol_sampling {
                FrameSampling::PerSymbol(
                    (0..p.symbols)
                        .map(|_| draw_random_set(p.sense_samples, setup.derived.sense_grid, rng))
                        .collect::<Result<_>>()?,
                )
            } else {
                FrameSampling::Shared(draw_random_set(p.sense_samples, setup.derived.sense_grid, rng)?)
            };
            let tensor = synthesize_if(&scene, &schedule, &payload, &sampling, setup, snr_db, rng)?;
            let compensation = if cfg.sensing.phase_compensation {
                PhaseCompensation::Enabled
            } else {
                PhaseCompensation::Disabled
            };
            processor.process(&tensor, &sampling, &schedule, &payload, k, compensation)
        }
        Scheme::UniformDft => {
            let schedule = TdmSchedule::round_robin(p.symbols, p.tx_antennas)?;
            let grid = IfGrid::at_rate(setup, cfg.sensing.baseline_rate_hz);
            let sampling = baseline_sampling(grid);
            let tensor = synthesize_if_on(&scene, &schedule, &payload, &sampling, setup, grid, snr_db, rng)?;
            baseline_uniform_dft(&tensor, grid, &schedule, &payload, setup, k)
        }
        Scheme::LoraBaseline => Err(Error::Config("lora-baseline is a communication scheme".into())),
    }
}

pub fn run_sensing_experiment_with(cfg: &ExperimentConfig, workers: usize) -> Result<MetricsRecord> {
    let setup = cfg.check()?;
    if cfg.task != Task::Sensing {
        return Err(Error::Config("not a sensing experiment".into()));
    }
    // Reject scene specifications that can never be drawn before running.
    generate_scene(&cfg.scene, &setup, &mut ChaCha8Rng::seed_from_u64(0))?;
    let processor = SensingProcessor::new(&setup);
    let mut points = Vec::with_capacity(cfg.snr_db.len());
    let mut traces = Vec::new();
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let trials = run_trials(cfg.trials, workers, |t| sensing_trial(cfg, &setup, &processor, si, t))?;
        let mut point = SnrPoint::empty(snr, cfg.trials);
        let (mut hits, mut total) = (0usize, 0usize);
        for t in trials {
            hits += t.hits;
            total += t.targets;
            point.failed_trials += usize::from(t.trace.failed);
            point.range_errors.extend(t.range_errors);
            point.velocity_errors.extend(t.velocity_errors);
            point.angle_errors.extend(t.angle_errors);
            if cfg.record_trace {
                traces.push(t.trace);
            }
        }
        point.hit_rate = Some(if total == 0 { 0.0 } else { hits as f64 / total as f64 });
        points.push(point);
    }
    Ok(MetricsRecord {
        config: cfg.clone(),
        params_hash: setup.params_hash(),
        points,
        traces,
    })
}

pub fn run_comms_experiment(cfg: &ExperimentConfig) -> Result<MetricsRecord> {
    run_comms_experiment_with(cfg, worker_count())
}

enum CommScheme {
    Cs(CommReceiver),
    Lora(LoraBaseline),
}

fn comm_trial(
    cfg: &ExperimentConfig,
    setup: &Setup,
    scheme: &CommScheme,
    link: &CommLink,
    snr_index: usize,
    trial: usize,
) -> TrialTrace {
    let snr_db = cfg.snr_db[snr_index];
    let mut rng = trial_rng(cfg.seed, snr_index, trial);
    let result = (|| -> Result<(usize, usize)> {
        let alphabet = match scheme {
            CommScheme::Cs(_) => setup.derived.alphabet,
            CommScheme::Lora(b) => b.usable_alphabet(),
        };
        let h = rng.random_range(0..alphabet);
        let payload = Payload::new(vec![h], setup.derived.alphabet)?;
        let decided = match scheme {
            CommScheme::Cs(rx) => {
                let set = draw_random_set(setup.params.comm_samples, setup.derived.comm_grid, &mut rng)?;
                let sampling = FrameSampling::Shared(set.clone());
                let samples = comm_rx_samples(&payload, &sampling, setup, snr_option(snr_db), &mut rng, link)?;
                let seq = dechirp(&samples[0], &build_downchirp(&set, setup), &set)?;
                rx.demodulate(&seq)?.symbol
            }
            CommScheme::Lora(b) => {
                let sampling = FrameSampling::Shared(b.sampling_set().clone());
                let samples = comm_rx_samples(&payload, &sampling, setup, snr_option(snr_db), &mut rng, link)?;
                b.demodulate(&samples[0])?.symbol
            }
        };
        Ok((h, decided))
    })();
    TrialTrace {
        snr_db,
        trial,
        targets: Vec::new(),
        symbol: result.as_ref().ok().copied(),
        failed: result.is_err(),
    }
}

pub fn run_comms_experiment_with(cfg: &ExperimentConfig, workers: usize) -> Result<MetricsRecord> {
    let setup = cfg.check()?;
    if cfg.task != Task::Comms {
        return Err(Error::Config("not a communication experiment".into()));
    }
    let (scheme, bits) = match cfg.scheme {
        Scheme::Cs => (CommScheme::Cs(CommReceiver::new(&setup)), setup.params.spreading_factor),
        Scheme::LoraBaseline => {
            let b = LoraBaseline::new(&setup, setup.params.comm_samples, cfg.comms.baseline_alphabet)?;
            let bits = b.bits_per_symbol();
            (CommScheme::Lora(b), bits)
        }
        Scheme::UniformDft => return Err(Error::Config("uniform-dft is a sensing scheme".into())),
    };
    let link = if cfg.comms.in_band_noise {
        CommLink::in_band(&setup)
    } else {
        CommLink::ideal()
    };
    let mut points = Vec::with_capacity(cfg.snr_db.len());
    let mut traces = Vec::new();
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let trials = run_trials(cfg.trials, workers, |t| comm_trial(cfg, &setup, &scheme, &link, si, t))?;
        let mut point = SnrPoint::empty(snr, cfg.trials);
        let mut errors = 0usize;
        for t in trials {
            match t.symbol {
                Some((h, d)) if h == d => {}
                _ => errors += 1,
            }
            point.failed_trials += usize::from(t.failed);
            if cfg.record_trace {
                traces.push(t);
            }
        }
        point.ser = Some(errors as f64 / cfg.trials as f64);
        point.effective_bits = Some(bits);
        point.comm_rate = Some(bits as f64 / setup.derived.symbol_period);
        points.push(point);
    }
    Ok(MetricsRecord {
        config: cfg.clone(),
        params_hash: setup.params_hash(),
        points,
        traces,
    })
}
