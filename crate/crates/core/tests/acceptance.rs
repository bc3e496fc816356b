//! Acceptance criteria. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use loradar::channel::{comm_rx_samples, synthesize_if, CommLink, SceneSpec, SensingScene, Target};
use loradar::comms::{build_downchirp, dechirp, BaselineAlphabet, CommReceiver};
use loradar::config::SPEED_OF_LIGHT;
use loradar::cs::ae_grid_angle;
use loradar::harness::{emit_results, run_experiment, run_experiment_with, ExperimentConfig, MetricsRecord, Scheme};
use loradar::sampling::{FrameSampling, SamplingIndexSet, SamplingKind};
use loradar::sensing::{signed_bin, PhaseCompensation, SensingProcessor};
use loradar::waveform::{generate_payload, generate_schedule, Payload, TdmSchedule};
use loradar::{Setup, WaveformParams};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn setup_1ghz() -> Setup {
    Setup::new(WaveformParams::paper_1ghz()).unwrap()
}

fn point(record: &MetricsRecord) -> &loradar::harness::SnrPoint {
    &record.points[0]
}

/// 1. Noiseless on-grid exactness and comm round trip.
fn exactness() -> Outcome {
    let start = Instant::now();
    let setup = setup_1ghz();
    let p = &setup.params;
    let nmax = setup.derived.sense_grid;
    let processor = SensingProcessor::new(&setup);
    let sampling = FrameSampling::Shared(SamplingIndexSet::full(nmax));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let elements = p.tx_antennas * p.rx_antennas;
    let ve_grid = p.velocity_oversample * p.symbols;
    let velocity_step = setup.derived.wavelength / (2.0 * ve_grid as f64 * setup.derived.symbol_period);
    let mut wrong = Vec::new();
    let scenes = 20;
    for case in 0..scenes {
        let range_bin = rng.random_range(1..480usize);
        let doppler_bin = rng.random_range(-50..=50i64);
        let angle_bin = rng.random_range(30..=150usize);
        let delay = range_bin as f64 * p.sense_rate_hz * p.payload_s
            / (p.bandwidth_hz * p.range_oversample as f64 * nmax as f64);
        let gain = Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
        let target = Target::new(
            range_of_delay(delay),
            doppler_bin as f64 * velocity_step,
            ae_grid_angle(angle_bin, elements, p.angle_oversample),
        )
        .with_gain(gain);
        let payload = generate_payload(p.symbols, setup.derived.alphabet, &mut rng).unwrap();
        let schedule = generate_schedule(p.symbols, p.tx_antennas, &mut rng).unwrap();
        let scene = SensingScene::new(vec![target]).unwrap();
        let tensor = synthesize_if(&scene, &schedule, &payload, &sampling, &setup, None, &mut rng).unwrap();
        let est = processor
            .process(&tensor, &sampling, &schedule, &payload, 1, PhaseCompensation::Enabled)
            .unwrap();
        let pairs_ok = est.velocities[0]
            .pairs
            .iter()
            .all(|e| signed_bin(e.bin, ve_grid) == doppler_bin);
        if est.range.bins[0] != range_bin || !pairs_ok || est.angles[0].bin != angle_bin {
            wrong.push(case);
        }
    }

    let receiver = CommReceiver::new(&setup);
    let full = SamplingIndexSet::new(
        (0..setup.derived.comm_grid).collect(),
        setup.derived.comm_grid,
        SamplingKind::Uniform,
    )
    .unwrap();
    let payload = generate_payload(100, setup.derived.alphabet, &mut rng).unwrap();
    let rx = comm_rx_samples(
        &payload,
        &FrameSampling::Shared(full.clone()),
        &setup,
        None,
        &mut rng,
        &CommLink::ideal(),
    )
    .unwrap();
    let down = build_downchirp(&full, &setup);
    let symbol_errors = rx
        .iter()
        .zip(payload.shifts())
        .filter(|(samples, &h)| {
            let seq = dechirp(samples, &down, &full).unwrap();
            receiver.demodulate(&seq).unwrap().symbol != h
        })
        .count();
    let elapsed = start.elapsed();
    Outcome::new(
        wrong.is_empty() && symbol_errors == 0 && elapsed < Duration::from_secs(30),
        format!(
            "sensing scenes with a wrong bin: {}/{scenes} {wrong:?}; symbol errors: {symbol_errors}/100; {:.1} s (limit 30 s)",
            wrong.len(),
            elapsed.as_secs_f64()
        ),
    )
}

/// 2. Closed-form IF against a time-domain mixer, and de-chirp spectra
///    against a full-rate DFT.
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let setup = reduced_setup();
    let p = setup.params.clone();
    let nmax = setup.derived.sense_grid;
    let sampling = FrameSampling::Shared(SamplingIndexSet::full(nmax));
    let schedule = TdmSchedule::round_robin(p.symbols, p.tx_antennas).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut errors = Vec::with_capacity(50);
    for _ in 0..50 {
        let delay = rng.random_range(0.0..p.mix_guard_s);
        let angle = rng.random_range(-PI / 3.0..PI / 3.0);
        let gain = Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
        let payload = generate_payload(p.symbols, setup.derived.alphabet, &mut rng).unwrap();
        let target = Target::new(range_of_delay(delay), 0.0, angle).with_gain(gain);
        let scene = SensingScene::new(vec![target]).unwrap();
        let tensor = synthesize_if(&scene, &schedule, &payload, &sampling, &setup, None, &mut rng).unwrap();
        let (mut model, mut reference) = (Vec::new(), Vec::new());
        for (sym, &shift) in payload.shifts().iter().enumerate() {
            let mixed = mixer_if(&setup, shift, Echo { gain, delay, angle }, 32);
            for (r, samples) in mixed.iter().enumerate() {
                for (n, &z) in samples.iter().enumerate() {
                    model.push(tensor.get(sym, n, r));
                    reference.push(z);
                }
            }
        }
        errors.push(relative_error(&model, &reference));
    }
    errors.sort_by(f64::total_cmp);
    let within = errors.iter().filter(|&&e| e <= 1e-3).count();

    // De-chirp spectra: every symbol of the reduced alphabet at full rate.
    let receiver = CommReceiver::new(&setup);
    let grid = setup.derived.comm_grid;
    let offset = setup.derived.comm_bin_offset;
    let full = SamplingIndexSet::new((0..grid).collect(), grid, SamplingKind::Uniform).unwrap();
    let down = build_downchirp(&full, &setup);
    let mut spectrum_mismatch = Vec::new();
    for h in 0..setup.derived.alphabet {
        let payload = Payload::new(vec![h], setup.derived.alphabet).unwrap();
        let rx = comm_rx_samples(
            &payload,
            &FrameSampling::Shared(full.clone()),
            &setup,
            None,
            &mut rng,
            &CommLink::ideal(),
        )
        .unwrap();
        let seq = dechirp(&rx[0], &down, &full).unwrap();
        let spectrum = naive_dft(&seq.values);
        let reference = naive_dft(&dechirped_symbol(h, &setup));
        let diff = spectrum
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        // Full-rate de-chirped tones sit on bins h and h + offset.
        let fold = (p.comm_rate_hz * (p.payload_s - h as f64 / p.bandwidth_hz)).floor() as usize;
        let expected_peak = if 2 * fold >= grid { h } else { (h + offset) % grid };
        let peak = (0..grid)
            .max_by(|&a, &b| spectrum[a].norm().total_cmp(&spectrum[b].norm()).then(b.cmp(&a)))
            .unwrap();
        let decided = receiver.demodulate(&seq).unwrap().symbol;
        if diff > 1e-9 * grid as f64 || peak != expected_peak || decided != h {
            spectrum_mismatch.push(h);
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        within == errors.len() && spectrum_mismatch.is_empty() && elapsed < Duration::from_secs(120),
        format!(
            "IF cases within 1e-3: {within}/50 (relative error min {:.2e}, median {:.2e}, max {:.2e}); \
             de-chirp spectra mismatched for {} of {} symbols; {:.1} s (limit 120 s)",
            errors[0],
            errors[errors.len() / 2],
            errors[errors.len() - 1],
            spectrum_mismatch.len(),
            setup.derived.alphabet,
            elapsed.as_secs_f64()
        ),
    )
}

/// 3. Blank-window zero support and the phase jump across it.
fn blank_window_geometry() -> Outcome {
    let params = WaveformParams {
        symbols: 2,
        rx_antennas: 1,
        ..WaveformParams::paper_1ghz()
    };
    let setup = Setup::new(params).unwrap();
    let p = setup.params.clone();
    let nmax = setup.derived.sense_grid;
    let sampling = FrameSampling::Shared(SamplingIndexSet::full(nmax));
    let schedule = TdmSchedule::round_robin(p.symbols, p.tx_antennas).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (mut support_errors, mut phase_checked, mut worst_phase) = (0usize, 0usize, 0.0f64);
    for _ in 0..500 {
        let delay = rng.random_range(0.0..p.mix_guard_s);
        let payload = generate_payload(p.symbols, setup.derived.alphabet, &mut rng).unwrap();
        let target = Target::new(range_of_delay(delay), 0.0, 0.0);
        let f_if = target.if_frequency(&setup);
        let scene = SensingScene::new(vec![target]).unwrap();
        let tensor = synthesize_if(&scene, &schedule, &payload, &sampling, &setup, None, &mut rng).unwrap();
        for (sym, &shift) in payload.shifts().iter().enumerate() {
            let (start, end) = blank_indices(delay, shift, &setup);
            let zeros: Vec<usize> = (0..nmax).filter(|&n| tensor.get(sym, n, 0) == Complex64::new(0.0, 0.0)).collect();
            if zeros != (start..end).collect::<Vec<_>>() {
                support_errors += 1;
            }
            if start > 0 && end < nmax {
                let detone = |n: usize| tensor.get(sym, n, 0) * cis(f_if * n as f64 / p.sense_rate_hz);
                let jump = (detone(end) / detone(start - 1)).arg();
                let expected = wrap_angle(2.0 * PI * (p.bandwidth_hz * delay).rem_euclid(1.0));
                worst_phase = worst_phase.max(wrap_angle(jump - expected).abs());
                phase_checked += 1;
            }
        }
    }
    Outcome::new(
        support_errors == 0 && worst_phase <= 1e-6 && phase_checked > 0,
        format!(
            "zero-support mismatches: {support_errors}/1000; max phase-jump error {worst_phase:.2e} rad over {phase_checked} pairs with both segments"
        ),
    )
}

fn single_target_spec(velocity: f64, range: [f64; 2]) -> SceneSpec {
    SceneSpec {
        targets: 1,
        range,
        velocity: [velocity, velocity],
        angle: [-PI / 3.0, PI / 3.0],
    }
}

/// 4. Velocity estimation needs phase compensation.
fn pc_necessity() -> Outcome {
    let params = WaveformParams::paper_1ghz();
    let step = Setup::new(params.clone()).unwrap().derived.velocity_step;
    let mut cfg = ExperimentConfig::sensing(Scheme::Cs, params);
    cfg.scene = single_target_spec(20.0, [0.0, 70.0]);
    cfg.snr_db = vec![10.0];
    cfg.trials = 100;
    cfg.seed = 4;
    let with = run_experiment(&cfg).unwrap();
    cfg.sensing.phase_compensation = false;
    let without = run_experiment(&cfg).unwrap();
    let med_with = point(&with).median_velocity_error().unwrap_or(f64::INFINITY);
    let med_without = point(&without).median_velocity_error().unwrap_or(f64::INFINITY);
    Outcome::new(
        med_with <= step && med_without >= 5.0 * step,
        format!(
            "median velocity error {med_with:.3} m/s with compensation (limit {step:.3}), {med_without:.3} m/s without (needs >= {:.3})",
            5.0 * step
        ),
    )
}

/// 5. Unambiguous velocity beyond the per-antenna PRI limit.
fn velocity_ambiguity() -> Outcome {
    let params = WaveformParams::paper_1ghz();
    let setup = Setup::new(params.clone()).unwrap();
    let step = setup.derived.velocity_step;
    let bound = setup.derived.wavelength / (4.0 * params.tx_antennas as f64 * setup.derived.symbol_period);
    let mut cfg = ExperimentConfig::sensing(Scheme::Cs, params.clone());
    cfg.scene = single_target_spec(40.0, [5.0, 60.0]);
    cfg.snr_db = vec![f64::INFINITY];
    cfg.trials = 20;
    cfg.seed = 5;
    let cs = run_experiment(&cfg).unwrap();
    cfg.scheme = Scheme::UniformDft;
    let dft = run_experiment(&cfg).unwrap();
    let cs_errors = &point(&cs).velocity_errors;
    let dft_errors = &point(&dft).velocity_errors;
    let cs_max = cs_errors.iter().copied().fold(0.0, f64::max);
    let dft_min = dft_errors.iter().copied().fold(f64::INFINITY, f64::min);
    Outcome::new(
        cs_errors.len() == cfg.trials && cs_max <= step && !dft_errors.is_empty() && dft_min >= 10.0,
        format!(
            "v = 40 m/s, per-antenna bound {bound:.1} m/s: compressed max error {cs_max:.3} m/s over {} hits (limit {step:.3}); \
             uniform-DFT min error {dft_min:.2} m/s over {} hits (needs >= 10)",
            cs_errors.len(),
            dft_errors.len()
        ),
    )
}

/// 6. Angle accuracy.
fn angle_accuracy() -> Outcome {
    let params = WaveformParams::paper_1ghz();
    assert_eq!(params.angle_oversample, 15);
    let mut cfg = ExperimentConfig::sensing(Scheme::Cs, params);
    cfg.scene = SceneSpec {
        targets: 1,
        ..SceneSpec::default_six()
    };
    cfg.snr_db = vec![10.0];
    cfg.trials = 200;
    cfg.seed = 6;
    let rec = run_experiment(&cfg).unwrap();
    let med = point(&rec).median_angle_error().unwrap_or(f64::INFINITY).to_degrees();
    Outcome::new(
        med <= 1.0,
        format!("median angle error {med:.3} deg over {} hits (limit 1 deg)", point(&rec).angle_errors.len()),
    )
}

/// 7. Range plateau of the uniform-DFT baseline.
fn range_plateau() -> Outcome {
    let rate = 28.125e6;
    // Equal average sampling rate: the compressed receiver keeps as many
    // samples per symbol as the uniform one.
    let mut params = WaveformParams::paper_1ghz();
    let window = params.payload_s - params.mix_guard_s;
    params.sense_samples = (rate * window).floor() as usize;
    let rmax = SPEED_OF_LIGHT * rate * window / (2.0 * params.bandwidth_hz);
    let expected = (70.0 - rmax) / 70.0;
    let mut cfg = ExperimentConfig::sensing(Scheme::Cs, params);
    cfg.scene = SceneSpec::default_six();
    cfg.snr_db = vec![30.0];
    cfg.trials = 500;
    cfg.seed = 7;
    cfg.sensing.baseline_rate_hz = rate;
    let cs = point(&run_experiment(&cfg).unwrap()).hit_rate.unwrap();
    cfg.scheme = Scheme::UniformDft;
    let dft = point(&run_experiment(&cfg).unwrap()).hit_rate.unwrap();
    let gap = cs - dft;
    let (lo, hi) = (0.5 * expected, 1.5 * expected);
    Outcome::new(
        gap >= lo && gap <= hi,
        format!(
            "hit rate compressed {cs:.4}, uniform-DFT {dft:.4}: gap {gap:.4}, expected {expected:.4} \
             (Rmax {rmax:.2} m), accepted [{lo:.4}, {hi:.4}]"
        ),
    )
}

fn comm_sers(cfg: &ExperimentConfig) -> Vec<f64> {
    run_experiment(cfg).unwrap().points.iter().map(|p| p.ser.unwrap()).collect()
}

/// 8. Symbol error rate behaviour.
fn ser_properties() -> Outcome {
    let params = WaveformParams::paper_1ghz();
    let mut cfg = ExperimentConfig::comms(Scheme::Cs, params.clone());
    cfg.snr_db = (0..8).map(|i| -20.0 + 2.0 * i as f64).collect();
    cfg.trials = 500;
    cfg.seed = 8;
    let sers = comm_sers(&cfg);
    let n = cfg.trials as f64;
    let mut inversions = 0;
    let mut inversion_ok = true;
    for w in sers.windows(2) {
        if w[1] > w[0] {
            inversions += 1;
            let sigma = ((w[0] * (1.0 - w[0]) + w[1] * (1.0 - w[1])) / n).sqrt();
            inversion_ok &= w[1] - w[0] <= 2.0 * sigma;
        }
    }
    let monotone = inversions <= 1 && inversion_ok;

    cfg.snr_db = vec![f64::INFINITY];
    let noiseless = comm_sers(&cfg)[0];

    let mut base = ExperimentConfig::comms(Scheme::LoraBaseline, params);
    base.comms.baseline_alphabet = BaselineAlphabet::Full;
    base.snr_db = vec![0.0, 20.0, f64::INFINITY];
    base.trials = 1000;
    base.seed = 8;
    let full_alphabet = comm_sers(&base);
    let lora_ok = full_alphabet.iter().all(|&s| s >= 0.9);

    let grid = format_sers(&sers);
    Outcome::new(
        monotone && noiseless == 0.0 && lora_ok,
        format!(
            "SER over -20..-6 dB: [{}] ({inversions} inversion(s)); noiseless SER {noiseless}; \
             full-alphabet baseline SER {full_alphabet:?} (needs >= 0.9)",
            grid.join(", ")
        ),
    )
}

fn format_sers(sers: &[f64]) -> Vec<String> {
    sers.iter().map(|s| format!("{s:.3}")).collect()
}

/// SNR at which the SER curve crosses `target`, by log-linear interpolation
/// between the bracketing grid points.
fn crossing(snr: &[f64], ser: &[f64], target: f64, trials: usize) -> Option<f64> {
    let floor = 0.5 / trials as f64;
    for i in 1..snr.len() {
        if ser[i - 1] > target && ser[i] <= target {
            let (a, b) = (ser[i - 1].log10(), ser[i].max(floor).log10());
            let frac = (target.log10() - a) / (b - a);
            return Some(snr[i - 1] + frac * (snr[i] - snr[i - 1]));
        }
    }
    None
}

/// 9. SNR penalty of halving the bandwidth.
fn bandwidth_penalty() -> Outcome {
    let trials = 2000;
    let run = |params: WaveformParams, lo: f64, hi: f64| -> (Vec<f64>, Vec<f64>) {
        let mut cfg = ExperimentConfig::comms(Scheme::Cs, params);
        cfg.comms.in_band_noise = true;
        let steps = ((hi - lo) / 0.5).round() as usize;
        cfg.snr_db = (0..=steps).map(|i| lo + 0.5 * i as f64).collect();
        cfg.trials = trials;
        cfg.seed = 9;
        let sers = comm_sers(&cfg);
        (cfg.snr_db, sers)
    };
    let (snr_a, ser_a) = run(WaveformParams::paper_1ghz(), -11.0, -3.0);
    let (snr_b, ser_b) = run(WaveformParams::paper_500mhz(), -9.0, 1.0);
    let a = crossing(&snr_a, &ser_a, 1e-2, trials);
    let b = crossing(&snr_b, &ser_b, 1e-2, trials);
    match (a, b) {
        (Some(a), Some(b)) => {
            let penalty = b - a;
            Outcome::new(
                (1.5..=4.5).contains(&penalty),
                format!("SER 1e-2 reached at {a:.2} dB (1 GHz) and {b:.2} dB (500 MHz): penalty {penalty:.2} dB (accepted 3 +/- 1.5)"),
            )
        }
        _ => Outcome::new(
            false,
            format!("SER 1e-2 not bracketed: 1 GHz {ser_a:?}, 500 MHz {ser_b:?}"),
        ),
    }
}

/// 10. Output bytes do not depend on the worker count.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut configs = Vec::new();
    let mut sense = ExperimentConfig::sensing(Scheme::Cs, WaveformParams::paper_1ghz());
    sense.snr_db = vec![0.0, f64::INFINITY];
    sense.trials = 6;
    sense.seed = 10;
    configs.push(sense.clone());
    sense.scheme = Scheme::UniformDft;
    sense.trials = 4;
    configs.push(sense);
    let mut comm = ExperimentConfig::comms(Scheme::Cs, WaveformParams::paper_1ghz());
    comm.snr_db = vec![-12.0, -8.0];
    comm.trials = 60;
    comm.seed = 10;
    configs.push(comm);

    let mut differing = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        let bytes: Vec<Vec<u8>> = [1usize, 3, 1]
            .iter()
            .enumerate()
            .map(|(run, &workers)| {
                let path = dir.path().join(format!("run{i}_{run}.csv"));
                emit_results(&run_experiment_with(cfg, workers).unwrap(), &path).unwrap();
                std::fs::read(&path).unwrap()
            })
            .collect();
        if bytes.windows(2).any(|w| w[0] != w[1]) {
            differing.push(cfg.scheme.as_str());
        }
    }
    Outcome::new(
        differing.is_empty(),
        format!("{} experiments rerun with 1, 3 and 1 workers; differing outputs: {differing:?}", configs.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("on-grid exactness", exactness),
        ("closed-form IF vs time-domain mixer", oracle_equivalence),
        ("blank-window geometry", blank_window_geometry),
        ("phase compensation necessity", pc_necessity),
        ("velocity ambiguity", velocity_ambiguity),
        ("angle accuracy", angle_accuracy),
        ("baseline range plateau", range_plateau),
        ("SER properties", ser_properties),
        ("bandwidth penalty", bandwidth_penalty),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!outcome.pass);
        println!(
            "criterion {:>2} {status} {name}: {} [{:.1} s]",
            i + 1,
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
