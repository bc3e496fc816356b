//! Scene model and closed-form synthesis of the compressed IF tensor and the
//! line-of-sight communication samples.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{grid_floor, Setup, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::sampling::FrameSampling;
use crate::waveform::{tx_baseband_sample, Payload, TdmSchedule};

/// A point target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub gain: Complex64,
    /// Range (m).
    pub range: f64,
    /// Radial velocity (m/s), positive when approaching.
    pub velocity: f64,
    /// Angle (rad).
    pub angle: f64,
}

impl Target {
    pub fn new(range: f64, velocity: f64, angle: f64) -> Self {
        Self {
            gain: Complex64::new(1.0, 0.0),
            range,
            velocity,
            angle,
        }
    }

    pub fn with_gain(mut self, gain: Complex64) -> Self {
        self.gain = gain;
        self
    }

    /// Round-trip delay `2r/c`.
    pub fn delay(&self) -> f64 {
        2.0 * self.range / SPEED_OF_LIGHT
    }

    /// Doppler frequency `2v/lambda`.
    pub fn doppler(&self, setup: &Setup) -> f64 {
        2.0 * self.velocity / setup.derived.wavelength
    }

    /// Beat frequency `B tau / T`.
    pub fn if_frequency(&self, setup: &Setup) -> f64 {
        setup.params.bandwidth_hz * self.delay() / setup.params.payload_s
    }

    /// Gain after the carrier delay phase, `alpha exp(-j 2 pi fc tau)`.
    pub fn carrier_gain(&self, setup: &Setup) -> Complex64 {
        let cycles = setup.params.carrier_hz * self.delay();
        self.gain * Complex64::from_polar(1.0, -TAU * cycles.fract())
    }

    /// Gain seen by the sampled IF tone, which starts at `Tmix`.
    pub fn sampled_gain(&self, setup: &Setup) -> Complex64 {
        let cycles = (self.doppler(setup) - self.if_frequency(setup)) * setup.params.mix_guard_s;
        self.carrier_gain(setup) * Complex64::from_polar(1.0, TAU * cycles.fract())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingScene {
    pub targets: Vec<Target>,
}

impl SensingScene {
    pub fn new(targets: Vec<Target>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Config("a scene needs at least one target".into()));
        }
        Ok(Self { targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Checks every delay against the mixing guard.
    pub fn check(&self, setup: &Setup) -> Result<()> {
        let guard = setup.params.mix_guard_s;
        for t in &self.targets {
            if !(t.range >= 0.0 && t.delay() < guard) {
                return Err(Error::DelayExceedsGuard {
                    delay: t.delay(),
                    guard,
                });
            }
        }
        Ok(())
    }
}

/// Distribution of random scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub targets: usize,
    /// Range interval (m).
    pub range: [f64; 2],
    /// Velocity interval (m/s).
    pub velocity: [f64; 2],
    /// Angle interval (rad).
    pub angle: [f64; 2],
}

impl SceneSpec {
    /// Six targets in [0, 70] m, [-50, 50] m/s and [-60, 60] degrees.
    pub fn default_six() -> Self {
        Self {
            targets: 6,
            range: [0.0, 70.0],
            velocity: [-50.0, 50.0],
            angle: [-PI / 3.0, PI / 3.0],
        }
    }
}

fn uniform_in<R: Rng + ?Sized>(what: &'static str, [lo, hi]: [f64; 2], rng: &mut R) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidInterval { what, lo, hi });
    }
    Ok(if lo == hi { lo } else { rng.random_range(lo..=hi) })
}

/// Unit-magnitude gain with uniform phase.
pub fn random_phase_gain<R: Rng + ?Sized>(_range: f64, rng: &mut R) -> Complex64 {
    Complex64::from_polar(1.0, rng.random_range(0.0..TAU))
}

/// Draws i.i.d. uniform targets with unit-magnitude random-phase gains.
pub fn generate_scene<R: Rng + ?Sized>(spec: &SceneSpec, setup: &Setup, rng: &mut R) -> Result<SensingScene> {
    generate_scene_with(spec, setup, rng, random_phase_gain)
}

/// Like [`generate_scene`], with the gain drawn by `gain(range, rng)`.
pub fn generate_scene_with<R, G>(spec: &SceneSpec, setup: &Setup, rng: &mut R, mut gain: G) -> Result<SensingScene>
where
    R: Rng + ?Sized,
    G: FnMut(f64, &mut R) -> Complex64,
{
    if spec.targets == 0 {
        return Err(Error::Config("scene target count must be at least one".into()));
    }
    if spec.range[0] < 0.0 {
        return Err(Error::InvalidInterval {
            what: "range",
            lo: spec.range[0],
            hi: spec.range[1],
        });
    }
    let guard = setup.params.mix_guard_s;
    let worst = 2.0 * spec.range[1] / SPEED_OF_LIGHT;
    if worst >= guard {
        return Err(Error::DelayExceedsGuard { delay: worst, guard });
    }
    let mut targets = Vec::with_capacity(spec.targets);
    for _ in 0..spec.targets {
        let range = uniform_in("range", spec.range, rng)?;
        let velocity = uniform_in("velocity", spec.velocity, rng)?;
        let angle = uniform_in("angle", spec.angle, rng)?;
        let g = gain(range, rng);
        targets.push(Target::new(range, velocity, angle).with_gain(g));
    }
    SensingScene::new(targets)
}

/// Sampling grid of the IF branch: the LPF cutoff / base rate and the number
/// of full-rate points after `Tmix`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IfGrid {
    pub rate: f64,
    pub base: usize,
}

impl IfGrid {
    pub fn sensing(setup: &Setup) -> Self {
        Self {
            rate: setup.params.sense_rate_hz,
            base: setup.derived.sense_grid,
        }
    }

    /// A uniform sampler running at `rate` over the same observation window.
    pub fn at_rate(setup: &Setup, rate: f64) -> Self {
        let window = setup.params.payload_s - setup.params.mix_guard_s;
        Self {
            rate,
            base: grid_floor(rate * window).max(0) as usize,
        }
    }
}

/// Blank window of one (symbol, target) pair in seconds and in grid indices.
/// Samples with `start_index <= m < end_index` are zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlankWindow {
    pub start_s: f64,
    pub end_s: f64,
    pub start_index: usize,
    pub end_index: usize,
}

impl BlankWindow {
    pub fn segment(&self, m: usize) -> Segment {
        if m < self.start_index {
            Segment::Leading
        } else if m < self.end_index {
            Segment::Blank
        } else {
            Segment::Trailing
        }
    }
}

/// Position of a sample relative to the blank window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    Leading,
    Blank,
    Trailing,
}

pub fn blank_window(delay: f64, shift: usize, setup: &Setup) -> BlankWindow {
    blank_window_on(delay, shift, setup, IfGrid::sensing(setup))
}

/// Blank window on an arbitrary IF grid. Indices are clamped to `[0, base]`.
pub fn blank_window_on(delay: f64, shift: usize, setup: &Setup, grid: IfGrid) -> BlankWindow {
    let t = setup.params.payload_s;
    let tmix = setup.params.mix_guard_s;
    let wrap = setup.wrap_time(shift);
    let start_s = if delay > wrap { tmix } else { wrap };
    let end_s = t.min((delay + wrap).max(tmix));
    let index = |time: f64| grid_floor(grid.rate * (time - tmix)).clamp(0, grid.base as i64) as usize;
    BlankWindow {
        start_s,
        end_s,
        start_index: index(start_s),
        end_index: index(end_s),
    }
}

/// Phase of the leading IF segment, `pi (f_IF + B - 2h/T) tau` (rad).
pub fn segment_phase(delay: f64, shift: usize, setup: &Setup) -> f64 {
    let b = setup.params.bandwidth_hz;
    let t = setup.params.payload_s;
    let f_if = b * delay / t;
    PI * (f_if + b - 2.0 * shift as f64 / t) * delay
}

/// Phase of the trailing segment, the leading phase plus `2 pi B tau`.
pub fn trailing_segment_phase(delay: f64, shift: usize, setup: &Setup) -> f64 {
    segment_phase(delay, shift, setup) + TAU * setup.params.bandwidth_hz * delay
}

/// Per-segment phasors of one symbol, reduced modulo one turn for accuracy.
pub(crate) fn segment_phasors(delay: f64, shift: usize, setup: &Setup) -> (Complex64, Complex64) {
    let b = setup.params.bandwidth_hz;
    let t = setup.params.payload_s;
    let f_if = b * delay / t;
    // Work in cycles so the large B*tau products lose no precision to 2*pi scaling.
    let lead = 0.5 * ((f_if + b) * delay).rem_euclid(2.0) - (shift as f64 * delay / t).fract();
    let trail = lead + (b * delay).fract();
    (
        Complex64::from_polar(1.0, TAU * lead.fract()),
        Complex64::from_polar(1.0, TAU * trail.fract()),
    )
}

/// Compressed IF samples indexed by (symbol, AIC sample, receive antenna).
#[derive(Clone, Debug, PartialEq)]
pub struct IfSampleTensor {
    symbols: usize,
    samples: usize,
    rx: usize,
    data: Vec<Complex64>,
}

impl IfSampleTensor {
    pub fn zeros(symbols: usize, samples: usize, rx: usize) -> Self {
        Self {
            symbols,
            samples,
            rx,
            data: vec![Complex64::new(0.0, 0.0); symbols * samples * rx],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.symbols, self.samples, self.rx)
    }

    fn offset(&self, p: usize, n: usize, r: usize) -> usize {
        (p * self.samples + n) * self.rx + r
    }

    pub fn get(&self, p: usize, n: usize, r: usize) -> Complex64 {
        self.data[self.offset(p, n, r)]
    }

    pub fn get_mut(&mut self, p: usize, n: usize, r: usize) -> &mut Complex64 {
        let i = self.offset(p, n, r);
        &mut self.data[i]
    }

    /// Samples of symbol `p` at receive antenna `r`.
    pub fn column(&self, p: usize, r: usize) -> Vec<Complex64> {
        (0..self.samples).map(|n| self.get(p, n, r)).collect()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn mean_power(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }
}

impl std::ops::Add for IfSampleTensor {
    type Output = IfSampleTensor;

    fn add(mut self, rhs: IfSampleTensor) -> IfSampleTensor {
        assert_eq!(self.shape(), rhs.shape(), "tensor shapes differ");
        for (a, b) in self.data.iter_mut().zip(rhs.data) {
            *a += b;
        }
        self
    }
}

/// Circular complex Gaussian sample with total variance `variance`.
pub(crate) fn complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

pub(crate) fn snr_linear(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// Closed-form compressed IF tensor on the sensing grid. `snr_db = None`
/// gives the noiseless tensor.
pub fn synthesize_if<R: Rng + ?Sized>(
    scene: &SensingScene,
    schedule: &TdmSchedule,
    payload: &Payload,
    sampling: &FrameSampling,
    setup: &Setup,
    snr_db: Option<f64>,
    rng: &mut R,
) -> Result<IfSampleTensor> {
    synthesize_if_on(scene, schedule, payload, sampling, setup, IfGrid::sensing(setup), snr_db, rng)
}

/// [`synthesize_if`] for an IF chain whose LPF cutoff and sampling grid are
/// given by `grid`. Targets whose beat frequency reaches the cutoff are removed
/// by the filter and contribute nothing.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_if_on<R: Rng + ?Sized>(
    scene: &SensingScene,
    schedule: &TdmSchedule,
    payload: &Payload,
    sampling: &FrameSampling,
    setup: &Setup,
    grid: IfGrid,
    snr_db: Option<f64>,
    rng: &mut R,
) -> Result<IfSampleTensor> {
    let p_count = setup.params.symbols;
    let lr = setup.params.rx_antennas;
    if payload.len() != p_count {
        return Err(Error::LengthMismatch {
            expected: p_count,
            actual: payload.len(),
        });
    }
    if schedule.antennas().len() != p_count {
        return Err(Error::LengthMismatch {
            expected: p_count,
            actual: schedule.antennas().len(),
        });
    }
    sampling.check(p_count, grid.base)?;
    scene.check(setup)?;

    let n_count = sampling.samples_per_symbol();
    let t0 = setup.derived.symbol_period;
    let mut tensor = IfSampleTensor::zeros(p_count, n_count, lr);
    let mut per_sample = vec![Complex64::new(0.0, 0.0); n_count];

    for target in &scene.targets {
        let f_if = target.if_frequency(setup);
        if f_if >= grid.rate {
            continue;
        }
        let tau = target.delay();
        let gain = target.sampled_gain(setup);
        let sin = target.angle.sin();
        let rx_steer: Vec<Complex64> = (0..lr)
            .map(|r| Complex64::from_polar(1.0, PI * (r as f64 * sin).rem_euclid(2.0)))
            .collect();
        let doppler = target.doppler(setup);
        let cycles_per_sample = f_if / grid.rate;

        for p in 0..p_count {
            let set = sampling.for_symbol(p);
            let shift = payload.shifts()[p];
            let window = blank_window_on(tau, shift, setup, grid);
            let (lead, trail) = segment_phasors(tau, shift, setup);
            let l = schedule.antennas()[p];
            let tx_steer = Complex64::from_polar(1.0, PI * ((l * lr) as f64 * sin).rem_euclid(2.0));
            let slow = Complex64::from_polar(1.0, TAU * (p as f64 * doppler * t0).fract());
            let common = gain * tx_steer * slow;
            for (n, &m) in set.indices().iter().enumerate() {
                let tone = Complex64::from_polar(1.0, -TAU * (cycles_per_sample * m as f64).fract());
                per_sample[n] = match window.segment(m) {
                    Segment::Leading => common * tone * lead,
                    Segment::Blank => Complex64::new(0.0, 0.0),
                    Segment::Trailing => common * tone * trail,
                };
            }
            for (n, &s) in per_sample.iter().enumerate() {
                for (r, &steer) in rx_steer.iter().enumerate() {
                    *tensor.get_mut(p, n, r) += s * steer;
                }
            }
        }
    }

    if let Some(snr) = snr_db {
        let variance = tensor.mean_power() / snr_linear(snr);
        for z in &mut tensor.data {
            *z += complex_gaussian(variance, rng);
        }
    }
    Ok(tensor)
}

/// Line-of-sight communication link. Synchronisation is ideal, so delay and
/// velocity are carried for completeness but have no effect on the samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommLink {
    pub gain: Complex64,
    pub delay_s: f64,
    pub velocity_mps: f64,
    /// When set, the SNR is referenced to this noise bandwidth instead of the
    /// sample rate: per-sample noise variance grows by `fbar / bandwidth`.
    pub noise_bandwidth_hz: Option<f64>,
}

impl CommLink {
    /// Residual synchronisation delay after ideal synchronisation.
    pub const SYNC_DELAY_S: f64 = 0.0;

    pub fn ideal() -> Self {
        Self {
            gain: Complex64::new(1.0, 0.0),
            delay_s: 0.0,
            velocity_mps: 0.0,
            noise_bandwidth_hz: None,
        }
    }

    /// Ideal link whose SNR is measured over the sweep bandwidth.
    pub fn in_band(setup: &Setup) -> Self {
        Self {
            noise_bandwidth_hz: Some(setup.params.bandwidth_hz),
            ..Self::ideal()
        }
    }
}

/// Compressed baseband samples of every symbol, `P x Nbar`.
pub fn comm_rx_samples<R: Rng + ?Sized>(
    payload: &Payload,
    sampling: &FrameSampling,
    setup: &Setup,
    snr_db: Option<f64>,
    rng: &mut R,
    link: &CommLink,
) -> Result<Vec<Vec<Complex64>>> {
    let fbar = setup.params.comm_rate_hz;
    sampling.check(payload.len(), setup.derived.comm_grid)?;
    let mut out = Vec::with_capacity(payload.len());
    for (p, &shift) in payload.shifts().iter().enumerate() {
        let set = sampling.for_symbol(p);
        let symbol = set
            .indices()
            .iter()
            .map(|&m| Ok(link.gain * tx_baseband_sample(m as f64 / fbar, shift, setup)?))
            .collect::<Result<Vec<_>>>()?;
        out.push(symbol);
    }
    if let Some(snr) = snr_db {
        let count: usize = out.iter().map(Vec::len).sum();
        let power = if count == 0 {
            0.0
        } else {
            out.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() / count as f64
        };
        let bandwidth_factor = link.noise_bandwidth_hz.map_or(1.0, |bw| fbar / bw);
        let variance = power * bandwidth_factor / snr_linear(snr);
        for z in out.iter_mut().flatten() {
            *z += complex_gaussian(variance, rng);
        }
    }
    Ok(out)
}
