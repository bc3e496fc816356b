//! Range, velocity and angle estimation from the compressed IF tensor, plus
//! the uniform-sampling DFT baseline.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{blank_window_on, segment_phasors, IfGrid, IfSampleTensor, Segment};
use crate::config::{Setup, SPEED_OF_LIGHT};
use crate::cs::{
    build_ae_dictionary, build_dft_dictionary, mmv_omp, omp, top_k_rows, DenseDictionary, DftDictionary, Dictionary,
    Measurements, Sign, SparseEstimate, StopRule,
};
use crate::error::{Error, Result};
use crate::sampling::{FrameSampling, SamplingIndexSet};
use crate::waveform::{Payload, TdmSchedule};

/// Detected range bins of all targets.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeResult {
    /// Detected dictionary columns, strongest first.
    pub bins: Vec<usize>,
    pub delays: Vec<f64>,
    /// Coefficient row of each detected bin over the `P * Lr` columns
    /// (symbol-major, receive antenna minor).
    pub rows: Vec<Vec<Complex64>>,
    /// The joint sparse estimate, absent for the DFT baseline.
    pub estimate: Option<SparseEstimate>,
}

impl RangeResult {
    pub fn ranges(&self) -> Vec<f64> {
        self.delays.iter().map(|d| d * SPEED_OF_LIGHT / 2.0).collect()
    }
}

/// Phase-compensation matrix of one target, `N x P`.
#[derive(Clone, Debug, PartialEq)]
pub struct PcMatrix {
    samples: usize,
    symbols: usize,
    /// Symbol-major storage: entry `(n, p)` at `p * samples + n`.
    entries: Vec<Complex64>,
}

impl PcMatrix {
    /// No compensation.
    pub fn ones(samples: usize, symbols: usize) -> Self {
        Self {
            samples,
            symbols,
            entries: vec![Complex64::new(1.0, 0.0); samples * symbols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.samples, self.symbols)
    }

    pub fn get(&self, n: usize, p: usize) -> Complex64 {
        self.entries[p * self.samples + n]
    }

    pub fn symbol(&self, p: usize) -> &[Complex64] {
        &self.entries[p * self.samples..(p + 1) * self.samples]
    }
}

pub fn build_pc_matrix(delay: f64, payload: &Payload, sampling: &FrameSampling, setup: &Setup) -> PcMatrix {
    build_pc_matrix_on(delay, payload, sampling, setup, IfGrid::sensing(setup))
}

/// PC matrix for an IF chain sampled on `grid`. Each entry undoes the segment
/// phase of the sample it multiplies; blank-window entries are one.
pub fn build_pc_matrix_on(
    delay: f64,
    payload: &Payload,
    sampling: &FrameSampling,
    setup: &Setup,
    grid: IfGrid,
) -> PcMatrix {
    let samples = sampling.samples_per_symbol();
    let symbols = payload.len();
    let mut entries = Vec::with_capacity(samples * symbols);
    for (p, &shift) in payload.shifts().iter().enumerate() {
        let window = blank_window_on(delay, shift, setup, grid);
        let (lead, trail) = segment_phasors(delay, shift, setup);
        for &m in sampling.for_symbol(p).indices() {
            entries.push(match window.segment(m) {
                Segment::Leading => lead.conj(),
                Segment::Blank => Complex64::new(1.0, 0.0),
                Segment::Trailing => trail.conj(),
            });
        }
    }
    PcMatrix {
        samples,
        symbols,
        entries,
    }
}

/// Velocity estimate of one transmit/receive pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    /// Doppler dictionary column.
    pub bin: usize,
    pub velocity: f64,
    /// Complex amplitude at `bin`, the pair's entry of the virtual array.
    pub amplitude: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityResult {
    /// Indexed by `l * Lr + r`.
    pub pairs: Vec<PairEstimate>,
    /// Mean of the per-pair velocities.
    pub velocity: f64,
}

impl VelocityResult {
    fn from_pairs(pairs: Vec<PairEstimate>) -> Self {
        let velocity = pairs.iter().map(|e| e.velocity).sum::<f64>() / pairs.len().max(1) as f64;
        Self { pairs, velocity }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleResult {
    pub virtual_array: Vec<Complex64>,
    pub bin: usize,
    pub angle: f64,
}

/// Signed bin: columns in the upper half of a `grid`-point spectrum map to
/// negative frequencies.
pub fn signed_bin(bin: usize, grid: usize) -> i64 {
    if 2 * bin < grid {
        bin as i64
    } else {
        bin as i64 - grid as i64
    }
}

/// Joint range detection over every symbol and receive antenna.
pub fn range_estimate(
    tensor: &IfSampleTensor,
    sampling: &FrameSampling,
    dict: &DftDictionary,
    setup: &Setup,
    targets: usize,
) -> Result<RangeResult> {
    let (p_count, n_count, lr) = tensor.shape();
    if n_count != sampling.samples_per_symbol() || dict.rows() != sampling.base() {
        return Err(Error::LengthMismatch {
            expected: sampling.samples_per_symbol(),
            actual: n_count,
        });
    }
    let columns: Vec<Vec<Complex64>> = (0..p_count)
        .flat_map(|p| (0..lr).map(move |r| (p, r)))
        .map(|(p, r)| tensor.column(p, r))
        .collect();
    let y = Measurements {
        values: columns.iter().map(Vec::as_slice).collect(),
        rows: (0..p_count * lr).map(|c| sampling.for_symbol(c / lr).indices()).collect(),
    };
    let estimate = mmv_omp(&y, dict, StopRule::atoms(targets))?;
    let bins = top_k_rows(&estimate, targets)?;
    let delays = bins.iter().map(|&b| delay_of_bin(b, dict, setup, sampling.base())).collect();
    let rows = bins.iter().map(|&b| estimate.row_of(b).expect("selected bin").to_vec()).collect();
    Ok(RangeResult {
        bins,
        delays,
        rows,
        estimate: Some(estimate),
    })
}

/// Delay of a range-dictionary column for a grid of `base` points at the
/// sensing rate.
fn delay_of_bin(bin: usize, dict: &DftDictionary, setup: &Setup, base: usize) -> f64 {
    delay_of_bin_at(bin, dict.oversample(), base, setup.params.sense_rate_hz, setup)
}

fn delay_of_bin_at(bin: usize, oversample: usize, base: usize, rate: f64, setup: &Setup) -> f64 {
    bin as f64 * rate * setup.params.payload_s / (setup.params.bandwidth_hz * oversample as f64 * base as f64)
}

/// Per-symbol compensation factor: the PC column of each symbol averaged
/// with weights `|b_n|^2`, where `b` is the detected range atom on the kept
/// rows.
fn pc_factors(pc: &PcMatrix, bin: usize, dict: &DftDictionary, sampling: &FrameSampling) -> Vec<Complex64> {
    let conj = dict.conjugate();
    (0..pc.symbols)
        .map(|p| {
            let rows = sampling.for_symbol(p).indices();
            let b = conj.compressed_column(rows, bin);
            let weight: f64 = b.iter().map(|z| z.norm_sqr()).sum();
            let sum: Complex64 = pc.symbol(p).iter().zip(&b).map(|(r, z)| r * z.norm_sqr()).sum();
            sum / weight
        })
        .collect()
}

/// Phase-compensated Doppler estimation on every antenna pair.
///
/// `row` is the range coefficient row of one target over the `P * Lr`
/// columns. Each pair is solved with a single-atom OMP against `ve_dict`
/// restricted to the symbols of its transmit antenna.
#[allow(clippy::too_many_arguments)]
pub fn velocity_estimate(
    row: &[Complex64],
    bin: usize,
    pc: &PcMatrix,
    schedule: &TdmSchedule,
    sampling: &FrameSampling,
    re_dict: &DftDictionary,
    ve_dict: &DftDictionary,
    setup: &Setup,
) -> Result<VelocityResult> {
    let p_count = setup.params.symbols;
    let lr = setup.params.rx_antennas;
    if row.len() != p_count * lr {
        return Err(Error::LengthMismatch {
            expected: p_count * lr,
            actual: row.len(),
        });
    }
    let factors = pc_factors(pc, bin, re_dict, sampling);
    let grid = ve_dict.columns();
    let step = setup.derived.wavelength / (2.0 * grid as f64 * setup.derived.symbol_period);
    let mut pairs = Vec::with_capacity(schedule.tx_antennas() * lr);
    for l in 0..schedule.tx_antennas() {
        let symbols = schedule.symbols_of(l);
        for r in 0..lr {
            let values: Vec<Complex64> = symbols.iter().map(|&p| row[p * lr + r] * factors[p]).collect();
            let est = omp(&values, symbols, ve_dict, StopRule::atoms(1))?;
            let Some(&q) = est.support.first() else {
                return Err(Error::MissingPairEstimate(l * lr + r));
            };
            pairs.push(PairEstimate {
                bin: q,
                velocity: signed_bin(q, grid) as f64 * step,
                amplitude: est.coefficient(q),
            });
        }
    }
    Ok(VelocityResult::from_pairs(pairs))
}

/// Beamforming over the virtual array built from the per-pair amplitudes.
pub fn angle_estimate(velocity: &VelocityResult, dict: &DenseDictionary) -> Result<AngleResult> {
    if velocity.pairs.len() < dict.rows() {
        return Err(Error::MissingPairEstimate(velocity.pairs.len()));
    }
    let a: Vec<Complex64> = velocity.pairs.iter().map(|e| e.amplitude).collect();
    angle_from_array(a, dict)
}

fn angle_from_array(a: Vec<Complex64>, dict: &DenseDictionary) -> Result<AngleResult> {
    if a.len() != dict.rows() {
        return Err(Error::LengthMismatch {
            expected: dict.rows(),
            actual: a.len(),
        });
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for n in 0..dict.columns() {
        let score = a.iter().zip(dict.column(n)).map(|(x, f)| x * f).sum::<Complex64>().norm();
        if score > best_score {
            best = n;
            best_score = score;
        }
    }
    Ok(AngleResult {
        virtual_array: a,
        bin: best,
        angle: dict.grid_value(best),
    })
}

/// Estimate of one detected target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    pub range_bin: usize,
    pub range: f64,
    pub velocity: f64,
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensingEstimate {
    pub range: RangeResult,
    pub velocities: Vec<VelocityResult>,
    pub angles: Vec<AngleResult>,
}

impl SensingEstimate {
    pub fn targets(&self) -> Vec<TargetEstimate> {
        self.range
            .ranges()
            .into_iter()
            .zip(&self.range.bins)
            .zip(self.velocities.iter().zip(&self.angles))
            .map(|((range, &range_bin), (v, a))| TargetEstimate {
                range_bin,
                range,
                velocity: v.velocity,
                angle: a.angle,
            })
            .collect()
    }
}

/// Whether velocity estimation compensates the per-symbol segment phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseCompensation {
    Enabled,
    Disabled,
}

/// Dictionaries shared by every frame processed with one parameter set.
#[derive(Clone, Debug)]
pub struct SensingProcessor {
    pub setup: Setup,
    pub re_dict: DftDictionary,
    pub ve_dict: DftDictionary,
    pub ae_dict: DenseDictionary,
}

impl SensingProcessor {
    pub fn new(setup: &Setup) -> Self {
        let p = &setup.params;
        Self {
            setup: setup.clone(),
            re_dict: build_dft_dictionary(setup.derived.sense_grid, p.range_oversample),
            // The slow-time tone rotates with +2 pi mu T0 per symbol.
            ve_dict: DftDictionary::new(p.symbols, p.velocity_oversample, Sign::Positive),
            ae_dict: build_ae_dictionary(p.tx_antennas * p.rx_antennas, p.angle_oversample),
        }
    }

    /// Full compressed-sensing pipeline for one frame.
    pub fn process(
        &self,
        tensor: &IfSampleTensor,
        sampling: &FrameSampling,
        schedule: &TdmSchedule,
        payload: &Payload,
        targets: usize,
        compensation: PhaseCompensation,
    ) -> Result<SensingEstimate> {
        let setup = &self.setup;
        let range = range_estimate(tensor, sampling, &self.re_dict, setup, targets)?;
        let mut velocities = Vec::with_capacity(targets);
        let mut angles = Vec::with_capacity(targets);
        for (k, &bin) in range.bins.iter().enumerate() {
            let pc = match compensation {
                PhaseCompensation::Enabled => build_pc_matrix(range.delays[k], payload, sampling, setup),
                PhaseCompensation::Disabled => PcMatrix::ones(sampling.samples_per_symbol(), payload.len()),
            };
            let v = velocity_estimate(
                &range.rows[k],
                bin,
                &pc,
                schedule,
                sampling,
                &self.re_dict,
                &self.ve_dict,
                setup,
            )?;
            angles.push(angle_estimate(&v, &self.ae_dict)?);
            velocities.push(v);
        }
        Ok(SensingEstimate {
            range,
            velocities,
            angles,
        })
    }
}

/// Indices `0..base` on `grid`, the sampling set of the baseline receiver.
pub fn baseline_sampling(grid: IfGrid) -> FrameSampling {
    FrameSampling::Shared(SamplingIndexSet::full(grid.base))
}

/// Uniform sampling and DFT processing.
///
/// `tensor` holds every sample of `grid` for every symbol. Range bins are the
/// `targets` strongest local maxima of the non-coherently summed zero-padded
/// spectra. Velocity comes from a per-antenna slow-time DFT with PC I applied,
/// treating each antenna's symbols as a uniform train; the schedule must
/// therefore be round-robin. The Doppler phase between antennas is then
/// removed with the velocity estimate before beamforming.
pub fn baseline_uniform_dft(
    tensor: &IfSampleTensor,
    grid: IfGrid,
    schedule: &TdmSchedule,
    payload: &Payload,
    setup: &Setup,
    targets: usize,
) -> Result<SensingEstimate> {
    let (p_count, n_count, lr) = tensor.shape();
    if n_count != grid.base {
        return Err(Error::LengthMismatch {
            expected: grid.base,
            actual: n_count,
        });
    }
    let lt = schedule.tx_antennas();
    let per_antenna = p_count / lt;
    for l in 0..lt {
        let expected: Vec<usize> = (0..per_antenna).map(|j| j * lt + l).collect();
        if schedule.symbols_of(l) != expected.as_slice() {
            return Err(Error::Config("the DFT baseline needs a round-robin schedule".into()));
        }
    }

    let oversample = setup.params.range_oversample;
    let re = build_dft_dictionary(grid.base, oversample);
    let m = re.columns();
    let rows: Vec<usize> = (0..n_count).collect();
    let mut power = vec![0.0f64; m];
    let mut spectra = Vec::with_capacity(p_count * lr);
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for p in 0..p_count {
        for r in 0..lr {
            re.correlate(&rows, &tensor.column(p, r), &mut buf);
            for (acc, z) in power.iter_mut().zip(&buf) {
                *acc += z.norm_sqr();
            }
            spectra.push(buf.iter().map(|z| z / n_count as f64).collect::<Vec<_>>());
        }
    }
    let bins = top_peaks(&power, targets);
    if bins.len() < targets {
        return Err(Error::InsufficientSupport {
            requested: targets,
            available: bins.len(),
        });
    }
    let delays: Vec<f64> = bins
        .iter()
        .map(|&b| delay_of_bin_at(b, oversample, grid.base, grid.rate, setup))
        .collect();
    let coeff_rows: Vec<Vec<Complex64>> = bins.iter().map(|&b| spectra.iter().map(|s| s[b]).collect()).collect();

    let sampling = baseline_sampling(grid);
    let ve_grid = setup.params.velocity_oversample * per_antenna;
    let slow = DftDictionary::new(per_antenna, setup.params.velocity_oversample, Sign::Positive);
    let step = setup.derived.wavelength / (2.0 * ve_grid as f64 * lt as f64 * setup.derived.symbol_period);
    let ae = build_ae_dictionary(lt * lr, setup.params.angle_oversample);
    let slow_rows: Vec<usize> = (0..per_antenna).collect();

    let mut velocities = Vec::with_capacity(targets);
    let mut angles = Vec::with_capacity(targets);
    for (k, &bin) in bins.iter().enumerate() {
        let pc = build_pc_matrix_on(delays[k], payload, &sampling, setup, grid);
        let factors = pc_factors(&pc, bin, &re, &sampling);
        let mut pairs = Vec::with_capacity(lt * lr);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); ve_grid];
        for l in 0..lt {
            for r in 0..lr {
                let values: Vec<Complex64> = schedule
                    .symbols_of(l)
                    .iter()
                    .map(|&p| coeff_rows[k][p * lr + r] * factors[p])
                    .collect();
                slow.correlate(&slow_rows, &values, &mut spectrum);
                let q = argmax_norm(&spectrum);
                pairs.push(PairEstimate {
                    bin: q,
                    velocity: signed_bin(q, ve_grid) as f64 * step,
                    amplitude: spectrum[q] / per_antenna as f64,
                });
            }
        }
        let v = VelocityResult::from_pairs(pairs);
        // Antenna l first transmits at symbol l; rotate its entries back to symbol 0.
        let doppler = 2.0 * v.velocity / setup.derived.wavelength;
        let a: Vec<Complex64> = v
            .pairs
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let l = i / lr;
                e.amplitude * Complex64::from_polar(1.0, -TAU * (doppler * l as f64 * setup.derived.symbol_period))
            })
            .collect();
        angles.push(angle_from_array(a, &ae)?);
        velocities.push(v);
    }
    Ok(SensingEstimate {
        range: RangeResult {
            bins,
            delays,
            rows: coeff_rows,
            estimate: None,
        },
        velocities,
        angles,
    })
}

fn argmax_norm(values: &[Complex64]) -> usize {
    let mut best = 0;
    for (i, z) in values.iter().enumerate() {
        if z.norm_sqr() > values[best].norm_sqr() {
            best = i;
        }
    }
    best
}

/// The `k` largest local maxima of `power`, strongest first, ties to the lower index.
fn top_peaks(power: &[f64], k: usize) -> Vec<usize> {
    let n = power.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { power[i - 1] };
            let right = if i + 1 == n { f64::NEG_INFINITY } else { power[i + 1] };
            power[i] >= left && power[i] > right && power[i] > 0.0
        })
        .collect();
    peaks.sort_by(|&a, &b| power[b].total_cmp(&power[a]).then(a.cmp(&b)));
    peaks.truncate(k);
    peaks
}

/// Velocity folded into the unambiguous interval of a train with period `pri`.
pub fn aliased_velocity(v: f64, wavelength: f64, pri: f64) -> f64 {
    let span = wavelength / (2.0 * pri);
    v - span * (v / span).round()
}

/// Angle of a virtual-array dictionary column, for callers that only have the bin.
pub fn angle_of_bin(bin: usize, elements: usize, rho: usize) -> f64 {
    let size = (rho * elements) as f64;
    (bin as f64 - size / 2.0) * PI / size
}
