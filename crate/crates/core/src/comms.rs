//! Communication receiver: de-chirping, compressed two-bin demodulation and
//! the uniform-sampling LoRa baseline.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::Setup;
use crate::cs::{omp, DftDictionary, Dictionary, Sign, SparseEstimate, StopRule};
use crate::error::{Error, Result};
use crate::sampling::{uniform_set, SamplingIndexSet};

/// Digital down-chirp `exp(j pi (-(B/T) x^2 + B x))` at `x = m / fbar`.
pub fn build_downchirp(set: &SamplingIndexSet, setup: &Setup) -> Vec<Complex64> {
    let b = setup.params.bandwidth_hz;
    let t = setup.params.payload_s;
    let fbar = setup.params.comm_rate_hz;
    set.indices()
        .iter()
        .map(|&m| {
            let x = m as f64 / fbar;
            let cycles = 0.5 * (-(b / t) * x * x + b * x);
            Complex64::from_polar(1.0, TAU * (cycles - cycles.round()))
        })
        .collect()
}

/// De-chirped samples of one symbol together with their grid indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DechirpSequence {
    pub values: Vec<Complex64>,
    pub indices: Vec<usize>,
}

pub fn dechirp(rx: &[Complex64], downchirp: &[Complex64], set: &SamplingIndexSet) -> Result<DechirpSequence> {
    if rx.len() != downchirp.len() || rx.len() != set.len() {
        return Err(Error::LengthMismatch {
            expected: set.len(),
            actual: rx.len(),
        });
    }
    Ok(DechirpSequence {
        values: rx.iter().zip(downchirp).map(|(a, b)| a * b).collect(),
        indices: set.indices().to_vec(),
    })
}

/// Index of the first de-chirped sample in the folded segment,
/// `floor(fbar (T - h/B))`.
pub fn fold_index(shift: usize, setup: &Setup) -> usize {
    crate::config::grid_floor(setup.params.comm_rate_hz * setup.wrap_time(shift)).max(0) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemodResult {
    pub symbol: usize,
    /// Magnitudes at the two bins of the decided symbol.
    pub bin_energies: [f64; 2],
    pub estimate: Option<SparseEstimate>,
}

/// Compressed demodulator for one parameter set.
#[derive(Clone, Debug)]
pub struct CommReceiver {
    alphabet: usize,
    offset: usize,
    dict: DftDictionary,
}

impl CommReceiver {
    pub fn new(setup: &Setup) -> Self {
        Self {
            alphabet: setup.derived.alphabet,
            offset: setup.derived.comm_bin_offset,
            // De-chirped tones rotate with +2 pi h m / NbarMax.
            dict: DftDictionary::new(setup.derived.comm_grid, 1, Sign::Positive),
        }
    }

    pub fn dictionary(&self) -> &DftDictionary {
        &self.dict
    }

    /// Two-atom OMP followed by the two-bin decision. Bins outside the
    /// recovered support contribute zero; ties go to the lowest symbol.
    pub fn demodulate(&self, seq: &DechirpSequence) -> Result<DemodResult> {
        let est = omp(&seq.values, &seq.indices, &self.dict, StopRule::atoms(2))?;
        let magnitude = |bin: usize| est.coefficient(bin).norm();
        let mut best: Option<(usize, f64)> = None;
        let mut candidates: Vec<usize> = Vec::new();
        for &c in &est.support {
            if c < self.alphabet {
                candidates.push(c);
            }
            if c >= self.offset && c - self.offset < self.alphabet {
                candidates.push(c - self.offset);
            }
        }
        candidates.sort_unstable();
        for h in candidates {
            let metric = magnitude(h) + magnitude(h + self.offset);
            if best.is_none_or(|(_, m)| metric > m) {
                best = Some((h, metric));
            }
        }
        let symbol = best.map_or(0, |(h, _)| h);
        Ok(DemodResult {
            symbol,
            bin_energies: [magnitude(symbol), magnitude(symbol + self.offset)],
            estimate: Some(est),
        })
    }

    /// The combined metric `|x[h]| + |x[h + offset]|` for every symbol.
    pub fn metric(&self, est: &SparseEstimate) -> Vec<f64> {
        (0..self.alphabet)
            .map(|h| est.coefficient(h).norm() + est.coefficient(h + self.offset).norm())
            .collect()
    }
}

/// Decision space of the uniform-sampling baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineAlphabet {
    /// Only the first `H * eta` symbols are used, one per resolvable bin.
    Reduced,
    /// All `H` symbols are hypothesised; aliased bins make most of them ambiguous.
    Full,
}

/// Classical de-chirp and DFT demodulation on a uniform grid with stride
/// `NbarMax / samples`.
#[derive(Clone, Debug)]
pub struct LoraBaseline {
    set: SamplingIndexSet,
    downchirp: Vec<Complex64>,
    dft: DftDictionary,
    alphabet: usize,
    offset: usize,
    mode: BaselineAlphabet,
    reduced: usize,
    spreading_factor: u32,
}

impl LoraBaseline {
    pub fn new(setup: &Setup, samples: usize, mode: BaselineAlphabet) -> Result<Self> {
        let grid = setup.derived.comm_grid;
        let set = uniform_set(samples, grid)?;
        let ratio = samples as f64 / grid as f64;
        let reduced_f = setup.derived.alphabet as f64 * ratio;
        let reduced = reduced_f.round() as usize;
        if (reduced_f - reduced as f64).abs() > 1e-9 || !reduced.is_power_of_two() || grid % samples != 0 {
            return Err(Error::ReducedAlphabetNotPowerOfTwo(reduced_f));
        }
        Ok(Self {
            downchirp: build_downchirp(&set, setup),
            set,
            dft: DftDictionary::new(samples, 1, Sign::Positive),
            alphabet: setup.derived.alphabet,
            offset: setup.derived.comm_bin_offset,
            mode,
            reduced,
            spreading_factor: setup.params.spreading_factor,
        })
    }

    pub fn sampling_set(&self) -> &SamplingIndexSet {
        &self.set
    }

    /// Number of symbols the transmitter may use in this mode.
    pub fn usable_alphabet(&self) -> usize {
        match self.mode {
            BaselineAlphabet::Reduced => self.reduced,
            BaselineAlphabet::Full => self.alphabet,
        }
    }

    /// Reliable bits per symbol, `NSF + log2(eta)`.
    pub fn effective_bits(&self) -> u32 {
        self.reduced.trailing_zeros()
    }

    /// Bits carried per symbol in the configured mode.
    pub fn bits_per_symbol(&self) -> u32 {
        match self.mode {
            BaselineAlphabet::Reduced => self.effective_bits(),
            BaselineAlphabet::Full => self.spreading_factor,
        }
    }

    pub fn demodulate(&self, rx: &[Complex64]) -> Result<DemodResult> {
        let seq = dechirp(rx, &self.downchirp, &self.set)?;
        let n = self.set.len();
        let rows: Vec<usize> = (0..n).collect();
        let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
        self.dft.correlate(&rows, &seq.values, &mut spectrum);
        let mag = |bin: usize| spectrum[bin % n].norm() / n as f64;
        let mut best = (0usize, f64::NEG_INFINITY);
        for h in 0..self.usable_alphabet() {
            let metric = mag(h) + mag(h + self.offset);
            if metric > best.1 {
                best = (h, metric);
            }
        }
        Ok(DemodResult {
            symbol: best.0,
            bin_energies: [mag(best.0), mag(best.0 + self.offset)],
            estimate: None,
        })
    }
}

const IQ_MAGIC: &[u8; 8] = b"LRDRIQ\0\0";
const IQ_VERSION: u32 = 1;

/// Dump of de-chirped sequences.
///
/// Layout, all little-endian: 8-byte magic `LRDRIQ\0\0`, `u32` version,
/// 32-byte SHA-256 of the parameter set, `u64` record count, then per record
/// a `u64` length `n`, `n` `u64` grid indices and `n` interleaved `f64`
/// real/imaginary pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct IqDump {
    pub params_digest: [u8; 32],
    pub records: Vec<DechirpSequence>,
}

impl IqDump {
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(IQ_MAGIC)?;
        w.write_all(&IQ_VERSION.to_le_bytes())?;
        w.write_all(&self.params_digest)?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for rec in &self.records {
            w.write_all(&(rec.values.len() as u64).to_le_bytes())?;
            for &m in &rec.indices {
                w.write_all(&(m as u64).to_le_bytes())?;
            }
            for z in &rec.values {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> std::io::Result<Self> {
        let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != IQ_MAGIC {
            return Err(bad("not an IQ dump"));
        }
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b)?;
        if u32::from_le_bytes(u32b) != IQ_VERSION {
            return Err(bad("unsupported IQ dump version"));
        }
        let mut params_digest = [0u8; 32];
        r.read_exact(&mut params_digest)?;
        let mut u64b = [0u8; 8];
        let mut next_u64 = |r: &mut dyn Read| -> std::io::Result<u64> {
            r.read_exact(&mut u64b)?;
            Ok(u64::from_le_bytes(u64b))
        };
        let count = next_u64(&mut r)?;
        let mut records = Vec::new();
        for _ in 0..count {
            let n = next_u64(&mut r)? as usize;
            let indices = (0..n).map(|_| next_u64(&mut r).map(|m| m as usize)).collect::<std::io::Result<_>>()?;
            let values = (0..n)
                .map(|_| {
                    let re = f64::from_bits(next_u64(&mut r)?);
                    let im = f64::from_bits(next_u64(&mut r)?);
                    Ok(Complex64::new(re, im))
                })
                .collect::<std::io::Result<_>>()?;
            records.push(DechirpSequence { values, indices });
        }
        Ok(Self {
            params_digest,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file)).map_err(|e| Error::io(path, e))
    }
}
