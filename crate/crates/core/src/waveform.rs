//! Symbol stream: payload shifts, the pseudo-random TDM antenna schedule and
//! the shifted-chirp transmit waveform.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Setup;
use crate::error::{Error, Result};

/// Frequency-shift indices carried by the symbols of one frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    shifts: Vec<usize>,
}

impl Payload {
    pub fn new(shifts: Vec<usize>, alphabet: usize) -> Result<Self> {
        if let Some(&bad) = shifts.iter().find(|&&h| h >= alphabet) {
            return Err(Error::SymbolOutOfRange {
                index: bad,
                alphabet,
            });
        }
        Ok(Self { shifts })
    }

    /// Every symbol uses shift zero (a conventional FMCW frame).
    pub fn zeros(symbols: usize) -> Self {
        Self {
            shifts: vec![0; symbols],
        }
    }

    pub fn shifts(&self) -> &[usize] {
        &self.shifts
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }
}

pub fn generate_payload<R: Rng + ?Sized>(symbols: usize, alphabet: usize, rng: &mut R) -> Result<Payload> {
    if alphabet < 2 {
        return Err(Error::DegenerateAlphabet(alphabet));
    }
    let shifts = (0..symbols).map(|_| rng.random_range(0..alphabet)).collect();
    Ok(Payload { shifts })
}

/// Transmit antenna used by each symbol, plus the per-antenna symbol sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TdmSchedule {
    antennas: Vec<usize>,
    sets: Vec<Vec<usize>>,
}

impl TdmSchedule {
    pub fn from_antennas(antennas: Vec<usize>, tx_antennas: usize) -> Result<Self> {
        let mut sets = vec![Vec::new(); tx_antennas];
        for (p, &l) in antennas.iter().enumerate() {
            if l >= tx_antennas {
                return Err(Error::SymbolOutOfRange {
                    index: l,
                    alphabet: tx_antennas,
                });
            }
            sets[l].push(p);
        }
        Ok(Self { antennas, sets })
    }

    /// Conventional TDM order `0, 1, ..., Lt-1, 0, 1, ...`.
    pub fn round_robin(symbols: usize, tx_antennas: usize) -> Result<Self> {
        if tx_antennas == 0 || symbols % tx_antennas != 0 {
            return Err(Error::ScheduleIndivisible {
                symbols,
                antennas: tx_antennas,
            });
        }
        Self::from_antennas((0..symbols).map(|p| p % tx_antennas).collect(), tx_antennas)
    }

    pub fn antennas(&self) -> &[usize] {
        &self.antennas
    }

    /// Ordered symbol indices transmitted from antenna `l`.
    pub fn symbols_of(&self, l: usize) -> &[usize] {
        &self.sets[l]
    }

    pub fn tx_antennas(&self) -> usize {
        self.sets.len()
    }
}

/// Balanced pseudo-random schedule: a uniformly shuffled multiset holding
/// `symbols / tx_antennas` copies of every antenna index.
pub fn generate_schedule<R: Rng + ?Sized>(symbols: usize, tx_antennas: usize, rng: &mut R) -> Result<TdmSchedule> {
    if tx_antennas == 0 || symbols % tx_antennas != 0 {
        return Err(Error::ScheduleIndivisible {
            symbols,
            antennas: tx_antennas,
        });
    }
    let mut antennas: Vec<usize> = (0..symbols).map(|p| p % tx_antennas).collect();
    antennas.shuffle(rng);
    TdmSchedule::from_antennas(antennas, tx_antennas)
}

fn check_time(x: f64, setup: &Setup) -> Result<()> {
    let payload = setup.params.payload_s;
    if !(0.0..payload).contains(&x) {
        return Err(Error::TimeOutOfRange { time: x, payload });
    }
    Ok(())
}

/// Instantaneous frequency of a symbol with shift `shift` at time `x` into
/// the payload, wrapped into `[-B/2, B/2)`.
pub fn inst_frequency(x: f64, shift: usize, setup: &Setup) -> Result<f64> {
    check_time(x, setup)?;
    let b = setup.params.bandwidth_hz;
    let t = setup.params.payload_s;
    Ok((b / t * x + shift as f64 / t).rem_euclid(b) - b / 2.0)
}

/// Accumulated phase in cycles, `\int_0^x f(u) du`, of the shifted chirp.
/// No range check; callers guarantee `0 <= x <= T`.
pub(crate) fn phase_cycles(x: f64, shift: usize, setup: &Setup) -> f64 {
    let b = setup.params.bandwidth_hz;
    let t = setup.params.payload_s;
    let quadratic = b / (2.0 * t) * x * x + (shift as f64 / t - b / 2.0) * x;
    let wrap = setup.wrap_time(shift);
    if shift > 0 && x >= wrap {
        quadratic - b * (x - wrap)
    } else {
        quadratic
    }
}

/// Carrier-free transmit sample `exp(j 2 pi Theta(x))`.
pub fn tx_baseband_sample(x: f64, shift: usize, setup: &Setup) -> Result<Complex64> {
    check_time(x, setup)?;
    Ok(unit_phasor(phase_cycles(x, shift, setup)))
}

/// `exp(j 2 pi cycles)` with the integer part removed first.
pub(crate) fn unit_phasor(cycles: f64) -> Complex64 {
    Complex64::from_polar(1.0, TAU * (cycles - cycles.round()))
}
