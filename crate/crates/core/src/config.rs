//! Waveform and receiver parameters.
//!
//! [`WaveformParams`] is the user-facing parameter set (SI units throughout).
//! [`validate`] checks it and evaluates every derived grid constant into a
//! [`DerivedParams`]; the pair is bundled as a [`Setup`] that the rest of the
//! crate borrows immutably.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative tolerance on the chirp-rate constraint `B = 2^nsf / T`.
pub const BANDWIDTH_TOLERANCE: f64 = 1e-3;

/// Floor that absorbs floating-point noise sitting just below an integer,
/// e.g. `2e9 * 16.384e-6 = 32767.999...`.
pub(crate) fn grid_floor(x: f64) -> i64 {
    (x + 1e-9 * x.abs().max(1.0)).floor() as i64
}

/// User-settable waveform parameters. Keys in configuration files use the
/// short names given in the `serde(rename)` attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformParams {
    /// Carrier frequency (Hz).
    #[serde(rename = "fc")]
    pub carrier_hz: f64,
    /// Sweep bandwidth (Hz).
    #[serde(rename = "b")]
    pub bandwidth_hz: f64,
    /// Bits per symbol; the alphabet has `2^spreading_factor` shifts.
    #[serde(rename = "nsf")]
    pub spreading_factor: u32,
    /// Payload (chirp) duration (s).
    #[serde(rename = "t")]
    pub payload_s: f64,
    /// Guard interval appended to every symbol (s).
    #[serde(rename = "tgi")]
    pub guard_s: f64,
    /// Leading part of each symbol excluded from the IF observation (s).
    #[serde(rename = "tmix")]
    pub mix_guard_s: f64,
    /// Symbols per frame.
    #[serde(rename = "p")]
    pub symbols: usize,
    #[serde(rename = "lt")]
    pub tx_antennas: usize,
    #[serde(rename = "lr")]
    pub rx_antennas: usize,
    /// Sensing low-pass cutoff and base sampling rate (Hz).
    #[serde(rename = "fmax")]
    pub sense_rate_hz: f64,
    /// Communication base sampling rate (Hz).
    #[serde(rename = "fbar")]
    pub comm_rate_hz: f64,
    /// Sensing samples kept per symbol.
    #[serde(rename = "n")]
    pub sense_samples: usize,
    /// Communication samples kept per symbol.
    #[serde(rename = "nbar")]
    pub comm_samples: usize,
    #[serde(rename = "rho_re")]
    pub range_oversample: usize,
    #[serde(rename = "rho_ve")]
    pub velocity_oversample: usize,
    #[serde(rename = "rho_ae")]
    pub angle_oversample: usize,
    pub seed: u64,
    /// Forces the sensing grid length instead of `floor(fmax (T - Tmix))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nmax_override: Option<usize>,
}

impl WaveformParams {
    /// 77 GHz, 1 GHz sweep, 14-bit symbols with `T = H / B` exactly.
    pub fn paper_1ghz() -> Self {
        Self {
            carrier_hz: 77e9,
            bandwidth_hz: 1e9,
            spreading_factor: 14,
            payload_s: 16.384e-6,
            guard_s: 0.5e-6,
            mix_guard_s: 0.5e-6,
            symbols: 120,
            tx_antennas: 2,
            rx_antennas: 6,
            sense_rate_hz: 31.25e6,
            comm_rate_hz: 2e9,
            sense_samples: 448,
            comm_samples: 512,
            range_oversample: 1,
            velocity_oversample: 1,
            angle_oversample: 15,
            seed: 0,
            nmax_override: None,
        }
    }

    /// Half the bandwidth with a 13-bit alphabet, keeping the same payload duration.
    pub fn paper_500mhz() -> Self {
        Self {
            bandwidth_hz: 500e6,
            spreading_factor: 13,
            ..Self::paper_1ghz()
        }
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("waveform parameters always serialize")
    }

    pub fn alphabet(&self) -> usize {
        1usize << self.spreading_factor
    }
}

/// Named parameter presets selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "paper-1ghz")]
    Paper1Ghz,
    #[serde(rename = "paper-500mhz")]
    Paper500Mhz,
}

impl Preset {
    pub fn params(self) -> WaveformParams {
        match self {
            Preset::Paper1Ghz => WaveformParams::paper_1ghz(),
            Preset::Paper500Mhz => WaveformParams::paper_500mhz(),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-1ghz" => Ok(Preset::Paper1Ghz),
            "paper-500mhz" => Ok(Preset::Paper500Mhz),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

/// Quantities computed from a validated [`WaveformParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Alphabet size `2^nsf`.
    pub alphabet: usize,
    /// Payload plus guard interval (s).
    pub symbol_period: f64,
    pub wavelength: f64,
    /// Receive element spacing, half a wavelength (m).
    pub element_spacing: f64,
    /// Full-rate sensing samples per symbol (`Nmax`).
    pub sense_grid: usize,
    /// Full-rate communication samples per symbol (`floor(fbar T)`).
    pub comm_grid: usize,
    /// Range represented by one column of the range dictionary (m).
    pub range_step: f64,
    /// Velocity represented by one column of the velocity dictionary (m/s).
    pub velocity_step: f64,
    pub max_unambiguous_velocity: f64,
    pub max_range: f64,
    /// Largest range error still counted as a detection (m).
    pub hit_threshold: f64,
    /// Spectral distance between the two de-chirped tone bins, `(fbar - B) H / B`.
    pub comm_bin_offset: usize,
}

/// Validated parameters together with their derived constants.
#[derive(Clone, Debug, PartialEq)]
pub struct Setup {
    pub params: WaveformParams,
    pub derived: DerivedParams,
}

impl Setup {
    pub fn new(params: WaveformParams) -> Result<Self> {
        let derived = validate(&params)?;
        Ok(Self { params, derived })
    }

    /// Wrap instant `T - h/B` of a symbol with shift `shift`.
    pub fn wrap_time(&self, shift: usize) -> f64 {
        self.params.payload_s - shift as f64 / self.params.bandwidth_hz
    }

    /// Delay represented by range-dictionary column `bin`.
    pub fn delay_of_range_bin(&self, bin: usize) -> f64 {
        let p = &self.params;
        bin as f64 * p.sense_rate_hz * p.payload_s
            / (p.bandwidth_hz * p.range_oversample as f64 * self.derived.sense_grid as f64)
    }

    /// Short content hash of the parameter set, used to tag emitted files.
    pub fn params_hash(&self) -> String {
        params_hash(&self.params)
    }
}

/// SHA-256 of the canonical TOML rendering of `params`.
pub fn params_digest(params: &WaveformParams) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    Sha256::digest(params.to_toml_string().as_bytes()).into()
}

pub fn params_hash(params: &WaveformParams) -> String {
    params_digest(params)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Check `params` and evaluate all derived constants.
pub fn validate(params: &WaveformParams) -> Result<DerivedParams> {
    let p = params;
    for (name, value) in [
        ("fc", p.carrier_hz),
        ("b", p.bandwidth_hz),
        ("t", p.payload_s),
        ("tgi", p.guard_s),
        ("tmix", p.mix_guard_s),
        ("fmax", p.sense_rate_hz),
        ("fbar", p.comm_rate_hz),
    ] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::NonPositive(name));
        }
    }
    for (name, value) in [
        ("nsf", p.spreading_factor as usize),
        ("p", p.symbols),
        ("lt", p.tx_antennas),
        ("lr", p.rx_antennas),
        ("n", p.sense_samples),
        ("nbar", p.comm_samples),
        ("rho_re", p.range_oversample),
        ("rho_ve", p.velocity_oversample),
        ("rho_ae", p.angle_oversample),
    ] {
        if value == 0 {
            return Err(Error::NonPositive(name));
        }
    }
    if p.spreading_factor >= usize::BITS - 1 {
        return Err(Error::Config(format!(
            "spreading factor {} is too large",
            p.spreading_factor
        )));
    }
    if !(p.guard_s >= p.mix_guard_s && p.payload_s > p.mix_guard_s) {
        return Err(Error::GuardOrder {
            tgi: p.guard_s,
            tmix: p.mix_guard_s,
            t: p.payload_s,
        });
    }

    let alphabet = p.alphabet();
    let expected = alphabet as f64 / p.payload_s;
    let relative = (p.bandwidth_hz - expected).abs() / p.bandwidth_hz;
    if relative > BANDWIDTH_TOLERANCE {
        return Err(Error::BandwidthMismatch {
            bandwidth: p.bandwidth_hz,
            expected,
            relative,
        });
    }
    if p.symbols % p.tx_antennas != 0 {
        return Err(Error::ScheduleIndivisible {
            symbols: p.symbols,
            antennas: p.tx_antennas,
        });
    }

    let window = p.payload_s - p.mix_guard_s;
    let natural_grid = grid_floor(p.sense_rate_hz * window).max(0) as usize;
    let sense_grid = p.nmax_override.unwrap_or(natural_grid);
    let comm_grid = grid_floor(p.comm_rate_hz * p.payload_s).max(0) as usize;
    if p.sense_samples > sense_grid {
        return Err(Error::SamplingOverrun {
            what: "sensing",
            requested: p.sense_samples,
            available: sense_grid,
        });
    }
    if p.comm_samples > comm_grid {
        return Err(Error::SamplingOverrun {
            what: "communication",
            requested: p.comm_samples,
            available: comm_grid,
        });
    }
    if p.comm_rate_hz < p.bandwidth_hz {
        return Err(Error::CommRateBelowBandwidth {
            fbar: p.comm_rate_hz,
            bandwidth: p.bandwidth_hz,
        });
    }
    let offset = (p.comm_rate_hz - p.bandwidth_hz) * alphabet as f64 / p.bandwidth_hz;
    if (offset - offset.round()).abs() > 1e-6 * offset.abs().max(1.0) {
        return Err(Error::BinOffsetNonInteger(offset));
    }

    let wavelength = SPEED_OF_LIGHT / p.carrier_hz;
    let symbol_period = p.payload_s + p.guard_s;
    let max_range = SPEED_OF_LIGHT * p.sense_rate_hz * window / (2.0 * p.bandwidth_hz);
    let hit_threshold = SPEED_OF_LIGHT * window / (2.0 * p.bandwidth_hz * p.payload_s);
    if hit_threshold >= max_range {
        return Err(Error::DegenerateRangeGrid {
            threshold: hit_threshold,
            max_range,
        });
    }

    Ok(DerivedParams {
        alphabet,
        symbol_period,
        wavelength,
        element_spacing: wavelength / 2.0,
        sense_grid,
        comm_grid,
        range_step: p.sense_rate_hz * p.payload_s * SPEED_OF_LIGHT
            / (2.0 * p.bandwidth_hz * p.range_oversample as f64 * sense_grid as f64),
        velocity_step: wavelength
            / (2.0 * p.velocity_oversample as f64 * p.symbols as f64 * symbol_period),
        max_unambiguous_velocity: wavelength / (4.0 * symbol_period),
        max_range,
        hit_threshold,
        comm_bin_offset: offset.round() as usize,
    })
}
