//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the synthesis or estimation code paths it checks.

#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use loradar::config::SPEED_OF_LIGHT;
use loradar::{Setup, WaveformParams};
use num_complex::Complex64;

/// Small parameter set for time-domain oracles: H = 64, Nmax = 32,
/// NbarMax = 128, two receive antennas.
pub fn reduced_params() -> WaveformParams {
    WaveformParams {
        carrier_hz: 10e9,
        bandwidth_hz: 64e6,
        spreading_factor: 6,
        payload_s: 1e-6,
        guard_s: 0.2e-6,
        mix_guard_s: 0.2e-6,
        symbols: 4,
        tx_antennas: 1,
        rx_antennas: 2,
        sense_rate_hz: 40e6,
        comm_rate_hz: 128e6,
        sense_samples: 32,
        comm_samples: 128,
        range_oversample: 1,
        velocity_oversample: 1,
        angle_oversample: 1,
        seed: 0,
        nmax_override: None,
    }
}

pub fn reduced_setup() -> Setup {
    Setup::new(reduced_params()).unwrap()
}

/// Instantaneous transmit frequency written out from the chirp definition.
pub fn chirp_frequency(x: f64, shift: usize, b: f64, t: f64) -> f64 {
    let f = b * x / t + shift as f64 / t - b / 2.0;
    if x < t - shift as f64 / b {
        f
    } else {
        f - b
    }
}

/// Transmit phase in cycles by trapezoidal quadrature of [`chirp_frequency`]
/// with `steps` panels, split at the wrap instant so every panel is linear.
pub fn quadrature_phase(x: f64, shift: usize, b: f64, t: f64, steps: usize) -> f64 {
    let wrap = t - shift as f64 / b;
    let integrate = |lo: f64, hi: f64, jump: f64| -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let h = (hi - lo) / steps as f64;
        let f = |u: f64| b * u / t + shift as f64 / t - b / 2.0 - jump;
        let mut acc = 0.5 * (f(lo) + f(hi));
        for i in 1..steps {
            acc += f(lo + i as f64 * h);
        }
        acc * h
    };
    integrate(0.0, x.min(wrap), 0.0) + integrate(wrap, x, b)
}

/// Closed-form transmit phase in cycles, kept here as an oracle for the
/// time-domain mixer.
pub fn chirp_phase(x: f64, shift: usize, b: f64, t: f64) -> f64 {
    let wrap = t - shift as f64 / b;
    let base = b / (2.0 * t) * x * x + (shift as f64 / t - b / 2.0) * x;
    if x < wrap {
        base
    } else {
        base - b * (x - wrap)
    }
}

pub fn cis(cycles: f64) -> Complex64 {
    Complex64::from_polar(1.0, TAU * cycles.rem_euclid(1.0))
}

/// Plain O(n^2) DFT, `X[k] = sum x[m] exp(-j 2 pi k m / n)`.
pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(m, &v)| v * cis(-(((k * m) % n) as f64) / n as f64))
                .sum()
        })
        .collect()
}

pub fn naive_idft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|m| {
            x.iter()
                .enumerate()
                .map(|(k, &v)| v * cis(((k * m) % n) as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64
        })
        .collect()
}

/// One echo for the time-domain mixer.
#[derive(Clone, Copy, Debug)]
pub struct Echo {
    pub gain: Complex64,
    pub delay: f64,
    pub angle: f64,
}

/// Literal IF chain for one symbol: oversampled chirp, delayed echo,
/// conjugate mixing, brick-wall low-pass by DFT masking over the observation
/// window, then decimation to the sensing grid. Returns `Nmax` samples per
/// receive antenna.
pub fn mixer_if(setup: &Setup, shift: usize, echo: Echo, oversample: usize) -> Vec<Vec<Complex64>> {
    let p = &setup.params;
    let (b, t, tmix, fmax) = (p.bandwidth_hz, p.payload_s, p.mix_guard_s, p.sense_rate_hz);
    let fs = fmax * oversample as f64;
    let k_len = (fs * (t - tmix)).round() as usize;
    let carrier = cis(-p.carrier_hz * echo.delay) * echo.gain;
    let mixed: Vec<Complex64> = (0..k_len)
        .map(|i| {
            let time = tmix + i as f64 / fs;
            let rx = chirp_phase(time - echo.delay, shift, b, t);
            let tx = chirp_phase(time, shift, b, t);
            carrier * cis(rx - tx)
        })
        .collect();
    let mut spectrum = naive_dft(&mixed);
    for (k, z) in spectrum.iter_mut().enumerate() {
        let signed = if 2 * k < k_len { k as f64 } else { k as f64 - k_len as f64 };
        if (signed * fs / k_len as f64).abs() >= fmax {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    let filtered = naive_idft(&spectrum);
    let nmax = setup.derived.sense_grid;
    (0..p.rx_antennas)
        .map(|r| {
            let steer = cis(0.5 * r as f64 * echo.angle.sin());
            (0..nmax).map(|m| filtered[m * oversample] * steer).collect()
        })
        .collect()
}

/// Blank window grid indices `[start, end)` from the start/end time rules.
pub fn blank_indices(delay: f64, shift: usize, setup: &Setup) -> (usize, usize) {
    let p = &setup.params;
    let (b, t, tmix, fmax) = (p.bandwidth_hz, p.payload_s, p.mix_guard_s, p.sense_rate_hz);
    let wrap = t - shift as f64 / b;
    let start = if delay > wrap { tmix } else { wrap };
    let end = t.min((delay + wrap).max(tmix));
    let nmax = setup.derived.sense_grid as f64;
    let idx = |time: f64| (fmax * (time - tmix)).floor().clamp(0.0, nmax) as usize;
    (idx(start), idx(end))
}

pub fn range_of_delay(delay: f64) -> f64 {
    delay * SPEED_OF_LIGHT / 2.0
}

/// Full-rate de-chirped symbol computed from the closed-form phase.
pub fn dechirped_symbol(shift: usize, setup: &Setup) -> Vec<Complex64> {
    let p = &setup.params;
    let (b, t, fbar) = (p.bandwidth_hz, p.payload_s, p.comm_rate_hz);
    (0..setup.derived.comm_grid)
        .map(|m| {
            let x = m as f64 / fbar;
            cis(chirp_phase(x, shift, b, t) + 0.5 * (-(b / t) * x * x + b * x))
        })
        .collect()
}

pub fn relative_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

pub fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}
