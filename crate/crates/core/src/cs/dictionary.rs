use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// A complex dictionary whose columns are candidate atoms.
///
/// Solvers only ever see a dictionary through a row subset (the selection
/// operator), so every method takes the kept rows explicitly.
pub trait Dictionary: Send + Sync {
    /// Ambient dimension (full-rate rows).
    fn rows(&self) -> usize;

    /// Number of atoms (grid size).
    fn columns(&self) -> usize;

    fn entry(&self, row: usize, col: usize) -> Complex64;

    /// `out[q] = sum_i conj(A[rows[i], q]) * values[i]` for every column `q`.
    fn correlate(&self, rows: &[usize], values: &[Complex64], out: &mut [Complex64]);

    /// Squared norm of every compressed column.
    fn column_norms_sq(&self, rows: &[usize]) -> Vec<f64> {
        (0..self.columns())
            .map(|q| rows.iter().map(|&m| self.entry(m, q).norm_sqr()).sum())
            .collect()
    }

    /// Compressed column `col` restricted to `rows`.
    fn compressed_column(&self, rows: &[usize], col: usize) -> Vec<Complex64> {
        rows.iter().map(|&m| self.entry(m, col)).collect()
    }
}

/// Sign of the exponent of a DFT-type dictionary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    /// `exp(-j 2 pi n q / M)`, the forward DFT convention.
    Negative,
    /// `exp(+j 2 pi n q / M)`.
    Positive,
}

/// First `rows` rows of the `(oversample * rows)`-order DFT matrix.
///
/// Correlation against every column is a single zero-padded FFT of length
/// `oversample * rows`.
#[derive(Clone)]
pub struct DftDictionary {
    rows: usize,
    oversample: usize,
    sign: Sign,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for DftDictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DftDictionary")
            .field("rows", &self.rows)
            .field("oversample", &self.oversample)
            .field("sign", &self.sign)
            .finish()
    }
}

impl DftDictionary {
    pub fn new(rows: usize, oversample: usize, sign: Sign) -> Self {
        assert!(rows >= 1 && oversample >= 1, "DFT dictionary needs rows >= 1 and oversample >= 1");
        let order = rows * oversample;
        let mut planner = FftPlanner::new();
        // conj(A) carries the opposite sign, which is what correlation evaluates.
        let fft = match sign {
            Sign::Negative => planner.plan_fft_inverse(order),
            Sign::Positive => planner.plan_fft_forward(order),
        };
        Self {
            rows,
            oversample,
            sign,
            fft,
        }
    }

    /// The same grid with the exponent sign flipped.
    pub fn conjugate(&self) -> Self {
        let sign = match self.sign {
            Sign::Negative => Sign::Positive,
            Sign::Positive => Sign::Negative,
        };
        Self::new(self.rows, self.oversample, sign)
    }

    pub fn order(&self) -> usize {
        self.rows * self.oversample
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// Normalised frequency of column `q` in cycles per row.
    pub fn cycles_per_row(&self, q: usize) -> f64 {
        q as f64 / self.order() as f64
    }
}

pub fn build_dft_dictionary(rows: usize, oversample: usize) -> DftDictionary {
    DftDictionary::new(rows, oversample, Sign::Negative)
}

impl Dictionary for DftDictionary {
    fn rows(&self) -> usize {
        self.rows
    }

    fn columns(&self) -> usize {
        self.order()
    }

    fn entry(&self, row: usize, col: usize) -> Complex64 {
        let order = self.order();
        // Reduce n*q modulo the order in integers so large grids keep full phase precision.
        let k = ((row as u128 * col as u128) % order as u128) as f64;
        let angle = TAU * k / order as f64;
        match self.sign {
            Sign::Negative => Complex64::from_polar(1.0, -angle),
            Sign::Positive => Complex64::from_polar(1.0, angle),
        }
    }

    fn correlate(&self, rows: &[usize], values: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(rows.len(), values.len());
        debug_assert_eq!(out.len(), self.order());
        out.fill(Complex64::new(0.0, 0.0));
        for (&m, &v) in rows.iter().zip(values) {
            out[m] += v;
        }
        self.fft.process(out);
    }

    fn column_norms_sq(&self, rows: &[usize]) -> Vec<f64> {
        vec![rows.len() as f64; self.order()]
    }
}

/// Explicitly stored dictionary with a physical value per column.
#[derive(Clone, Debug)]
pub struct DenseDictionary {
    rows: usize,
    cols: usize,
    /// Column-major storage.
    atoms: Vec<Complex64>,
    grid: Vec<f64>,
}

impl DenseDictionary {
    pub fn from_fn(rows: usize, grid: Vec<f64>, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let cols = grid.len();
        let mut atoms = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                atoms.push(f(r, c));
            }
        }
        Self {
            rows,
            cols,
            atoms,
            grid,
        }
    }

    pub fn column(&self, col: usize) -> &[Complex64] {
        &self.atoms[col * self.rows..(col + 1) * self.rows]
    }

    /// Physical value (here: angle in radians) represented by a column.
    pub fn grid_value(&self, col: usize) -> f64 {
        self.grid[col]
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
}

impl Dictionary for DenseDictionary {
    fn rows(&self) -> usize {
        self.rows
    }

    fn columns(&self) -> usize {
        self.cols
    }

    fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.atoms[col * self.rows + row]
    }

    fn correlate(&self, rows: &[usize], values: &[Complex64], out: &mut [Complex64]) {
        for (q, o) in out.iter_mut().enumerate() {
            let column = self.column(q);
            *o = rows.iter().zip(values).map(|(&m, v)| column[m].conj() * v).sum();
        }
    }
}

/// Angle grid value of column `n` for a virtual array of `elements` and oversampling `rho`.
pub fn ae_grid_angle(n: usize, elements: usize, rho: usize) -> f64 {
    let size = (rho * elements) as f64;
    (n as f64 - size / 2.0) * PI / size
}

/// Steering dictionary over the virtual array: entry `(i, n)` is
/// `exp(-j pi i sin(theta_n))` with `theta_n` from [`ae_grid_angle`].
pub fn build_ae_dictionary(elements: usize, rho: usize) -> DenseDictionary {
    assert!(elements >= 2 && rho >= 1, "angle dictionary needs at least two elements");
    let grid: Vec<f64> = (0..rho * elements).map(|n| ae_grid_angle(n, elements, rho)).collect();
    let sines: Vec<f64> = grid.iter().map(|t| t.sin()).collect();
    DenseDictionary::from_fn(elements, grid, |i, n| Complex64::from_polar(1.0, -PI * i as f64 * sines[n]))
}
