use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::dictionary::Dictionary;
use crate::error::{Error, Result};

/// Why a greedy solver stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The requested number of atoms was selected.
    MaxAtoms,
    /// The residual fell below the relative tolerance.
    ResidualTolerance,
    /// The input was identically zero.
    ZeroSignal,
    /// Every column (or every independent direction) is already in use.
    Exhausted,
    /// The last candidate atom was numerically dependent on the selected set;
    /// it was dropped and the estimate before it is returned.
    RankDeficient,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopRule {
    pub max_atoms: usize,
    /// Stop once `||residual|| <= tol * ||y||`.
    pub residual_tol: Option<f64>,
}

impl StopRule {
    pub const DEFAULT_TOL: f64 = 1e-6;

    pub fn atoms(max_atoms: usize) -> Self {
        Self {
            max_atoms,
            residual_tol: None,
        }
    }

    pub fn with_tolerance(max_atoms: usize, tol: f64) -> Self {
        Self {
            max_atoms,
            residual_tol: Some(tol),
        }
    }
}

/// Row-sparse solution: one coefficient row per selected column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseEstimate {
    /// Selected dictionary columns in selection order.
    pub support: Vec<usize>,
    /// `support.len() x measurements` coefficients, row-major.
    pub coeffs: Vec<Complex64>,
    pub measurements: usize,
    pub residual_norm: f64,
    /// Residual norm before the first and after every accepted iteration.
    pub residual_history: Vec<f64>,
    pub termination: Termination,
}

impl SparseEstimate {
    /// Coefficient row of the `i`-th selected atom.
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.coeffs[i * self.measurements..(i + 1) * self.measurements]
    }

    /// Coefficient row of dictionary column `col`, if selected.
    pub fn row_of(&self, col: usize) -> Option<&[Complex64]> {
        self.support.iter().position(|&c| c == col).map(|i| self.row(i))
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Coefficient of column `col` for a single-measurement estimate, zero if unselected.
    pub fn coefficient(&self, col: usize) -> Complex64 {
        self.row_of(col).map_or(Complex64::new(0.0, 0.0), |row| row[0])
    }
}

/// A set of measurement columns, each observed through its own row subset of
/// one dictionary. Columns that share a row subset should pass the same slice
/// so the least-squares factorisation is reused.
#[derive(Clone, Debug)]
pub struct Measurements<'a> {
    pub values: Vec<&'a [Complex64]>,
    pub rows: Vec<&'a [usize]>,
}

impl<'a> Measurements<'a> {
    pub fn shared(values: Vec<&'a [Complex64]>, rows: &'a [usize]) -> Self {
        let n = values.len();
        Self {
            values,
            rows: vec![rows; n],
        }
    }

    pub fn single(values: &'a [Complex64], rows: &'a [usize]) -> Self {
        Self {
            values: vec![values],
            rows: vec![rows],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

struct Group<'a> {
    rows: &'a [usize],
    columns: Vec<usize>,
    norms: Vec<f64>,
    /// Compressed atoms of the current support.
    atoms: Vec<Vec<Complex64>>,
}

fn same_rows(a: &[usize], b: &[usize]) -> bool {
    (a.as_ptr() == b.as_ptr() && a.len() == b.len()) || a == b
}

fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Least squares for every column of a group; `None` if the Gram matrix is
/// numerically singular.
fn refit(group: &Group<'_>, values: &[&[Complex64]]) -> Option<Vec<Vec<Complex64>>> {
    let k = group.atoms.len();
    let gram = DMatrix::from_fn(k, k, |i, j| dot_conj(&group.atoms[i], &group.atoms[j]));
    let scale = (0..k).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
    let chol = gram.cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..k).map(|i| l[(i, i)].re.powi(2)).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-10 * scale) {
        return None;
    }
    Some(
        group
            .columns
            .iter()
            .map(|&c| {
                let rhs = DVector::from_fn(k, |i, _| dot_conj(&group.atoms[i], values[c]));
                chol.solve(&rhs).iter().copied().collect()
            })
            .collect(),
    )
}

/// Simultaneous OMP. Selects atoms by the aggregate energy of normalised
/// correlations over all measurement columns and refits every column by least
/// squares after each selection. Ties go to the lowest column index.
pub fn mmv_omp(y: &Measurements<'_>, dict: &dyn Dictionary, stop: StopRule) -> Result<SparseEstimate> {
    let columns = y.len();
    if columns == 0 || y.rows.len() != columns {
        return Err(Error::LengthMismatch {
            expected: columns.max(1),
            actual: y.rows.len(),
        });
    }
    for (v, r) in y.values.iter().zip(&y.rows) {
        if v.len() != r.len() {
            return Err(Error::LengthMismatch {
                expected: r.len(),
                actual: v.len(),
            });
        }
        if r.iter().any(|&m| m >= dict.rows()) {
            return Err(Error::MalformedIndexSet);
        }
    }

    let mut groups: Vec<Group<'_>> = Vec::new();
    for (c, rows) in y.rows.iter().enumerate() {
        match groups.iter_mut().find(|g| same_rows(g.rows, rows)) {
            Some(g) => g.columns.push(c),
            None => groups.push(Group {
                rows,
                columns: vec![c],
                norms: dict.column_norms_sq(rows),
                atoms: Vec::new(),
            }),
        }
    }

    let norm_of = |res: &[Vec<Complex64>]| res.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut residual: Vec<Vec<Complex64>> = y.values.iter().map(|v| v.to_vec()).collect();
    let y_norm = norm_of(&residual);
    let mut history = vec![y_norm];
    let mut support: Vec<usize> = Vec::new();
    let mut coeffs: Vec<Vec<Complex64>> = vec![Vec::new(); columns];
    let n_atoms = dict.columns();

    let finish = |support: Vec<usize>, coeffs: Vec<Vec<Complex64>>, history: Vec<f64>, termination| {
        let k = support.len();
        let mut flat = Vec::with_capacity(k * columns);
        for i in 0..k {
            for col in &coeffs {
                flat.push(col[i]);
            }
        }
        SparseEstimate {
            support,
            coeffs: flat,
            measurements: columns,
            residual_norm: *history.last().unwrap(),
            residual_history: history,
            termination,
        }
    };

    if y_norm == 0.0 {
        return Ok(finish(support, coeffs, history, Termination::ZeroSignal));
    }

    let mut corr = vec![Complex64::new(0.0, 0.0); n_atoms];
    let mut score = vec![0.0f64; n_atoms];
    let termination = loop {
        if support.len() >= stop.max_atoms {
            break Termination::MaxAtoms;
        }
        if support.len() >= n_atoms {
            break Termination::Exhausted;
        }

        score.fill(0.0);
        for g in &groups {
            for &c in &g.columns {
                dict.correlate(g.rows, &residual[c], &mut corr);
                for q in 0..n_atoms {
                    if g.norms[q] > 0.0 {
                        score[q] += corr[q].norm_sqr() / g.norms[q];
                    }
                }
            }
        }
        let mut best: Option<usize> = None;
        for q in 0..n_atoms {
            if support.contains(&q) {
                continue;
            }
            if best.is_none_or(|b| score[q] > score[b]) {
                best = Some(q);
            }
        }
        let Some(q) = best else {
            break Termination::Exhausted;
        };
        if score[q] <= 0.0 {
            break Termination::Exhausted;
        }

        for g in &mut groups {
            g.atoms.push(dict.compressed_column(g.rows, q));
        }
        let mut fits = Vec::with_capacity(groups.len());
        let mut singular = false;
        for g in &groups {
            match refit(g, &y.values) {
                Some(f) => fits.push(f),
                None => {
                    singular = true;
                    break;
                }
            }
        }
        if singular {
            for g in &mut groups {
                g.atoms.pop();
            }
            break Termination::RankDeficient;
        }
        support.push(q);

        for (g, fit) in groups.iter().zip(fits) {
            for (&c, x) in g.columns.iter().zip(fit) {
                let res = &mut residual[c];
                res.copy_from_slice(y.values[c]);
                for (atom, &coef) in g.atoms.iter().zip(&x) {
                    for (r, a) in res.iter_mut().zip(atom) {
                        *r -= a * coef;
                    }
                }
                coeffs[c] = x;
            }
        }
        let norm = norm_of(&residual);
        history.push(norm);
        if stop.residual_tol.is_some_and(|tol| norm <= tol * y_norm) {
            break Termination::ResidualTolerance;
        }
    };

    Ok(finish(support, coeffs, history, termination))
}

/// Single-vector OMP.
pub fn omp(y: &[Complex64], rows: &[usize], dict: &dyn Dictionary, stop: StopRule) -> Result<SparseEstimate> {
    mmv_omp(&Measurements::single(y, rows), dict, stop)
}

/// The `k` selected columns with the largest coefficient-row norms, in
/// descending order of norm; ties go to the lower column index.
pub fn top_k_rows(est: &SparseEstimate, k: usize) -> Result<Vec<usize>> {
    if est.support.len() < k {
        return Err(Error::InsufficientSupport {
            requested: k,
            available: est.support.len(),
        });
    }
    let mut ranked: Vec<(usize, f64)> = (0..est.support.len()).map(|i| (est.support[i], est.row_norm(i))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().take(k).map(|(c, _)| c).collect())
}
