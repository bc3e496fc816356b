//! Sampling index sets and row-selection measurement operators.
//!
//! A compressive (AIC) sampler is modelled as keeping a subset of the
//! full-rate sample grid. Selection operators are stored as index lists and
//! never expanded into dense matrices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingKind {
    Random,
    Uniform,
}

/// Strictly increasing sample indices drawn from `0..base`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawIndexSet")]
pub struct SamplingIndexSet {
    indices: Vec<usize>,
    base: usize,
    kind: SamplingKind,
}

#[derive(Deserialize)]
struct RawIndexSet {
    indices: Vec<usize>,
    base: usize,
    kind: SamplingKind,
}

impl TryFrom<RawIndexSet> for SamplingIndexSet {
    type Error = Error;

    fn try_from(raw: RawIndexSet) -> Result<Self> {
        SamplingIndexSet::new(raw.indices, raw.base, raw.kind)
    }
}

impl SamplingIndexSet {
    pub fn new(indices: Vec<usize>, base: usize, kind: SamplingKind) -> Result<Self> {
        let increasing = indices.windows(2).all(|w| w[0] < w[1]);
        if !increasing || indices.last().is_some_and(|&m| m >= base) {
            return Err(Error::MalformedIndexSet);
        }
        Ok(Self {
            indices,
            base,
            kind,
        })
    }

    /// Every grid point, `0..base`.
    pub fn full(base: usize) -> Self {
        Self {
            indices: (0..base).collect(),
            base,
            kind: SamplingKind::Uniform,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn kind(&self) -> SamplingKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Fraction of the full-rate grid that is kept.
    pub fn compression_ratio(&self) -> f64 {
        self.indices.len() as f64 / self.base as f64
    }
}

/// Uniformly random `count`-subset of `0..base`, sorted.
pub fn draw_random_set<R: Rng + ?Sized>(count: usize, base: usize, rng: &mut R) -> Result<SamplingIndexSet> {
    if count > base {
        return Err(Error::CountExceedsBase { count, base });
    }
    let mut indices = rand::seq::index::sample(rng, base, count).into_vec();
    indices.sort_unstable();
    Ok(SamplingIndexSet {
        indices,
        base,
        kind: SamplingKind::Random,
    })
}

/// `count` indices with stride `floor(base / count)` starting at zero. When
/// `count` does not divide `base` the tail of the grid is never visited.
pub fn uniform_set(count: usize, base: usize) -> Result<SamplingIndexSet> {
    if count > base {
        return Err(Error::CountExceedsBase { count, base });
    }
    let stride = if count == 0 { 1 } else { base / count };
    Ok(SamplingIndexSet {
        indices: (0..count).map(|i| i * stride).collect(),
        base,
        kind: SamplingKind::Uniform,
    })
}

/// Row selection `[I_base]_{M,:}` defined by an index set.
#[derive(Clone, Copy, Debug)]
pub struct SelectionOperator<'a> {
    set: &'a SamplingIndexSet,
}

impl<'a> SelectionOperator<'a> {
    pub fn new(set: &'a SamplingIndexSet) -> Self {
        Self { set }
    }

    pub fn rows(&self) -> &'a [usize] {
        self.set.indices()
    }

    pub fn base(&self) -> usize {
        self.set.base()
    }
}

pub fn apply_selection<T: Copy>(op: SelectionOperator<'_>, x: &[T]) -> Result<Vec<T>> {
    if x.len() != op.base() {
        return Err(Error::LengthMismatch {
            expected: op.base(),
            actual: x.len(),
        });
    }
    Ok(op.rows().iter().map(|&m| x[m]).collect())
}

/// Sensing index sets for one frame: either one set shared by every symbol
/// or an independent draw per symbol.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSampling {
    Shared(SamplingIndexSet),
    PerSymbol(Vec<SamplingIndexSet>),
}

impl FrameSampling {
    pub fn for_symbol(&self, p: usize) -> &SamplingIndexSet {
        match self {
            FrameSampling::Shared(set) => set,
            FrameSampling::PerSymbol(sets) => &sets[p],
        }
    }

    /// Identifier of the set used by symbol `p`; symbols with equal keys share a set.
    pub fn set_key(&self, p: usize) -> usize {
        match self {
            FrameSampling::Shared(_) => 0,
            FrameSampling::PerSymbol(_) => p,
        }
    }

    pub fn samples_per_symbol(&self) -> usize {
        self.for_symbol(0).len()
    }

    pub fn base(&self) -> usize {
        self.for_symbol(0).base()
    }

    /// Checks that every symbol's set lives on a grid of `base` points and
    /// holds the same number of samples.
    pub fn check(&self, symbols: usize, base: usize) -> Result<()> {
        let count = self.samples_per_symbol();
        let sets: Vec<&SamplingIndexSet> = match self {
            FrameSampling::Shared(set) => vec![set],
            FrameSampling::PerSymbol(sets) => {
                if sets.len() != symbols {
                    return Err(Error::LengthMismatch {
                        expected: symbols,
                        actual: sets.len(),
                    });
                }
                sets.iter().collect()
            }
        };
        for set in sets {
            if set.base() != base {
                return Err(Error::LengthMismatch {
                    expected: base,
                    actual: set.base(),
                });
            }
            if set.len() != count {
                return Err(Error::LengthMismatch {
                    expected: count,
                    actual: set.len(),
                });
            }
        }
        Ok(())
    }
}
