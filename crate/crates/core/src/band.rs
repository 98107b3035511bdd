//! Band shapes, index sets and support validation.
//!
//! All indices in this module's public API are 1-based. A matrix `M` of
//! dimension `n` is a periodic band matrix of bandwidth `b` when
//! `m_ij = 0` whenever `b < |i − j| < n − b`, and a non-periodic one when
//! `m_ij = 0` whenever `|i − j| > b`.

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dimension, bandwidth and periodicity of a square band matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawShape", into = "RawShape")]
pub struct BandShape {
    n: usize,
    bandwidth: usize,
    periodic: bool,
}

#[derive(Serialize, Deserialize)]
struct RawShape {
    n: usize,
    bandwidth: usize,
    periodic: bool,
}

impl TryFrom<RawShape> for BandShape {
    type Error = Error;
    fn try_from(raw: RawShape) -> Result<Self> {
        BandShape::new(raw.n, raw.bandwidth, raw.periodic)
    }
}

impl From<BandShape> for RawShape {
    fn from(s: BandShape) -> Self {
        RawShape {
            n: s.n,
            bandwidth: s.bandwidth,
            periodic: s.periodic,
        }
    }
}

impl BandShape {
    pub fn new(n: usize, bandwidth: usize, periodic: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("matrix dimension must be positive"));
        }
        if 2 * bandwidth + 1 > n {
            return Err(Error::invalid(format!(
                "bandwidth {bandwidth} does not fit a {n}x{n} matrix (need 2b+1 <= n)"
            )));
        }
        Ok(BandShape { n, bandwidth, periodic })
    }

    pub fn periodic(n: usize, bandwidth: usize) -> Result<Self> {
        Self::new(n, bandwidth, true)
    }

    pub fn non_periodic(n: usize, bandwidth: usize) -> Result<Self> {
        Self::new(n, bandwidth, false)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// `c_n = 2 b_n + 1`, the normalising divisor.
    pub fn row_budget(&self) -> usize {
        2 * self.bandwidth + 1
    }

    /// Band predicate on 1-based positions.
    pub fn allows(&self, i: usize, j: usize) -> bool {
        debug_assert!(i >= 1 && j >= 1);
        self.allows0(i - 1, j - 1)
    }

    #[inline]
    pub(crate) fn allows0(&self, i: usize, j: usize) -> bool {
        let d = i.abs_diff(j);
        if self.periodic {
            d <= self.bandwidth || d >= self.n - self.bandwidth
        } else {
            d <= self.bandwidth
        }
    }

    /// `I_j`: columns allowed to be nonzero in row `j`.
    pub fn row_index_set(&self, j: usize) -> Result<IndexSet> {
        self.check_index(j)?;
        Ok(IndexSet {
            indices: self.support0(j - 1).into_iter().map(|k| k + 1).collect(),
        })
    }

    /// `I'_k`: rows allowed to be nonzero in column `k`. The band predicate
    /// is symmetric, so this coincides with the row set of `k`.
    pub fn column_index_set(&self, k: usize) -> Result<IndexSet> {
        self.row_index_set(k)
    }

    /// 0-based support of row (equivalently column) `i`, ascending.
    pub(crate) fn support0(&self, i: usize) -> Vec<usize> {
        let n = self.n as isize;
        let b = self.bandwidth as isize;
        let i = i as isize;
        let mut out: Vec<usize> = if self.periodic {
            (i - b..=i + b).map(|k| k.rem_euclid(n) as usize).collect()
        } else {
            ((i - b).max(0) as usize..=((i + b).min(n - 1) as usize)).collect()
        };
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Size of the non-periodic row set of row `i` from the counting formula
    /// `b + i·1{i ≤ b+1} + (b+1)·1{b+1 < i < n−b} + (n+1−i)·1{i ≥ n−b}`.
    ///
    /// The head and tail indicators overlap only when `n = 2b + 1`, at the
    /// middle row `i = b + 1`, which is full.
    pub fn nonperiodic_row_count(&self, i: usize) -> usize {
        let (n, b) = (self.n, self.bandwidth);
        if n == 2 * b + 1 && i == b + 1 {
            return n;
        }
        let mut count = b;
        if i <= b + 1 {
            count += i;
        }
        if b + 1 < i && i + b < n {
            count += b + 1;
        }
        if i + b >= n {
            count += n + 1 - i;
        }
        count
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.n {
            Err(Error::invalid(format!(
                "index {j} outside 1..={} (indices are 1-based)",
                self.n
            )))
        } else {
            Ok(())
        }
    }
}

/// Sorted 1-based positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }
}

/// Positions `(i, j)` (1-based, column-major order) holding a nonzero entry
/// outside the band.
pub fn validate(shape: &BandShape, entries: MatRef<'_, c64>) -> Vec<(usize, usize)> {
    let n = shape.n();
    let mut bad = Vec::new();
    if entries.nrows() != n || entries.ncols() != n {
        return bad;
    }
    for j in 0..n {
        for i in 0..n {
            if !shape.allows0(i, j) && entries[(i, j)] != c64::new(0.0, 0.0) {
                bad.push((i + 1, j + 1));
            }
        }
    }
    bad
}

/// Dense complex matrix whose nonzero entries respect a [`BandShape`].
#[derive(Debug, Clone)]
pub struct BandMatrix {
    shape: BandShape,
    entries: Mat<c64>,
}

impl BandMatrix {
    pub fn zeros(shape: BandShape) -> Self {
        BandMatrix {
            shape,
            entries: Mat::zeros(shape.n(), shape.n()),
        }
    }

    /// Wraps `entries` after checking dimension and band support.
    pub fn new(shape: BandShape, entries: Mat<c64>) -> Result<Self> {
        if entries.nrows() != shape.n() || entries.ncols() != shape.n() {
            return Err(Error::invalid(format!(
                "expected a {0}x{0} matrix, got {1}x{2}",
                shape.n(),
                entries.nrows(),
                entries.ncols()
            )));
        }
        let bad = validate(&shape, entries.as_ref());
        if let Some(&(i, j)) = bad.first() {
            return Err(Error::invalid(format!(
                "{} entries outside the band, first at ({i}, {j})",
                bad.len()
            )));
        }
        Ok(BandMatrix { shape, entries })
    }

    /// Fills in-band positions from `f(i, j)` (0-based); everything else is zero.
    pub fn from_band_fn(shape: BandShape, mut f: impl FnMut(usize, usize) -> c64) -> Self {
        let mut m = Self::zeros(shape);
        for i in 0..shape.n() {
            for j in shape.support0(i) {
                m.entries[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn diagonal(shape: BandShape, diag: &[c64]) -> Result<Self> {
        if diag.len() != shape.n() {
            return Err(Error::invalid("diagonal length differs from dimension"));
        }
        let mut m = Self::zeros(shape);
        for (i, &d) in diag.iter().enumerate() {
            m.entries[(i, i)] = d;
        }
        Ok(m)
    }

    pub(crate) fn from_parts_unchecked(shape: BandShape, entries: Mat<c64>) -> Self {
        debug_assert!(validate(&shape, entries.as_ref()).is_empty());
        BandMatrix { shape, entries }
    }

    pub fn shape(&self) -> &BandShape {
        &self.shape
    }

    pub fn n(&self) -> usize {
        self.shape.n()
    }

    pub fn entries(&self) -> MatRef<'_, c64> {
        self.entries.as_ref()
    }

    pub fn into_entries(self) -> Mat<c64> {
        self.entries
    }

    /// Entry at 0-based `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.entries[(i, j)]
    }

    /// Copy with column `j` (0-based) set to zero; the band is preserved.
    pub fn without_column(&self, j: usize) -> BandMatrix {
        let mut entries = self.entries.clone();
        for i in 0..self.n() {
            entries[(i, j)] = c64::new(0.0, 0.0);
        }
        BandMatrix {
            shape: self.shape,
            entries,
        }
    }

    /// Column `j` (0-based) as a vector.
    pub fn column(&self, j: usize) -> Vec<c64> {
        (0..self.n()).map(|i| self.entries[(i, j)]).collect()
    }
}
