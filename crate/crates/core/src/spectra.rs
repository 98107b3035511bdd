//! Gram matrices, their spectra, and empirical spectral distributions.

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::band::BandMatrix;
use crate::{linalg, Error, Result};

/// Relative asymmetry tolerated by [`HermitianMatrix::new`].
const HERMITIAN_TOL: f64 = 1e-10;
/// Negative eigenvalues down to `-NEGATIVE_CLAMP · ‖G‖` are round-off and set to zero.
const NEGATIVE_CLAMP: f64 = 1e-10;

/// A point `z` with `Im z > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct HalfPlanePoint(c64);

impl HalfPlanePoint {
    pub fn new(z: c64) -> Result<Self> {
        if !z.re.is_finite() || !z.im.is_finite() || z.im <= 0.0 {
            return Err(Error::invalid(format!("{z} is not in the upper half-plane")));
        }
        Ok(HalfPlanePoint(z))
    }

    /// `z = i`.
    pub fn i() -> Self {
        HalfPlanePoint(c64::new(0.0, 1.0))
    }

    pub fn z(self) -> c64 {
        self.0
    }

    pub fn re(self) -> f64 {
        self.0.re
    }

    pub fn im(self) -> f64 {
        self.0.im
    }
}

impl TryFrom<(f64, f64)> for HalfPlanePoint {
    type Error = Error;
    fn try_from((re, im): (f64, f64)) -> Result<Self> {
        HalfPlanePoint::new(c64::new(re, im))
    }
}

impl From<HalfPlanePoint> for (f64, f64) {
    fn from(p: HalfPlanePoint) -> Self {
        (p.0.re, p.0.im)
    }
}

/// Dense Hermitian matrix, stored exactly symmetric.
#[derive(Debug, Clone)]
pub struct HermitianMatrix(Mat<c64>);

impl HermitianMatrix {
    /// Accepts `g` if `max |g − g*| ≤ 1e−10 · max |g|` and stores `(g + g*)/2`.
    pub fn new(g: Mat<c64>) -> Result<Self> {
        if g.nrows() != g.ncols() {
            return Err(Error::invalid("Hermitian matrix must be square"));
        }
        if !linalg::all_finite(g.as_ref()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        let scale = linalg::max_abs(g.as_ref());
        let n = g.nrows();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                worst = worst.max((g[(i, j)] - g[(j, i)].conj()).norm());
            }
        }
        if worst > HERMITIAN_TOL * scale {
            return Err(Error::invalid(format!(
                "matrix is not Hermitian: asymmetry {worst:e} against scale {scale:e}"
            )));
        }
        Ok(Self::symmetrized(g))
    }

    fn symmetrized(mut g: Mat<c64>) -> Self {
        let n = g.nrows();
        for j in 0..n {
            g[(j, j)] = c64::new(g[(j, j)].re, 0.0);
            for i in j + 1..n {
                let v = (g[(i, j)] + g[(j, i)].conj()) * 0.5;
                g[(i, j)] = v;
                g[(j, i)] = v.conj();
            }
        }
        HermitianMatrix(g)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_ref(&self) -> MatRef<'_, c64> {
        self.0.as_ref()
    }

    pub fn into_inner(self) -> Mat<c64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.0[(i, i)].re).sum()
    }
}

/// `Y Y*`.
pub fn gram(y: &BandMatrix) -> HermitianMatrix {
    gram_dense(y.entries())
}

/// `Y Y*` for any dense square or rectangular `Y`.
pub fn gram_dense(y: MatRef<'_, c64>) -> HermitianMatrix {
    HermitianMatrix::symmetrized(linalg::mul_adjoint(y, y))
}

/// Sorted nonnegative eigenvalues of a Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsdSample {
    eigenvalues: Vec<f64>,
}

impl EsdSample {
    /// Sorts the input; every value must be finite and nonnegative.
    pub fn new(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("an ESD needs at least one eigenvalue"));
        }
        if let Some(v) = eigenvalues.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("eigenvalue {v} is negative or not finite")));
        }
        eigenvalues.sort_by(f64::total_cmp);
        Ok(EsdSample { eigenvalues })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    pub fn sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.n() as f64
    }

    /// `F_n(x) = #{λ ≤ x} / n`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.eigenvalues.partition_point(|&l| l <= x) as f64 / self.n() as f64
    }

    /// `F_n(x−) = #{λ < x} / n`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.eigenvalues.partition_point(|&l| l < x) as f64 / self.n() as f64
    }

    /// `μ(x, ∞) = #{λ > x} / n`.
    pub fn tail(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }
}

/// Full spectrum of a Gram matrix, ascending, as an ESD.
///
/// Negative eigenvalues within `1e−10 · ‖G‖` of zero are clamped to zero;
/// anything more negative means `G` is not a Gram matrix and is rejected.
pub fn eigenvalues_hermitian(g: &HermitianMatrix) -> Result<EsdSample> {
    let mut values = linalg::hermitian_eigenvalues(g.as_ref())?;
    let norm = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for v in &mut values {
        if *v < 0.0 {
            if -*v <= NEGATIVE_CLAMP * norm {
                *v = 0.0;
            } else {
                return Err(Error::invalid(format!(
                    "eigenvalue {v:e} is too negative for a Gram matrix (norm {norm:e})"
                )));
            }
        }
    }
    EsdSample::new(values)
}

/// `m_n(z) = (1/n) Σ 1 / (λ_i − z)`.
pub fn empirical_stieltjes(esd: &EsdSample, z: HalfPlanePoint) -> c64 {
    let z = z.z();
    let sum: c64 = esd.eigenvalues.iter().map(|&l| (c64::new(l, 0.0) - z).inv()).sum();
    sum / esd.n() as f64
}

/// `sup_x |F_n(x) − F(x)|` for a nondecreasing right-continuous `F`.
///
/// Both sides are monotone and the ECDF is constant between eigenvalues, so
/// the supremum is attained at an eigenvalue, either from the right or as a
/// left limit; both are evaluated.
pub fn kolmogorov_distance(esd: &EsdSample, cdf: impl Fn(f64) -> f64) -> f64 {
    let n = esd.n() as f64;
    let ev = &esd.eigenvalues;
    let mut worst = 0.0f64;
    let mut k = 0;
    while k < ev.len() {
        let x = ev[k];
        let mut end = k;
        while end < ev.len() && ev[end] == x {
            end += 1;
        }
        let left = k as f64 / n;
        let right = end as f64 / n;
        worst = worst.max((right - cdf(x)).abs());
        worst = worst.max((left - cdf(x.next_down())).abs());
        k = end;
    }
    worst
}

/// `sup_x |F_a(x) − F_b(x)|` between two ESDs.
pub fn esd_distance(a: &EsdSample, b: &EsdSample) -> f64 {
    let (na, nb) = (a.n() as f64, b.n() as f64);
    let (ea, eb) = (&a.eigenvalues, &b.eigenvalues);
    let (mut i, mut j) = (0, 0);
    let mut worst = 0.0f64;
    while i < ea.len() || j < eb.len() {
        let x = match (ea.get(i), eb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < ea.len() && ea[i] <= x {
            i += 1;
        }
        while j < eb.len() && eb[j] <= x {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    worst
}
