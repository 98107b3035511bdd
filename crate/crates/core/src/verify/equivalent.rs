use faer::{c64, Mat, MatRef};

use crate::band::BandMatrix;
use crate::spectra::{eigenvalues_hermitian, empirical_stieltjes, gram, HalfPlanePoint};
use crate::{linalg, Error, Result};

/// The matrices
///
/// ```text
/// A = R R* / (c_n (1 + σ² m_n)) − σ² z m_n I,    B = A − z I.
/// ```
#[derive(Debug, Clone)]
pub struct DeterministicEquivalent {
    a: Mat<c64>,
    b: Mat<c64>,
    m_n: c64,
    z: HalfPlanePoint,
}

impl DeterministicEquivalent {
    pub fn new(r: MatRef<'_, c64>, c_n: usize, sigma: f64, m_n: c64, z: HalfPlanePoint) -> Result<Self> {
        let n = r.nrows();
        if r.ncols() != n {
            return Err(Error::invalid("R must be square"));
        }
        let s = c64::new(1.0, 0.0) + m_n * (sigma * sigma);
        if s.norm() == 0.0 {
            return Err(Error::Singularity("1 + σ² m_n vanishes".into()));
        }
        let scale = (s * c_n as f64).inv();
        let shift = z.z() * m_n * (sigma * sigma);
        let rr = linalg::mul_adjoint(r, r);
        let a = Mat::from_fn(n, n, |i, j| {
            let v = rr[(i, j)] * scale;
            if i == j {
                v - shift
            } else {
                v
            }
        });
        let b = Mat::from_fn(n, n, |i, j| if i == j { a[(i, j)] - z.z() } else { a[(i, j)] });
        Ok(DeterministicEquivalent { a, b, m_n, z })
    }

    pub fn a(&self) -> MatRef<'_, c64> {
        self.a.as_ref()
    }

    pub fn b(&self) -> MatRef<'_, c64> {
        self.b.as_ref()
    }

    pub fn m_n(&self) -> c64 {
        self.m_n
    }

    pub fn z(&self) -> HalfPlanePoint {
        self.z
    }

    /// `B⁻¹` by LU.
    pub fn b_inverse(&self) -> Result<Mat<c64>> {
        linalg::inverse(self.b.as_ref())
    }

    /// `tr(B⁻¹) / n`.
    pub fn normalized_trace_inverse(&self) -> Result<c64> {
        let inv = self.b_inverse()?;
        let n = inv.nrows();
        let tr: c64 = (0..n).map(|i| inv[(i, i)]).sum();
        Ok(tr / n as f64)
    }
}

/// `|tr(B⁻¹)/n − m_n(z)|` with `m_n` from the spectrum of `Y Y*` and `B`
/// built explicitly from `R`.
pub fn deterministic_equivalent_gap(y: &BandMatrix, r: &BandMatrix, sigma: f64, z: HalfPlanePoint) -> Result<f64> {
    if y.shape() != r.shape() {
        return Err(Error::invalid("Y and R have different shapes"));
    }
    let esd = eigenvalues_hermitian(&gram(y))?;
    let m_n = empirical_stieltjes(&esd, z);
    let de = DeterministicEquivalent::new(r.entries(), r.shape().row_budget(), sigma, m_n, z)?;
    Ok((de.normalized_trace_inverse()? - m_n).norm())
}

/// The same gap computed from the eigenvalues `λ_k` of `R R* / c_n`:
/// `B` is diagonal in their eigenbasis with entries `λ_k / s − s z`,
/// `s = 1 + σ² m_n`.
pub fn gap_from_spectrum(rr_eigenvalues: &[f64], m_n: c64, sigma: f64, z: HalfPlanePoint) -> Result<f64> {
    if rr_eigenvalues.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    let s = c64::new(1.0, 0.0) + m_n * (sigma * sigma);
    if s.norm() == 0.0 {
        return Err(Error::Singularity("1 + σ² m_n vanishes".into()));
    }
    let sz = s * z.z();
    let sum: c64 = rr_eigenvalues.iter().map(|&l| (c64::new(l, 0.0) / s - sz).inv()).sum();
    let tr = sum / rr_eigenvalues.len() as f64;
    if !tr.re.is_finite() || !tr.im.is_finite() {
        return Err(Error::computation("B is numerically singular"));
    }
    Ok((tr - m_n).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::BandShape;
    use crate::ensemble::{assemble_y, build_r_from_measure, sample_x, EnsembleConfig, NoiseDistribution};
    use crate::limit_law::SpectralMeasure;

    fn setup(n: usize, b: usize, h: &SpectralMeasure, sigma: f64, seed: u64) -> (BandMatrix, BandMatrix) {
        let shape = BandShape::periodic(n, b).unwrap();
        let r = build_r_from_measure(h, shape);
        let x = sample_x(&EnsembleConfig::new(shape, sigma, NoiseDistribution::ComplexGaussian, seed).unwrap());
        (assemble_y(&r, &x, sigma).unwrap(), r)
    }

    #[test]
    fn zero_r_gap_has_scalar_form() {
        let h = SpectralMeasure::dirac(0.0).unwrap();
        let sigma = 1.3;
        let (y, r) = setup(40, 5, &h, sigma, 1);
        let z = HalfPlanePoint::new(c64::new(0.4, 0.8)).unwrap();
        let gap = deterministic_equivalent_gap(&y, &r, sigma, z).unwrap();
        let m_n = empirical_stieltjes(&eigenvalues_hermitian(&gram(&y)).unwrap(), z);
        let scalar = -(z.z() * (c64::new(1.0, 0.0) + m_n * sigma * sigma)).inv() - m_n;
        assert!((gap - scalar.norm()).abs() < 1e-12);
    }

    #[test]
    fn explicit_and_spectral_routes_agree() {
        let h = SpectralMeasure::new(vec![(0.5, 0.25), (1.0, 0.25), (3.0, 0.5)]).unwrap();
        let sigma = 0.8;
        let (y, r) = setup(60, 7, &h, sigma, 2);
        let z = HalfPlanePoint::i();
        let explicit = deterministic_equivalent_gap(&y, &r, sigma, z).unwrap();
        let c = r.shape().row_budget() as f64;
        let eig: Vec<f64> = (0..r.n()).map(|i| r.get(i, i).norm_sqr() / c).collect();
        let m_n = empirical_stieltjes(&eigenvalues_hermitian(&gram(&y)).unwrap(), z);
        let spectral = gap_from_spectrum(&eig, m_n, sigma, z).unwrap();
        assert!((explicit - spectral).abs() < 1e-12, "{explicit} vs {spectral}");
    }

    #[test]
    fn b_inverse_norm_is_bounded() {
        let h = SpectralMeasure::new(vec![(1.0, 0.5), (4.0, 0.5)]).unwrap();
        let (y, r) = setup(30, 3, &h, 1.0, 3);
        for &(re, im) in &[(0.0, 1.0), (2.0, 0.3), (5.0, 0.1)] {
            let z = HalfPlanePoint::new(c64::new(re, im)).unwrap();
            let m_n = empirical_stieltjes(&eigenvalues_hermitian(&gram(&y)).unwrap(), z);
            let de = DeterministicEquivalent::new(r.entries(), r.shape().row_budget(), 1.0, m_n, z).unwrap();
            let inv = de.b_inverse().unwrap();
            let norm = linalg::singular_values(inv.as_ref()).unwrap()[0];
            assert!(norm <= 1.0 / im * (1.0 + 1e-10), "{norm} at {re}+{im}i");
            // B = A − zI as constructed
            for i in 0..r.n() {
                assert_eq!(de.b()[(i, i)], de.a()[(i, i)] - z.z());
            }
        }
    }

    #[test]
    fn gap_is_deterministic() {
        let h = SpectralMeasure::dirac(0.0).unwrap();
        let (y1, r) = setup(50, 6, &h, 1.0, 9);
        let (y2, _) = setup(50, 6, &h, 1.0, 9);
        let z = HalfPlanePoint::i();
        assert_eq!(
            deterministic_equivalent_gap(&y1, &r, 1.0, z).unwrap().to_bits(),
            deterministic_equivalent_gap(&y2, &r, 1.0, z).unwrap().to_bits()
        );
    }
}
