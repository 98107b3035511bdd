//! Sampling the noise `X`, building the deterministic part `R`, and
//! assembling `Y = (R + σX) / √c_n`.

use faer::{c64, Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::band::{BandMatrix, BandShape};
use crate::limit_law::SpectralMeasure;
use crate::{linalg, Error, Result};

/// Entry distribution of `X`, standardised to `E x = 0`, `E|x|² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseDistribution {
    /// `(g₁ + i g₂) / √2` with independent standard normals.
    #[default]
    ComplexGaussian,
    RealGaussian,
    /// `±1` with equal probability.
    Rademacher,
    /// Uniform on `[−√3, √3]`.
    ScaledUniform,
}

impl NoiseDistribution {
    pub const ALL: [NoiseDistribution; 4] = [
        NoiseDistribution::ComplexGaussian,
        NoiseDistribution::RealGaussian,
        NoiseDistribution::Rademacher,
        NoiseDistribution::ScaledUniform,
    ];

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> c64 {
        match self {
            NoiseDistribution::ComplexGaussian => {
                let a: f64 = StandardNormal.sample(rng);
                let b: f64 = StandardNormal.sample(rng);
                c64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
            }
            NoiseDistribution::RealGaussian => c64::new(StandardNormal.sample(rng), 0.0),
            NoiseDistribution::Rademacher => c64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0),
            NoiseDistribution::ScaledUniform => {
                let s = 3f64.sqrt();
                c64::new(rng.random_range(-s..s), 0.0)
            }
        }
    }

    /// `E|x|⁴`.
    pub fn fourth_moment(self) -> f64 {
        match self {
            NoiseDistribution::ComplexGaussian => 2.0,
            NoiseDistribution::RealGaussian => 3.0,
            NoiseDistribution::Rademacher => 1.0,
            NoiseDistribution::ScaledUniform => 1.8,
        }
    }

    pub fn is_gaussian(self) -> bool {
        matches!(
            self,
            NoiseDistribution::ComplexGaussian | NoiseDistribution::RealGaussian
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub shape: BandShape,
    /// Noise strength; `0` is accepted as a degenerate diagnostic.
    pub sigma: f64,
    pub dist: NoiseDistribution,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn new(shape: BandShape, sigma: f64, dist: NoiseDistribution, seed: u64) -> Result<Self> {
        let cfg = EnsembleConfig {
            shape,
            sigma,
            dist,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::invalid(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Same configuration with the seed for trial `trial`.
    pub fn for_trial(&self, trial: u64) -> Self {
        EnsembleConfig {
            seed: trial_seed(self.seed, trial),
            ..*self
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the independent stream for trial `trial` under `master`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(master) ^ trial.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Generator for a given seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Samples `X`: iid entries on the band support, drawn row by row in
/// increasing column order, zero elsewhere.
pub fn sample_x(config: &EnsembleConfig) -> BandMatrix {
    let mut rng = rng_from_seed(config.seed);
    let dist = config.dist;
    BandMatrix::from_band_fn(config.shape, |_, _| dist.sample(&mut rng))
}

/// Diagonal `R` with `R_ii = √(c_n t_i)`, where `t_i` is the quantile of `H`
/// at level `(i − ½)/n`, so that the ESD of `R R* / c_n` quantises `H`.
pub fn build_r_from_measure(h: &SpectralMeasure, shape: BandShape) -> BandMatrix {
    let n = shape.n();
    let c = shape.row_budget() as f64;
    let diag: Vec<c64> = (1..=n)
        .map(|i| {
            let t = h.quantile((i as f64 - 0.5) / n as f64);
            c64::new((c * t).sqrt(), 0.0)
        })
        .collect();
    BandMatrix::diagonal(shape, &diag).expect("diagonal has length n")
}

/// `log c_n`.
pub fn default_truncation_level(shape: &BandShape) -> f64 {
    (shape.row_budget() as f64).ln()
}

/// Result of zeroing the large singular values of `R / √c_n`.
#[derive(Debug, Clone)]
pub struct Truncation {
    /// `√c_n · U S_α V*`; dense, since it need not respect the band.
    pub matrix: Mat<c64>,
    /// Singular values of `R / √c_n`, descending.
    pub singular_values: Vec<f64>,
    /// Number of singular values above `α`.
    pub zeroed: usize,
}

/// Zeroes every singular value of `R / √c_n` above `alpha`.
///
/// Computed as `R − √c_n Σ_{s_i > α} s_i u_i v_i*`, so that nothing changes
/// (bit for bit) when no singular value exceeds `alpha`.
pub fn truncate_r(r: &BandMatrix, alpha: f64) -> Result<Truncation> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::invalid(format!(
            "truncation level must be positive, got {alpha}"
        )));
    }
    let sqrt_c = (r.shape().row_budget() as f64).sqrt();
    let scaled = r.entries() * faer::Scale(c64::new(1.0 / sqrt_c, 0.0));
    let svd = linalg::svd(scaled.as_ref())?;
    let zeroed = svd.s.iter().filter(|&&s| s > alpha).count();
    let mut matrix = r.entries().to_owned();
    if zeroed > 0 {
        let u = svd.u.subcols(0, zeroed);
        let v = svd.v.subcols(0, zeroed);
        let s = Mat::from_fn(zeroed, zeroed, |i, j| {
            if i == j {
                c64::new(svd.s[i] * sqrt_c, 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        matrix -= u * s * v.adjoint();
    }
    Ok(Truncation {
        matrix,
        singular_values: svd.s,
        zeroed,
    })
}

/// `(R + σX) / √c_n`.
pub fn assemble_y(r: &BandMatrix, x: &BandMatrix, sigma: f64) -> Result<BandMatrix> {
    if r.shape() != x.shape() {
        return Err(Error::invalid(format!(
            "R has shape {:?} but X has shape {:?}",
            r.shape(),
            x.shape()
        )));
    }
    let y = assemble_y_dense(r.entries(), x, sigma)?;
    Ok(BandMatrix::from_parts_unchecked(*x.shape(), y))
}

/// `(R + σX) / √c_n` for a dense `R` (such as a truncated one).
pub fn assemble_y_dense(r: MatRef<'_, c64>, x: &BandMatrix, sigma: f64) -> Result<Mat<c64>> {
    let n = x.n();
    if r.nrows() != n || r.ncols() != n {
        return Err(Error::invalid(format!(
            "R is {}x{} but X is {n}x{n}",
            r.nrows(),
            r.ncols()
        )));
    }
    let scale = 1.0 / (x.shape().row_budget() as f64).sqrt();
    Ok(Mat::from_fn(n, n, |i, j| (r[(i, j)] + x.get(i, j) * sigma) * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::validate;
    use crate::spectra::{eigenvalues_hermitian, gram_dense, kolmogorov_distance};
    use proptest::prelude::*;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    fn cfg(n: usize, b: usize, periodic: bool, dist: NoiseDistribution, seed: u64) -> EnsembleConfig {
        EnsembleConfig::new(BandShape::new(n, b, periodic).unwrap(), 1.0, dist, seed).unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let config = cfg(30, 4, true, NoiseDistribution::ComplexGaussian, 11);
        let a = sample_x(&config);
        let b = sample_x(&config);
        assert_eq!(a.entries(), b.entries());
        let other = sample_x(&config.for_trial(1));
        assert_ne!(a.entries(), other.entries());
    }

    #[test]
    fn trial_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|t| trial_seed(7, t)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(trial_seed(7, 0), trial_seed(8, 0));
    }

    #[test]
    fn sampled_support_is_exactly_the_band() {
        for &(n, b, periodic) in &[
            (1, 0, false),
            (7, 3, true),
            (50, 5, false),
            (200, 20, true),
            (200, 37, false),
        ] {
            for dist in NoiseDistribution::ALL {
                let x = sample_x(&cfg(n, b, periodic, dist, 3));
                assert!(validate(x.shape(), x.entries()).is_empty());
                for i in 1..=n {
                    let row = x.shape().row_index_set(i).unwrap();
                    for j in row.iter() {
                        assert_ne!(x.get(i - 1, j - 1), c(0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn sample_moments_within_clt_bands() {
        for dist in NoiseDistribution::ALL {
            let x = sample_x(&cfg(2000, 50, true, dist, 2024));
            let shape = x.shape();
            let count = (shape.n() * shape.row_budget()) as f64;
            let mut sum = c(0.0);
            let mut sq = 0.0;
            for i in 0..shape.n() {
                for j in shape.support0(i) {
                    let v = x.get(i, j);
                    sum += v;
                    sq += v.norm_sqr();
                }
            }
            let mean = sum / count;
            let second = sq / count;
            let width = 3.0 / count.sqrt();
            assert!(mean.norm() < width, "{dist:?}: mean {mean}");
            let var4 = dist.fourth_moment() - 1.0;
            if var4 > 0.0 {
                assert!((second - 1.0).abs() < width * var4.sqrt(), "{dist:?}: E|x|^2 {second}");
            } else {
                assert!((second - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fourth_moments_by_simulation() {
        let mut rng = rng_from_seed(5);
        for dist in NoiseDistribution::ALL {
            let m = 200_000;
            let est: f64 = (0..m).map(|_| dist.sample(&mut rng).norm_sqr().powi(2)).sum::<f64>() / m as f64;
            assert!((est - dist.fourth_moment()).abs() < 0.05, "{dist:?}: {est}");
        }
    }

    #[test]
    fn r_from_single_atom() {
        let shape = BandShape::periodic(4, 1).unwrap();
        let r = build_r_from_measure(&SpectralMeasure::dirac(1.0).unwrap(), shape);
        for i in 0..4 {
            assert_eq!(r.get(i, i), c(3f64.sqrt()));
        }
        let zero = build_r_from_measure(&SpectralMeasure::dirac(0.0).unwrap(), shape);
        assert_eq!(linalg::max_abs(zero.entries()), 0.0);
    }

    #[test]
    fn r_from_two_atoms() {
        let shape = BandShape::non_periodic(4, 1).unwrap();
        let h = SpectralMeasure::new(vec![(1.0, 0.5), (4.0, 0.5)]).unwrap();
        let r = build_r_from_measure(&h, shape);
        let cn = 3.0f64;
        let diag: Vec<f64> = (0..4).map(|i| r.get(i, i).re).collect();
        assert_eq!(diag, vec![cn.sqrt(), cn.sqrt(), (4.0 * cn).sqrt(), (4.0 * cn).sqrt()]);
        let g = gram_dense((r.entries() * faer::Scale(c(1.0 / cn.sqrt()))).as_ref());
        let esd = eigenvalues_hermitian(&g).unwrap();
        assert!(kolmogorov_distance(&esd, |x| h.cdf(x)) < 1e-12);
    }

    #[test]
    fn quantisation_error_is_small() {
        let h = SpectralMeasure::new(vec![(0.3, 0.2), (1.0, 0.35), (2.5, 0.45)]).unwrap();
        for n in [7, 20, 33] {
            let shape = BandShape::periodic(n, 1).unwrap();
            let r = build_r_from_measure(&h, shape);
            let cn = shape.row_budget() as f64;
            // √(c t)² / c may land an ulp away from t; snap back to the atom
            let vals: Vec<f64> = (0..n)
                .map(|i| {
                    let t = r.get(i, i).re.powi(2) / cn;
                    h.atoms().iter().map(|a| a.0).find(|a| (a - t).abs() <= 1e-12).unwrap()
                })
                .collect();
            let esd = crate::spectra::EsdSample::new(vals).unwrap();
            let d = kolmogorov_distance(&esd, |x| h.cdf(x));
            assert!(d <= 1.0 / n as f64 + 1e-12, "n={n}: {d}");
        }
    }

    #[test]
    fn truncation_examples() {
        let shape = BandShape::periodic(4, 1).unwrap();
        let h = SpectralMeasure::new(vec![(1.0, 0.5), (4.0, 0.5)]).unwrap();
        let r = build_r_from_measure(&h, shape);

        let t = truncate_r(&r, 1.5).unwrap();
        assert_eq!(t.zeroed, 2);
        let g = gram_dense(t.matrix.as_ref());
        let esd = eigenvalues_hermitian(&g).unwrap();
        let cn = shape.row_budget() as f64;
        let ev: Vec<f64> = esd.eigenvalues().iter().map(|v| v / cn).collect();
        assert!(ev[0].abs() < 1e-12 && ev[1].abs() < 1e-12);
        assert!((ev[2] - 1.0).abs() < 1e-12 && (ev[3] - 1.0).abs() < 1e-12);

        let untouched = truncate_r(&r, 2.5).unwrap();
        assert_eq!(untouched.zeroed, 0);
        assert_eq!(untouched.matrix.as_ref(), r.entries());

        let zero = BandMatrix::zeros(shape);
        let t0 = truncate_r(&zero, 1.0).unwrap();
        assert_eq!(linalg::max_abs(t0.matrix.as_ref()), 0.0);

        assert!(truncate_r(&r, 0.0).is_err());
        assert!(truncate_r(&r, -1.0).is_err());
        assert!(truncate_r(&r, f64::NAN).is_err());
    }

    #[test]
    fn truncation_of_a_general_band_matrix() {
        let shape = BandShape::periodic(12, 2).unwrap();
        let x = sample_x(&EnsembleConfig::new(shape, 1.0, NoiseDistribution::ComplexGaussian, 9).unwrap());
        let svals = linalg::singular_values((x.entries() * faer::Scale(c(1.0 / 5f64.sqrt()))).as_ref()).unwrap();
        let alpha = 0.5 * (svals[2] + svals[3]);
        let t = truncate_r(&x, alpha).unwrap();
        assert_eq!(t.zeroed, 3);
        // count equals n · H_n(α², ∞)
        let cn = 5.0;
        let esd = eigenvalues_hermitian(&gram_dense(x.entries())).unwrap();
        let tail = esd.eigenvalues().iter().filter(|&&v| v / cn > alpha * alpha).count();
        assert_eq!(tail, 3);
        let after = linalg::singular_values((t.matrix.as_ref() * faer::Scale(c(1.0 / cn.sqrt()))).as_ref()).unwrap();
        for (k, s) in after.iter().enumerate() {
            assert!(*s <= alpha + 1e-10, "{k}: {s}");
        }
        let no_cut = truncate_r(&x, svals[0] * 1.01).unwrap();
        let diff = &no_cut.matrix - x.entries();
        assert!(linalg::frobenius(diff.as_ref()) < 1e-10 * linalg::frobenius(x.entries()));
    }

    #[test]
    fn assembly_examples() {
        let shape = BandShape::non_periodic(2, 0).unwrap();
        let r = BandMatrix::diagonal(shape, &[c(1.0), c(0.0)]).unwrap();
        let x = BandMatrix::diagonal(shape, &[c(1.0), c(-1.0)]).unwrap();
        let y = assemble_y(&r, &x, 2.0).unwrap();
        assert_eq!(y.get(0, 0), c(3.0));
        assert_eq!(y.get(1, 1), c(-2.0));

        let other = BandMatrix::zeros(BandShape::periodic(2, 0).unwrap());
        assert!(assemble_y(&r, &other, 1.0).is_err());

        let shape = BandShape::periodic(9, 2).unwrap();
        let x = sample_x(&EnsembleConfig::new(shape, 1.0, NoiseDistribution::Rademacher, 1).unwrap());
        let zero = BandMatrix::zeros(shape);
        let y = assemble_y(&zero, &x, 1.0).unwrap();
        let s = 5f64.sqrt();
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(y.get(i, j), x.get(i, j) / s);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn assembly_is_linear(seed in 0u64..10_000, sigma in 0.0f64..3.0) {
            let shape = BandShape::periodic(11, 2).unwrap();
            let make = |s: u64| sample_x(&EnsembleConfig::new(shape, 1.0, NoiseDistribution::ComplexGaussian, s).unwrap());
            let (r1, r2, x1, x2) = (make(seed), make(seed + 1), make(seed + 2), make(seed + 3));
            let sum_r = BandMatrix::new(shape, r1.entries() + r2.entries()).unwrap();
            let sum_x = BandMatrix::new(shape, x1.entries() + x2.entries()).unwrap();
            let lhs = assemble_y(&r1, &x1, sigma).unwrap().into_entries() + assemble_y(&r2, &x2, sigma).unwrap().into_entries();
            let rhs = assemble_y(&sum_r, &sum_x, sigma).unwrap().into_entries();
            let diff = &lhs - &rhs;
            prop_assert!(linalg::max_abs(diff.as_ref()) <= 1e-12 * linalg::max_abs(rhs.as_ref()).max(1.0));
        }
    }
}
