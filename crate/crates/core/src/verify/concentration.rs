use faer::{c64, Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{binomial_stderr, MetricStats};
use crate::band::{BandMatrix, BandShape};
use crate::ensemble::{assemble_y, build_r_from_measure, sample_x, trial_seed, EnsembleConfig, NoiseDistribution};
use crate::limit_law::SpectralMeasure;
use crate::spectra::{eigenvalues_hermitian, gram, HalfPlanePoint};
use crate::verify::sweep::size_seed;
use crate::verify::BandwidthRule;
use crate::{linalg, Error, Result};

/// Which matrix `M` enters the quadratic form `x_j* M x_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixRole {
    /// `C_j⁻¹`, with `C_j = Y Y* − y_j y_j* − zI` built from an independent sample.
    Resolvent,
    Identity,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadFormConfig {
    pub sizes: Vec<usize>,
    pub rule: BandwidthRule,
    pub periodic: bool,
    pub dist: NoiseDistribution,
    pub role: MatrixRole,
    /// `l` in `E|x* M x − (c_n/n) tr M|^{2l}`.
    pub moment_order: u32,
    pub trials: usize,
    pub seed: u64,
    pub sigma: f64,
    pub h: SpectralMeasure,
    pub z: HalfPlanePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadFormLevel {
    pub n: usize,
    pub bandwidth: usize,
    pub row_budget: usize,
    pub stat: MetricStats,
}

/// Weighted least-squares slope of `log y` against `log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    /// 95% normal confidence interval.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SlopeFit {
    /// Fits `log means` against `log xs`, weighting each point by the inverse
    /// of its delta-method variance `(stderr / mean)²`. Falls back to equal
    /// weights when any standard error is zero.
    pub fn fit(xs: &[f64], stats: &[MetricStats]) -> Option<SlopeFit> {
        if xs.len() < 2 || xs.len() != stats.len() || stats.iter().any(|s| s.mean.is_nan() || s.mean <= 0.0) {
            return None;
        }
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let ly: Vec<f64> = stats.iter().map(|s| s.mean.ln()).collect();
        let weighted = stats.iter().all(|s| s.stderr > 0.0);
        let w: Vec<f64> = stats
            .iter()
            .map(|s| if weighted { (s.mean / s.stderr).powi(2) } else { 1.0 })
            .collect();
        let sw: f64 = w.iter().sum();
        let mx = w.iter().zip(&lx).map(|(w, x)| w * x).sum::<f64>() / sw;
        let my = w.iter().zip(&ly).map(|(w, y)| w * y).sum::<f64>() / sw;
        let sxx: f64 = w.iter().zip(&lx).map(|(w, x)| w * (x - mx).powi(2)).sum();
        let sxy: f64 = (0..lx.len()).map(|i| w[i] * (lx[i] - mx) * (ly[i] - my)).sum();
        if sxx <= 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let stderr = if weighted {
            (1.0 / sxx).sqrt()
        } else if lx.len() > 2 {
            let rss: f64 = (0..lx.len()).map(|i| (ly[i] - my - slope * (lx[i] - mx)).powi(2)).sum();
            (rss / (lx.len() - 2) as f64 / sxx).sqrt()
        } else {
            0.0
        };
        Some(SlopeFit {
            slope,
            stderr,
            ci_low: slope - 1.96 * stderr,
            ci_high: slope + 1.96 * stderr,
        })
    }

    pub fn within(&self, low: f64, high: f64) -> bool {
        (low..=high).contains(&self.slope)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadFormReport {
    pub role: MatrixRole,
    pub moment_order: u32,
    pub levels: Vec<QuadFormLevel>,
    pub slope_vs_n: Option<SlopeFit>,
    pub slope_vs_row_budget: Option<SlopeFit>,
}

/// The quadratic form for column `j = 0`: `x* M x − (c_n/n) tr M` with `x` the
/// first column of a fresh `X`.
fn quadratic_form_once(config: &QuadFormConfig, base: &EnsembleConfig, r: &BandMatrix, seed: u64) -> Result<f64> {
    let shape = base.shape;
    let n = shape.n();
    let c = shape.row_budget() as f64;
    let x = sample_x(&EnsembleConfig {
        seed: trial_seed(seed, 0),
        ..*base
    });
    let xj = x.column(0);
    let support = shape.support0(0);
    let centred = match config.role {
        MatrixRole::Zero => c64::new(0.0, 0.0),
        MatrixRole::Identity => {
            let q: f64 = support.iter().map(|&k| xj[k].norm_sqr()).sum();
            c64::new(q - c, 0.0)
        }
        MatrixRole::Resolvent => {
            let resample = sample_x(&EnsembleConfig {
                seed: trial_seed(seed, 1),
                ..*base
            });
            let y = assemble_y(r, &resample, config.sigma)?.without_column(0);
            let m = resolvent(&y, config.z)?;
            let tr: c64 = (0..n).map(|i| m[(i, i)]).sum();
            let mut q = c64::new(0.0, 0.0);
            for &k in &support {
                for &l in &support {
                    q += xj[k].conj() * m[(k, l)] * xj[l];
                }
            }
            q - tr * (c / n as f64)
        }
    };
    Ok(centred.norm().powi(2 * config.moment_order as i32))
}

/// `(Y Y* − z I)⁻¹`.
fn resolvent(y: &BandMatrix, z: HalfPlanePoint) -> Result<Mat<c64>> {
    let mut c = gram(y).into_inner();
    for i in 0..c.nrows() {
        c[(i, i)] -= z.z();
    }
    linalg::inverse(c.as_ref())
}

/// Estimates `E|x_j* M x_j − (c_n/n) tr M|^{2l}` for each size and fits its
/// log-log slope against `n` and against `c_n`.
pub fn quadratic_form_stat(config: &QuadFormConfig) -> Result<QuadFormReport> {
    if config.sizes.is_empty() || config.trials == 0 || config.moment_order == 0 {
        return Err(Error::invalid("need sizes, trials >= 1 and moment order >= 1"));
    }
    let mut levels = Vec::with_capacity(config.sizes.len());
    for &n in &config.sizes {
        let b = config.rule.bandwidth(n)?;
        let shape = BandShape::new(n, b, config.periodic)?;
        let base = EnsembleConfig::new(shape, config.sigma, config.dist, size_seed(config.seed, n))?;
        let r = build_r_from_measure(&config.h, shape);
        let samples: Vec<f64> = (0..config.trials as u64)
            .into_par_iter()
            .map(|t| quadratic_form_once(config, &base, &r, trial_seed(base.seed, t)))
            .collect::<Result<_>>()?;
        let stat = MetricStats::from_samples(&samples);
        log::info!(
            "n={n} b={b}: quadratic form statistic {:.4e} ± {:.1e}",
            stat.mean,
            stat.stderr
        );
        levels.push(QuadFormLevel {
            n,
            bandwidth: b,
            row_budget: shape.row_budget(),
            stat,
        });
    }
    let stats: Vec<MetricStats> = levels.iter().map(|l| l.stat).collect();
    let ns: Vec<f64> = levels.iter().map(|l| l.n as f64).collect();
    let cs: Vec<f64> = levels.iter().map(|l| l.row_budget as f64).collect();
    Ok(QuadFormReport {
        role: config.role,
        moment_order: config.moment_order,
        slope_vs_n: SlopeFit::fit(&ns, &stats),
        slope_vs_row_budget: SlopeFit::fit(&cs, &stats),
        levels,
    })
}

/// Empirical frequency of one tail event against its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailLevel {
    /// Deviation parameter as passed in.
    pub t: f64,
    /// The value the statistic is compared with.
    pub threshold: f64,
    pub exceedances: usize,
    pub frequency: f64,
    pub stderr: f64,
    pub bound: f64,
}

impl TailLevel {
    fn new(t: f64, threshold: f64, values: &[f64], bound: f64) -> Self {
        let exceedances = values.iter().filter(|&&v| v > threshold).count();
        let frequency = exceedances as f64 / values.len().max(1) as f64;
        TailLevel {
            t,
            threshold,
            exceedances,
            frequency,
            stderr: binomial_stderr(frequency, values.len()),
            bound,
        }
    }

    /// `frequency ≤ bound + k · stderr`.
    pub fn holds_with_margin(&self, k: f64) -> bool {
        self.frequency <= self.bound + k * self.stderr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTailConfig {
    pub shape: BandShape,
    pub dist: NoiseDistribution,
    pub trials: usize,
    pub seed: u64,
    pub ts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTailReport {
    pub n: usize,
    pub row_budget: usize,
    pub trials: usize,
    /// `‖X X*‖ / c_n` over trials.
    pub norm: MetricStats,
    pub max_norm: f64,
    /// `P(‖X X*‖/c_n > t + log n)` against `e^e e^{−t}`.
    pub levels: Vec<TailLevel>,
}

/// `‖X X*‖` as the top eigenvalue of the Gram matrix and as the squared top
/// singular value of `X`.
pub fn norm_two_ways(x: MatRef<'_, c64>) -> Result<(f64, f64)> {
    let g = crate::spectra::gram_dense(x);
    let top_eig = eigenvalues_hermitian(&g)?.max();
    let top_sv = linalg::singular_values(x)?[0];
    Ok((top_eig, top_sv * top_sv))
}

/// Tail of `‖X X*‖ / c_n` beyond `t + log n` for Gaussian `X`.
pub fn norm_tail_experiment(config: &NormTailConfig) -> Result<NormTailReport> {
    if !config.dist.is_gaussian() {
        return Err(Error::invalid("the norm tail bound is stated for Gaussian entries"));
    }
    if config.trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let shape = config.shape;
    let c = shape.row_budget() as f64;
    let base = EnsembleConfig::new(shape, 1.0, config.dist, config.seed)?;
    let norms: Vec<f64> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let x = sample_x(&base.for_trial(t));
            Ok(eigenvalues_hermitian(&gram(&x))?.max() / c)
        })
        .collect::<Result<_>>()?;
    let log_n = (shape.n() as f64).ln();
    let levels = config
        .ts
        .iter()
        .map(|&t| TailLevel::new(t, t + log_n, &norms, (std::f64::consts::E - t).exp()))
        .collect();
    Ok(NormTailReport {
        n: shape.n(),
        row_budget: shape.row_budget(),
        trials: config.trials,
        norm: MetricStats::from_samples(&norms),
        max_norm: norms.iter().copied().fold(0.0, f64::max),
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialTraceConfig {
    pub shape: BandShape,
    pub dist: NoiseDistribution,
    pub sigma: f64,
    pub h: SpectralMeasure,
    pub z: HalfPlanePoint,
    pub trials: usize,
    /// Independent trials used only to estimate the centring expectation.
    pub holdout_trials: usize,
    pub seed: u64,
    /// Deviations are tested at `t = k · √(32 n) / Im z` for each `k`.
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialTraceReport {
    pub n: usize,
    pub row_budget: usize,
    pub trials: usize,
    pub holdout_trials: usize,
    /// Held-out estimate of `E Σ_{k∈I_j} (C_j⁻¹)_kk` as `(re, im)`.
    pub centre: (f64, f64),
    pub deviation: MetricStats,
    /// `P(|S − E S| > t)` against `2 exp(−Im(z)² t² / (32 n))`.
    pub levels: Vec<TailLevel>,
}

/// `Σ_{k ∈ I_j} (C_j⁻¹)_kk` for `j = 0`, solving only for the needed columns.
fn partial_trace_once(config: &PartialTraceConfig, base: &EnsembleConfig, r: &BandMatrix, seed: u64) -> Result<c64> {
    let x = sample_x(&EnsembleConfig { seed, ..*base });
    let y = assemble_y(r, &x, config.sigma)?.without_column(0);
    let mut c = gram(&y).into_inner();
    let n = c.nrows();
    for i in 0..n {
        c[(i, i)] -= config.z.z();
    }
    let support = base.shape.support0(0);
    let rhs = Mat::from_fn(n, support.len(), |i, col| {
        if i == support[col] {
            c64::new(1.0, 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    });
    let sol = linalg::solve(c.as_ref(), rhs.as_ref())?;
    Ok(support.iter().enumerate().map(|(col, &k)| sol[(k, col)]).sum())
}

/// Tail of the partial trace `Σ_{k∈I_j} (C_j⁻¹)_kk` around its mean, with the
/// mean estimated from a separate batch of trials.
pub fn partial_trace_tail_experiment(config: &PartialTraceConfig) -> Result<PartialTraceReport> {
    if !matches!(
        config.dist,
        NoiseDistribution::ComplexGaussian | NoiseDistribution::RealGaussian | NoiseDistribution::Rademacher
    ) {
        return Err(Error::invalid(
            "partial trace experiment needs Gaussian or Rademacher entries",
        ));
    }
    if config.trials == 0 || config.holdout_trials == 0 {
        return Err(Error::invalid("need at least one trial and one held-out trial"));
    }
    let shape = config.shape;
    let n = shape.n();
    let r = build_r_from_measure(&config.h, shape);
    let main = EnsembleConfig::new(shape, config.sigma, config.dist, trial_seed(config.seed, 0))?;
    let holdout = EnsembleConfig {
        seed: trial_seed(config.seed, 1),
        ..main
    };
    let run = |base: &EnsembleConfig, count: usize| -> Result<Vec<c64>> {
        (0..count as u64)
            .into_par_iter()
            .map(|t| partial_trace_once(config, base, &r, trial_seed(base.seed, t)))
            .collect()
    };
    let held = run(&holdout, config.holdout_trials)?;
    let centre: c64 = held.iter().sum::<c64>() / config.holdout_trials as f64;
    let values = run(&main, config.trials)?;
    let deviations: Vec<f64> = values.iter().map(|v| (v - centre).norm()).collect();
    let eta = config.z.im();
    let unit = (32.0 * n as f64).sqrt() / eta;
    let levels = config
        .multipliers
        .iter()
        .map(|&k| {
            let t = k * unit;
            let bound = 2.0 * (-(eta * t).powi(2) / (32.0 * n as f64)).exp();
            TailLevel::new(t, t, &deviations, bound)
        })
        .collect();
    Ok(PartialTraceReport {
        n,
        row_budget: shape.row_budget(),
        trials: config.trials,
        holdout_trials: config.holdout_trials,
        centre: (centre.re, centre.im),
        deviation: MetricStats::from_samples(&deviations),
        levels,
    })
}
