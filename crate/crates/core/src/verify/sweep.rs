use faer::c64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{esd_of, MetricStats};
use crate::band::BandShape;
use crate::ensemble::{assemble_y, build_r_from_measure, sample_x, trial_seed, EnsembleConfig, NoiseDistribution};
use crate::limit_law::{horizontal_grid, invert_to_density, solve_grid, GridCdf, SolverOptions, SpectralMeasure};
use crate::spectra::{empirical_stieltjes, kolmogorov_distance, EsdSample, HalfPlanePoint};
use crate::verify::gap_from_spectrum;
use crate::{Error, Result};

/// How the bandwidth grows with `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    /// The same `b` for every `n`.
    Fixed(usize),
    /// `b = ⌈n^exponent⌉ / divisor` (integer division).
    Power { exponent: f64, divisor: usize },
}

impl BandwidthRule {
    /// `⌈n^exponent⌉ / 2`.
    pub fn power_half(exponent: f64) -> Self {
        BandwidthRule::Power { exponent, divisor: 2 }
    }

    pub fn bandwidth(&self, n: usize) -> Result<usize> {
        let b = match *self {
            BandwidthRule::Fixed(b) => b,
            BandwidthRule::Power { exponent, divisor } => {
                if !exponent.is_finite() || exponent < 0.0 || divisor == 0 {
                    return Err(Error::invalid(format!(
                        "bad bandwidth rule: exponent {exponent}, divisor {divisor}"
                    )));
                }
                (n as f64).powf(exponent).ceil() as usize / divisor
            }
        };
        if 2 * b + 1 > n {
            return Err(Error::invalid(format!(
                "bandwidth rule gives b = {b}, too wide for n = {n}"
            )));
        }
        Ok(b)
    }

    pub fn label(&self) -> String {
        match *self {
            BandwidthRule::Fixed(b) => format!("b={b}"),
            BandwidthRule::Power { exponent, divisor: 1 } => format!("ceil(n^{exponent})"),
            BandwidthRule::Power { exponent, divisor } => format!("ceil(n^{exponent})/{divisor}"),
        }
    }
}

/// Horizontal line `x + iη`, `x` in `[x_min, x_max]` with `count` points, on
/// which the limit density is tabulated and integrated to a CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub count: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub rule: BandwidthRule,
    pub periodic: bool,
    pub sigma: f64,
    pub dist: NoiseDistribution,
    pub h: SpectralMeasure,
    pub trials: usize,
    pub seed: u64,
    /// Points over which `sup |m_n − m|` is taken.
    pub grid: Vec<HalfPlanePoint>,
    /// Where the deterministic-equivalent gap is measured.
    pub de_point: HalfPlanePoint,
    /// If set, the pooled ESD is compared to the limit CDF on this grid.
    pub cdf_grid: Option<CdfGrid>,
    pub solver: SolverOptions,
}

/// Statistics for one matrix size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub n: usize,
    pub bandwidth: usize,
    pub row_budget: usize,
    /// `sup_grid |m_n(z) − m(z)|`.
    pub sup_gap: MetricStats,
    /// `|tr B⁻¹ / n − m_n|` at the configured point.
    pub de_gap: MetricStats,
    /// Kolmogorov distance between the ESD pooled over trials and the limit CDF.
    pub ks_distance: Option<f64>,
    /// Trial/grid pairs with `Im m_n ≤ 0` or `Im(z m_n) < 0`.
    pub herglotz_violations: usize,
    pub trial_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rule: String,
    pub sigma: f64,
    pub dist: NoiseDistribution,
    pub seed: u64,
    pub trials: usize,
    pub grid: Vec<HalfPlanePoint>,
    /// Limit `m(z)` on the grid as `(re, im)`.
    pub limit_values: Vec<(f64, f64)>,
    pub sizes: Vec<SizeReport>,
}

impl SweepReport {
    pub fn sup_gap_strictly_decreasing(&self) -> bool {
        self.sizes.windows(2).all(|w| w[1].sup_gap.mean < w[0].sup_gap.mean)
    }

    pub fn de_gap_strictly_decreasing(&self) -> bool {
        self.sizes.windows(2).all(|w| w[1].de_gap.mean < w[0].de_gap.mean)
    }
}

struct TrialOutcome {
    sup_gap: f64,
    de_gap: f64,
    violations: usize,
    eigenvalues: Vec<f64>,
}

/// Seed of the trial stream family used for matrix size `n`.
pub(crate) fn size_seed(master: u64, n: usize) -> u64 {
    trial_seed(master, n as u64)
}

/// For each size: sample `Y` per trial, compare `m_n` with the limit `m` on
/// the grid, measure the deterministic-equivalent gap, and optionally compare
/// the pooled ESD with the limit CDF.
///
/// `R` is the diagonal quantisation of `H`, so the spectrum of `R R*/c_n`
/// needed for the gap is read off its diagonal.
pub fn convergence_sweep(config: &SweepConfig) -> Result<SweepReport> {
    if config.sizes.is_empty() || config.trials == 0 {
        return Err(Error::invalid("sweep needs at least one size and one trial"));
    }
    if config.grid.is_empty() {
        return Err(Error::invalid("sweep needs a non-empty z grid"));
    }
    if !config.sigma.is_finite() || config.sigma < 0.0 {
        return Err(Error::invalid(format!(
            "sigma must be finite and >= 0, got {}",
            config.sigma
        )));
    }
    let limit = solve_grid(&config.grid, &config.h, config.sigma, &config.solver)?;
    let limit_cdf = match config.cdf_grid {
        Some(g) => {
            let line = horizontal_grid(g.x_min, g.x_max, g.count, g.eta)?;
            let sol = solve_grid(&line, &config.h, config.sigma, &config.solver)?;
            Some(GridCdf::from_curve(&invert_to_density(&sol)?)?)
        }
        None => None,
    };

    let mut sizes = Vec::with_capacity(config.sizes.len());
    for &n in &config.sizes {
        let b = config.rule.bandwidth(n)?;
        let shape = BandShape::new(n, b, config.periodic)?;
        let c = shape.row_budget() as f64;
        let r = build_r_from_measure(&config.h, shape);
        let rr: Vec<f64> = (0..n).map(|i| r.get(i, i).norm_sqr() / c).collect();
        let base = EnsembleConfig::new(shape, config.sigma, config.dist, size_seed(config.seed, n))?;
        let seeds: Vec<u64> = (0..config.trials as u64).map(|t| trial_seed(base.seed, t)).collect();

        let outcomes: Vec<TrialOutcome> = seeds
            .par_iter()
            .map(|&seed| {
                let x = sample_x(&EnsembleConfig { seed, ..base });
                let y = assemble_y(&r, &x, config.sigma)?;
                let esd = esd_of(y.entries())?;
                let mut sup_gap = 0.0f64;
                let mut violations = 0;
                for (z, m) in config.grid.iter().zip(&limit.values) {
                    let m_n = empirical_stieltjes(&esd, *z);
                    sup_gap = sup_gap.max((m_n - m).norm());
                    let zm = z.z() * m_n;
                    if m_n.im.is_nan() || m_n.im <= 0.0 || zm.im < -1e-12 * zm.norm() {
                        violations += 1;
                    }
                }
                let m_de = empirical_stieltjes(&esd, config.de_point);
                let de_gap = gap_from_spectrum(&rr, m_de, config.sigma, config.de_point)?;
                Ok(TrialOutcome {
                    sup_gap,
                    de_gap,
                    violations,
                    eigenvalues: esd.eigenvalues().to_vec(),
                })
            })
            .collect::<Result<_>>()?;

        let sup: Vec<f64> = outcomes.iter().map(|o| o.sup_gap).collect();
        let de: Vec<f64> = outcomes.iter().map(|o| o.de_gap).collect();
        let ks_distance = match &limit_cdf {
            Some(cdf) => {
                let pooled: Vec<f64> = outcomes.iter().flat_map(|o| o.eigenvalues.iter().copied()).collect();
                let pooled = EsdSample::new(pooled)?;
                Some(kolmogorov_distance(&pooled, |x| cdf.eval(x)))
            }
            None => None,
        };
        let report = SizeReport {
            n,
            bandwidth: b,
            row_budget: shape.row_budget(),
            sup_gap: MetricStats::from_samples(&sup),
            de_gap: MetricStats::from_samples(&de),
            ks_distance,
            herglotz_violations: outcomes.iter().map(|o| o.violations).sum(),
            trial_seeds: seeds,
        };
        log::info!(
            "n={n} b={b}: sup|m_n - m| = {:.3e} ± {:.1e}, DE gap = {:.3e} ± {:.1e}",
            report.sup_gap.mean,
            report.sup_gap.stderr,
            report.de_gap.mean,
            report.de_gap.stderr
        );
        sizes.push(report);
    }

    Ok(SweepReport {
        rule: config.rule.label(),
        sigma: config.sigma,
        dist: config.dist,
        seed: config.seed,
        trials: config.trials,
        grid: config.grid.clone(),
        limit_values: limit.values.iter().map(|m: &c64| (m.re, m.im)).collect(),
        sizes,
    })
}
