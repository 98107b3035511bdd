use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::band::BandShape;
use crate::ensemble::NoiseDistribution;
use crate::limit_law::{horizontal_grid, SolverOptions, SpectralMeasure};
use crate::spectra::HalfPlanePoint;
use crate::verify::{BandwidthRule, CdfGrid, MatrixRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Solve,
    Simulate,
    Sweep,
    Verify,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Simulate => "simulate",
            Mode::Sweep => "sweep",
            Mode::Verify => "verify",
        }
    }
}

/// Points `x + iη` with `x_count` values of `x` evenly spread over `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub x_count: usize,
    pub eta: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            x_min: -1.0,
            x_max: 5.0,
            x_count: 401,
            eta: 1e-3,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> crate::Result<Vec<HalfPlanePoint>> {
        horizontal_grid(self.x_min, self.x_max, self.x_count, self.eta)
    }
}

/// The bound check run by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Check {
    /// ESD distance after a rank-`k` change, for every `k` in `ranks`; uses `n`.
    RankPerturbation {
        #[serde(default = "default_ranks")]
        ranks: Vec<usize>,
    },
    /// ESD distance after truncating `R` at `alpha` (default `log c_n`).
    Truncation {
        #[serde(default)]
        alpha: Option<f64>,
    },
    /// Gaussian tail of `‖X X*‖ / c_n`.
    NormTail {
        #[serde(default = "default_ts")]
        ts: Vec<f64>,
    },
    /// Scaling of the quadratic-form statistic over `sizes`.
    QuadraticForm {
        #[serde(default = "default_role")]
        role: MatrixRole,
        #[serde(default = "default_moment_order")]
        moment_order: u32,
    },
    /// Tail of the partial resolvent trace at `z`.
    PartialTrace {
        /// Defaults to ten times `trials`.
        #[serde(default)]
        holdout_trials: Option<usize>,
        #[serde(default = "default_multipliers")]
        multipliers: Vec<f64>,
    },
}

fn default_ranks() -> Vec<usize> {
    vec![1, 3, 5]
}

fn default_ts() -> Vec<f64> {
    vec![2.0, 4.0, 6.0]
}

fn default_role() -> MatrixRole {
    MatrixRole::Resolvent
}

fn default_moment_order() -> u32 {
    1
}

fn default_multipliers() -> Vec<f64> {
    vec![1.0, 2.0]
}

/// Everything a run needs. Each field has a default, so a config file only
/// lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Limit of the ESD of `R R* / c_n`, as `[[location, weight], ...]`.
    pub h: SpectralMeasure,
    pub sigma: f64,
    /// Matrix size for `simulate` and the single-size checks.
    pub n: usize,
    /// Size ladder for `sweep` and the quadratic-form check.
    pub sizes: Vec<usize>,
    pub bandwidth: BandwidthRule,
    pub periodic: bool,
    pub dist: NoiseDistribution,
    pub seed: u64,
    pub trials: usize,
    /// Evaluation grid: the solved grid for `solve`, where `m_n` is reported
    /// for `simulate`, and the sup-gap grid for `sweep`.
    pub grid: GridSpec,
    /// Point for the deterministic-equivalent gap and resolvent experiments.
    pub z: HalfPlanePoint,
    /// Grid for the limit CDF in `sweep`; no Kolmogorov distance if absent.
    pub cdf_grid: Option<CdfGrid>,
    pub check: Option<Check>,
    pub out: PathBuf,
    pub tol: f64,
    pub max_iter: usize,
    /// Worker threads; results do not depend on it.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Solve,
            h: SpectralMeasure::dirac(0.0).expect("valid measure"),
            sigma: 1.0,
            n: 1000,
            sizes: vec![500, 1000, 2000],
            bandwidth: BandwidthRule::power_half(0.8),
            periodic: true,
            dist: NoiseDistribution::ComplexGaussian,
            seed: 0,
            trials: 10,
            grid: GridSpec::default(),
            z: HalfPlanePoint::i(),
            cdf_grid: None,
            check: None,
            out: PathBuf::from("out"),
            tol: SolverOptions::default().tol,
            max_iter: SolverOptions::default().max_iter,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn shape(&self) -> crate::Result<BandShape> {
        let b = self.bandwidth.bandwidth(self.n)?;
        BandShape::new(self.n, b, self.periodic)
    }

    /// Checks every field against the preconditions of the code it feeds.
    pub fn validate(&self) -> Result<(), String> {
        let err = |e: crate::Error| e.to_string();
        self.solver().validate().map_err(err)?;
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if self.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        if self.threads == Some(0) {
            return Err("threads must be at least 1".into());
        }
        self.grid.points().map_err(err)?;
        if let Some(g) = self.cdf_grid {
            horizontal_grid(g.x_min, g.x_max, g.count, g.eta).map_err(err)?;
            if g.count < 2 {
                return Err("cdf_grid needs at least 2 points".into());
            }
        }
        let needs_sizes = self.mode == Mode::Sweep
            || matches!(self.check, Some(Check::QuadraticForm { .. })) && self.mode == Mode::Verify;
        if needs_sizes {
            if self.sizes.is_empty() {
                return Err("sizes must not be empty".into());
            }
            for &n in &self.sizes {
                let b = self.bandwidth.bandwidth(n).map_err(err)?;
                BandShape::new(n, b, self.periodic).map_err(err)?;
            }
        } else if self.mode != Mode::Solve {
            self.shape().map_err(err)?;
        }
        if self.mode == Mode::Verify {
            match &self.check {
                None => return Err("verify needs a `check`".into()),
                Some(Check::RankPerturbation { ranks }) => {
                    if self.n > 50 {
                        return Err(format!(
                            "rank-perturbation uses exact eigensolves and needs n <= 50, got {}",
                            self.n
                        ));
                    }
                    if let Some(k) = ranks.iter().find(|&&k| k > self.n) {
                        return Err(format!("rank {k} exceeds n = {}", self.n));
                    }
                }
                Some(Check::Truncation { alpha }) => {
                    if let Some(a) = alpha {
                        if !a.is_finite() || *a <= 0.0 {
                            return Err(format!("alpha must be positive, got {a}"));
                        }
                    } else if self.shape().map_err(err)?.row_budget() == 1 {
                        return Err("default alpha = log c_n is 0 for c_n = 1; set alpha".into());
                    }
                }
                Some(Check::NormTail { ts }) => {
                    if !self.dist.is_gaussian() {
                        return Err("norm-tail needs a Gaussian distribution".into());
                    }
                    if ts.iter().any(|t| !t.is_finite()) {
                        return Err("ts must be finite".into());
                    }
                }
                Some(Check::QuadraticForm { moment_order, .. }) => {
                    if *moment_order == 0 {
                        return Err("moment_order must be at least 1".into());
                    }
                }
                Some(Check::PartialTrace {
                    holdout_trials,
                    multipliers,
                }) => {
                    if self.dist == NoiseDistribution::ScaledUniform {
                        return Err("partial-trace needs Gaussian or Rademacher entries".into());
                    }
                    if *holdout_trials == Some(0) {
                        return Err("holdout_trials must be at least 1".into());
                    }
                    if multipliers.iter().any(|k| !k.is_finite() || *k < 0.0) {
                        return Err("multipliers must be finite and >= 0".into());
                    }
                }
            }
        }
        Ok(())
    }
}
