//! Monte Carlo and exact checks of the convergence statements and of the
//! inequalities behind them.
//!
//! Every experiment is a deterministic function of its configuration and
//! master seed: trial `t` draws from the stream [`trial_seed`]`(seed, t)`,
//! trials may run on any number of threads, and results are reduced in trial
//! order.
//!
//! [`trial_seed`]: crate::ensemble::trial_seed

mod concentration;
mod equivalent;
mod perturbation;
mod sweep;

pub use concentration::{
    norm_tail_experiment, norm_two_ways, partial_trace_tail_experiment, quadratic_form_stat, MatrixRole,
    NormTailConfig, NormTailReport, PartialTraceConfig, PartialTraceReport, QuadFormConfig, QuadFormLevel,
    QuadFormReport, SlopeFit, TailLevel,
};
pub use equivalent::{deterministic_equivalent_gap, gap_from_spectrum, DeterministicEquivalent};
pub use perturbation::{
    rank_perturbation_check, truncation_bound_check, RankConfig, RankCounterexample, RankReport, TruncationConfig,
    TruncationCounterexample, TruncationReport,
};
pub use sweep::{convergence_sweep, BandwidthRule, CdfGrid, SizeReport, SweepConfig, SweepReport};

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::spectra::{eigenvalues_hermitian, gram_dense, EsdSample};
use crate::Result;

/// Mean and standard error of a per-trial metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    /// Sample standard deviation over `√trials`; zero for a single trial.
    pub stderr: f64,
    pub trials: usize,
}

impl MetricStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let k = samples.len();
        if k == 0 {
            return MetricStats {
                mean: 0.0,
                stderr: 0.0,
                trials: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / k as f64;
        let stderr = if k > 1 {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        MetricStats {
            mean,
            stderr,
            trials: k,
        }
    }
}

/// Standard error of a frequency `p` estimated from `trials` draws.
pub(crate) fn binomial_stderr(p: f64, trials: usize) -> f64 {
    if trials == 0 {
        0.0
    } else {
        (p * (1.0 - p) / trials as f64).sqrt()
    }
}

/// ESD of `Y Y*` for a dense `Y`.
pub(crate) fn esd_of(y: MatRef<'_, c64>) -> Result<EsdSample> {
    eigenvalues_hermitian(&gram_dense(y))
}

/// `(P + v v*)⁻¹` from `P⁻¹` by the Sherman-Morrison formula.
pub fn sherman_morrison(p_inv: MatRef<'_, c64>, v: MatRef<'_, c64>) -> Mat<c64> {
    let pv = p_inv * v;
    let vp = v.adjoint() * p_inv;
    let denom = c64::new(1.0, 0.0) + (v.adjoint() * &pv)[(0, 0)];
    let correction = &pv * &vp;
    Mat::from_fn(p_inv.nrows(), p_inv.ncols(), |i, j| {
        p_inv[(i, j)] - correction[(i, j)] / denom
    })
}
