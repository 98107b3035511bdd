use faer::{c64, Mat};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::esd_of;
use crate::band::BandShape;
use crate::ensemble::{
    assemble_y_dense, build_r_from_measure, rng_from_seed, sample_x, trial_seed, truncate_r, EnsembleConfig,
    NoiseDistribution,
};
use crate::limit_law::SpectralMeasure;
use crate::spectra::esd_distance;
use crate::{Error, Result};

/// Slack added to every exact bound to absorb eigensolver round-off.
const BOUND_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    pub n: usize,
    pub rank: usize,
    pub trials: usize,
    pub seed: u64,
}

/// An instance where the ESD distance exceeded the rank bound.
#[derive(Debug, Clone)]
pub struct RankCounterexample {
    pub trial: usize,
    pub seed: u64,
    pub distance: f64,
    pub p: Mat<c64>,
    pub q: Mat<c64>,
}

#[derive(Debug, Clone)]
pub struct RankReport {
    pub n: usize,
    pub rank: usize,
    pub trials: usize,
    pub bound: f64,
    pub max_distance: f64,
    pub distances: Vec<f64>,
    pub counterexample: Option<RankCounterexample>,
}

impl RankReport {
    pub fn ok(&self) -> bool {
        self.counterexample.is_none()
    }
}

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Mat<c64> {
    let mut rng = rng_from_seed(seed);
    Mat::from_fn(rows, cols, |_, _| {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        c64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
    })
}

fn rank_pair(n: usize, k: usize, seed: u64) -> (Mat<c64>, Mat<c64>) {
    let p = gaussian_matrix(n, n, trial_seed(seed, 0));
    let mut q = p.clone();
    if k > 0 {
        let a = gaussian_matrix(n, k, trial_seed(seed, 1));
        let b = gaussian_matrix(k, n, trial_seed(seed, 2));
        q += a * b;
    }
    (p, q)
}

/// Draws Gaussian `P` and `Q = P + A B` with `A` of size `n×k` (rank `k`
/// almost surely) and checks `sup_x |F_{PP*}(x) − F_{QQ*}(x)| ≤ 2k/n`.
pub fn rank_perturbation_check(config: &RankConfig) -> Result<RankReport> {
    let RankConfig { n, rank, trials, seed } = *config;
    if n == 0 || n > 50 {
        return Err(Error::invalid(format!(
            "rank check runs exact eigensolves for 1 <= n <= 50, got {n}"
        )));
    }
    if rank > n {
        return Err(Error::invalid(format!("rank {rank} exceeds n = {n}")));
    }
    let bound = 2.0 * rank as f64 / n as f64;
    let seeds: Vec<u64> = (0..trials as u64).map(|t| trial_seed(seed, t)).collect();
    let distances: Vec<f64> = seeds
        .par_iter()
        .map(|&s| {
            let (p, q) = rank_pair(n, rank, s);
            Ok(esd_distance(&esd_of(p.as_ref())?, &esd_of(q.as_ref())?))
        })
        .collect::<Result<_>>()?;
    let counterexample = distances.iter().position(|&d| d > bound + BOUND_SLACK).map(|trial| {
        let (p, q) = rank_pair(n, rank, seeds[trial]);
        RankCounterexample {
            trial,
            seed: seeds[trial],
            distance: distances[trial],
            p,
            q,
        }
    });
    Ok(RankReport {
        n,
        rank,
        trials,
        bound,
        max_distance: distances.iter().copied().fold(0.0, f64::max),
        distances,
        counterexample,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub h: SpectralMeasure,
    pub shape: BandShape,
    pub sigma: f64,
    pub dist: NoiseDistribution,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
}

/// A seed where truncating `R` moved the ESD further than allowed; keeps
/// both matrices for inspection.
#[derive(Debug, Clone)]
pub struct TruncationCounterexample {
    pub trial: usize,
    pub seed: u64,
    pub distance: f64,
    pub y: Mat<c64>,
    pub y_alpha: Mat<c64>,
}

#[derive(Debug, Clone)]
pub struct TruncationReport {
    pub alpha: f64,
    /// Singular values of `R / √c_n` above `alpha`.
    pub truncated: usize,
    pub bound: f64,
    pub max_distance: f64,
    pub distances: Vec<f64>,
    pub counterexample: Option<TruncationCounterexample>,
}

impl TruncationReport {
    pub fn ok(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// With `R` the quantisation of `H` and `R_α` its truncation, checks
/// `sup_x |F_{YY*}(x) − F_{Y_α Y_α*}(x)| ≤ (2/n) · #{s_i(R/√c_n) > α}` for
/// `Y`, `Y_α` sharing the same `X`.
pub fn truncation_bound_check(config: &TruncationConfig) -> Result<TruncationReport> {
    let shape = config.shape;
    let n = shape.n();
    let r = build_r_from_measure(&config.h, shape);
    let trunc = truncate_r(&r, config.alpha)?;
    let bound = 2.0 * trunc.zeroed as f64 / n as f64;
    let base = EnsembleConfig::new(shape, config.sigma, config.dist, config.seed)?;
    let pair = |t: u64| -> Result<(Mat<c64>, Mat<c64>)> {
        let x = sample_x(&base.for_trial(t));
        Ok((
            assemble_y_dense(r.entries(), &x, config.sigma)?,
            assemble_y_dense(trunc.matrix.as_ref(), &x, config.sigma)?,
        ))
    };
    let distances: Vec<f64> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let (y, ya) = pair(t)?;
            Ok(esd_distance(&esd_of(y.as_ref())?, &esd_of(ya.as_ref())?))
        })
        .collect::<Result<_>>()?;
    let counterexample = match distances.iter().position(|&d| d > bound + BOUND_SLACK) {
        Some(trial) => {
            let (y, y_alpha) = pair(trial as u64)?;
            Some(TruncationCounterexample {
                trial,
                seed: trial_seed(config.seed, trial as u64),
                distance: distances[trial],
                y,
                y_alpha,
            })
        }
        None => None,
    };
    Ok(TruncationReport {
        alpha: config.alpha,
        truncated: trunc.zeroed,
        bound,
        max_distance: distances.iter().copied().fold(0.0, f64::max),
        distances,
        counterexample,
    })
}
