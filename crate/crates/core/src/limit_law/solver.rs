use faer::c64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SpectralMeasure;
use crate::spectra::HalfPlanePoint;
use crate::{Error, Result};

/// Smallest damping factor the iteration will use.
const THETA_MIN: f64 = 1.0 / 64.0;
/// Iterates with `Im m < PROJECTION_FLOOR · Im z` are pushed back to that level.
const PROJECTION_FLOOR: f64 = 1e-12;
/// Denominators below this magnitude are treated as singular.
const SINGULAR_DENOMINATOR: f64 = 1e-14;
/// Continuation starts at this imaginary part and halves towards the target.
const CONTINUATION_START: f64 = 0.5;
const CONTINUATION_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::invalid(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Right-hand side of the limiting equation,
/// `Σ_k w_k / ( t_k / (1 + σ² m) − (1 + σ² m) z )`.
pub fn master_rhs(m: c64, z: HalfPlanePoint, h: &SpectralMeasure, sigma: f64) -> Result<c64> {
    let s = c64::new(1.0, 0.0) + m * (sigma * sigma);
    let sz = s * z.z();
    let mut acc = c64::new(0.0, 0.0);
    for &(t, w) in h.atoms() {
        let denom = if t == 0.0 {
            -sz
        } else {
            if s.norm() == 0.0 {
                return Err(Error::Singularity(format!("1 + σ²m vanishes at m = {m}")));
            }
            c64::new(t, 0.0) / s - sz
        };
        if denom.norm().is_nan() || denom.norm() < SINGULAR_DENOMINATOR {
            return Err(Error::Singularity(format!(
                "atom at t = {t} has denominator {denom} (m = {m}, z = {})",
                z.z()
            )));
        }
        acc += c64::new(w, 0.0) / denom;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub m: c64,
    /// `|m − master_rhs(m)|`.
    pub residual: f64,
    pub iterations: usize,
}

/// Damped fixed-point iteration started from `m_0 = −1/z`.
pub fn solve_fixed_point(
    z: HalfPlanePoint,
    h: &SpectralMeasure,
    sigma: f64,
    opts: &SolverOptions,
) -> Result<FixedPoint> {
    let m0 = -z.z().inv();
    solve_fixed_point_from(z, h, sigma, opts, m0)
}

/// Damped fixed-point iteration `m ← (1 − θ) m + θ F(m)` from a given start.
///
/// θ is picked each step from a secant estimate `d ≈ F'(m)` as the real
/// minimiser of `|1 − θ (1 − d)|`, clipped to `[1/64, cap]`; `cap` halves
/// whenever the residual grows and recovers by doubling otherwise.
pub fn solve_fixed_point_from(
    z: HalfPlanePoint,
    h: &SpectralMeasure,
    sigma: f64,
    opts: &SolverOptions,
    m0: c64,
) -> Result<FixedPoint> {
    opts.validate()?;
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::invalid(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let floor = PROJECTION_FLOOR * z.im();
    let project = |m: c64| {
        if m.im < floor {
            c64::new(m.re, floor)
        } else {
            m
        }
    };

    let mut m = project(m0);
    let mut f = master_rhs(m, z, h, sigma)?;
    let mut r = (f - m).norm();
    let mut best = (m, r);
    if r < opts.tol {
        return Ok(FixedPoint {
            m,
            residual: r,
            iterations: 0,
        });
    }

    let mut cap = 1.0f64;
    let mut prev: Option<(c64, c64)> = None;
    for it in 1..=opts.max_iter {
        let mut theta = cap;
        if let Some((mp, fp)) = prev {
            let dm = m - mp;
            if dm.norm() > 0.0 {
                let g = c64::new(1.0, 0.0) - (f - fp) / dm;
                let th = g.re / g.norm_sqr();
                if th.is_finite() {
                    theta = th.clamp(THETA_MIN, cap);
                }
            }
        }
        let next = project(m + (f - m) * theta);
        let f_next = match master_rhs(next, z, h, sigma) {
            Ok(v) => v,
            Err(Error::Singularity(_)) => {
                cap = (cap * 0.5).max(THETA_MIN);
                prev = None;
                continue;
            }
            Err(e) => return Err(e),
        };
        let r_next = (f_next - next).norm();
        if !r_next.is_finite() {
            cap = (cap * 0.5).max(THETA_MIN);
            prev = None;
            continue;
        }
        if r_next > r {
            cap = (cap * 0.5).max(THETA_MIN);
        } else {
            cap = (cap * 2.0).min(1.0);
        }
        prev = Some((m, f));
        m = next;
        f = f_next;
        r = r_next;
        if r < best.1 {
            best = (m, r);
        }
        if r < opts.tol {
            return Ok(FixedPoint {
                m,
                residual: r,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        best: best.0,
        residual: best.1,
        iterations: opts.max_iter,
    })
}

/// Solves at `z = x + iη` by continuation in `η`: start at
/// `max(η, 0.5)` and halve towards the target, warm-starting each level from
/// the previous solution. The reported iteration count is the total.
pub fn solve_with_continuation(
    z: HalfPlanePoint,
    h: &SpectralMeasure,
    sigma: f64,
    opts: &SolverOptions,
) -> Result<FixedPoint> {
    let target = z.im();
    if target >= CONTINUATION_START {
        return solve_fixed_point(z, h, sigma, opts);
    }
    let x = z.re();
    let mut eta = CONTINUATION_START;
    let mut m0 = -c64::new(x, eta).inv();
    let mut total = 0usize;
    loop {
        let zk = HalfPlanePoint::new(c64::new(x, eta))?;
        let sol = solve_fixed_point_from(zk, h, sigma, opts, m0).map_err(|e| match e {
            Error::NonConvergence {
                best,
                residual,
                iterations,
            } => Error::NonConvergence {
                best,
                residual,
                iterations: total + iterations,
            },
            other => other,
        })?;
        total += sol.iterations;
        if eta <= target {
            return Ok(FixedPoint {
                iterations: total,
                ..sol
            });
        }
        m0 = sol.m;
        eta = (eta * CONTINUATION_FACTOR).max(target);
    }
}

/// Solved values of `m(z)` over a grid of points in the upper half-plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSolution {
    pub grid: Vec<HalfPlanePoint>,
    pub values: Vec<c64>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    /// All `true` for solutions from [`solve_grid`].
    pub converged: Vec<bool>,
}

impl LimitSolution {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// Solves every grid point (with continuation); fails on the first point that
/// does not converge.
pub fn solve_grid(
    grid: &[HalfPlanePoint],
    h: &SpectralMeasure,
    sigma: f64,
    opts: &SolverOptions,
) -> Result<LimitSolution> {
    opts.validate()?;
    let solved: Vec<FixedPoint> = grid
        .par_iter()
        .map(|&z| solve_with_continuation(z, h, sigma, opts))
        .collect::<Result<_>>()?;
    Ok(LimitSolution {
        grid: grid.to_vec(),
        values: solved.iter().map(|s| s.m).collect(),
        residuals: solved.iter().map(|s| s.residual).collect(),
        iterations: solved.iter().map(|s| s.iterations).collect(),
        converged: vec![true; grid.len()],
    })
}

/// Like [`solve_grid`] but keeps going past non-converged points, storing the
/// best iterate and flagging it in `converged`. Other errors still abort.
pub fn solve_grid_partial(
    grid: &[HalfPlanePoint],
    h: &SpectralMeasure,
    sigma: f64,
    opts: &SolverOptions,
) -> Result<LimitSolution> {
    opts.validate()?;
    let solved: Vec<(FixedPoint, bool)> = grid
        .par_iter()
        .map(|&z| match solve_with_continuation(z, h, sigma, opts) {
            Ok(fp) => Ok((fp, true)),
            Err(Error::NonConvergence {
                best,
                residual,
                iterations,
            }) => Ok((
                FixedPoint {
                    m: best,
                    residual,
                    iterations,
                },
                false,
            )),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    Ok(LimitSolution {
        grid: grid.to_vec(),
        values: solved.iter().map(|s| s.0.m).collect(),
        residuals: solved.iter().map(|s| s.0.residual).collect(),
        iterations: solved.iter().map(|s| s.0.iterations).collect(),
        converged: solved.iter().map(|s| s.1).collect(),
    })
}

/// Stieltjes transform of the Marchenko-Pastur law with unit ratio: the root
/// of `z m² + z m + 1 = 0` lying in the upper half-plane.
pub fn mp_closed_form(z: HalfPlanePoint) -> c64 {
    let z = z.z();
    let disc = z * z - z * 4.0;
    let mut sq = disc.sqrt();
    // pick the square-root branch that avoids cancellation in -(b ± √disc)/2
    if (z.conj() * sq).re < 0.0 {
        sq = -sq;
    }
    let q = -(z + sq) * 0.5;
    let r1 = q / z;
    let r2 = q.inv();
    let asymptote = -z.inv();
    match (r1.im > 0.0, r2.im > 0.0) {
        (true, false) => r1,
        (false, true) => r2,
        _ => {
            if (r1 - asymptote).norm() <= (r2 - asymptote).norm() {
                r1
            } else {
                r2
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hp(re: f64, im: f64) -> HalfPlanePoint {
        HalfPlanePoint::new(c64::new(re, im)).unwrap()
    }

    fn close(a: c64, b: c64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn rhs_single_atom_at_zero() {
        let h = SpectralMeasure::dirac(0.0).unwrap();
        let m = c64::new(0.3, 0.7);
        let got = master_rhs(m, hp(0.0, 1.0), &h, 1.0).unwrap();
        let want = c64::new(0.0, 1.0) / (c64::new(1.0, 0.0) + m);
        assert!(close(got, want, 1e-15), "{got} vs {want}");
    }

    #[test]
    fn rhs_with_zero_sigma_is_plain_stieltjes() {
        let h = SpectralMeasure::new(vec![(0.5, 0.2), (1.0, 0.3), (3.0, 0.5)]).unwrap();
        let z = hp(0.7, 0.2);
        let got = master_rhs(c64::new(-2.0, 5.0), z, &h, 0.0).unwrap();
        assert!(close(got, h.stieltjes(z.z()), 1e-14));
    }

    #[test]
    fn rhs_reports_singularity() {
        let h = SpectralMeasure::dirac(1.0).unwrap();
        // σ = 1, m = -1 makes 1 + σ²m vanish
        let err = master_rhs(c64::new(-1.0, 0.0), hp(0.0, 1.0), &h, 1.0).unwrap_err();
        assert!(matches!(err, Error::Singularity(_)));
        // t/s - s z = 0 with s = 1 (m = 0): t = z is impossible for real t, so
        // use sigma = 0 and an atom hit exactly on the real axis limit
        let h0 = SpectralMeasure::dirac(0.0).unwrap();
        let err = master_rhs(c64::new(-1.0, 0.0), hp(0.0, 1.0), &h0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Singularity(_)));
    }

    #[test]
    fn mp_root_at_i() {
        let m = mp_closed_form(hp(0.0, 1.0));
        // m² + m − i = 0 after dividing z m² + z m + 1 = 0 by z = i
        let resid = m * m + m - c64::new(0.0, 1.0);
        assert!(resid.norm() < 1e-12);
        let exact = (c64::new(-1.0, 0.0) + c64::new(1.0, 4.0).sqrt()) * 0.5;
        assert!((m - exact).norm() < 1e-14, "{m}");
        assert!((m.re - 0.300_24).abs() < 1e-5 && (m.im - 0.624_81).abs() < 1e-5);
    }

    #[test]
    fn mp_inside_and_outside_support() {
        let inside = mp_closed_form(hp(2.0, 1e-4));
        assert!(inside.im > 0.4, "{inside}");
        let outside = mp_closed_form(hp(5.0, 1e-4));
        assert!(outside.im < 1e-2 && outside.im > 0.0, "{outside}");
        assert!((outside.re - (-5.0 + 5f64.sqrt()) / 10.0).abs() < 1e-4);
    }

    #[test]
    fn solver_matches_quadratic_root_at_i() {
        let h = SpectralMeasure::dirac(0.0).unwrap();
        let opts = SolverOptions::default();
        let sol = solve_fixed_point(hp(0.0, 1.0), &h, 1.0, &opts).unwrap();
        let resid = sol.m * sol.m + sol.m - c64::new(0.0, 1.0);
        assert!(resid.norm() < 1e-10);
        assert!(close(sol.m, mp_closed_form(hp(0.0, 1.0)), 1e-11));
        assert!(sol.residual < opts.tol);
    }

    #[test]
    fn zero_sigma_is_explicit() {
        let h = SpectralMeasure::dirac(1.0).unwrap();
        let sol = solve_fixed_point(hp(0.0, 1.0), &h, 0.0, &SolverOptions::default()).unwrap();
        assert!(close(sol.m, c64::new(0.5, 0.5), 1e-14));
        assert!(sol.iterations <= 1);
    }

    #[test]
    fn fixed_point_is_reproduced_by_rhs() {
        let h = SpectralMeasure::new(vec![(1.0, 0.5), (4.0, 0.5)]).unwrap();
        let z = hp(2.5, 0.05);
        let opts = SolverOptions::default();
        let sol = solve_with_continuation(z, &h, 1.0, &opts).unwrap();
        let back = master_rhs(sol.m, z, &h, 1.0).unwrap();
        assert!((back - sol.m).norm() < opts.tol);
    }

    #[test]
    fn non_convergence_carries_best_iterate() {
        let h = SpectralMeasure::dirac(0.0).unwrap();
        let opts = SolverOptions {
            tol: 1e-12,
            max_iter: 2,
        };
        match solve_fixed_point(hp(2.0, 1e-3), &h, 1.0, &opts) {
            Err(Error::NonConvergence {
                best,
                residual,
                iterations,
            }) => {
                assert_eq!(iterations, 2);
                assert!(best.im > 0.0);
                assert!(residual.is_finite() && residual >= 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn continuation_agrees_with_closed_form_near_axis() {
        let h = SpectralMeasure::dirac(0.0).unwrap();
        let opts = SolverOptions::default();
        for &x in &[-0.5, 0.01, 0.5, 2.0, 3.9, 4.0, 4.1, 6.0] {
            let z = hp(x, 1e-3);
            let sol = solve_with_continuation(z, &h, 1.0, &opts).unwrap();
            assert!(
                close(sol.m, mp_closed_form(z), 1e-9),
                "x={x}: {} vs {}",
                sol.m,
                mp_closed_form(z)
            );
        }
    }

    #[test]
    fn grid_partial_flags_failures() {
        let h = SpectralMeasure::dirac(0.0).unwrap();
        let grid = vec![hp(2.0, 1.0), hp(2.0, 1e-3)];
        let opts = SolverOptions {
            tol: 1e-12,
            max_iter: 3,
        };
        let sol = solve_grid_partial(&grid, &h, 1.0, &opts).unwrap();
        assert!(!sol.all_converged());
        assert!(solve_grid(&grid, &h, 1.0, &opts).is_err());
    }

    fn measure_strategy() -> impl Strategy<Value = SpectralMeasure> {
        prop::collection::vec((0.0f64..6.0, 0.05f64..1.0), 1..5).prop_map(|raw| {
            let total: f64 = raw.iter().map(|a| a.1).sum();
            let mut atoms: Vec<(f64, f64)> = raw.iter().map(|&(t, w)| (t, w / total)).collect();
            let s: f64 = atoms.iter().map(|a| a.1).sum();
            atoms[0].1 += 1.0 - s;
            SpectralMeasure::new(atoms).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn solutions_respect_a_priori_bounds(
            h in measure_strategy(),
            sigma in 0.3f64..2.5,
            x in -2.0f64..12.0,
            eta in 0.01f64..2.0,
        ) {
            let z = hp(x, eta);
            let opts = SolverOptions::default();
            let sol = solve_with_continuation(z, &h, sigma, &opts).unwrap();
            prop_assert!(sol.residual < opts.tol);
            prop_assert!(sol.m.im > 0.0);
            prop_assert!(sol.m.norm() <= 1.0 / eta * (1.0 + 1e-12));
            let s = c64::new(1.0, 0.0) + sol.m * (sigma * sigma);
            prop_assert!(s.norm() >= eta / z.z().norm() * (1.0 - 1e-12));
        }
    }
}
