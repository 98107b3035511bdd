//! The limiting law of `Y Y*`.
//!
//! For a limiting measure `H` of the ESD of `R R* / c_n` and noise strength
//! `σ`, the Stieltjes transform `m(z)` of the limit is the unique solution in
//! the upper half-plane of
//!
//! ```text
//! m = ∫ dH(t) / ( t / (1 + σ² m) − (1 + σ² m) z ).
//! ```
//!
//! With `H = δ_0` and `σ = 1` this reduces to `z m (1 + m) + 1 = 0`, the
//! Marchenko-Pastur equation with unit aspect ratio.

mod density;
mod measure;
mod solver;

pub use density::{invert_to_density, limit_cdf, DensityCurve, GridCdf};
pub use measure::SpectralMeasure;
pub use solver::{
    master_rhs, mp_closed_form, solve_fixed_point, solve_fixed_point_from, solve_grid, solve_grid_partial,
    solve_with_continuation, FixedPoint, LimitSolution, SolverOptions,
};

use crate::spectra::HalfPlanePoint;

/// Points `x + iη` for `x_count` evenly spaced `x` in `[x_min, x_max]`.
pub fn horizontal_grid(x_min: f64, x_max: f64, x_count: usize, eta: f64) -> crate::Result<Vec<HalfPlanePoint>> {
    if x_count == 0 || x_max.is_nan() || x_min.is_nan() || x_max < x_min {
        return Err(crate::Error::invalid("grid needs x_count >= 1 and x_max >= x_min"));
    }
    let step = if x_count > 1 {
        (x_max - x_min) / (x_count - 1) as f64
    } else {
        0.0
    };
    (0..x_count)
        .map(|k| HalfPlanePoint::new(faer::c64::new(x_min + step * k as f64, eta)))
        .collect()
}
