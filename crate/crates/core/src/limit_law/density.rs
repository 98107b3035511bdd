use serde::Serialize;

use super::LimitSolution;
use crate::{Error, Result};

/// Density `Im m(x + iη) / π` sampled along a horizontal line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCurve {
    pub eta: f64,
    /// `(x, density)` pairs in grid order.
    pub points: Vec<(f64, f64)>,
}

impl DensityCurve {
    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }
}

/// Stieltjes-Perron inversion at finite `η`. All grid points must share the
/// same imaginary part.
pub fn invert_to_density(solution: &LimitSolution) -> Result<DensityCurve> {
    let Some(first) = solution.grid.first() else {
        return Err(Error::invalid("cannot invert an empty solution"));
    };
    let eta = first.im();
    if let Some(bad) = solution.grid.iter().find(|p| p.im() != eta) {
        return Err(Error::invalid(format!(
            "grid mixes imaginary parts {eta} and {}",
            bad.im()
        )));
    }
    let points = solution
        .grid
        .iter()
        .zip(&solution.values)
        .map(|(p, m)| (p.re(), (m.im / std::f64::consts::PI).max(0.0)))
        .collect();
    Ok(DensityCurve { eta, points })
}

/// Cumulative distribution obtained by trapezoid integration of density
/// samples on a uniform grid.
///
/// Zero left of the grid, linear between nodes, and constant (the final
/// accumulated mass) right of it. Values are clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCdf {
    x0: f64,
    dx: f64,
    cumulative: Vec<f64>,
}

/// Builds the CDF of density samples `density[k]` at `x0 + k·dx`.
pub fn limit_cdf(density: &[f64], x0: f64, dx: f64) -> Result<GridCdf> {
    if density.is_empty() {
        return Err(Error::invalid("density grid is empty"));
    }
    if !dx.is_finite() || dx <= 0.0 || !x0.is_finite() {
        return Err(Error::invalid(format!("bad grid origin {x0} / spacing {dx}")));
    }
    if let Some(v) = density.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::invalid(format!("density value {v} is negative or not finite")));
    }
    let mut cumulative = Vec::with_capacity(density.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in density.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dx;
        cumulative.push(acc.min(1.0));
    }
    Ok(GridCdf { x0, dx, cumulative })
}

impl GridCdf {
    pub fn from_curve(curve: &DensityCurve) -> Result<Self> {
        let xs: Vec<f64> = curve.xs().collect();
        let dx = if xs.len() > 1 { xs[1] - xs[0] } else { 1.0 };
        if xs
            .windows(2)
            .any(|w| ((w[1] - w[0]) - dx).abs() > 1e-9 * dx.abs().max(1.0))
        {
            return Err(Error::invalid("density grid is not uniform"));
        }
        let values: Vec<f64> = curve.values().collect();
        limit_cdf(&values, xs[0], dx)
    }

    pub fn total_mass(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < self.x0 {
            return 0.0;
        }
        let pos = (x - self.x0) / self.dx;
        let last = self.cumulative.len() - 1;
        if pos >= last as f64 {
            return self.total_mass().clamp(0.0, 1.0);
        }
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        let v = self.cumulative[k] + frac * (self.cumulative[k + 1] - self.cumulative[k]);
        v.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;
    use crate::limit_law::{horizontal_grid, solve_grid, SolverOptions, SpectralMeasure};
    use crate::spectra::HalfPlanePoint;
    use std::f64::consts::PI;

    fn mp_curve(x_min: f64, x_max: f64, count: usize, eta: f64) -> DensityCurve {
        let grid = horizontal_grid(x_min, x_max, count, eta).unwrap();
        let h = SpectralMeasure::dirac(0.0).unwrap();
        let sol = solve_grid(&grid, &h, 1.0, &SolverOptions::default()).unwrap();
        invert_to_density(&sol).unwrap()
    }

    #[test]
    fn mp_density_in_bulk_and_outside() {
        let c = mp_curve(2.0, 5.0, 2, 1e-3);
        let mid = c.points[0].1;
        assert!((mid - 1.0 / (2.0 * PI)).abs() < 0.01 / (2.0 * PI), "{mid}");
        assert!(c.points[1].1 < 1e-2);
        assert_eq!(c.eta, 1e-3);
    }

    #[test]
    fn atom_gives_cauchy_spike() {
        let eta = 1e-3;
        let grid = horizontal_grid(1.0, 1.0, 1, eta).unwrap();
        let h = SpectralMeasure::dirac(1.0).unwrap();
        let sol = solve_grid(&grid, &h, 0.0, &SolverOptions::default()).unwrap();
        let d = invert_to_density(&sol).unwrap().points[0].1;
        let want = 1.0 / (PI * eta);
        assert!((d - want).abs() <= 1e-6 * want);
    }

    #[test]
    fn mixed_eta_is_rejected() {
        let grid = vec![
            HalfPlanePoint::new(c64::new(0.0, 0.1)).unwrap(),
            HalfPlanePoint::new(c64::new(1.0, 0.2)).unwrap(),
        ];
        let h = SpectralMeasure::dirac(0.0).unwrap();
        let sol = solve_grid(&grid, &h, 1.0, &SolverOptions::default()).unwrap();
        assert!(invert_to_density(&sol).is_err());
    }

    /// Mass that the Cauchy-smoothed MP law puts on `[a, b]`, by quadrature
    /// in `t = 4 sin²θ` (MP density becomes `(4/π) cos²θ dθ`).
    fn smoothed_mp_mass(a: f64, b: f64, eta: f64) -> f64 {
        let steps = 200_000;
        let h = 0.5 * PI / steps as f64;
        (0..steps)
            .map(|k| {
                let th = (k as f64 + 0.5) * h;
                let t = 4.0 * th.sin().powi(2);
                let kernel = (((b - t) / eta).atan() - ((a - t) / eta).atan()) / PI;
                4.0 / PI * th.cos().powi(2) * kernel * h
            })
            .sum()
    }

    #[test]
    fn mp_cdf_matches_smoothed_mass() {
        let eta = 1e-3;
        let c = mp_curve(0.0, 4.0, 4001, eta);
        let cdf = GridCdf::from_curve(&c).unwrap();
        let at4 = cdf.eval(4.0);
        let oracle = smoothed_mp_mass(0.0, 4.0, eta);
        // the 1/√x singularity at 0 pushes ~√η/π of the mass below 0
        assert!((0.98..0.99).contains(&oracle), "{oracle}");
        assert!((at4 - oracle).abs() < 2e-3, "{at4} vs {oracle}");

        let wide = GridCdf::from_curve(&mp_curve(-0.5, 4.5, 4001, eta)).unwrap();
        let mass = wide.total_mass();
        assert!((mass - smoothed_mp_mass(-0.5, 4.5, eta)).abs() < 2e-3);
        assert!((0.99..=1.01).contains(&mass), "{mass}");

        let mut prev = 0.0;
        for k in 0..=600 {
            let v = wide.eval(-1.0 + k as f64 * 0.01);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn zero_density_and_bad_input() {
        let cdf = limit_cdf(&[0.0; 10], 0.0, 0.1).unwrap();
        assert_eq!(cdf.eval(-1.0), 0.0);
        assert_eq!(cdf.eval(0.5), 0.0);
        assert_eq!(cdf.eval(10.0), 0.0);
        assert!(limit_cdf(&[0.1, -0.2], 0.0, 0.1).is_err());
        assert!(limit_cdf(&[0.1], 0.0, 0.0).is_err());
    }

    #[test]
    fn uniform_density_is_linear() {
        // density 1 on [0, 1]
        let cdf = limit_cdf(&[1.0; 11], 0.0, 0.1).unwrap();
        assert!((cdf.eval(0.35) - 0.35).abs() < 1e-12);
        assert!((cdf.eval(1.0) - 1.0).abs() < 1e-12);
        assert!((cdf.eval(3.0) - 1.0).abs() < 1e-12);
    }
}
