use faer::c64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Finitely atomic probability measure on `[0, ∞)`.
///
/// Atoms are kept sorted by location; duplicate locations are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct SpectralMeasure {
    atoms: Vec<(f64, f64)>,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl SpectralMeasure {
    /// Builds a measure from `(location, weight)` pairs.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("measure needs at least one atom"));
        }
        for &(t, w) in &atoms {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::invalid(format!(
                    "atom location {t} must be finite and nonnegative"
                )));
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::invalid(format!("atom weight {w} must be positive")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("atom weights sum to {total}, expected 1")));
        }
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (t, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == t => last.1 += w,
                _ => merged.push((t, w)),
            }
        }
        Ok(SpectralMeasure { atoms: merged })
    }

    pub fn dirac(t: f64) -> Result<Self> {
        Self::new(vec![(t, 1.0)])
    }

    /// Equal weights on the given locations.
    pub fn uniform(locations: &[f64]) -> Result<Self> {
        let w = 1.0 / locations.len().max(1) as f64;
        Self::new(locations.iter().map(|&t| (t, w)).collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn max_location(&self) -> f64 {
        self.atoms.last().map(|a| a.0).unwrap_or(0.0)
    }

    pub fn max_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(t, w)| t * w).sum()
    }

    /// `H((-∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|a| a.0 <= x)
            .map(|a| a.1)
            .sum::<f64>()
            .min(1.0)
    }

    /// `H((x, ∞))`.
    pub fn tail(&self, x: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0 > x).map(|a| a.1).sum()
    }

    /// Smallest atom location `t` with `H((-∞, t]) ≥ p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let mut acc = 0.0;
        for &(t, w) in &self.atoms {
            acc += w;
            if acc >= p {
                return t;
            }
        }
        self.max_location()
    }

    /// Plain Stieltjes transform `∫ dH(t) / (t − z)`.
    pub fn stieltjes(&self, z: c64) -> c64 {
        self.atoms
            .iter()
            .map(|&(t, w)| c64::new(w, 0.0) / (c64::new(t, 0.0) - z))
            .sum()
    }
}

impl TryFrom<Vec<(f64, f64)>> for SpectralMeasure {
    type Error = Error;
    fn try_from(atoms: Vec<(f64, f64)>) -> Result<Self> {
        SpectralMeasure::new(atoms)
    }
}

impl From<SpectralMeasure> for Vec<(f64, f64)> {
    fn from(m: SpectralMeasure) -> Self {
        m.atoms
    }
}
