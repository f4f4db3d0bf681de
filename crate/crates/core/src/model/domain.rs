use serde::{Deserialize, Serialize};

use super::params::Violation;
use crate::error::{Error, Result};

/// Computational domain.
///
/// The periodic box stands in for the whole space; the radial shell
/// `R0 <= r <= R` carries spherically symmetric flows with a no-slip wall at
/// both radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    PeriodicBox { length: f64, n: usize },
    RadialShell {
        #[serde(default = "unit")]
        inner: f64,
        outer: f64,
        n: usize,
    },
}

fn unit() -> f64 {
    1.0
}

impl DomainSpec {
    pub fn periodic(length: f64, n: usize) -> Self {
        DomainSpec::PeriodicBox { length, n }
    }

    pub fn radial(outer: f64, n: usize) -> Self {
        DomainSpec::RadialShell { inner: 1.0, outer, n }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, DomainSpec::PeriodicBox { .. })
    }

    /// Grid spacing.
    pub fn spacing(&self) -> f64 {
        match *self {
            DomainSpec::PeriodicBox { length, n } => length / n as f64,
            DomainSpec::RadialShell { inner, outer, n } => (outer - inner) / (n as f64 - 1.0),
        }
    }

    /// Number of samples of the scalar (density) field.
    pub fn scalar_len(&self) -> usize {
        match *self {
            DomainSpec::PeriodicBox { n, .. } => n * n * n,
            DomainSpec::RadialShell { n, .. } => n - 1,
        }
    }

    /// Number of samples of each velocity component.
    pub fn vector_len(&self) -> usize {
        match *self {
            DomainSpec::PeriodicBox { n, .. } => n * n * n,
            DomainSpec::RadialShell { n, .. } => n,
        }
    }

    /// Number of stored velocity components (3 on the box, the radial one otherwise).
    pub fn vel_components(&self) -> usize {
        if self.is_periodic() {
            3
        } else {
            1
        }
    }

    /// Total volume of the domain.
    pub fn volume(&self) -> f64 {
        match *self {
            DomainSpec::PeriodicBox { length, .. } => length.powi(3),
            DomainSpec::RadialShell { inner, outer, .. } => {
                4.0 / 3.0 * std::f64::consts::PI * (outer.powi(3) - inner.powi(3))
            }
        }
    }

    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        match *self {
            DomainSpec::PeriodicBox { length, n } => {
                if n < 8 {
                    out.push(Violation::new(format!("{prefix}n"), "need n >= 8 points per axis"));
                }
                if n % 2 != 0 {
                    out.push(Violation::new(format!("{prefix}n"), "n must be even"));
                }
                if !(length > 0.0 && length.is_finite()) {
                    out.push(Violation::new(format!("{prefix}length"), "box length must be positive"));
                }
            }
            DomainSpec::RadialShell { inner, outer, n } => {
                if n < 8 {
                    out.push(Violation::new(format!("{prefix}n"), "need n >= 8 radial points"));
                }
                if !(inner > 0.0 && inner.is_finite()) {
                    out.push(Violation::new(format!("{prefix}inner"), "inner radius must be positive"));
                }
                if !(outer > 4.0 * inner && outer.is_finite()) {
                    out.push(Violation::new(format!("{prefix}outer"), "outer radius must satisfy R > 4 R0"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations("").into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidParameter { key: v.key, rule: v.rule }),
        }
    }

    /// Radial node positions `r_i = R0 + i h` (velocity points).
    pub fn radial_nodes(&self) -> Vec<f64> {
        match *self {
            DomainSpec::RadialShell { inner, n, .. } => {
                let h = self.spacing();
                (0..n).map(|i| inner + i as f64 * h).collect()
            }
            DomainSpec::PeriodicBox { .. } => Vec::new(),
        }
    }

    /// Radial cell centres (density points).
    pub fn radial_centers(&self) -> Vec<f64> {
        match *self {
            DomainSpec::RadialShell { inner, n, .. } => {
                let h = self.spacing();
                (0..n - 1).map(|i| inner + (i as f64 + 0.5) * h).collect()
            }
            DomainSpec::PeriodicBox { .. } => Vec::new(),
        }
    }

    /// Coordinates of box grid point `idx` (row-major, x slowest).
    pub fn box_point(&self, idx: usize) -> [f64; 3] {
        match *self {
            DomainSpec::PeriodicBox { n, .. } => {
                let h = self.spacing();
                let i = idx / (n * n);
                let j = (idx / n) % n;
                let k = idx % n;
                [i as f64 * h, j as f64 * h, k as f64 * h]
            }
            DomainSpec::RadialShell { .. } => [f64::NAN; 3],
        }
    }
}
