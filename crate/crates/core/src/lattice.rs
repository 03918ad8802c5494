//! Geometry of the pentanomial tree.
//!
//! A node at level `n` carries an integer index `zeta` in `[0, 2n(n-1)]`; the
//! normalized spread is `Z = zeta / n - (n - 1)`. Branch `j` (innovation
//! `j - 2`) sends `zeta` to `zeta + n j` at level `n + 1`, which is exactly the
//! spread update `Z' = n / (n + 1) (Z + eps)`.

use std::ops::RangeInclusive;

use num_rational::Ratio;

use crate::error::{AsrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeIndex {
    pub level: usize,
    pub zeta: i64,
}

/// Largest node index at level `n`.
#[inline]
pub fn max_zeta(n: usize) -> i64 {
    let n = n as i64;
    2 * n * (n - 1)
}

pub fn zeta_range(n: usize, horizon: usize) -> Result<RangeInclusive<i64>> {
    if n < 1 || n > horizon {
        return Err(AsrError::LevelOutOfRange { level: n, horizon });
    }
    Ok(0..=max_zeta(n))
}

pub fn child(n: usize, zeta: i64, branch: usize, horizon: usize) -> Result<NodeIndex> {
    if branch > 4 {
        return Err(AsrError::BranchOutOfRange(branch));
    }
    if n >= horizon {
        return Err(AsrError::LevelOutOfRange { level: n + 1, horizon });
    }
    let range = zeta_range(n, horizon)?;
    if !range.contains(&zeta) {
        return Err(AsrError::invalid("zeta", format!("{zeta} not a node of level {n}")));
    }
    Ok(NodeIndex {
        level: n + 1,
        zeta: zeta + n as i64 * branch as i64,
    })
}

/// Normalized spread of node `(n, zeta)`.
#[inline]
pub fn z_of(n: usize, zeta: i64) -> f64 {
    zeta as f64 / n as f64 - (n as f64 - 1.0)
}

/// Exact normalized spread of node `(n, zeta)`.
pub fn z_ratio(n: usize, zeta: i64) -> Ratio<i64> {
    Ratio::new(zeta, n as i64) - Ratio::from_integer(n as i64 - 1)
}

/// Real-valued node coordinate of spread `z` at level `n` (inverse of [`z_of`]).
#[inline]
pub fn zeta_of(n: usize, z: f64) -> f64 {
    n as f64 * (z + n as f64 - 1.0)
}

/// Number of nodes in a tree of `horizon` levels: `N + 2 (N^3 - N) / 3`.
pub fn total_nodes(horizon: usize) -> u64 {
    let n = horizon as u64;
    n + 2 * (n * n * n - n) / 3
}

/// Uniform inventory grid `q_i = i Q / M`, `i = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QGrid {
    pub nominal: f64,
    pub steps: usize,
}

impl QGrid {
    pub fn new(nominal: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(AsrError::invalid("solver.inventory_steps", "must be >= 2"));
        }
        if !(nominal > 0.0 && nominal.is_finite()) {
            return Err(AsrError::invalid("contract.nominal", "must be finite and > 0"));
        }
        if steps > u16::MAX as usize - 1 {
            return Err(AsrError::invalid("solver.inventory_steps", "grid too large"));
        }
        Ok(QGrid { nominal, steps })
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.nominal / self.steps as f64
    }

    /// Shares spanned by `d` grid steps. Every inventory and trade size in the
    /// solver goes through this one formula.
    #[inline]
    pub fn span(&self, d: i64) -> f64 {
        self.nominal * d as f64 / self.steps as f64
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.span(i as i64)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.value(i)).collect()
    }

    /// Index of `q` if it sits on the grid (to within a relative `1e-12`).
    pub fn index_of(&self, q: f64) -> Option<usize> {
        let x = q / self.step();
        let i = x.round();
        if i < 0.0 || i > self.steps as f64 {
            return None;
        }
        ((x - i).abs() <= 1e-9).then_some(i as usize)
    }

    /// Bracketing indices and weight of `q`, clamped to `[0, Q]`.
    pub fn locate(&self, q: f64) -> (usize, usize, f64) {
        let x = (q / self.step()).clamp(0.0, self.steps as f64);
        let lo = (x.floor() as usize).min(self.steps);
        if lo == self.steps {
            return (lo, lo, 0.0);
        }
        (lo, lo + 1, x - lo as f64)
    }
}
