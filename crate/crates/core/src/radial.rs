//! One-dimensional radial discretization of the n-ball, used wherever a
//! dimension-independent check is done through radial symmetry.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    n: usize,
    radius: f64,
    nodes: Vec<f64>,
}

impl RadialGrid {
    pub fn new(n: usize, nodes: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension { n, min: 2 });
        }
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::param("nodes", nodes.first().copied().unwrap_or(f64::NAN), "grid must start at 0 and have two nodes"));
        }
        if let Some(w) = nodes.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::param("nodes", w[1], "grid must be strictly increasing"));
        }
        let radius = *nodes.last().unwrap();
        Ok(Self { n, radius, nodes })
    }

    pub fn uniform(n: usize, radius: f64, segments: usize) -> Result<Self> {
        if !(radius > 0.0) || segments == 0 {
            return Err(Error::param("radius", radius, "need positive radius and segments"));
        }
        Self::new(n, (0..=segments).map(|k| radius * k as f64 / segments as f64).collect())
    }

    /// Geometric grid `radius·10^{-j/per_decade}` down to `inner`, plus 0 and
    /// every break point in `breaks` (so kinks of a profile sit on nodes).
    pub fn geometric(n: usize, radius: f64, inner: f64, per_decade: usize, breaks: &[f64]) -> Result<Self> {
        if !(inner > 0.0 && inner < radius) || per_decade == 0 {
            return Err(Error::param("inner", inner, "need 0 < inner < radius"));
        }
        let mut nodes = vec![0.0];
        let mut j = 0usize;
        loop {
            let rho = radius * 10f64.powf(-(j as f64) / per_decade as f64);
            nodes.push(rho);
            if rho <= inner {
                break;
            }
            j += 1;
        }
        nodes.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < radius));
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
        Self::new(n, nodes)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Values and radial derivatives of a function on a [`RadialGrid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_invariants() {
        let g = RadialGrid::uniform(3, 2.0, 8).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(*g.nodes().last().unwrap(), 2.0);
        assert!(RadialGrid::new(2, vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(RadialGrid::new(2, vec![0.1, 1.0]).is_err());
        assert!(RadialGrid::new(1, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn geometric_grid_contains_breaks_and_decades() {
        let g = RadialGrid::geometric(2, 1.0, 1e-4, 10, &[0.37, 1e-2]).unwrap();
        for target in [0.37, 1e-1, 1e-2, 1e-3, 1e-4] {
            assert!(g.nodes().iter().any(|&x| (x - target).abs() < 1e-14), "{target}");
        }
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }
}
