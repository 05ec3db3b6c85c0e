//! Functions on [0,1] sampled at the uniform nodes j/(N-1) and extended by
//! linear interpolation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("a grid needs at least two nodes, got {0}")]
    TooSmall(usize),
    #[error("grid sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() < 2 {
            return Err(GridError::TooSmall(values.len()));
        }
        Ok(GridFunction { values })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        if n < 2 {
            return Err(GridError::TooSmall(n));
        }
        Ok(GridFunction { values: (0..n).map(|j| f(node(j, n))).collect() })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self, GridError> {
        Self::new(vec![c; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node(&self, j: usize) -> f64 {
        node(j, self.values.len())
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.node(j)).collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (j, t) = locate(x, self.values.len());
        let v = &self.values;
        if t == 0.0 {
            v[j]
        } else {
            v[j] + t * (v[j + 1] - v[j])
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_dist(&self, other: &GridFunction) -> Result<f64, GridError> {
        if self.len() != other.len() {
            return Err(GridError::SizeMismatch(self.len(), other.len()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn shifted(&self, c: f64) -> GridFunction {
        self.map(|v| v + c)
    }

    /// Shift so that the maximum is 0.
    pub fn max_normalized(&self) -> GridFunction {
        self.shifted(-self.max())
    }
}

pub fn node(j: usize, n: usize) -> f64 {
    j as f64 / (n - 1) as f64
}

/// Cell index j and offset t in [0,1) with x = (j + t)/(N-1); x is clamped.
pub fn locate(x: f64, n: usize) -> (usize, f64) {
    let s = x.clamp(0.0, 1.0) * (n - 1) as f64;
    let j = (s.floor() as usize).min(n - 2);
    let t = s - j as f64;
    if t >= 1.0 {
        (n - 1, 0.0)
    } else {
        (j, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_exact_for_lines() {
        let g = GridFunction::from_fn(17, |x| 3.0 * x - 1.0).unwrap();
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            assert!((g.eval(x) - (3.0 * x - 1.0)).abs() < 1e-14);
        }
        assert_eq!(g.eval(1.0), 2.0);
        assert!(GridFunction::new(vec![1.0]).is_err());
    }
}
