//! Potentials A : [0,1] -> R. Evaluation is branch-aware so that potentials
//! which are only piecewise smooth (locally constant, -log f') are exact on
//! each partition interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{BranchSystem, DynamicsError, Word};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("locally constant potential needs {d} positive weights, got {got:?}")]
    BadWeights { d: usize, got: Vec<f64> },
    #[error("potential coefficients must be finite")]
    NotFinite,
    #[error("polynomial potential needs at least one coefficient")]
    EmptyPolynomial,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Constant {
        value: f64,
    },
    /// A = log g_i on I_i.
    LocallyConstant {
        g: Vec<f64>,
    },
    /// Polynomial in x, ascending coefficients.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// A = -log f' = log psi_i' o f on I_i.
    NegLogDerivative,
    /// A(x) = -prod_j (x - p_j)^2 - eps (x - center)^2 over the periodic orbit
    /// with itinerary `period`^inf. `center` defaults to the orbit mean.
    OrbitProduct {
        period: Vec<u8>,
        #[serde(default)]
        eps: f64,
        #[serde(default)]
        center: Option<f64>,
    },
}

impl PotentialSpec {
    /// -(x - 1/2)^2.
    pub fn quadratic() -> Self {
        PotentialSpec::Polynomial { coeffs: vec![-0.25, 1.0, -1.0] }
    }
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self::quadratic()
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Constant(f64),
    Local(Vec<f64>),
    Poly(Vec<f64>),
    NegLogDerivative,
    OrbitProduct { points: Vec<f64>, eps: f64, center: f64 },
}

#[derive(Clone, Debug)]
pub struct Potential {
    spec: PotentialSpec,
    sys: BranchSystem,
    kind: Kind,
    lipschitz: f64,
    sup_abs: f64,
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

impl Potential {
    pub fn new(spec: &PotentialSpec, sys: &BranchSystem) -> Result<Self, PotentialError> {
        let kind = match spec {
            PotentialSpec::Constant { value } => {
                if !value.is_finite() {
                    return Err(PotentialError::NotFinite);
                }
                Kind::Constant(*value)
            }
            PotentialSpec::LocallyConstant { g } => {
                if g.len() != sys.d() || g.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(PotentialError::BadWeights { d: sys.d(), got: g.clone() });
                }
                Kind::Local(g.iter().map(|v| v.ln()).collect())
            }
            PotentialSpec::Polynomial { coeffs } => {
                if coeffs.is_empty() {
                    return Err(PotentialError::EmptyPolynomial);
                }
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(PotentialError::NotFinite);
                }
                Kind::Poly(coeffs.clone())
            }
            PotentialSpec::NegLogDerivative => Kind::NegLogDerivative,
            PotentialSpec::OrbitProduct { period, eps, center } => {
                let w = Word::new(period.clone());
                let x0 = sys.periodic_point(&w)?;
                let mut points = vec![x0];
                for _ in 1..w.len() {
                    let y = sys.forward(*points.last().unwrap());
                    points.push(y);
                }
                let mean = points.iter().sum::<f64>() / points.len() as f64;
                let center = center.unwrap_or(mean);
                if !eps.is_finite() || !center.is_finite() {
                    return Err(PotentialError::NotFinite);
                }
                Kind::OrbitProduct { points, eps: *eps, center }
            }
        };
        let mut pot = Potential {
            spec: spec.clone(),
            sys: sys.clone(),
            kind,
            lipschitz: 0.0,
            sup_abs: 0.0,
        };
        pot.measure_constants();
        Ok(pot)
    }

    fn measure_constants(&mut self) {
        const M: usize = 4096;
        let mut lip = 0.0f64;
        let mut sup = 0.0f64;
        for i in 0..self.sys.d() {
            let (a, b) = self.sys.partition(i);
            let mut prev = self.on_branch(i, a);
            sup = sup.max(prev.abs());
            for k in 1..=M {
                let y = a + (b - a) * k as f64 / M as f64;
                let v = self.on_branch(i, y);
                sup = sup.max(v.abs());
                lip = lip.max((v - prev).abs() * M as f64 / (b - a));
                prev = v;
            }
        }
        // sampled slopes underestimate the sup of |A'| slightly
        self.lipschitz = if lip == 0.0 { 0.0 } else { lip * 1.05 };
        self.sup_abs = sup;
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn system(&self) -> &BranchSystem {
        &self.sys
    }

    /// Lipschitz constant of A on each partition interval.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn sup_abs(&self) -> f64 {
        self.sup_abs
    }

    /// Points of the orbit used by [`PotentialSpec::OrbitProduct`].
    pub fn orbit_points(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::OrbitProduct { points, .. } => Some(points),
            _ => None,
        }
    }

    fn smooth(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Constant(c) => *c,
            Kind::Poly(c) => horner(c, y),
            Kind::OrbitProduct { points, eps, center } => {
                let prod: f64 = points.iter().map(|p| (y - p) * (y - p)).product();
                -prod - eps * (y - center) * (y - center)
            }
            _ => unreachable!(),
        }
    }

    /// A on the closed interval I_i.
    pub fn on_branch(&self, i: usize, y: f64) -> f64 {
        match &self.kind {
            Kind::Local(lg) => lg[i],
            Kind::NegLogDerivative => {
                let x = self.sys.forward_on_branch(i, y);
                self.sys.dpsi(i, x).ln()
            }
            _ => self.smooth(y),
        }
    }

    /// A(psi_i(x)).
    pub fn pullback(&self, i: usize, x: f64) -> f64 {
        match &self.kind {
            Kind::Local(lg) => lg[i],
            Kind::NegLogDerivative => self.sys.dpsi(i, x).ln(),
            _ => self.smooth(self.sys.psi(i, x)),
        }
    }

    /// A(y), taking the left branch at interior breakpoints.
    pub fn value(&self, y: f64) -> f64 {
        let (i, _) = self.sys.branch_of(y);
        self.on_branch(i, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_and_kinds() {
        let sys = BranchSystem::doubling();
        let q = Potential::new(&PotentialSpec::quadratic(), &sys).unwrap();
        assert!((q.value(0.5)).abs() < 1e-15);
        assert!((q.value(0.0) + 0.25).abs() < 1e-15);
        assert!(q.lipschitz() >= 1.0 && q.lipschitz() < 1.1);
        let n = Potential::new(&PotentialSpec::NegLogDerivative, &sys).unwrap();
        assert!((n.value(0.3) + 2f64.ln()).abs() < 1e-15);
        assert_eq!(n.lipschitz(), 0.0);
        assert!(Potential::new(&PotentialSpec::LocallyConstant { g: vec![0.4] }, &sys).is_err());
        let p = Potential::new(
            &PotentialSpec::OrbitProduct { period: vec![0, 0, 0, 1], eps: 0.0, center: None },
            &sys,
        )
        .unwrap();
        for x in p.orbit_points().unwrap() {
            assert!(p.value(*x).abs() < 1e-15);
        }
    }
}
