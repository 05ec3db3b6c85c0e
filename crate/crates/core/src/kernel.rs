//! The involution kernel W(w, x) by two routes (cylinder products h and the
//! Δ-series), the dual potential A*, the scaling function and the
//! β-family H_{β,k}.

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{BranchSystem, TailPeriodicWord, Word};
use crate::grid::node;
use crate::potential::Potential;
use crate::transfer::EigenData;

pub const DEFAULT_X_REF: f64 = 0.5;
pub const DEFAULT_DEPTH: usize = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("cylinder depth {required} needed but only {available} is available")]
    DepthExceeded { required: usize, available: usize },
    #[error("kernel estimators disagree: residual {residual:e} above bound {bound:e}")]
    Inconsistent { residual: f64, bound: f64 },
    #[error("dual potential spread {spread:e} above ten times the bound {bound:e}")]
    SpreadTooLarge { spread: f64, bound: f64 },
    #[error("at least one probe point is required")]
    EmptyProbes,
    #[error("the eigen gauge needs eigendata")]
    NeedsEigen,
    #[error("beta must be at least 1 for H_beta, got {0}")]
    BetaTooSmall(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gauge {
    /// W(w, x_ref) = 0.
    Delta { x_ref: f64 },
    /// W = log h from the transfer-operator eigendata.
    Eigen,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelValue {
    pub value: f64,
    pub depth: usize,
    /// Truncation bound, geometric in the depth.
    pub error_bound: f64,
    /// Accumulated floating-point error estimate.
    pub rounding: f64,
    pub gauge: Gauge,
}

impl KernelValue {
    pub fn total_bound(&self) -> f64 {
        self.error_bound + self.rounding
    }
}

fn truncation_bound(sys: &BranchSystem, lip: f64, dist: f64, depth: usize) -> f64 {
    let l = sys.lambda();
    (lip * dist).max(f64::EPSILON) * l.powi(depth as i32) / (1.0 - l)
}

fn rounding_bound(pot: &Potential, depth: usize) -> f64 {
    4.0 * f64::EPSILON * pot.sup_abs().max(1.0) * (depth as f64 + 1.0)
}

/// Δ(x, x', w) = sum_{n=1}^{depth} A(psi_{w,n} x) - A(psi_{w,n} x').
pub fn delta_series(
    sys: &BranchSystem,
    pot: &Potential,
    x: f64,
    x_prime: f64,
    w: &TailPeriodicWord,
    depth: usize,
) -> KernelValue {
    let mut s = 0.0;
    let (mut y, mut yp) = (x, x_prime);
    for n in 0..depth {
        let i = w.symbol(n) as usize;
        s += pot.pullback(i, y) - pot.pullback(i, yp);
        y = sys.psi(i, y);
        yp = sys.psi(i, yp);
    }
    KernelValue {
        value: s,
        depth,
        error_bound: truncation_bound(sys, pot.lipschitz(), (x - x_prime).abs(), depth),
        rounding: rounding_bound(pot, depth),
        gauge: Gauge::Delta { x_ref: x_prime },
    }
}

/// Kernel in the Δ gauge, W(w, x) = Δ(x, x_ref, w), and the dual potential
/// it induces.
#[derive(Clone, Debug)]
pub struct DeltaKernel {
    pub sys: BranchSystem,
    pub pot: Potential,
    pub x_ref: f64,
    pub depth: usize,
}

impl DeltaKernel {
    pub fn new(sys: &BranchSystem, pot: &Potential, x_ref: f64, depth: usize) -> Self {
        DeltaKernel { sys: sys.clone(), pot: pot.clone(), x_ref, depth }
    }

    pub fn w(&self, w: &TailPeriodicWord, x: f64) -> f64 {
        delta_series(&self.sys, &self.pot, x, self.x_ref, w, self.depth).value
    }

    /// sum_{n=1}^{depth} A(psi_{w,n} x); W(w, x) = series(w, x) - series(w, x_ref).
    pub fn series(&self, w: &TailPeriodicWord, x: f64) -> f64 {
        let mut s = 0.0;
        let mut y = x;
        for n in 0..self.depth {
            let i = w.symbol(n) as usize;
            s += self.pot.pullback(i, y);
            y = self.sys.psi(i, y);
        }
        s
    }

    pub fn w_value(&self, w: &TailPeriodicWord, x: f64) -> KernelValue {
        delta_series(&self.sys, &self.pot, x, self.x_ref, w, self.depth)
    }

    /// A*(w) = A(psi_{w_0} x_ref) + W(sigma w, psi_{w_0} x_ref).
    pub fn a_star(&self, w: &TailPeriodicWord) -> f64 {
        let i = w.symbol(0) as usize;
        let y = self.sys.psi(i, self.x_ref);
        self.pot.pullback(i, self.x_ref) + self.w(&w.shift(), y)
    }

    /// Bound on |A*_depth - A*| from the truncation of both series.
    pub fn a_star_bound(&self) -> f64 {
        2.0 * truncation_bound(&self.sys, self.pot.lipschitz(), 1.0, self.depth)
            + 2.0 * rounding_bound(&self.pot, self.depth)
    }
}

/// Prefix indices and log weights log mu(I_{omega_j}), j = 1..=k.
fn log_prefix_weights(eig: &EigenData, d: usize, omega: &Word) -> Vec<f64> {
    let mut idx = 0usize;
    let mut scale = 1usize;
    omega
        .symbols()
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            idx += s as usize * scale;
            scale *= d;
            eig.mu.level(j + 1)[idx].ln()
        })
        .collect()
}

/// log h_beta(omega_k, x) by the cylinder recursion, beta taken from `eig`.
pub fn log_h(
    sys: &BranchSystem,
    pot: &Potential,
    eig: &EigenData,
    omega: &Word,
    x: f64,
) -> Result<f64, KernelError> {
    if omega.len() > eig.depth() {
        return Err(KernelError::DepthExceeded { required: omega.len(), available: eig.depth() });
    }
    let lmu = log_prefix_weights(eig, sys.d(), omega);
    let mut lh = 0.0;
    let mut prev = 0.0;
    let mut y = x;
    for (j, &s) in omega.symbols().iter().enumerate() {
        let i = s as usize;
        lh += eig.beta * pot.pullback(i, y) + prev - eig.log_alpha - lmu[j];
        y = sys.psi(i, y);
        prev = lmu[j];
    }
    Ok(lh)
}

pub fn h_truncated(
    sys: &BranchSystem,
    pot: &Potential,
    eig: &EigenData,
    omega: &Word,
    x: f64,
) -> Result<f64, KernelError> {
    log_h(sys, pot, eig, omega, x).map(f64::exp)
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelPair {
    /// beta Δ(x, x_ref, w) at the requested depth.
    pub delta: KernelValue,
    /// log h(w_k, x) - log h(w_k, x_ref), k = min(depth, K).
    pub h_gauged: KernelValue,
    /// log h(w_k, x) without gauge.
    pub h_raw: f64,
    pub cross_residual: f64,
    pub combined_bound: f64,
}

pub fn involution_kernel(
    sys: &BranchSystem,
    pot: &Potential,
    eig: &EigenData,
    w: &TailPeriodicWord,
    x: f64,
    depth: usize,
    x_ref: f64,
) -> Result<KernelPair, KernelError> {
    let beta = eig.beta;
    let mut delta = delta_series(sys, pot, x, x_ref, w, depth);
    delta.value *= beta;
    delta.error_bound *= beta.max(f64::MIN_POSITIVE);
    delta.rounding *= beta.max(1.0);
    let k = depth.min(eig.depth());
    let omega = w.prefix(k);
    let h_raw = log_h(sys, pot, eig, &omega, x)?;
    let h_ref = log_h(sys, pot, eig, &omega, x_ref)?;
    let dist = (x - x_ref).abs();
    let h_gauged = KernelValue {
        value: h_raw - h_ref,
        depth: k,
        error_bound: beta.max(f64::MIN_POSITIVE) * truncation_bound(sys, pot.lipschitz(), dist, k),
        // the log-weight terms cancel only up to rounding of their size
        rounding: 8.0 * f64::EPSILON * (h_raw.abs() + h_ref.abs() + k as f64 * eig.log_alpha.abs() + 1.0),
        gauge: Gauge::Eigen,
    };
    let cross_residual = (h_gauged.value - delta.value).abs();
    let combined_bound = delta.total_bound() + h_gauged.total_bound();
    if cross_residual > combined_bound {
        return Err(KernelError::Inconsistent { residual: cross_residual, bound: combined_bound });
    }
    Ok(KernelPair { delta, h_gauged, h_raw, cross_residual, combined_bound })
}

#[derive(Clone, Debug, Serialize)]
pub struct DualPotentialValue {
    pub value: f64,
    pub x_independence_residual: f64,
    pub g_star: f64,
    /// max over probes of |g*/g(psi_{w_0} x) - e^{W(sigma w, psi_{w_0} x) - W(w, x)}|.
    pub ratio_residual: f64,
    pub error_bound: f64,
    pub gauge: Gauge,
}

pub fn default_probes() -> Vec<f64> {
    (0..17).map(|j| node(j, 17)).collect()
}

/// A*(w) as the probe mean of A(psi_{w_0} x) + W(sigma w, psi_{w_0} x) - W(w, x).
/// In the eigen gauge W = log h with depth k for w and k - 1 for sigma w.
pub fn dual_potential(
    sys: &BranchSystem,
    pot: &Potential,
    eig: Option<&EigenData>,
    w: &TailPeriodicWord,
    depth: usize,
    probes: &[f64],
    gauge: Gauge,
) -> Result<DualPotentialValue, KernelError> {
    if probes.is_empty() {
        return Err(KernelError::EmptyProbes);
    }
    let i0 = w.symbol(0) as usize;
    let sw = w.shift();
    let mut vals = Vec::with_capacity(probes.len());
    let mut ratios = Vec::with_capacity(probes.len());
    let error_bound = match gauge {
        Gauge::Delta { x_ref } => {
            for &x in probes {
                let y = sys.psi(i0, x);
                let a = pot.pullback(i0, x);
                let ratio = delta_series(sys, pot, y, x_ref, &sw, depth).value
                    - delta_series(sys, pot, x, x_ref, w, depth).value;
                vals.push(a + ratio);
                ratios.push((a, ratio));
            }
            let b = 2.0 * truncation_bound(sys, pot.lipschitz(), 1.0, depth) + 2.0 * rounding_bound(pot, depth);
            b.max(1e-13)
        }
        Gauge::Eigen => {
            let eig = eig.ok_or(KernelError::NeedsEigen)?;
            let k = depth.min(eig.depth()).max(1);
            let omega = w.prefix(k);
            let somega = sw.prefix(k - 1);
            for &x in probes {
                let y = sys.psi(i0, x);
                let a = eig.beta * pot.pullback(i0, x);
                let ratio = log_h(sys, pot, eig, &somega, y)? - log_h(sys, pot, eig, &omega, x)?;
                vals.push(a + ratio);
                ratios.push((a, ratio));
            }
            let b = 2.0 * eig.beta.max(1.0) * truncation_bound(sys, pot.lipschitz(), 1.0, k)
                + 16.0 * f64::EPSILON * (k as f64) * (eig.log_alpha.abs() + 50.0);
            b.max(1e-13)
        }
    };
    let value = vals.iter().sum::<f64>() / vals.len() as f64;
    let spread = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - vals.iter().copied().fold(f64::INFINITY, f64::min);
    if spread > 10.0 * error_bound {
        return Err(KernelError::SpreadTooLarge { spread, bound: error_bound });
    }
    let g_star = value.exp();
    let ratio_residual = ratios
        .iter()
        .map(|&(a, r)| (g_star / a.exp() - r.exp()).abs())
        .fold(0.0, f64::max);
    Ok(DualPotentialValue {
        value,
        x_independence_residual: spread,
        g_star,
        ratio_residual,
        error_bound,
        gauge,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingValue {
    pub value: f64,
    pub depth: usize,
    /// mu(I_{omega_k}) / mu(I_{sigma* omega_k}) for k = 1..=depth.
    pub ratios: Vec<f64>,
}

pub fn scaling_function(
    sys: &BranchSystem,
    eig: &EigenData,
    w: &TailPeriodicWord,
    depth: usize,
) -> Result<ScalingValue, KernelError> {
    if depth > eig.depth() || depth == 0 {
        return Err(KernelError::DepthExceeded { required: depth, available: eig.depth() });
    }
    let omega = w.prefix(depth);
    let tail = w.shift().prefix(depth.saturating_sub(1));
    let num = log_prefix_weights(eig, sys.d(), &omega);
    let den = log_prefix_weights(eig, sys.d(), &tail);
    let ratios: Vec<f64> = (0..depth)
        .map(|j| (num[j] - if j == 0 { 0.0 } else { den[j - 1] }).exp())
        .collect();
    Ok(ScalingValue { value: *ratios.last().unwrap(), depth, ratios })
}

/// H_{beta,k}(w, x) = (1/beta) log h_beta(w_k, x).
#[allow(non_snake_case)]
pub fn H_beta(
    sys: &BranchSystem,
    pot: &Potential,
    eig: &EigenData,
    w: &TailPeriodicWord,
    x: f64,
    depth: usize,
) -> Result<f64, KernelError> {
    if eig.beta < 1.0 {
        return Err(KernelError::BetaTooSmall(eig.beta));
    }
    Ok(log_h(sys, pot, eig, &w.prefix(depth), x)? / eig.beta)
}

/// Empirical D in |H_{beta,k+1} - H_{beta,k}| <= D lambda^k over the samples
/// and k = 1..K-1.
pub fn increment_constant(
    sys: &BranchSystem,
    pot: &Potential,
    eig: &EigenData,
    samples: &[(TailPeriodicWord, f64)],
) -> Result<f64, KernelError> {
    if eig.beta < 1.0 {
        return Err(KernelError::BetaTooSmall(eig.beta));
    }
    let kmax = eig.depth();
    let lambda = sys.lambda();
    let mut d = 0.0f64;
    for (w, x) in samples {
        let omega = w.prefix(kmax);
        let lmu = log_prefix_weights(eig, sys.d(), &omega);
        let mut y = *x;
        let mut prev = 0.0;
        for (j, &s) in omega.symbols().iter().enumerate() {
            let i = s as usize;
            let inc = (eig.beta * pot.pullback(i, y) + prev - eig.log_alpha - lmu[j]) / eig.beta;
            y = sys.psi(i, y);
            prev = lmu[j];
            // inc is H_{j+1} - H_j; k = j
            if j >= 1 {
                d = d.max(inc.abs() / lambda.powi(j as i32));
            }
        }
    }
    Ok(d)
}

/// sup over grid nodes of |v(x) - sum_{|gamma| = k} h_gamma(x) mu(C_gamma)|.
pub fn eq12_residual(
    sys: &BranchSystem,
    pot: &Potential,
    eig: &EigenData,
    k: usize,
    stride: usize,
) -> Result<f64, KernelError> {
    if k > eig.depth() {
        return Err(KernelError::DepthExceeded { required: k, available: eig.depth() });
    }
    let d = sys.d();
    let words: Vec<(Word, f64)> = (0..d.pow(k as u32))
        .map(|idx| {
            let g = Word::from_spatial_index(idx, k, d);
            let m = eig.eigenmeasure_weight(&g);
            (g, m)
        })
        .collect();
    let n = eig.grid();
    let mut worst = 0.0f64;
    for j in (0..n).step_by(stride.max(1)) {
        let x = node(j, n);
        let mut s = 0.0;
        for (g, m) in &words {
            s += log_h(sys, pot, eig, g, x)?.exp() * m;
        }
        worst = worst.max((eig.v.eval(x) - s).abs());
    }
    Ok(worst)
}

/// Extrapolated beta -> infinity limit from the last two ladder values,
/// assuming an O(1/beta) error; returns (estimate, |estimate - last|).
pub fn extrapolate_limit(ladder: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = ladder.len();
    if n < 2 {
        return None;
    }
    let (b1, h1) = ladder[n - 2];
    let (b2, h2) = ladder[n - 1];
    let est = (b2 * h2 - b1 * h1) / (b2 - b1);
    Some((est, (est - h2).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialSpec;
    use crate::transfer::{leading_eigendata, EigenOptions};

    fn tw(s: &str) -> TailPeriodicWord {
        s.parse().unwrap()
    }

    #[test]
    fn geometric_series_oracles() {
        let sys = BranchSystem::doubling();
        let pot = Potential::new(&PotentialSpec::Polynomial { coeffs: vec![0.0, 1.0] }, &sys).unwrap();
        let a = delta_series(&sys, &pot, 1.0, 0.0, &tw("(0)"), 60);
        assert!((a.value - 1.0).abs() < 1e-15);
        let b = delta_series(&sys, &pot, 1.0, 0.0, &tw("(1)"), 60);
        assert!((b.value - 1.0).abs() < 1e-15);
        assert_eq!(delta_series(&sys, &pot, 0.3, 0.3, &tw("0(01)"), 40).value, 0.0);
        let k = DeltaKernel::new(&sys, &pot, 0.5, 60);
        assert!((k.w(&tw("(0)"), 0.2) - (0.2 - 0.5)).abs() < 1e-15);
        assert!(a.error_bound > 0.0);
    }

    #[test]
    fn locally_constant_kernel_vanishes() {
        let sys = BranchSystem::doubling();
        let pot = Potential::new(&PotentialSpec::LocallyConstant { g: vec![0.4, 0.6] }, &sys).unwrap();
        let eig = leading_eigendata(&sys, &pot, 1.0, &EigenOptions { grid: 129, depth: 8, ..Default::default() }).unwrap();
        let w = tw("01(011)");
        for x in [0.0, 0.3, 1.0] {
            let p = involution_kernel(&sys, &pot, &eig, &w, x, 40, 0.5).unwrap();
            assert_eq!(p.delta.value, 0.0);
            assert!(p.h_raw.abs() < 1e-12);
            assert!((h_truncated(&sys, &pot, &eig, &w.prefix(8), x).unwrap() - 1.0).abs() < 1e-12);
        }
        let dp = dual_potential(&sys, &pot, None, &tw("(1)"), 40, &default_probes(), Gauge::Delta { x_ref: 0.5 }).unwrap();
        assert!((dp.value - 0.6f64.ln()).abs() < 1e-15);
        let s = scaling_function(&sys, &eig, &tw("(0)"), 8).unwrap();
        assert!((s.value - 0.4).abs() < 1e-12);
        assert!(log_h(&sys, &pot, &eig, &w.prefix(9), 0.1).is_err());
    }
}
