//! Discretized Ruelle operator P_{βA}, its leading eigendata, the conformal
//! cylinder weights, and the zero-temperature scan.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{BranchSystem, Word};
use crate::grid::{locate, node, GridError, GridFunction};
use crate::potential::Potential;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("input function has non-finite entries")]
    NonFinite,
    #[error("beta must be nonnegative and finite, got {0}")]
    BadBeta(f64),
    #[error("beta ladder must be nonempty and strictly increasing")]
    BadLadder,
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error("power iteration did not converge in {iterations} steps (last Rayleigh quotients {last:e}, {prev:e})")]
    NoConvergence { iterations: usize, last: f64, prev: f64 },
    #[error("cylinder depth {0} is out of range")]
    BadDepth(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenOptions {
    pub grid: usize,
    pub depth: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// Above this beta the power iteration runs on log v.
    pub log_threshold: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { grid: 4096, depth: 10, tol: 1e-12, max_iters: 100_000, log_threshold: 30.0 }
    }
}

/// P_{βA} on the uniform grid with linear interpolation. Weights are stored
/// relative to their maximum, e^{shift}.
pub struct RuelleOperator {
    n: usize,
    d: usize,
    cells: Vec<(usize, f64)>,
    log_w: Vec<f64>,
    w: Vec<f64>,
    shift: f64,
}

impl RuelleOperator {
    pub fn new(sys: &BranchSystem, pot: &Potential, beta: f64, n: usize) -> Result<Self, TransferError> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(TransferError::BadBeta(beta));
        }
        if n < 2 {
            return Err(GridError::TooSmall(n).into());
        }
        let d = sys.d();
        let mut cells = Vec::with_capacity(n * d);
        let mut log_w = Vec::with_capacity(n * d);
        for j in 0..n {
            let x = node(j, n);
            for i in 0..d {
                cells.push(locate(sys.psi(i, x), n));
                log_w.push(beta * pot.pullback(i, x));
            }
        }
        let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = log_w.iter().map(|l| (l - shift).exp()).collect();
        Ok(RuelleOperator { n, d, cells, log_w, w, shift })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// log of the dropped weight scale.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// e^{-shift} P q.
    pub fn apply_scaled(&self, q: &[f64]) -> Vec<f64> {
        let interp = |(j, t): (usize, f64)| if t == 0.0 { q[j] } else { q[j] + t * (q[j + 1] - q[j]) };
        (0..self.n)
            .into_par_iter()
            .with_min_len(256)
            .map(|j| {
                (0..self.d)
                    .map(|i| self.w[j * self.d + i] * interp(self.cells[j * self.d + i]))
                    .sum()
            })
            .collect()
    }

    /// log P e^u, interpolating e^u linearly so that it matches the linear
    /// domain operator.
    pub fn apply_log(&self, u: &[f64]) -> Vec<f64> {
        let interp = |(j, t): (usize, f64)| {
            if t == 0.0 {
                u[j]
            } else {
                let (a, b) = (u[j], u[j + 1]);
                let m = a.max(b);
                m + ((1.0 - t) * (a - m).exp() + t * (b - m).exp()).ln()
            }
        };
        (0..self.n)
            .into_par_iter()
            .with_min_len(256)
            .map(|j| {
                let terms: Vec<f64> = (0..self.d)
                    .map(|i| self.log_w[j * self.d + i] + interp(self.cells[j * self.d + i]))
                    .collect();
                log_sum_exp(&terms)
            })
            .collect()
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// One application of P_{βA} to q at the grid nodes.
pub fn ruelle_apply(
    sys: &BranchSystem,
    pot: &Potential,
    beta: f64,
    q: &GridFunction,
) -> Result<GridFunction, TransferError> {
    if q.values().iter().any(|v| !v.is_finite()) {
        return Err(TransferError::NonFinite);
    }
    let op = RuelleOperator::new(sys, pot, beta, q.len())?;
    let s = op.shift();
    if q.values().iter().all(|&v| v > 0.0) && s > 600.0 {
        let u: Vec<f64> = q.values().iter().map(|v| v.ln()).collect();
        return Ok(GridFunction::new(op.apply_log(&u).into_iter().map(f64::exp).collect())?);
    }
    let out = op.apply_scaled(q.values()).into_iter().map(|v| v * s.exp()).collect();
    Ok(GridFunction::new(out)?)
}

/// Weights of the cylinders I_gamma for all depths up to K, each level in
/// spatial order (see [`Word::spatial_index`]).
#[derive(Clone, Debug, Serialize)]
pub struct CylinderWeights {
    d: usize,
    levels: Vec<Vec<f64>>,
}

impl CylinderWeights {
    fn from_finest(d: usize, finest: Vec<f64>, depth: usize) -> Self {
        let mut levels = vec![finest];
        for _ in 0..depth {
            let child = levels.last().unwrap();
            let parent: Vec<f64> = (0..child.len() / d)
                .map(|q| (0..d).map(|j| child[j + d * q]).sum())
                .collect();
            levels.push(parent);
        }
        levels.reverse();
        CylinderWeights { d, levels }
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    /// mu(I_gamma), `None` when |gamma| exceeds the depth.
    pub fn weight(&self, gamma: &Word) -> Option<f64> {
        self.levels
            .get(gamma.len())
            .map(|lv| lv[gamma.spatial_index(self.d)])
    }

    /// (word, depth, weight) rows for depths 1..=K.
    pub fn rows(&self) -> impl Iterator<Item = (Word, usize, f64)> + '_ {
        (1..self.levels.len()).flat_map(move |k| {
            self.levels[k]
                .iter()
                .enumerate()
                .map(move |(idx, &w)| (Word::from_spatial_index(idx, k, self.d), k, w))
        })
    }
}

/// Midpoints psi_delta(1/2) of the depth-K cylinders in spatial order.
pub fn cell_midpoints(sys: &BranchSystem, depth: usize) -> Vec<f64> {
    let d = sys.d();
    (0..d.pow(depth as u32))
        .into_par_iter()
        .map(|c| sys.compose_inverse(&Word::from_spatial_index(c, depth, d), 0.5).0)
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenData {
    pub beta: f64,
    pub alpha: f64,
    pub log_alpha: f64,
    /// Leading eigenvalue from the conformality iteration on the cylinder tree.
    pub log_alpha_tree: f64,
    /// Eigenfunction with the integral against mu_tilde equal to 1.
    pub v: GridFunction,
    pub log_v: GridFunction,
    pub mu: CylinderWeights,
    pub iterations: usize,
    pub tree_iterations: usize,
    pub log_domain: bool,
    /// sup |P v - alpha v| / (alpha sup v) on the nodes.
    pub eigen_residual: f64,
    midpoints: Vec<f64>,
}

impl EigenData {
    pub fn depth(&self) -> usize {
        self.mu.depth()
    }

    pub fn grid(&self) -> usize {
        self.v.len()
    }

    /// Midpoints of the depth-K cells.
    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    /// Midpoint-rule integral of z against mu_tilde.
    pub fn integrate(&self, z: impl Fn(f64) -> f64) -> f64 {
        let m = self.mu.level(self.depth());
        self.midpoints.iter().zip(m).map(|(&x, &w)| z(x) * w).sum()
    }

    /// mu(I_gamma) = integral of v over I_gamma against mu_tilde, for
    /// |gamma| <= K.
    pub fn eigenmeasure_weight(&self, gamma: &Word) -> f64 {
        let k = self.depth();
        let d = self.mu.d;
        let block = d.pow((k - gamma.len()) as u32);
        let start = gamma.spatial_index(d) * block;
        let m = self.mu.level(k);
        (start..start + block)
            .map(|c| self.v.eval(self.midpoints[c]) * m[c])
            .sum()
    }
}

fn power_iteration(
    op: &RuelleOperator,
    log_domain: bool,
    tol: f64,
    max_iters: usize,
) -> Result<(f64, Vec<f64>, usize), TransferError> {
    let n = op.len();
    let mut u = vec![if log_domain { 0.0 } else { 1.0 }; n];
    let mut rho_prev = f64::NAN;
    let mut rho_prev2 = f64::NAN;
    for it in 1..=max_iters {
        // u holds log v in the log domain and v otherwise; max(v) = 1
        let (rho, next) = if log_domain {
            let w = op.apply_log(&u);
            let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (m, w.into_iter().map(|x| x - m).collect::<Vec<_>>())
        } else {
            let w = op.apply_scaled(&u);
            let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(m > 0.0) || !m.is_finite() {
                return Err(TransferError::NonFinite);
            }
            (m.ln(), w.into_iter().map(|x| x / m).collect::<Vec<_>>())
        };
        let change = if it == 1 {
            f64::INFINITY
        } else {
            u.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let rq_change = (rho - rho_prev).abs() / rho.abs().max(1.0);
        u = next;
        rho_prev2 = rho_prev;
        rho_prev = rho;
        if change < tol && rq_change < tol {
            return Ok((rho + op.shift(), u, it));
        }
    }
    Err(TransferError::NoConvergence {
        iterations: max_iters,
        last: (rho_prev + op.shift()).exp(),
        prev: (rho_prev2 + op.shift()).exp(),
    })
}

/// Fixed point of alpha mu(I_{gamma}) = sum over depth-K cells delta of
/// I_{gamma minus its last symbol} of g^beta(psi_i(mid_delta)) mu(delta).
fn conformal_tree(
    sys: &BranchSystem,
    pot: &Potential,
    beta: f64,
    mids: &[f64],
    depth: usize,
    tol: f64,
    max_iters: usize,
) -> Result<(f64, Vec<f64>, usize), TransferError> {
    let d = sys.d();
    let cells = mids.len();
    let block = cells / d;
    let mut log_g: Vec<f64> = Vec::with_capacity(d * cells);
    for i in 0..d {
        for &x in mids {
            log_g.push(beta * pot.pullback(i, x));
        }
    }
    let shift = log_g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let g: Vec<f64> = log_g.iter().map(|l| (l - shift).exp()).collect();
    let mut m = vec![1.0 / cells as f64; cells];
    let mut rho_prev = f64::NAN;
    let min_iters = depth + 2;
    for it in 1..=max_iters {
        let mut next = vec![0.0; cells];
        next.par_chunks_mut(block).enumerate().for_each(|(i, out)| {
            for (q, o) in out.iter_mut().enumerate() {
                *o = (0..d).map(|j| g[i * cells + j + d * q] * m[j + d * q]).sum();
            }
        });
        let total: f64 = next.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(TransferError::NonFinite);
        }
        next.iter_mut().for_each(|x| *x /= total);
        let mmax = next.iter().copied().fold(0.0, f64::max);
        let change = m
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / mmax;
        let rho = total.ln();
        let rq = (rho - rho_prev).abs() / rho.abs().max(1.0);
        m = next;
        rho_prev = rho;
        if it >= min_iters && change < tol && rq < tol {
            return Ok((rho + shift, m, it));
        }
    }
    Err(TransferError::NoConvergence { iterations: max_iters, last: rho_prev.exp(), prev: f64::NAN })
}

pub fn leading_eigendata(
    sys: &BranchSystem,
    pot: &Potential,
    beta: f64,
    opts: &EigenOptions,
) -> Result<EigenData, TransferError> {
    if !(opts.tol > 0.0) {
        return Err(TransferError::BadTolerance);
    }
    if opts.depth == 0 || opts.depth > 20 {
        return Err(TransferError::BadDepth(opts.depth));
    }
    let op = RuelleOperator::new(sys, pot, beta, opts.grid)?;
    let log_domain = beta > opts.log_threshold;
    let (log_alpha, u, iterations) = power_iteration(&op, log_domain, opts.tol, opts.max_iters)?;
    let mut log_v: Vec<f64> = if log_domain { u } else { u.iter().map(|x| x.ln()).collect() };

    let mids = cell_midpoints(sys, opts.depth);
    let (log_alpha_tree, finest, tree_iterations) =
        conformal_tree(sys, pot, beta, &mids, opts.depth, opts.tol, opts.max_iters)?;
    let mu = CylinderWeights::from_finest(sys.d(), finest, opts.depth);

    // normalize the integral of v against mu_tilde, v interpolated linearly
    let top = log_v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled = GridFunction::new(log_v.iter().map(|x| (x - top).exp()).collect())?;
    let mass: f64 = mids.iter().zip(mu.level(opts.depth)).map(|(&x, &w)| scaled.eval(x) * w).sum();
    let c = top + mass.ln();
    log_v.iter_mut().for_each(|x| *x -= c);
    let log_v = GridFunction::new(log_v)?;
    let v = log_v.map(f64::exp);

    let alpha = log_alpha.exp();
    let pv = op.apply_scaled(v.values());
    let scale = (op.shift() - log_alpha).exp();
    let eigen_residual = pv
        .iter()
        .zip(v.values())
        .map(|(p, x)| (p * scale - x).abs())
        .fold(0.0, f64::max)
        / v.max();

    Ok(EigenData {
        beta,
        alpha,
        log_alpha,
        log_alpha_tree,
        v,
        log_v,
        mu,
        iterations,
        tree_iterations,
        log_domain,
        eigen_residual,
        midpoints: mids,
    })
}

/// Residual of the conformality relation for every cylinder gamma·i of depth
/// at most `max_depth`, using the grid eigenvalue. Returns the maximum.
pub fn conformality_residual(sys: &BranchSystem, pot: &Potential, eig: &EigenData, max_depth: usize) -> f64 {
    let d = sys.d();
    let k = eig.depth();
    let fine = eig.mu.level(k);
    let mids = eig.midpoints();
    let mut worst = 0.0f64;
    for depth in 1..=max_depth.min(k) {
        let parent_block = d.pow((k - (depth - 1)) as u32);
        for idx in 0..d.pow(depth as u32) {
            let gamma = Word::from_spatial_index(idx, depth, d);
            let i = gamma.symbols()[depth - 1] as usize;
            let parent = gamma.prefix(depth - 1).spatial_index(d);
            let start = parent * parent_block;
            let quad: f64 = (start..start + parent_block)
                .map(|c| (eig.beta * pot.pullback(i, mids[c])).exp() * fine[c])
                .sum();
            let lhs = eig.alpha * eig.mu.level(depth)[idx];
            worst = worst.max((lhs - quad).abs());
        }
    }
    worst
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub integral: f64,
    /// sup_x |alpha^{-k} P^k z - v * integral| for k = 1..=k_max.
    pub residuals: Vec<f64>,
}

impl SpectralReport {
    /// Smallest ratio residual_k / residual_{k+1} over k in `range`
    /// (1-based k).
    pub fn min_decay(&self, from: usize, to: usize) -> f64 {
        (from..to)
            .map(|k| self.residuals[k - 1] / self.residuals[k])
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn spectral_projection_check(
    sys: &BranchSystem,
    pot: &Potential,
    eig: &EigenData,
    z: &GridFunction,
    k_max: usize,
) -> Result<SpectralReport, TransferError> {
    if z.values().iter().any(|v| !v.is_finite()) {
        return Err(TransferError::NonFinite);
    }
    let op = RuelleOperator::new(sys, pot, eig.beta, z.len())?;
    let integral = eig.integrate(|x| z.eval(x));
    let target: Vec<f64> = (0..z.len()).map(|j| eig.v.eval(node(j, z.len())) * integral).collect();
    let scale = (op.shift() - eig.log_alpha).exp();
    let mut q = z.values().to_vec();
    let mut residuals = Vec::with_capacity(k_max);
    for _ in 0..k_max {
        q = op.apply_scaled(&q).into_iter().map(|x| x * scale).collect();
        residuals.push(q.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Ok(SpectralReport { integral, residuals })
}

#[derive(Clone, Debug, Serialize)]
pub struct BetaPoint {
    pub beta: f64,
    pub log_alpha_over_beta: f64,
    /// (1/beta) log phi_beta, max-normalized.
    pub scaled_log_phi: GridFunction,
    pub sup_dist_to_v: Option<f64>,
    pub orbit_mass: Option<f64>,
    pub log_domain: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BetaScan {
    pub points: Vec<BetaPoint>,
}

impl BetaScan {
    pub fn betas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.beta).collect()
    }

    /// Positions k where the orbit mass drops from step k to k+1.
    pub fn concentration_violations(&self) -> Vec<usize> {
        self.points
            .windows(2)
            .enumerate()
            .filter(|(_, w)| match (w[0].orbit_mass, w[1].orbit_mass) {
                (Some(a), Some(b)) => b < a,
                _ => false,
            })
            .map(|(k, _)| k)
            .collect()
    }
}

/// Depth-p cylinders containing every point of a periodic orbit of period p.
pub fn orbit_cylinders(sys: &BranchSystem, points: &[f64]) -> Vec<Word> {
    let p = points.len();
    let mut words: Vec<Word> = points.iter().map(|&x| sys.itinerary(x, p).word.reversed()).collect();
    words.sort();
    words.dedup();
    words
}

pub fn zero_temp_scan(
    sys: &BranchSystem,
    pot: &Potential,
    betas: &[f64],
    opts: &EigenOptions,
    reference: Option<&GridFunction>,
    orbit_points: Option<&[f64]>,
) -> Result<BetaScan, TransferError> {
    if betas.is_empty() || betas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(TransferError::BadLadder);
    }
    let cyl = orbit_points.map(|pts| orbit_cylinders(sys, pts));
    let points = betas
        .par_iter()
        .map(|&beta| {
            let eig = leading_eigendata(sys, pot, beta, opts)?;
            let scaled = eig.log_v.map(|l| l / beta).max_normalized();
            let sup_dist_to_v = reference.map(|v| {
                let r = GridFunction::from_fn(scaled.len(), |x| v.eval(x)).expect("grid size");
                let r = r.max_normalized();
                scaled.sup_dist(&r).expect("same size")
            });
            let orbit_mass = cyl
                .as_ref()
                .map(|ws| ws.iter().map(|w| eig.eigenmeasure_weight(w)).sum());
            Ok(BetaPoint {
                beta,
                log_alpha_over_beta: eig.log_alpha / beta,
                scaled_log_phi: scaled,
                sup_dist_to_v,
                orbit_mass,
                log_domain: eig.log_domain,
            })
        })
        .collect::<Result<Vec<_>, TransferError>>()?;
    Ok(BetaScan { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialSpec;

    fn opts(depth: usize) -> EigenOptions {
        EigenOptions { grid: 257, depth, ..Default::default() }
    }

    #[test]
    fn bernoulli_weights() {
        let sys = BranchSystem::doubling();
        let pot = Potential::new(&PotentialSpec::LocallyConstant { g: vec![0.4, 0.6] }, &sys).unwrap();
        let eig = leading_eigendata(&sys, &pot, 1.0, &opts(6)).unwrap();
        assert!((eig.alpha - 1.0).abs() < 1e-12);
        assert!((eig.mu.weight(&Word::new(vec![1, 0])).unwrap() - 0.24).abs() < 1e-12);
        assert!((eig.v.max() - 1.0).abs() < 1e-10 && (eig.v.min() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn counting_case() {
        let sys = BranchSystem::doubling();
        let pot = Potential::new(&PotentialSpec::quadratic(), &sys).unwrap();
        let q = GridFunction::constant(33, 1.0).unwrap();
        let out = ruelle_apply(&sys, &pot, 0.0, &q).unwrap();
        assert!(out.values().iter().all(|&v| (v - 2.0).abs() < 1e-15));
        let eig = leading_eigendata(&sys, &pot, 0.0, &opts(5)).unwrap();
        assert!((eig.alpha - 2.0).abs() < 1e-12);
        let bad = GridFunction::new(vec![1.0, f64::NAN]).unwrap();
        assert!(ruelle_apply(&sys, &pot, 1.0, &bad).is_err());
    }

    #[test]
    fn lebesgue_is_conformal_for_minus_log_derivative() {
        let sys = BranchSystem::doubling();
        let pot = Potential::new(&PotentialSpec::NegLogDerivative, &sys).unwrap();
        let eig = leading_eigendata(&sys, &pot, 1.0, &opts(6)).unwrap();
        assert!((eig.alpha - 1.0).abs() < 1e-12);
        for w in eig.mu.level(6) {
            assert!((w - 1.0 / 64.0).abs() < 1e-14);
        }
        let z = GridFunction::from_fn(257, |x| x).unwrap();
        let rep = spectral_projection_check(&sys, &pot, &eig, &z, 12).unwrap();
        assert!((rep.integral - 0.5).abs() < 1e-12);
        assert!(rep.residuals[11] < 1e-3);
    }
}
