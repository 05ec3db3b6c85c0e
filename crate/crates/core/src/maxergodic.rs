//! Maximizing periodic orbits, calibrated subactions V and V*, the residuals
//! R and R*, and the deviation function I*.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{BranchSystem, DynamicsError, TailPeriodicWord, Word};
use crate::grid::{locate, node, GridError, GridFunction};
use crate::kernel::DeltaKernel;
use crate::potential::Potential;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaxErgodicError {
    #[error("period bound must be at least 1")]
    BadPeriodBound,
    #[error("m(A*) = {m_star} differs from m(A) = {m} by more than 1e-4")]
    DualityMismatch { m: f64, m_star: f64 },
    #[error("calibration violated: residual {value:e} below -10 tol")]
    CalibrationViolation { value: f64 },
    #[error("dual tree depth {0} is out of range")]
    BadDepth(usize),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Lyndon words of length 1..=n over d symbols, in lexicographic order.
pub fn lyndon_words(d: usize, n: usize) -> Vec<Word> {
    let mut out = vec![];
    if n == 0 || d == 0 {
        return out;
    }
    let top = (d - 1) as u8;
    let mut w: Vec<u8> = vec![0];
    out.push(Word::new(w.clone()));
    loop {
        let m = w.len();
        while w.len() < n {
            let s = w[w.len() - m];
            w.push(s);
        }
        while w.last() == Some(&top) {
            w.pop();
        }
        match w.last_mut() {
            None => break,
            Some(l) => *l += 1,
        }
        out.push(Word::new(w.clone()));
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct MaximizingOrbit {
    /// Itinerary of points[0], the leftmost orbit point.
    pub period_word: Word,
    /// points[k+1] = f(points[k]).
    pub points: Vec<f64>,
    pub average: f64,
    pub margin: f64,
    pub second_best: Option<Word>,
    pub tie_warning: bool,
    pub enumerated: usize,
}

impl MaximizingOrbit {
    pub fn period(&self) -> usize {
        self.period_word.len()
    }

    /// Dual word paired with points[k]: (a_{k-1}, a_{k-2}, ...) repeated, where
    /// a is the period word.
    pub fn dual_word(&self, k: usize) -> TailPeriodicWord {
        let p = self.period();
        let a = self.period_word.symbols();
        let sym: Vec<u8> = (1..=p).map(|j| a[(k + p * 2 - j) % p]).collect();
        TailPeriodicWord::periodic(Word::new(sym)).expect("nonempty")
    }

    pub fn dual_words(&self) -> Vec<TailPeriodicWord> {
        (0..self.period()).map(|k| self.dual_word(k)).collect()
    }

    /// Index of the lexicographically largest dual word.
    pub fn dual_top(&self) -> usize {
        let duals = self.dual_words();
        (0..duals.len()).max_by(|&a, &b| duals[a].cmp(&duals[b])).unwrap()
    }
}

fn orbit_of(sys: &BranchSystem, pot: &Potential, word: &Word) -> Result<(Vec<f64>, f64), DynamicsError> {
    let p = word.len();
    let mut pts = Vec::with_capacity(p);
    let mut s = 0.0;
    for r in 0..p {
        let x = sys.periodic_point(&word.rotated(r))?;
        s += pot.on_branch(word.symbols()[r] as usize, x);
        pts.push(x);
    }
    Ok((pts, s / p as f64))
}

pub fn max_ergodic_average(
    sys: &BranchSystem,
    pot: &Potential,
    p_max: usize,
) -> Result<MaximizingOrbit, MaxErgodicError> {
    if p_max == 0 {
        return Err(MaxErgodicError::BadPeriodBound);
    }
    let words = lyndon_words(sys.d(), p_max);
    let scored: Vec<(Word, Vec<f64>, f64)> = words
        .par_iter()
        .map(|w| orbit_of(sys, pot, w).map(|(pts, avg)| (w.clone(), pts, avg)))
        .collect::<Result<_, _>>()?;
    let mut best = 0;
    for (k, s) in scored.iter().enumerate() {
        if s.2 > scored[best].2 {
            best = k;
        }
    }
    let second = (0..scored.len())
        .filter(|&k| k != best)
        .max_by(|&a, &b| scored[a].2.total_cmp(&scored[b].2));
    let margin = second.map_or(f64::INFINITY, |k| scored[best].2 - scored[k].2);
    let (word, pts, avg) = scored[best].clone();
    let r0 = (0..pts.len()).min_by(|&a, &b| pts[a].total_cmp(&pts[b])).unwrap();
    let period_word = word.rotated(r0);
    let points: Vec<f64> = (0..pts.len()).map(|k| pts[(r0 + k) % pts.len()]).collect();
    Ok(MaximizingOrbit {
        period_word,
        points,
        average: avg,
        margin,
        second_best: second.map(|k| scored[k].0.clone()),
        tie_warning: margin < 1e-9,
        enumerated: scored.len(),
    })
}

/// sup over `points` of |max_i [V(psi_i x) + A(psi_i x)] - m - V(x)|.
pub fn calibration_residual(
    sys: &BranchSystem,
    pot: &Potential,
    m: f64,
    v: impl Fn(f64) -> f64 + Sync,
    points: &[f64],
) -> f64 {
    points
        .par_iter()
        .map(|&x| {
            let best = (0..sys.d())
                .map(|i| v(sys.psi(i, x)) + pot.pullback(i, x))
                .fold(f64::NEG_INFINITY, f64::max);
            (best - m - v(x)).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// Nodes plus cell midpoints of an N-point grid.
pub fn check_points(n: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..n).map(|j| node(j, n)).collect();
    pts.extend((0..n - 1).map(|j| (j as f64 + 0.5) / (n - 1) as f64));
    pts
}

#[derive(Clone, Debug, Serialize)]
pub struct SubactionField {
    pub v: GridFunction,
    pub m: f64,
    /// Additive constant; 0 under the max V = 0 normalization.
    pub gamma: f64,
    pub iterations: usize,
    pub converged: bool,
    pub last_change: f64,
    /// Calibration residual on nodes and cell midpoints.
    pub residual: f64,
}

impl SubactionField {
    pub fn eval(&self, x: f64) -> f64 {
        self.v.eval(x)
    }
}

/// Lax-Oleinik iteration with Krasnoselskii-Mann averaging,
/// V <- (V + L V)/2, max-normalized each step.
pub fn calibrated_v(
    sys: &BranchSystem,
    pot: &Potential,
    m: f64,
    n: usize,
    tol: f64,
    max_iters: usize,
) -> Result<SubactionField, MaxErgodicError> {
    if n < 2 {
        return Err(GridError::TooSmall(n).into());
    }
    let d = sys.d();
    let mut cells = Vec::with_capacity(n * d);
    let mut gain = Vec::with_capacity(n * d);
    for j in 0..n {
        let x = node(j, n);
        for i in 0..d {
            cells.push(locate(sys.psi(i, x), n));
            gain.push(pot.pullback(i, x) - m);
        }
    }
    let mut v = vec![0.0; n];
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < max_iters {
        iterations += 1;
        let mut next: Vec<f64> = (0..n)
            .into_par_iter()
            .with_min_len(256)
            .map(|j| {
                let lv = (0..d)
                    .map(|i| {
                        let (c, t) = cells[j * d + i];
                        let y = if t == 0.0 { v[c] } else { v[c] + t * (v[c + 1] - v[c]) };
                        y + gain[j * d + i]
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                0.5 * (v[j] + lv)
            })
            .collect();
        let mx = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        next.iter_mut().for_each(|x| *x -= mx);
        change = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change < tol {
            break;
        }
    }
    let v = GridFunction::new(v)?;
    let residual = calibration_residual(sys, pot, m, |x| v.eval(x), &check_points(n));
    Ok(SubactionField {
        v,
        m,
        gamma: 0.0,
        iterations,
        converged: change < tol,
        last_change: change,
        residual,
    })
}

/// R(x) = V(f x) - V(x) - A(x) + m.
pub fn residual_r(
    sys: &BranchSystem,
    pot: &Potential,
    m: f64,
    v: impl Fn(f64) -> f64,
    x: f64,
) -> f64 {
    let (i, _) = sys.branch_of(x);
    v(sys.forward_on_branch(i, x)) - v(x) - pot.on_branch(i, x) + m
}

pub fn check_nonnegative(values: &[f64], tol: f64) -> Result<f64, MaxErgodicError> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -10.0 * tol {
        return Err(MaxErgodicError::CalibrationViolation { value: min });
    }
    Ok(min)
}

/// V* on the depth-K prefix tree, with exact values on the dual orbit.
#[derive(Clone, Debug)]
pub struct DualSubaction {
    pub kernel: DeltaKernel,
    d: usize,
    depth: usize,
    tail: Word,
    /// Tree values indexed by prefix, w_0 most significant.
    tree: Vec<f64>,
    pub m_star: f64,
    pub orbit_words: Vec<TailPeriodicWord>,
    pub orbit_values: Vec<f64>,
    pub orbit_a_star: Vec<f64>,
    orbit_index: HashMap<TailPeriodicWord, usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Calibration residual on the tree cells.
    pub tree_residual: f64,
}

impl DualSubaction {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn cell_of(&self, w: &TailPeriodicWord) -> usize {
        (0..self.depth).fold(0, |acc, n| acc * self.d + w.symbol(n) as usize)
    }

    /// Canonical word of a tree cell: cell prefix followed by the tail period.
    pub fn cell_word(&self, idx: usize) -> TailPeriodicWord {
        let mut s = vec![0u8; self.depth];
        let mut r = idx;
        for k in (0..self.depth).rev() {
            s[k] = (r % self.d) as u8;
            r /= self.d;
        }
        TailPeriodicWord::new(Word::new(s), self.tail.clone()).expect("nonempty tail")
    }

    pub fn cells(&self) -> usize {
        self.tree.len()
    }

    pub fn tree_value(&self, idx: usize) -> f64 {
        self.tree[idx]
    }

    pub fn orbit_position(&self, w: &TailPeriodicWord) -> Option<usize> {
        self.orbit_index.get(w).copied()
    }

    pub fn value(&self, w: &TailPeriodicWord) -> f64 {
        match self.orbit_position(w) {
            Some(k) => self.orbit_values[k],
            None => self.tree[self.cell_of(w)],
        }
    }

    pub fn a_star(&self, w: &TailPeriodicWord) -> f64 {
        match self.orbit_position(w) {
            Some(k) => self.orbit_a_star[k],
            None => self.kernel.a_star(w),
        }
    }

    /// R*(w) = V*(sigma w) - V*(w) - A*(w) + m*.
    pub fn r_star(&self, w: &TailPeriodicWord) -> f64 {
        self.value(&w.shift()) - self.value(w) - self.a_star(w) + self.m_star
    }

    /// |max_i [V*(i w) + A*(i w)] - m* - V*(w)|.
    pub fn calibration_error(&self, w: &TailPeriodicWord) -> f64 {
        let best = (0..self.d as u8)
            .map(|i| {
                let iw = w.prepend(i);
                self.value(&iw) + self.a_star(&iw)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        (best - self.m_star - self.value(w)).abs()
    }

    /// True when the tail of w is a dual orbit word.
    pub fn tail_on_orbit(&self, w: &TailPeriodicWord) -> bool {
        let tail = TailPeriodicWord::periodic(w.period().clone()).expect("nonempty");
        self.orbit_index.contains_key(&tail)
    }

    /// S(w) = V*(w) + I*(w) for w whose tail is on the dual orbit, computed by
    /// the exact chain S(w) = V*(p) - sum_{n < |pre|} (A*(sigma^n w) - m*).
    pub fn s_value(&self, w: &TailPeriodicWord) -> Option<f64> {
        if !self.tail_on_orbit(w) {
            return None;
        }
        let mut u = w.clone();
        let mut s = 0.0;
        while self.orbit_position(&u).is_none() {
            s -= self.a_star(&u) - self.m_star;
            u = u.shift();
        }
        Some(s + self.value(&u))
    }
}

pub fn calibrated_vstar(
    kernel: &DeltaKernel,
    orbit: &MaximizingOrbit,
    depth: usize,
    tol: f64,
    max_iters: usize,
) -> Result<DualSubaction, MaxErgodicError> {
    if depth == 0 || depth > 22 {
        return Err(MaxErgodicError::BadDepth(depth));
    }
    let d = kernel.sys.d();
    let orbit_words = orbit.dual_words();
    let orbit_a_star: Vec<f64> = orbit_words.iter().map(|w| kernel.a_star(w)).collect();
    let m_star = orbit_a_star.iter().sum::<f64>() / orbit_a_star.len() as f64;
    if (m_star - orbit.average).abs() > 1e-4 {
        return Err(MaxErgodicError::DualityMismatch { m: orbit.average, m_star });
    }
    let top = orbit.dual_top();
    let tail = orbit_words[top].period().clone();
    let mut ds = DualSubaction {
        kernel: kernel.clone(),
        d,
        depth,
        tail,
        tree: vec![],
        m_star,
        orbit_index: orbit_words.iter().cloned().enumerate().map(|(k, w)| (w, k)).collect(),
        orbit_words,
        orbit_values: vec![0.0; orbit.period()],
        orbit_a_star,
        iterations: 0,
        converged: false,
        tree_residual: f64::INFINITY,
    };
    let cells = d.pow(depth as u32);
    let block = cells / d;
    // gain[i * cells + c] = A*(i . cell_word(c)) - m*
    let gain: Vec<f64> = (0..d * cells)
        .into_par_iter()
        .map(|k| {
            let (i, c) = (k / cells, k % cells);
            kernel.a_star(&ds.cell_word(c).prepend(i as u8)) - m_star
        })
        .collect();
    let parent = |i: usize, c: usize| i * block + c / d;
    let top_cell = ds.cell_of(&ds.orbit_words[top]);
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..cells)
            .into_par_iter()
            .with_min_len(256)
            .map(|c| {
                (0..d)
                    .map(|i| v[parent(i, c)] + gain[i * cells + c])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    };
    let mut v = vec![0.0; cells];
    let mut change = f64::INFINITY;
    while ds.iterations < max_iters {
        ds.iterations += 1;
        let tv = apply(&v);
        let mut next: Vec<f64> = v.iter().zip(&tv).map(|(a, b)| 0.5 * (a + b)).collect();
        let z = next[top_cell];
        next.iter_mut().for_each(|x| *x -= z);
        change = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if change < tol {
            break;
        }
    }
    ds.converged = change < tol;
    let tv = apply(&v);
    ds.tree_residual = tv.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ds.tree = v;
    // exact chain along the orbit: V*(sigma p) = V*(p) + A*(p) - m*
    let p = ds.orbit_words.len();
    let mut k = top;
    for _ in 0..p - 1 {
        let next = ds.orbit_index[&ds.orbit_words[k].shift()];
        ds.orbit_values[next] = ds.orbit_values[k] + ds.orbit_a_star[k] - m_star;
        k = next;
    }
    Ok(ds)
}

#[derive(Clone, Debug, Serialize)]
pub struct DeviationValue {
    pub value: f64,
    pub terms_used: usize,
    pub finite: bool,
    /// Mean of R* over one tail period when the tail is off the dual orbit.
    pub divergence_rate: Option<f64>,
    pub ambiguous_tail: bool,
}

/// I*(w) = sum_{n >= 0} R*(sigma^n w).
pub fn deviation_istar(dual: &DualSubaction, w: &TailPeriodicWord, tol: f64) -> DeviationValue {
    let pre = w.preperiod().len();
    let mut u = w.clone();
    let mut s = 0.0;
    for _ in 0..pre {
        s += dual.r_star(&u);
        u = u.shift();
    }
    if dual.tail_on_orbit(w) {
        return DeviationValue { value: s, terms_used: pre, finite: true, divergence_rate: None, ambiguous_tail: false };
    }
    let p = w.period().len();
    let mut rate = 0.0;
    for _ in 0..p {
        rate += dual.r_star(&u);
        u = u.shift();
    }
    rate /= p as f64;
    DeviationValue {
        value: f64::INFINITY,
        terms_used: pre + p,
        finite: false,
        divergence_rate: Some(rate),
        ambiguous_tail: rate <= tol,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodConditionReport {
    pub entries: Vec<(String, f64)>,
    pub min: f64,
    pub pass: bool,
}

/// R* on the one-symbol extensions of the dual orbit that leave the orbit.
pub fn good_condition_check(dual: &DualSubaction, tol: f64) -> GoodConditionReport {
    let mut entries = vec![];
    for p in &dual.orbit_words {
        for i in 0..dual.d as u8 {
            let w = p.prepend(i);
            if dual.orbit_position(&w).is_none() {
                entries.push((w.to_string(), dual.r_star(&w)));
            }
        }
    }
    let min = entries.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    GoodConditionReport { pass: min > tol, entries, min }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialSpec;

    #[test]
    fn lyndon_counts() {
        // necklace counts for binary primitive words
        let counts = [2, 1, 2, 3, 6, 9, 18, 30];
        let w = lyndon_words(2, 8);
        for (k, c) in counts.iter().enumerate() {
            assert_eq!(w.iter().filter(|x| x.len() == k + 1).count(), *c);
        }
    }

    #[test]
    fn locally_constant_model() {
        let sys = BranchSystem::doubling();
        let pot = Potential::new(&PotentialSpec::LocallyConstant { g: vec![0.4, 0.6] }, &sys).unwrap();
        let orb = max_ergodic_average(&sys, &pot, 8).unwrap();
        assert_eq!(orb.period_word, Word::new(vec![1]));
        assert!((orb.points[0] - 1.0).abs() < 1e-15);
        assert!((orb.average - 0.6f64.ln()).abs() < 1e-15);
        let v = calibrated_v(&sys, &pot, orb.average, 65, 1e-12, 1000).unwrap();
        assert!(v.v.values().iter().all(|x| x.abs() < 1e-14));
        let k = DeltaKernel::new(&sys, &pot, 0.5, 40);
        let ds = calibrated_vstar(&k, &orb, 6, 1e-12, 1000).unwrap();
        let w: TailPeriodicWord = "0(1)".parse().unwrap();
        assert!((ds.r_star(&w) - 1.5f64.ln()).abs() < 1e-14);
        let dev = deviation_istar(&ds, &w, 1e-9);
        assert!(dev.finite && (dev.value - 1.5f64.ln()).abs() < 1e-14);
        let dev0 = deviation_istar(&ds, &"(0)".parse().unwrap(), 1e-9);
        assert!(!dev0.finite && !dev0.ambiguous_tail);
        let gc = good_condition_check(&ds, 1e-9);
        assert!(gc.pass && gc.entries.len() == 1);
    }

    #[test]
    fn constant_potential_ties() {
        let sys = BranchSystem::doubling();
        let pot = Potential::new(&PotentialSpec::Constant { value: -0.3 }, &sys).unwrap();
        let orb = max_ergodic_average(&sys, &pot, 6).unwrap();
        assert!(orb.tie_warning);
        assert!((orb.average + 0.3).abs() < 1e-15);
        let k = DeltaKernel::new(&sys, &pot, 0.5, 40);
        let ds = calibrated_vstar(&k, &orb, 6, 1e-12, 1000).unwrap();
        assert!(!good_condition_check(&ds, 1e-9).pass);
    }
}
