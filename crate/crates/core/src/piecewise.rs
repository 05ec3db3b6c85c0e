//! The calibrated subaction as a finite union of analytic pieces: candidate
//! words, the sup formula V(x) = sup_w [W(w,x) - V*(w) - I*(w)], optimal
//! pairs, the twist test, the turning point and the partition by its orbit.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{BranchSystem, TailPeriodicWord, Word};
use crate::grid::{node, GridError, GridFunction};
use crate::kernel::DeltaKernel;
use crate::maxergodic::{calibration_residual, DualSubaction, MaximizingOrbit};
use crate::potential::Potential;

pub const TIE_TOL: f64 = 1e-8;
pub const BREAK_MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PiecewiseError {
    #[error("optimal word at x = {x} needs the full candidate depth {depth}")]
    DepthExhausted { x: f64, depth: usize },
    #[error("word {word} has infinite deviation")]
    InfiniteDeviation { word: String },
    #[error("b({word}, {x}) = {b:e} is below -10 tol")]
    NegativeB { word: String, x: f64, b: f64 },
    #[error("the turning point needs two branches, got {0}")]
    NeedsTwoBranches(usize),
    #[error("optimal word is not constant on [{a}, {b}]: {left} at {x_left} and {right} at {x_right}")]
    PartitionRefinement { a: f64, b: f64, x_left: f64, x_right: f64, left: String, right: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Clone, Debug, Serialize)]
pub struct Candidate {
    pub word: TailPeriodicWord,
    pub a_star: f64,
    pub v_star: f64,
    pub i_star: f64,
    /// Index of sigma(word), `None` on the dual orbit.
    pub parent: Option<usize>,
}

impl Candidate {
    /// V*(w) + I*(w).
    pub fn s(&self) -> f64 {
        self.v_star + self.i_star
    }
}

/// Preimages of the dual maximizing orbit with preperiod at most K_c.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub depth: usize,
    pub entries: Vec<Candidate>,
    index: HashMap<TailPeriodicWord, usize>,
}

impl CandidateSet {
    pub fn build(dual: &DualSubaction, depth: usize) -> Self {
        let d = dual.kernel.sys.d() as u8;
        let mut entries: Vec<Candidate> = dual
            .orbit_words
            .iter()
            .enumerate()
            .map(|(k, w)| Candidate {
                word: w.clone(),
                a_star: dual.orbit_a_star[k],
                v_star: dual.orbit_values[k],
                i_star: 0.0,
                parent: None,
            })
            .collect();
        let mut index: HashMap<TailPeriodicWord, usize> =
            entries.iter().enumerate().map(|(k, c)| (c.word.clone(), k)).collect();
        let mut frontier: Vec<usize> = (0..entries.len()).collect();
        for _ in 0..depth {
            let proposals: Vec<(usize, TailPeriodicWord)> = frontier
                .iter()
                .flat_map(|&k| (0..d).map(move |i| (k, i)))
                .map(|(k, i)| (k, entries[k].word.prepend(i)))
                .filter(|(_, w)| !index.contains_key(w))
                .collect();
            let fresh: Vec<Candidate> = proposals
                .par_iter()
                .map(|(k, w)| {
                    let parent = &entries[*k];
                    let a_star = dual.kernel.a_star(w);
                    let v_star = dual.value(w);
                    let r = parent.v_star - v_star - a_star + dual.m_star;
                    Candidate { word: w.clone(), a_star, v_star, i_star: r + parent.i_star, parent: Some(*k) }
                })
                .collect();
            frontier.clear();
            for c in fresh {
                if index.contains_key(&c.word) {
                    continue;
                }
                index.insert(c.word.clone(), entries.len());
                frontier.push(entries.len());
                entries.push(c);
            }
        }
        CandidateSet { depth, entries, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, w: &TailPeriodicWord) -> Option<&Candidate> {
        self.index.get(w).map(|&k| &self.entries[k])
    }
}

/// b(w, x) = V(x) + V*(w) + I*(w) - W(w, x) where `v_at_x` is V(x) in the
/// raw gauge of the sup formula.
pub fn b_value(
    kernel: &DeltaKernel,
    cands: &CandidateSet,
    v_at_x: f64,
    w: &TailPeriodicWord,
    x: f64,
) -> Result<f64, PiecewiseError> {
    let c = cands
        .get(w)
        .ok_or_else(|| PiecewiseError::InfiniteDeviation { word: w.to_string() })?;
    let b = v_at_x + c.s() - kernel.w(w, x);
    if b < -10.0 * TIE_TOL {
        return Err(PiecewiseError::NegativeB { word: w.to_string(), x, b });
    }
    Ok(b)
}

/// Argmax of W(w, x) - V*(w) - I*(w) at one point.
#[derive(Clone, Debug, Serialize)]
pub struct Selection {
    pub x: f64,
    pub value: f64,
    /// Words within the tie tolerance, lexicographically decreasing.
    pub words: Vec<(TailPeriodicWord, f64)>,
    pub nodes_visited: usize,
}

impl Selection {
    pub fn u_plus(&self) -> &TailPeriodicWord {
        &self.words[0].0
    }

    pub fn u_minus(&self) -> &TailPeriodicWord {
        &self.words[self.words.len() - 1].0
    }

    pub fn contains(&self, w: &TailPeriodicWord) -> bool {
        self.words.iter().any(|(u, _)| u == w)
    }
}

/// Evaluation of the sup formula by a bounded depth-first search over the
/// backward branches of x. With w = gamma·q,
/// W(w,x) - S(w) = sum_{j<=|gamma|} (A(psi_{w,j} x) - m*) + W(q, psi_gamma x) - S(q),
/// and a subtree is cut when its partial sum plus an upper estimate of V at
/// the current point is below the best value found.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub kernel: DeltaKernel,
    pub m_star: f64,
    /// (q, S(q) + series(q, x_ref)) for the dual orbit words.
    terminals: Vec<(TailPeriodicWord, f64)>,
    bound: GridFunction,
    pub gamma0: f64,
    pub slack: f64,
    pub depth: usize,
}

impl Reconstruction {
    /// `v_bound` is the Lax-Oleinik subaction used to prune.
    pub fn new(dual: &DualSubaction, orbit: &MaximizingOrbit, v_bound: &GridFunction, depth: usize, slack: f64) -> Self {
        let kernel = dual.kernel.clone();
        let terminals: Vec<(TailPeriodicWord, f64)> = dual
            .orbit_words
            .iter()
            .enumerate()
            .map(|(k, q)| (q.clone(), dual.orbit_values[k] + kernel.series(q, kernel.x_ref)))
            .collect();
        let mut r = Reconstruction {
            kernel,
            m_star: dual.m_star,
            terminals,
            bound: v_bound.clone(),
            gamma0: 0.0,
            slack,
            depth,
        };
        // offset between the two gauges, read off at the optimal pairs (p*, p)
        r.gamma0 = (0..orbit.period())
            .map(|k| {
                let x = orbit.points[k];
                let q = orbit.dual_word(k);
                let (_, s) = r.terminals.iter().find(|(u, _)| *u == q).unwrap();
                r.kernel.series(&q, x) - s - v_bound.eval(x)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        r
    }

    pub fn dual_orbit(&self) -> impl Iterator<Item = &TailPeriodicWord> {
        self.terminals.iter().map(|t| &t.0)
    }

    /// W(w,x) - S(w) for a word with tail on the dual orbit, by the same
    /// recursion as the search.
    pub fn objective(&self, w: &TailPeriodicWord, x: f64) -> Option<f64> {
        let mut u = w.clone();
        let mut y = x;
        let mut acc = 0.0;
        loop {
            if let Some((q, s)) = self.terminals.iter().find(|(q, _)| *q == u) {
                return Some(acc + self.kernel.series(q, y) - s);
            }
            if u.is_purely_periodic() {
                return None;
            }
            let i = u.symbol(0) as usize;
            acc += self.kernel.pot.pullback(i, y) - self.m_star;
            y = self.kernel.sys.psi(i, y);
            u = u.shift();
        }
    }

    pub fn select(&self, x: f64) -> Result<Selection, PiecewiseError> {
        let mut st = SearchState { best: f64::NEG_INFINITY, found: vec![], nodes: 0, prefix: vec![] };
        self.visit(&mut st, x, 0.0);
        let best = st.best;
        let mut words: Vec<(TailPeriodicWord, f64)> = vec![];
        for (prefix, qi, val) in st.found {
            if val < best - TIE_TOL {
                continue;
            }
            let w = self.terminals[qi].0.prepend_word(&Word::new(prefix));
            match words.iter_mut().find(|(u, _)| *u == w) {
                Some(e) => e.1 = e.1.max(val),
                None => words.push((w, val)),
            }
        }
        if words.iter().any(|(w, _)| w.preperiod().len() >= self.depth) {
            return Err(PiecewiseError::DepthExhausted { x, depth: self.depth });
        }
        words.sort_by(|a, b| b.0.cmp(&a.0));
        Ok(Selection { x, value: best, words, nodes_visited: st.nodes })
    }

    fn visit(&self, st: &mut SearchState, y: f64, acc: f64) {
        st.nodes += 1;
        for (qi, (q, s)) in self.terminals.iter().enumerate() {
            let val = acc + self.kernel.series(q, y) - s;
            if val >= st.best - TIE_TOL {
                st.found.push((st.prefix.clone(), qi, val));
                st.best = st.best.max(val);
            }
        }
        if st.prefix.len() >= self.depth {
            return;
        }
        let sys = &self.kernel.sys;
        let mut kids: Vec<(u8, f64, f64, f64)> = (0..sys.d())
            .map(|i| {
                let yi = sys.psi(i, y);
                let ai = acc + self.kernel.pot.pullback(i, y) - self.m_star;
                (i as u8, yi, ai, ai + self.bound.eval(yi) + self.gamma0 + self.slack)
            })
            .collect();
        kids.sort_by(|a, b| b.3.total_cmp(&a.3));
        for (i, yi, ai, ub) in kids {
            if ub < st.best - TIE_TOL {
                continue;
            }
            st.prefix.push(i);
            self.visit(st, yi, ai);
            st.prefix.pop();
        }
    }
}

struct SearchState {
    best: f64,
    found: Vec<(Vec<u8>, usize, f64)>,
    nodes: usize,
    prefix: Vec<u8>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimalPairMap {
    pub xs: Vec<f64>,
    pub selections: Vec<Selection>,
    /// Sup formula, max-normalized.
    pub v_rec: GridFunction,
    /// The constant gamma with V_rec_raw = V + gamma, V max-normalized.
    pub gamma: f64,
    pub uniqueness_fraction: f64,
    /// sup |V_rec - V| with both max-normalized.
    pub reconstruction_error: f64,
    /// b(u_plus(x), x) with V the Lax-Oleinik subaction in the same gauge.
    pub b_min: Vec<f64>,
}

impl OptimalPairMap {
    pub fn build(recon: &Reconstruction, v: &GridFunction) -> Result<Self, PiecewiseError> {
        let n = v.len();
        let xs: Vec<f64> = (0..n).map(|j| node(j, n)).collect();
        let selections: Vec<Selection> = xs
            .par_iter()
            .map(|&x| recon.select(x))
            .collect::<Result<_, _>>()?;
        let raw: Vec<f64> = selections.iter().map(|s| s.value).collect();
        let gamma = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v_rec = GridFunction::new(raw.iter().map(|r| r - gamma).collect())?;
        let vn = v.max_normalized();
        let reconstruction_error = v_rec.sup_dist(&vn)?;
        let unique = selections.iter().filter(|s| s.words.len() == 1).count();
        let b_min = selections
            .iter()
            .enumerate()
            .map(|(j, s)| vn.values()[j] + gamma - s.words[0].1)
            .collect();
        Ok(OptimalPairMap {
            xs,
            selections,
            v_rec,
            gamma,
            uniqueness_fraction: unique as f64 / n as f64,
            reconstruction_error,
            b_min,
        })
    }

    /// Pairs x < x' with u_minus(x) < u_plus(x').
    pub fn monotone_violations(&self) -> usize {
        let n = self.selections.len();
        let mut count = 0;
        let mut suffix_max: Option<&TailPeriodicWord> = None;
        for j in (0..n).rev() {
            if let Some(m) = suffix_max {
                if self.selections[j].u_minus() < m {
                    count += 1;
                }
            }
            let up = self.selections[j].u_plus();
            suffix_max = Some(match suffix_max {
                Some(m) if m >= up => m,
                _ => up,
            });
        }
        count
    }

    /// Distinct selected words, in order of first appearance.
    pub fn selected_words(&self) -> Vec<TailPeriodicWord> {
        let mut out: Vec<TailPeriodicWord> = vec![];
        for s in &self.selections {
            for (w, _) in &s.words {
                if !out.contains(w) {
                    out.push(w.clone());
                }
            }
        }
        out
    }

    /// For each selected word, whether {x_j : b(w, x_j) <= tol} is a run of
    /// consecutive nodes.
    pub fn level_sets_connected(&self, recon: &Reconstruction, tol: f64) -> Vec<(TailPeriodicWord, bool, usize)> {
        self.selected_words()
            .into_par_iter()
            .map(|w| {
                let hits: Vec<usize> = self
                    .xs
                    .iter()
                    .enumerate()
                    .filter(|(j, &x)| {
                        let f = recon.objective(&w, x).unwrap_or(f64::NEG_INFINITY);
                        self.selections[*j].value - f <= tol
                    })
                    .map(|(j, _)| j)
                    .collect();
                let connected = hits.windows(2).all(|p| p[1] == p[0] + 1);
                (w, connected, hits.len())
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TwistViolation {
    pub a: String,
    pub a_prime: String,
    pub x: f64,
    pub x_prime: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TwistReport {
    pub pass: bool,
    pub samples: usize,
    pub violation_count: usize,
    pub min_margin: f64,
    pub mean_margin: f64,
    /// The first few violating quadruples.
    pub violations: Vec<TwistViolation>,
}

/// Random eventually periodic word with non-constant tail. Words ending in a
/// constant tail code dyadic-type points twice and give exact ties.
pub fn random_word(rng: &mut impl Rng, d: usize, max_pre: usize, max_period: usize) -> TailPeriodicWord {
    loop {
        let pre: Vec<u8> = (0..rng.gen_range(0..=max_pre)).map(|_| rng.gen_range(0..d) as u8).collect();
        let per: Vec<u8> = (0..rng.gen_range(2..=max_period.max(2))).map(|_| rng.gen_range(0..d) as u8).collect();
        let w = TailPeriodicWord::new(Word::new(pre), Word::new(per)).expect("nonempty");
        if w.period().len() > 1 {
            return w;
        }
    }
}

/// Strict supermodularity W(a,b') + W(a',b) > W(a,b) + W(a',b') for
/// a < a' and b < b' on random quadruples.
pub fn twist_check(
    w: impl Fn(&TailPeriodicWord, f64) -> f64 + Sync,
    d: usize,
    samples: usize,
    rng: &mut impl Rng,
) -> TwistReport {
    let mut quads = Vec::with_capacity(samples);
    while quads.len() < samples {
        let a = random_word(rng, d, 8, 6);
        let b = random_word(rng, d, 8, 6);
        let (x, y): (f64, f64) = (rng.gen(), rng.gen());
        if a == b || x == y {
            continue;
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        quads.push((a, b, x.min(y), x.max(y)));
    }
    let margins: Vec<f64> = quads
        .par_iter()
        .map(|(a, ap, x, xp)| w(a, *xp) + w(ap, *x) - w(a, *x) - w(ap, *xp))
        .collect();
    let bad: Vec<usize> = (0..samples).filter(|&k| !(margins[k] > 0.0)).collect();
    TwistReport {
        pass: bad.is_empty(),
        samples,
        violation_count: bad.len(),
        min_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
        mean_margin: margins.iter().sum::<f64>() / samples.max(1) as f64,
        violations: bad
            .iter()
            .take(20)
            .map(|&k| {
                let (a, ap, x, xp) = &quads[k];
                TwistViolation { a: a.to_string(), a_prime: ap.to_string(), x: *x, x_prime: *xp, margin: margins[k] }
            })
            .collect(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TurningPoint {
    pub c: f64,
    pub bracket: (f64, f64),
    pub roots: Vec<f64>,
    pub multiplicity_warning: bool,
    /// Set when D has no sign change and c sits at an endpoint.
    pub degenerate: Option<String>,
    /// f^n(c), n = 0.. until the landing pair or the budget.
    pub orbit: Vec<f64>,
    /// First (n, m), n < m, with |f^n c - f^m c| < tol_orbit.
    pub landing: Option<(usize, usize)>,
}

impl TurningPoint {
    pub fn periodic(&self) -> bool {
        self.landing.is_some()
    }
}

pub fn forward_orbit(sys: &BranchSystem, c: f64, budget: usize, tol_orbit: f64) -> (Vec<f64>, Option<(usize, usize)>) {
    let mut orbit = vec![c];
    for m in 1..=budget {
        let y = sys.forward(orbit[m - 1]);
        if let Some(n) = orbit.iter().position(|&z| (z - y).abs() < tol_orbit) {
            orbit.push(y);
            return (orbit, Some((n, m)));
        }
        orbit.push(y);
    }
    (orbit, None)
}

/// Zero of D(x) = [V(psi_1 x) + A(psi_1 x)] - [V(psi_0 x) + A(psi_0 x)].
pub fn turning_point(
    sys: &BranchSystem,
    pot: &Potential,
    v: impl Fn(f64) -> f64 + Sync,
    tol: f64,
    tol_orbit: f64,
    budget: usize,
) -> Result<TurningPoint, PiecewiseError> {
    if sys.d() != 2 {
        return Err(PiecewiseError::NeedsTwoBranches(sys.d()));
    }
    let dfun = |x: f64| v(sys.psi(1, x)) + pot.pullback(1, x) - v(sys.psi(0, x)) - pot.pullback(0, x);
    const M: usize = 2049;
    let xs: Vec<f64> = (0..M).map(|j| node(j, M)).collect();
    let ds: Vec<f64> = xs.par_iter().map(|&x| dfun(x)).collect();
    let zero = 1e-13;
    let sign = |v: f64| if v > zero { 1 } else if v < -zero { -1 } else { 0 };
    let mut roots = vec![];
    let mut brackets = vec![];
    for j in 0..M - 1 {
        let (s0, s1) = (sign(ds[j]), sign(ds[j + 1]));
        if s0 == 0 {
            roots.push(xs[j]);
            brackets.push((xs[j], xs[j]));
        } else if s0 * s1 < 0 {
            let (mut a, mut b) = (xs[j], xs[j + 1]);
            while b - a > tol {
                let mid = 0.5 * (a + b);
                let sm = sign(dfun(mid));
                if sm == 0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if sm == s0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
            brackets.push((a, b));
        }
    }
    if sign(ds[M - 1]) == 0 {
        roots.push(1.0);
        brackets.push((1.0, 1.0));
    }
    let mut degenerate = None;
    let (c, bracket) = if roots.is_empty() {
        if ds[0] > 0.0 {
            degenerate = Some("D > 0 on [0,1]: every optimal word starts with 1".to_string());
            (1.0, (1.0, 1.0))
        } else {
            degenerate = Some("D < 0 on [0,1]: every optimal word starts with 0".to_string());
            (0.0, (0.0, 0.0))
        }
    } else {
        (roots[0], brackets[0])
    };
    let (orbit, landing) = forward_orbit(sys, c, budget, tol_orbit);
    Ok(TurningPoint { c, bracket, multiplicity_warning: roots.len() > 1, roots, degenerate, orbit, landing })
}

#[derive(Clone, Debug, Serialize)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub word: TailPeriodicWord,
    /// -V*(w) - I*(w).
    pub kappa: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Breakpoint {
    pub x: f64,
    /// Smallest n with f^n(c) at this point.
    pub orbit_index: usize,
    /// First index where the words of the adjacent pieces differ.
    pub first_difference: usize,
    /// |f^{first_difference}(c) - x|.
    pub witness_gap: f64,
    pub continuity_jump: f64,
    /// u+ at the breakpoint is the left word and u- the right word.
    pub one_sided_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PiecewiseSubaction {
    pub pieces: Vec<Piece>,
    pub breakpoints: Vec<Breakpoint>,
    /// Raw values minus `offset` give max V = 0.
    pub offset: f64,
    pub candidate_breakpoints: usize,
    pub orbit_periodic: bool,
    pub infinite_domains_expected: bool,
    pub continuity_residual: f64,
    pub calibration_residual: f64,
    pub fallback: GridFunction,
    #[serde(skip)]
    kernel: Option<DeltaKernel>,
}

impl PiecewiseSubaction {
    pub fn piece_index(&self, x: f64) -> usize {
        self.pieces.iter().position(|p| x <= p.b).unwrap_or(self.pieces.len() - 1)
    }

    pub fn eval_raw(&self, x: f64) -> f64 {
        let p = &self.pieces[self.piece_index(x)];
        self.kernel.as_ref().expect("kernel").w(&p.word, x) + p.kappa
    }

    /// Max-normalized V.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_raw(x) - self.offset
    }
}

/// Splits [0,1] at the forward orbit of c, reads the optimal word on each
/// interval, and merges neighbours with equal words.
pub fn assemble_piecewise(
    recon: &Reconstruction,
    cands: &CandidateSet,
    turning: &TurningPoint,
    fallback: &GridFunction,
) -> Result<PiecewiseSubaction, PiecewiseError> {
    let kernel = &recon.kernel;
    let sys = &kernel.sys;
    let pot = &kernel.pot;
    let mut pts: Vec<(f64, usize)> = vec![];
    for (n, &y) in turning.orbit.iter().enumerate() {
        if y <= BREAK_MERGE_TOL || y >= 1.0 - BREAK_MERGE_TOL {
            continue;
        }
        if !pts.iter().any(|(z, _)| (z - y).abs() < BREAK_MERGE_TOL) {
            pts.push((y, n));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let candidate_breakpoints = pts.len();
    let mut edges = vec![0.0];
    edges.extend(pts.iter().map(|p| p.0));
    edges.push(1.0);
    let mut raw: Vec<(f64, f64, TailPeriodicWord)> = vec![];
    for k in 0..edges.len() - 1 {
        let (a, b) = (edges[k], edges[k + 1]);
        let mid = recon.select(0.5 * (a + b))?;
        let w = mid.u_plus().clone();
        for f in [0.1, 0.3, 0.7, 0.9] {
            let x = a + f * (b - a);
            let s = recon.select(x)?;
            if !s.contains(&w) {
                return Err(PiecewiseError::PartitionRefinement {
                    a,
                    b,
                    x_left: 0.5 * (a + b),
                    x_right: x,
                    left: w.to_string(),
                    right: s.u_plus().to_string(),
                });
            }
        }
        match raw.last_mut() {
            Some(last) if last.2 == w => last.1 = b,
            _ => raw.push((a, b, w)),
        }
    }
    let mut pieces = vec![];
    for (a, b, w) in raw {
        let s = match cands.get(&w) {
            Some(c) => c.s(),
            None => -recon.objective(&w, 0.5).ok_or_else(|| PiecewiseError::InfiniteDeviation { word: w.to_string() })?
                + kernel.w(&w, 0.5),
        };
        pieces.push(Piece { a, b, word: w, kappa: -s });
    }
    let mut breakpoints = vec![];
    let mut continuity_residual = 0.0f64;
    for j in 0..pieces.len() - 1 {
        let x = pieces[j].b;
        let left = kernel.w(&pieces[j].word, x) + pieces[j].kappa;
        let right = kernel.w(&pieces[j + 1].word, x) + pieces[j + 1].kappa;
        let jump = (left - right).abs();
        continuity_residual = continuity_residual.max(jump);
        let orbit_index = pts.iter().find(|p| p.0 == x).map(|p| p.1).unwrap_or(usize::MAX);
        let fd = pieces[j].word.first_difference(&pieces[j + 1].word).unwrap_or(0);
        let witness_gap = turning.orbit.get(fd).map_or(f64::INFINITY, |y| (y - x).abs());
        let sel = recon.select(x)?;
        let one_sided_ok = sel.u_plus() == &pieces[j].word && sel.u_minus() == &pieces[j + 1].word;
        breakpoints.push(Breakpoint { x, orbit_index, first_difference: fd, witness_gap, continuity_jump: jump, one_sided_ok });
    }
    let budget = turning.orbit.len();
    let max_active = breakpoints.iter().map(|b| b.orbit_index).max().unwrap_or(0);
    let mut out = PiecewiseSubaction {
        pieces,
        breakpoints,
        offset: 0.0,
        candidate_breakpoints,
        orbit_periodic: turning.periodic(),
        infinite_domains_expected: !turning.periodic() && max_active * 2 >= budget,
        continuity_residual,
        calibration_residual: f64::NAN,
        fallback: fallback.max_normalized(),
        kernel: Some(kernel.clone()),
    };
    let n = fallback.len();
    out.offset = (0..n)
        .into_par_iter()
        .map(|j| out.eval_raw(node(j, n)))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let checks: Vec<f64> = (0..2 * n - 1).map(|j| node(j, 2 * n - 1)).collect();
    out.calibration_residual = calibration_residual(sys, pot, recon.m_star, |x| out.eval(x), &checks);
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct Fr1Report {
    pub samples: usize,
    /// max |R(psi_w x) - b(w,x) + b(sigma w, psi_w x)|.
    pub max_residual: f64,
    /// min of b(w,x) - b(sigma w, psi_w x); nonnegative along optimal spreading.
    pub min_increment: f64,
    pub min_b: f64,
}

/// Fundamental relation on random (w, x) with w drawn from the candidates and
/// V given in the raw gauge of the sup formula.
pub fn fr1_check(
    recon: &Reconstruction,
    cands: &CandidateSet,
    v_raw: impl Fn(f64) -> f64 + Sync,
    samples: usize,
    rng: &mut impl Rng,
) -> Fr1Report {
    let kernel = &recon.kernel;
    let draws: Vec<(usize, f64)> = (0..samples)
        .map(|_| (rng.gen_range(0..cands.len()), rng.gen::<f64>()))
        .collect();
    let rows: Vec<(f64, f64, f64)> = draws
        .par_iter()
        .map(|&(k, x)| {
            let c = &cands.entries[k];
            let w = &c.word;
            let sw = w.shift();
            let cs = cands.get(&sw).expect("closed under shift");
            let i = w.symbol(0) as usize;
            let y = kernel.sys.psi(i, x);
            let (vx, vy) = (v_raw(x), v_raw(y));
            let b1 = vx + c.s() - kernel.w(w, x);
            let b2 = vy + cs.s() - kernel.w(&sw, y);
            let r = vx - vy - kernel.pot.pullback(i, x) + recon.m_star;
            ((r - b1 + b2).abs(), b1 - b2, b1.min(b2))
        })
        .collect();
    Fr1Report {
        samples,
        max_residual: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        min_increment: rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
        min_b: rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min),
    }
}
