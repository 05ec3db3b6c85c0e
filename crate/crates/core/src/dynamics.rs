//! Expanding maps of [0,1] described by their inverse branches, symbol words,
//! cylinders and the skew inverse on the product of word space and [0,1].

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("a branch system needs at least two branches, got {0}")]
    TooFewBranches(usize),
    #[error("partition breakpoints must increase strictly from 0 to 1")]
    BadPartition,
    #[error("branch {branch} is not strictly increasing near x = {x}")]
    NotIncreasing { branch: usize, x: f64 },
    #[error("branch {branch} does not map [0,1] onto its partition interval (gap {gap:e})")]
    BranchImage { branch: usize, gap: f64 },
    #[error("branch contraction {0} is not below 1")]
    NotContracting(f64),
    #[error("cylinder of the empty word requested")]
    EmptyWord,
    #[error("period word must be nonempty")]
    EmptyPeriod,
    #[error("symbol {symbol} out of range for {d} branches")]
    SymbolOutOfRange { symbol: u8, d: usize },
    #[error("cannot parse word {0:?}")]
    Parse(String),
}

/// Description of the map, as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    /// x -> 2x mod 1.
    Doubling,
    /// Full-branch piecewise-linear map on the partition `breaks`
    /// (0 = a_0 < a_1 < ... < a_d = 1).
    PwLinear { breaks: Vec<f64> },
    /// Inverse branches given as polynomials in x (ascending coefficients).
    Analytic { branches: Vec<Vec<f64>> },
}

impl Default for MapSpec {
    fn default() -> Self {
        MapSpec::Doubling
    }
}

#[derive(Clone, Debug)]
enum Branches {
    Doubling,
    Linear,
    Poly { coeffs: Vec<Vec<f64>>, dcoeffs: Vec<Vec<f64>> },
}

/// A full-branch expanding map given by d contracting inverse branches
/// psi_i : [0,1] -> I_i.
#[derive(Clone, Debug)]
pub struct BranchSystem {
    spec: MapSpec,
    branches: Branches,
    breaks: Vec<f64>,
    lambda: f64,
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn derivative_coeffs(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, a)| k as f64 * a)
        .collect()
}

impl BranchSystem {
    pub fn doubling() -> Self {
        BranchSystem {
            spec: MapSpec::Doubling,
            branches: Branches::Doubling,
            breaks: vec![0.0, 0.5, 1.0],
            lambda: 0.5,
        }
    }

    pub fn pw_linear(breaks: Vec<f64>) -> Result<Self, DynamicsError> {
        if breaks.len() < 3 {
            return Err(DynamicsError::TooFewBranches(breaks.len().saturating_sub(1)));
        }
        if breaks[0] != 0.0
            || *breaks.last().unwrap() != 1.0
            || breaks.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(DynamicsError::BadPartition);
        }
        let lambda = breaks
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max);
        Ok(BranchSystem {
            spec: MapSpec::PwLinear { breaks: breaks.clone() },
            branches: Branches::Linear,
            breaks,
            lambda,
        })
    }

    pub fn analytic(coeffs: Vec<Vec<f64>>) -> Result<Self, DynamicsError> {
        let d = coeffs.len();
        if d < 2 {
            return Err(DynamicsError::TooFewBranches(d));
        }
        let dcoeffs: Vec<Vec<f64>> = coeffs.iter().map(|c| derivative_coeffs(c)).collect();
        let mut breaks = Vec::with_capacity(d + 1);
        breaks.push(horner(&coeffs[0], 0.0));
        for (i, c) in coeffs.iter().enumerate() {
            let lo = horner(c, 0.0);
            let gap = (lo - breaks[i]).abs();
            if gap > 1e-12 {
                return Err(DynamicsError::BranchImage { branch: i, gap });
            }
            breaks[i] = lo;
            breaks.push(horner(c, 1.0));
        }
        if breaks[0].abs() > 1e-12 {
            return Err(DynamicsError::BranchImage { branch: 0, gap: breaks[0].abs() });
        }
        if (breaks[d] - 1.0).abs() > 1e-12 {
            return Err(DynamicsError::BranchImage { branch: d - 1, gap: (breaks[d] - 1.0).abs() });
        }
        breaks[0] = 0.0;
        breaks[d] = 1.0;
        let mut lambda = 0.0f64;
        for (i, dc) in dcoeffs.iter().enumerate() {
            for k in 0..=2048 {
                let x = k as f64 / 2048.0;
                let s = horner(dc, x);
                if !(s > 0.0) {
                    return Err(DynamicsError::NotIncreasing { branch: i, x });
                }
                lambda = lambda.max(s);
            }
        }
        if lambda >= 1.0 {
            return Err(DynamicsError::NotContracting(lambda));
        }
        Ok(BranchSystem {
            spec: MapSpec::Analytic { branches: coeffs.clone() },
            branches: Branches::Poly { coeffs, dcoeffs },
            breaks,
            lambda,
        })
    }

    pub fn from_spec(spec: &MapSpec) -> Result<Self, DynamicsError> {
        match spec {
            MapSpec::Doubling => Ok(Self::doubling()),
            MapSpec::PwLinear { breaks } => Self::pw_linear(breaks.clone()),
            MapSpec::Analytic { branches } => Self::analytic(branches.clone()),
        }
    }

    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }

    /// Number of branches.
    pub fn d(&self) -> usize {
        self.breaks.len() - 1
    }

    /// Upper bound for |psi_i'| over all branches.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Partition interval I_i = [a_i, a_{i+1}].
    pub fn partition(&self, i: usize) -> (f64, f64) {
        (self.breaks[i], self.breaks[i + 1])
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn psi(&self, i: usize, x: f64) -> f64 {
        match &self.branches {
            Branches::Doubling => 0.5 * (x + i as f64),
            Branches::Linear => {
                let (a, b) = self.partition(i);
                a + (b - a) * x
            }
            Branches::Poly { coeffs, .. } => horner(&coeffs[i], x),
        }
    }

    pub fn dpsi(&self, i: usize, x: f64) -> f64 {
        match &self.branches {
            Branches::Doubling => 0.5,
            Branches::Linear => {
                let (a, b) = self.partition(i);
                b - a
            }
            Branches::Poly { dcoeffs, .. } => horner(&dcoeffs[i], x),
        }
    }

    /// Inverse of psi_i, i.e. the restriction of f to I_i. The argument is
    /// clamped to I_i.
    pub fn forward_on_branch(&self, i: usize, y: f64) -> f64 {
        let (a, b) = self.partition(i);
        let y = y.clamp(a, b);
        match &self.branches {
            Branches::Doubling => 2.0 * y - i as f64,
            Branches::Linear => ((y - a) / (b - a)).clamp(0.0, 1.0),
            Branches::Poly { .. } => {
                // safeguarded Newton on psi_i(x) = y
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                let mut x = (y - a) / (b - a);
                for _ in 0..100 {
                    let r = self.psi(i, x) - y;
                    if r.abs() <= 1e-16 {
                        break;
                    }
                    if r > 0.0 {
                        hi = x;
                    } else {
                        lo = x;
                    }
                    let mut nx = x - r / self.dpsi(i, x);
                    if !(nx > lo && nx < hi) {
                        nx = 0.5 * (lo + hi);
                    }
                    if (nx - x).abs() <= 1e-17 {
                        x = nx;
                        break;
                    }
                    x = nx;
                }
                x.clamp(0.0, 1.0)
            }
        }
    }

    /// Branch containing y. Interior breakpoints belong to two branches; the
    /// left one is returned and the flag is set.
    pub fn branch_of(&self, y: f64) -> (usize, bool) {
        let d = self.d();
        for i in 1..d {
            let a = self.breaks[i];
            if y < a {
                return (i - 1, false);
            }
            if y == a {
                return (i - 1, true);
            }
        }
        (d - 1, false)
    }

    /// The expanding map f.
    pub fn forward(&self, y: f64) -> f64 {
        let (i, _) = self.branch_of(y);
        self.forward_on_branch(i, y)
    }

    /// psi_gamma(x) = psi_{i_k} o ... o psi_{i_1}(x) together with its derivative.
    pub fn compose_inverse(&self, gamma: &Word, x: f64) -> (f64, f64) {
        let mut y = x;
        let mut dy = 1.0;
        for &s in gamma.symbols() {
            dy *= self.dpsi(s as usize, y);
            y = self.psi(s as usize, y);
        }
        (y, dy)
    }

    /// I_gamma = psi_gamma([0,1]).
    pub fn cylinder(&self, gamma: &Word) -> Result<Cylinder, DynamicsError> {
        if gamma.is_empty() {
            return Err(DynamicsError::EmptyWord);
        }
        self.check_word(gamma)?;
        let (lo, _) = self.compose_inverse(gamma, 0.0);
        let (hi, _) = self.compose_inverse(gamma, 1.0);
        Ok(Cylinder { word: gamma.clone(), lo, hi })
    }

    pub fn check_word(&self, w: &Word) -> Result<(), DynamicsError> {
        let d = self.d();
        match w.symbols().iter().find(|&&s| s as usize >= d) {
            Some(&s) => Err(DynamicsError::SymbolOutOfRange { symbol: s, d }),
            None => Ok(()),
        }
    }

    /// First n symbols of the coding of x under f.
    pub fn itinerary(&self, x: f64, n: usize) -> Itinerary {
        let mut word = Vec::with_capacity(n);
        let mut ambiguous_steps = Vec::new();
        let mut alternate = None;
        let mut y = x.clamp(0.0, 1.0);
        for step in 0..n {
            let (i, amb) = self.branch_of(y);
            if amb {
                ambiguous_steps.push(step);
                if alternate.is_none() {
                    let mut alt = word.clone();
                    alt.push((i + 1) as u8);
                    let z = self.forward_on_branch(i + 1, y);
                    alt.extend_from_slice(self.itinerary(z, n - step - 1).word.symbols());
                    alternate = Some(Word(alt));
                }
            }
            word.push(i as u8);
            y = self.forward_on_branch(i, y);
        }
        Itinerary { word: Word(word), ambiguous_steps, alternate }
    }

    /// The point of [0,1] whose itinerary is the periodic word `period`^inf.
    pub fn periodic_point(&self, period: &Word) -> Result<f64, DynamicsError> {
        if period.is_empty() {
            return Err(DynamicsError::EmptyPeriod);
        }
        self.check_word(period)?;
        let mut x = 0.5;
        for _ in 0..10_000 {
            let mut y = x;
            for &s in period.symbols().iter().rev() {
                y = self.psi(s as usize, y);
            }
            let done = (y - x).abs() <= 1e-17;
            x = y;
            if done {
                break;
            }
        }
        Ok(x)
    }

    /// psi_{w,n}(x) = psi_{w_{n-1}} o ... o psi_{w_0}(x).
    pub fn backward_point(&self, w: &TailPeriodicWord, n: usize, x: f64) -> f64 {
        let mut y = x;
        for k in 0..n {
            y = self.psi(w.symbol(k) as usize, y);
        }
        y
    }

    /// T^{-1}(w, x) = (sigma w, psi_{w_0}(x)).
    pub fn skew_inverse(&self, w: &TailPeriodicWord, x: f64) -> (TailPeriodicWord, f64) {
        (w.shift(), self.psi(w.symbol(0) as usize, x))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cylinder {
    pub word: Word,
    pub lo: f64,
    pub hi: f64,
}

impl Cylinder {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Itinerary {
    pub word: Word,
    /// Steps at which the iterate sat on a partition endpoint.
    pub ambiguous_steps: Vec<usize>,
    /// The coding obtained by taking the right branch at the first ambiguous step.
    pub alternate: Option<Word>,
}

/// Finite word over {0, ..., d-1}.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Word(Vec<u8>);

impl Word {
    pub fn new(symbols: Vec<u8>) -> Self {
        Word(symbols)
    }

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prefix(&self, k: usize) -> Word {
        Word(self.0[..k.min(self.0.len())].to_vec())
    }

    pub fn push(&mut self, s: u8) {
        self.0.push(s);
    }

    pub fn reversed(&self) -> Word {
        Word(self.0.iter().rev().copied().collect())
    }

    /// Index of I_gamma among the depth-k cylinders in spatial order for a
    /// system with d branches: sum_j i_j d^(j-1), last symbol most significant.
    pub fn spatial_index(&self, d: usize) -> usize {
        self.0.iter().rev().fold(0usize, |acc, &s| acc * d + s as usize)
    }

    /// Inverse of [`Word::spatial_index`].
    pub fn from_spatial_index(mut idx: usize, k: usize, d: usize) -> Word {
        let mut v = Vec::with_capacity(k);
        for _ in 0..k {
            v.push((idx % d) as u8);
            idx /= d;
        }
        Word(v)
    }

    /// Rotation by r: (w_r, ..., w_{p-1}, w_0, ..., w_{r-1}).
    pub fn rotated(&self, r: usize) -> Word {
        let p = self.0.len();
        if p == 0 {
            return self.clone();
        }
        let r = r % p;
        let mut v = self.0[r..].to_vec();
        v.extend_from_slice(&self.0[..r]);
        Word(v)
    }

    /// Smallest root: the shortest u with self = u^m.
    pub fn primitive_root(&self) -> Word {
        let p = self.0.len();
        for q in 1..=p {
            if p % q == 0 && (q..p).all(|k| self.0[k] == self.0[k - q]) {
                return Word(self.0[..q].to_vec());
            }
        }
        self.clone()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wide = self.0.iter().any(|&s| s > 9);
        for (k, s) in self.0.iter().enumerate() {
            if wide && k > 0 {
                write!(f, ".")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

fn parse_symbols(s: &str) -> Result<Vec<u8>, DynamicsError> {
    let err = || DynamicsError::Parse(s.to_string());
    if s.contains('.') {
        s.split('.').map(|t| t.parse::<u8>().map_err(|_| err())).collect()
    } else {
        s.chars()
            .map(|c| c.to_digit(10).map(|v| v as u8).ok_or_else(err))
            .collect()
    }
}

impl FromStr for Word {
    type Err = DynamicsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Word(parse_symbols(s.trim())?))
    }
}

/// Eventually periodic infinite word `preperiod`·(`period`)^inf, stored in
/// canonical form: primitive period and shortest preperiod.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct TailPeriodicWord {
    preperiod: Word,
    period: Word,
}

impl TailPeriodicWord {
    pub fn new(preperiod: Word, period: Word) -> Result<Self, DynamicsError> {
        if period.is_empty() {
            return Err(DynamicsError::EmptyPeriod);
        }
        let mut pre = preperiod.0;
        let mut per = period.primitive_root().0;
        while let (Some(&a), Some(&b)) = (pre.last(), per.last()) {
            if a != b {
                break;
            }
            pre.pop();
            per.rotate_right(1);
        }
        Ok(TailPeriodicWord { preperiod: Word(pre), period: Word(per) })
    }

    pub fn periodic(period: Word) -> Result<Self, DynamicsError> {
        Self::new(Word::empty(), period)
    }

    pub fn preperiod(&self) -> &Word {
        &self.preperiod
    }

    pub fn period(&self) -> &Word {
        &self.period
    }

    pub fn is_purely_periodic(&self) -> bool {
        self.preperiod.is_empty()
    }

    pub fn symbol(&self, n: usize) -> u8 {
        let m = self.preperiod.len();
        if n < m {
            self.preperiod.0[n]
        } else {
            self.period.0[(n - m) % self.period.len()]
        }
    }

    /// The first k symbols.
    pub fn prefix(&self, k: usize) -> Word {
        Word((0..k).map(|n| self.symbol(n)).collect())
    }

    /// sigma(w).
    pub fn shift(&self) -> TailPeriodicWord {
        if self.preperiod.is_empty() {
            TailPeriodicWord { preperiod: Word::empty(), period: self.period.rotated(1) }
        } else {
            TailPeriodicWord {
                preperiod: Word(self.preperiod.0[1..].to_vec()),
                period: self.period.clone(),
            }
        }
    }

    /// i·w.
    pub fn prepend(&self, i: u8) -> TailPeriodicWord {
        let mut pre = Vec::with_capacity(self.preperiod.len() + 1);
        pre.push(i);
        pre.extend_from_slice(&self.preperiod.0);
        TailPeriodicWord::new(Word(pre), self.period.clone()).expect("period is nonempty")
    }

    /// gamma·w.
    pub fn prepend_word(&self, gamma: &Word) -> TailPeriodicWord {
        let mut pre = gamma.0.clone();
        pre.extend_from_slice(&self.preperiod.0);
        TailPeriodicWord::new(Word(pre), self.period.clone()).expect("period is nonempty")
    }

    /// Index of the first differing symbol, `None` when the words are equal.
    pub fn first_difference(&self, other: &TailPeriodicWord) -> Option<usize> {
        if self == other {
            return None;
        }
        let (p, q) = (self.period.len(), other.period.len());
        let bound = self.preperiod.len().max(other.preperiod.len()) + p * q / gcd(p, q);
        (0..bound).find(|&n| self.symbol(n) != other.symbol(n))
    }

    /// sum_k w_k d^{-k-1}, a real coordinate for plotting.
    pub fn real_coding(&self, d: usize) -> f64 {
        let mut s = 0.0;
        let mut scale = 1.0 / d as f64;
        for n in 0..60 {
            s += self.symbol(n) as f64 * scale;
            scale /= d as f64;
        }
        s
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Ord for TailPeriodicWord {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.first_difference(other) {
            None => Ordering::Equal,
            Some(n) => self.symbol(n).cmp(&other.symbol(n)),
        }
    }
}

impl PartialOrd for TailPeriodicWord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TailPeriodicWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.preperiod, self.period)
    }
}

impl FromStr for TailPeriodicWord {
    type Err = DynamicsError;
    /// Parses `pre(period)`, e.g. `0(0001)` or `(10)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || DynamicsError::Parse(s.to_string());
        let open = s.find('(').ok_or_else(err)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(err)?;
        let pre = parse_symbols(&s[..open])?;
        let per = parse_symbols(inner)?;
        TailPeriodicWord::new(Word(pre), Word(per))
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl From<$t> for String {
            fn from(w: $t) -> String {
                w.to_string()
            }
        }
        impl TryFrom<String> for $t {
            type Error = DynamicsError;
            fn try_from(s: String) -> Result<Self, Self::Error> {
                s.parse()
            }
        }
    };
}

string_serde!(Word);
string_serde!(TailPeriodicWord);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_cylinder_of_01() {
        let sys = BranchSystem::doubling();
        let c = sys.cylinder(&Word::new(vec![0, 1])).unwrap();
        assert!((c.lo - 0.5).abs() < 1e-15 && (c.hi - 0.75).abs() < 1e-15);
        // 1/2 lies on the boundary of [0,1/2] and [1/2,1]
        let it = sys.itinerary(0.5, 3);
        assert_eq!(it.ambiguous_steps, vec![0]);
        assert!(it.alternate.is_some());
    }

    #[test]
    fn itineraries() {
        let sys = BranchSystem::doubling();
        assert_eq!(sys.itinerary(1.0 / 15.0, 4).word, Word::new(vec![0, 0, 0, 1]));
        assert_eq!(sys.itinerary(0.0, 5).word, Word::new(vec![0; 5]));
        let p = sys.periodic_point(&Word::new(vec![0, 0, 0, 1])).unwrap();
        assert!((p - 1.0 / 15.0).abs() < 1e-15);
        let p = sys.periodic_point(&Word::new(vec![1, 0])).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn canonical_words() {
        let a = TailPeriodicWord::new(Word::new(vec![1, 0, 1]), Word::new(vec![0, 1, 0, 1])).unwrap();
        assert_eq!(a.to_string(), "(10)");
        let b: TailPeriodicWord = "0(0001)".parse().unwrap();
        assert_eq!(b.preperiod().len(), 1);
        assert_eq!(b.shift().to_string(), "(0001)");
        assert_eq!(b.shift().prepend(0), b);
        let c: TailPeriodicWord = "(1000)".parse().unwrap();
        assert!(c > b);
        assert_eq!(c.first_difference(&b), Some(0));
    }

    #[test]
    fn bad_systems() {
        assert!(BranchSystem::pw_linear(vec![0.0, 1.0]).is_err());
        assert!(BranchSystem::pw_linear(vec![0.0, 0.7, 0.6, 1.0]).is_err());
        assert!(BranchSystem::analytic(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
        let sys = BranchSystem::analytic(vec![vec![0.0, 0.4, 0.1], vec![0.5, 0.3, 0.2]]).unwrap();
        assert!(sys.lambda() < 1.0);
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            for i in 0..2 {
                assert!((sys.forward_on_branch(i, sys.psi(i, x)) - x).abs() < 1e-12);
            }
        }
    }
}
