//! Staged computation for one (map, potential, numerics) triple and the
//! verdict list over every checked property.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::Numerics;
use crate::dynamics::{BranchSystem, TailPeriodicWord, Word};
use crate::grid::{node, GridFunction};
use crate::kernel::{
    default_probes, dual_potential, increment_constant, involution_kernel, log_h, scaling_function, DeltaKernel,
    Gauge, KernelError, H_beta,
};
use crate::maxergodic::{
    calibrated_v, calibrated_vstar, check_points, deviation_istar, good_condition_check, lyndon_words,
    max_ergodic_average, residual_r, DualSubaction, MaximizingOrbit, SubactionField,
};
use crate::piecewise::{
    assemble_piecewise, fr1_check, random_word, turning_point, twist_check, CandidateSet, Fr1Report, OptimalPairMap,
    PiecewiseSubaction, Reconstruction, TurningPoint, TwistReport, BREAK_MERGE_TOL, TIE_TOL,
};
use crate::potential::Potential;
use crate::transfer::{
    conformality_residual, leading_eigendata, spectral_projection_check, zero_temp_scan, BetaScan, EigenData,
    EigenOptions,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Eigen,
    Orbit,
    Subaction,
    Kernel,
    Dual,
    Candidates,
    Reconstruction,
    Pairs,
    Twist,
    Turning,
    Pieces,
    Betascan,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Eigen => "eigen",
            Stage::Orbit => "orbit",
            Stage::Subaction => "subaction",
            Stage::Kernel => "kernel",
            Stage::Dual => "dual",
            Stage::Candidates => "candidates",
            Stage::Reconstruction => "reconstruction",
            Stage::Pairs => "pairs",
            Stage::Twist => "twist",
            Stage::Turning => "turning",
            Stage::Pieces => "pieces",
            Stage::Betascan => "betascan",
        }
    }

    fn deps(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Eigen | Orbit | Kernel => &[],
            Subaction => &[Orbit],
            Dual => &[Orbit, Kernel],
            Candidates => &[Dual],
            Reconstruction => &[Subaction, Candidates],
            Pairs => &[Reconstruction],
            Twist => &[Kernel],
            Turning => &[Pairs],
            Pieces => &[Turning],
            Betascan => &[Subaction],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Serialize)]
#[error("stage {stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

fn fail(stage: Stage, e: impl std::fmt::Display) -> PipelineError {
    PipelineError { stage: stage.name(), message: e.to_string() }
}

/// Deterministic generator for one consumer of randomness.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

mod streams {
    pub const KERNEL_WORDS: u64 = 1;
    pub const TWIST: u64 = 2;
    pub const FR1: u64 = 3;
    pub const LEMMA: u64 = 4;
    pub const LIPSCHITZ: u64 = 5;
    pub const NESTING: u64 = 6;
    pub const ISTAR: u64 = 7;
    pub const INCREMENTS: u64 = 8;
}

#[derive(Default)]
pub struct Stages {
    pub eigen: Option<EigenData>,
    pub orbit: Option<MaximizingOrbit>,
    pub subaction: Option<SubactionField>,
    pub kernel: Option<DeltaKernel>,
    pub dual: Option<DualSubaction>,
    pub candidates: Option<CandidateSet>,
    pub recon: Option<Reconstruction>,
    pub pairs: Option<OptimalPairMap>,
    pub twist: Option<TwistReport>,
    pub turning: Option<TurningPoint>,
    pub pieces: Option<PiecewiseSubaction>,
    pub betascan: Option<BetaScan>,
    /// Eigendata at each beta of the ladder.
    pub beta_eigen: Option<Vec<EigenData>>,
}

pub struct Pipeline {
    pub sys: BranchSystem,
    pub pot: Potential,
    pub num: Numerics,
    pub seed: u64,
    pub st: Stages,
    /// Wall-clock seconds per stage, in completion order.
    pub timings: Vec<(String, f64)>,
    /// Stages that do not apply to this problem, with the reason.
    pub not_applicable: BTreeMap<Stage, String>,
}

impl Pipeline {
    pub fn new(sys: BranchSystem, pot: Potential, num: Numerics, seed: u64) -> Self {
        Pipeline { sys, pot, num, seed, st: Stages::default(), timings: vec![], not_applicable: BTreeMap::new() }
    }

    pub fn eigen_options(&self) -> EigenOptions {
        EigenOptions {
            grid: self.num.grid,
            depth: self.num.eigen_depth,
            tol: self.num.eigen_tol,
            max_iters: self.num.eigen_max_iters,
            log_threshold: self.num.log_threshold,
        }
    }

    fn done(&self, s: Stage) -> bool {
        let st = &self.st;
        match s {
            Stage::Eigen => st.eigen.is_some(),
            Stage::Orbit => st.orbit.is_some(),
            Stage::Subaction => st.subaction.is_some(),
            Stage::Kernel => st.kernel.is_some(),
            Stage::Dual => st.dual.is_some(),
            Stage::Candidates => st.candidates.is_some(),
            Stage::Reconstruction => st.recon.is_some(),
            Stage::Pairs => st.pairs.is_some(),
            Stage::Twist => st.twist.is_some(),
            Stage::Turning => st.turning.is_some(),
            Stage::Pieces => st.pieces.is_some(),
            Stage::Betascan => st.betascan.is_some(),
        }
    }

    /// Computes `s` and its dependencies. Returns false when the stage does
    /// not apply (for instance the turning point with d > 2).
    pub fn ensure(&mut self, s: Stage) -> Result<bool, PipelineError> {
        if self.done(s) {
            return Ok(true);
        }
        if self.not_applicable.contains_key(&s) {
            return Ok(false);
        }
        for &dep in s.deps() {
            if !self.ensure(dep)? {
                self.not_applicable.insert(s, format!("needs stage {}", dep.name()));
                return Ok(false);
            }
        }
        let t = Instant::now();
        let applied = self.compute(s)?;
        if applied {
            self.timings.push((s.name().to_string(), t.elapsed().as_secs_f64()));
        }
        Ok(applied)
    }

    pub fn ensure_all(&mut self, stages: &[Stage]) -> Result<(), PipelineError> {
        for &s in stages {
            self.ensure(s)?;
        }
        Ok(())
    }

    fn compute(&mut self, s: Stage) -> Result<bool, PipelineError> {
        let num = self.num.clone();
        match s {
            Stage::Eigen => {
                let e = leading_eigendata(&self.sys, &self.pot, 1.0, &self.eigen_options()).map_err(|e| fail(s, e))?;
                self.st.eigen = Some(e);
            }
            Stage::Orbit => {
                let o = max_ergodic_average(&self.sys, &self.pot, num.p_max).map_err(|e| fail(s, e))?;
                self.st.orbit = Some(o);
            }
            Stage::Subaction => {
                let m = self.st.orbit.as_ref().unwrap().average;
                let v = calibrated_v(&self.sys, &self.pot, m, num.grid, num.lo_tol, num.lo_max_iters)
                    .map_err(|e| fail(s, e))?;
                self.st.subaction = Some(v);
            }
            Stage::Kernel => {
                self.st.kernel = Some(DeltaKernel::new(&self.sys, &self.pot, num.x_ref, num.kernel_depth));
            }
            Stage::Dual => {
                let k = self.st.kernel.as_ref().unwrap();
                let o = self.st.orbit.as_ref().unwrap();
                let d = calibrated_vstar(k, o, num.dual_depth, num.vstar_tol, num.vstar_max_iters)
                    .map_err(|e| fail(s, e))?;
                self.st.dual = Some(d);
            }
            Stage::Candidates => {
                let c = CandidateSet::build(self.st.dual.as_ref().unwrap(), num.candidate_depth);
                self.st.candidates = Some(c);
            }
            Stage::Reconstruction => {
                let o = self.st.orbit.as_ref().unwrap();
                if o.tie_warning {
                    return Err(fail(
                        s,
                        format!(
                            "maximizing orbit is not isolated (margin {:e}); the sup formula needs a unique maximizer",
                            o.margin
                        ),
                    ));
                }
                let r = Reconstruction::new(
                    self.st.dual.as_ref().unwrap(),
                    o,
                    &self.st.subaction.as_ref().unwrap().v,
                    num.candidate_depth,
                    num.prune_slack,
                );
                self.st.recon = Some(r);
            }
            Stage::Pairs => {
                let p = OptimalPairMap::build(self.st.recon.as_ref().unwrap(), &self.st.subaction.as_ref().unwrap().v)
                    .map_err(|e| fail(s, e))?;
                self.st.pairs = Some(p);
            }
            Stage::Twist => {
                let k = self.st.kernel.as_ref().unwrap();
                let mut rng = rng_for(self.seed, streams::TWIST);
                self.st.twist = Some(twist_check(|w, x| k.w(w, x), self.sys.d(), num.twist_samples, &mut rng));
            }
            Stage::Turning => {
                if self.sys.d() != 2 {
                    self.not_applicable.insert(s, format!("the turning point needs d = 2, got {}", self.sys.d()));
                    return Ok(false);
                }
                let r = self.st.recon.as_ref().unwrap();
                let v = |x: f64| r.select(x).map(|s| s.value).unwrap_or(f64::NAN);
                let t = turning_point(&self.sys, &self.pot, v, num.turning_tol, num.orbit_tol, num.orbit_budget)
                    .map_err(|e| fail(s, e))?;
                if !t.c.is_finite() {
                    return Err(fail(s, "sup formula failed near the turning point"));
                }
                self.st.turning = Some(t);
            }
            Stage::Pieces => {
                let p = assemble_piecewise(
                    self.st.recon.as_ref().unwrap(),
                    self.st.candidates.as_ref().unwrap(),
                    self.st.turning.as_ref().unwrap(),
                    &self.st.subaction.as_ref().unwrap().v,
                )
                .map_err(|e| fail(s, e))?;
                self.st.pieces = Some(p);
            }
            Stage::Betascan => {
                let o = self.st.orbit.as_ref().unwrap();
                let v = &self.st.subaction.as_ref().unwrap().v;
                let opts = self.eigen_options();
                let scan = zero_temp_scan(&self.sys, &self.pot, &num.betas, &opts, Some(v), Some(&o.points))
                    .map_err(|e| fail(s, e))?;
                let eigs = num
                    .betas
                    .par_iter()
                    .map(|&b| leading_eigendata(&self.sys, &self.pot, b, &opts))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| fail(s, e))?;
                self.st.betascan = Some(scan);
                self.st.beta_eigen = Some(eigs);
            }
        }
        Ok(true)
    }

    /// Words used by the kernel checks: candidate words when the candidate
    /// set exists, random eventually periodic words otherwise.
    pub fn kernel_words(&self) -> Vec<TailPeriodicWord> {
        let mut rng = rng_for(self.seed, streams::KERNEL_WORDS);
        let n = self.num.kernel_samples;
        match &self.st.candidates {
            Some(c) => (0..n).map(|_| c.entries[rng.gen_range(0..c.len())].word.clone()).collect(),
            None => (0..n).map(|_| random_word(&mut rng, self.sys.d(), 8, 4)).collect(),
        }
    }

    /// Named scalar summaries of every computed stage.
    pub fn residual_table(&self) -> Vec<Residual> {
        let mut t = vec![];
        let mut put = |stage: &str, name: &str, value: f64| {
            t.push(Residual { stage: stage.into(), name: name.into(), value })
        };
        let st = &self.st;
        if let Some(e) = &st.eigen {
            put("eigen", "alpha", e.alpha);
            put("eigen", "tree_alpha_gap", (e.log_alpha - e.log_alpha_tree).abs());
            put("eigen", "eigen_residual", e.eigen_residual);
            put("eigen", "iterations", e.iterations as f64);
        }
        if let Some(o) = &st.orbit {
            put("orbit", "m", o.average);
            put("orbit", "margin", o.margin);
            put("orbit", "period", o.period() as f64);
        }
        if let Some(v) = &st.subaction {
            put("subaction", "calibration_residual", v.residual);
            put("subaction", "iterations", v.iterations as f64);
            put("subaction", "last_change", v.last_change);
        }
        if let Some(d) = &st.dual {
            put("dual", "m_star", d.m_star);
            put("dual", "tree_residual", d.tree_residual);
            put("dual", "iterations", d.iterations as f64);
        }
        if let Some(c) = &st.candidates {
            put("candidates", "count", c.len() as f64);
        }
        if let Some(p) = &st.pairs {
            put("pairs", "reconstruction_error", p.reconstruction_error);
            put("pairs", "uniqueness_fraction", p.uniqueness_fraction);
            put("pairs", "gamma", p.gamma);
        }
        if let Some(tw) = &st.twist {
            put("twist", "min_margin", tw.min_margin);
            put("twist", "violations", tw.violation_count as f64);
        }
        if let Some(tp) = &st.turning {
            put("turning", "c", tp.c);
        }
        if let Some(pw) = &st.pieces {
            put("pieces", "count", pw.pieces.len() as f64);
            put("pieces", "continuity_residual", pw.continuity_residual);
            put("pieces", "calibration_residual", pw.calibration_residual);
        }
        if let Some(b) = &st.betascan {
            for p in &b.points {
                put("betascan", &format!("log_alpha_over_beta@{}", p.beta), p.log_alpha_over_beta);
                if let Some(s) = p.sup_dist_to_v {
                    put("betascan", &format!("sup_dist_to_v@{}", p.beta), s);
                }
            }
        }
        t
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Residual {
    pub stage: String,
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skip,
    /// Reported without a pass/fail decision.
    Info,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub id: String,
    pub status: Status,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Verdict {
    fn new(id: &str, status: Status, value: Option<f64>, threshold: Option<f64>, detail: String) -> Self {
        Verdict { id: id.into(), status, value, threshold, detail }
    }

    /// PASS iff value < threshold.
    pub fn below(id: &str, value: f64, threshold: f64, detail: String) -> Self {
        let st = if value < threshold { Status::Pass } else { Status::Fail };
        Self::new(id, st, Some(value), Some(threshold), detail)
    }

    /// PASS iff value >= threshold.
    pub fn at_least(id: &str, value: f64, threshold: f64, detail: String) -> Self {
        let st = if value >= threshold { Status::Pass } else { Status::Fail };
        Self::new(id, st, Some(value), Some(threshold), detail)
    }

    pub fn flag(id: &str, ok: bool, value: Option<f64>, detail: String) -> Self {
        Self::new(id, if ok { Status::Pass } else { Status::Fail }, value, None, detail)
    }

    pub fn info(id: &str, value: Option<f64>, detail: String) -> Self {
        Self::new(id, Status::Info, value, None, detail)
    }

    pub fn skip(id: &str, reason: impl Into<String>) -> Self {
        Self::new(id, Status::Skip, None, None, reason.into())
    }
}

/// Properties every report carries a verdict for.
pub const INVARIANTS: &[&str] = &[
    "dynamics.branch_inversion",
    "dynamics.cylinder_nesting",
    "dynamics.coding_round_trip",
    "dynamics.skew_periodicity",
    "transfer.eigen_residual",
    "transfer.conformality",
    "transfer.probability",
    "transfer.projection_decay",
    "transfer.beta_concentration",
    "kernel.involution_identity",
    "kernel.estimator_agreement",
    "kernel.uniform_bounds",
    "kernel.eq12_reconstruction",
    "kernel.joint_lipschitz",
    "kernel.increment_uniformity",
    "maxergodic.primal_calibration",
    "maxergodic.dual_calibration",
    "maxergodic.residuals_nonnegative",
    "maxergodic.istar_additivity",
    "maxergodic.zero_temperature",
    "maxergodic.m_duality",
    "piecewise.reconstruction",
    "piecewise.monotone_selection",
    "piecewise.level_sets",
    "piecewise.optimal_change_witness",
    "piecewise.fr1",
    "piecewise.b_monotone",
    "piecewise.one_sided_continuity",
    "cli.determinism",
    "cli.report_completeness",
];

/// Further checks on operation contracts and the Example 2 reproduction.
pub const EXTRA_CHECKS: &[&str] = &[
    "transfer.normalization",
    "kernel.dual_ratio",
    "kernel.gstar_scaling",
    "kernel.scaling_contraction",
    "kernel.beta_family",
    "maxergodic.orbit_search",
    "maxergodic.good_condition",
    "piecewise.twist",
    "piecewise.turning_point",
    "piecewise.b_nonnegative",
    "piecewise.continuity",
    "piecewise.assembled_calibration",
    "piecewise.finite_pieces",
    "example2.twist_ladder",
    "example2.orbit",
    "example2.dual_words",
    "example2.finite_pieces",
    "example2.breakpoints_in_orbit",
    "example2.delta_table",
    "example2.case1",
];

pub fn all_check_ids() -> impl Iterator<Item = &'static str> {
    INVARIANTS.iter().chain(EXTRA_CHECKS).copied()
}

fn short_err(e: &KernelError) -> String {
    e.to_string()
}

impl Pipeline {
    pub fn dynamics_verdicts(&self) -> Vec<Verdict> {
        let sys = &self.sys;
        let d = sys.d();
        let mut out = vec![];

        let mut worst = 0.0f64;
        for i in 0..d {
            for k in 0..1000 {
                let x = (k as f64 + 0.5) / 1000.0;
                worst = worst.max((sys.forward(sys.psi(i, x)) - x).abs());
            }
        }
        out.push(Verdict::below(
            "dynamics.branch_inversion",
            worst,
            1e-12,
            format!("max |f(psi_i x) - x| over 1000 points per branch, d = {d}"),
        ));

        let mut rng = rng_for(self.seed, streams::NESTING);
        let lambda = sys.lambda();
        let (mut nest_fail, mut len_fail) = (0usize, 0usize);
        let mut worst_ratio = 0.0f64;
        for _ in 0..100 {
            let s: Vec<u8> = (0..20).map(|_| rng.gen_range(0..d) as u8).collect();
            let mut prev = sys.cylinder(&Word::new(vec![s[19]])).expect("valid word");
            for k in 2..=20 {
                let c = sys.cylinder(&Word::new(s[20 - k..].to_vec())).expect("valid word");
                if c.lo < prev.lo - 1e-15 || c.hi > prev.hi + 1e-15 {
                    nest_fail += 1;
                }
                let bound = lambda.powi(k as i32);
                worst_ratio = worst_ratio.max((c.hi - c.lo) / bound);
                if c.hi - c.lo > bound * (1.0 + 1e-12) {
                    len_fail += 1;
                }
                prev = c;
            }
        }
        out.push(Verdict::flag(
            "dynamics.cylinder_nesting",
            nest_fail == 0 && len_fail == 0,
            Some(worst_ratio),
            format!(
                "100 words to depth 20: I_(i.gamma) inside I_gamma failed {nest_fail} times, \
                 length above lambda^k {len_fail} times; value is max length / lambda^k"
            ),
        ));

        let plen = if d == 2 { 8 } else { 5 };
        let words = lyndon_words(d, plen);
        let mut bad = 0usize;
        for w in &words {
            match sys.periodic_point(w) {
                Ok(x) => {
                    let it = sys.itinerary(x, w.len());
                    if it.word != *w && it.alternate.as_ref() != Some(w) {
                        bad += 1;
                    }
                }
                Err(_) => bad += 1,
            }
        }
        out.push(Verdict::flag(
            "dynamics.coding_round_trip",
            bad == 0,
            Some(bad as f64),
            format!("{} primitive words up to length {plen}; value is the failure count", words.len()),
        ));

        let mut worst = 0.0f64;
        let mut word_fail = 0usize;
        for w in &words {
            let tw = TailPeriodicWord::periodic(w.clone()).expect("nonempty");
            let Ok(x) = sys.periodic_point(&w.reversed()) else {
                word_fail += 1;
                continue;
            };
            let (mut u, mut y) = (tw.clone(), x);
            for _ in 0..w.len() {
                (u, y) = sys.skew_inverse(&u, y);
            }
            if u != tw {
                word_fail += 1;
            }
            worst = worst.max((y - x).abs());
        }
        out.push(Verdict::flag(
            "dynamics.skew_periodicity",
            word_fail == 0 && worst < 1e-10,
            Some(worst),
            format!("{} periodic pairs, max |x_p - x| (threshold 1e-10), word mismatches {word_fail}", words.len()),
        ));
        out
    }

    pub fn transfer_verdicts(&self) -> Vec<Verdict> {
        let ids = [
            "transfer.eigen_residual",
            "transfer.conformality",
            "transfer.probability",
            "transfer.projection_decay",
            "transfer.normalization",
        ];
        let Some(e) = &self.st.eigen else {
            return ids.iter().map(|id| Verdict::skip(id, "eigen stage not run")).collect();
        };
        let mut out = vec![];
        let thr = 100.0 * self.num.eigen_tol;
        out.push(Verdict::below(
            "transfer.eigen_residual",
            e.eigen_residual,
            thr,
            format!("sup |P v - alpha v| / (alpha sup v) after {} iterations", e.iterations),
        ));
        let depth = e.depth().saturating_sub(2).max(1);
        out.push(Verdict::below(
            "transfer.conformality",
            conformality_residual(&self.sys, &self.pot, e, depth),
            1e-6,
            format!("all cylinders to depth {depth}, K = {}", e.depth()),
        ));
        let prob = (1..=e.depth())
            .map(|k| (e.mu.level(k).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        out.push(Verdict::below(
            "transfer.probability",
            prob,
            1e-10,
            format!("max over depths 1..={} of |sum of weights - 1|", e.depth()),
        ));
        let z = GridFunction::from_fn(self.num.grid, |x| x).expect("grid");
        let steps = self.num.projection_steps.max(5);
        match spectral_projection_check(&self.sys, &self.pot, e, &z, steps) {
            Ok(rep) => {
                let hi = steps.min(12);
                let decay = rep.min_decay(4, hi);
                let last = *rep.residuals.last().unwrap();
                let ok = decay >= 1.5 || last < 1e-12;
                out.push(Verdict::new(
                    "transfer.projection_decay",
                    if ok { Status::Pass } else { Status::Fail },
                    Some(decay),
                    Some(1.5),
                    format!("min ratio r_k / r_(k+1) for k in 4..{hi} with z(x) = x; r_{steps} = {last:e}"),
                ));
            }
            Err(err) => out.push(Verdict::flag("transfer.projection_decay", false, None, err.to_string())),
        }
        let norm = (e.integrate(|x| e.v.eval(x)) - 1.0).abs();
        let vmin = e.v.min();
        out.push(Verdict::flag(
            "transfer.normalization",
            norm < 1e-10 && vmin > 0.0,
            Some(norm),
            format!("|int v dmu - 1| (threshold 1e-10), min v = {vmin:e}"),
        ));
        out
    }

    pub fn beta_concentration_verdict(&self) -> Verdict {
        let id = "transfer.beta_concentration";
        let Some(b) = &self.st.betascan else { return Verdict::skip(id, "betascan stage not run") };
        let masses: Vec<String> = b
            .points
            .iter()
            .map(|p| format!("{}:{:.6}", p.beta, p.orbit_mass.unwrap_or(f64::NAN)))
            .collect();
        let v = b.concentration_violations();
        Verdict::info(
            id,
            b.points.last().and_then(|p| p.orbit_mass),
            format!("orbit cylinder mass by beta [{}]; {} decreases", masses.join(", "), v.len()),
        )
    }

    pub fn kernel_verdicts(&self) -> Vec<Verdict> {
        let ids = [
            "kernel.involution_identity",
            "kernel.estimator_agreement",
            "kernel.uniform_bounds",
            "kernel.eq12_reconstruction",
            "kernel.dual_ratio",
            "kernel.gstar_scaling",
            "kernel.scaling_contraction",
        ];
        let (Some(e), Some(_)) = (&self.st.eigen, &self.st.kernel) else {
            return ids.iter().map(|id| Verdict::skip(id, "needs the eigen and kernel stages")).collect();
        };
        let (sys, pot) = (&self.sys, &self.pot);
        let num = &self.num;
        let words = self.kernel_words();
        let probes = default_probes();
        let source = if self.st.candidates.is_some() { "candidate" } else { "random eventually periodic" };
        let mut out = vec![];

        let spreads: Vec<Result<f64, String>> = words
            .par_iter()
            .map(|w| {
                match dual_potential(sys, pot, None, w, num.kernel_depth, &probes, Gauge::Delta { x_ref: num.x_ref }) {
                    Ok(v) => Ok(v.x_independence_residual),
                    Err(KernelError::SpreadTooLarge { spread, .. }) => Ok(spread),
                    Err(err) => Err(short_err(&err)),
                }
            })
            .collect();
        match spreads.into_iter().collect::<Result<Vec<f64>, String>>() {
            Ok(s) => out.push(Verdict::below(
                "kernel.involution_identity",
                s.iter().copied().fold(0.0, f64::max),
                1e-5,
                format!("{} {source} words x {} probes, depth {}", words.len(), probes.len(), num.kernel_depth),
            )),
            Err(err) => out.push(Verdict::flag("kernel.involution_identity", false, None, err)),
        }

        let pairs: Vec<Result<f64, String>> = words
            .par_iter()
            .flat_map_iter(|w| probes.iter().map(move |&x| (w, x)))
            .map(|(w, x)| {
                match involution_kernel(sys, pot, e, w, x, num.kernel_depth, num.x_ref) {
                    Ok(p) => Ok(p.cross_residual / p.combined_bound),
                    Err(KernelError::Inconsistent { residual, bound }) => Ok(residual / bound),
                    Err(err) => Err(short_err(&err)),
                }
            })
            .collect();
        match pairs.into_iter().collect::<Result<Vec<f64>, String>>() {
            Ok(r) => out.push(Verdict::flag(
                "kernel.estimator_agreement",
                r.iter().all(|&q| q <= 1.0),
                Some(r.iter().copied().fold(0.0, f64::max)),
                format!("max |W_h difference - W_delta| / combined bound over {} pairs; h at depth {}", r.len(), e.depth()),
            )),
            Err(err) => out.push(Verdict::flag("kernel.estimator_agreement", false, None, err)),
        }

        let logs: Vec<f64> = words
            .par_iter()
            .flat_map_iter(|w| {
                let pr = &probes;
                (1..=e.depth()).flat_map(move |k| {
                    pr.iter().map(move |&x| log_h(sys, pot, e, &w.prefix(k), x).unwrap_or(f64::NAN))
                })
            })
            .collect();
        let finite = logs.iter().all(|l| l.is_finite());
        let kmax = logs.iter().map(|l| l.abs()).fold(0.0, f64::max).exp();
        out.push(Verdict::flag(
            "kernel.uniform_bounds",
            finite,
            Some(kmax),
            format!("1/K <= h(w_k, x) <= K with K = exp(max |log h|) over {} evaluations, k = 1..={}", logs.len(), e.depth()),
        ));

        let stride = (num.grid / 64).max(1);
        let ks: Vec<usize> = (1..=e.depth()).collect();
        let eq12: Result<Vec<f64>, KernelError> =
            ks.par_iter().map(|&k| crate::kernel::eq12_residual(sys, pot, e, k, stride)).collect();
        match eq12 {
            Ok(r) => {
                let (first, last) = (r[0], *r.last().unwrap());
                let ok = last <= 1e-3 * first || last < 1e-7;
                let trace: Vec<String> = r.iter().map(|x| format!("{x:.2e}")).collect();
                out.push(Verdict::flag(
                    "kernel.eq12_reconstruction",
                    ok,
                    Some(last),
                    format!("sup |v - sum h_gamma mu(C_gamma)| for k = 1..={}: [{}]; requires r_K <= 1e-3 r_1 or r_K < 1e-7", e.depth(), trace.join(", ")),
                ));
            }
            Err(err) => out.push(Verdict::flag("kernel.eq12_reconstruction", false, None, short_err(&err))),
        }

        let mut rng = rng_for(self.seed, streams::LEMMA);
        let draws: Vec<(TailPeriodicWord, f64)> =
            (0..num.lemma_samples).map(|_| (random_word(&mut rng, sys.d(), 8, 4), rng.gen::<f64>())).collect();
        let l41: Result<Vec<f64>, KernelError> = draws
            .par_iter()
            .map(|(w, x)| dual_potential(sys, pot, Some(e), w, e.depth(), &[*x], Gauge::Eigen).map(|v| v.ratio_residual))
            .collect();
        match l41 {
            Ok(r) => out.push(Verdict::below(
                "kernel.dual_ratio",
                r.iter().copied().fold(0.0, f64::max),
                1e-5,
                format!("|g*(w)/g(psi_(w_0) x) - h(sigma w, psi_(w_0) x)/h(w, x)| on {} samples", r.len()),
            )),
            Err(err) => out.push(Verdict::flag("kernel.dual_ratio", false, None, short_err(&err))),
        }

        let gs: Result<Vec<(f64, f64)>, KernelError> = draws
            .par_iter()
            .take(50)
            .map(|(w, _)| {
                let dp = dual_potential(sys, pot, Some(e), w, e.depth(), &probes, Gauge::Eigen)?;
                let s = scaling_function(sys, e, w, e.depth())?;
                let diff = (dp.g_star - e.alpha * s.value).abs();
                Ok((diff, 10.0 * dp.g_star * dp.error_bound + 1e-12))
            })
            .collect();
        match gs {
            Ok(r) => out.push(Verdict::flag(
                "kernel.gstar_scaling",
                r.iter().all(|(d, b)| d <= b),
                Some(r.iter().map(|p| p.0).fold(0.0, f64::max)),
                format!("max |g*(w) - alpha s(w)| over {} words, each within ten times its bound", r.len()),
            )),
            Err(err) => out.push(Verdict::flag("kernel.gstar_scaling", false, None, short_err(&err))),
        }

        let lambda = sys.lambda();
        let half = e.depth() / 2;
        let mut c_lo = 0.0f64;
        let mut c_hi = 0.0f64;
        for (w, _) in draws.iter().take(50) {
            let Ok(s) = scaling_function(sys, e, w, e.depth()) else { continue };
            for k in 1..s.ratios.len() {
                let c = (s.ratios[k] / s.ratios[k - 1] - 1.0).abs() / lambda.powi(k as i32);
                if k <= half {
                    c_lo = c_lo.max(c);
                } else {
                    c_hi = c_hi.max(c);
                }
            }
        }
        out.push(Verdict::flag(
            "kernel.scaling_contraction",
            c_hi.is_finite() && c_hi <= 10.0 * c_lo + 1e-9,
            Some(c_lo.max(c_hi)),
            format!("C in |r_(k+1)/r_k - 1| <= C lambda^k: {c_lo:.3e} for k <= {half}, {c_hi:.3e} beyond"),
        ));
        out
    }

    /// D_beta in |H_(beta,k+1) - H_(beta,k)| <= D lambda^k per ladder beta.
    pub fn increment_constants(&self) -> Option<Vec<(f64, f64)>> {
        let eigs = self.st.beta_eigen.as_ref()?;
        let mut rng = rng_for(self.seed, streams::INCREMENTS);
        let samples: Vec<(TailPeriodicWord, f64)> =
            (0..50).map(|_| (random_word(&mut rng, self.sys.d(), 8, 4), rng.gen::<f64>())).collect();
        eigs.iter()
            .map(|e| increment_constant(&self.sys, &self.pot, e, &samples).ok().map(|d| (e.beta, d)))
            .collect()
    }

    /// Lipschitz constants C_beta of H_beta on pairs sharing a prefix.
    pub fn joint_lipschitz_constants(&self) -> Option<Vec<(f64, f64)>> {
        let eigs = self.st.beta_eigen.as_ref()?;
        let e1 = self.st.eigen.as_ref()?;
        let d = self.sys.d();
        let mut rng = rng_for(self.seed, streams::LIPSCHITZ);
        let k = e1.depth();
        let mut pairs = vec![];
        for _ in 0..200 {
            let w = random_word(&mut rng, d, 8, 4);
            let n = rng.gen_range(0..k);
            let mut pre = w.prefix(n).symbols().to_vec();
            pre.push(((w.symbol(n) as usize + rng.gen_range(1..d)) % d) as u8);
            let g = random_word(&mut rng, d, 4, 4).prepend_word(&Word::new(pre));
            let (x, y): (f64, f64) = (rng.gen(), rng.gen());
            pairs.push((w, g, x, y, n));
        }
        std::iter::once(e1)
            .chain(eigs.iter())
            .map(|e| {
                let mut c = 0.0f64;
                for (w, g, x, y, n) in &pairs {
                    let a = H_beta(&self.sys, &self.pot, e, w, *x, k).ok()?;
                    let b = H_beta(&self.sys, &self.pot, e, g, *y, k).ok()?;
                    c = c.max((a - b).abs() / ((x - y).abs() + 0.5f64.powi(*n as i32)));
                }
                Some((e.beta, c))
            })
            .collect()
    }

    pub fn beta_kernel_verdicts(&self) -> Vec<Verdict> {
        let ids = ["kernel.joint_lipschitz", "kernel.increment_uniformity", "kernel.beta_family"];
        if self.st.beta_eigen.is_none() || self.st.eigen.is_none() {
            return ids.iter().map(|id| Verdict::skip(id, "needs the eigen and betascan stages")).collect();
        }
        let mut out = vec![];
        match self.joint_lipschitz_constants() {
            Some(c) => {
                let hi = c.iter().map(|p| p.1).fold(0.0, f64::max);
                let lo = c.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let list: Vec<String> = c.iter().map(|(b, v)| format!("{b}:{v:.4}")).collect();
                out.push(Verdict::below(
                    "kernel.joint_lipschitz",
                    hi / lo,
                    2.0,
                    format!("C_beta in |H(w,x) - H(g,y)| <= C (|x-y| + 2^-n) by beta [{}]; value max/min, one C = {hi:.4}", list.join(", ")),
                ));
            }
            None => out.push(Verdict::flag("kernel.joint_lipschitz", false, None, "H_beta evaluation failed".into())),
        }
        match self.increment_constants() {
            Some(dv) => {
                let hi = dv.iter().map(|p| p.1).fold(0.0, f64::max);
                let lo = dv.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let list: Vec<String> = dv.iter().map(|(b, v)| format!("{b}:{v:.4}")).collect();
                out.push(Verdict::below(
                    "kernel.increment_uniformity",
                    hi / lo,
                    2.0,
                    format!("fitted D by beta [{}]; value max/min", list.join(", ")),
                ));
            }
            None => out.push(Verdict::flag("kernel.increment_uniformity", false, None, "increment fit failed".into())),
        }
        let eigs = self.st.beta_eigen.as_ref().unwrap();
        let mut rng = rng_for(self.seed, streams::INCREMENTS + 100);
        let k = eigs[0].depth();
        let samples: Vec<(TailPeriodicWord, f64)> =
            (0..50).map(|_| (random_word(&mut rng, self.sys.d(), 8, 4), rng.gen::<f64>())).collect();
        let mut diffs = vec![];
        let mut extrap = 0.0f64;
        for (w, x) in &samples {
            let ladder: Vec<(f64, f64)> = eigs
                .iter()
                .filter_map(|e| H_beta(&self.sys, &self.pot, e, w, *x, k).ok().map(|h| (e.beta, h)))
                .collect();
            for (j, p) in ladder.windows(2).enumerate() {
                if diffs.len() <= j {
                    diffs.push(0.0f64);
                }
                diffs[j] = diffs[j].max((p[1].1 - p[0].1).abs());
            }
            if let Some((_, r)) = crate::kernel::extrapolate_limit(&ladder) {
                extrap = extrap.max(r);
            }
        }
        let trace: Vec<String> = diffs.iter().map(|d| format!("{d:.3e}")).collect();
        out.push(Verdict::info(
            "kernel.beta_family",
            Some(extrap),
            format!("sup |H_(beta_i) - H_(beta_(i+1))| along the ladder [{}]; value is the max extrapolation residual", trace.join(", ")),
        ));
        out
    }

    pub fn maxergodic_verdicts(&self) -> Vec<Verdict> {
        let st = &self.st;
        let mut out = vec![];
        match &st.subaction {
            Some(v) => out.push(Verdict::below(
                "maxergodic.primal_calibration",
                v.residual,
                5e-4,
                format!("grid N = {}, {} iterations, converged {}", v.v.len(), v.iterations, v.converged),
            )),
            None => out.push(Verdict::skip("maxergodic.primal_calibration", "subaction stage not run")),
        }
        match &st.dual {
            Some(d) => out.push(Verdict::below(
                "maxergodic.dual_calibration",
                d.tree_residual,
                1e-3,
                format!("tree depth {}, {} iterations, converged {}", d.depth(), d.iterations, d.converged),
            )),
            None => out.push(Verdict::skip("maxergodic.dual_calibration", "dual stage not run")),
        }
        match (&st.subaction, &st.dual) {
            (Some(v), Some(d)) => {
                let pts = check_points(v.v.len());
                let rmin = pts
                    .par_iter()
                    .map(|&x| residual_r(&self.sys, &self.pot, v.m, |y| v.v.eval(y), x))
                    .reduce(|| f64::INFINITY, f64::min);
                let rsmin = (0..d.cells())
                    .into_par_iter()
                    .map(|c| d.r_star(&d.cell_word(c)))
                    .reduce(|| f64::INFINITY, f64::min);
                out.push(Verdict::flag(
                    "maxergodic.residuals_nonnegative",
                    rmin >= -5e-4 && rsmin >= -1e-3,
                    Some(rmin.min(rsmin)),
                    format!("min R = {rmin:e} (tol 5e-4) on {} points, min R* = {rsmin:e} (tol 1e-3) on {} cells", pts.len(), d.cells()),
                ));
            }
            _ => out.push(Verdict::skip("maxergodic.residuals_nonnegative", "needs the subaction and dual stages")),
        }
        match (&st.dual, &st.candidates) {
            (Some(d), Some(c)) => {
                let mut rng = rng_for(self.seed, streams::ISTAR);
                let pool: Vec<&TailPeriodicWord> =
                    c.entries.iter().filter(|e| e.parent.is_some()).map(|e| &e.word).collect();
                let mut worst = 0.0f64;
                let mut worst_bfs = 0.0f64;
                let mut n = 0;
                if !pool.is_empty() {
                    for _ in 0..100 {
                        let w = pool[rng.gen_range(0..pool.len())];
                        let iw = deviation_istar(d, w, TIE_TOL);
                        let is = deviation_istar(d, &w.shift(), TIE_TOL);
                        worst = worst.max((iw.value - d.r_star(w) - is.value).abs());
                        worst_bfs = worst_bfs.max((iw.value - c.get(w).unwrap().i_star).abs());
                        n += 1;
                    }
                }
                out.push(Verdict::below(
                    "maxergodic.istar_additivity",
                    worst,
                    1e-12,
                    format!("|I*(w) - R*(w) - I*(sigma w)| on {n} candidate words; candidate-set I* agrees to {worst_bfs:e}"),
                ));
            }
            _ => out.push(Verdict::skip("maxergodic.istar_additivity", "needs the candidates stage")),
        }
        match (&st.betascan, &st.orbit) {
            (Some(b), Some(o)) => {
                let d = self.sys.d() as f64;
                let dists: Vec<f64> = b.points.iter().map(|p| p.sup_dist_to_v.unwrap_or(f64::NAN)).collect();
                let decreasing = dists.windows(2).all(|w| w[1] < w[0]);
                let gaps: Vec<(f64, f64)> = b
                    .points
                    .iter()
                    .map(|p| ((p.log_alpha_over_beta - o.average).abs(), 2.0 * d.ln() / p.beta))
                    .collect();
                let gap_ok = gaps.iter().all(|(g, t)| g < t);
                let recon = st.pairs.as_ref().map(|p| p.reconstruction_error);
                let recon_ok = recon.is_none_or(|r| r < 1e-3);
                let dl: Vec<String> = dists.iter().map(|x| format!("{x:.4e}")).collect();
                let gl: Vec<String> = gaps.iter().map(|(g, t)| format!("{g:.3e}<{t:.3e}")).collect();
                out.push(Verdict::flag(
                    "maxergodic.zero_temperature",
                    decreasing && gap_ok && recon_ok,
                    dists.last().copied(),
                    format!(
                        "sup |V - (1/beta) log phi_beta| by beta [{}] strictly decreasing: {decreasing}; \
                         |log alpha/beta - m| vs 2 log d/beta [{}]; reconstruction {}",
                        dl.join(", "),
                        gl.join(", "),
                        recon.map_or("not run".to_string(), |r| format!("{r:e} (tol 1e-3)"))
                    ),
                ));
            }
            _ => out.push(Verdict::skip("maxergodic.zero_temperature", "betascan stage not run")),
        }
        match (&st.orbit, &st.dual) {
            (Some(o), Some(d)) => out.push(Verdict::below(
                "maxergodic.m_duality",
                (o.average - d.m_star).abs(),
                1e-4,
                format!("m = {}, m* = {}", o.average, d.m_star),
            )),
            _ => out.push(Verdict::skip("maxergodic.m_duality", "dual stage not run")),
        }
        match &st.orbit {
            Some(o) => out.push(Verdict::info(
                "maxergodic.orbit_search",
                Some(o.margin),
                format!(
                    "word {} over {} primitive words to length {}; m = {}; tie warning {}",
                    o.period_word, o.enumerated, self.num.p_max, o.average, o.tie_warning
                ),
            )),
            None => out.push(Verdict::skip("maxergodic.orbit_search", "orbit stage not run")),
        }
        match &st.dual {
            Some(d) => {
                let g = good_condition_check(d, TIE_TOL);
                out.push(Verdict::info(
                    "maxergodic.good_condition",
                    Some(g.min),
                    format!("min R* on one-symbol exits from the dual orbit; holds: {}", g.pass),
                ));
            }
            None => out.push(Verdict::skip("maxergodic.good_condition", "dual stage not run")),
        }
        out
    }

    pub fn fr1(&self) -> Option<Fr1Report> {
        let (r, c, pw) = (self.st.recon.as_ref()?, self.st.candidates.as_ref()?, self.st.pieces.as_ref()?);
        let mut rng = rng_for(self.seed, streams::FR1);
        Some(fr1_check(r, c, |x| pw.eval_raw(x), self.num.fr1_samples, &mut rng))
    }

    pub fn piecewise_verdicts(&self) -> Vec<Verdict> {
        let st = &self.st;
        let mut out = vec![];
        let why = |s: Stage| {
            self.not_applicable.get(&s).cloned().unwrap_or_else(|| format!("{} stage not run", s.name()))
        };
        match (&st.pairs, &st.recon) {
            (Some(p), Some(r)) => {
                out.push(Verdict::below(
                    "piecewise.reconstruction",
                    p.reconstruction_error,
                    1e-3,
                    format!("sup |V - V_rec| over {} nodes; uniqueness fraction {}", p.xs.len(), p.uniqueness_fraction),
                ));
                let viol = p.monotone_violations();
                out.push(Verdict::flag(
                    "piecewise.monotone_selection",
                    viol == 0,
                    Some(viol as f64),
                    format!("grid pairs x < x' with u-(x) < u+(x'); {} selected words", p.selected_words().len()),
                ));
                let ls = p.level_sets_connected(r, TIE_TOL);
                let broken: Vec<String> = ls.iter().filter(|l| !l.1).map(|l| l.0.to_string()).collect();
                out.push(Verdict::flag(
                    "piecewise.level_sets",
                    broken.is_empty(),
                    Some(broken.len() as f64),
                    format!("{} selected words; disconnected: [{}]", ls.len(), broken.join(", ")),
                ));
            }
            _ => {
                for id in ["piecewise.reconstruction", "piecewise.monotone_selection", "piecewise.level_sets"] {
                    out.push(Verdict::skip(id, why(Stage::Pairs)));
                }
            }
        }
        match (&st.pieces, &st.turning) {
            (Some(pw), Some(tp)) => {
                let worst = pw.breakpoints.iter().map(|b| b.witness_gap).fold(0.0, f64::max);
                out.push(Verdict::below(
                    "piecewise.optimal_change_witness",
                    worst,
                    BREAK_MERGE_TOL,
                    format!(
                        "for each of {} breakpoints, |f^n(c) - x| with n the first index where the adjacent words differ",
                        pw.breakpoints.len()
                    ),
                ));
                match self.fr1() {
                    Some(fr) => {
                        out.push(Verdict::below(
                            "piecewise.fr1",
                            fr.max_residual,
                            1e-5,
                            format!("|R(psi_w x) - b(w,x) + b(sigma w, psi_w x)| on {} samples", fr.samples),
                        ));
                        out.push(Verdict::at_least(
                            "piecewise.b_monotone",
                            fr.min_increment,
                            -TIE_TOL,
                            format!("min of b(w,x) - b(T^-1(w,x)) on {} samples", fr.samples),
                        ));
                        let r = st.recon.as_ref().unwrap();
                        let p = st.pairs.as_ref().unwrap();
                        let grid_min = p
                            .selections
                            .par_iter()
                            .map(|s| {
                                let v = pw.eval_raw(s.x);
                                s.words
                                    .iter()
                                    .map(|(w, _)| v - r.objective(w, s.x).unwrap_or(f64::NEG_INFINITY))
                                    .fold(f64::INFINITY, f64::min)
                            })
                            .reduce(|| f64::INFINITY, f64::min);
                        out.push(Verdict::at_least(
                            "piecewise.b_nonnegative",
                            fr.min_b.min(grid_min),
                            -TIE_TOL,
                            format!("min b over {} random pairs ({:e}) and the optimal pairs at every node ({grid_min:e})", fr.samples, fr.min_b),
                        ));
                    }
                    None => {
                        for id in ["piecewise.fr1", "piecewise.b_monotone", "piecewise.b_nonnegative"] {
                            out.push(Verdict::skip(id, "fr1 inputs missing"));
                        }
                    }
                }
                let bad = pw.breakpoints.iter().filter(|b| !b.one_sided_ok).count();
                out.push(Verdict::flag(
                    "piecewise.one_sided_continuity",
                    bad == 0,
                    Some(bad as f64),
                    "at each breakpoint u+ is the left word and u- the right word".into(),
                ));
                let dc = {
                    let r = st.recon.as_ref().unwrap();
                    let v = |x: f64| r.select(x).map(|s| s.value).unwrap_or(f64::NAN);
                    let (s0, s1) = (self.sys.psi(0, tp.c), self.sys.psi(1, tp.c));
                    (v(s1) + self.pot.pullback(1, tp.c) - v(s0) - self.pot.pullback(0, tp.c)).abs()
                };
                let detail = format!(
                    "c = {}, |D(c)| = {dc:e}, roots {}, orbit {}",
                    tp.c,
                    tp.roots.len(),
                    tp.landing.map_or("aperiodic within budget".to_string(), |(n, m)| format!("lands at ({n}, {m})"))
                );
                if tp.degenerate.is_some() || tp.multiplicity_warning {
                    out.push(Verdict::info(
                        "piecewise.turning_point",
                        Some(tp.c),
                        format!("{detail}; {}", tp.degenerate.clone().unwrap_or_else(|| "several roots".into())),
                    ));
                } else {
                    out.push(Verdict::below("piecewise.turning_point", dc, 1e-8, detail));
                }
                out.push(Verdict::below(
                    "piecewise.continuity",
                    pw.continuity_residual,
                    1e-6,
                    format!("max jump over {} breakpoints", pw.breakpoints.len()),
                ));
                out.push(Verdict::below(
                    "piecewise.assembled_calibration",
                    pw.calibration_residual,
                    5e-4,
                    "calibration residual of the assembled V".into(),
                ));
                let finite = !pw.infinite_domains_expected;
                out.push(Verdict::flag(
                    "piecewise.finite_pieces",
                    finite,
                    Some(pw.pieces.len() as f64),
                    format!(
                        "{} pieces from {} candidate breakpoints; orbit of c {}",
                        pw.pieces.len(),
                        pw.candidate_breakpoints,
                        if pw.orbit_periodic { "eventually periodic" } else { "aperiodic within budget" }
                    ),
                ));
            }
            _ => {
                for id in [
                    "piecewise.optimal_change_witness",
                    "piecewise.fr1",
                    "piecewise.b_monotone",
                    "piecewise.b_nonnegative",
                    "piecewise.one_sided_continuity",
                    "piecewise.turning_point",
                    "piecewise.continuity",
                    "piecewise.assembled_calibration",
                    "piecewise.finite_pieces",
                ] {
                    out.push(Verdict::skip(id, why(Stage::Pieces)));
                }
            }
        }
        match &st.twist {
            Some(t) => out.push(Verdict::info(
                "piecewise.twist",
                Some(t.min_margin),
                format!("{} quadruples, {} violations, mean margin {:e}; twist holds: {}", t.samples, t.violation_count, t.mean_margin, t.pass),
            )),
            None => out.push(Verdict::skip("piecewise.twist", "twist stage not run")),
        }
        out
    }

    pub fn verdicts(&self) -> Vec<Verdict> {
        let mut v = self.dynamics_verdicts();
        v.extend(self.transfer_verdicts());
        v.push(self.beta_concentration_verdict());
        v.extend(self.kernel_verdicts());
        v.extend(self.beta_kernel_verdicts());
        v.extend(self.maxergodic_verdicts());
        v.extend(self.piecewise_verdicts());
        v
    }
}

/// Puts the verdicts in the order of `all_check_ids`, fills the ones nobody
/// produced with SKIP, and appends the completeness check.
pub fn finalize_verdicts(mut produced: Vec<Verdict>) -> Vec<Verdict> {
    produced.push(Verdict::skip(
        "cli.determinism",
        "compared across two processes by the test suite; a single run cannot witness it",
    ));
    let mut out = vec![];
    let mut dupes = vec![];
    let mut unknown = vec![];
    for id in all_check_ids().filter(|id| *id != "cli.report_completeness") {
        let mut hits: Vec<Verdict> = vec![];
        produced.retain(|v| {
            if v.id == id {
                hits.push(v.clone());
                false
            } else {
                true
            }
        });
        if hits.len() > 1 {
            dupes.push(id.to_string());
        }
        out.push(hits.into_iter().next().unwrap_or_else(|| Verdict::skip(id, "not evaluated by this command")));
    }
    unknown.extend(produced.iter().map(|v| v.id.clone()));
    let ok = dupes.is_empty() && unknown.is_empty();
    out.push(Verdict::flag(
        "cli.report_completeness",
        ok,
        Some(out.len() as f64 + 1.0),
        format!("{} checks, each once; duplicates [{}], unlisted [{}]", out.len() + 1, dupes.join(", "), unknown.join(", ")),
    ));
    let order: Vec<&str> = all_check_ids().collect();
    out.sort_by_key(|v| order.iter().position(|id| *id == v.id).unwrap_or(usize::MAX));
    out
}

/// Grid nodes of an N-point grid.
pub fn nodes(n: usize) -> Vec<f64> {
    (0..n).map(|j| node(j, n)).collect()
}
