//! Reproduction of the product potential vanishing on the period-4 orbit of
//! the doubling map, with a small perturbation ladder used when the
//! unperturbed potential fails the twist check.

use serde::Serialize;

use crate::config::{Example2Config, Numerics};
use crate::dynamics::{BranchSystem, TailPeriodicWord, Word};
use crate::kernel::delta_series;
use crate::piecewise::{forward_orbit, Piece, BREAK_MERGE_TOL};
use crate::pipeline::{Pipeline, PipelineError, Stage, Verdict};
use crate::potential::{Potential, PotentialSpec};

#[derive(Clone, Debug, Serialize)]
pub struct LadderMember {
    pub eps: f64,
    pub twist_pass: bool,
    pub min_margin: f64,
    pub violations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaRow {
    pub a: f64,
    pub b: f64,
    pub word: String,
    /// Index k of the orbit point paired with the period of `word`.
    pub orbit_index: usize,
    pub formula: String,
    pub nodes: usize,
    /// Against the Lax-Oleinik V, gauged V(x_0) = 0.
    pub max_err_lo: f64,
    /// Against the assembled piecewise V, same gauge.
    pub max_err_pieces: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Case1 {
    pub assumed_c: f64,
    pub computed_c: f64,
    pub assumed_breakpoints: Vec<f64>,
    pub computed_breakpoints: Vec<f64>,
    pub assumed_pieces: usize,
    pub computed_pieces: usize,
    /// x_0 < c < x_1 for the two leftmost orbit points.
    pub c_between_first_points: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Example2Report {
    pub ladder: Vec<LadderMember>,
    pub chosen_eps: f64,
    pub twist_found: bool,
    pub orbit_word: String,
    pub m: f64,
    pub orbit_points: Vec<f64>,
    pub expected_points: Vec<f64>,
    pub orbit_error: f64,
    pub dual_words: Vec<String>,
    pub expected_dual_words: Vec<String>,
    /// V(x_k) from V(x_0) = 0 and V(f x_k) = V(x_k) + A(x_k) - m.
    pub orbit_values: Vec<f64>,
    /// The same values read off the Lax-Oleinik V.
    pub orbit_values_lo: Vec<f64>,
    pub c: f64,
    pub c_orbit: Vec<f64>,
    pub landing: Option<(usize, usize)>,
    pub pieces: Vec<Piece>,
    pub breakpoints: Vec<f64>,
    pub breakpoints_in_orbit: bool,
    pub finite: bool,
    pub delta_table: Vec<DeltaRow>,
    pub delta_table_error: f64,
    pub case1: Case1,
}

pub fn potential_spec(cfg: &Example2Config, eps: f64) -> PotentialSpec {
    PotentialSpec::OrbitProduct { period: cfg.period.clone(), eps, center: cfg.center }
}

fn is_default_period(p: &[u8]) -> bool {
    p == [0, 0, 0, 1]
}

/// Runs the twist check at eps = 0 and then along the ladder, and returns the
/// full pipeline of the first member that passes (or of the last member).
pub fn run(cfg: &Example2Config, num: &Numerics, seed: u64) -> Result<(Pipeline, Example2Report), PipelineError> {
    let sys = BranchSystem::doubling();
    let err = |e: String| PipelineError { stage: "example2", message: e };
    let mut ladder = vec![];
    let mut chosen = None;
    let epss: Vec<f64> = std::iter::once(0.0).chain(cfg.eps_ladder.iter().copied()).collect();
    for &eps in &epss {
        let pot = Potential::new(&potential_spec(cfg, eps), &sys).map_err(|e| err(e.to_string()))?;
        let mut p = Pipeline::new(sys.clone(), pot, num.clone(), seed);
        p.ensure(Stage::Twist)?;
        let t = p.st.twist.as_ref().unwrap();
        ladder.push(LadderMember { eps, twist_pass: t.pass, min_margin: t.min_margin, violations: t.violation_count });
        if t.pass {
            chosen = Some((p, true));
            break;
        }
        chosen = Some((p, false));
    }
    let (mut p, twist_found) = chosen.expect("ladder is nonempty");
    let chosen_eps = ladder.last().unwrap().eps;
    p.ensure_all(&[Stage::Pieces])?;

    let o = p.st.orbit.as_ref().unwrap();
    let v = &p.st.subaction.as_ref().unwrap().v;
    let pw = p.st.pieces.as_ref().unwrap();
    let tp = p.st.turning.as_ref().unwrap();
    let (pot, m) = (&p.pot, o.average);

    let period = Word::new(cfg.period.clone());
    let expected_points: Vec<f64> = if is_default_period(&cfg.period) {
        vec![1.0 / 15.0, 2.0 / 15.0, 4.0 / 15.0, 8.0 / 15.0]
    } else {
        let mut pts: Vec<f64> = (0..period.len())
            .map(|r| sys.periodic_point(&period.rotated(r)).unwrap_or(f64::NAN))
            .collect();
        pts.sort_by(f64::total_cmp);
        pts
    };
    let orbit_error = if o.points.len() == expected_points.len() {
        let mut got = o.points.clone();
        got.sort_by(f64::total_cmp);
        got.iter().zip(&expected_points).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    // The dual word paired with x_k is the reversed itinerary of x_k.
    let expected_dual: Vec<String> = o
        .points
        .iter()
        .map(|&x| {
            let it = sys.itinerary(x, o.period());
            TailPeriodicWord::periodic(it.word.reversed()).map(|w| w.to_string()).unwrap_or_default()
        })
        .collect();
    let dual_words: Vec<String> = o.dual_words().iter().map(|w| w.to_string()).collect();

    let mut orbit_values = vec![0.0];
    for k in 0..o.period() - 1 {
        orbit_values.push(orbit_values[k] + pot.value(o.points[k]) - m);
    }
    let v0 = v.eval(o.points[0]);
    let orbit_values_lo: Vec<f64> = o.points.iter().map(|&x| v.eval(x) - v0).collect();

    let (c_orbit, landing) = forward_orbit(&sys, tp.c, num.orbit_budget, num.orbit_tol);
    let breakpoints: Vec<f64> = pw.breakpoints.iter().map(|b| b.x).collect();
    let breakpoints_in_orbit = breakpoints
        .iter()
        .all(|&x| c_orbit.iter().any(|&y| (x - y).abs() <= BREAK_MERGE_TOL));

    let pw0 = pw.eval(o.points[0]);
    let n = num.grid;
    let mut delta_table = vec![];
    for piece in &pw.pieces {
        let w = &piece.word;
        let q = TailPeriodicWord::periodic(w.period().clone()).map_err(|e| err(e.to_string()))?;
        let Some(k) = o.dual_words().iter().position(|d| *d == q) else {
            return Err(err(format!("piece word {w} does not end in a dual orbit word")));
        };
        let gamma = w.preperiod().clone();
        let row = |x: f64| {
            let mut y = x;
            let mut s = 0.0;
            for &i in gamma.symbols() {
                s += pot.pullback(i as usize, y) - m;
                y = sys.psi(i as usize, y);
            }
            s + orbit_values[k] + delta_series(&sys, pot, y, o.points[k], &q, num.kernel_depth).value
        };
        let xs: Vec<f64> = (0..n)
            .map(|j| crate::grid::node(j, n))
            .filter(|&x| x >= piece.a && x <= piece.b)
            .collect();
        let (mut e_lo, mut e_pw) = (0.0f64, 0.0f64);
        for &x in &xs {
            let t = row(x);
            e_lo = e_lo.max((v.eval(x) - v0 - t).abs());
            e_pw = e_pw.max((pw.eval(x) - pw0 - t).abs());
        }
        let formula = if gamma.is_empty() {
            format!("V(x) = V(x_{k}) + Delta(x, x_{k}, {q})")
        } else {
            format!(
                "V(x) = sum_(j=1..{}) [A(psi_(w,j) x) - m] + V(x_{k}) + Delta(psi_(w,{}) x, x_{k}, {q})",
                gamma.len(),
                gamma.len()
            )
        };
        delta_table.push(DeltaRow {
            a: piece.a,
            b: piece.b,
            word: w.to_string(),
            orbit_index: k,
            formula,
            nodes: xs.len(),
            max_err_lo: e_lo,
            max_err_pieces: e_pw,
        });
    }
    let delta_table_error = delta_table.iter().map(|r| r.max_err_lo).fold(0.0, f64::max);

    let mut sorted = o.points.clone();
    sorted.sort_by(f64::total_cmp);
    let case1 = Case1 {
        assumed_c: 2.0 / 16.0,
        computed_c: tp.c,
        assumed_breakpoints: vec![2.0 / 16.0, 4.0 / 16.0, 8.0 / 16.0],
        computed_breakpoints: breakpoints.clone(),
        assumed_pieces: 4,
        computed_pieces: pw.pieces.len(),
        c_between_first_points: sorted.len() >= 2 && sorted[0] < tp.c && tp.c < sorted[1],
    };

    let report = Example2Report {
        ladder,
        chosen_eps,
        twist_found,
        orbit_word: o.period_word.to_string(),
        m,
        orbit_points: o.points.clone(),
        expected_points,
        orbit_error,
        dual_words,
        expected_dual_words: expected_dual,
        orbit_values,
        orbit_values_lo,
        c: tp.c,
        c_orbit,
        landing,
        pieces: pw.pieces.clone(),
        breakpoints,
        breakpoints_in_orbit,
        finite: !pw.infinite_domains_expected,
        delta_table,
        delta_table_error,
        case1,
    };
    Ok((p, report))
}

impl Example2Report {
    pub fn verdicts(&self) -> Vec<Verdict> {
        let trail: Vec<String> = self
            .ladder
            .iter()
            .map(|l| format!("eps {}: {} violations, min margin {:.3e}", l.eps, l.violations, l.min_margin))
            .collect();
        let mut v = vec![Verdict::flag(
            "example2.twist_ladder",
            self.twist_found,
            Some(self.chosen_eps),
            format!("value is the eps used; {}", trail.join("; ")),
        )];
        v.push(Verdict::below(
            "example2.orbit",
            self.orbit_error,
            1e-12,
            format!("maximizing orbit {} with m = {}, points {:?}", self.orbit_word, self.m, self.orbit_points),
        ));
        v.push(Verdict::flag(
            "example2.dual_words",
            self.dual_words == self.expected_dual_words,
            None,
            format!("dual words [{}], expected [{}]", self.dual_words.join(", "), self.expected_dual_words.join(", ")),
        ));
        v.push(Verdict::flag(
            "example2.finite_pieces",
            self.finite,
            Some(self.pieces.len() as f64),
            format!(
                "{} pieces; orbit of c {}",
                self.pieces.len(),
                self.landing.map_or("aperiodic within budget".into(), |(n, m)| format!("lands at ({n}, {m})"))
            ),
        ));
        v.push(Verdict::flag(
            "example2.breakpoints_in_orbit",
            self.breakpoints_in_orbit,
            Some(self.breakpoints.len() as f64),
            format!("breakpoints {:?} against the forward orbit of c = {}", self.breakpoints, self.c),
        ));
        let worst_pw = self.delta_table.iter().map(|r| r.max_err_pieces).fold(0.0, f64::max);
        v.push(Verdict::below(
            "example2.delta_table",
            self.delta_table_error,
            1e-3,
            format!("{} rows, gauge V(x_0) = 0; against assembled V {worst_pw:e}", self.delta_table.len()),
        ));
        let c1 = &self.case1;
        v.push(Verdict::info(
            "example2.case1",
            Some(c1.computed_c - c1.assumed_c),
            format!(
                "c = {} vs 2/16, breakpoints {:?} vs {:?}, {} pieces vs {}, x_0 < c < x_1: {}",
                c1.computed_c, c1.computed_breakpoints, c1.assumed_breakpoints, c1.computed_pieces, c1.assumed_pieces,
                c1.c_between_first_points
            ),
        ));
        v
    }
}
