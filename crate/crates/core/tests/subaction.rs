use ergotrans::config::Numerics;
use ergotrans::dynamics::{BranchSystem, TailPeriodicWord, Word};
use ergotrans::maxergodic::{calibrated_v, deviation_istar, max_ergodic_average, residual_r};
use ergotrans::piecewise::{b_value, TIE_TOL};
use ergotrans::pipeline::{Pipeline, Stage};
use ergotrans::potential::{Potential, PotentialSpec};
use proptest::prelude::*;
use std::sync::OnceLock;

fn quadratic_pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let sys = BranchSystem::doubling();
        let pot = Potential::new(&PotentialSpec::quadratic(), &sys).unwrap();
        let mut p = Pipeline::new(sys, pot, Numerics::default(), 7);
        p.ensure_all(&[Stage::Pieces, Stage::Twist]).unwrap();
        p
    })
}

#[test]
fn quadratic_maximizing_orbit() {
    let p = quadratic_pipeline();
    let o = p.st.orbit.as_ref().unwrap();
    assert!((o.average + 1.0 / 36.0).abs() < 1e-9);
    assert_eq!(o.period_word.to_string(), "01");
    assert!((o.points[0] - 1.0 / 3.0).abs() < 1e-14 && (o.points[1] - 2.0 / 3.0).abs() < 1e-14);
    assert!(!o.tie_warning);
    let d = p.st.dual.as_ref().unwrap();
    assert!((d.m_star - o.average).abs() < 1e-4);
}

#[test]
fn calibrated_subactions_on_both_sides() {
    let p = quadratic_pipeline();
    let v = p.st.subaction.as_ref().unwrap();
    assert!(v.residual < 5e-4);
    let d = p.st.dual.as_ref().unwrap();
    assert!(d.tree_residual < 1e-3);
    // R >= 0 everywhere, equality on the orbit.
    for j in 0..=200 {
        let x = j as f64 / 200.0;
        assert!(residual_r(&p.sys, &p.pot, v.m, |y| v.v.eval(y), x) > -5e-4);
    }
    assert!(residual_r(&p.sys, &p.pot, v.m, |y| v.v.eval(y), 1.0 / 3.0).abs() < 5e-4);
}

#[test]
fn quadratic_has_two_pieces_split_at_one_half() {
    let p = quadratic_pipeline();
    let pw = p.st.pieces.as_ref().unwrap();
    assert_eq!(pw.pieces.len(), 2);
    assert_eq!(pw.breakpoints.len(), 1);
    assert!((pw.breakpoints[0].x - 0.5).abs() < 1e-6);
    assert!(pw.continuity_residual < 1e-6);
    let words: Vec<String> = pw.pieces.iter().map(|q| q.word.to_string()).collect();
    assert_eq!(words, ["(10)", "(01)"]);
    // V = max of the two analytic sheets.
    let pairs = p.st.pairs.as_ref().unwrap();
    for s in &pairs.selections {
        let sheets: Vec<f64> = pw.pieces.iter().map(|q| p.st.kernel.as_ref().unwrap().w(&q.word, s.x) + q.kappa).collect();
        let top = sheets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((pw.eval_raw(s.x) - top).abs() < 1e-9, "x = {}", s.x);
    }
    assert!(pw.calibration_residual < 5e-4);
    assert!(pairs.reconstruction_error < 1e-3);
    assert_eq!(pairs.monotone_violations(), 0);
}

#[test]
fn quadratic_turning_point_is_one_half() {
    let p = quadratic_pipeline();
    let t = p.st.turning.as_ref().unwrap();
    assert!((t.c - 0.5).abs() < 1e-6);
    assert!(t.periodic());
    let tw = p.st.twist.as_ref().unwrap();
    assert!(tw.pass && tw.min_margin > 0.0 && tw.violation_count == 0);
}

#[test]
fn deviation_is_infinite_off_the_orbit() {
    let p = quadratic_pipeline();
    let d = p.st.dual.as_ref().unwrap();
    let on: TailPeriodicWord = "0110(10)".parse().unwrap();
    assert!(deviation_istar(d, &on, TIE_TOL).finite);
    let off: TailPeriodicWord = "(0)".parse().unwrap();
    let dv = deviation_istar(d, &off, TIE_TOL);
    assert!(!dv.finite && dv.divergence_rate.unwrap() > 0.0);
}

#[test]
fn constant_potential_is_flagged_as_a_tie() {
    let sys = BranchSystem::doubling();
    let pot = Potential::new(&PotentialSpec::Constant { value: 0.3 }, &sys).unwrap();
    let o = max_ergodic_average(&sys, &pot, 8).unwrap();
    assert!(o.tie_warning);
    assert!((o.average - 0.3).abs() < 1e-14);
    let v = calibrated_v(&sys, &pot, o.average, 257, 1e-12, 100).unwrap();
    assert!(v.residual < 1e-12);
    let mut p = Pipeline::new(sys, pot, Numerics { grid: 257, ..Numerics::default() }, 0);
    let err = p.ensure(Stage::Reconstruction).unwrap_err();
    assert_eq!(err.stage, "reconstruction");
}

#[test]
fn deterministic_under_fixed_seed() {
    let p = quadratic_pipeline();
    let a = p.kernel_words();
    let b = p.kernel_words();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn b_is_nonnegative_and_cocycle(pre in prop::collection::vec(0u8..2, 0..10), rot in 0usize..2, x in 0.0f64..=1.0) {
        let p = quadratic_pipeline();
        let c = p.st.candidates.as_ref().unwrap();
        let r = p.st.recon.as_ref().unwrap();
        let pw = p.st.pieces.as_ref().unwrap();
        let per = if rot == 0 { vec![0, 1] } else { vec![1, 0] };
        let w = TailPeriodicWord::new(Word::new(pre), Word::new(per)).unwrap();
        prop_assume!(c.get(&w).is_some());
        let v = |y: f64| pw.eval_raw(y);
        let b = b_value(&r.kernel, c, v(x), &w, x).unwrap();
        prop_assert!(b >= -1e-8);
        // b(w,x) - b(sigma w, psi_w0 x) = R(psi_w0 x).
        let (sw, y) = p.sys.skew_inverse(&w, x);
        let b2 = b_value(&r.kernel, c, v(y), &sw, y).unwrap();
        let rr = residual_r(&p.sys, &p.pot, p.st.orbit.as_ref().unwrap().average, v, y);
        prop_assert!((b - b2 - rr).abs() < 1e-5, "{} {} {}", b, b2, rr);
    }

    #[test]
    fn istar_telescopes(pre in prop::collection::vec(0u8..2, 1..12)) {
        let p = quadratic_pipeline();
        let d = p.st.dual.as_ref().unwrap();
        let w = TailPeriodicWord::new(Word::new(pre), Word::new(vec![0, 1])).unwrap();
        prop_assume!(!w.is_purely_periodic());
        let a = deviation_istar(d, &w, TIE_TOL).value;
        let b = deviation_istar(d, &w.shift(), TIE_TOL).value;
        prop_assert!((a - d.r_star(&w) - b).abs() < 1e-12);
        prop_assert!(d.r_star(&w) >= -1e-3);
    }
}
