use ergotrans::dynamics::{BranchSystem, TailPeriodicWord, Word};
use ergotrans::kernel::{
    default_probes, delta_series, dual_potential, involution_kernel, log_h, scaling_function, DeltaKernel, Gauge,
};
use ergotrans::potential::{Potential, PotentialSpec};
use ergotrans::transfer::{leading_eigendata, EigenOptions};
use proptest::prelude::*;

fn tail_word() -> impl Strategy<Value = TailPeriodicWord> {
    (prop::collection::vec(0u8..2, 0..8), prop::collection::vec(0u8..2, 1..5))
        .prop_map(|(p, q)| TailPeriodicWord::new(Word::new(p), Word::new(q)).unwrap())
}

fn quadratic() -> (BranchSystem, Potential) {
    let sys = BranchSystem::doubling();
    let pot = Potential::new(&PotentialSpec::quadratic(), &sys).unwrap();
    (sys, pot)
}

#[test]
fn locally_constant_kernel_vanishes() {
    let sys = BranchSystem::doubling();
    let pot = Potential::new(&PotentialSpec::LocallyConstant { g: vec![0.4, 0.6] }, &sys).unwrap();
    let k = DeltaKernel::new(&sys, &pot, 0.5, 40);
    for s in ["(01)", "1(0)", "0110(001)"] {
        let w: TailPeriodicWord = s.parse().unwrap();
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(k.w(&w, x), 0.0);
        }
        let g = if w.symbol(0) == 0 { 0.4f64 } else { 0.6 };
        assert!((k.a_star(&w) - g.ln()).abs() < 1e-15);
    }
}

#[test]
fn geometric_scaling_function_is_branch_length() {
    let sys = BranchSystem::doubling();
    let pot = Potential::new(&PotentialSpec::NegLogDerivative, &sys).unwrap();
    let e = leading_eigendata(&sys, &pot, 1.0, &EigenOptions { grid: 1025, depth: 10, ..Default::default() }).unwrap();
    for s in ["(01)", "1(0)", "0110(001)", "(1)"] {
        let w: TailPeriodicWord = s.parse().unwrap();
        assert!((scaling_function(&sys, &e, &w, 10).unwrap().value - 0.5).abs() < 1e-10);
    }
    let sys = BranchSystem::pw_linear(vec![0.0, 0.3, 1.0]).unwrap();
    let pot = Potential::new(&PotentialSpec::NegLogDerivative, &sys).unwrap();
    let e = leading_eigendata(&sys, &pot, 1.0, &EigenOptions { grid: 1025, depth: 10, ..Default::default() }).unwrap();
    for s in ["(01)", "1(0)", "0110(001)"] {
        let w: TailPeriodicWord = s.parse().unwrap();
        let expect = if w.symbol(0) == 0 { 0.3 } else { 0.7 };
        assert!((scaling_function(&sys, &e, &w, 10).unwrap().value - expect).abs() < 1e-10);
    }
}

#[test]
fn eigen_gauge_needs_eigendata() {
    let (sys, pot) = quadratic();
    let w: TailPeriodicWord = "(01)".parse().unwrap();
    assert!(dual_potential(&sys, &pot, None, &w, 10, &default_probes(), Gauge::Eigen).is_err());
    assert!(dual_potential(&sys, &pot, None, &w, 10, &[], Gauge::Delta { x_ref: 0.5 }).is_err());
}

#[test]
fn log_h_refuses_words_deeper_than_the_tree() {
    let (sys, pot) = quadratic();
    let e = leading_eigendata(&sys, &pot, 1.0, &EigenOptions { grid: 257, depth: 4, ..Default::default() }).unwrap();
    assert!(log_h(&sys, &pot, &e, &Word::new(vec![0; 5]), 0.2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delta_is_a_cocycle(w in tail_word(), x in 0.0f64..=1.0, y in 0.0f64..=1.0, z in 0.0f64..=1.0) {
        let (sys, pot) = quadratic();
        let a = delta_series(&sys, &pot, x, y, &w, 40).value;
        let b = delta_series(&sys, &pot, y, z, &w, 40).value;
        let c = delta_series(&sys, &pot, x, z, &w, 40).value;
        prop_assert!((a + b - c).abs() < 1e-13);
        prop_assert_eq!(delta_series(&sys, &pot, x, x, &w, 40).value, 0.0);
        prop_assert!(a.abs() <= pot.lipschitz() * (x - y).abs() + 1e-15);
    }

    #[test]
    fn delta_truncation_is_within_bound(w in tail_word(), x in 0.0f64..=1.0) {
        let (sys, pot) = quadratic();
        let short = delta_series(&sys, &pot, x, 0.5, &w, 12);
        let long = delta_series(&sys, &pot, x, 0.5, &w, 50);
        prop_assert!((short.value - long.value).abs() <= short.error_bound + short.rounding);
    }

    #[test]
    fn dual_potential_is_independent_of_x(w in tail_word()) {
        let (sys, pot) = quadratic();
        let v = dual_potential(&sys, &pot, None, &w, 40, &default_probes(), Gauge::Delta { x_ref: 0.5 }).unwrap();
        prop_assert!(v.x_independence_residual < 1e-5);
        let k = DeltaKernel::new(&sys, &pot, 0.5, 40);
        prop_assert!((k.a_star(&w) - v.value).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimators_agree_and_lemma_holds(w in tail_word(), x in 0.0f64..=1.0) {
        let (sys, pot) = quadratic();
        let e = leading_eigendata(&sys, &pot, 1.0, &EigenOptions { grid: 2048, depth: 10, ..Default::default() }).unwrap();
        let pair = involution_kernel(&sys, &pot, &e, &w, x, 40, 0.5).unwrap();
        prop_assert!(pair.cross_residual <= pair.combined_bound);
        let d = dual_potential(&sys, &pot, Some(&e), &w, 10, &[x], Gauge::Eigen).unwrap();
        prop_assert!(d.ratio_residual < 1e-5);
        let s = scaling_function(&sys, &e, &w, 10).unwrap();
        prop_assert!((d.g_star - e.alpha * s.value).abs() < 1e-8);
    }
}
