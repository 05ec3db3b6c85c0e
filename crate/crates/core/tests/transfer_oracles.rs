use ergotrans::dynamics::{BranchSystem, MapSpec, Word};
use ergotrans::grid::GridFunction;
use ergotrans::potential::{Potential, PotentialSpec};
use ergotrans::transfer::{
    conformality_residual, leading_eigendata, spectral_projection_check, zero_temp_scan, EigenOptions,
};
use proptest::prelude::*;

fn opts(grid: usize, depth: usize) -> EigenOptions {
    EigenOptions { grid, depth, ..EigenOptions::default() }
}

fn all_words(d: usize, k: usize) -> Vec<Word> {
    (0..d.pow(k as u32)).map(|i| Word::from_spatial_index(i, k, d)).collect()
}

#[test]
fn locally_constant_has_unit_eigenvalue_and_bernoulli_measure() {
    let sys = BranchSystem::doubling();
    let pot = Potential::new(&PotentialSpec::LocallyConstant { g: vec![0.4, 0.6] }, &sys).unwrap();
    let e = leading_eigendata(&sys, &pot, 1.0, &opts(1025, 8)).unwrap();
    assert!((e.alpha - 1.0).abs() < 1e-10);
    assert!(e.v.values().iter().all(|v| (v - 1.0).abs() < 1e-8));
    for k in 1..=8 {
        for w in all_words(2, k) {
            let p: f64 = w.symbols().iter().map(|&s| if s == 0 { 0.4 } else { 0.6 }).product();
            assert!((e.mu.weight(&w).unwrap() - p).abs() < 1e-8, "{w}");
        }
    }
}

#[test]
fn geometric_potential_gives_lebesgue() {
    // A = -log f' on a piecewise-linear map: alpha = 1 and cylinder weights
    // equal cylinder lengths.
    let sys = BranchSystem::from_spec(&MapSpec::PwLinear { breaks: vec![0.0, 0.3, 1.0] }).unwrap();
    let pot = Potential::new(&PotentialSpec::NegLogDerivative, &sys).unwrap();
    let e = leading_eigendata(&sys, &pot, 1.0, &opts(513, 8)).unwrap();
    assert!((e.alpha - 1.0).abs() < 1e-10);
    for w in all_words(2, 6) {
        let c = sys.cylinder(&w).unwrap();
        assert!((e.mu.weight(&w).unwrap() - c.length()).abs() < 1e-10, "{w}");
    }
}

#[test]
fn quadratic_eigendata_is_conformal() {
    let sys = BranchSystem::doubling();
    let pot = Potential::new(&PotentialSpec::quadratic(), &sys).unwrap();
    let e = leading_eigendata(&sys, &pot, 1.0, &opts(4096, 10)).unwrap();
    assert!(e.eigen_residual < 1e-10);
    assert!(conformality_residual(&sys, &pot, &e, 8) < 1e-6);
    for k in 1..=10 {
        assert!((e.mu.level(k).iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
    assert!((e.integrate(|x| e.v.eval(x)) - 1.0).abs() < 1e-9);
    assert!((e.log_alpha - e.log_alpha_tree).abs() < 1e-6);
}

#[test]
fn normalized_iterates_converge_geometrically() {
    let sys = BranchSystem::doubling();
    let pot = Potential::new(&PotentialSpec::quadratic(), &sys).unwrap();
    let e = leading_eigendata(&sys, &pot, 1.0, &opts(4096, 10)).unwrap();
    let z = GridFunction::from_fn(4096, |x| (3.0 * x).sin() + 2.0).unwrap();
    let rep = spectral_projection_check(&sys, &pot, &e, &z, 12).unwrap();
    assert!(rep.min_decay(4, 12) >= 1.5, "{:?}", rep.residuals);
    assert!(rep.residuals[11] < rep.residuals[0] * 1e-3);
}

#[test]
fn log_domain_agrees_with_direct_iteration() {
    let sys = BranchSystem::doubling();
    let pot = Potential::new(&PotentialSpec::quadratic(), &sys).unwrap();
    let direct = leading_eigendata(&sys, &pot, 20.0, &EigenOptions { log_threshold: 1e9, ..opts(2048, 8) }).unwrap();
    let logd = leading_eigendata(&sys, &pot, 20.0, &EigenOptions { log_threshold: 1.0, ..opts(2048, 8) }).unwrap();
    assert!(!direct.log_domain && logd.log_domain);
    assert!((direct.log_alpha - logd.log_alpha).abs() < 1e-9);
}

#[test]
fn zero_temperature_scan_approaches_m() {
    let sys = BranchSystem::doubling();
    let pot = Potential::new(&PotentialSpec::quadratic(), &sys).unwrap();
    let pts = [1.0 / 3.0, 2.0 / 3.0];
    let scan = zero_temp_scan(&sys, &pot, &[5.0, 10.0, 20.0, 40.0], &opts(2048, 8), None, Some(&pts)).unwrap();
    let m = -1.0 / 36.0;
    for p in &scan.points {
        assert!((p.log_alpha_over_beta - m).abs() < 2.0 * 2f64.ln() / p.beta);
    }
    let gaps: Vec<f64> = scan.points.iter().map(|p| (p.log_alpha_over_beta - m).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn locally_constant_pressure(g in prop::collection::vec(0.05f64..2.0, 2..=3), cut in 0.2f64..0.45) {
        let breaks = if g.len() == 2 { vec![0.0, 2.0 * cut, 1.0] } else { vec![0.0, cut, 2.0 * cut, 1.0] };
        let sys = BranchSystem::pw_linear(breaks).unwrap();
        let pot = Potential::new(&PotentialSpec::LocallyConstant { g: g.clone() }, &sys).unwrap();
        let e = leading_eigendata(&sys, &pot, 1.0, &opts(257, 5)).unwrap();
        let total: f64 = g.iter().sum();
        prop_assert!((e.alpha - total).abs() < 1e-10 * total);
        prop_assert!(e.v.values().iter().all(|v| (v - 1.0).abs() < 1e-8));
        for w in all_words(g.len(), 3) {
            let p: f64 = w.symbols().iter().map(|&s| g[s as usize] / total).product();
            prop_assert!((e.mu.weight(&w).unwrap() - p).abs() < 1e-10);
        }
    }
}
