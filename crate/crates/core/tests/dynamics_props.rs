use ergotrans::dynamics::{BranchSystem, TailPeriodicWord, Word};
use ergotrans::grid::{locate, node, GridFunction};
use ergotrans::maxergodic::lyndon_words;
use proptest::prelude::*;

fn systems() -> Vec<BranchSystem> {
    vec![
        BranchSystem::doubling(),
        BranchSystem::pw_linear(vec![0.0, 0.3, 1.0]).unwrap(),
        BranchSystem::pw_linear(vec![0.0, 0.25, 0.6, 1.0]).unwrap(),
        // psi_0(x) = 0.4x + 0.1x^2, psi_1(x) = 0.5 + 0.45x + 0.05x^2
        BranchSystem::analytic(vec![vec![0.0, 0.4, 0.1], vec![0.5, 0.45, 0.05]]).unwrap(),
    ]
}

fn word_strategy(max_len: usize) -> impl Strategy<Value = (usize, Vec<u8>)> {
    (0usize..4).prop_flat_map(move |k| {
        let d = systems()[k].d() as u8;
        (Just(k), prop::collection::vec(0..d, 1..=max_len))
    })
}

#[test]
fn lyndon_counts_match_necklace_formula() {
    // Number of binary Lyndon words of length n: 2, 1, 2, 3, 6, 9, 18, 30.
    let counts = [2usize, 1, 2, 3, 6, 9, 18, 30];
    let words = lyndon_words(2, 8);
    for (n, &c) in counts.iter().enumerate() {
        assert_eq!(words.iter().filter(|w| w.len() == n + 1).count(), c, "length {}", n + 1);
    }
    assert_eq!(lyndon_words(3, 2).len(), 3 + 3);
}

#[test]
fn doubling_cylinders_are_dyadic() {
    let sys = BranchSystem::doubling();
    // The last symbol is applied outermost: I_01 = psi_1(psi_0([0,1])) = [1/2, 3/4].
    let c = sys.cylinder(&"01".parse().unwrap()).unwrap();
    assert_eq!((c.lo, c.hi), (0.5, 0.75));
    let c = sys.cylinder(&"10".parse().unwrap()).unwrap();
    assert_eq!((c.lo, c.hi), (0.25, 0.5));
}

#[test]
fn periodic_points_of_doubling() {
    let sys = BranchSystem::doubling();
    let x = sys.periodic_point(&"01".parse().unwrap()).unwrap();
    assert!((x - 1.0 / 3.0).abs() < 1e-15);
    let x = sys.periodic_point(&"0001".parse().unwrap()).unwrap();
    assert!((x - 1.0 / 15.0).abs() < 1e-15);
    let it = sys.itinerary(1.0 / 15.0, 8);
    assert_eq!(it.word.to_string(), "00010001");
}

#[test]
fn word_parsing_and_canonical_form() {
    let w: TailPeriodicWord = "01(0101)".parse().unwrap();
    assert_eq!(w.to_string(), "(01)");
    let w: TailPeriodicWord = "11(01)".parse().unwrap();
    assert_eq!(w.to_string(), "1(10)");
    let w: TailPeriodicWord = "10(0001)".parse().unwrap();
    assert_eq!(w.to_string(), "10(0001)");
    assert_eq!(w.shift().shift().to_string(), "(0001)");
    assert!("0(".parse::<TailPeriodicWord>().is_err());
    assert!("()".parse::<TailPeriodicWord>().is_err());
}

#[test]
fn bad_maps_are_rejected() {
    assert!(BranchSystem::pw_linear(vec![0.0, 1.0]).is_err());
    assert!(BranchSystem::pw_linear(vec![0.0, 0.6, 0.5, 1.0]).is_err());
    assert!(BranchSystem::analytic(vec![vec![0.0, 0.5], vec![0.6, 0.4]]).is_err());
    assert!(BranchSystem::analytic(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn branch_inversion(k in 0usize..4, i in 0usize..3, x in 0.0f64..=1.0) {
        let sys = &systems()[k];
        let i = i % sys.d();
        let y = sys.psi(i, x);
        let (lo, hi) = sys.partition(i);
        prop_assert!(y >= lo - 1e-15 && y <= hi + 1e-15);
        prop_assert!((sys.forward_on_branch(i, y) - x).abs() < 1e-12);
        if x > 1e-9 && x < 1.0 - 1e-9 {
            prop_assert!((sys.forward(y) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn cylinders_nest_under_prepending((k, w) in word_strategy(14), i in 0u8..3) {
        let sys = &systems()[k];
        let i = i % sys.d() as u8;
        let parent = sys.cylinder(&Word::new(w.clone())).unwrap();
        let mut pre = vec![i];
        pre.extend_from_slice(&w);
        let child = sys.cylinder(&Word::new(pre)).unwrap();
        prop_assert!(child.lo >= parent.lo - 1e-15 && child.hi <= parent.hi + 1e-15);
        prop_assert!(parent.length() <= sys.lambda().powi(w.len() as i32) * (1.0 + 1e-12));
    }

    #[test]
    fn cylinder_contains_its_coded_points((k, w) in word_strategy(10), t in 0.01f64..0.99) {
        let sys = &systems()[k];
        let gamma = Word::new(w.clone());
        let c = sys.cylinder(&gamma).unwrap();
        let x = c.lo + t * (c.hi - c.lo);
        // f^j sends I_gamma onto I_(gamma_1 ... gamma_(k-j)), so the
        // itinerary of x reads gamma backwards.
        let it = sys.itinerary(x, w.len());
        prop_assert_eq!(it.word, gamma.reversed());
    }

    #[test]
    fn tail_periodic_canonical((pre, per) in (prop::collection::vec(0u8..2, 0..6), prop::collection::vec(0u8..2, 1..5)), r in 1usize..3) {
        let w = TailPeriodicWord::new(Word::new(pre.clone()), Word::new(per.clone())).unwrap();
        // Same infinite word when the period is repeated.
        let rep: Vec<u8> = per.iter().copied().cycle().take(per.len() * r).collect();
        let w2 = TailPeriodicWord::new(Word::new(pre.clone()), Word::new(rep)).unwrap();
        prop_assert_eq!(&w, &w2);
        for n in 0..20 {
            let expect = if n < pre.len() { pre[n] } else { per[(n - pre.len()) % per.len()] };
            prop_assert_eq!(w.symbol(n), expect);
        }
        let back: TailPeriodicWord = w.to_string().parse().unwrap();
        prop_assert_eq!(&back, &w);
        prop_assert_eq!(&w.prepend(1).shift(), &w);
    }

    #[test]
    fn skew_inverse_is_inverted_by_forward(k in 0usize..4, pre in prop::collection::vec(0u8..2, 0..4), per in prop::collection::vec(0u8..2, 1..4), x in 0.05f64..0.95) {
        let sys = &systems()[k];
        let w = TailPeriodicWord::new(Word::new(pre), Word::new(per)).unwrap();
        let (u, y) = sys.skew_inverse(&w, x);
        prop_assert_eq!(&u.prepend(w.symbol(0)), &w);
        prop_assert!((sys.forward_on_branch(w.symbol(0) as usize, y) - x).abs() < 1e-12);
    }

    #[test]
    fn grid_interpolation_is_exact_on_lines(n in 2usize..300, a in -3.0f64..3.0, b in -3.0f64..3.0, x in 0.0f64..=1.0) {
        let g = GridFunction::from_fn(n, |t| a + b * t).unwrap();
        prop_assert!((g.eval(x) - (a + b * x)).abs() < 1e-12);
        let (j, t) = locate(x, n);
        prop_assert!(j < n && (0.0..=1.0).contains(&t));
        prop_assert!((node(j, n) - x).abs() <= 1.0 / (n - 1) as f64 + 1e-15);
    }
}
