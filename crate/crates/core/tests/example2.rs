use std::time::Instant;

use ergotrans::config::{Example2Config, Numerics};
use ergotrans::example2;
use ergotrans::pipeline::Status;

#[test]
fn period_four_product_potential() {
    let t = Instant::now();
    let (p, rep) = example2::run(&Example2Config::default(), &Numerics::default(), 0).unwrap();
    assert!(t.elapsed().as_secs_f64() < 120.0);

    assert!(!rep.ladder[0].twist_pass, "the unperturbed potential fails the twist check");
    assert!(rep.twist_found);
    assert!(rep.orbit_error < 1e-12);
    assert_eq!(rep.dual_words, ["(1000)", "(0100)", "(0010)", "(0001)"]);
    assert_eq!(rep.dual_words, rep.expected_dual_words);
    for (a, b) in rep.orbit_values.iter().zip(&rep.orbit_values_lo) {
        assert!((a - b).abs() < 1e-3);
    }
    assert!(rep.finite && rep.breakpoints_in_orbit);
    assert!(rep.delta_table_error < 1e-3);
    assert!(rep.delta_table.iter().all(|r| r.nodes > 0 && r.max_err_pieces < 1e-3));
    let x0 = rep.orbit_points[0];
    assert!(rep.case1.c_between_first_points && x0 < rep.c);

    for v in rep.verdicts() {
        assert_ne!(v.status, Status::Fail, "{} {}", v.id, v.detail);
    }
    let pw = p.st.pieces.as_ref().unwrap();
    assert!(pw.continuity_residual < 1e-6);
    let fr = p.fr1().unwrap();
    assert!(fr.max_residual < 1e-5 && fr.min_b >= -1e-8);
}
