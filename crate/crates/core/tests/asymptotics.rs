use std::sync::OnceLock;

use nabfront::AsymptoticBundle;

fn b4() -> &'static AsymptoticBundle {
    static B: OnceLock<AsymptoticBundle> = OnceLock::new();
    B.get_or_init(|| AsymptoticBundle::solve(4).unwrap())
}

#[test]
fn v_infinity_is_even_and_tends_to_one() {
    let b = b4();
    let mut prev = f64::INFINITY;
    for t in [1.0, 1e2, 1e4] {
        for x in [0.3, 7.0, 90.0] {
            assert_eq!(b.v_infinity(x, t).unwrap(), b.v_infinity(-x, t).unwrap());
        }
        // the reactive power tails decay only like t^-gamma
        let gap = (b.v_infinity(40.0 * f64::sqrt(t), t).unwrap() - 1.0).abs();
        assert!(gap < 1e-3 && gap < prev, "t = {t}: {gap}");
        prev = gap;
    }
}

#[test]
fn regular_grouping_matches_literal_form() {
    let b = b4();
    for t in [1e2, 1e3, 1e4] {
        for x in [0.7, 5.0, 40.0, 300.0] {
            let a = b.v_infinity(x, t).unwrap();
            let c = b.v_infinity_direct(x, t).unwrap();
            assert!((a - c).abs() < 1e-10, "x = {x}, t = {t}: {a} vs {c}");
        }
    }
}

#[test]
fn domain_errors() {
    let b = b4();
    assert!(b.v_infinity(1.0, 0.5).unwrap_err().is_config());
    assert!(b.front_diffusive(0.0).is_err());
    assert!(b.v_infinity_direct(0.0, 10.0).is_err());
}

#[test]
fn front_scales_agree_in_the_overlap() {
    // Far out on the reactive scale and close in on the diffusive one, both
    // limits behave like (2 kappa lambda)^n s^(n(1-delta)) / 2.
    let b = b4();
    let p = &b.params;
    let k = f64::from(p.n) * (p.delta - 1.0);
    let z = 25.0;
    let reactive = b.front_reactive(z).unwrap() * z.powf(k);
    let y = 0.02;
    let diffusive = b.front_diffusive(y).unwrap() * y.powf(k);
    let common = 0.5 * (2.0 * p.kappa * p.lambda).powi(p.n as i32);
    assert!(
        (diffusive / common - 1.0).abs() < 0.05,
        "{diffusive} vs {common}"
    );
    assert!(
        (reactive / diffusive - 1.0).abs() < 0.05,
        "{reactive} vs {diffusive}"
    );
}

#[test]
fn potential_scan_reports_its_minimum() {
    let b = b4();
    let s = b.potential_scan(1e3, 500).unwrap();
    assert_eq!(s.points, 500);
    let (v, _) = b.potential(s.argmin, 1e3).unwrap();
    assert_eq!(v, s.min);
    assert!(s.min_two_u_plus_phi > 0.0);
}

#[test]
fn inhomogeneous_norm_decays() {
    let b = b4();
    let a = b.inhomo_norm(1e2, 1e-8).unwrap().value;
    let c = b.inhomo_norm(1e4, 1e-8).unwrap().value;
    let slope = (c / a).ln() / 100f64.ln();
    assert!((slope + 13.0 / 9.0).abs() < 0.1, "{slope}");
}
