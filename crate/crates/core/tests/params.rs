use nabfront::params::{ModelParams, Rational};
use proptest::prelude::*;

#[test]
fn n4_closed_forms() {
    let p = ModelParams::derive(4).unwrap();
    assert_eq!(p.exact.delta, Rational::new(2, 1));
    assert!((p.delta_prime - (97f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
    assert!((p.lambda - 1.5468).abs() < 1e-4);
    assert_eq!(p.xi0, 3.0);
}

#[test]
fn n6_switches_branch() {
    let p = ModelParams::derive(6).unwrap();
    assert_eq!(p.exact.delta, Rational::new(8, 5));
    assert_eq!(p.delta_prime, 2.0 * 1.6 + 1.0);
    assert!((p.lambda - 1.1504).abs() < 1e-4);
}

#[test]
fn small_orders_rejected() {
    for n in [0, 1, 2, 3] {
        let e = ModelParams::derive(n).unwrap_err();
        assert!(e.is_config());
        assert!(e.to_string().contains("n >= 4"));
    }
}

proptest! {
    #[test]
    fn invariants(n in 4u32..=40) {
        let p = ModelParams::derive(n).unwrap();
        let nf = f64::from(n);
        prop_assert!(0.0 < p.gamma && p.gamma < p.epsilon);
        prop_assert!(4.0 * p.gamma < 0.5);
        prop_assert_eq!(p.exact.alpha + p.exact.gamma, Rational::new(1, 2));
        prop_assert!(1.0 < p.delta && p.delta <= 2.0);
        prop_assert!(3.0 < p.delta_prime && p.delta_prime <= 2.0 * p.delta + 1.0 + 1e-12);
        prop_assert!(p.lambda > 0.0 && p.lambda0 > 0.0);
        prop_assert!(p.p_plus > 0.0 && p.p_minus < 0.0);
        prop_assert!((p.p_plus + p.p_minus - 1.0).abs() < 1e-12);
        let prod = -nf * p.delta * (p.delta + 1.0);
        prop_assert!((p.p_plus * p.p_minus - prod).abs() < 1e-12 * prod.abs());
        prop_assert!(p.p_sing > 7.0);
        prop_assert!(p.p_minus.abs() > p.delta_prime - 2.0);
        if n >= 6 {
            let root = ((4.0 * nf * p.delta * (p.delta + 1.0) + 1.0).sqrt() - 1.0) / 2.0;
            prop_assert!(root >= 2.0 * p.delta + 1.0);
        }
        // lambda^(n-1) (2 kappa)^n = delta (delta + 1)
        let lhs = p.lambda.powf(nf - 1.0) * (2.0 * p.kappa).powf(nf);
        prop_assert!((lhs / (p.delta * (p.delta + 1.0)) - 1.0).abs() < 1e-12);
    }
}
