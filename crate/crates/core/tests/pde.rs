use std::sync::OnceLock;

use nabfront::pde::{heat_error, init_state, run, Perturbation, SimConfig};
use nabfront::AsymptoticBundle;

fn b4() -> &'static AsymptoticBundle {
    static B: OnceLock<AsymptoticBundle> = OnceLock::new();
    B.get_or_init(|| AsymptoticBundle::solve(4).unwrap())
}

fn short() -> SimConfig {
    SimConfig::parse("n = 4\ntau = 100\nt_end = 130\ncheckpoints = 4\n").unwrap()
}

#[test]
fn config_text_round_trips() {
    let mut c = SimConfig::new(5);
    c.perturbation = Perturbation::Bump {
        amp: 2e-3,
        width: 3.5,
    };
    c.checkpoints = 9;
    assert_eq!(SimConfig::parse(&c.to_text()).unwrap(), c);
}

#[test]
fn config_defaults_follow_tau_and_t_end() {
    let c = short();
    assert_eq!(c.l, 10.0 * 130f64.sqrt());
    assert_eq!(c.dx, SimConfig::new(4).dx);
    assert_eq!(c.checkpoint_times().first(), Some(&100.0));
    assert_eq!(c.checkpoint_times().last(), Some(&130.0));
}

#[test]
fn config_rejections() {
    for text in [
        "n = 4\nn = 4\n",
        "n = 4\nwidth = 2\n",
        "n = 4\nL = 10\n",
        "n = 4\ndx = 10\n",
        "n = 3\n",
        "n = 4\nt_end = 50\n",
        "n = 4\nsafety = 1.5\n",
        "n = 4\ntau = abc\n",
        "just words\n",
    ] {
        let e = SimConfig::parse(text)
            .and_then(|c| c.validate())
            .unwrap_err();
        assert!(e.is_config(), "{text:?}: {e}");
    }
}

#[test]
fn initial_state_is_v_infinity_plus_perturbation() {
    let b = b4();
    let mut c = short();
    c.perturbation = Perturbation::Bump {
        amp: 1e-3,
        width: 5.0,
    };
    let s = init_state(&c, b).unwrap();
    assert_eq!(s.t, 100.0);
    let mid = s.x.len() / 2;
    assert_eq!(s.x[mid], 0.0);
    assert_eq!(s.v[mid], b.v_infinity(0.0, 100.0).unwrap() + 1e-3);
    assert_eq!(s.evenness_error(), 0.0);
}

#[test]
fn short_run_is_even_and_thread_independent() {
    let b = b4();
    let c = short();
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let mut fa = Vec::new();
    let ra = one.install(|| run(&c, b, Some(&mut fa))).unwrap();
    let mut fb = Vec::new();
    let rb = four.install(|| run(&c, b, Some(&mut fb))).unwrap();
    assert_eq!(
        serde_json::to_string(&ra).unwrap(),
        serde_json::to_string(&rb).unwrap()
    );
    assert_eq!(fa, fb);
    assert_eq!(ra.checkpoints.len(), 4);
    assert_eq!(fa.len(), 4);
    assert!(ra.checkpoints.iter().all(|k| k.evenness < 1e-10));
    // the unperturbed run starts on v_inf exactly
    assert_eq!(ra.checkpoints[0].sup, 0.0);
}

#[test]
fn mismatched_order_is_a_config_error() {
    let c = SimConfig::new(5);
    assert!(run(&c, b4(), None).unwrap_err().is_config());
}

#[test]
fn heat_mode_converges_at_second_order() {
    let e: Vec<f64> = [0.4, 0.2, 0.1]
        .iter()
        .map(|&dx| heat_error(20.0, dx, 1.0, 1.0, 2.0, 0.9).unwrap())
        .collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() < 0.2, "{order}");
    }
}
