//! Fixed numerical oracles for the statistics layer. Reference values were
//! computed at 50 significant digits and frozen here.

use safe_exec::stats::special::{inc_beta, student_t_quantile};
use safe_exec::stats::{ci95, cvar, mean, paired_t, std_dev};

/// (a, b, x, I_x(a, b))
const INC_BETA: [(f64, f64, f64, f64); 22] = [
    (0.5, 0.5, 0.1, 0.204_832_764_699_133_45),
    (0.5, 0.5, 0.5, 0.5),
    (0.5, 0.5, 0.9, 0.795_167_235_300_866_5),
    (1.0, 1.0, 0.3, 0.3),
    (2.0, 3.0, 0.4, 0.524_8),
    (2.0, 3.0, 0.95, 0.999_518_75),
    (5.0, 0.5, 0.2, 0.000_086_302_161_531_542_54),
    (5.0, 0.5, 0.8, 0.144_927_605_404_080_48),
    (0.5, 5.0, 0.01, 0.242_841_890_898_437_5),
    (10.0, 10.0, 0.5, 0.5),
    (10.0, 10.0, 0.3, 0.032_553_356_881_300_95),
    (20.0, 0.5, 0.9, 0.041_327_483_918_087_285),
    (49.5, 0.5, 0.98, 0.158_339_905_659_725_42),
    (2.0, 0.5, 0.6, 0.177_807_808_356_221_37),
    (0.1, 0.1, 0.7, 0.537_195_813_884_447_9),
    (30.0, 40.0, 0.45, 0.644_748_008_558_568_1),
    (100.0, 100.0, 0.55, 0.921_612_067_287_779_7),
    (1.5, 2.5, 0.001, 0.000_107_272_370_993_632_47),
    (7.5, 0.5, 0.999, 0.904_101_382_754_97),
    (3.0, 7.0, 0.25, 0.399322509765625),
    (0.5, 20.0, 0.05, 0.845_409_218_566_561_7),
    (4.5, 0.5, 0.123, 0.000_021_900_464_309_957_355),
];

pub fn incomplete_beta_spot_checks() {
    let mut worst = 0.0f64;
    for (a, b, x, want) in INC_BETA {
        let got = inc_beta(a, b, x);
        let err = (got - want).abs();
        worst = worst.max(err);
        assert!(err < 1e-10, "I_{x}({a}, {b}) = {got}, want {want}");
        // Symmetry I_x(a, b) = 1 - I_{1-x}(b, a).
        assert!((inc_beta(b, a, 1.0 - x) - (1.0 - want)).abs() < 1e-10);
    }
    println!("incomplete beta: {} points, max abs error {worst:.2e}", INC_BETA.len());
    assert_eq!(inc_beta(2.0, 3.0, 0.0), 0.0);
    assert_eq!(inc_beta(2.0, 3.0, 1.0), 1.0);
}

pub fn paired_t_fixture() {
    let a: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [0.0; 5];
    let r = paired_t(&a, &b).unwrap();
    assert!((r.t - 18f64.sqrt()).abs() < 1e-12, "t = {}", r.t);
    assert!((r.t - 4.2426).abs() < 1e-4);
    assert!((r.p_two_sided - 0.0132).abs() < 1e-3, "p = {}", r.p_two_sided);
    assert!((r.p_two_sided - 0.013235599563682695).abs() < 1e-10);
    assert_eq!(r.df, 4);
    assert_eq!(r.mean_diff, 3.0);
    // Order of the arguments flips the sign only.
    let s = paired_t(&b, &a).unwrap();
    assert_eq!(s.t, -r.t);
    assert_eq!(s.p_two_sided, r.p_two_sided);
}

pub fn t_quantile_fixture() {
    assert!((student_t_quantile(0.975f64, 4.0) - 2.7764451051977987).abs() < 1e-9);
    assert!((student_t_quantile(0.975f64, 99.0) - 1.9842169515086827).abs() < 1e-9);
    assert!((student_t_quantile(0.025f64, 4.0) + 2.7764451051977987).abs() < 1e-9);
}

pub fn ci_fixture() {
    let xs: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(mean(&xs).unwrap(), 3.0);
    assert!((std_dev(&xs).unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
    let (m, hw) = ci95(&xs).unwrap();
    // t_{0.975, 4} * sqrt(2.5) / sqrt(5)
    assert_eq!(m, 3.0);
    assert!((hw - 1.9632431614775608).abs() < 1e-9, "half width {hw}");
}

pub fn cvar_fixtures() {
    let xs: [f64; 10] = [4.0, -1.0, 12.0, 0.0, -5.0, 8.0, 2.0, 10.0, -3.0, 6.0];
    // Worst 2 of 10: (-5 - 3) / 2.
    assert!((cvar(&xs, 0.8).unwrap() - -4.0).abs() < 1e-9);
    // ceil(2.5) = 3 worst: (-5 - 3 - 1) / 3.
    assert!((cvar(&xs, 0.75).unwrap() - -3.0).abs() < 1e-9);
    // ceil(0.5) = 1 worst.
    assert!((cvar(&xs, 0.95).unwrap() - -5.0).abs() < 1e-9);
    let twenty: Vec<f64> = (0..20).map(|i| i as f64 * 0.5 - 3.25).collect();
    assert!((cvar(&twenty, 0.95).unwrap() - -3.25).abs() < 1e-9);
    assert!((cvar(&twenty, 0.9).unwrap() - -3.0).abs() < 1e-9);
    assert!((cvar(&xs, 0.0).unwrap() - mean(&xs).unwrap()).abs() < 1e-9);
}
