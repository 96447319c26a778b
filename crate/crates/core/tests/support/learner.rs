//! Learner correctness: gradients, advantage recursion, densities,
//! checkpoints and the toy learning curve.

use safe_exec::kernel::RngStream;
use safe_exec::ppo::toy::ToyExecEnv;
use safe_exec::ppo::{
    checkpoint, gae, loss_and_grad, squash, squashed_log_prob, train, Batch, PolicyParams, PpoConfig, PRICE_RANGE_TICKS,
};

/// 2 -> 3 -> 2 policy, 2 log std entries, 2 -> 3 -> 1 value net.
fn fixture_params() -> PolicyParams<f64> {
    let mut rng = RngStream::new(0x6772_6164);
    let mut p = PolicyParams::<f64>::new(2, 1, &[3], -0.3, &mut rng);
    // Larger weights than the default init so every term carries gradient.
    for (i, x) in p.params.iter_mut().enumerate() {
        *x += 0.4 * (rng.uniform() - 0.5) + 0.01 * i as f64;
    }
    p
}

fn fixture_batch(p: &PolicyParams<f64>) -> Batch<f64> {
    let mut rng = RngStream::new(0x6261_7463);
    let mut b = Batch::default();
    for i in 0..8 {
        let obs = vec![rng.uniform() * 2.0 - 1.0, rng.uniform() * 2.0 - 1.0];
        let mu = p.mean(&obs).unwrap();
        let u: Vec<f64> = mu.iter().map(|m| m + 0.6 * (rng.uniform() - 0.5)).collect();
        let lp = p.log_prob(&obs, &u).unwrap();
        // Ratios spread over both sides of the clip window.
        let shift = [0.05, -0.1, 0.6, -0.5, 0.0, 0.12, -0.9, 0.3][i];
        b.obs.push(obs);
        b.u.push(u);
        b.old_logprob.push(lp - shift);
        b.adv.push(if i % 3 == 0 { -1.3 } else { 0.7 + 0.1 * i as f64 });
        b.ret.push(rng.uniform() * 2.0 - 1.0);
    }
    b
}

pub fn gradient_matches_central_differences() {
    let p = fixture_params();
    assert_eq!(p.params.len(), 32);
    let batch = fixture_batch(&p);
    let idx: Vec<usize> = (0..batch.len()).collect();
    let cfg = PpoConfig { entropy_coef: 0.05, vf_coef: 0.5, clip: 0.2, ..PpoConfig::default() };
    let (_, grad) = loss_and_grad(&p, &batch, &idx, &cfg);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (k, &g) in grad.iter().enumerate() {
        let mut plus = p.clone();
        plus.params[k] += h;
        let mut minus = p.clone();
        minus.params[k] -= h;
        let fd = (loss_and_grad(&plus, &batch, &idx, &cfg).0.total - loss_and_grad(&minus, &batch, &idx, &cfg).0.total)
            / (2.0 * h);
        let scale = g.abs().max(fd.abs());
        let rel = if scale < 1e-8 { (g - fd).abs() } else { (g - fd).abs() / scale };
        worst = worst.max(rel);
        assert!(rel < 1e-4, "param {k}: analytic {g} vs numeric {fd}");
    }
    println!("gradient check: 32 parameters, max relative error {worst:.2e}");
}

pub fn gae_matches_hand_unrolled_recursion() {
    let rewards = [1.0, 0.5, -0.25, 2.0, 0.0];
    let values = [0.5, 0.25, -0.75, 1.0, 0.125, 2.0];
    let dones = [false, false, true, false, false];
    let (adv, ret) = gae(&rewards, &values, &dones, 0.5, 0.5).unwrap();
    // delta_4 = 0 + 0.5 * 2 - 0.125                 = 0.875,   A_4 = 0.875
    // delta_3 = 2 + 0.5 * 0.125 - 1                 = 1.0625,  A_3 = 1.0625 + 0.25 * 0.875 = 1.28125
    // delta_2 = -0.25 + 0.75 (episode ends)         = 0.5,     A_2 = 0.5
    // delta_1 = 0.5 + 0.5 * -0.75 - 0.25            = -0.125,  A_1 = -0.125 + 0.25 * 0.5 = 0
    // delta_0 = 1 + 0.5 * 0.25 - 0.5                = 0.625,   A_0 = 0.625
    assert_eq!(adv, vec![0.625, 0.0, 0.5, 1.28125, 0.875]);
    assert_eq!(ret, vec![1.125, 0.25, -0.25, 2.28125, 1.0]);
}

pub fn log_prob_matches_change_of_variables() {
    let p = fixture_params();
    let mut rng = RngStream::new(99);
    for _ in 0..200 {
        let obs = [rng.uniform() * 4.0 - 2.0, rng.uniform() * 4.0 - 2.0];
        let mu = p.mean(&obs).unwrap();
        let u = [mu[0] + rng.standard_normal(), mu[1] + 2.0 * rng.standard_normal()];
        let mut want = 0.0;
        for j in 0..2 {
            let sigma = p.log_std()[j].exp();
            let z = (u[j] - mu[j]) / sigma;
            let gaussian = (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            // |dy/du| by central differences of the squashing map.
            let h = 1e-6;
            let y = |x: f64| {
                let mut v = [0.0, 0.0];
                v[j] = x;
                let (m, d) = squash(&v);
                if j == 0 {
                    m[0]
                } else {
                    d[0]
                }
            };
            let jac = (y(u[j] + h) - y(u[j] - h)) / (2.0 * h);
            want += (gaussian / jac).ln();
        }
        let got = squashed_log_prob(&mu, p.log_std(), &u);
        assert!((got - want).abs() < 1e-6 * want.abs().max(1.0), "got {got}, want {want}");
    }
    let (_, d) = squash(&[0.0, 50.0]);
    assert!((d[0] - PRICE_RANGE_TICKS).abs() < 1e-12);
}

pub fn checkpoint_round_trip() {
    let p = fixture_params();
    let bytes = checkpoint::to_bytes(&p);
    assert_eq!(checkpoint::from_bytes::<f64>(&bytes).unwrap(), p);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    checkpoint::save(&p, &path).unwrap();
    assert_eq!(checkpoint::load::<f64>(&path).unwrap(), p);
    assert!(checkpoint::from_bytes::<f64>(&bytes[..bytes.len() - 3]).is_err());
    let mut wrong_magic = bytes.clone();
    wrong_magic[0] ^= 1;
    assert!(checkpoint::from_bytes::<f64>(&wrong_magic).is_err());
}

fn toy_config() -> PpoConfig {
    PpoConfig { episodes_per_update: 64, epochs: 10, hidden: vec![16, 16], ..PpoConfig::default() }
}

pub fn toy_learning_curve_is_monotone() {
    let mut env = ToyExecEnv::default();
    let out = train::<f64, _>(&mut env, &toy_config(), 7).unwrap();
    let rewards: Vec<f64> = out.curve.iter().map(|p| p.mean_reward).collect();
    assert_eq!(rewards.len(), 10);
    for w in rewards.windows(2) {
        assert!(w[1] > w[0], "curve not increasing: {rewards:?}");
    }
}

pub fn training_is_deterministic() {
    let cfg = PpoConfig { episodes_per_update: 8, epochs: 3, ..toy_config() };
    let a = train::<f64, _>(&mut ToyExecEnv::default(), &cfg, 123).unwrap();
    let b = train::<f64, _>(&mut ToyExecEnv::default(), &cfg, 123).unwrap();
    assert_eq!(checkpoint::to_bytes(&a.last), checkpoint::to_bytes(&b.last));
    assert_eq!(a.curve, b.curve);
    let c = train::<f64, _>(&mut ToyExecEnv::default(), &cfg, 124).unwrap();
    assert_ne!(checkpoint::to_bytes(&a.last), checkpoint::to_bytes(&c.last));
}
