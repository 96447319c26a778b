//! Proximal policy optimisation with generalised advantage estimation.
//!
//! The policy is a diagonal Gaussian over two pre-squash controls per venue,
//! `u_m` and `u_d`, with a state-independent learnable log standard
//! deviation. Controls are squashed to a volume multiplier
//! `m = 1 + tanh(u_m)` in `[0, 2]` and a price offset `d = 20 tanh(u_d)`
//! ticks from the best bid. The value function is a separate network.

pub mod adam;
pub mod checkpoint;
pub mod nn;
pub mod toy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::ExecutionPolicy;
use crate::env::{controls_to_action, DecisionContext, ExecAction, ExecState, ExecutionEnv};
use crate::kernel::{mix_seed, RngStream};
use crate::scalar::Real;
use adam::{clip_grad_norm, Adam};
use nn::{backward, forward, MlpCache, MlpShape};

pub const PRICE_RANGE_TICKS: f64 = 20.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PpoError {
    #[error("expected {expected} inputs, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("sequence lengths differ: {0}")]
    LengthMismatch(String),
    #[error("loss became non-finite")]
    NonFiniteLoss,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("environment: {0}")]
    Env(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub clip: f64,
    pub vf_coef: f64,
    pub lr: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub episodes_per_update: usize,
    /// Number of collect-then-update rounds.
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub max_grad_norm: f64,
    /// Rewards are multiplied by this before learning.
    pub reward_scale: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.999,
            clip: 0.2,
            vf_coef: 0.5,
            lr: 3e-4,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            epochs_per_update: 4,
            minibatch_size: 64,
            episodes_per_update: 5,
            epochs: 20,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            max_grad_norm: 0.5,
            reward_scale: 1e-3,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0) {
            return Err(format!("gae_lambda must be in [0, 1], got {}", self.gae_lambda));
        }
        if self.clip <= 0.0 {
            return Err(format!("clip must be positive, got {}", self.clip));
        }
        if self.lr <= 0.0 || self.minibatch_size == 0 || self.episodes_per_update == 0 || self.epochs_per_update == 0 {
            return Err("lr, minibatch_size, episodes_per_update and epochs_per_update must be positive".into());
        }
        if self.hidden.contains(&0) {
            return Err("hidden layer widths must be positive".into());
        }
        Ok(())
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).libm_exp().libm_ln_1p()
}

/// `ln(1 - tanh(u)^2)`, stable for large `|u|`.
pub fn log_one_minus_tanh_sq<T: Real>(u: T) -> T {
    T::lit(2.0) * (T::lit(std::f64::consts::LN_2) - u - softplus(T::lit(-2.0) * u))
}

/// Maps pre-squash controls (interleaved `[u_m, u_d]` per venue) to volume
/// multipliers and price offsets.
pub fn squash<T: Real>(u: &[T]) -> (Vec<f64>, Vec<f64>) {
    let m = u.chunks_exact(2).map(|c| 1.0 + c[0].libm_tanh().as_f64()).collect();
    let d = u.chunks_exact(2).map(|c| PRICE_RANGE_TICKS * c[1].libm_tanh().as_f64()).collect();
    (m, d)
}

/// Log-density of the squashed action given pre-squash sample `u`.
pub fn squashed_log_prob<T: Real>(mu: &[T], log_std: &[T], u: &[T]) -> T {
    let mut lp = T::zero();
    for j in 0..u.len() {
        let z = (u[j] - mu[j]) / log_std[j].libm_exp();
        let scale = if j % 2 == 0 { T::one() } else { T::lit(PRICE_RANGE_TICKS) };
        lp += T::lit(-0.5) * z * z - log_std[j] - T::lit(HALF_LN_2PI) - scale.libm_ln() - log_one_minus_tanh_sq(u[j]);
    }
    lp
}

/// Policy and value parameters in one flat vector:
/// `[policy MLP | log std (2 per venue) | value MLP]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<T> {
    pub policy_shape: MlpShape,
    pub value_shape: MlpShape,
    pub params: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ActOutput<T> {
    pub u: Vec<T>,
    pub multipliers: Vec<f64>,
    pub offsets: Vec<f64>,
    pub logprob: T,
    pub value: T,
}

impl<T: Real> PolicyParams<T> {
    pub fn shapes(obs_dim: usize, venues: usize, hidden: &[usize]) -> (MlpShape, MlpShape) {
        let mut p = vec![obs_dim];
        p.extend_from_slice(hidden);
        let mut v = p.clone();
        p.push(2 * venues);
        v.push(1);
        (MlpShape::new(p), MlpShape::new(v))
    }

    pub fn new(obs_dim: usize, venues: usize, hidden: &[usize], init_log_std: f64, rng: &mut RngStream) -> Self {
        let (ps, vs) = Self::shapes(obs_dim, venues, hidden);
        let mut params: Vec<T> = ps.init(rng, 0.01);
        params.extend(std::iter::repeat_n(T::lit(init_log_std), 2 * venues));
        params.extend(vs.init::<T>(rng, 1.0));
        PolicyParams { policy_shape: ps, value_shape: vs, params }
    }

    pub fn zeros(obs_dim: usize, venues: usize, hidden: &[usize]) -> Self {
        let (ps, vs) = Self::shapes(obs_dim, venues, hidden);
        let n = ps.param_count() + 2 * venues + vs.param_count();
        PolicyParams { policy_shape: ps, value_shape: vs, params: vec![T::zero(); n] }
    }

    pub fn from_parts(policy_shape: MlpShape, value_shape: MlpShape, params: Vec<T>) -> Result<Self, PpoError> {
        if policy_shape.input() != value_shape.input()
            || value_shape.output() != 1
            || !policy_shape.output().is_multiple_of(2)
        {
            return Err(PpoError::Checkpoint("inconsistent network shapes".into()));
        }
        let n = policy_shape.param_count() + policy_shape.output() + value_shape.param_count();
        if params.len() != n {
            return Err(PpoError::ShapeMismatch { expected: n, got: params.len() });
        }
        Ok(PolicyParams { policy_shape, value_shape, params })
    }

    pub fn obs_dim(&self) -> usize {
        self.policy_shape.input()
    }

    pub fn action_dim(&self) -> usize {
        self.policy_shape.output()
    }

    pub fn venues(&self) -> usize {
        self.action_dim() / 2
    }

    fn split(&self) -> (usize, usize) {
        let a = self.policy_shape.param_count();
        (a, a + self.action_dim())
    }

    pub fn log_std(&self) -> &[T] {
        let (a, b) = self.split();
        &self.params[a..b]
    }

    fn check_obs(&self, obs: &[T]) -> Result<(), PpoError> {
        if obs.len() != self.obs_dim() {
            return Err(PpoError::ShapeMismatch { expected: self.obs_dim(), got: obs.len() });
        }
        Ok(())
    }

    fn policy_forward(&self, obs: &[T]) -> MlpCache<T> {
        let (a, _) = self.split();
        forward(&self.policy_shape, &self.params[..a], obs)
    }

    fn value_forward(&self, obs: &[T]) -> MlpCache<T> {
        let (_, b) = self.split();
        forward(&self.value_shape, &self.params[b..], obs)
    }

    pub fn mean(&self, obs: &[T]) -> Result<Vec<T>, PpoError> {
        self.check_obs(obs)?;
        Ok(self.policy_forward(obs).output().to_vec())
    }

    pub fn value(&self, obs: &[T]) -> Result<T, PpoError> {
        self.check_obs(obs)?;
        Ok(self.value_forward(obs).output()[0])
    }

    /// Samples controls (or takes the mean when `rng` is `None`).
    pub fn act(&self, obs: &[T], rng: Option<&mut RngStream>) -> Result<ActOutput<T>, PpoError> {
        let mu = self.mean(obs)?;
        let log_std = self.log_std();
        let u: Vec<T> = match rng {
            Some(r) => mu.iter().zip(log_std).map(|(&m, &s)| m + s.libm_exp() * T::lit(r.standard_normal())).collect(),
            None => mu.clone(),
        };
        let (multipliers, offsets) = squash(&u);
        Ok(ActOutput { logprob: squashed_log_prob(&mu, log_std, &u), value: self.value(obs)?, u, multipliers, offsets })
    }

    pub fn log_prob(&self, obs: &[T], u: &[T]) -> Result<T, PpoError> {
        let mu = self.mean(obs)?;
        Ok(squashed_log_prob(&mu, self.log_std(), u))
    }

    pub fn to_f64(&self) -> PolicyParams<f64> {
        PolicyParams {
            policy_shape: self.policy_shape.clone(),
            value_shape: self.value_shape.clone(),
            params: self.params.iter().map(|x| x.as_f64()).collect(),
        }
    }
}

/// Advantages and returns by the GAE recursion. `values` carries one extra
/// bootstrap entry; `dones[t]` cuts the recursion after step `t`.
pub fn gae<T: Real>(
    rewards: &[T],
    values: &[T],
    dones: &[bool],
    gamma: T,
    lambda: T,
) -> Result<(Vec<T>, Vec<T>), PpoError> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(PpoError::LengthMismatch(format!("rewards {n}, values {}, dones {}", values.len(), dones.len())));
    }
    let mut adv = vec![T::zero(); n];
    let mut next = T::zero();
    for t in (0..n).rev() {
        let live = if dones[t] { T::zero() } else { T::one() };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let ret = adv.iter().zip(values).map(|(&a, &v)| a + v).collect();
    Ok((adv, ret))
}

/// One rollout.
#[derive(Debug, Clone, Default)]
pub struct Trajectory<T> {
    pub obs: Vec<Vec<T>>,
    pub u: Vec<Vec<T>>,
    pub logprob: Vec<T>,
    pub reward: Vec<T>,
    pub value: Vec<T>,
    pub done: Vec<bool>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        let n = self.reward.len();
        if [self.obs.len(), self.u.len(), self.logprob.len(), self.value.len(), self.done.len()].iter().any(|&l| l != n)
        {
            return Err(PpoError::LengthMismatch("trajectory fields".into()));
        }
        if self.logprob.iter().any(|l| !l.is_finite()) {
            return Err(PpoError::NonFiniteLoss);
        }
        Ok(())
    }
}

/// Flattened training samples with advantages attached.
#[derive(Debug, Clone, Default)]
pub struct Batch<T> {
    pub obs: Vec<Vec<T>>,
    pub u: Vec<Vec<T>>,
    pub old_logprob: Vec<T>,
    pub adv: Vec<T>,
    pub ret: Vec<T>,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.adv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adv.is_empty()
    }

    /// Adds a finished trajectory (bootstrap value 0 after the last step
    /// unless `bootstrap` is given).
    pub fn push(&mut self, traj: &Trajectory<T>, bootstrap: T, gamma: T, lambda: T) -> Result<(), PpoError> {
        traj.validate()?;
        let mut values = traj.value.clone();
        values.push(bootstrap);
        let (adv, ret) = gae(&traj.reward, &values, &traj.done, gamma, lambda)?;
        self.obs.extend(traj.obs.iter().cloned());
        self.u.extend(traj.u.iter().cloned());
        self.old_logprob.extend_from_slice(&traj.logprob);
        self.adv.extend(adv);
        self.ret.extend(ret);
        Ok(())
    }

    /// Rescales advantages to mean 0 and standard deviation 1 (mean removal
    /// only when the spread is degenerate).
    pub fn normalize_advantages(&mut self) {
        let n = T::lit(self.adv.len().max(1) as f64);
        let mean = self.adv.iter().copied().sum::<T>() / n;
        let var = self.adv.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / n;
        let std = var.sqrt();
        let scale = if std > T::lit(1e-8) { std } else { T::one() };
        for a in &mut self.adv {
            *a = (*a - mean) / scale;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Clipped surrogate `min(rho A, clip(rho) A)`.
pub fn clipped_surrogate<T: Real>(ratio: T, adv: T, clip: T) -> T {
    let clipped = ratio.max(T::one() - clip).min(T::one() + clip);
    (ratio * adv).min(clipped * adv)
}

/// Loss to minimise over `idx` and its gradient:
/// `-mean(surrogate) + vf_coef * mean((V - R)^2) - entropy_coef * entropy`.
pub fn loss_and_grad<T: Real>(
    p: &PolicyParams<T>,
    batch: &Batch<T>,
    idx: &[usize],
    cfg: &PpoConfig,
) -> (LossReport, Vec<T>) {
    let mut grad = vec![T::zero(); p.params.len()];
    let (a, b) = p.split();
    let k = p.action_dim();
    let n = T::lit(idx.len().max(1) as f64);
    let clip = T::lit(cfg.clip);
    let vf = T::lit(cfg.vf_coef);
    let log_std = p.log_std().to_vec();
    let inv_var: Vec<T> = log_std.iter().map(|&s| (T::lit(-2.0) * s).libm_exp()).collect();
    let mut rep = LossReport::default();
    let mut g_logstd = vec![T::zero(); k];
    for &i in idx {
        let obs = &batch.obs[i];
        let u = &batch.u[i];
        let pc = p.policy_forward(obs);
        let mu = pc.output();
        let lp = squashed_log_prob(mu, &log_std, u);
        let ratio = (lp - batch.old_logprob[i]).libm_exp();
        let adv = batch.adv[i];
        let surr = clipped_surrogate(ratio, adv, clip);
        rep.policy_loss -= surr.as_f64();
        let unclipped_active = ratio * adv <= surr;
        if (ratio - T::one()).abs() > clip {
            rep.clip_fraction += 1.0;
        }
        rep.approx_kl += (batch.old_logprob[i] - lp).as_f64();
        if unclipped_active {
            // d(-rho A / n)/d logp = -rho A / n
            let coef = -(ratio * adv) / n;
            let mut d_mu = vec![T::zero(); k];
            for j in 0..k {
                let diff = u[j] - mu[j];
                d_mu[j] = coef * diff * inv_var[j];
                g_logstd[j] += coef * (diff * diff * inv_var[j] - T::one());
            }
            backward(&p.policy_shape, &p.params[..a], &pc, &d_mu, &mut grad[..a]);
        }
        let vc = p.value_forward(obs);
        let err = vc.output()[0] - batch.ret[i];
        rep.value_loss += (err * err).as_f64();
        backward(&p.value_shape, &p.params[b..], &vc, &[vf * T::lit(2.0) * err / n], &mut grad[b..]);
    }
    let entropy: T = log_std.iter().map(|&s| s + T::lit(0.5 + HALF_LN_2PI)).sum();
    for j in 0..k {
        grad[a + j] = g_logstd[j] - T::lit(cfg.entropy_coef);
    }
    let nf = n.as_f64();
    rep.policy_loss /= nf;
    rep.value_loss /= nf;
    rep.clip_fraction /= nf;
    rep.approx_kl /= nf;
    rep.entropy = entropy.as_f64();
    rep.total = rep.policy_loss + cfg.vf_coef * rep.value_loss - cfg.entropy_coef * rep.entropy;
    (rep, grad)
}

/// Several epochs of shuffled minibatch descent on `batch`.
pub fn ppo_update<T: Real>(
    p: &mut PolicyParams<T>,
    batch: &mut Batch<T>,
    cfg: &PpoConfig,
    opt: &mut Adam<T>,
    rng: &mut RngStream,
) -> Result<LossReport, PpoError> {
    batch.normalize_advantages();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut last = LossReport::default();
    for _ in 0..cfg.epochs_per_update {
        for i in (1..order.len()).rev() {
            let j = rng.index(i + 1);
            order.swap(i, j);
        }
        for mb in order.chunks(cfg.minibatch_size) {
            let (rep, mut grad) = loss_and_grad(p, batch, mb, cfg);
            if !rep.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(PpoError::NonFiniteLoss);
            }
            clip_grad_norm(&mut grad, T::lit(cfg.max_grad_norm));
            opt.step(&mut p.params, &grad);
            last = rep;
        }
    }
    Ok(last)
}

/// What the learner needs from an environment.
pub trait Environment {
    fn venues(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Applies per-venue controls; returns `(obs, reward, done)`.
    fn step_controls(&mut self, multipliers: &[f64], offsets: &[f64]) -> Result<(Vec<f64>, f64, bool), PpoError>;
    /// Shortfall of the finished episode in bps, if anything was filled.
    fn episode_is_bps(&self) -> Option<f64>;
    /// Constraint breaches the penalty term saw during the episode.
    fn episode_violations(&self) -> u64;
}

impl Environment for ExecutionEnv {
    fn venues(&self) -> usize {
        self.market_config().venues
    }
    fn obs_dim(&self) -> usize {
        crate::env::feature_len(self.market_config().venues)
    }
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        ExecutionEnv::reset(self, seed).features
    }
    fn step_controls(&mut self, multipliers: &[f64], offsets: &[f64]) -> Result<(Vec<f64>, f64, bool), PpoError> {
        let action = controls_to_action(&self.context(), multipliers, offsets);
        let out = self.step(&action).map_err(|e| PpoError::Env(e.to_string()))?;
        Ok((out.state.features, out.reward.total(), out.done))
    }
    fn episode_is_bps(&self) -> Option<f64> {
        self.is_bps()
    }
    fn episode_violations(&self) -> u64 {
        self.raw_violations()
    }
}

/// Per-epoch training statistics (statistics of the rollouts collected with
/// the parameters before that epoch's update).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningPoint {
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_is_bps: f64,
    pub violations: f64,
}

pub const LEARNING_CURVE_HEADER: &str = "epoch,mean_reward,mean_is_bps,violations";

pub fn learning_curve_csv(curve: &[LearningPoint]) -> String {
    let mut s = format!("{LEARNING_CURVE_HEADER}\n");
    for p in curve {
        s.push_str(&format!("{},{},{},{}\n", p.epoch, p.mean_reward, p.mean_is_bps, p.violations));
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    /// Parameters behind the best epoch's mean reward.
    pub best: PolicyParams<T>,
    pub last: PolicyParams<T>,
    pub curve: Vec<LearningPoint>,
}

/// Collects one episode with the current parameters.
pub fn rollout<T: Real, E: Environment>(
    env: &mut E,
    p: &PolicyParams<T>,
    seed: u64,
    rng: Option<&mut RngStream>,
    reward_scale: f64,
) -> Result<(Trajectory<T>, f64), PpoError> {
    let mut obs = env.reset(seed);
    let mut traj = Trajectory::default();
    let mut total = 0.0;
    let mut rng = rng;
    loop {
        let x: Vec<T> = obs.iter().map(|&v| T::lit(v)).collect();
        let out = p.act(&x, rng.as_deref_mut())?;
        let (next, r, done) = env.step_controls(&out.multipliers, &out.offsets)?;
        total += r;
        traj.obs.push(x);
        traj.u.push(out.u);
        traj.logprob.push(out.logprob);
        traj.value.push(out.value);
        traj.reward.push(T::lit(r * reward_scale));
        traj.done.push(done);
        obs = next;
        if done {
            return Ok((traj, total));
        }
    }
}

/// Seed of training episode `e` of epoch `epoch`.
pub fn training_seed(seed: u64, epoch: usize, e: usize) -> u64 {
    mix_seed(seed, (epoch as u64) << 20 | e as u64)
}

/// Serial collect-then-update loop; fully determined by `seed`.
pub fn train<T: Real, E: Environment>(env: &mut E, cfg: &PpoConfig, seed: u64) -> Result<TrainOutput<T>, PpoError> {
    cfg.validate().map_err(PpoError::Env)?;
    let mut init_rng = RngStream::for_agent(seed, 0);
    let mut params = PolicyParams::<T>::new(env.obs_dim(), env.venues(), &cfg.hidden, cfg.init_log_std, &mut init_rng);
    let mut opt = Adam::new(params.params.len(), T::lit(cfg.lr));
    let mut act_rng = RngStream::for_agent(seed, 1);
    let mut shuffle_rng = RngStream::for_agent(seed, 2);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::NEG_INFINITY, params.clone());
    for epoch in 0..cfg.epochs {
        let mut batch = Batch::default();
        let (mut rew, mut is, mut is_n, mut viol) = (0.0, 0.0, 0usize, 0.0);
        for e in 0..cfg.episodes_per_update {
            let (traj, total) =
                rollout(env, &params, training_seed(seed, epoch, e), Some(&mut act_rng), cfg.reward_scale)?;
            batch.push(&traj, T::zero(), T::lit(cfg.gamma), T::lit(cfg.gae_lambda))?;
            rew += total;
            if let Some(x) = env.episode_is_bps() {
                is += x;
                is_n += 1;
            }
            viol += env.episode_violations() as f64;
        }
        let n = cfg.episodes_per_update as f64;
        let point = LearningPoint {
            epoch,
            mean_reward: rew / n,
            mean_is_bps: if is_n > 0 { is / is_n as f64 } else { 0.0 },
            violations: viol / n,
        };
        if point.mean_reward > best.0 {
            best = (point.mean_reward, params.clone());
        }
        curve.push(point);
        ppo_update(&mut params, &mut batch, cfg, &mut opt, &mut shuffle_rng)?;
    }
    Ok(TrainOutput { best: best.1, last: params, curve })
}

/// A trained policy driving the execution environment.
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    pub params: PolicyParams<f64>,
    /// Sample controls instead of taking the mean.
    pub rng: Option<RngStream>,
}

impl LearnedPolicy {
    pub fn deterministic(params: PolicyParams<f64>) -> Self {
        LearnedPolicy { params, rng: None }
    }
}

impl ExecutionPolicy for LearnedPolicy {
    fn act(&mut self, ctx: &DecisionContext<'_>, state: &ExecState) -> ExecAction {
        let out =
            self.params.act(&state.features, self.rng.as_mut()).expect("policy input width matches the environment");
        controls_to_action(ctx, &out.multipliers, &out.offsets)
    }
}
