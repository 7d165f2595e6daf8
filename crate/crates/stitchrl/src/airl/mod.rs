//! Adversarial transition-policy training.
//!
//! A transition policy is trained so that the state-action distribution it
//! produces inside a transition interval matches that of the next subtask
//! policy. A discriminator scores transitions with a potential-shaped
//! logit `f(s, a, s') = g(s, a) + gamma * h(s') - h(s)` and classifies
//! against the generator's own action density:
//!
//! `D = exp(f) / (exp(f) + pi(a|s))`, computed as `sigmoid(f - log pi)`.
//!
//! The generator is rewarded with the discriminator log-odds
//! `log D - log(1 - D)`, which collapses algebraically to `f - log pi`,
//! and is optimized with the shared PPO machinery. Training alternates
//! short set-state rollouts from the previous policy's hand-off states
//! with logistic-regression discriminator updates.

use crate::env::{EnvState, Environment, Signal, TransitionInterval};
use crate::nn::{Activation, AdamState, MlpNet, PolicyModel};
use crate::ppo::{compute_gae, ppo_update, PpoConfig, RolloutBatch};
use crate::store::rng::{Rng, RngStream};
use crate::{Error, Result};

/// Discriminator: reward approximator over `(state, action)` plus a
/// potential-style shaping term over states, sharing the RL discount.
/// Inputs are normalized with expert-data statistics when provided.
#[derive(Debug, Clone)]
pub struct DiscriminatorNet {
    reward_net: MlpNet,
    shaping_net: MlpNet,
    gamma: f64,
    obs_mean: Vec<f64>,
    obs_std: Vec<f64>,
    act_mean: Vec<f64>,
    act_std: Vec<f64>,
}

impl DiscriminatorNet {
    /// Two-layer ReLU nets with `hidden` units each (100 by default).
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: usize,
        gamma: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let reward_net = MlpNet::glorot(
            &[obs_dim + act_dim, hidden, hidden, 1],
            Activation::Relu,
            rng,
        )?;
        let shaping_net = MlpNet::glorot(&[obs_dim, hidden, hidden, 1], Activation::Relu, rng)?;
        Ok(DiscriminatorNet {
            reward_net,
            shaping_net,
            gamma,
            obs_mean: vec![0.0; obs_dim],
            obs_std: vec![1.0; obs_dim],
            act_mean: vec![0.0; act_dim],
            act_std: vec![1.0; act_dim],
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.shaping_net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.reward_net.input_dim() - self.obs_dim()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward_net(&self) -> &MlpNet {
        &self.reward_net
    }

    pub fn reward_net_mut(&mut self) -> &mut MlpNet {
        &mut self.reward_net
    }

    pub fn shaping_net(&self) -> &MlpNet {
        &self.shaping_net
    }

    pub fn shaping_net_mut(&mut self) -> &mut MlpNet {
        &mut self.shaping_net
    }

    /// Installs expert-data normalization statistics (states and actions
    /// jointly). Standard deviations are floored at 1e-6.
    pub fn set_normalizer(
        &mut self,
        obs_mean: Vec<f64>,
        obs_std: Vec<f64>,
        act_mean: Vec<f64>,
        act_std: Vec<f64>,
    ) -> Result<()> {
        if obs_mean.len() != self.obs_dim() || obs_std.len() != self.obs_dim() {
            return Err(Error::Dimension {
                context: "discriminator obs normalizer",
                expected: self.obs_dim(),
                got: obs_mean.len(),
            });
        }
        if act_mean.len() != self.act_dim() || act_std.len() != self.act_dim() {
            return Err(Error::Dimension {
                context: "discriminator act normalizer",
                expected: self.act_dim(),
                got: act_mean.len(),
            });
        }
        self.obs_mean = obs_mean;
        self.obs_std = obs_std.into_iter().map(|s| s.max(1e-6)).collect();
        self.act_mean = act_mean;
        self.act_std = act_std.into_iter().map(|s| s.max(1e-6)).collect();
        Ok(())
    }

    pub fn normalizer(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (&self.obs_mean, &self.obs_std, &self.act_mean, &self.act_std)
    }

    fn norm_obs(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .zip(self.obs_mean.iter().zip(self.obs_std.iter()))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    fn norm_obs_act(&self, obs: &[f64], act: &[f64]) -> Vec<f64> {
        let mut v = self.norm_obs(obs);
        v.extend(
            act.iter()
                .zip(self.act_mean.iter().zip(self.act_std.iter()))
                .map(|(x, (m, s))| (x - m) / s),
        );
        v
    }

    /// Potential-shaped logit `f(s, a, s') = g(s, a) + gamma h(s') - h(s)`.
    pub fn shaped_score(&self, obs: &[f64], action: &[f64], next_obs: &[f64]) -> Result<f64> {
        let g = self.reward_net.forward(&self.norm_obs_act(obs, action))?[0];
        let h_s = self.shaping_net.forward(&self.norm_obs(obs))?[0];
        let h_next = self.shaping_net.forward(&self.norm_obs(next_obs))?[0];
        Ok(g + self.gamma * h_next - h_s)
    }

    /// Accumulates `coeff * df/dparams` into the two gradient buffers.
    fn accumulate_score_grads(
        &self,
        obs: &[f64],
        action: &[f64],
        next_obs: &[f64],
        coeff: f64,
        g_grads: &mut [f64],
        h_grads: &mut [f64],
    ) -> Result<()> {
        self.reward_net
            .backward_into(&self.norm_obs_act(obs, action), &[coeff], g_grads)?;
        self.shaping_net
            .backward_into(&self.norm_obs(next_obs), &[coeff * self.gamma], h_grads)?;
        self.shaping_net
            .backward_into(&self.norm_obs(obs), &[-coeff], h_grads)?;
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Discriminator probability that `(s, a, s')` came from the expert,
/// given the generator's log-density at `(s, a)`. Computed in log space
/// as `sigmoid(f - log pi)`, which is total for any finite inputs.
pub fn disc_forward(
    d: &DiscriminatorNet,
    obs: &[f64],
    action: &[f64],
    next_obs: &[f64],
    log_pi: f64,
) -> Result<f64> {
    Ok(sigmoid(d.shaped_score(obs, action, next_obs)? - log_pi))
}

/// Generator reward `log D - log(1 - D)`, which is exactly `f - log pi`;
/// clamped to `[-clamp, clamp]`.
pub fn airl_reward(
    d: &DiscriminatorNet,
    obs: &[f64],
    action: &[f64],
    next_obs: &[f64],
    log_pi: f64,
    clamp: f64,
) -> Result<f64> {
    let r = d.shaped_score(obs, action, next_obs)? - log_pi;
    Ok(r.clamp(-clamp, clamp))
}

/// A column batch of `(s, a, s')` transitions.
#[derive(Debug, Clone, Default)]
pub struct TransitionBatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub next_obs: Vec<Vec<f64>>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn push(&mut self, obs: Vec<f64>, action: Vec<f64>, next_obs: Vec<f64>) {
        self.obs.push(obs);
        self.actions.push(action);
        self.next_obs.push(next_obs);
    }

    pub fn select(&self, indices: &[usize]) -> TransitionBatch {
        let mut out = TransitionBatch::default();
        for &i in indices {
            out.push(
                self.obs[i].clone(),
                self.actions[i].clone(),
                self.next_obs[i].clone(),
            );
        }
        out
    }

    /// Per-dimension mean and standard deviation of the `s` and `a`
    /// columns, for discriminator input normalization.
    pub fn stats(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.len().max(1) as f64;
        let od = self.obs.first().map(|o| o.len()).unwrap_or(0);
        let ad = self.actions.first().map(|a| a.len()).unwrap_or(0);
        let mut om = vec![0.0; od];
        let mut am = vec![0.0; ad];
        for row in &self.obs {
            for (m, x) in om.iter_mut().zip(row) {
                *m += x / n;
            }
        }
        for row in &self.actions {
            for (m, x) in am.iter_mut().zip(row) {
                *m += x / n;
            }
        }
        let mut ov = vec![0.0; od];
        let mut av = vec![0.0; ad];
        for row in &self.obs {
            for ((v, m), x) in ov.iter_mut().zip(&om).zip(row) {
                *v += (x - m) * (x - m) / n;
            }
        }
        for row in &self.actions {
            for ((v, m), x) in av.iter_mut().zip(&am).zip(row) {
                *v += (x - m) * (x - m) / n;
            }
        }
        (
            om,
            ov.into_iter().map(f64::sqrt).collect(),
            am,
            av.into_iter().map(f64::sqrt).collect(),
        )
    }
}

/// Expert transitions harvested from the next policy inside the interval.
#[derive(Debug, Clone)]
pub struct ExpertBuffer {
    pub transitions: TransitionBatch,
    pub source: String,
}

/// Hand-off states of the previous policy at interval entry.
#[derive(Debug, Clone, Default)]
pub struct StartStateSet {
    pub states: Vec<EnvState>,
}

impl StartStateSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Where generator episodes begin.
pub enum StartSource<'a> {
    /// Sample uniformly from collected hand-off states (set-state).
    Set(&'a StartStateSet),
    /// Seeded environment resets (tabular oracle problems).
    Reset,
}

impl StartSource<'_> {
    fn begin(&self, env: &mut dyn Environment, rng: &mut Rng) -> Result<()> {
        match self {
            StartSource::Set(set) => {
                if set.is_empty() {
                    return Err(Error::Collection("empty start state set".into()));
                }
                let s = &set.states[rng.below(set.len())];
                env.set_state(s)
            }
            StartSource::Reset => {
                env.reset(rng.next_u64());
                Ok(())
            }
        }
    }
}

/// Object-safe subset of [`PolicyModel`] for collection loops that only
/// need sampling and densities.
pub trait PolicyModelDyn {
    fn sample_dyn(&self, obs: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
    fn log_prob_dyn(&self, obs: &[f64], action: &[f64]) -> Result<f64>;
}

impl<P: PolicyModel> PolicyModelDyn for P {
    fn sample_dyn(&self, obs: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.sample(obs, rng)
    }

    fn log_prob_dyn(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        self.log_prob(obs, action)
    }
}

/// Runs `policy` from seeded resets and records the state at each first
/// crossing into the interval window (one hand-off state per episode).
pub fn collect_start_states(
    policy: &dyn PolicyModelDyn,
    env: &mut dyn Environment,
    interval: &TransitionInterval,
    n_starts: usize,
    rng: &mut Rng,
) -> Result<StartStateSet> {
    let mut set = StartStateSet::default();
    let max_episodes = n_starts.saturating_mul(50).max(200);
    let mut episodes = 0usize;
    while set.len() < n_starts {
        if episodes >= max_episodes {
            return Err(Error::Collection(format!(
                "{} -> {}: collected only {}/{} hand-off states in {} episodes",
                interval.from.as_str(),
                interval.to.as_str(),
                set.len(),
                n_starts,
                episodes
            )));
        }
        episodes += 1;
        env.reset(rng.next_u64());
        loop {
            let obs = env.observe();
            let action = policy.sample_dyn(&obs, rng)?;
            let result = env.step(&action);
            if interval.contains(&result.state) {
                set.states.push(result.state);
                break;
            }
            if result.done {
                break;
            }
        }
    }
    Ok(set)
}

/// Runs `policy` in its own environment and keeps `(s, a, s')` records
/// whose source state satisfies the interval membership predicate.
pub fn collect_expert_transitions(
    policy: &dyn PolicyModelDyn,
    env: &mut dyn Environment,
    interval: &TransitionInterval,
    n_expert: usize,
    rng: &mut Rng,
) -> Result<ExpertBuffer> {
    let mut batch = TransitionBatch::default();
    let max_episodes = n_expert.saturating_mul(10).max(200);
    let mut episodes = 0usize;
    while batch.len() < n_expert {
        if episodes >= max_episodes {
            return Err(Error::Collection(format!(
                "expert {}: collected only {}/{} in-interval transitions in {} episodes",
                interval.to.as_str(),
                batch.len(),
                n_expert,
                episodes
            )));
        }
        episodes += 1;
        env.reset(rng.next_u64());
        loop {
            let state = env.state();
            let obs = env.observe();
            let action = policy.sample_dyn(&obs, rng)?;
            let result = env.step(&action);
            if interval.in_interval(&state) {
                batch.push(obs, action, result.obs.clone());
                if batch.len() == n_expert {
                    break;
                }
            }
            if result.done {
                break;
            }
        }
    }
    Ok(ExpertBuffer {
        transitions: batch,
        source: interval.to.as_str().to_string(),
    })
}

/// Collects hand-off states of `policy_a` on the task environment and
/// expert transitions of `policy_b` on its own sub-environment.
#[allow(clippy::too_many_arguments)]
pub fn collect_boundary_data(
    policy_a: &dyn PolicyModelDyn,
    policy_b: &dyn PolicyModelDyn,
    task_env: &mut dyn Environment,
    expert_env: &mut dyn Environment,
    interval: &TransitionInterval,
    n_starts: usize,
    n_expert: usize,
    stream: &RngStream,
) -> Result<(StartStateSet, ExpertBuffer)> {
    let mut rng_a = stream.derive("boundary-starts", 0);
    let starts = collect_start_states(policy_a, task_env, interval, n_starts, &mut rng_a)?;
    let mut rng_b = stream.derive("boundary-expert", 0);
    let expert = collect_expert_transitions(policy_b, expert_env, interval, n_expert, &mut rng_b)?;
    Ok((starts, expert))
}

/// Discriminator optimizer state (one Adam per sub-network).
#[derive(Debug, Clone)]
pub struct DiscOptimizer {
    g_opt: AdamState,
    h_opt: AdamState,
}

impl DiscOptimizer {
    pub fn new(d: &DiscriminatorNet, lr: f64) -> Self {
        DiscOptimizer {
            g_opt: AdamState::new(d.reward_net.param_count(), lr),
            h_opt: AdamState::new(d.shaping_net.param_count(), lr),
        }
    }
}

/// Diagnostics from one discriminator update.
#[derive(Debug, Clone)]
pub struct DiscReport {
    pub loss: f64,
    pub mean_d_expert: f64,
    pub mean_d_generator: f64,
}

/// Computes the binary logistic-regression gradient (expert labeled 1,
/// generator labeled 0) without applying it. Exposed separately so tests
/// can probe the gradient symmetry directly.
pub fn disc_gradients(
    d: &DiscriminatorNet,
    expert: &TransitionBatch,
    generator: &TransitionBatch,
    log_pi_expert: &[f64],
    log_pi_generator: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, DiscReport)> {
    if expert.is_empty() || generator.is_empty() {
        return Err(Error::Config("empty discriminator minibatch".into()));
    }
    let mut g_grads = vec![0.0; d.reward_net.param_count()];
    let mut h_grads = vec![0.0; d.shaping_net.param_count()];
    let mut loss = 0.0;
    let mut d_e = 0.0;
    let mut d_g = 0.0;
    let ne = expert.len() as f64;
    let ng = generator.len() as f64;
    for i in 0..expert.len() {
        let x = d.shaped_score(&expert.obs[i], &expert.actions[i], &expert.next_obs[i])?
            - log_pi_expert[i];
        let prob = sigmoid(x);
        d_e += prob / ne;
        loss += softplus(-x) / ne; // -ln D
        // d(-ln D)/df = D - 1
        d.accumulate_score_grads(
            &expert.obs[i],
            &expert.actions[i],
            &expert.next_obs[i],
            (prob - 1.0) / ne,
            &mut g_grads,
            &mut h_grads,
        )?;
    }
    for i in 0..generator.len() {
        let x = d.shaped_score(
            &generator.obs[i],
            &generator.actions[i],
            &generator.next_obs[i],
        )? - log_pi_generator[i];
        let prob = sigmoid(x);
        d_g += prob / ng;
        loss += softplus(x) / ng; // -ln(1 - D)
        // d(-ln(1-D))/df = D
        d.accumulate_score_grads(
            &generator.obs[i],
            &generator.actions[i],
            &generator.next_obs[i],
            prob / ng,
            &mut g_grads,
            &mut h_grads,
        )?;
    }
    Ok((
        g_grads,
        h_grads,
        DiscReport {
            loss,
            mean_d_expert: d_e,
            mean_d_generator: d_g,
        },
    ))
}

/// One logistic-regression step of the discriminator.
pub fn disc_update(
    d: &mut DiscriminatorNet,
    opt: &mut DiscOptimizer,
    expert: &TransitionBatch,
    generator: &TransitionBatch,
    log_pi_expert: &[f64],
    log_pi_generator: &[f64],
) -> Result<DiscReport> {
    let (g_grads, h_grads, report) =
        disc_gradients(d, expert, generator, log_pi_expert, log_pi_generator)?;
    if !report.loss.is_finite() {
        return Err(Error::NonFinite("discriminator loss"));
    }
    opt.g_opt.step(d.reward_net.params_mut(), &g_grads)?;
    opt.h_opt.step(d.shaping_net.params_mut(), &h_grads)?;
    Ok(report)
}

/// Adversarial trainer configuration (desk-scale defaults).
#[derive(Debug, Clone)]
pub struct AirlConfig {
    pub iterations: u32,
    pub gen_steps_per_iter: usize,
    /// Generator rollouts end at interval exit, env failure, or this cap.
    pub rollout_cap: u32,
    pub disc_steps_per_iter: u32,
    pub disc_minibatch: usize,
    pub disc_lr: f64,
    pub disc_hidden: usize,
    pub reward_clamp: f64,
    pub ppo: PpoConfig,
}

impl Default for AirlConfig {
    fn default() -> Self {
        AirlConfig {
            iterations: 200,
            gen_steps_per_iter: 2048,
            rollout_cap: 100,
            disc_steps_per_iter: 10,
            disc_minibatch: 128,
            disc_lr: 3e-4,
            disc_hidden: 100,
            reward_clamp: 20.0,
            ppo: PpoConfig {
                learning_rate: 1e-4,
                ..PpoConfig::default()
            },
        }
    }
}

/// One row of the convergence log
/// (`iteration,mean_d_expert,mean_d_generator,mean_airl_reward,fail_rate`).
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub iteration: u32,
    pub mean_d_expert: f64,
    pub mean_d_generator: f64,
    pub mean_airl_reward: f64,
    pub generator_fail_rate: f64,
}

/// Generator samples gathered in one iteration.
struct GenRollouts {
    batch: RolloutBatch,
    transitions: TransitionBatch,
    episodes: u32,
    failed_episodes: u32,
}

fn collect_generator_rollouts<P: PolicyModel>(
    policy: &P,
    value_net: &MlpNet,
    env: &mut dyn Environment,
    interval: &TransitionInterval,
    starts: &StartSource,
    cfg: &AirlConfig,
    rng: &mut Rng,
) -> Result<GenRollouts> {
    let mut batch = RolloutBatch::default();
    let mut transitions = TransitionBatch::default();
    let mut episodes = 0;
    let mut failed = 0;
    while batch.len() < cfg.gen_steps_per_iter {
        starts.begin(env, rng)?;
        if !interval.contains(&env.state()) {
            return Err(Error::Collection(
                "generator start state outside the transition interval".into(),
            ));
        }
        episodes += 1;
        let mut ep_steps = 0;
        loop {
            let obs = env.observe();
            let action = policy.sample(&obs, rng)?;
            let log_prob = policy.log_prob(&obs, &action)?;
            let value = value_net.forward(&obs)?[0];
            let result = env.step(&action);
            ep_steps += 1;
            let exited = !interval.contains(&result.state);
            let failed_now = result.signal == Signal::Fail;
            let done = failed_now || result.done || exited || ep_steps >= cfg.rollout_cap;
            transitions.push(obs.clone(), action.clone(), result.obs.clone());
            // Reward is filled in after the discriminator update.
            batch.push(obs, action, log_prob, 0.0, done, value);
            if done {
                if failed_now {
                    failed += 1;
                }
                break;
            }
        }
    }
    batch.bootstrap_value = 0.0;
    Ok(GenRollouts {
        batch,
        transitions,
        episodes,
        failed_episodes: failed,
    })
}

/// Trains the transition policy (generator) against expert data per the
/// alternating rollout / discriminator / policy-update scheme. Returns the
/// convergence log; the policy, value net, and discriminator are updated
/// in place. Zero iterations leave the policy exactly at initialization.
#[allow(clippy::too_many_arguments)]
pub fn train_transition_policy<P: PolicyModel>(
    policy: &mut P,
    value_net: &mut MlpNet,
    disc: &mut DiscriminatorNet,
    env: &mut dyn Environment,
    interval: &TransitionInterval,
    starts: StartSource,
    expert: &ExpertBuffer,
    cfg: &AirlConfig,
    stream: &RngStream,
) -> Result<Vec<ConvergenceRow>> {
    cfg.ppo.validate()?;
    if expert.transitions.is_empty() {
        return Err(Error::Collection("expert buffer is empty".into()));
    }
    // Expert-data input normalization, recorded on the discriminator.
    let (om, os, am, asd) = expert.transitions.stats();
    disc.set_normalizer(om, os, am, asd)?;

    let mut policy_opt = AdamState::new(policy.param_count(), cfg.ppo.learning_rate);
    let mut value_opt = AdamState::new(value_net.param_count(), cfg.ppo.learning_rate);
    let mut disc_opt = DiscOptimizer::new(disc, cfg.disc_lr);
    let mut rollout_rng = stream.derive("airl-rollout", 0);
    let mut disc_rng = stream.derive("airl-disc", 0);
    let mut update_rng = stream.derive("airl-update", 0);

    let mut log = Vec::with_capacity(cfg.iterations as usize);
    for iteration in 0..cfg.iterations {
        let mut rollouts = collect_generator_rollouts(
            policy,
            value_net,
            env,
            interval,
            &starts,
            cfg,
            &mut rollout_rng,
        )?;

        // Discriminator phase: binary logistic regression on minibatches.
        let mut d_e_sum = 0.0;
        let mut d_g_sum = 0.0;
        for _ in 0..cfg.disc_steps_per_iter {
            let e_idx: Vec<usize> = (0..cfg.disc_minibatch)
                .map(|_| disc_rng.below(expert.transitions.len()))
                .collect();
            let g_idx: Vec<usize> = (0..cfg.disc_minibatch)
                .map(|_| disc_rng.below(rollouts.transitions.len()))
                .collect();
            let e_mb = expert.transitions.select(&e_idx);
            let g_mb = rollouts.transitions.select(&g_idx);
            let mut lp_e = Vec::with_capacity(e_mb.len());
            for i in 0..e_mb.len() {
                lp_e.push(policy.log_prob(&e_mb.obs[i], &e_mb.actions[i])?);
            }
            let lp_g: Vec<f64> = g_idx
                .iter()
                .map(|&i| rollouts.batch.log_probs[i])
                .collect();
            let report = disc_update(disc, &mut disc_opt, &e_mb, &g_mb, &lp_e, &lp_g)?;
            d_e_sum += report.mean_d_expert;
            d_g_sum += report.mean_d_generator;
        }

        // Reward phase: discriminator log-odds for every generator sample.
        let mut reward_sum = 0.0;
        for i in 0..rollouts.batch.len() {
            let r = airl_reward(
                disc,
                &rollouts.transitions.obs[i],
                &rollouts.transitions.actions[i],
                &rollouts.transitions.next_obs[i],
                rollouts.batch.log_probs[i],
                cfg.reward_clamp,
            )?;
            reward_sum += r;
            rollouts.batch.rewards[i] = r;
        }

        // Generator phase: one PPO update on the relabeled rollouts.
        let (adv, ret) = compute_gae(&rollouts.batch, cfg.ppo.gamma, cfg.ppo.gae_lambda);
        ppo_update(
            policy,
            &mut policy_opt,
            value_net,
            &mut value_opt,
            &rollouts.batch,
            &adv,
            &ret,
            &cfg.ppo,
            &mut update_rng,
        )?;

        let row = ConvergenceRow {
            iteration,
            mean_d_expert: d_e_sum / cfg.disc_steps_per_iter as f64,
            mean_d_generator: d_g_sum / cfg.disc_steps_per_iter as f64,
            mean_airl_reward: reward_sum / rollouts.batch.len() as f64,
            generator_fail_rate: rollouts.failed_episodes as f64 / rollouts.episodes.max(1) as f64,
        };
        if iteration % 20 == 0 {
            log::info!(
                "airl iter {iteration}: D(expert) {:.3} D(gen) {:.3} reward {:.3} fail {:.2}",
                row.mean_d_expert,
                row.mean_d_generator,
                row.mean_airl_reward,
                row.generator_fail_rate
            );
        }
        log.push(row);
    }
    Ok(log)
}
