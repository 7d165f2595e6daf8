//! Proximal policy optimization with clipped surrogate objective and
//! generalized advantage estimation.
//!
//! Used three ways: pre-training subtask policies on their restricted
//! environments, training the end-to-end single baseline, and as the
//! generator update inside the adversarial transition-policy trainer.

use crate::env::{EnvState, Environment, Signal, StepResult, SubtaskId};
use crate::nn::{AdamState, MlpNet, PolicyModel};
use crate::store::rng::{Rng, RngStream};
use crate::{Error, Result};

/// Ordered transition samples plus the value bootstrap at the rollout tail.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub values: Vec<f64>,
    /// Value estimate of the state after the last sample; only consulted
    /// when that sample is not terminal.
    pub bootstrap_value: f64,
    /// Total shaped return of each episode completed inside the rollout.
    pub episode_returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn push(
        &mut self,
        obs: Vec<f64>,
        action: Vec<f64>,
        log_prob: f64,
        reward: f64,
        done: bool,
        value: f64,
    ) {
        self.obs.push(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.dones.push(done);
        self.values.push(value);
    }
}

/// PPO hyperparameters.
#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub epochs: u32,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Epochs stop early once the approximate KL to the collection policy
    /// exceeds this; keeps probability ratios inside the trust region.
    pub target_kl: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            epochs: 10,
            minibatch_size: 64,
            learning_rate: 1e-3,
            entropy_coef: 0.01,
            value_coef: 0.5,
            target_kl: 0.05,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, range: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{field} out of range {range}")))
            }
        };
        check(self.gamma > 0.0 && self.gamma <= 1.0, "gamma", "(0,1]")?;
        check(
            (0.0..=1.0).contains(&self.gae_lambda),
            "gae_lambda",
            "[0,1]",
        )?;
        check(self.clip_epsilon > 0.0, "clip_epsilon", "(0,inf)")?;
        check(self.epochs > 0, "epochs", ">=1")?;
        check(self.minibatch_size > 0, "minibatch_size", ">=1")?;
        check(self.learning_rate > 0.0, "learning_rate", "(0,inf)")?;
        check(self.entropy_coef >= 0.0, "entropy_coef", ">=0")?;
        check(self.value_coef >= 0.0, "value_coef", ">=0")?;
        check(self.target_kl > 0.0, "target_kl", "(0,inf)")?;
        Ok(())
    }
}

/// What a trainer is optimizing for; selects reward shaping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainTask {
    Subtask(SubtaskId),
    /// End-to-end baseline on the full task environment.
    Single,
}

impl TrainTask {
    pub fn as_str(&self) -> String {
        match self {
            TrainTask::Subtask(id) => id.as_str().to_string(),
            TrainTask::Single => "single".to_string(),
        }
    }
}

/// Reward shaping coefficients; see the config documentation for the
/// per-task formulas.
#[derive(Debug, Clone)]
pub struct ShapingCoefs {
    /// Scales per-step progress `dx`.
    pub progress: f64,
    /// Bonus when a subgoal fires.
    pub pass_bonus: f64,
    /// Penalty on a fail signal.
    pub fail_penalty: f64,
    /// Per-step bonus while braked (`|vx| < 0.1`).
    pub brake_bonus: f64,
}

impl Default for ShapingCoefs {
    fn default() -> Self {
        ShapingCoefs {
            progress: 1.0,
            pass_bonus: 10.0,
            fail_penalty: 10.0,
            brake_bonus: 1.0,
        }
    }
}

/// Shaped per-step training reward.
pub fn shaped_reward(
    task: TrainTask,
    coefs: &ShapingCoefs,
    prev: &EnvState,
    result: &StepResult,
) -> f64 {
    let dx = match (prev, &result.state) {
        (EnvState::Hurdle(a), EnvState::Hurdle(b)) => b.x - a.x,
        (EnvState::Patrol(a), EnvState::Patrol(b)) => b.x - a.x,
        _ => 0.0,
    };
    let slow = match &result.state {
        EnvState::Patrol(s) => s.vx.abs() < crate::env::patrol::BRAKE_SPEED,
        _ => false,
    };
    let fail = result.signal == Signal::Fail;
    match task {
        TrainTask::Subtask(SubtaskId::Run) => coefs.progress * dx,
        TrainTask::Subtask(SubtaskId::Jump) | TrainTask::Single => {
            coefs.progress * dx + coefs.pass_bonus * result.subgoal_delta as f64
                - if fail { coefs.fail_penalty } else { 0.0 }
        }
        TrainTask::Subtask(SubtaskId::MoveRight) => coefs.progress * dx,
        TrainTask::Subtask(SubtaskId::MoveLeft) => -coefs.progress * dx,
        TrainTask::Subtask(SubtaskId::Brake) => {
            if slow {
                coefs.brake_bonus
            } else {
                0.0
            }
        }
    }
}

/// Collects exactly `n_steps` samples, resetting on episode ends with
/// seeds drawn from `rng`. Deterministic for a given rng state.
pub fn collect_rollout<P: PolicyModel>(
    policy: &P,
    value_net: &MlpNet,
    env: &mut dyn Environment,
    task: TrainTask,
    coefs: &ShapingCoefs,
    n_steps: usize,
    rng: &mut Rng,
) -> Result<RolloutBatch> {
    if n_steps == 0 {
        return Err(Error::Config("rollout length must be positive".into()));
    }
    let mut batch = RolloutBatch::default();
    env.reset(rng.next_u64());
    let mut ep_return = 0.0;
    let mut last_done = false;
    for _ in 0..n_steps {
        let obs = env.observe();
        let prev = env.state();
        let action = policy.sample(&obs, rng)?;
        let log_prob = policy.log_prob(&obs, &action)?;
        let value = value_net.forward(&obs)?[0];
        let result = env.step(&action);
        let reward = shaped_reward(task, coefs, &prev, &result);
        ep_return += reward;
        last_done = result.done;
        batch.push(obs, action, log_prob, reward, result.done, value);
        if result.done {
            batch.episode_returns.push(ep_return);
            ep_return = 0.0;
            env.reset(rng.next_u64());
        }
    }
    batch.bootstrap_value = if last_done {
        0.0
    } else {
        value_net.forward(&env.observe())?[0]
    };
    Ok(batch)
}

/// Generalized advantage estimation.
///
/// `delta_t = r_t + gamma * V(s_{t+1}) * (1 - done) - V(s_t)` and
/// `A_t = delta_t + gamma * lambda * (1 - done) * A_{t+1}`, computed by the
/// usual backward recursion. Returns `(normalized advantages, returns)`
/// where `returns = A + V` uses the raw advantages and the normalization
/// is to zero mean and unit standard deviation over the batch.
pub fn compute_gae(batch: &RolloutBatch, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = batch.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let not_done = if batch.dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n {
            batch.values[t + 1]
        } else {
            batch.bootstrap_value
        };
        let delta = batch.rewards[t] + gamma * next_value * not_done - batch.values[t];
        acc = delta + gamma * lambda * not_done * acc;
        adv[t] = acc;
    }
    let returns: Vec<f64> = adv.iter().zip(batch.values.iter()).map(|(a, v)| a + v).collect();
    let mean = adv.iter().sum::<f64>() / n.max(1) as f64;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n.max(1) as f64;
    let std = var.sqrt();
    if std >= 1e-8 {
        for a in &mut adv {
            *a = (*a - mean) / std;
        }
    } else {
        for a in &mut adv {
            *a -= mean;
        }
    }
    (adv, returns)
}

/// Per-update diagnostics.
#[derive(Debug, Clone)]
pub struct UpdateReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

/// One PPO update over a batch: for each epoch, shuffled minibatches of
/// the clipped surrogate with entropy bonus for the policy, and squared
/// error to the returns for the value net.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<P: PolicyModel>(
    policy: &mut P,
    policy_opt: &mut AdamState,
    value_net: &mut MlpNet,
    value_opt: &mut AdamState,
    batch: &RolloutBatch,
    advantages: &[f64],
    returns: &[f64],
    config: &PpoConfig,
    rng: &mut Rng,
) -> Result<UpdateReport> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Config("empty batch passed to ppo update".into()));
    }
    let mut ratio_sum = 0.0;
    let mut ratio_count = 0usize;
    let mut clipped = 0usize;
    let mut policy_loss_sum = 0.0;
    let mut value_loss_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut minibatches = 0usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut policy_grads = vec![0.0; policy.param_count()];
    let mut value_grads = vec![0.0; value_net.param_count()];

    'epochs: for _ in 0..config.epochs {
        rng.shuffle(&mut indices);
        for chunk in indices.chunks(config.minibatch_size) {
            let m = chunk.len() as f64;
            policy_grads.iter_mut().for_each(|g| *g = 0.0);
            value_grads.iter_mut().for_each(|g| *g = 0.0);
            let mut surrogate = 0.0;
            let mut ent_total = 0.0;
            let mut vloss = 0.0;
            let mut kl_sum = 0.0;
            for &i in chunk {
                let obs = &batch.obs[i];
                let action = &batch.actions[i];
                let adv = advantages[i];
                let new_lp = policy.log_prob(obs, action)?;
                let ratio = (new_lp - batch.log_probs[i]).exp();
                kl_sum += (ratio - 1.0) - (new_lp - batch.log_probs[i]);
                ratio_sum += ratio;
                ratio_count += 1;
                if (ratio - 1.0).abs() > config.clip_epsilon {
                    clipped += 1;
                }
                let unclipped = ratio * adv;
                let clip_ratio = ratio.clamp(1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
                let clipped_term = clip_ratio * adv;
                surrogate += unclipped.min(clipped_term);
                // Gradient flows through the selected branch; the clipped
                // branch is constant when the ratio sits outside the window.
                let grad_flows = unclipped <= clipped_term
                    || (ratio >= 1.0 - config.clip_epsilon && ratio <= 1.0 + config.clip_epsilon);
                let logp_coeff = if grad_flows { -adv * ratio / m } else { 0.0 };
                let ent_coeff = -config.entropy_coef / m;
                policy.accumulate_grads(obs, action, logp_coeff, ent_coeff, &mut policy_grads)?;
                ent_total += policy.entropy(obs)?;

                let v = value_net.forward(obs)?[0];
                let err = v - returns[i];
                vloss += err * err;
                value_net.backward_into(
                    obs,
                    &[2.0 * err * config.value_coef / m],
                    &mut value_grads,
                )?;
            }
            let pl = -surrogate / m - config.entropy_coef * ent_total / m;
            let vl = vloss / m;
            if !pl.is_finite() || !vl.is_finite() {
                return Err(Error::NonFinite("ppo loss"));
            }
            policy_loss_sum += pl;
            value_loss_sum += vl;
            entropy_sum += ent_total / m;
            minibatches += 1;

            if kl_sum / m > config.target_kl {
                break 'epochs;
            }
            let mut params = policy.params();
            policy_opt.step(&mut params, &policy_grads)?;
            policy.set_params(&params)?;
            value_opt.step(value_net.params_mut(), &value_grads)?;
        }
    }
    Ok(UpdateReport {
        policy_loss: policy_loss_sum / minibatches as f64,
        value_loss: value_loss_sum / minibatches as f64,
        entropy: entropy_sum / minibatches as f64,
        mean_ratio: ratio_sum / ratio_count as f64,
        clip_fraction: clipped as f64 / ratio_count as f64,
    })
}

/// One point of a training curve (written as CSV `step,mean_return,success_rate`).
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub env_steps: u64,
    pub mean_return: f64,
    pub success_rate: f64,
}

/// Subtask training budget and evaluation cadence.
#[derive(Debug, Clone)]
pub struct TrainBudget {
    pub max_env_steps: u64,
    pub rollout_len: usize,
    pub eval_every_rollouts: u32,
    pub eval_episodes: u32,
    /// Required eval success rate; `None` trains to the full budget and
    /// always keeps the final policy (used for the single baseline).
    pub success_threshold: Option<f64>,
}

/// A trained policy plus its curve; `reached_threshold` distinguishes a
/// genuine pass from budget exhaustion.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: crate::nn::GaussianPolicy,
    pub value_net: MlpNet,
    pub curve: Vec<CurvePoint>,
    pub reached_threshold: bool,
    pub env_steps: u64,
}

/// Mean shaped return and success rate of the (stochastic) policy over
/// seeded evaluation episodes.
pub fn evaluate_policy<P: PolicyModel>(
    policy: &P,
    env: &mut dyn Environment,
    task: TrainTask,
    coefs: &ShapingCoefs,
    episodes: u32,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    let mut returns = Vec::with_capacity(episodes as usize);
    let mut successes = 0u32;
    for _ in 0..episodes {
        env.reset(rng.next_u64());
        let mut total = 0.0;
        loop {
            let obs = env.observe();
            let prev = env.state();
            let action = policy.sample(&obs, rng)?;
            let result = env.step(&action);
            total += shaped_reward(task, coefs, &prev, &result);
            if result.done {
                let success = match task {
                    TrainTask::Single => result.signal != Signal::Fail,
                    _ => result.signal == Signal::Success,
                };
                if success {
                    successes += 1;
                }
                break;
            }
        }
        returns.push(total);
    }
    let mean_return = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
    Ok((mean_return, successes as f64 / episodes as f64))
}

/// Trains a fresh Gaussian policy on `env` until the success threshold or
/// the step budget is reached. Policy and value nets are two-layer tanh
/// networks with 32 units.
pub fn train_subtask(
    env: &mut dyn Environment,
    task: TrainTask,
    config: &PpoConfig,
    budget: &TrainBudget,
    coefs: &ShapingCoefs,
    stream: &RngStream,
) -> Result<TrainOutcome> {
    config.validate()?;
    let name = task.as_str();
    let mut init_rng = stream.derive(&format!("{name}-init"), 0);
    let mut policy = crate::nn::GaussianPolicy::new(
        &[env.obs_dim(), 32, 32, env.action_dim()],
        crate::nn::Activation::Tanh,
        &mut init_rng,
    )?;
    let mut value_net = MlpNet::glorot(
        &[env.obs_dim(), 32, 32, 1],
        crate::nn::Activation::Tanh,
        &mut init_rng,
    )?;
    let mut policy_opt = AdamState::new(policy.param_count(), config.learning_rate);
    let mut value_opt = AdamState::new(value_net.param_count(), config.learning_rate);
    let mut rollout_rng = stream.derive(&format!("{name}-rollout"), 0);
    let mut update_rng = stream.derive(&format!("{name}-update"), 0);

    let mut curve = Vec::new();
    let mut env_steps = 0u64;
    let mut rollouts = 0u32;
    let mut reached = false;
    while env_steps < budget.max_env_steps {
        let batch = collect_rollout(
            &policy,
            &value_net,
            env,
            task,
            coefs,
            budget.rollout_len,
            &mut rollout_rng,
        )?;
        env_steps += batch.len() as u64;
        let (adv, ret) = compute_gae(&batch, config.gamma, config.gae_lambda);
        ppo_update(
            &mut policy,
            &mut policy_opt,
            &mut value_net,
            &mut value_opt,
            &batch,
            &adv,
            &ret,
            config,
            &mut update_rng,
        )?;
        rollouts += 1;
        if rollouts % budget.eval_every_rollouts == 0 {
            let mut eval_rng = stream.derive(&format!("{name}-eval"), rollouts as u64);
            let (mean_return, success_rate) = evaluate_policy(
                &policy,
                env,
                task,
                coefs,
                budget.eval_episodes,
                &mut eval_rng,
            )?;
            log::info!(
                "{name}: steps {env_steps} return {mean_return:.3} success {success_rate:.2}"
            );
            curve.push(CurvePoint {
                env_steps,
                mean_return,
                success_rate,
            });
            if let Some(th) = budget.success_threshold {
                if success_rate >= th {
                    reached = true;
                    break;
                }
            }
        }
    }
    if budget.success_threshold.is_none() {
        reached = true;
    }
    // Final evaluation if the loop never produced one.
    if curve.is_empty() {
        let mut eval_rng = stream.derive(&format!("{name}-eval"), u64::MAX);
        let (mean_return, success_rate) =
            evaluate_policy(&policy, env, task, coefs, budget.eval_episodes, &mut eval_rng)?;
        curve.push(CurvePoint {
            env_steps,
            mean_return,
            success_rate,
        });
        if let Some(th) = budget.success_threshold {
            reached = success_rate >= th;
        }
    }
    Ok(TrainOutcome {
        policy,
        value_net,
        curve,
        reached_threshold: reached,
        env_steps,
    })
}

#[cfg(test)]
mod tests;
