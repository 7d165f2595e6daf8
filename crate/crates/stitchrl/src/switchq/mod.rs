//! Binary-action deep Q-learning for hand-off timing.
//!
//! A Q-network over the observation space scores two actions, *stay*
//! (keep the transition policy) and *switch* (hand control to the next
//! subtask policy). Episodes start from collected hand-off states; a
//! switch earns the terminal success/fail reward of the next policy's
//! subgoal attempt, staying earns 0 unless the step fails or leaves the
//! interval. Targets use double Q-learning: the online network chooses
//! the bootstrap action, the periodically synced target network scores it.

use crate::env::{Environment, Signal, StepResult, TransitionInterval};
use crate::nn::{Activation, AdamState, MlpNet, PolicyModel};
use crate::store::rng::{Rng, RngStream};
use crate::airl::StartStateSet;
use crate::{Error, Result};

pub const STAY: usize = 0;
pub const SWITCH: usize = 1;

/// Online Q-network plus its target snapshot.
#[derive(Debug, Clone)]
pub struct SwitchQNet {
    q_net: MlpNet,
    target_net: MlpNet,
    sync_every_updates: u32,
    updates_since_sync: u32,
}

impl SwitchQNet {
    /// Two-layer ReLU network with `hidden` units (128 by default).
    pub fn new(obs_dim: usize, hidden: usize, sync_every_updates: u32, rng: &mut Rng) -> Result<Self> {
        let q_net = MlpNet::glorot(&[obs_dim, hidden, hidden, 2], Activation::Relu, rng)?;
        let target_net = q_net.clone();
        Ok(SwitchQNet {
            q_net,
            target_net,
            sync_every_updates,
            updates_since_sync: 0,
        })
    }

    pub fn from_net(q_net: MlpNet, sync_every_updates: u32) -> Result<Self> {
        if q_net.output_dim() != 2 {
            return Err(Error::Dimension {
                context: "switch q-net output",
                expected: 2,
                got: q_net.output_dim(),
            });
        }
        let target_net = q_net.clone();
        Ok(SwitchQNet {
            q_net,
            target_net,
            sync_every_updates,
            updates_since_sync: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.q_net.input_dim()
    }

    pub fn q_net(&self) -> &MlpNet {
        &self.q_net
    }

    pub fn q_net_mut(&mut self) -> &mut MlpNet {
        &mut self.q_net
    }

    pub fn target_net(&self) -> &MlpNet {
        &self.target_net
    }

    pub fn online_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.q_net.forward(obs)
    }

    pub fn target_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.target_net.forward(obs)
    }

    /// Greedy action of the online network; ties break toward stay.
    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        let q = self.online_values(obs)?;
        Ok(if q[SWITCH] > q[STAY] { SWITCH } else { STAY })
    }

    /// Registers one applied update; copies online parameters into the
    /// target every `sync_every_updates` updates.
    pub fn record_update(&mut self) {
        self.updates_since_sync += 1;
        if self.updates_since_sync >= self.sync_every_updates {
            self.sync_target();
        }
    }

    pub fn sync_target(&mut self) {
        self.target_net = self.q_net.clone();
        self.updates_since_sync = 0;
    }
}

/// Double-Q bootstrap target: `r` when terminal, else
/// `r + gamma * Q_target(s', argmax_a Q_online(s', a))`.
pub fn double_q_target(
    q: &SwitchQNet,
    reward: f64,
    next_obs: &[f64],
    terminal: bool,
    gamma: f64,
) -> Result<f64> {
    if terminal {
        return Ok(reward);
    }
    let a = q.greedy(next_obs)?;
    Ok(reward + gamma * q.target_values(next_obs)?[a])
}

/// One stored experience.
#[derive(Debug, Clone)]
pub struct Record {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity FIFO ring with uniform (with-replacement) sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Record>,
    head: usize,
    insertions: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            data: Vec::new(),
            head: 0,
            insertions: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn insertions(&self) -> u64 {
        self.insertions
    }

    pub fn push(&mut self, record: Record) {
        if self.data.len() < self.capacity {
            self.data.push(record);
        } else {
            self.data[self.head] = record;
            self.head = (self.head + 1) % self.capacity;
        }
        self.insertions += 1;
    }

    /// Oldest-first contents (test and audit convenience).
    pub fn iter_fifo(&self) -> impl Iterator<Item = &Record> {
        self.data[self.head..].iter().chain(self.data[..self.head].iter())
    }

    pub fn sample_indices(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if self.is_empty() {
            return Err(Error::Collection("sampling from an empty replay buffer".into()));
        }
        Ok((0..batch_size).map(|_| rng.below(self.data.len())).collect())
    }

    pub fn get(&self, idx: usize) -> &Record {
        &self.data[idx]
    }
}

/// Epsilon-greedy action over the online network.
pub fn epsilon_greedy(q: &SwitchQNet, obs: &[f64], epsilon: f64, rng: &mut Rng) -> Result<usize> {
    if rng.next_f64() < epsilon {
        Ok(rng.below(2))
    } else {
        q.greedy(obs)
    }
}

/// Terminal rewards for the switch decision.
#[derive(Debug, Clone, Copy)]
pub struct RewardSpec {
    pub r_success: f64,
    pub r_fail: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            r_success: 1.0,
            r_fail: -1.0,
        }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_success > 0.0 && self.r_fail < 0.0) {
            return Err(Error::Config(format!(
                "reward spec requires r_success > 0 > r_fail, got {} and {}",
                self.r_success, self.r_fail
            )));
        }
        Ok(())
    }
}

/// Switch trainer configuration (desk-scale defaults).
#[derive(Debug, Clone)]
pub struct SwitchConfig {
    /// Budget counted in transition-interval steps.
    pub budget_interval_steps: u64,
    pub buffer_capacity: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub hidden: usize,
    pub sync_every_updates: u32,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Cap on the next policy's subgoal attempt after a switch.
    pub subgoal_attempt_cap: u32,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            budget_interval_steps: 100_000,
            buffer_capacity: 100_000,
            minibatch_size: 64,
            learning_rate: 1e-4,
            gamma: 0.99,
            hidden: 128,
            sync_every_updates: 500,
            eps_start: 1.0,
            eps_end: 0.05,
            subgoal_attempt_cap: 400,
        }
    }
}

/// One row of the training log
/// (`episode,switch_step_index,outcome,epsilon,mean_q_stay,mean_q_switch`).
#[derive(Debug, Clone)]
pub struct SwitchLogRow {
    pub episode: u64,
    /// Interval step at which the switch fired, or -1 for stay-to-the-end.
    pub switch_step_index: i64,
    pub outcome: &'static str,
    pub epsilon: f64,
    pub mean_q_stay: f64,
    pub mean_q_switch: f64,
}

/// Bookkeeping counters: every interval step must produce exactly one
/// replay record (immediate stay record or the deferred switch record).
#[derive(Debug, Clone, Default)]
pub struct SwitchStats {
    pub episodes: u64,
    pub interval_steps: u64,
    pub records_stored: u64,
    pub updates: u64,
    pub successes: u64,
}

/// Outcome of the next policy's subgoal attempt from a hand-off state.
fn run_subgoal_attempt(
    policy_b: &dyn crate::airl::PolicyModelDyn,
    env: &mut dyn Environment,
    cap: u32,
    rng: &mut Rng,
) -> Result<(bool, Vec<f64>)> {
    let mut last_obs = env.observe();
    for _ in 0..cap {
        let action = policy_b.sample_dyn(&last_obs, rng)?;
        let result = env.step(&action);
        last_obs = result.obs;
        if result.subgoal_delta == 1 {
            return Ok((true, last_obs));
        }
        if result.signal == Signal::Fail || result.done {
            return Ok((false, last_obs));
        }
    }
    Ok((false, last_obs))
}

/// Trains a switch Q-network per the episode scheme described at module
/// level. Returns the trained network, the per-episode log, and audit
/// counters.
#[allow(clippy::too_many_arguments)]
pub fn train_switcher<P: PolicyModel>(
    transition_policy: &P,
    policy_b: &dyn crate::airl::PolicyModelDyn,
    env: &mut dyn Environment,
    interval: &TransitionInterval,
    starts: &StartStateSet,
    rewards: RewardSpec,
    cfg: &SwitchConfig,
    stream: &RngStream,
) -> Result<(SwitchQNet, Vec<SwitchLogRow>, SwitchStats)> {
    rewards.validate()?;
    if starts.is_empty() {
        return Err(Error::Collection("empty hand-off start set".into()));
    }
    let mut init_rng = stream.derive("switch-init", 0);
    let mut q = SwitchQNet::new(env.obs_dim(), cfg.hidden, cfg.sync_every_updates, &mut init_rng)?;
    let mut opt = AdamState::new(q.q_net.param_count(), cfg.learning_rate);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rng = stream.derive("switch-episodes", 0);
    let mut sample_rng = stream.derive("switch-replay", 0);
    let mut log = Vec::new();
    let mut stats = SwitchStats::default();
    let mut grads = vec![0.0; q.q_net.param_count()];

    while stats.interval_steps < cfg.budget_interval_steps {
        let start = &starts.states[rng.below(starts.len())];
        env.set_state(start)?;
        stats.episodes += 1;
        // Linear epsilon anneal over the first half of the budget.
        let frac =
            (stats.interval_steps as f64 / (cfg.budget_interval_steps as f64 / 2.0)).min(1.0);
        let epsilon = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;

        let mut switch_step: i64 = -1;
        let mut outcome: &'static str = "fail";
        let mut q_stay_sum = 0.0;
        let mut q_switch_sum = 0.0;
        let mut consults = 0u32;
        let mut step_in_episode = 0i64;
        loop {
            let obs = env.observe();
            let action = transition_policy.sample(&obs, &mut rng)?;
            let result: StepResult = env.step(&action);
            stats.interval_steps += 1;
            step_in_episode += 1;
            let next_obs = result.obs.clone();
            let qv = q.online_values(&next_obs)?;
            q_stay_sum += qv[STAY];
            q_switch_sum += qv[SWITCH];
            consults += 1;
            let a_q = epsilon_greedy(&q, &next_obs, epsilon, &mut rng)?;
            let failed_now = result.signal == Signal::Fail;
            let exited = !interval.contains(&result.state);

            if a_q == SWITCH && !failed_now {
                // Hand control to the next policy; the decision state is
                // the arrival state, and the eventual terminal record is
                // stored once the subgoal resolves.
                switch_step = step_in_episode;
                let (success, final_obs) =
                    run_subgoal_attempt(policy_b, env, cfg.subgoal_attempt_cap, &mut rng)?;
                buffer.push(Record {
                    obs: next_obs,
                    action: SWITCH,
                    reward: if success { rewards.r_success } else { rewards.r_fail },
                    next_obs: final_obs,
                    terminal: true,
                });
                stats.records_stored += 1;
                if success {
                    outcome = "success";
                    stats.successes += 1;
                }
                break;
            }
            // Stay branch (also taken when the step itself failed).
            if failed_now || exited {
                buffer.push(Record {
                    obs,
                    action: STAY,
                    reward: rewards.r_fail,
                    next_obs,
                    terminal: true,
                });
                stats.records_stored += 1;
                break;
            }
            buffer.push(Record {
                obs,
                action: STAY,
                reward: 0.0,
                next_obs,
                terminal: false,
            });
            stats.records_stored += 1;
        }

        // One minibatch double-Q update per episode.
        if buffer.len() >= cfg.minibatch_size {
            let idx = buffer.sample_indices(cfg.minibatch_size, &mut sample_rng)?;
            grads.iter_mut().for_each(|g| *g = 0.0);
            let m = idx.len() as f64;
            let mut loss = 0.0;
            for &i in &idx {
                let rec = buffer.get(i);
                let y = double_q_target(&q, rec.reward, &rec.next_obs, rec.terminal, cfg.gamma)?;
                let qv = q.online_values(&rec.obs)?;
                let err = qv[rec.action] - y;
                loss += err * err / m;
                let mut og = [0.0, 0.0];
                og[rec.action] = 2.0 * err / m;
                q.q_net.backward_into(&rec.obs, &og, &mut grads)?;
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite("switch q loss"));
            }
            opt.step(q.q_net.params_mut(), &grads)?;
            q.record_update();
            stats.updates += 1;
        }

        log.push(SwitchLogRow {
            episode: stats.episodes,
            switch_step_index: switch_step,
            outcome,
            epsilon,
            mean_q_stay: q_stay_sum / consults.max(1) as f64,
            mean_q_switch: q_switch_sum / consults.max(1) as f64,
        });
    }
    Ok((q, log, stats))
}

/// Hand-off timing strategy under evaluation.
#[derive(Debug, Clone, Copy)]
pub enum SwitchStrategy<'a> {
    /// Greedy learned switcher; force-switch at interval exit.
    Learned(&'a SwitchQNet),
    /// Switch at the first decision point.
    Immediate,
    /// Ride the transition policy to the interval exit.
    AtExit,
}

/// Success rate of the hand-off protocol from held start states.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_switcher<P: PolicyModel>(
    transition_policy: &P,
    policy_b: &dyn crate::airl::PolicyModelDyn,
    env: &mut dyn Environment,
    interval: &TransitionInterval,
    starts: &StartStateSet,
    strategy: SwitchStrategy,
    episodes: u32,
    attempt_cap: u32,
    rng: &mut Rng,
) -> Result<f64> {
    if starts.is_empty() {
        return Err(Error::Collection("empty hand-off start set".into()));
    }
    let mut successes = 0u32;
    for _ in 0..episodes {
        let start = &starts.states[rng.below(starts.len())];
        env.set_state(start)?;
        loop {
            let obs = env.observe();
            let action = transition_policy.sample(&obs, rng)?;
            let result = env.step(&action);
            if result.signal == Signal::Fail {
                break;
            }
            let exited = !interval.contains(&result.state);
            let switch_now = match strategy {
                SwitchStrategy::Immediate => true,
                SwitchStrategy::AtExit => exited,
                SwitchStrategy::Learned(q) => exited || q.greedy(&result.obs)? == SWITCH,
            };
            if switch_now {
                let (success, _) = run_subgoal_attempt(policy_b, env, attempt_cap, rng)?;
                if success {
                    successes += 1;
                }
                break;
            }
        }
    }
    Ok(successes as f64 / episodes as f64)
}

#[cfg(test)]
mod tests;
