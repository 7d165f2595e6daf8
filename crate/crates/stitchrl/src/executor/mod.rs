//! Meta-controller: composes frozen subtask policies, transition policies,
//! and switch networks over a declarative task plan, and the evaluation
//! harness that produces the four-mode comparison table.
//!
//! The protocol per consecutive subtask pair `(a, b)`:
//!
//! * with a registered interval, the active policy runs until the state
//!   crosses into the window; then depending on the mode control passes to
//!   `b` immediately (`no_tp`), to the transition policy until the window
//!   exit (`tp`), or to the transition policy with the switch network
//!   consulted greedily each step (`tp_q`);
//! * without an interval the pair advances when a subgoal fires;
//! * `single` runs one monolithic policy for the whole episode.
//!
//! Episodes end on environment failure, timeout, or task completion, and
//! a fail signal is absorbing: the executor never steps a failed episode.

pub mod pca;

pub use pca::{project_actions, Projection};

use crate::env::{Environment, EnvState, Signal, SubtaskId, TransitionInterval};
use crate::nn::{GaussianPolicy, PolicyModel};
use crate::store::rng::{Rng, RngStream};
use crate::switchq::{SwitchQNet, SWITCH};
use crate::{Error, Result};

/// Evaluation mode, matching the comparison rows of the final report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EvalMode {
    Single,
    NoTp,
    Tp,
    TpQ,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Single => "single",
            EvalMode::NoTp => "no_tp",
            EvalMode::Tp => "tp",
            EvalMode::TpQ => "tp_q",
        }
    }

    /// Human-readable table row label.
    pub fn label(self) -> &'static str {
        match self {
            EvalMode::Single => "Single",
            EvalMode::NoTp => "Without TP",
            EvalMode::Tp => "With TP",
            EvalMode::TpQ => "With TP and Q",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(EvalMode::Single),
            "no_tp" => Ok(EvalMode::NoTp),
            "tp" => Ok(EvalMode::Tp),
            "tp_q" => Ok(EvalMode::TpQ),
            other => Err(Error::Config(format!("unknown eval mode {other}"))),
        }
    }

    pub fn all() -> [EvalMode; 4] {
        [EvalMode::Single, EvalMode::NoTp, EvalMode::Tp, EvalMode::TpQ]
    }
}

/// Declarative subtask sequence with hand-off windows.
#[derive(Debug, Clone)]
pub struct TaskPlan {
    pub env_id: String,
    /// Repeating subtask cycle, e.g. `[run, jump]`.
    pub cycle: Vec<SubtaskId>,
    /// Expected subgoal count for a perfect episode (e.g. 5 hurdles).
    pub repetitions: u32,
    pub mode: EvalMode,
    /// Hand-off windows for pairs that use one; pairs without an entry
    /// advance on subgoal completion.
    pub intervals: Vec<TransitionInterval>,
}

impl TaskPlan {
    /// Built-in plan for the hurdle task.
    pub fn hurdle(mode: EvalMode) -> TaskPlan {
        TaskPlan {
            env_id: "pointhurdle".into(),
            cycle: vec![SubtaskId::Run, SubtaskId::Jump],
            repetitions: 5,
            mode,
            intervals: vec![TransitionInterval::hurdle_approach(
                SubtaskId::Run,
                SubtaskId::Jump,
            )],
        }
    }

    pub fn interval_for(&self, from: SubtaskId, to: SubtaskId) -> Option<&TransitionInterval> {
        self.intervals
            .iter()
            .find(|iv| iv.from == from && iv.to == to)
    }
}

/// Frozen artifacts the executor composes.
#[derive(Debug, Clone, Default)]
pub struct PolicyBank {
    pub subtasks: Vec<(SubtaskId, GaussianPolicy)>,
    pub transitions: Vec<((SubtaskId, SubtaskId), GaussianPolicy)>,
    pub switchers: Vec<((SubtaskId, SubtaskId), SwitchQNet)>,
    pub single: Option<GaussianPolicy>,
}

impl PolicyBank {
    pub fn subtask(&self, id: SubtaskId) -> Result<&GaussianPolicy> {
        self.subtasks
            .iter()
            .find(|(k, _)| *k == id)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::MissingArtifact(format!("subtask policy {}", id.as_str())))
    }

    pub fn transition(&self, from: SubtaskId, to: SubtaskId) -> Result<&GaussianPolicy> {
        self.transitions
            .iter()
            .find(|(k, _)| *k == (from, to))
            .map(|(_, p)| p)
            .ok_or_else(|| {
                Error::MissingArtifact(format!(
                    "transition policy {} -> {}",
                    from.as_str(),
                    to.as_str()
                ))
            })
    }

    pub fn switcher(&self, from: SubtaskId, to: SubtaskId) -> Result<&SwitchQNet> {
        self.switchers
            .iter()
            .find(|(k, _)| *k == (from, to))
            .map(|(_, q)| q)
            .ok_or_else(|| {
                Error::MissingArtifact(format!(
                    "switch network {} -> {}",
                    from.as_str(),
                    to.as_str()
                ))
            })
    }

    /// Checks that every artifact the plan's mode requires is present with
    /// dimensions matching the environment.
    pub fn validate(&self, plan: &TaskPlan, env: &dyn Environment) -> Result<()> {
        let check_dims = |p: &GaussianPolicy, what: &str| -> Result<()> {
            if p.obs_dim() != env.obs_dim() || p.action_len() != env.action_dim() {
                return Err(Error::Dimension {
                    context: "policy bank artifact dims",
                    expected: env.obs_dim(),
                    got: p.obs_dim(),
                })
                .map_err(|e| {
                    Error::Config(format!("{what}: {e}"))
                });
            }
            Ok(())
        };
        match plan.mode {
            EvalMode::Single => {
                let p = self
                    .single
                    .as_ref()
                    .ok_or_else(|| Error::MissingArtifact("single policy".into()))?;
                check_dims(p, "single policy")?;
            }
            mode => {
                for id in &plan.cycle {
                    check_dims(self.subtask(*id)?, id.as_str())?;
                }
                if matches!(mode, EvalMode::Tp | EvalMode::TpQ) {
                    for iv in &plan.intervals {
                        check_dims(self.transition(iv.from, iv.to)?, "transition policy")?;
                    }
                }
                if mode == EvalMode::TpQ {
                    for iv in &plan.intervals {
                        let q = self.switcher(iv.from, iv.to)?;
                        if q.obs_dim() != env.obs_dim() {
                            return Err(Error::Dimension {
                                context: "switch network obs dim",
                                expected: env.obs_dim(),
                                got: q.obs_dim(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Which controller produced a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerId {
    Single,
    Subtask(SubtaskId),
    Transition(SubtaskId, SubtaskId),
}

impl ControllerId {
    pub fn label(&self) -> String {
        match self {
            ControllerId::Single => "single".into(),
            ControllerId::Subtask(id) => id.as_str().into(),
            ControllerId::Transition(a, b) => format!("tp:{}->{}", a.as_str(), b.as_str()),
        }
    }
}

/// One trace row (`step,controller_id,x,y,signal`).
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub step: u32,
    pub controller: ControllerId,
    pub x: f64,
    pub y: f64,
    pub signal: Signal,
}

/// Result of one executed episode.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub success_count: u32,
    pub steps: u32,
    pub failed: bool,
    pub trace: Vec<TraceStep>,
}

enum Phase {
    Subtask(usize),
    Transition(usize),
}

/// Executes one seeded episode under the plan's mode.
pub fn run_episode(
    plan: &TaskPlan,
    bank: &PolicyBank,
    env: &mut dyn Environment,
    seed: u64,
) -> Result<EpisodeOutcome> {
    bank.validate(plan, env)?;
    let stream = RngStream::new(seed);
    env.reset(stream.derive_key("episode-env", 0));
    let mut rng = stream.derive("episode-policy", 0);
    let mut outcome = EpisodeOutcome {
        success_count: 0,
        steps: 0,
        failed: false,
        trace: Vec::new(),
    };

    let mut phase = Phase::Subtask(0);
    loop {
        let (controller, policy): (ControllerId, &GaussianPolicy) = match plan.mode {
            EvalMode::Single => (ControllerId::Single, bank.single.as_ref().unwrap()),
            _ => match phase {
                Phase::Subtask(k) => {
                    let id = plan.cycle[k % plan.cycle.len()];
                    (ControllerId::Subtask(id), bank.subtask(id)?)
                }
                Phase::Transition(k) => {
                    let from = plan.cycle[k % plan.cycle.len()];
                    let to = plan.cycle[(k + 1) % plan.cycle.len()];
                    (ControllerId::Transition(from, to), bank.transition(from, to)?)
                }
            },
        };
        let obs = env.observe();
        let action = policy.sample(&obs, &mut rng)?;
        let result = env.step(&action);
        outcome.steps += 1;
        outcome.success_count += result.subgoal_delta;
        let (x, y) = result.state.trace_xy();
        outcome.trace.push(TraceStep {
            step: outcome.steps,
            controller,
            x,
            y,
            signal: result.signal,
        });
        if result.signal == Signal::Fail {
            outcome.failed = true;
            break;
        }
        if result.done {
            break;
        }

        // Phase machine: hand-offs happen at interval boundaries, switcher
        // decisions, or subgoal completions.
        if plan.mode != EvalMode::Single {
            phase = match phase {
                Phase::Subtask(k) => {
                    let from = plan.cycle[k % plan.cycle.len()];
                    let to = plan.cycle[(k + 1) % plan.cycle.len()];
                    if let Some(iv) = plan.interval_for(from, to) {
                        if iv.contains(&result.state) {
                            match plan.mode {
                                EvalMode::NoTp => Phase::Subtask(k + 1),
                                _ => Phase::Transition(k),
                            }
                        } else {
                            Phase::Subtask(k)
                        }
                    } else if result.subgoal_delta == 1 {
                        Phase::Subtask(k + 1)
                    } else {
                        Phase::Subtask(k)
                    }
                }
                Phase::Transition(k) => {
                    let from = plan.cycle[k % plan.cycle.len()];
                    let to = plan.cycle[(k + 1) % plan.cycle.len()];
                    let iv = plan.interval_for(from, to).expect("transition without interval");
                    let exited = !iv.contains(&result.state);
                    let switch_now = match plan.mode {
                        EvalMode::Tp => exited,
                        EvalMode::TpQ => {
                            // Greedy switcher; force-switch at window exit.
                            exited || bank.switcher(from, to)?.greedy(&result.obs)? == SWITCH
                        }
                        _ => true,
                    };
                    if switch_now {
                        Phase::Subtask(k + 1)
                    } else {
                        Phase::Transition(k)
                    }
                }
            };
        }
    }
    Ok(outcome)
}

/// Checks the protocol state machine over a recorded trace: controller
/// changes only along allowed edges for the plan.
pub fn validate_trace(plan: &TaskPlan, trace: &[TraceStep]) -> Result<()> {
    if plan.mode == EvalMode::Single {
        if trace.iter().any(|t| t.controller != ControllerId::Single) {
            return Err(Error::InvalidState(
                "single mode trace contains a non-single controller".into(),
            ));
        }
        return Ok(());
    }
    let n = plan.cycle.len();
    for pair in trace.windows(2) {
        let (a, b) = (pair[0].controller, pair[1].controller);
        if a == b {
            continue;
        }
        let ok = match (a, b) {
            (ControllerId::Subtask(x), ControllerId::Transition(f, t)) => {
                // Entering the hand-off window of the pair (x, next).
                x == f && plan.interval_for(f, t).is_some()
            }
            (ControllerId::Transition(_, t), ControllerId::Subtask(y)) => t == y,
            (ControllerId::Subtask(x), ControllerId::Subtask(y)) => {
                // Either a subgoal advance or a no_tp instant switch.
                let xi = plan.cycle.iter().position(|c| *c == x);
                let yi = plan.cycle.iter().position(|c| *c == y);
                match (xi, yi) {
                    (Some(xi), Some(yi)) => (xi + 1) % n == yi % n,
                    _ => false,
                }
            }
            _ => false,
        };
        if !ok {
            return Err(Error::InvalidState(format!(
                "illegal controller hand-off {} -> {} at step {}",
                a.label(),
                b.label(),
                pair[1].step
            )));
        }
    }
    // A fail signal is absorbing: it may only be the last row.
    for (i, t) in trace.iter().enumerate() {
        if t.signal == Signal::Fail && i + 1 != trace.len() {
            return Err(Error::InvalidState(format!(
                "executor stepped past a fail signal at step {}",
                t.step
            )));
        }
    }
    Ok(())
}

/// One evaluated episode row.
#[derive(Debug, Clone)]
pub struct EpisodeRow {
    pub seed: u64,
    pub episode: u32,
    pub success_count: u32,
    pub steps: u32,
}

/// Aggregated evaluation of one mode.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub rows: Vec<EpisodeRow>,
    pub mean: f64,
    pub std: f64,
}

impl EvalReport {
    /// Population mean and standard deviation from integer success counts;
    /// integer accumulation keeps the result order-independent.
    pub fn aggregate(mode: EvalMode, rows: Vec<EpisodeRow>) -> EvalReport {
        let n = rows.len().max(1) as f64;
        let sum: u64 = rows.iter().map(|r| r.success_count as u64).sum();
        let sum_sq: u64 = rows
            .iter()
            .map(|r| (r.success_count as u64) * (r.success_count as u64))
            .sum();
        let mean = sum as f64 / n;
        let var = (sum_sq as f64 / n - mean * mean).max(0.0);
        EvalReport {
            mode,
            rows,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Runs `episodes` seeded episodes per evaluation seed and aggregates the
/// success counts. Episode slots are pre-seeded, so results are identical
/// for any worker count; `workers` only splits the slot list.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<E: Environment + Clone + Send>(
    plan: &TaskPlan,
    bank: &PolicyBank,
    env: &E,
    episodes: u32,
    seeds: &[u64],
    workers: usize,
) -> Result<(EvalReport, Vec<(EpisodeRow, EpisodeOutcome)>)>
where
    PolicyBank: Sync,
{
    if episodes == 0 || seeds.is_empty() {
        return Err(Error::Config("evaluation needs at least one episode and seed".into()));
    }
    {
        let mut probe = env.clone();
        bank.validate(plan, &probe)?;
        let _ = &mut probe;
    }
    let slots: Vec<(u64, u32)> = seeds
        .iter()
        .flat_map(|&s| (0..episodes).map(move |e| (s, e)))
        .collect();
    let workers = workers.max(1).min(slots.len());
    let mut outcomes: Vec<Option<(EpisodeRow, EpisodeOutcome)>> = vec![None; slots.len()];

    if workers == 1 {
        for (i, &(seed, episode)) in slots.iter().enumerate() {
            let episode_seed = RngStream::new(seed).derive_key("eval-episode", episode as u64);
            let mut e = env.clone();
            let outcome = run_episode(plan, bank, &mut e, episode_seed)?;
            outcomes[i] = Some((
                EpisodeRow {
                    seed,
                    episode,
                    success_count: outcome.success_count,
                    steps: outcome.steps,
                },
                outcome,
            ));
        }
    } else {
        let chunks: Vec<Vec<(usize, (u64, u32))>> = (0..workers)
            .map(|w| {
                slots
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % workers == w)
                    .map(|(i, s)| (i, *s))
                    .collect()
            })
            .collect();
        let results: Vec<Result<Vec<(usize, EpisodeRow, EpisodeOutcome)>>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunks
                    .into_iter()
                    .map(|chunk| {
                        scope.spawn(move || {
                            let mut out = Vec::with_capacity(chunk.len());
                            for (i, (seed, episode)) in chunk {
                                let episode_seed = RngStream::new(seed)
                                    .derive_key("eval-episode", episode as u64);
                                let mut e = env.clone();
                                let outcome = run_episode(plan, bank, &mut e, episode_seed)?;
                                out.push((
                                    i,
                                    EpisodeRow {
                                        seed,
                                        episode,
                                        success_count: outcome.success_count,
                                        steps: outcome.steps,
                                    },
                                    outcome,
                                ));
                            }
                            Ok(out)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
        for res in results {
            for (i, row, outcome) in res? {
                outcomes[i] = Some((row, outcome));
            }
        }
    }
    let pairs: Vec<(EpisodeRow, EpisodeOutcome)> =
        outcomes.into_iter().map(|o| o.unwrap()).collect();
    let rows = pairs.iter().map(|(r, _)| r.clone()).collect();
    Ok((EvalReport::aggregate(plan.mode, rows), pairs))
}

#[cfg(test)]
mod tests;
