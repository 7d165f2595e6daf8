//! Deterministic desk-scale environments with subtask decompositions,
//! transition intervals, and set-state semantics.
//!
//! Every environment is a cheap value type: `step` applies a pure
//! transition function to the stored state, `set_state` injects an
//! arbitrary valid state, and all randomness enters through explicit
//! seeds, so identical `(state, action)` pairs always produce bitwise
//! identical results.

pub mod hurdle;
pub mod patrol;
pub mod tabular;

pub use hurdle::{HurdleState, HurdleTask, PointHurdle};
pub use patrol::{PatrolState, PatrolTask, PointPatrol};
pub use tabular::{tabular_occupancy, TabularEnv, TabularMdp, TabularState};

use crate::{Error, Result};

/// Per-step environment verdict consumed by the switch trainer and the
/// executor: `Success` fires exactly when a subgoal predicate fired this
/// step, and `Fail` is absorbing (the episode must end).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Alive,
    Success,
    Fail,
}

impl Signal {
    pub fn as_str(self) -> &'static str {
        match self {
            Signal::Alive => "alive",
            Signal::Success => "success",
            Signal::Fail => "fail",
        }
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: EnvState,
    pub obs: Vec<f64>,
    pub signal: Signal,
    /// 1 when a subgoal fired this step, else 0.
    pub subgoal_delta: u32,
    /// Episode is over (fail, timeout, or the task's completion condition).
    pub done: bool,
}

/// Identifier of a pre-trainable subtask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SubtaskId {
    Run,
    Jump,
    MoveRight,
    MoveLeft,
    Brake,
}

impl SubtaskId {
    pub fn as_str(self) -> &'static str {
        match self {
            SubtaskId::Run => "run",
            SubtaskId::Jump => "jump",
            SubtaskId::MoveRight => "move_right",
            SubtaskId::MoveLeft => "move_left",
            SubtaskId::Brake => "brake",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "run" => Ok(SubtaskId::Run),
            "jump" => Ok(SubtaskId::Jump),
            "move_right" => Ok(SubtaskId::MoveRight),
            "move_left" => Ok(SubtaskId::MoveLeft),
            "brake" => Ok(SubtaskId::Brake),
            other => Err(Error::UnknownSubtask(other.to_string())),
        }
    }
}

/// Environment state across all built-in environments, serializable as a
/// single versioned text record (`<env id> v1 <fields...>`).
#[derive(Debug, Clone, PartialEq)]
pub enum EnvState {
    Hurdle(HurdleState),
    Patrol(PatrolState),
    Tabular(TabularState),
}

impl EnvState {
    pub fn step_count(&self) -> u32 {
        match self {
            EnvState::Hurdle(s) => s.step,
            EnvState::Patrol(s) => s.step,
            EnvState::Tabular(s) => s.step,
        }
    }

    /// Task-progress coordinates used in trace files: `(x, y)` for the
    /// point-mass environments, `(state index, 0)` for tabular ones.
    pub fn trace_xy(&self) -> (f64, f64) {
        match self {
            EnvState::Hurdle(s) => (s.x, s.y),
            EnvState::Patrol(s) => (s.x, 0.0),
            EnvState::Tabular(s) => (s.s as f64, 0.0),
        }
    }

    pub fn to_record(&self) -> String {
        match self {
            EnvState::Hurdle(s) => s.to_record(),
            EnvState::Patrol(s) => s.to_record(),
            EnvState::Tabular(s) => s.to_record(),
        }
    }

    pub fn from_record(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("pointhurdle") => Ok(EnvState::Hurdle(HurdleState::from_record(line)?)),
            Some("pointpatrol") => Ok(EnvState::Patrol(PatrolState::from_record(line)?)),
            Some("tabular") => Ok(EnvState::Tabular(TabularState::from_record(line)?)),
            other => Err(Error::Corrupt(format!(
                "unknown env id prefix in state record: {other:?}"
            ))),
        }
    }
}

/// Resettable, set-state-capable environment.
pub trait Environment {
    fn id(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Seeded reset; deterministic per seed.
    fn reset(&mut self, seed: u64) -> EnvState;
    fn state(&self) -> EnvState;
    /// Injects a state; subsequent steps behave exactly as if the episode
    /// had organically reached it. Invariant violations are rejected.
    fn set_state(&mut self, state: &EnvState) -> Result<()>;
    /// Observation of the current state.
    fn observe(&self) -> Vec<f64>;
    /// Advances the current state. Actions outside `[-1, 1]` are clamped.
    fn step(&mut self, action: &[f64]) -> StepResult;
}

/// A declared hand-off window between two subtask policies.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionInterval {
    pub from: SubtaskId,
    pub to: SubtaskId,
    pub kind: IntervalKind,
}

/// Membership predicate parameters per environment family.
#[derive(Debug, Clone, PartialEq)]
pub enum IntervalKind {
    /// Window `[h - far, h - near]` before the next unpassed hurdle.
    HurdleApproach { near: f64, far: f64 },
    /// Fixed step window after the most recent marker touch.
    AfterMarkerTouch { window_steps: u32 },
    /// The whole episode (tabular oracle problems).
    WholeEpisode,
}

impl TransitionInterval {
    pub fn hurdle_approach(from: SubtaskId, to: SubtaskId) -> Self {
        TransitionInterval {
            from,
            to,
            kind: IntervalKind::HurdleApproach { near: 0.5, far: 1.5 },
        }
    }

    pub fn after_marker_touch(from: SubtaskId, to: SubtaskId) -> Self {
        TransitionInterval {
            from,
            to,
            kind: IntervalKind::AfterMarkerTouch { window_steps: 30 },
        }
    }

    pub fn whole_episode(from: SubtaskId, to: SubtaskId) -> Self {
        TransitionInterval {
            from,
            to,
            kind: IntervalKind::WholeEpisode,
        }
    }

    /// Spatial/window containment: the task-progress window itself,
    /// independent of whether the state is ready for a hand-off. This
    /// drives the executor's phase machine and rollout termination.
    pub fn contains(&self, state: &EnvState) -> bool {
        match (&self.kind, state) {
            (IntervalKind::HurdleApproach { near, far }, EnvState::Hurdle(s)) => {
                match s.next_hurdle() {
                    Some(h) => s.x >= h - far && s.x <= h - near,
                    None => false,
                }
            }
            (IntervalKind::AfterMarkerTouch { window_steps }, EnvState::Patrol(s)) => {
                s.since_touch <= *window_steps
            }
            (IntervalKind::WholeEpisode, _) => true,
            _ => false,
        }
    }

    /// Full membership predicate: containment plus hand-off readiness
    /// (grounded, for the hurdle environments). Closed boundaries.
    pub fn in_interval(&self, state: &EnvState) -> bool {
        match state {
            EnvState::Hurdle(s) => self.contains(state) && s.grounded,
            _ => self.contains(state),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subtask_id_round_trip() {
        for id in [
            SubtaskId::Run,
            SubtaskId::Jump,
            SubtaskId::MoveRight,
            SubtaskId::MoveLeft,
            SubtaskId::Brake,
        ] {
            assert_eq!(SubtaskId::parse(id.as_str()).unwrap(), id);
        }
        assert!(SubtaskId::parse("fly").is_err());
    }

    #[test]
    fn interval_membership_hurdle_cases() {
        let iv = TransitionInterval::hurdle_approach(SubtaskId::Run, SubtaskId::Jump);
        let mk = |x: f64, grounded: bool| {
            EnvState::Hurdle(HurdleState {
                x,
                y: if grounded { 0.0 } else { 0.4 },
                vx: 1.0,
                vy: 0.0,
                grounded,
                step: 10,
                passed: 0,
                hurdles: vec![5.0],
            })
        };
        // Interior point, grounded.
        assert!(iv.in_interval(&mk(4.0, true)));
        // Exterior point.
        assert!(!iv.in_interval(&mk(3.0, true)));
        // Closed entry boundary.
        assert!(iv.in_interval(&mk(3.5, true)));
        // Closed exit boundary.
        assert!(iv.in_interval(&mk(4.5, true)));
        // Airborne: inside the window but not hand-off ready.
        assert!(iv.contains(&mk(4.0, false)));
        assert!(!iv.in_interval(&mk(4.0, false)));
    }
}
