//! Point-mass patrol environment: shuttle between two markers, with a
//! braking subtask to damp the direction reversal.
//!
//! One-dimensional track with markers at +/-5. Touching the active marker
//! scores a subgoal and activates the opposite marker. Sub-environments:
//! `MoveRight`/`MoveLeft` succeed on touching their marker, `Brake`
//! succeeds after holding `|vx| < 0.1` for 20 consecutive steps.

use super::{EnvState, Environment, Signal, StepResult, SubtaskId};
use crate::{Error, Result};

pub const DT: f64 = 0.05;
pub const ACCEL_GAIN: f64 = 10.0;
pub const MAX_SPEED: f64 = 2.0;
pub const MARKER_X: f64 = 5.0;
pub const TOUCH_RADIUS: f64 = 0.2;
pub const BRAKE_SPEED: f64 = 0.1;
pub const BRAKE_GOAL_STEPS: u32 = 20;
pub const STEP_LIMIT: u32 = 2000;
/// `since_touch` sentinel meaning "no touch yet this episode".
pub const NEVER_TOUCHED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatrolTask {
    Full,
    MoveRight,
    MoveLeft,
    Brake,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatrolState {
    pub x: f64,
    pub vx: f64,
    /// 0 = right marker (+5) active, 1 = left marker (-5).
    pub active: u8,
    /// Consecutive steps with `|vx| < 0.1`.
    pub brake_count: u32,
    /// Steps since the last marker touch (saturating; `NEVER_TOUCHED`
    /// before the first).
    pub since_touch: u32,
    pub step: u32,
}

impl PatrolState {
    pub fn active_marker_x(&self) -> f64 {
        if self.active == 0 {
            MARKER_X
        } else {
            -MARKER_X
        }
    }

    pub fn to_record(&self) -> String {
        format!(
            "pointpatrol v1 {} {} {} {} {} {}",
            self.x, self.vx, self.active, self.brake_count, self.since_touch, self.step
        )
    }

    pub fn from_record(line: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Corrupt(format!("patrol state record: {msg}: {line}"));
        let mut it = line.split_whitespace();
        if it.next() != Some("pointpatrol") {
            return Err(bad("missing env id"));
        }
        if it.next() != Some("v1") {
            return Err(bad("unsupported version"));
        }
        let mut f = |what: &'static str| -> Result<f64> {
            it.next()
                .ok_or_else(|| bad(&format!("missing {what}")))?
                .parse::<f64>()
                .map_err(|_| bad(&format!("bad {what}")))
        };
        Ok(PatrolState {
            x: f("x")?,
            vx: f("vx")?,
            active: f("active")? as u8,
            brake_count: f("brake_count")? as u32,
            since_touch: f("since_touch")? as u32,
            step: f("step")? as u32,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.vx.is_finite()) {
            return Err(Error::InvalidState("non-finite patrol field".into()));
        }
        if self.vx.abs() > MAX_SPEED {
            return Err(Error::InvalidState(format!(
                "|vx| = {} exceeds max speed",
                self.vx.abs()
            )));
        }
        if self.active > 1 {
            return Err(Error::InvalidState(format!(
                "active marker id {} out of range",
                self.active
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PointPatrol {
    task: PatrolTask,
    state: PatrolState,
}

impl PointPatrol {
    pub fn new(task: PatrolTask) -> Self {
        PointPatrol {
            task,
            state: PatrolState {
                x: 0.0,
                vx: 0.0,
                active: 0,
                brake_count: 0,
                since_touch: NEVER_TOUCHED,
                step: 0,
            },
        }
    }

    pub fn full() -> Self {
        Self::new(PatrolTask::Full)
    }

    pub fn subtask_env(id: SubtaskId) -> Result<Self> {
        match id {
            SubtaskId::MoveRight => Ok(Self::new(PatrolTask::MoveRight)),
            SubtaskId::MoveLeft => Ok(Self::new(PatrolTask::MoveLeft)),
            SubtaskId::Brake => Ok(Self::new(PatrolTask::Brake)),
            other => Err(Error::UnknownSubtask(format!(
                "{} is not a pointpatrol subtask",
                other.as_str()
            ))),
        }
    }

    pub fn task(&self) -> PatrolTask {
        self.task
    }

    pub fn observe_state(state: &PatrolState) -> Vec<f64> {
        let d = (state.active_marker_x() - state.x).clamp(-5.0, 5.0);
        let brake_frac = state.brake_count.min(BRAKE_GOAL_STEPS) as f64 / BRAKE_GOAL_STEPS as f64;
        let since_frac = state.since_touch.min(30) as f64 / 30.0;
        vec![state.vx, d, brake_frac, since_frac]
    }

    pub fn transition(task: PatrolTask, state: &PatrolState, action: &[f64]) -> StepResult {
        let a = action.first().copied().unwrap_or(0.0).clamp(-1.0, 1.0);
        let mut s = state.clone();
        s.vx = (s.vx + ACCEL_GAIN * a * DT).clamp(-MAX_SPEED, MAX_SPEED);
        s.x += s.vx * DT;
        s.step += 1;
        s.brake_count = if s.vx.abs() < BRAKE_SPEED {
            s.brake_count + 1
        } else {
            0
        };
        let touched = (s.x - s.active_marker_x()).abs() <= TOUCH_RADIUS;
        let mut subgoal_delta = 0;
        let mut signal = Signal::Alive;
        let mut done = false;
        if touched {
            subgoal_delta = 1;
            signal = Signal::Success;
            s.active = 1 - s.active;
            s.since_touch = 0;
        } else if s.since_touch != NEVER_TOUCHED {
            s.since_touch = s.since_touch.saturating_add(1);
        }
        match task {
            PatrolTask::MoveRight | PatrolTask::MoveLeft => {
                if subgoal_delta == 1 {
                    done = true;
                }
            }
            PatrolTask::Brake => {
                if s.brake_count >= BRAKE_GOAL_STEPS {
                    signal = Signal::Success;
                    done = true;
                }
            }
            PatrolTask::Full => {}
        }
        if !done && s.step > STEP_LIMIT {
            signal = Signal::Fail;
            done = true;
        }
        let obs = Self::observe_state(&s);
        StepResult {
            state: EnvState::Patrol(s),
            obs,
            signal,
            subgoal_delta,
            done,
        }
    }
}

impl Environment for PointPatrol {
    fn id(&self) -> &'static str {
        "pointpatrol"
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, _seed: u64) -> EnvState {
        self.state = PatrolState {
            x: 0.0,
            vx: if self.task == PatrolTask::Brake {
                MAX_SPEED
            } else {
                0.0
            },
            active: if self.task == PatrolTask::MoveLeft { 1 } else { 0 },
            brake_count: 0,
            since_touch: NEVER_TOUCHED,
            step: 0,
        };
        EnvState::Patrol(self.state.clone())
    }

    fn state(&self) -> EnvState {
        EnvState::Patrol(self.state.clone())
    }

    fn set_state(&mut self, state: &EnvState) -> Result<()> {
        match state {
            EnvState::Patrol(s) => {
                s.validate()?;
                self.state = s.clone();
                Ok(())
            }
            _ => Err(Error::InvalidState("expected a pointpatrol state".into())),
        }
    }

    fn observe(&self) -> Vec<f64> {
        Self::observe_state(&self.state)
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let result = Self::transition(self.task, &self.state, action);
        if let EnvState::Patrol(s) = &result.state {
            self.state = s.clone();
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TransitionInterval;

    #[test]
    fn move_right_scripted_touches_marker() {
        let mut env = PointPatrol::subtask_env(SubtaskId::MoveRight).unwrap();
        env.reset(0);
        let mut steps = 0;
        loop {
            let r = env.step(&[1.0]);
            steps += 1;
            if r.done {
                assert_eq!(r.signal, Signal::Success);
                break;
            }
            assert!(steps < 300);
        }
    }

    #[test]
    fn brake_subtask_counts_consecutive_slow_steps() {
        let mut env = PointPatrol::subtask_env(SubtaskId::Brake).unwrap();
        env.reset(0);
        if let EnvState::Patrol(s) = env.state() {
            assert_eq!(s.vx, MAX_SPEED);
        }
        let mut steps = 0;
        loop {
            let vx = if let EnvState::Patrol(s) = env.state() {
                s.vx
            } else {
                panic!()
            };
            let a = if vx > 0.01 { -1.0 } else { 0.0 };
            let r = env.step(&[a]);
            steps += 1;
            if r.done {
                assert_eq!(r.signal, Signal::Success);
                break;
            }
            assert!(steps < 200);
        }
    }

    #[test]
    fn touch_flips_active_marker_and_starts_window() {
        let mut env = PointPatrol::full();
        env.reset(0);
        let iv = TransitionInterval::after_marker_touch(SubtaskId::MoveRight, SubtaskId::Brake);
        assert!(!iv.contains(&env.state()), "no touch yet");
        let mut touched = false;
        for _ in 0..300 {
            let r = env.step(&[1.0]);
            if r.subgoal_delta == 1 {
                touched = true;
                if let EnvState::Patrol(s) = &r.state {
                    assert_eq!(s.active, 1);
                    assert_eq!(s.since_touch, 0);
                }
                assert!(iv.contains(&r.state));
                break;
            }
        }
        assert!(touched);
        // Window closes after 30 further steps.
        for _ in 0..=30 {
            env.step(&[0.0]);
        }
        assert!(!iv.contains(&env.state()));
    }

    #[test]
    fn state_record_round_trip() {
        let mut env = PointPatrol::full();
        env.reset(0);
        for _ in 0..50 {
            env.step(&[0.7]);
        }
        let snap = env.state();
        let back = EnvState::from_record(&snap.to_record()).unwrap();
        assert_eq!(snap, back);
    }
}
