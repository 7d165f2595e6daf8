//! Point-mass hurdle environment and its Run/Jump sub-environments.
//!
//! A point agent moves along a 1-D track with a vertical jump degree of
//! freedom. The full task places five hurdles with seeded random gaps; the
//! agent earns one subgoal per hurdle passed and fails on contact or
//! timeout. Dynamics constants and update order are fixed; see `step`.

use super::{EnvState, Environment, Signal, StepResult, SubtaskId};
use crate::store::rng::Rng;
use crate::{Error, Result};

pub const DT: f64 = 0.05;
pub const GRAVITY: f64 = 9.8;
pub const JUMP_SPEED: f64 = 3.0;
pub const ACCEL_GAIN: f64 = 10.0;
pub const MAX_SPEED: f64 = 2.0;
pub const HURDLE_HEIGHT: f64 = 0.3;
pub const HURDLE_HALF_WIDTH: f64 = 0.1;
pub const PASS_MARGIN: f64 = 0.2;
pub const OBS_CAP: f64 = 5.0;
pub const STEP_LIMIT: u32 = 2000;
pub const RUN_GOAL_X: f64 = 10.0;
pub const N_HURDLES: usize = 5;

/// Which restriction of the hurdle world this instance runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HurdleTask {
    /// Five hurdles, one subgoal each.
    Full,
    /// Flat ground; success at `x >= 10`.
    Run,
    /// A single hurdle at a seeded position in `[3, 5]`; success on pass.
    Jump,
}

/// Kinematic state plus the per-episode hurdle layout. The layout travels
/// with the state so that a state injected via `set_state` reproduces the
/// episode it was harvested from.
#[derive(Debug, Clone, PartialEq)]
pub struct HurdleState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub grounded: bool,
    pub step: u32,
    /// Number of hurdles already passed.
    pub passed: u32,
    /// Hurdle center positions, ascending.
    pub hurdles: Vec<f64>,
}

impl HurdleState {
    /// Center of the next unpassed hurdle, if any.
    pub fn next_hurdle(&self) -> Option<f64> {
        self.hurdles.get(self.passed as usize).copied()
    }

    pub fn to_record(&self) -> String {
        let mut s = format!(
            "pointhurdle v1 {} {} {} {} {} {} {} {}",
            self.x,
            self.y,
            self.vx,
            self.vy,
            self.grounded as u8,
            self.step,
            self.passed,
            self.hurdles.len()
        );
        for h in &self.hurdles {
            s.push(' ');
            s.push_str(&h.to_string());
        }
        s
    }

    pub fn from_record(line: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Corrupt(format!("hurdle state record: {msg}: {line}"));
        let mut it = line.split_whitespace();
        if it.next() != Some("pointhurdle") {
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
        let x = f("x")?;
        let y = f("y")?;
        let vx = f("vx")?;
        let vy = f("vy")?;
        let grounded = f("grounded")? != 0.0;
        let step = f("step")? as u32;
        let passed = f("passed")? as u32;
        let n = f("hurdle count")? as usize;
        let mut hurdles = Vec::with_capacity(n);
        for _ in 0..n {
            hurdles.push(f("hurdle position")?);
        }
        Ok(HurdleState {
            x,
            y,
            vx,
            vy,
            grounded,
            step,
            passed,
            hurdles,
        })
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidState(msg));
        if !(self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite())
        {
            return err("non-finite kinematic field".into());
        }
        if self.y < 0.0 {
            return err(format!("y = {} below ground", self.y));
        }
        if self.vx.abs() > MAX_SPEED {
            return err(format!("|vx| = {} exceeds max speed", self.vx.abs()));
        }
        if self.grounded != (self.y == 0.0) {
            return err(format!(
                "grounded flag {} inconsistent with y = {}",
                self.grounded, self.y
            ));
        }
        if self.grounded && self.vy != 0.0 {
            return err(format!("grounded state with vy = {}", self.vy));
        }
        if self
            .hurdles
            .windows(2)
            .any(|w| w[1] <= w[0])
        {
            return err("hurdle positions not ascending".into());
        }
        if self.passed as usize > self.hurdles.len() {
            return err("passed count exceeds hurdle count".into());
        }
        Ok(())
    }
}

/// The hurdle-world environment; the task variant restricts layout and
/// success condition.
#[derive(Debug, Clone)]
pub struct PointHurdle {
    task: HurdleTask,
    state: HurdleState,
}

impl PointHurdle {
    pub fn new(task: HurdleTask) -> Self {
        PointHurdle {
            task,
            state: HurdleState {
                x: 0.0,
                y: 0.0,
                vx: 0.0,
                vy: 0.0,
                grounded: true,
                step: 0,
                passed: 0,
                hurdles: Vec::new(),
            },
        }
    }

    pub fn full() -> Self {
        Self::new(HurdleTask::Full)
    }

    /// Restricted sub-environment for a subtask policy.
    pub fn subtask_env(id: SubtaskId) -> Result<Self> {
        match id {
            SubtaskId::Run => Ok(Self::new(HurdleTask::Run)),
            SubtaskId::Jump => Ok(Self::new(HurdleTask::Jump)),
            other => Err(Error::UnknownSubtask(format!(
                "{} is not a pointhurdle subtask",
                other.as_str()
            ))),
        }
    }

    pub fn task(&self) -> HurdleTask {
        self.task
    }

    pub fn hurdle_state(&self) -> &HurdleState {
        &self.state
    }

    /// Pure observation of a state: `(y, vx, vy, d_start, d_end)` with
    /// signed distances to the next hurdle's near/far edge, capped at 5.
    pub fn observe_state(state: &HurdleState) -> Vec<f64> {
        let (d_start, d_end) = match state.next_hurdle() {
            Some(h) => (
                (h - HURDLE_HALF_WIDTH - state.x).clamp(-OBS_CAP, OBS_CAP),
                (h + HURDLE_HALF_WIDTH - state.x).clamp(-OBS_CAP, OBS_CAP),
            ),
            None => (OBS_CAP, OBS_CAP),
        };
        vec![state.y, state.vx, state.vy, d_start, d_end]
    }

    /// Pure transition function. `step` on the trait delegates here.
    pub fn transition(task: HurdleTask, state: &HurdleState, action: &[f64]) -> StepResult {
        let a_x = action.first().copied().unwrap_or(0.0).clamp(-1.0, 1.0);
        let a_y = action.get(1).copied().unwrap_or(0.0).clamp(-1.0, 1.0);
        let mut s = state.clone();

        // (1) jump impulse or gravity
        if s.grounded && a_y > 0.5 {
            s.vy = JUMP_SPEED;
            s.grounded = false;
        } else if !s.grounded {
            s.vy -= GRAVITY * DT;
        }
        // (2) horizontal acceleration
        s.vx = (s.vx + ACCEL_GAIN * a_x * DT).clamp(-MAX_SPEED, MAX_SPEED);
        // (3) integration and ground contact
        s.x += s.vx * DT;
        s.y = (s.y + s.vy * DT).max(0.0);
        if s.y == 0.0 {
            s.vy = 0.0;
            s.grounded = true;
        }
        s.step += 1;

        // Verdict: collision beats subgoal beats timeout.
        let collided = s
            .hurdles
            .iter()
            .any(|h| (s.x - h).abs() <= HURDLE_HALF_WIDTH && s.y <= HURDLE_HEIGHT);
        let mut signal = Signal::Alive;
        let mut subgoal_delta = 0;
        let mut done = false;
        if collided {
            signal = Signal::Fail;
            done = true;
        } else {
            if let Some(h) = s.next_hurdle() {
                if s.x > h + PASS_MARGIN {
                    s.passed += 1;
                    subgoal_delta = 1;
                    signal = Signal::Success;
                }
            }
            match task {
                HurdleTask::Run => {
                    if s.x >= RUN_GOAL_X {
                        signal = Signal::Success;
                        done = true;
                    }
                }
                HurdleTask::Jump => {
                    if subgoal_delta == 1 {
                        done = true;
                    }
                }
                HurdleTask::Full => {
                    if s.passed as usize == s.hurdles.len() {
                        done = true;
                    }
                }
            }
            if !done && s.step > STEP_LIMIT {
                signal = Signal::Fail;
                done = true;
            }
        }

        let obs = Self::observe_state(&s);
        StepResult {
            state: EnvState::Hurdle(s),
            obs,
            signal,
            subgoal_delta,
            done,
        }
    }
}

impl Environment for PointHurdle {
    fn id(&self) -> &'static str {
        "pointhurdle"
    }

    fn obs_dim(&self) -> usize {
        5
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        let mut rng = Rng::from_key(seed);
        let hurdles = match self.task {
            HurdleTask::Run => Vec::new(),
            HurdleTask::Jump => vec![rng.uniform(3.0, 5.0)],
            HurdleTask::Full => {
                let mut hs = Vec::with_capacity(N_HURDLES);
                let mut x = 0.0;
                for _ in 0..N_HURDLES {
                    x += rng.uniform(4.0, 6.0);
                    hs.push(x);
                }
                hs
            }
        };
        self.state = HurdleState {
            x: 0.0,
            y: 0.0,
            vx: 0.0,
            vy: 0.0,
            grounded: true,
            step: 0,
            passed: 0,
            hurdles,
        };
        EnvState::Hurdle(self.state.clone())
    }

    fn state(&self) -> EnvState {
        EnvState::Hurdle(self.state.clone())
    }

    fn set_state(&mut self, state: &EnvState) -> Result<()> {
        match state {
            EnvState::Hurdle(s) => {
                s.validate()?;
                self.state = s.clone();
                Ok(())
            }
            _ => Err(Error::InvalidState(
                "expected a pointhurdle state".into(),
            )),
        }
    }

    fn observe(&self) -> Vec<f64> {
        Self::observe_state(&self.state)
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let result = Self::transition(self.task, &self.state, action);
        if let EnvState::Hurdle(s) = &result.state {
            self.state = s.clone();
        }
        result
    }
}
