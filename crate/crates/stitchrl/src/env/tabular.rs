//! Small tabular MDPs with an exact occupancy oracle.
//!
//! These exist to verify distribution matching exactly: a categorical
//! policy's state-action visitation distribution can be enumerated in
//! closed form and compared against the adversarial trainer's output.
//! Transition draws are derandomized through a per-episode seed stored in
//! the state, so `step` stays a pure function of `(state, action)`.

use super::{EnvState, Environment, Signal, StepResult};
use crate::store::rng::RngStream;
use crate::{Error, Result};

/// Finite MDP: `n_states <= 16`, `n_actions <= 4`, fixed horizon.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Row-major `P[s][a][s']`.
    transition: Vec<f64>,
    horizon: u32,
    start: usize,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        horizon: u32,
        start: usize,
    ) -> Result<Self> {
        if n_states == 0 || n_states > 16 || n_actions == 0 || n_actions > 4 {
            return Err(Error::Config(format!(
                "tabular mdp size out of range: {n_states} states, {n_actions} actions"
            )));
        }
        if horizon == 0 || horizon > 12 {
            return Err(Error::Config(format!("horizon {horizon} out of range")));
        }
        if start >= n_states {
            return Err(Error::Config("start state out of range".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension {
                context: "tabular transition tensor",
                expected: n_states * n_actions * n_states,
                got: transition.len(),
            });
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                if row.iter().any(|p| *p < 0.0) {
                    return Err(Error::Config(format!("negative probability at ({s},{a})")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "transition row ({s},{a}) sums to {sum}"
                    )));
                }
            }
        }
        Ok(TabularMdp {
            n_states,
            n_actions,
            transition,
            horizon,
            start,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularState {
    pub s: usize,
    pub step: u32,
    /// Seed that derandomizes this episode's transition draws.
    pub episode_seed: u64,
}

impl TabularState {
    pub fn to_record(&self) -> String {
        format!("tabular v1 {} {} {}", self.s, self.step, self.episode_seed)
    }

    pub fn from_record(line: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Corrupt(format!("tabular state record: {msg}: {line}"));
        let mut it = line.split_whitespace();
        if it.next() != Some("tabular") {
            return Err(bad("missing env id"));
        }
        if it.next() != Some("v1") {
            return Err(bad("unsupported version"));
        }
        let s = it
            .next()
            .ok_or_else(|| bad("missing state"))?
            .parse::<usize>()
            .map_err(|_| bad("bad state"))?;
        let step = it
            .next()
            .ok_or_else(|| bad("missing step"))?
            .parse::<u32>()
            .map_err(|_| bad("bad step"))?;
        let episode_seed = it
            .next()
            .ok_or_else(|| bad("missing episode seed"))?
            .parse::<u64>()
            .map_err(|_| bad("bad episode seed"))?;
        Ok(TabularState {
            s,
            step,
            episode_seed,
        })
    }
}

/// Environment adapter over a [`TabularMdp`]: observations are one-hot
/// state encodings and actions are a single rounded index.
#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: TabularMdp,
    state: TabularState,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp) -> Self {
        let start = mdp.start();
        TabularEnv {
            mdp,
            state: TabularState {
                s: start,
                step: 0,
                episode_seed: 0,
            },
        }
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.mdp.n_states()];
        v[s] = 1.0;
        v
    }
}

impl Environment for TabularEnv {
    fn id(&self) -> &'static str {
        "tabular"
    }

    fn obs_dim(&self) -> usize {
        self.mdp.n_states()
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        self.state = TabularState {
            s: self.mdp.start(),
            step: 0,
            episode_seed: seed,
        };
        EnvState::Tabular(self.state.clone())
    }

    fn state(&self) -> EnvState {
        EnvState::Tabular(self.state.clone())
    }

    fn set_state(&mut self, state: &EnvState) -> Result<()> {
        match state {
            EnvState::Tabular(s) => {
                if s.s >= self.mdp.n_states() {
                    return Err(Error::InvalidState(format!(
                        "state index {} out of range",
                        s.s
                    )));
                }
                self.state = s.clone();
                Ok(())
            }
            _ => Err(Error::InvalidState("expected a tabular state".into())),
        }
    }

    fn observe(&self) -> Vec<f64> {
        self.one_hot(self.state.s)
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let a = (action.first().copied().unwrap_or(0.0).round() as i64)
            .clamp(0, self.mdp.n_actions() as i64 - 1) as usize;
        let row = self.mdp.row(self.state.s, a);
        // Transition draw is a pure function of (episode_seed, step).
        let u = RngStream::new(self.state.episode_seed)
            .derive("tabular-step", self.state.step as u64)
            .next_f64();
        let mut acc = 0.0;
        let mut next = self.mdp.n_states() - 1;
        for (k, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = k;
                break;
            }
        }
        self.state = TabularState {
            s: next,
            step: self.state.step + 1,
            episode_seed: self.state.episode_seed,
        };
        let done = self.state.step >= self.mdp.horizon();
        StepResult {
            state: EnvState::Tabular(self.state.clone()),
            obs: self.one_hot(next),
            signal: Signal::Alive,
            subgoal_delta: 0,
            done,
        }
    }
}

/// Exact finite-horizon state-action occupancy of a categorical policy
/// (rows of `policy` are per-state action distributions), computed by
/// forward enumeration over the horizon and normalized to sum 1.
pub fn tabular_occupancy(mdp: &TabularMdp, policy: &[Vec<f64>]) -> Result<Vec<f64>> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if policy.len() != ns {
        return Err(Error::Dimension {
            context: "occupancy policy rows",
            expected: ns,
            got: policy.len(),
        });
    }
    for (s, row) in policy.iter().enumerate() {
        if row.len() != na {
            return Err(Error::Dimension {
                context: "occupancy policy row width",
                expected: na,
                got: row.len(),
            });
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) {
            return Err(Error::Config(format!(
                "policy row {s} is not a distribution (sum {sum})"
            )));
        }
    }
    let mut dist = vec![0.0; ns];
    dist[mdp.start()] = 1.0;
    let mut occ = vec![0.0; ns * na];
    for _ in 0..mdp.horizon() {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if dist[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = dist[s] * policy[s][a];
                if w == 0.0 {
                    continue;
                }
                occ[s * na + a] += w;
                for (sp, p) in mdp.row(s, a).iter().enumerate() {
                    next[sp] += w * p;
                }
            }
        }
        dist = next;
    }
    let total: f64 = occ.iter().sum();
    for o in &mut occ {
        *o /= total;
    }
    Ok(occ)
}
