//! Stochastic policy heads over [`MlpNet`] backbones.
//!
//! Trainers only touch policies through [`PolicyModel`], so the same PPO
//! and adversarial machinery drives continuous Gaussian control policies
//! and the categorical policies used on tabular oracle problems.

use super::MlpNet;
use crate::store::rng::Rng;
use crate::{Error, Result};

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const LN_2PI: f64 = 1.8378770664093453;

/// Common surface for differentiable stochastic policies with flat
/// parameter vectors.
pub trait PolicyModel {
    fn obs_dim(&self) -> usize;
    /// Length of the action vector representation (1 for categorical).
    fn action_len(&self) -> usize;
    fn param_count(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    /// Replaces parameters, applying any head-specific clamping.
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    fn sample(&self, obs: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
    fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64>;
    fn entropy(&self, obs: &[f64]) -> Result<f64>;
    /// Accumulates `logp_coeff * grad log pi(action|obs) + ent_coeff * grad H(obs)`
    /// into `out` (length `param_count`).
    fn accumulate_grads(
        &self,
        obs: &[f64],
        action: &[f64],
        logp_coeff: f64,
        ent_coeff: f64,
        out: &mut [f64],
    ) -> Result<()>;
}

/// Diagonal Gaussian policy: an MLP maps observations to the mean, and a
/// state-independent log-std vector (clamped to `[-5, 2]`) sets the spread.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    mean_net: MlpNet,
    log_std: Vec<f64>,
}

impl GaussianPolicy {
    /// Fresh policy with Glorot-initialized mean net and log-std zero.
    pub fn new(layer_sizes: &[usize], activation: super::Activation, rng: &mut Rng) -> Result<Self> {
        let mean_net = MlpNet::glorot(layer_sizes, activation, rng)?;
        let dim = mean_net.output_dim();
        Ok(GaussianPolicy {
            mean_net,
            log_std: vec![0.0; dim],
        })
    }

    pub fn from_parts(mean_net: MlpNet, log_std: Vec<f64>) -> Result<Self> {
        if log_std.len() != mean_net.output_dim() {
            return Err(Error::Dimension {
                context: "GaussianPolicy log_std",
                expected: mean_net.output_dim(),
                got: log_std.len(),
            });
        }
        let mut p = GaussianPolicy { mean_net, log_std };
        p.clamp_log_std();
        Ok(p)
    }

    pub fn mean_net(&self) -> &MlpNet {
        &self.mean_net
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.forward(obs)
    }

    fn clamp_log_std(&mut self) {
        for s in &mut self.log_std {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

impl PolicyModel for GaussianPolicy {
    fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    fn action_len(&self) -> usize {
        self.mean_net.output_dim()
    }

    fn param_count(&self) -> usize {
        self.mean_net.param_count() + self.log_std.len()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.mean_net.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension {
                context: "GaussianPolicy set_params",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let n = self.mean_net.param_count();
        self.mean_net.params_mut().copy_from_slice(&params[..n]);
        self.log_std.copy_from_slice(&params[n..]);
        self.clamp_log_std();
        Ok(())
    }

    fn sample(&self, obs: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let mean = self.mean_net.forward(obs)?;
        Ok(mean
            .iter()
            .zip(self.log_std.iter())
            .map(|(m, ls)| m + ls.exp() * rng.normal())
            .collect())
    }

    fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let mean = self.mean_net.forward(obs)?;
        if action.len() != mean.len() {
            return Err(Error::Dimension {
                context: "GaussianPolicy log_prob action",
                expected: mean.len(),
                got: action.len(),
            });
        }
        let mut lp = 0.0;
        for ((a, m), ls) in action.iter().zip(mean.iter()).zip(self.log_std.iter()) {
            let z = (a - m) / ls.exp();
            lp += -ls - 0.5 * LN_2PI - 0.5 * z * z;
        }
        Ok(lp)
    }

    fn entropy(&self, _obs: &[f64]) -> Result<f64> {
        Ok(self
            .log_std
            .iter()
            .map(|ls| ls + 0.5 * (1.0 + LN_2PI))
            .sum())
    }

    fn accumulate_grads(
        &self,
        obs: &[f64],
        action: &[f64],
        logp_coeff: f64,
        ent_coeff: f64,
        out: &mut [f64],
    ) -> Result<()> {
        if out.len() != self.param_count() {
            return Err(Error::Dimension {
                context: "GaussianPolicy accumulate_grads out",
                expected: self.param_count(),
                got: out.len(),
            });
        }
        let n = self.mean_net.param_count();
        let mean = self.mean_net.forward(obs)?;
        if logp_coeff != 0.0 {
            // d log pi / d mean_d = (a_d - mu_d) / sigma_d^2
            let dmean: Vec<f64> = action
                .iter()
                .zip(mean.iter())
                .zip(self.log_std.iter())
                .map(|((a, m), ls)| logp_coeff * (a - m) / (2.0 * ls).exp())
                .collect();
            self.mean_net.backward_into(obs, &dmean, &mut out[..n])?;
            // d log pi / d log_std_d = z^2 - 1
            for (k, ((a, m), ls)) in action
                .iter()
                .zip(mean.iter())
                .zip(self.log_std.iter())
                .enumerate()
            {
                let z = (a - m) / ls.exp();
                out[n + k] += logp_coeff * (z * z - 1.0);
            }
        }
        if ent_coeff != 0.0 {
            // dH/d log_std_d = 1; entropy has no mean-net dependence.
            for k in 0..self.log_std.len() {
                out[n + k] += ent_coeff;
            }
        }
        Ok(())
    }
}

/// Categorical policy over a small discrete action set; actions are
/// represented as a single-element vector holding the action index.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalPolicy {
    logits_net: MlpNet,
}

impl CategoricalPolicy {
    pub fn new(layer_sizes: &[usize], activation: super::Activation, rng: &mut Rng) -> Result<Self> {
        Ok(CategoricalPolicy {
            logits_net: MlpNet::glorot(layer_sizes, activation, rng)?,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.logits_net.output_dim()
    }

    /// Single linear layer over one-hot states whose softmax reproduces
    /// the given per-state action distributions exactly.
    pub fn from_table(table: &[Vec<f64>]) -> Result<Self> {
        let n_states = table.len();
        let n_actions = table.first().map(|r| r.len()).unwrap_or(0);
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Config("empty policy table".into()));
        }
        let mut net = MlpNet::zeros(&[n_states, n_actions], super::Activation::Tanh)?;
        // Row-major (n_actions x n_states) weights; logits(one_hot(s))_a =
        // W[a][s], so W[a][s] = ln p[s][a].
        for (s, row) in table.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::Config("ragged policy table".into()));
            }
            for (a, p) in row.iter().enumerate() {
                net.params_mut()[a * n_states + s] = p.max(1e-12).ln();
            }
        }
        Ok(CategoricalPolicy { logits_net: net })
    }

    /// Per-state action distributions over one-hot observations.
    pub fn table(&self, n_states: usize) -> Result<Vec<Vec<f64>>> {
        (0..n_states)
            .map(|s| {
                let mut obs = vec![0.0; self.obs_dim()];
                if s < obs.len() {
                    obs[s] = 1.0;
                }
                self.probs(&obs)
            })
            .collect()
    }

    pub fn probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let logits = self.logits_net.forward(obs)?;
        Ok(softmax(&logits))
    }

    fn action_index(&self, action: &[f64]) -> Result<usize> {
        if action.len() != 1 {
            return Err(Error::Dimension {
                context: "CategoricalPolicy action",
                expected: 1,
                got: action.len(),
            });
        }
        let idx = action[0].round() as usize;
        if idx >= self.n_actions() {
            return Err(Error::Config(format!(
                "action index {idx} out of range 0..{}",
                self.n_actions()
            )));
        }
        Ok(idx)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

impl PolicyModel for CategoricalPolicy {
    fn obs_dim(&self) -> usize {
        self.logits_net.input_dim()
    }

    fn action_len(&self) -> usize {
        1
    }

    fn param_count(&self) -> usize {
        self.logits_net.param_count()
    }

    fn params(&self) -> Vec<f64> {
        self.logits_net.params().to_vec()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension {
                context: "CategoricalPolicy set_params",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        self.logits_net.params_mut().copy_from_slice(params);
        Ok(())
    }

    fn sample(&self, obs: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let probs = self.probs(obs)?;
        let u = rng.next_f64();
        let mut acc = 0.0;
        let mut idx = probs.len() - 1;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                idx = k;
                break;
            }
        }
        Ok(vec![idx as f64])
    }

    fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let idx = self.action_index(action)?;
        let logits = self.logits_net.forward(obs)?;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(logits[idx] - lse)
    }

    fn entropy(&self, obs: &[f64]) -> Result<f64> {
        let probs = self.probs(obs)?;
        Ok(-probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>())
    }

    fn accumulate_grads(
        &self,
        obs: &[f64],
        action: &[f64],
        logp_coeff: f64,
        ent_coeff: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let idx = self.action_index(action)?;
        let probs = self.probs(obs)?;
        let mut dlogits = vec![0.0; probs.len()];
        if logp_coeff != 0.0 {
            // d log pi_a / d z_j = [j == a] - p_j
            for (j, p) in probs.iter().enumerate() {
                dlogits[j] += logp_coeff * (((j == idx) as u8 as f64) - p);
            }
        }
        if ent_coeff != 0.0 {
            // dH/d z_j = -p_j (ln p_j + H)
            let h: f64 = -probs
                .iter()
                .filter(|p| **p > 0.0)
                .map(|p| p * p.ln())
                .sum::<f64>();
            for (j, p) in probs.iter().enumerate() {
                if *p > 0.0 {
                    dlogits[j] += ent_coeff * (-p * (p.ln() + h));
                }
            }
        }
        self.logits_net.backward_into(obs, &dlogits, out)
    }
}
