//! Tabular Q-learning over the `2^M × M` state-action table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dqn::{argmax, greedy_rollout, random_assignment, reward_scale};
use super::{Environment, TrainingTrace};
use crate::error::{Error, Result};

/// Largest AP count for which the Q-table is allocated.
pub const QLEARNING_MAX_APS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QLearningConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_fraction: f64,
    /// Steps between ε updates.
    pub epsilon_update: usize,
    pub reward_probes: usize,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            steps_per_episode: 10,
            learning_rate: 0.01,
            discount: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.7,
            epsilon_update: 10,
            reward_probes: 16,
        }
    }
}

impl QLearningConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, r: &str| Err(Error::config(format!("qlearning.{f}"), r));
        if !(0.0..1.0).contains(&self.discount) {
            return bad("discount", "must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon_start", "epsilon bounds must lie in [0, 1]");
        }
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            return bad("epsilon_decay_fraction", "must lie in (0, 1]");
        }
        if self.epsilon_update == 0 || self.steps_per_episode == 0 || self.reward_probes == 0 {
            return bad("epsilon_update", "step counts must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate", "must be nonnegative");
        }
        Ok(())
    }
}

/// Train a Q-table and report the best state on a greedy rollout.
pub fn qlearning_train(config: &QLearningConfig, env: &mut Environment<'_>, seed: u64) -> Result<TrainingTrace> {
    config.validate()?;
    let m = env.num_aps();
    if m > QLEARNING_MAX_APS {
        return Err(Error::Size(format!(
            "Q-table over {m} APs exceeds the limit of {QLEARNING_MAX_APS}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = reward_scale(env, config.reward_probes, &mut rng)?;
    let mut q = vec![vec![0.0f64; m]; 1 << m];
    let updates = (config.episodes * config.steps_per_episode / config.epsilon_update) as f64;
    let eps_step = (config.epsilon_start - config.epsilon_end).max(0.0) / (config.epsilon_decay_fraction * updates).max(1.0);
    let mut epsilon = config.epsilon_start;
    let mut trace = TrainingTrace::default();
    let mut global_step = 0usize;

    for _ in 0..config.episodes {
        let mut state = random_assignment(m, &mut rng);
        let mut reward_sum = 0.0;
        for _ in 0..config.steps_per_episode {
            let s = state.to_bits() as usize;
            let action = if rng.random::<f64>() < epsilon {
                rng.random_range(0..m)
            } else {
                argmax(q[s].iter().copied())
            };
            let next = state.flipped(action);
            let reward = env.reward(&next)?;
            trace.visit(&next, reward);
            reward_sum += reward;
            let s2 = next.to_bits() as usize;
            let best_next = q[s2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let td = reward / scale + config.discount * best_next - q[s][action];
            q[s][action] += config.learning_rate * td;
            if !q[s][action].is_finite() {
                return Err(Error::Divergence("Q-table entry became non-finite".into()));
            }
            state = next;
            global_step += 1;
            if global_step % config.epsilon_update == 0 {
                epsilon = (epsilon - eps_step).max(config.epsilon_end);
            }
        }
        trace.episode_reward.push(reward_sum / config.steps_per_episode as f64);
        trace.episode_loss.push(None);
    }

    let start = random_assignment(m, &mut rng);
    if config.episodes == 0 {
        let r = env.reward(&start)?;
        trace.visit(&start, r);
        trace.policy_assignment = Some(start);
        trace.policy_reward = r;
        return Ok(trace);
    }
    let (best, reward) = greedy_rollout(env, start, config.steps_per_episode, |s| {
        argmax(q[s.to_bits() as usize].iter().copied())
    })?;
    trace.visit(&best, reward);
    trace.policy_assignment = Some(best);
    trace.policy_reward = reward;
    Ok(trace)
}
