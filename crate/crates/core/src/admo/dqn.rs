//! Deep Q-network training over the duplex-assignment MDP.
//!
//! State: the mode vector. Action: flip one AP. Reward: the weighted
//! objective of the next state, divided by a positive scale fixed before
//! training so network targets are of order one.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Batch, Mlp};
use super::{Environment, TrainingTrace};
use crate::error::{Error, Result};
use crate::scenario::DuplexAssignment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of all ε updates after which ε reaches `epsilon_end`.
    pub epsilon_decay_fraction: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Steps between target-network copies and ε updates.
    pub target_update: usize,
    /// Random assignments evaluated to fix the reward scale.
    pub reward_probes: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            steps_per_episode: 10,
            hidden: vec![20, 20],
            learning_rate: 0.01,
            discount: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.7,
            replay_capacity: 2000,
            batch_size: 32,
            target_update: 10,
            reward_probes: 16,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, r: &str| Err(Error::config(format!("dqn.{f}"), r));
        if !(0.0..1.0).contains(&self.discount) {
            return bad("discount", "must lie in [0, 1)");
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return bad(name, "must lie in [0, 1]");
            }
        }
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            return bad("epsilon_decay_fraction", "must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad("batch_size", "must be positive and at most replay_capacity");
        }
        if self.target_update == 0 {
            return bad("target_update", "must be positive");
        }
        if self.steps_per_episode == 0 {
            return bad("steps_per_episode", "must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate", "must be nonnegative");
        }
        if self.hidden.contains(&0) {
            return bad("hidden", "layer sizes must be positive");
        }
        if self.reward_probes == 0 {
            return bad("reward_probes", "must be positive");
        }
        Ok(())
    }

    /// Linear decrement applied at each ε update.
    pub fn epsilon_step(&self) -> f64 {
        let updates = (self.episodes * self.steps_per_episode / self.target_update) as f64;
        let span = (self.epsilon_decay_fraction * updates).max(1.0);
        (self.epsilon_start - self.epsilon_end).max(0.0) / span
    }
}

/// `(s_t, a_t, r_t, s_{t+1})` with `s_{t+1} = s_t` except bit `a_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: DuplexAssignment,
    pub action: usize,
    pub reward: f64,
    pub next_state: DuplexAssignment,
}

/// Fixed-capacity FIFO replay memory.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// Uniform sample of `size` distinct transitions.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Batch {
        let idx = rand::seq::index::sample(rng, self.items.len(), size.min(self.items.len()));
        let mut batch = Batch::default();
        for i in idx {
            let e = &self.items[i];
            batch.states.push(e.state.as_features());
            batch.actions.push(e.action);
            batch.rewards.push(e.reward);
            batch.next_states.push(e.next_state.as_features());
        }
        batch
    }
}

pub(crate) fn random_assignment<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DuplexAssignment {
    DuplexAssignment::new((0..m).map(|_| rng.random::<bool>()).collect())
}

/// Mean reward of random assignments; the divisor applied to training rewards.
pub(crate) fn reward_scale<R: Rng + ?Sized>(env: &mut Environment<'_>, probes: usize, rng: &mut R) -> Result<f64> {
    let m = env.num_aps();
    let mut total = 0.0;
    for _ in 0..probes {
        total += env.reward(&random_assignment(m, rng))?.abs();
    }
    let mean = total / probes as f64;
    Ok(if mean > 0.0 && mean.is_finite() { mean } else { 1.0 })
}

pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Best state on a `steps`-long greedy walk from `start`, start included.
pub(crate) fn greedy_rollout(
    env: &mut Environment<'_>,
    start: DuplexAssignment,
    steps: usize,
    mut policy: impl FnMut(&DuplexAssignment) -> usize,
) -> Result<(DuplexAssignment, f64)> {
    let mut state = start;
    let mut best = (state.clone(), env.reward(&state)?);
    for _ in 0..steps {
        state = state.flipped(policy(&state));
        let r = env.reward(&state)?;
        if r > best.1 {
            best = (state.clone(), r);
        }
    }
    Ok(best)
}

/// Train a DQN and report the best state on a greedy rollout of the learned
/// policy from a seeded random start.
pub fn dqn_train(config: &DqnConfig, env: &mut Environment<'_>, seed: u64) -> Result<TrainingTrace> {
    dqn_train_observed(config, env, seed, |_| {})
}

/// [`dqn_train`] that also passes every stored experience to `observe`.
pub fn dqn_train_observed(
    config: &DqnConfig,
    env: &mut Environment<'_>,
    seed: u64,
    mut observe: impl FnMut(&Experience),
) -> Result<TrainingTrace> {
    config.validate()?;
    let m = env.num_aps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = reward_scale(env, config.reward_probes, &mut rng)?;
    let mut sizes = vec![m];
    sizes.extend(&config.hidden);
    sizes.push(m);
    let mut online = Mlp::new(&sizes, &mut rng)?;
    let mut target = online.clone();
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let mut epsilon = config.epsilon_start;
    let eps_step = config.epsilon_step();
    let mut trace = TrainingTrace::default();
    let mut global_step = 0usize;

    for _ in 0..config.episodes {
        let mut state = random_assignment(m, &mut rng);
        let mut reward_sum = 0.0;
        let mut losses = Vec::new();
        for _ in 0..config.steps_per_episode {
            let action = if rng.random::<f64>() < epsilon {
                rng.random_range(0..m)
            } else {
                argmax(online.forward(&state.as_features()).iter().copied())
            };
            let next = state.flipped(action);
            let reward = env.reward(&next)?;
            trace.visit(&next, reward);
            reward_sum += reward;
            let exp = Experience {
                state: state.clone(),
                action,
                reward: reward / scale,
                next_state: next.clone(),
            };
            observe(&exp);
            replay.push(exp);
            if replay.len() >= config.batch_size {
                let batch = replay.sample(config.batch_size, &mut rng);
                match online.train_step(&batch, &target, config.learning_rate, config.discount) {
                    Ok(loss) => {
                        losses.push(loss);
                        trace.step_loss.push(loss);
                    }
                    Err(e) => return Err(e),
                }
            }
            state = next;
            global_step += 1;
            if global_step % config.target_update == 0 {
                target = online.clone();
                epsilon = (epsilon - eps_step).max(config.epsilon_end);
            }
        }
        trace.episode_reward.push(reward_sum / config.steps_per_episode as f64);
        trace
            .episode_loss
            .push((!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64));
    }

    let start = random_assignment(m, &mut rng);
    let (best, reward) = greedy_rollout(env, start, config.steps_per_episode, |s| {
        argmax(online.forward(&s.as_features()).iter().copied())
    })?;
    trace.visit(&best, reward);
    trace.policy_assignment = Some(best);
    trace.policy_reward = reward;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_is_fifo() {
        let mut buf = ReplayBuffer::new(2);
        for a in 0..3 {
            let s = DuplexAssignment::all_uplink(3);
            buf.push(Experience {
                next_state: s.flipped(a),
                state: s,
                action: a,
                reward: a as f64,
            });
        }
        let actions: Vec<usize> = buf.iter().map(|e| e.action).collect();
        assert_eq!(actions, vec![1, 2]);
    }

    #[test]
    fn epsilon_reaches_end_at_fraction() {
        let cfg = DqnConfig::default();
        let updates = 500 * 10 / 10;
        let reached = cfg.epsilon_start - cfg.epsilon_step() * (0.7 * updates as f64);
        assert!((reached - cfg.epsilon_end).abs() < 1e-12);
    }

    #[test]
    fn invalid_discount_is_rejected() {
        let cfg = DqnConfig { discount: 1.0, ..DqnConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }
}
