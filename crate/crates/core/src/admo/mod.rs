//! AP duplex-mode optimization.
//!
//! An [`Environment`] wraps one scenario and memoizes the objective pair
//! `(f1, f2)` per assignment. Solvers implement [`Solver`] and are selected by
//! name through a [`SolverRegistry`].

mod baselines;
mod dqn;
mod experiment;
mod mlp;
mod pareto;
mod qlearning;
mod solver;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::analysis::ScenarioAnalysis;
use crate::error::{Error, Result};
use crate::rates::sum_rate;
use crate::scenario::DuplexAssignment;
use crate::sensing::sense_sum;

pub use baselines::{avg_assignment, exhaustive_search, random_baseline, AvgSolver, ExhaustiveSolver, RandomSolver, TableRow, EXHAUSTIVE_MAX_APS};
pub use dqn::{dqn_train, dqn_train_observed, DqnConfig, Experience, ReplayBuffer};
pub use experiment::{cdf_experiment, empirical_cdf, scenario_seed, CdfPoint, ScenarioOutcome};
pub use mlp::{Batch, Mlp, MlpGradient};
pub use pareto::{normalized_distance_to_front, pareto_front, pareto_front_brute_force};
pub use qlearning::{qlearning_train, QLearningConfig, QLEARNING_MAX_APS};
pub use solver::{DqnSolver, QLearningSolver, Solver, SolverOutcome, SolverRegistry, SolverSettings, SOLVER_NAMES};

/// Sum rate `f1` and sum localization error rate `f2`, bits/symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub f1: f64,
    pub f2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub omega_c: f64,
    pub omega_s: f64,
}

impl RewardWeights {
    pub fn new(omega_c: f64, omega_s: f64) -> Result<Self> {
        let ok = |w: f64| w >= 0.0 && w.is_finite();
        if !ok(omega_c) || !ok(omega_s) {
            return Err(Error::InvalidArgument("reward weights must be nonnegative".into()));
        }
        if omega_c == 0.0 && omega_s == 0.0 {
            return Err(Error::InvalidArgument("reward weights must not both be zero".into()));
        }
        Ok(Self { omega_c, omega_s })
    }

    /// `ω_c f1 + ω_s f2`
    pub fn reward(&self, objectives: &Objectives) -> f64 {
        self.omega_c * objectives.f1 + self.omega_s * objectives.f2
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            omega_c: 0.5,
            omega_s: 0.5,
        }
    }
}

/// Objectives and reward of one assignment, without caching.
pub fn evaluate_assignment(
    analysis: &ScenarioAnalysis,
    assignment: &DuplexAssignment,
    weights: &RewardWeights,
) -> Result<(Objectives, f64)> {
    let objectives = Objectives {
        f1: sum_rate(analysis, assignment)?,
        f2: sense_sum(analysis, assignment)?,
    };
    Ok((objectives, weights.reward(&objectives)))
}

/// Deterministic optimization environment over one scenario.
pub struct Environment<'a> {
    analysis: &'a ScenarioAnalysis,
    weights: RewardWeights,
    cache: HashMap<u64, Objectives>,
}

impl<'a> Environment<'a> {
    pub fn new(analysis: &'a ScenarioAnalysis, weights: RewardWeights) -> Self {
        Self {
            analysis,
            weights,
            cache: HashMap::new(),
        }
    }

    pub fn analysis(&self) -> &ScenarioAnalysis {
        self.analysis
    }

    pub fn num_aps(&self) -> usize {
        self.analysis.scenario.num_aps()
    }

    pub fn weights(&self) -> RewardWeights {
        self.weights
    }

    /// Number of distinct assignments evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.cache.len()
    }

    pub fn objectives(&mut self, assignment: &DuplexAssignment) -> Result<Objectives> {
        let key = assignment.to_bits();
        if let Some(o) = self.cache.get(&key) {
            return Ok(*o);
        }
        let (o, _) = evaluate_assignment(self.analysis, assignment, &self.weights)?;
        if !o.f1.is_finite() || !o.f2.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite objectives for assignment {}",
                assignment.bit_string()
            )));
        }
        self.cache.insert(key, o);
        Ok(o)
    }

    pub fn reward(&mut self, assignment: &DuplexAssignment) -> Result<f64> {
        let o = self.objectives(assignment)?;
        Ok(self.weights.reward(&o))
    }
}

/// Per-episode training history and the best assignment found.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    /// Mean (unscaled) reward of the states reached in each episode.
    pub episode_reward: Vec<f64>,
    /// Mean loss of the gradient steps taken in each episode; `None` before
    /// the replay buffer holds a full batch.
    pub episode_loss: Vec<Option<f64>>,
    /// Loss of every gradient step.
    pub step_loss: Vec<f64>,
    /// Best reward over every visited state.
    pub best_visited_reward: f64,
    pub best_visited: Option<DuplexAssignment>,
    /// Best state on a greedy rollout of the trained policy.
    pub policy_assignment: Option<DuplexAssignment>,
    pub policy_reward: f64,
}

impl TrainingTrace {
    fn visit(&mut self, assignment: &DuplexAssignment, reward: f64) {
        if self.best_visited.is_none() || reward > self.best_visited_reward {
            self.best_visited_reward = reward;
            self.best_visited = Some(assignment.clone());
        }
    }
}
