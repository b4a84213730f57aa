use std::collections::BTreeMap;

use super::baselines::{AvgSolver, ExhaustiveSolver, RandomSolver, TableRow};
use super::dqn::{dqn_train, DqnConfig};
use super::qlearning::{qlearning_train, QLearningConfig};
use super::{Environment, Objectives, TrainingTrace};
use crate::error::{Error, Result};
use crate::scenario::DuplexAssignment;

/// Names of the built-in solvers in registration order.
pub const SOLVER_NAMES: [&str; 5] = ["random", "avg", "exu", "qlearn", "dqn"];

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutcome {
    pub assignment: DuplexAssignment,
    pub objectives: Objectives,
    pub reward: f64,
    /// Training history for learning solvers.
    pub trace: Option<TrainingTrace>,
    /// Full evaluation table for exhaustive search.
    pub table: Option<Vec<TableRow>>,
}

pub trait Solver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, env: &mut Environment<'_>, seed: u64) -> Result<SolverOutcome>;
}

/// Hyperparameters shared by the built-in solvers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverSettings {
    pub random_draws: Option<usize>,
    pub dqn: DqnConfig,
    pub qlearning: QLearningConfig,
}

#[derive(Debug, Clone)]
pub struct QLearningSolver {
    pub config: QLearningConfig,
}

impl Solver for QLearningSolver {
    fn name(&self) -> &'static str {
        "qlearn"
    }

    fn solve(&self, env: &mut Environment<'_>, seed: u64) -> Result<SolverOutcome> {
        let trace = qlearning_train(&self.config, env, seed)?;
        learned_outcome(env, trace)
    }
}

#[derive(Debug, Clone)]
pub struct DqnSolver {
    pub config: DqnConfig,
}

impl Solver for DqnSolver {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn solve(&self, env: &mut Environment<'_>, seed: u64) -> Result<SolverOutcome> {
        let trace = dqn_train(&self.config, env, seed)?;
        learned_outcome(env, trace)
    }
}

fn learned_outcome(env: &mut Environment<'_>, trace: TrainingTrace) -> Result<SolverOutcome> {
    let assignment = trace
        .policy_assignment
        .clone()
        .unwrap_or_else(|| DuplexAssignment::all_downlink(env.num_aps()));
    let objectives = env.objectives(&assignment)?;
    Ok(SolverOutcome {
        reward: env.weights().reward(&objectives),
        assignment,
        objectives,
        trace: Some(trace),
        table: None,
    })
}

/// Solvers keyed by name.
pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Box<dyn Solver>>,
    order: Vec<&'static str>,
}

impl SolverRegistry {
    pub fn empty() -> Self {
        Self {
            solvers: BTreeMap::new(),
            order: Vec::new(),
        }
    }

    /// Registry holding `random`, `avg`, `exu`, `qlearn` and `dqn`.
    pub fn with_defaults(settings: &SolverSettings) -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(RandomSolver {
            draws: settings.random_draws.unwrap_or(1),
        }));
        reg.register(Box::new(AvgSolver));
        reg.register(Box::new(ExhaustiveSolver));
        reg.register(Box::new(QLearningSolver {
            config: settings.qlearning.clone(),
        }));
        reg.register(Box::new(DqnSolver {
            config: settings.dqn.clone(),
        }));
        reg
    }

    /// Adds or replaces a solver under its own name.
    pub fn register(&mut self, solver: Box<dyn Solver>) {
        let name = solver.name();
        if self.solvers.insert(name, solver).is_none() {
            self.order.push(name);
        }
    }

    pub fn get(&self, name: &str) -> Result<&dyn Solver> {
        self.solvers
            .get(name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> &[&'static str] {
        &self.order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_registered_in_order() {
        let reg = SolverRegistry::with_defaults(&SolverSettings::default());
        assert_eq!(reg.names(), SOLVER_NAMES);
        for name in SOLVER_NAMES {
            assert_eq!(reg.get(name).unwrap().name(), name);
        }
    }

    #[test]
    fn unknown_solver_is_an_error() {
        let reg = SolverRegistry::with_defaults(&SolverSettings::default());
        assert!(matches!(reg.get("annealing"), Err(Error::UnknownSolver(n)) if n == "annealing"));
    }
}
