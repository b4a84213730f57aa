use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::solver::{Solver, SolverOutcome};
use super::{Environment, Objectives};
use crate::error::{Error, Result};
use crate::scenario::DuplexAssignment;

/// Largest AP count accepted by exhaustive search.
pub const EXHAUSTIVE_MAX_APS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub bits: u64,
    pub objectives: Objectives,
    pub reward: f64,
}

/// Evaluate all `2^M` assignments. Returns the index of the best row (first
/// on ties) and the full table ordered by assignment bits.
pub fn exhaustive_search(env: &mut Environment<'_>) -> Result<(usize, Vec<TableRow>)> {
    let m = env.num_aps();
    if m > EXHAUSTIVE_MAX_APS {
        return Err(Error::Size(format!(
            "exhaustive search over {m} APs exceeds the limit of {EXHAUSTIVE_MAX_APS}"
        )));
    }
    let mut table = Vec::with_capacity(1 << m);
    let mut best = 0;
    for bits in 0..(1u64 << m) {
        let asg = DuplexAssignment::from_bits(bits, m);
        let objectives = env.objectives(&asg)?;
        let reward = env.weights().reward(&objectives);
        if reward > table.get(best).map_or(f64::NEG_INFINITY, |r: &TableRow| r.reward) {
            best = table.len();
        }
        table.push(TableRow { bits, objectives, reward });
    }
    Ok((best, table))
}

/// Uniform random assignments and their rewards.
pub fn random_baseline(env: &mut Environment<'_>, draws: usize, seed: u64) -> Result<Vec<(DuplexAssignment, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = env.num_aps();
    (0..draws)
        .map(|_| {
            let asg = DuplexAssignment::new((0..m).map(|_| rng.random::<bool>()).collect());
            let r = env.reward(&asg)?;
            Ok((asg, r))
        })
        .collect()
}

/// First `⌈M/2⌉` APs by index in DL, the rest in UL.
pub fn avg_assignment(num_aps: usize) -> DuplexAssignment {
    let dl = num_aps.div_ceil(2);
    DuplexAssignment::new((0..num_aps).map(|m| m < dl).collect())
}

fn outcome(env: &mut Environment<'_>, assignment: DuplexAssignment) -> Result<SolverOutcome> {
    let objectives = env.objectives(&assignment)?;
    Ok(SolverOutcome {
        reward: env.weights().reward(&objectives),
        assignment,
        objectives,
        trace: None,
        table: None,
    })
}

/// Best of `draws` uniform random assignments.
#[derive(Debug, Clone)]
pub struct RandomSolver {
    pub draws: usize,
}

impl Solver for RandomSolver {
    fn name(&self) -> &'static str {
        "random"
    }

    fn solve(&self, env: &mut Environment<'_>, seed: u64) -> Result<SolverOutcome> {
        if self.draws == 0 {
            return Err(Error::InvalidArgument("random solver needs at least one draw".into()));
        }
        let draws = random_baseline(env, self.draws, seed)?;
        let mut best = 0;
        for (i, (_, r)) in draws.iter().enumerate() {
            if *r > draws[best].1 {
                best = i;
            }
        }
        let asg = draws[best].0.clone();
        outcome(env, asg)
    }
}

#[derive(Debug, Clone, Default)]
pub struct AvgSolver;

impl Solver for AvgSolver {
    fn name(&self) -> &'static str {
        "avg"
    }

    fn solve(&self, env: &mut Environment<'_>, _seed: u64) -> Result<SolverOutcome> {
        let asg = avg_assignment(env.num_aps());
        outcome(env, asg)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExhaustiveSolver;

impl Solver for ExhaustiveSolver {
    fn name(&self) -> &'static str {
        "exu"
    }

    fn solve(&self, env: &mut Environment<'_>, _seed: u64) -> Result<SolverOutcome> {
        let (best, table) = exhaustive_search(env)?;
        let mut out = outcome(env, DuplexAssignment::from_bits(table[best].bits, env.num_aps()))?;
        out.table = Some(table);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_splits_evenly() {
        let a = avg_assignment(8);
        assert_eq!(a.num_dl(), 4);
        assert_eq!(a.dl_aps(), vec![0, 1, 2, 3]);
        assert_eq!(avg_assignment(5).num_dl(), 3);
    }
}
