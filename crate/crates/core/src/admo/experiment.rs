//! Multi-scenario solver comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::SolverRegistry;
use super::{Environment, Objectives, RewardWeights};
use crate::analysis::ScenarioAnalysis;
use crate::error::{Error, Result};
use crate::scenario::{build_scenario, SystemConfig};

/// Result of one solver on one scenario draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: usize,
    pub scenario_seed: u64,
    pub solver: String,
    pub objectives: Objectives,
    pub reward: f64,
}

/// One step of an empirical CDF: `P(X ≤ value) = cdf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    pub cdf: f64,
}

/// Sorted values with cumulative probabilities `i / n`, `i = 1..=n`.
pub fn empirical_cdf(values: &[f64]) -> Vec<CdfPoint> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(i, value)| CdfPoint {
            value,
            cdf: (i + 1) as f64 / n,
        })
        .collect()
}

/// Seed of scenario `index` in an experiment seeded with `seed`.
pub fn scenario_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

/// Draw `num_scenarios` independent scenarios from `base` (only the seed
/// varies) and run every named solver on each. Outcomes are ordered by
/// scenario, then by the order of `solvers`.
pub fn cdf_experiment(
    base: &SystemConfig,
    num_scenarios: usize,
    weights: RewardWeights,
    registry: &SolverRegistry,
    solvers: &[&str],
    seed: u64,
) -> Result<Vec<ScenarioOutcome>> {
    if num_scenarios == 0 {
        return Err(Error::InvalidArgument("need at least one scenario".into()));
    }
    for name in solvers {
        registry.get(name)?;
    }
    let per_scenario: Vec<Result<Vec<ScenarioOutcome>>> = (0..num_scenarios)
        .into_par_iter()
        .map(|i| {
            let scenario_seed = scenario_seed(seed, i);
            let cfg = SystemConfig {
                rng_seed: scenario_seed,
                ..base.clone()
            };
            let analysis = ScenarioAnalysis::new(build_scenario(&cfg)?)?;
            let mut env = Environment::new(&analysis, weights);
            solvers
                .iter()
                .map(|name| {
                    let out = registry.get(name)?.solve(&mut env, scenario_seed)?;
                    Ok(ScenarioOutcome {
                        scenario: i,
                        scenario_seed,
                        solver: name.to_string(),
                        objectives: out.objectives,
                        reward: out.reward,
                    })
                })
                .collect()
        })
        .collect();
    let mut all = Vec::with_capacity(num_scenarios * solvers.len());
    for r in per_scenario {
        all.extend(r?);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_ends_at_one() {
        let c = empirical_cdf(&[3.0, 1.0, 2.0]);
        assert_eq!(c.iter().map(|p| p.value).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(c.last().unwrap().cdf, 1.0);
    }

    #[test]
    fn single_value_is_one_step() {
        assert_eq!(empirical_cdf(&[5.0]), vec![CdfPoint { value: 5.0, cdf: 1.0 }]);
    }
}
