//! Subcommand implementations. Each returns the paths it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nafd_core::admo::{
    cdf_experiment, empirical_cdf, exhaustive_search, normalized_distance_to_front, pareto_front, DqnSolver,
    Environment, RewardWeights, Solver, SolverRegistry, SolverSettings, SOLVER_NAMES,
};
use nafd_core::config::{assignment_or_avg, ConfigFile, WeightPair};
use nafd_core::montecarlo::mc_validation_report;
use nafd_core::sensing::ler_heatmap;
use nafd_core::{build_scenario, ScenarioAnalysis, SystemConfig};

use crate::output::{num, RunManifest, Table};
use crate::{Cli, Command};

/// The configuration file could not be read.
#[derive(Debug)]
pub struct ConfigFileError(pub String);

impl std::fmt::Display for ConfigFileError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "cannot read configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigFileError {}

struct Context_<'a> {
    file: ConfigFile,
    system: SystemConfig,
    out: &'a Path,
    args: toml::Table,
}

fn load(path: &Path, seed: Option<u64>) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|e| ConfigFileError(format!("{}: {e}", path.display())))?;
    let file = ConfigFile::parse(&text)?;
    Ok(match seed {
        Some(s) => file.with_seed(s),
        None => file,
    })
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let config_path = cli
        .common
        .config
        .as_ref()
        .context("missing required option --config")?;
    let file = load(config_path, cli.common.seed)?;
    let system = file.system_config()?;
    let out = cli.common.out.as_path();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut ctx = Context_ {
        file,
        system,
        out,
        args: toml::Table::new(),
    };
    let mut outputs = match &cli.command {
        Command::Validate { trials } => validate(&mut ctx, *trials)?,
        Command::Optimize { solver, weights } => optimize(&mut ctx, solver.as_deref(), *weights)?,
        Command::Pareto { weights } => pareto(&mut ctx, weights)?,
        Command::Heatmap { grid } => heatmap(&mut ctx, *grid)?,
        Command::Cdf { scenarios, weights } => cdf(&mut ctx, *scenarios, *weights)?,
    };
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        config: config_path.display().to_string(),
        seed: ctx.system.rng_seed,
        out_dir: out.display().to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        arguments: ctx.args,
        outputs: outputs
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    outputs.push(manifest.write(out)?);
    Ok(outputs)
}

fn weights_from(pair: Option<(f64, f64)>, default: (f64, f64)) -> Result<RewardWeights> {
    let (c, s) = pair.unwrap_or(default);
    Ok(RewardWeights::new(c, s)?)
}

fn settings(file: &ConfigFile) -> SolverSettings {
    SolverSettings {
        random_draws: Some(file.optimize.random_draws),
        dqn: file.dqn.clone(),
        qlearning: file.qlearning.clone(),
    }
}

fn validate(ctx: &mut Context_<'_>, trials: Option<usize>) -> Result<Vec<PathBuf>> {
    let trials = trials.unwrap_or(ctx.file.validate.trials);
    let seed = ctx.system.rng_seed;
    let assignment = assignment_or_avg(ctx.file.validate.assignment.as_deref(), ctx.system.num_aps)?;
    let n_sweep = ctx.file.validate.n_sweep.clone();
    ctx.args.insert("trials".into(), (trials as i64).into());
    ctx.args.insert("assignment".into(), assignment.bit_string().into());
    ctx.args.insert(
        "n_sweep".into(),
        toml::Value::Array(n_sweep.iter().map(|&n| (n as i64).into()).collect()),
    );

    let analysis = ScenarioAnalysis::sensing_only(build_scenario(&ctx.system)?)?;
    let rows = mc_validation_report(&analysis, &assignment, &n_sweep, trials, seed)?;
    let mut table = Table::new([
        "N",
        "ue_id",
        "direction",
        "closed_form",
        "mc_mean",
        "mc_stderr",
        "mc_log_form",
        "trials",
        "seed",
        "z_score",
        "closed_form_rate",
        "mc_mean_instant",
        "guarded_draws",
    ]);
    for r in rows {
        table.push(vec![
            r.antennas.to_string(),
            r.ue_id.to_string(),
            r.direction.as_str().to_string(),
            num("closed_form", r.closed_form)?,
            num("mc_mean", r.mc.mean_sinr.mean)?,
            num("mc_stderr", r.mc.mean_sinr.std_error)?,
            num("mc_log_form", r.mc.log_rate.mean)?,
            r.trials.to_string(),
            r.seed.to_string(),
            num("z_score", r.mc.mean_sinr.z_score(r.closed_form))?,
            num("closed_form_rate", r.closed_form_rate)?,
            num("mc_mean_instant", r.mc.mean_instant_sinr.mean)?,
            r.mc.guarded_draws.to_string(),
        ]);
    }
    Ok(vec![table.write(&ctx.out.join("validation.csv"))?])
}

fn optimize(ctx: &mut Context_<'_>, solver: Option<&str>, weights: Option<(f64, f64)>) -> Result<Vec<PathBuf>> {
    let name = solver.unwrap_or(&ctx.file.optimize.solver).to_string();
    let weights = weights_from(weights, (ctx.file.optimize.omega_c, ctx.file.optimize.omega_s))?;
    let registry = SolverRegistry::with_defaults(&settings(&ctx.file));
    let solver = registry.get(&name)?;
    ctx.args.insert("solver".into(), name.clone().into());
    ctx.args.insert("omega_c".into(), weights.omega_c.into());
    ctx.args.insert("omega_s".into(), weights.omega_s.into());

    let analysis = ScenarioAnalysis::new(build_scenario(&ctx.system)?)?;
    let mut env = Environment::new(&analysis, weights);
    let outcome = solver.solve(&mut env, ctx.system.rng_seed)?;

    let mut written = Vec::new();
    let mut result = Table::new(["solver", "assignment_bits", "num_dl", "f1", "f2", "reward", "omega_c", "omega_s"]);
    result.push(vec![
        name.clone(),
        outcome.assignment.bit_string(),
        outcome.assignment.num_dl().to_string(),
        num("f1", outcome.objectives.f1)?,
        num("f2", outcome.objectives.f2)?,
        num("reward", outcome.reward)?,
        num("omega_c", weights.omega_c)?,
        num("omega_s", weights.omega_s)?,
    ]);
    written.push(result.write(&ctx.out.join("result.csv"))?);

    if let Some(rows) = &outcome.table {
        let m = ctx.system.num_aps;
        let mut t = Table::new(["assignment_bits", "f1", "f2", "reward"]);
        for r in rows {
            t.push(vec![
                nafd_core::DuplexAssignment::from_bits(r.bits, m).bit_string(),
                num("f1", r.objectives.f1)?,
                num("f2", r.objectives.f2)?,
                num("reward", r.reward)?,
            ]);
        }
        written.push(t.write(&ctx.out.join("table.csv"))?);
    }
    if let Some(trace) = &outcome.trace {
        let mut t = Table::new(["episode", "mean_reward", "loss"]);
        for (i, (r, l)) in trace.episode_reward.iter().zip(&trace.episode_loss).enumerate() {
            t.push(vec![
                i.to_string(),
                num("mean_reward", *r)?,
                match l {
                    Some(l) => num("loss", *l)?,
                    None => String::new(),
                },
            ]);
        }
        written.push(t.write(&ctx.out.join("convergence.csv"))?);
    }
    Ok(written)
}

fn pareto(ctx: &mut Context_<'_>, weights: &[(f64, f64)]) -> Result<Vec<PathBuf>> {
    let grid: Vec<WeightPair> = if weights.is_empty() {
        ctx.file.pareto.weights.clone()
    } else {
        weights
            .iter()
            .map(|&(omega_c, omega_s)| WeightPair { omega_c, omega_s })
            .collect()
    };
    let grid = grid
        .into_iter()
        .map(|w| w.to_weights())
        .collect::<nafd_core::Result<Vec<_>>>()?;
    ctx.args.insert(
        "weights".into(),
        toml::Value::Array(
            grid.iter()
                .map(|w| toml::Value::Array(vec![w.omega_c.into(), w.omega_s.into()]))
                .collect(),
        ),
    );

    let seed = ctx.system.rng_seed;
    let m = ctx.system.num_aps;
    let analysis = ScenarioAnalysis::new(build_scenario(&ctx.system)?)?;
    let mut env = Environment::new(&analysis, RewardWeights::default());
    let (_, table) = exhaustive_search(&mut env)?;
    let front = pareto_front(&table);
    let on_front = |o: &nafd_core::admo::Objectives| front.iter().any(|&i| table[i].objectives == *o);

    let mut csv = Table::new(["assignment_bits", "f1", "f2", "is_pareto", "source", "front_distance"]);
    for (i, row) in table.iter().enumerate() {
        let is_front = front.binary_search(&i).is_ok();
        csv.push(vec![
            nafd_core::DuplexAssignment::from_bits(row.bits, m).bit_string(),
            num("f1", row.objectives.f1)?,
            num("f2", row.objectives.f2)?,
            is_front.to_string(),
            "EXU".into(),
            num("front_distance", normalized_distance_to_front(&row.objectives, &table))?,
        ]);
    }
    let dqn = DqnSolver {
        config: ctx.file.dqn.clone(),
    };
    for w in grid {
        let mut env = Environment::new(&analysis, w);
        let out = dqn.solve(&mut env, seed)?;
        csv.push(vec![
            out.assignment.bit_string(),
            num("f1", out.objectives.f1)?,
            num("f2", out.objectives.f2)?,
            on_front(&out.objectives).to_string(),
            format!("DQN_{}_{}", w.omega_c, w.omega_s),
            num("front_distance", normalized_distance_to_front(&out.objectives, &table))?,
        ]);
    }
    Ok(vec![csv.write(&ctx.out.join("pareto.csv"))?])
}

fn heatmap(ctx: &mut Context_<'_>, grid: Option<usize>) -> Result<Vec<PathBuf>> {
    let grid = grid.unwrap_or(ctx.file.heatmap.grid);
    let assignment = assignment_or_avg(ctx.file.heatmap.assignment.as_deref(), ctx.system.num_aps)?;
    ctx.args.insert("grid".into(), (grid as i64).into());
    ctx.args.insert("assignment".into(), assignment.bit_string().into());

    let scenario = build_scenario(&ctx.system)?;
    let map = ler_heatmap(&scenario, &assignment, grid)?;
    let mut header = vec!["y".to_string()];
    for &x in &map.xs {
        header.push(num("x", x)?);
    }
    let mut t = Table::new(header);
    for (y, row) in map.ys.iter().zip(&map.values) {
        let mut r = vec![num("y", *y)?];
        for &v in row {
            r.push(num("ler", v)?);
        }
        t.push(r);
    }
    Ok(vec![t.write(&ctx.out.join("heatmap.csv"))?])
}

fn cdf(ctx: &mut Context_<'_>, scenarios: Option<usize>, weights: Option<(f64, f64)>) -> Result<Vec<PathBuf>> {
    let n = scenarios.unwrap_or(ctx.file.cdf.scenarios);
    let weights = weights_from(weights, (ctx.file.cdf.omega_c, ctx.file.cdf.omega_s))?;
    ctx.args.insert("scenarios".into(), (n as i64).into());
    ctx.args.insert("omega_c".into(), weights.omega_c.into());
    ctx.args.insert("omega_s".into(), weights.omega_s.into());

    let registry = SolverRegistry::with_defaults(&settings(&ctx.file));
    let outcomes = cdf_experiment(&ctx.system, n, weights, &registry, &SOLVER_NAMES, ctx.system.rng_seed)?;

    let mut raw = Table::new(["scenario", "scenario_seed", "solver", "f1", "f2", "reward"]);
    for o in &outcomes {
        raw.push(vec![
            o.scenario.to_string(),
            o.scenario_seed.to_string(),
            o.solver.clone(),
            num("f1", o.objectives.f1)?,
            num("f2", o.objectives.f2)?,
            num("reward", o.reward)?,
        ]);
    }
    let mut curves = Table::new(["solver", "objective", "cdf"]);
    for name in SOLVER_NAMES {
        let values: Vec<f64> = outcomes.iter().filter(|o| o.solver == name).map(|o| o.reward).collect();
        for p in empirical_cdf(&values) {
            curves.push(vec![name.to_string(), num("objective", p.value)?, num("cdf", p.cdf)?]);
        }
    }
    Ok(vec![
        curves.write(&ctx.out.join("cdf.csv"))?,
        raw.write(&ctx.out.join("outcomes.csv"))?,
    ])
}
