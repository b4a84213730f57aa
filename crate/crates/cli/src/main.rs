//! `nafd`: command-line front end for scenario validation, duplex-mode
//! optimization and the sensing heatmap.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "nafd", version, about = "NAFD cell-free ISAC analysis and AP duplex-mode optimization")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `[system].seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Closed-form vs Monte Carlo SINR over an antenna-count sweep.
    Validate {
        /// Monte Carlo trials per antenna count.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run one duplex-mode solver.
    Optimize {
        /// One of random, avg, exu, qlearn, dqn.
        #[arg(long)]
        solver: Option<String>,
        /// Reward weights `ωc,ωs`.
        #[arg(long, value_parser = parse_weights)]
        weights: Option<(f64, f64)>,
    },
    /// Exhaustive table, its Pareto front and DQN solutions over a weight grid.
    Pareto {
        /// Weight pair `ωc,ωs`; repeat to build the grid.
        #[arg(long, value_parser = parse_weights)]
        weights: Vec<(f64, f64)>,
    },
    /// Localization error rate of a probe target over a grid.
    Heatmap {
        /// Cells per axis.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Objective CDFs of all solvers over random scenarios.
    Cdf {
        /// Number of scenario draws.
        #[arg(long)]
        scenarios: Option<usize>,
        /// Reward weights `ωc,ωs`.
        #[arg(long, value_parser = parse_weights)]
        weights: Option<(f64, f64)>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Optimize { .. } => "optimize",
            Command::Pareto { .. } => "pareto",
            Command::Heatmap { .. } => "heatmap",
            Command::Cdf { .. } => "cdf",
        }
    }
}

fn parse_weights(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `ωc,ωs`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    use nafd_core::Error;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config { .. } => EXIT_CONFIG,
                Error::Domain(_) | Error::Degenerate(_) | Error::SingularGeometry(_) | Error::Divergence(_) => {
                    EXIT_NUMERICAL
                }
                Error::Size(_) | Error::UnknownSolver(_) | Error::InvalidArgument(_) => EXIT_USAGE,
            };
        }
        if cause.downcast_ref::<output::NonFiniteValue>().is_some() {
            return EXIT_NUMERICAL;
        }
        if cause.downcast_ref::<commands::ConfigFileError>().is_some() {
            return EXIT_CONFIG;
        }
    }
    EXIT_USAGE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nafd_core::Error;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        let code = |e: Error| exit_code(&anyhow::Error::new(e).context("running command"));
        assert_eq!(code(Error::Config { field: "seed".into(), reason: "missing".into() }), EXIT_CONFIG);
        assert_eq!(code(Error::UnknownSolver("x".into())), EXIT_USAGE);
        assert_eq!(code(Error::Size("x".into())), EXIT_USAGE);
        assert_eq!(code(Error::Divergence("x".into())), EXIT_NUMERICAL);
        assert_eq!(code(Error::SingularGeometry("x".into())), EXIT_NUMERICAL);
        assert_eq!(exit_code(&anyhow::Error::new(output::NonFiniteValue("f1".into()))), EXIT_NUMERICAL);
        assert_eq!(exit_code(&anyhow::anyhow!("missing flag")), EXIT_USAGE);
    }

    #[test]
    fn weights_parse_as_pairs() {
        assert_eq!(parse_weights("0.25, 0.75"), Ok((0.25, 0.75)));
        assert!(parse_weights("0.5").is_err());
        assert!(parse_weights("a,1").is_err());
    }
}
