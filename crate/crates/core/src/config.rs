//! Configuration file schema.
//!
//! One TOML file drives every command. Only `[system].seed` is required;
//! every other key falls back to the defaults of [`SystemConfig`] and the
//! solver configurations. Noise powers are given in dBW.

use serde::{Deserialize, Serialize};

use crate::admo::{DqnConfig, QLearningConfig, RewardWeights};
use crate::error::{Error, Result};
use crate::admo::avg_assignment;
use crate::scenario::{dbw_to_watts, ApPlacement, DuplexAssignment, SystemConfig, TargetPowerFactor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub seed: u64,
    pub num_aps: Option<usize>,
    pub antennas_per_ap: Option<usize>,
    pub num_dl_ues: Option<usize>,
    pub num_ul_ues: Option<usize>,
    pub num_targets: Option<usize>,
    pub area_side: Option<f64>,
    pub ap_placement: Option<ApPlacement>,
    pub circle_radius: Option<f64>,
    pub min_separation: Option<f64>,
    pub path_loss_exponent: Option<f64>,
    pub p_ul: Option<f64>,
    pub p_dl: Option<f64>,
    pub p_s: Option<f64>,
    pub pilot_power: Option<f64>,
    pub tau: Option<usize>,
    pub tau_up: Option<usize>,
    pub tau_dp: Option<usize>,
    pub bandwidth: Option<f64>,
    pub wavelength: Option<f64>,
    pub noise_dl_dbw: Option<f64>,
    pub noise_ul_dbw: Option<f64>,
    pub noise_s_dbw: Option<f64>,
    pub sigma_loc_sq: Option<f64>,
    pub reflection_coefficient: Option<f64>,
    pub gain_uncertainty_ap: Option<f64>,
    pub gain_uncertainty_ue: Option<f64>,
    pub steering_perturbation: Option<f64>,
    pub target_power_factor: Option<TargetPowerFactor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub n_sweep: Vec<usize>,
    pub trials: usize,
    /// Assignment as a bit string, AP 0 first, `1` = downlink. Defaults to
    /// the half-and-half split.
    pub assignment: Option<String>,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            n_sweep: vec![8, 12, 16, 20, 24],
            trials: 100_000,
            assignment: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightPair {
    pub omega_c: f64,
    pub omega_s: f64,
}

impl WeightPair {
    pub fn to_weights(self) -> Result<RewardWeights> {
        RewardWeights::new(self.omega_c, self.omega_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeSection {
    pub solver: String,
    pub omega_c: f64,
    pub omega_s: f64,
    /// Draws taken by the random baseline.
    pub random_draws: usize,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self {
            solver: "dqn".into(),
            omega_c: 0.5,
            omega_s: 0.5,
            random_draws: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdfSection {
    pub scenarios: usize,
    pub omega_c: f64,
    pub omega_s: f64,
}

impl Default for CdfSection {
    fn default() -> Self {
        Self {
            scenarios: 50,
            omega_c: 0.5,
            omega_s: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParetoSection {
    pub weights: Vec<WeightPair>,
}

impl Default for ParetoSection {
    fn default() -> Self {
        Self {
            weights: [(1.0, 0.0), (0.75, 0.25), (0.5, 0.5), (0.25, 0.75), (0.0, 1.0)]
                .into_iter()
                .map(|(omega_c, omega_s)| WeightPair { omega_c, omega_s })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatmapSection {
    pub grid: usize,
    /// Assignment as a bit string, AP 0 first, `1` = downlink. Defaults to
    /// the half-and-half split.
    pub assignment: Option<String>,
}

impl Default for HeatmapSection {
    fn default() -> Self {
        Self {
            grid: 50,
            assignment: None,
        }
    }
}

/// Parse an optional bit-string assignment, defaulting to the half-and-half split.
pub fn assignment_or_avg(bits: Option<&str>, num_aps: usize) -> Result<DuplexAssignment> {
    match bits {
        None => Ok(avg_assignment(num_aps)),
        Some(b) => {
            let a = DuplexAssignment::parse_bit_string(b)?;
            if a.num_aps() != num_aps {
                return Err(Error::InvalidArgument(format!(
                    "assignment `{b}` has {} bits, expected {num_aps}",
                    a.num_aps()
                )));
            }
            Ok(a)
        }
    }
}

/// Parsed configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemSection,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub dqn: DqnConfig,
    #[serde(default)]
    pub qlearning: QLearningConfig,
    #[serde(default)]
    pub cdf: CdfSection,
    #[serde(default)]
    pub pareto: ParetoSection,
    #[serde(default)]
    pub heatmap: HeatmapSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Name inside the first pair of backticks of a deserializer message.
fn quoted_field(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| {
            let message = e.message().trim().to_string();
            let field = quoted_field(&message).unwrap_or_else(|| "<file>".into());
            let reason = match e.span() {
                Some(span) => format!("{message} (line {})", line_of(text, span.start)),
                None => message,
            };
            Error::Config { field, reason }
        })?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<()> {
        self.system_config()?.validate()?;
        self.dqn.validate()?;
        self.qlearning.validate()?;
        if self.validate.n_sweep.is_empty() || self.validate.n_sweep.contains(&0) {
            return Err(Error::config("validate.n_sweep", "must list positive antenna counts"));
        }
        if self.validate.trials < crate::montecarlo::MIN_TRIALS {
            return Err(Error::config(
                "validate.trials",
                format!("must be at least {}", crate::montecarlo::MIN_TRIALS),
            ));
        }
        let m = self.system.num_aps.unwrap_or(SystemConfig::default().num_aps);
        for (field, bits) in [
            ("validate.assignment", &self.validate.assignment),
            ("heatmap.assignment", &self.heatmap.assignment),
        ] {
            if let Some(bits) = bits {
                let a = DuplexAssignment::parse_bit_string(bits).map_err(|e| Error::config(field, e.to_string()))?;
                if a.num_aps() != m {
                    return Err(Error::config(field, format!("must have {m} bits")));
                }
            }
        }
        WeightPair {
            omega_c: self.optimize.omega_c,
            omega_s: self.optimize.omega_s,
        }
        .to_weights()
        .map_err(|e| Error::config("optimize.omega_c", e.to_string()))?;
        if self.cdf.scenarios == 0 {
            return Err(Error::config("cdf.scenarios", "must be at least 1"));
        }
        if self.pareto.weights.is_empty() {
            return Err(Error::config("pareto.weights", "must not be empty"));
        }
        for w in &self.pareto.weights {
            w.to_weights().map_err(|e| Error::config("pareto.weights", e.to_string()))?;
        }
        if self.heatmap.grid < 2 {
            return Err(Error::config("heatmap.grid", "must be at least 2"));
        }
        Ok(())
    }

    /// System parameters with defaults filled in.
    pub fn system_config(&self) -> Result<SystemConfig> {
        let s = &self.system;
        let d = SystemConfig::default();
        let cfg = SystemConfig {
            num_aps: s.num_aps.unwrap_or(d.num_aps),
            antennas_per_ap: s.antennas_per_ap.unwrap_or(d.antennas_per_ap),
            num_dl_ues: s.num_dl_ues.unwrap_or(d.num_dl_ues),
            num_ul_ues: s.num_ul_ues.unwrap_or(d.num_ul_ues),
            num_targets: s.num_targets.unwrap_or(d.num_targets),
            area_side: s.area_side.unwrap_or(d.area_side),
            ap_placement: s.ap_placement.unwrap_or(d.ap_placement),
            circle_radius: s.circle_radius.unwrap_or(d.circle_radius),
            min_separation: s.min_separation.unwrap_or(d.min_separation),
            path_loss_exponent: s.path_loss_exponent.unwrap_or(d.path_loss_exponent),
            p_ul: s.p_ul.unwrap_or(d.p_ul),
            p_dl: s.p_dl.unwrap_or(d.p_dl),
            p_s: s.p_s.unwrap_or(d.p_s),
            pilot_power: s.pilot_power.unwrap_or(d.pilot_power),
            tau: s.tau.unwrap_or(d.tau),
            tau_up: s.tau_up.unwrap_or(d.tau_up),
            tau_dp: s.tau_dp.unwrap_or(d.tau_dp),
            bandwidth: s.bandwidth.unwrap_or(d.bandwidth),
            wavelength: s.wavelength.unwrap_or(d.wavelength),
            noise_dl: s.noise_dl_dbw.map_or(d.noise_dl, dbw_to_watts),
            noise_ul: s.noise_ul_dbw.map_or(d.noise_ul, dbw_to_watts),
            noise_s: s.noise_s_dbw.map_or(d.noise_s, dbw_to_watts),
            sigma_loc_sq: s.sigma_loc_sq.unwrap_or(d.sigma_loc_sq),
            reflection_coefficient: s.reflection_coefficient.unwrap_or(d.reflection_coefficient),
            gain_uncertainty_ap: s.gain_uncertainty_ap.unwrap_or(d.gain_uncertainty_ap),
            gain_uncertainty_ue: s.gain_uncertainty_ue.unwrap_or(d.gain_uncertainty_ue),
            steering_perturbation: s.steering_perturbation.unwrap_or(d.steering_perturbation),
            target_power_factor: s.target_power_factor.unwrap_or(d.target_power_factor),
            rng_seed: s.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replace the seed, e.g. from a command-line override.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.system.seed = seed;
        self
    }
}
