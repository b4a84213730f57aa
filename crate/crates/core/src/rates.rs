//! Closed-form downlink and uplink SINR and rates under MRT/MRC with
//! imperfect CSI, cross-link interference and sensing interference.
//!
//! The desired-signal power uses a Gamma moment match of `‖ĥ‖²` per AP:
//! `E|Σ_m ĥᴴĥ|² ≈ Σ_m k θ² + (Σ_m k θ)²`.

use crate::analysis::ScenarioAnalysis;
use crate::error::{Error, Result};
use crate::scenario::{DuplexAssignment, LinkDirection, SystemConfig};

/// Shape `k` and scale `θ` of a moment-matched Gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMoments {
    pub shape: f64,
    pub scale: f64,
}

impl GammaMoments {
    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }

    /// Moment match from `Σ dᵢ` and `Σ dᵢ²`.
    pub fn from_sums(sum: f64, sum_sq: f64) -> Result<Self> {
        if !(sum > 0.0) || !(sum_sq > 0.0) {
            return Err(Error::Degenerate("gamma moment match needs a nonzero diagonal".into()));
        }
        Ok(Self {
            shape: sum * sum / sum_sq,
            scale: sum_sq / sum,
        })
    }
}

/// Moment match of `Σ dᵢ |xᵢ|²` with independent unit exponentials `|xᵢ|²`.
pub fn gamma_moments(diag: &[f64]) -> Result<GammaMoments> {
    if let Some(d) = diag.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(Error::Domain(format!("diagonal entries must be nonnegative, got {d}")));
    }
    let sum: f64 = diag.iter().sum();
    let sum_sq: f64 = diag.iter().map(|d| d * d).sum();
    GammaMoments::from_sums(sum, sum_sq)
}

/// Precoder/combiner normalization per UE, indexed by UE id. `None` means the
/// UE has no AP in its direction and is unserved.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationCoefficients {
    pub eps: Vec<Option<f64>>,
}

impl NormalizationCoefficients {
    pub fn get(&self, k: usize) -> Option<f64> {
        self.eps[k]
    }
}

/// `ε_k = (Σ_m tr R̂_mk)^{-1/2}` over the APs serving the direction of UE `k`.
pub fn normalization(analysis: &ScenarioAnalysis, assignment: &DuplexAssignment) -> NormalizationCoefficients {
    let sc = &analysis.scenario;
    let eps = sc
        .ues
        .iter()
        .map(|ue| {
            let aps = match ue.direction {
                LinkDirection::Downlink => assignment.dl_aps(),
                LinkDirection::Uplink => assignment.ul_aps(),
            };
            let total: f64 = aps.iter().map(|&m| analysis.tr_r_hat[m][ue.id]).sum();
            (total > 0.0).then(|| total.powf(-0.5))
        })
        .collect();
    NormalizationCoefficients { eps }
}

/// Expected powers of the SINR terms for one UE. In the uplink, `sense` and
/// `cli` hold the residual DL-to-UL sensing and communication CLI.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SinrTerms {
    pub desired: f64,
    pub inter: f64,
    pub error: f64,
    pub sense: f64,
    pub cli: f64,
    pub noise: f64,
}

impl SinrTerms {
    pub fn denominator(&self) -> f64 {
        self.inter + self.error + self.sense + self.cli + self.noise
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeRate {
    pub ue_id: usize,
    pub direction: LinkDirection,
    pub epsilon: Option<f64>,
    pub terms: SinrTerms,
    /// `E[γ]` as used inside the logarithm.
    pub sinr: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub per_ue: Vec<UeRate>,
    pub sum_rate: f64,
}

/// `(1 − (τ_dp + τ_up)/τ) log₂(1 + E[γ])`
pub fn rate_from_sinr(sinr: f64, config: &SystemConfig) -> f64 {
    config.data_fraction() * sinr.ln_1p() / std::f64::consts::LN_2
}

fn desired_power(analysis: &ScenarioAnalysis, aps: &[usize], k: usize, power: f64, eps: f64) -> Result<f64> {
    let mut var = 0.0;
    let mut mean = 0.0;
    for &m in aps {
        let g = GammaMoments::from_sums(analysis.tr_r_hat[m][k], analysis.diag_sq_r_hat[m][k])?;
        var += g.variance();
        mean += g.mean();
    }
    Ok(power * eps * eps * (var + mean * mean))
}

fn served(direction: LinkDirection, l: usize, analysis: &ScenarioAnalysis) -> Result<()> {
    match analysis.scenario.ues.get(l) {
        Some(ue) if ue.direction == direction => Ok(()),
        Some(_) => Err(Error::InvalidArgument(format!(
            "UE {l} is not a {} UE",
            direction.as_str()
        ))),
        None => Err(Error::InvalidArgument(format!("no UE with id {l}"))),
    }
}

fn finish(analysis: &ScenarioAnalysis, l: usize, direction: LinkDirection, eps: Option<f64>, terms: SinrTerms) -> UeRate {
    let sinr = if terms.desired > 0.0 { terms.desired / terms.denominator() } else { 0.0 };
    UeRate {
        ue_id: l,
        direction,
        epsilon: eps,
        terms,
        sinr,
        rate: rate_from_sinr(sinr, &analysis.scenario.config),
    }
}

/// Downlink `E[γ]` of UE `l` and its term breakdown.
pub fn dl_sinr(
    analysis: &ScenarioAnalysis,
    assignment: &DuplexAssignment,
    ncoef: &NormalizationCoefficients,
    l: usize,
) -> Result<UeRate> {
    served(LinkDirection::Downlink, l, analysis)?;
    let sc = &analysis.scenario;
    let traces = analysis.rate_traces()?;
    let Some(eps_l) = ncoef.get(l) else {
        return Ok(finish(analysis, l, LinkDirection::Downlink, None, SinrTerms::default()));
    };
    let dl_aps = assignment.dl_aps();
    let dl_ues: Vec<usize> = sc.dl_ues().collect();
    let power = &sc.ue_power;

    let desired = desired_power(analysis, &dl_aps, l, power[l], eps_l)?;
    let mut inter = 0.0;
    let mut error = 0.0;
    for &k in &dl_ues {
        let eps_k = ncoef.get(k).unwrap_or(0.0);
        let weight = power[k] * eps_k * eps_k;
        for &m in &dl_aps {
            if k != l {
                inter += weight * traces.r_r[m][l][k];
            }
            error += weight * traces.r_theta[m][k][l];
        }
    }
    let mut sense = 0.0;
    for (t, &p_s) in sc.target_power.iter().enumerate() {
        for &m in &dl_aps {
            sense += p_s / sc.num_antennas() as f64 * traces.psi_theta[m][t][l];
        }
    }
    let cli = sc
        .ul_ues()
        .map(|u| power[u] * analysis.channels.phi_ue_ue[u][l])
        .sum();
    let terms = SinrTerms {
        desired,
        inter,
        error,
        sense,
        cli,
        noise: sc.config.noise_dl,
    };
    Ok(finish(analysis, l, LinkDirection::Downlink, Some(eps_l), terms))
}

/// Uplink `E[γ]` of UE `u` and its term breakdown.
pub fn ul_sinr(
    analysis: &ScenarioAnalysis,
    assignment: &DuplexAssignment,
    ncoef: &NormalizationCoefficients,
    u: usize,
) -> Result<UeRate> {
    served(LinkDirection::Uplink, u, analysis)?;
    let sc = &analysis.scenario;
    let traces = analysis.rate_traces()?;
    let Some(eps_u) = ncoef.get(u) else {
        return Ok(finish(analysis, u, LinkDirection::Uplink, None, SinrTerms::default()));
    };
    let ul_aps = assignment.ul_aps();
    let dl_aps = assignment.dl_aps();
    let power = &sc.ue_power;
    let e2 = eps_u * eps_u;

    let desired = desired_power(analysis, &ul_aps, u, power[u], eps_u)?;
    let mut inter = 0.0;
    let mut error = 0.0;
    for k in sc.ul_ues() {
        for &n in &ul_aps {
            if k != u {
                inter += power[k] * e2 * traces.r_r[n][u][k];
            }
            error += power[k] * e2 * traces.r_theta[n][u][k];
        }
    }
    let mut cli = 0.0;
    for j in sc.dl_ues() {
        let eps_j = ncoef.get(j).unwrap_or(0.0);
        let rho = power[j] * e2 * eps_j * eps_j;
        for &m in &dl_aps {
            for &n in &ul_aps {
                cli += rho * traces.cli_comm[m][n][u][j];
            }
        }
    }
    let mut sense = 0.0;
    let n_ant = sc.num_antennas() as f64;
    for (t, &p_s) in sc.target_power.iter().enumerate() {
        for &m in &dl_aps {
            for &n in &ul_aps {
                sense += p_s * e2 / n_ant * traces.cli_sense[m][n][u][t];
            }
        }
    }
    let noise = sc.config.noise_ul * e2 * ul_aps.iter().map(|&n| analysis.tr_r_hat[n][u]).sum::<f64>();
    let terms = SinrTerms {
        desired,
        inter,
        error,
        sense,
        cli,
        noise,
    };
    Ok(finish(analysis, u, LinkDirection::Uplink, Some(eps_u), terms))
}

/// Per-UE rates for every UE and their sum `f1`.
pub fn rate_report(analysis: &ScenarioAnalysis, assignment: &DuplexAssignment) -> Result<RateReport> {
    if assignment.num_aps() != analysis.scenario.num_aps() {
        return Err(Error::InvalidArgument(format!(
            "assignment covers {} APs, scenario has {}",
            assignment.num_aps(),
            analysis.scenario.num_aps()
        )));
    }
    let ncoef = normalization(analysis, assignment);
    let per_ue = analysis
        .scenario
        .ues
        .iter()
        .map(|ue| match ue.direction {
            LinkDirection::Downlink => dl_sinr(analysis, assignment, &ncoef, ue.id),
            LinkDirection::Uplink => ul_sinr(analysis, assignment, &ncoef, ue.id),
        })
        .collect::<Result<Vec<_>>>()?;
    let sum_rate = per_ue.iter().map(|r| r.rate).sum();
    Ok(RateReport { per_ue, sum_rate })
}

/// `f1 = Σ_l R^dl_l + Σ_u R^ul_u`.
pub fn sum_rate(analysis: &ScenarioAnalysis, assignment: &DuplexAssignment) -> Result<f64> {
    Ok(rate_report(analysis, assignment)?.sum_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::build_scenario;

    #[test]
    fn equal_diagonal_moments() {
        let g = gamma_moments(&[0.3; 6]).unwrap();
        assert!((g.shape - 6.0).abs() < 1e-12);
        assert!((g.scale - 0.3).abs() < 1e-12);
    }

    #[test]
    fn two_entry_hand_value() {
        let g = gamma_moments(&[1.0, 2.0]).unwrap();
        assert!((g.shape - 1.8).abs() < 1e-15);
        assert!((g.scale - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_diagonal_is_degenerate() {
        assert!(matches!(gamma_moments(&[0.0, 0.0]), Err(Error::Degenerate(_))));
        assert!(matches!(gamma_moments(&[-1.0, 2.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn rate_hand_values() {
        let cfg = SystemConfig::default();
        assert_eq!(rate_from_sinr(0.0, &cfg), 0.0);
        assert!((rate_from_sinr(1.0, &cfg) - 0.8).abs() < 1e-15);
    }

    fn small() -> ScenarioAnalysis {
        let cfg = SystemConfig {
            num_aps: 4,
            antennas_per_ap: 6,
            num_dl_ues: 2,
            num_ul_ues: 2,
            rng_seed: 21,
            ..SystemConfig::default()
        };
        ScenarioAnalysis::new(build_scenario(&cfg).unwrap()).unwrap()
    }

    #[test]
    fn degenerate_assignments_zero_one_direction() {
        let a = small();
        let all_ul = rate_report(&a, &DuplexAssignment::all_uplink(4)).unwrap();
        for r in &all_ul.per_ue {
            if r.direction == LinkDirection::Downlink {
                assert_eq!(r.sinr, 0.0);
                assert_eq!(r.rate, 0.0);
            } else {
                assert!(r.sinr > 0.0);
            }
        }
        let all_dl = rate_report(&a, &DuplexAssignment::all_downlink(4)).unwrap();
        for r in all_dl.per_ue.iter().filter(|r| r.direction == LinkDirection::Uplink) {
            assert_eq!(r.sinr, 0.0);
        }
    }

    #[test]
    fn single_ap_normalization() {
        let a = small();
        let asg = DuplexAssignment::from_bits(0b0001, 4);
        let nc = normalization(&a, &asg);
        let l = a.scenario.dl_ues().next().unwrap();
        let expected = a.tr_r_hat[0][l].powf(-0.5);
        assert!((nc.get(l).unwrap() / expected - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sum_equals_per_ue_total() {
        let a = small();
        let asg = DuplexAssignment::from_bits(0b0101, 4);
        let rep = rate_report(&a, &asg).unwrap();
        let total: f64 = rep.per_ue.iter().map(|r| r.rate).sum();
        assert_eq!(rep.sum_rate, total);
    }
}
