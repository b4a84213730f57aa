//! Per-scenario precomputation shared by the rate and sensing closed forms.
//!
//! Every closed-form term is a sum of traces over (AP, UE, target) index
//! tuples restricted by the duplex assignment. The traces themselves do not
//! depend on the assignment, so they are computed once per scenario and each
//! assignment evaluation reduces to table lookups.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{real_diagonal, real_trace, trace_product, CMat};
use crate::scenario::{LinkDirection, Scenario};
use crate::sensing::SensingGeometry;
use crate::statistics::{ChannelSecondOrder, EstimationSecondOrder};

/// Traces needed by the communication-rate closed forms.
#[derive(Debug, Clone)]
pub struct RateTraces {
    /// `Re tr(R̂_mk R̂_mk')`, indexed `[m][k][k']`.
    pub r_r: Vec<Vec<Vec<f64>>>,
    /// `Re tr(R̂_mk Θ_mk')`, indexed `[m][k][k']`.
    pub r_theta: Vec<Vec<Vec<f64>>>,
    /// `Re tr(ψ_mt Θ_mk)`, indexed `[m][t][k]`.
    pub psi_theta: Vec<Vec<Vec<f64>>>,
    /// `Re tr(Θ^A_mn R̂_nu R̂_mj)`, indexed `[m][n][u][j]`; filled for UL `u`
    /// and DL `j`, zero elsewhere.
    pub cli_comm: Vec<Vec<Vec<Vec<f64>>>>,
    /// `Re tr(Θ^A_mn R̂_nu ψ_mt)`, indexed `[m][n][u][t]`; filled for UL `u`.
    pub cli_sense: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Assignment-independent quantities of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioAnalysis {
    pub scenario: Scenario,
    pub channels: ChannelSecondOrder,
    pub estimates: EstimationSecondOrder,
    /// `tr(R̂_mk)`, indexed `[m][k]`.
    pub tr_r_hat: Vec<Vec<f64>>,
    /// `Σ_i [R̂_mk]_ii²`, indexed `[m][k]`.
    pub diag_sq_r_hat: Vec<Vec<f64>>,
    /// `Re tr(Θ^A_mn R̂_mj)`, indexed `[m][n][j]`.
    pub theta_ap_r: Vec<Vec<Vec<f64>>>,
    pub geometry: SensingGeometry,
    rate: Option<RateTraces>,
}

impl ScenarioAnalysis {
    /// Full precomputation for both rate and sensing evaluation.
    pub fn new(scenario: Scenario) -> Result<Self> {
        let mut analysis = Self::sensing_only(scenario)?;
        analysis.rate = Some(analysis.build_rate_traces());
        Ok(analysis)
    }

    /// Precomputation sufficient for the sensing closed forms only.
    pub fn sensing_only(scenario: Scenario) -> Result<Self> {
        let channels = ChannelSecondOrder::build(&scenario)?;
        let estimates = EstimationSecondOrder::build(&scenario, &channels)?;
        let tr_r_hat = estimates
            .ue
            .iter()
            .map(|row| row.iter().map(|s| real_trace(&s.r_hat)).collect())
            .collect();
        let diag_sq_r_hat = estimates
            .ue
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| real_diagonal(&s.r_hat).iter().map(|d| d * d).sum())
                    .collect()
            })
            .collect();
        let m_count = scenario.num_aps();
        let k_count = scenario.ues.len();
        let theta_ap_r = (0..m_count)
            .into_par_iter()
            .map(|m| {
                (0..m_count)
                    .map(|n| {
                        (0..k_count)
                            .map(|j| {
                                if m == n {
                                    0.0
                                } else {
                                    trace_product(&estimates.ap[m][n].theta, &estimates.ue[m][j].r_hat).re
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let geometry = SensingGeometry::build(&scenario)?;
        Ok(Self {
            scenario,
            channels,
            estimates,
            tr_r_hat,
            diag_sq_r_hat,
            theta_ap_r,
            geometry,
            rate: None,
        })
    }

    pub fn rate_traces(&self) -> Result<&RateTraces> {
        self.rate
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("analysis was built without rate traces".into()))
    }

    fn r_hat(&self, m: usize, k: usize) -> &CMat {
        &self.estimates.ue[m][k].r_hat
    }

    fn theta(&self, m: usize, k: usize) -> &CMat {
        &self.estimates.ue[m][k].theta
    }

    fn build_rate_traces(&self) -> RateTraces {
        let sc = &self.scenario;
        let m_count = sc.num_aps();
        let k_count = sc.ues.len();
        let t_count = sc.targets.len();
        let is_ul: Vec<bool> = sc.ues.iter().map(|u| u.direction == LinkDirection::Uplink).collect();

        let pairwise = |f: &(dyn Fn(&CMat, &CMat) -> f64 + Sync), second: bool| -> Vec<Vec<Vec<f64>>> {
            (0..m_count)
                .into_par_iter()
                .map(|m| {
                    (0..k_count)
                        .map(|k| {
                            (0..k_count)
                                .map(|kk| {
                                    let rhs = if second { self.theta(m, kk) } else { self.r_hat(m, kk) };
                                    f(self.r_hat(m, k), rhs)
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        let tr = |a: &CMat, b: &CMat| trace_product(a, b).re;
        let r_r = pairwise(&tr, false);
        let r_theta = pairwise(&tr, true);

        let psi_theta = (0..m_count)
            .into_par_iter()
            .map(|m| {
                (0..t_count)
                    .map(|t| {
                        (0..k_count)
                            .map(|k| trace_product(&self.channels.psi[m][t], self.theta(m, k)).re)
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let (cli_comm, cli_sense): (Vec<_>, Vec<_>) = (0..m_count)
            .into_par_iter()
            .map(|m| {
                let mut comm = vec![vec![vec![0.0; k_count]; k_count]; m_count];
                let mut sense = vec![vec![vec![0.0; t_count]; k_count]; m_count];
                for n in 0..m_count {
                    if n == m {
                        continue;
                    }
                    let theta_a = &self.estimates.ap[m][n].theta;
                    for u in (0..k_count).filter(|&u| is_ul[u]) {
                        let prod = theta_a * self.r_hat(n, u);
                        for j in (0..k_count).filter(|&j| !is_ul[j]) {
                            comm[n][u][j] = trace_product(&prod, self.r_hat(m, j)).re;
                        }
                        for t in 0..t_count {
                            sense[n][u][t] = trace_product(&prod, &self.channels.psi[m][t]).re;
                        }
                    }
                }
                (comm, sense)
            })
            .unzip();

        RateTraces {
            r_r,
            r_theta,
            psi_theta,
            cli_comm,
            cli_sense,
        }
    }
}
