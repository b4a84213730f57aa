//! Second-order channel statistics and MMSE estimation statistics.
//!
//! Target-reflected links carry a perturbed amplitude and a perturbed steering
//! vector. With mean amplitude `d̄^{-α}`, relative gain variance `ρ` and
//! steering variance `χ²`, the link power is `γ = d̄^{-2α}(1 + ρ)` and the link
//! autocorrelation is `ζ = γ (q̄ q̄ᴴ + χ² I)`.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, identity, is_hermitian_psd, outer, CMat, CVec};
use crate::scenario::{angles, path_gain, steering_vector, Scenario};

/// Tolerance used when checking that a covariance input is Hermitian PSD.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Mean power gain `d̄^{-2α}`.
pub fn mean_power_gain(distance: f64, alpha: f64) -> Result<f64> {
    Ok(path_gain(distance, alpha)?.powi(2))
}

/// `γ = d̄^{-2α} + σ²` with `σ² = ρ d̄^{-2α}`.
pub fn gamma_scalar(distance: f64, alpha: f64, relative_uncertainty: f64) -> Result<f64> {
    Ok(mean_power_gain(distance, alpha)? * (1.0 + relative_uncertainty))
}

/// `q̄ q̄ᴴ + χ² I`, the second moment of a perturbed steering vector.
pub fn psi_matrix(steering: &CVec, chi_sq: f64) -> CMat {
    outer(steering) + identity(steering.len()).scale(chi_sq)
}

/// Principal square root of `q̄ q̄ᴴ + χ² I` for a unit-modulus `q̄`.
pub fn psi_sqrt(steering: &CVec, chi_sq: f64) -> CMat {
    let n = steering.len() as f64;
    let chi = chi_sq.sqrt();
    let along = ((n + chi_sq).sqrt() - chi) / n;
    outer(steering).scale(along) + identity(steering.len()).scale(chi)
}

/// `ζ = γ (q̄ q̄ᴴ + χ² I)`.
pub fn zeta(steering: &CVec, gamma: f64, chi_sq: f64) -> CMat {
    psi_matrix(steering, chi_sq).scale(gamma)
}

#[derive(Debug, Clone)]
pub struct ChannelSecondOrder {
    /// `φ_mk`, AP `m` to UE `k`.
    pub phi_ue_ap: Vec<Vec<CMat>>,
    /// `φ^A_mn`, AP `m` to AP `n`; the diagonal `m = n` is the zero matrix.
    pub phi_ap_ap: Vec<Vec<CMat>>,
    /// `φ^u_ul`, UE `u` to UE `l`; zero on the diagonal.
    pub phi_ue_ue: Vec<Vec<f64>>,
    /// `ψ_mt` for the AP `m` → target `t` steering.
    pub psi: Vec<Vec<CMat>>,
    /// `q̄_{Am,Tt}` at DOA `θ_mt`, indexed `[m][t]`.
    pub steering_doa: Vec<Vec<CVec>>,
    /// `q̄_{Tt,An}` at DOD `φ_tn`, indexed `[t][n]`.
    pub steering_dod: Vec<Vec<CVec>>,
    /// `γ_{Am,Tt}`, indexed `[m][t]`.
    pub gamma_ap_target: Vec<Vec<f64>>,
    /// `γ_{Tt,Uk}`, indexed `[t][k]`.
    pub gamma_target_ue: Vec<Vec<f64>>,
    /// `α_t²` per target.
    pub reflection_power: Vec<f64>,
}

impl ChannelSecondOrder {
    pub fn build(scenario: &Scenario) -> Result<Self> {
        let cfg = &scenario.config;
        let alpha = cfg.path_loss_exponent;
        let n_ant = scenario.num_antennas();
        let m_count = scenario.num_aps();
        let table = angles(scenario)?;

        let steering_doa: Vec<Vec<CVec>> = scenario
            .aps
            .iter()
            .map(|ap| {
                scenario
                    .targets
                    .iter()
                    .map(|tg| steering_vector(&ap.array, table.doa[ap.id][tg.id]))
                    .collect()
            })
            .collect();
        let steering_dod: Vec<Vec<CVec>> = scenario
            .targets
            .iter()
            .map(|tg| {
                scenario
                    .aps
                    .iter()
                    .map(|ap| steering_vector(&ap.array, table.dod[tg.id][ap.id]))
                    .collect()
            })
            .collect();

        let mut gamma_ap_target = vec![vec![0.0; scenario.targets.len()]; m_count];
        for ap in &scenario.aps {
            for tg in &scenario.targets {
                let d = ap.center.distance(&tg.position);
                gamma_ap_target[ap.id][tg.id] = gamma_scalar(d, alpha, tg.gain_uncertainty_ap)?;
            }
        }
        let mut gamma_target_ue = vec![vec![0.0; scenario.ues.len()]; scenario.targets.len()];
        for tg in &scenario.targets {
            for ue in &scenario.ues {
                let d = tg.position.distance(&ue.position);
                gamma_target_ue[tg.id][ue.id] = gamma_scalar(d, alpha, tg.gain_uncertainty_ue)?;
            }
        }
        let reflection_power: Vec<f64> = scenario
            .targets
            .iter()
            .map(|t| t.reflection_coefficient.powi(2))
            .collect();
        let chi: Vec<f64> = scenario.targets.iter().map(|t| t.steering_perturbation).collect();

        let psi: Vec<Vec<CMat>> = steering_doa
            .iter()
            .map(|row| row.iter().zip(&chi).map(|(q, &c)| psi_matrix(q, c)).collect())
            .collect();

        let mut phi_ue_ap = Vec::with_capacity(m_count);
        for ap in &scenario.aps {
            let mut row = Vec::with_capacity(scenario.ues.len());
            for ue in &scenario.ues {
                let direct = mean_power_gain(ap.center.distance(&ue.position), alpha)?;
                let mut phi = identity(n_ant).scale(direct);
                for tg in &scenario.targets {
                    let w = reflection_power[tg.id]
                        * gamma_ap_target[ap.id][tg.id]
                        * gamma_target_ue[tg.id][ue.id];
                    phi += psi[ap.id][tg.id].scale(w);
                }
                row.push(phi);
            }
            phi_ue_ap.push(row);
        }

        // ζ_{Am,Tt} ζ_{Tt,An} is not Hermitian on its own; the symmetrized
        // ζ_{Am,Tt}^{1/2} ζ_{Tt,An} ζ_{Am,Tt}^{1/2} has the same trace and is
        // the second moment of the composed matrix channel.
        let psi_roots: Vec<Vec<CMat>> = steering_doa
            .iter()
            .map(|row| row.iter().zip(&chi).map(|(q, &c)| psi_sqrt(q, c)).collect())
            .collect();
        let mut phi_ap_ap = Vec::with_capacity(m_count);
        for a in &scenario.aps {
            let mut row = Vec::with_capacity(m_count);
            for b in &scenario.aps {
                if a.id == b.id {
                    row.push(CMat::zeros(n_ant, n_ant));
                    continue;
                }
                let direct = mean_power_gain(a.center.distance(&b.center), alpha)?;
                let mut phi = identity(n_ant).scale(direct);
                for tg in &scenario.targets {
                    let w = reflection_power[tg.id]
                        * gamma_ap_target[a.id][tg.id]
                        * gamma_ap_target[b.id][tg.id];
                    let inner = psi_matrix(&steering_dod[tg.id][b.id], chi[tg.id]);
                    let root = &psi_roots[a.id][tg.id];
                    phi += (root * inner * root).scale(w);
                }
                row.push(hermitian_part(&phi));
            }
            phi_ap_ap.push(row);
        }

        let mut phi_ue_ue = vec![vec![0.0; scenario.ues.len()]; scenario.ues.len()];
        for u in &scenario.ues {
            for l in &scenario.ues {
                if u.id == l.id {
                    continue;
                }
                let mut phi = mean_power_gain(u.position.distance(&l.position), alpha)?;
                for tg in &scenario.targets {
                    phi += reflection_power[tg.id]
                        * gamma_target_ue[tg.id][u.id]
                        * gamma_target_ue[tg.id][l.id];
                }
                phi_ue_ue[u.id][l.id] = phi;
            }
        }

        Ok(Self {
            phi_ue_ap,
            phi_ap_ap,
            phi_ue_ue,
            psi,
            steering_doa,
            steering_dod,
            gamma_ap_target,
            gamma_target_ue,
            reflection_power,
        })
    }

    /// `ζ_{Am,Tt}`
    pub fn zeta_ap_target(&self, m: usize, t: usize) -> CMat {
        self.psi[m][t].scale(self.gamma_ap_target[m][t])
    }
}

/// Estimated-channel autocorrelation `R̂` and error covariance `Θ = φ − R̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseStatistics {
    pub r_hat: CMat,
    pub theta: CMat,
}

/// MMSE statistics for a channel with autocorrelation `φ` observed through
/// pilots with total energy-to-noise ratio `pilot_snr = p_p τ_p / σ²`:
/// `R̂ = p_p τ_p φ (p_p τ_p φ + I)^{-1} φ`.
pub fn mmse_second_order(phi: &CMat, pilot_snr: f64) -> Result<MmseStatistics> {
    if !(pilot_snr > 0.0) || !pilot_snr.is_finite() {
        return Err(Error::Domain(format!("pilot energy must be positive, got {pilot_snr}")));
    }
    if !phi.is_square() {
        return Err(Error::Domain("autocorrelation must be square".into()));
    }
    if !is_hermitian_psd(phi, PSD_TOLERANCE) {
        return Err(Error::Domain("autocorrelation is not Hermitian PSD".into()));
    }
    let n = phi.nrows();
    let phi = hermitian_part(phi);
    let system = phi.scale(pilot_snr) + identity(n);
    let chol = Cholesky::new(system)
        .ok_or_else(|| Error::Domain("pilot system is not positive definite".into()))?;
    // (pτφ + I)^{-1} φ
    let solved = chol.solve(&phi);
    let r_hat = hermitian_part(&(&phi * solved).scale(pilot_snr));
    let theta = hermitian_part(&(&phi - &r_hat));
    Ok(MmseStatistics { r_hat, theta })
}

#[derive(Debug, Clone)]
pub struct EstimationSecondOrder {
    /// `R̂_mk`, `Θ_mk` for AP `m`, UE `k`.
    pub ue: Vec<Vec<MmseStatistics>>,
    /// `R̂^A_mn`, `Θ^A_mn` for AP `m` → AP `n`; zero on the diagonal.
    pub ap: Vec<Vec<MmseStatistics>>,
}

impl EstimationSecondOrder {
    pub fn build(scenario: &Scenario, channels: &ChannelSecondOrder) -> Result<Self> {
        let cfg = &scenario.config;
        let ue_snr = ue_pilot_snr(scenario);
        let ap_snr = ap_pilot_snr(scenario);
        let ue = channels
            .phi_ue_ap
            .iter()
            .map(|row| row.iter().map(|phi| mmse_second_order(phi, ue_snr)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        let ap = channels
            .phi_ap_ap
            .iter()
            .map(|row| row.iter().map(|phi| mmse_second_order(phi, ap_snr)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        debug_assert_eq!(ue.len(), cfg.num_aps);
        Ok(Self { ue, ap })
    }
}

/// Pilot energy-to-noise ratio of the UE uplink pilots seen at an AP.
pub fn ue_pilot_snr(scenario: &Scenario) -> f64 {
    let cfg = &scenario.config;
    cfg.pilot_power * cfg.tau_up as f64 / cfg.noise_ul
}

/// Pilot energy-to-noise ratio of the AP–AP pilots seen at a UL AP.
pub fn ap_pilot_snr(scenario: &Scenario) -> f64 {
    let cfg = &scenario.config;
    cfg.pilot_power * cfg.tau_dp as f64 / cfg.noise_ul
}

/// `C = √(p_p τ_p) φ (p_p τ_p φ + I)^{-1}`, the estimator matrix.
pub fn mmse_estimator(phi: &CMat, pilot_snr: f64) -> Result<CMat> {
    let n = phi.nrows();
    let system = phi.scale(pilot_snr) + identity(n);
    let chol = Cholesky::new(hermitian_part(&system))
        .ok_or_else(|| Error::Domain("pilot system is not positive definite".into()))?;
    // φ A^{-1} = (A^{-1} φ)ᴴ for Hermitian φ and A.
    Ok(chol.solve(phi).adjoint().scale(pilot_snr.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use crate::linalg::{frobenius, hermitian_eigenvalues, real_trace};
    use crate::scenario::{AntennaArray, Position, SystemConfig};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn scalar(v: f64) -> CMat {
        CMat::from_element(1, 1, c(v))
    }

    #[test]
    fn scalar_mmse_hand_value() {
        let s = mmse_second_order(&scalar(1.0), 1.0).unwrap();
        assert!((s.r_hat[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((s.theta[(0, 0)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_channel_has_zero_statistics() {
        let s = mmse_second_order(&CMat::zeros(3, 3), 5.0).unwrap();
        assert_eq!(frobenius(&s.r_hat), 0.0);
        assert_eq!(frobenius(&s.theta), 0.0);
    }

    #[test]
    fn strong_pilots_recover_the_channel() {
        let q = steering_vector(&AntennaArray::centered_ula(4, 0.1).unwrap(), 0.4);
        let phi = psi_matrix(&q, 0.2);
        let s = mmse_second_order(&phi, 1e6).unwrap();
        assert!(frobenius(&(&s.r_hat - &phi)) <= 1e-4 * frobenius(&phi));
    }

    #[test]
    fn non_psd_input_is_rejected() {
        let mut phi = identity(2);
        phi[(0, 0)] = c(-1.0);
        assert!(matches!(mmse_second_order(&phi, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn estimator_reproduces_r_hat() {
        let q = steering_vector(&AntennaArray::centered_ula(5, 0.1).unwrap(), 1.1);
        let phi = psi_matrix(&q, 0.05) + identity(5).scale(0.3);
        let snr = 2.5;
        let cm = mmse_estimator(&phi, snr).unwrap();
        let via_c = (&cm * &phi).scale(snr.sqrt());
        let s = mmse_second_order(&phi, snr).unwrap();
        assert!(frobenius(&(via_c - &s.r_hat)) < 1e-12 * frobenius(&s.r_hat));
    }

    #[test]
    fn psi_sqrt_squares_back() {
        let q = steering_vector(&AntennaArray::centered_ula(6, 0.1).unwrap(), -0.7);
        for &chi in &[0.0, 0.01, 0.5] {
            let r = psi_sqrt(&q, chi);
            let psi = psi_matrix(&q, chi);
            assert!(frobenius(&(&r * &r - &psi)) < 1e-12 * frobenius(&psi));
        }
    }

    #[test]
    fn zeta_without_uncertainty_is_rank_one() {
        let q = steering_vector(&AntennaArray::centered_ula(8, 0.1).unwrap(), 0.3);
        let g = gamma_scalar(50.0, 3.7, 0.0).unwrap();
        assert_eq!(g, path_gain(50.0, 3.7).unwrap().powi(2));
        let z = zeta(&q, g, 0.0);
        assert!((real_trace(&z) / (8.0 * g) - 1.0).abs() < 1e-12);
        let ev = hermitian_eigenvalues(&z);
        assert!(ev[..7].iter().all(|e| e.abs() < 1e-12 * 8.0 * g));
    }

    #[test]
    fn psi_diagonal_is_one_plus_chi() {
        let q = steering_vector(&AntennaArray::centered_ula(7, 0.1).unwrap(), 2.2);
        let psi = psi_matrix(&q, 0.04);
        for i in 0..7 {
            assert!((psi[(i, i)].re - 1.04).abs() < 1e-12);
        }
        assert!((real_trace(&psi_matrix(&q, 0.0)) - 7.0).abs() < 1e-12);
    }

    fn one_target_scenario(targets: &[Position]) -> Scenario {
        let cfg = SystemConfig {
            antennas_per_ap: 4,
            gain_uncertainty_ap: 0.0,
            gain_uncertainty_ue: 0.0,
            steering_perturbation: 0.0,
            ..SystemConfig::default()
        };
        Scenario::from_positions(
            cfg,
            &[Position::new(0.0, 0.0), Position::new(60.0, 0.0)],
            &[Position::new(20.0, 30.0)],
            &[Position::new(40.0, -25.0)],
            targets,
        )
        .unwrap()
    }

    #[test]
    fn no_targets_gives_scaled_identity() {
        let sc = one_target_scenario(&[]);
        let ch = ChannelSecondOrder::build(&sc).unwrap();
        let d = sc.aps[0].center.distance(&sc.ues[0].position);
        let l2 = path_gain(d, 3.7).unwrap().powi(2);
        assert!(frobenius(&(&ch.phi_ue_ap[0][0] - identity(4).scale(l2))) <= 1e-14 * l2);
        let dab = sc.aps[0].center.distance(&sc.aps[1].center);
        let la = path_gain(dab, 3.7).unwrap().powi(2);
        assert!(frobenius(&(&ch.phi_ap_ap[0][1] - identity(4).scale(la))) <= 1e-14 * la);
        let duu = sc.ues[0].position.distance(&sc.ues[1].position);
        assert!((ch.phi_ue_ue[1][0] / path_gain(duu, 3.7).unwrap().powi(2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_target_forced_form() {
        let tp = Position::new(10.0, 12.0);
        let sc = one_target_scenario(&[tp]);
        let ch = ChannelSecondOrder::build(&sc).unwrap();
        let ap = &sc.aps[0];
        let ue = &sc.ues[0];
        let l2 = path_gain(ap.center.distance(&ue.position), 3.7).unwrap().powi(2);
        let d1 = path_gain(ap.center.distance(&tp), 3.7).unwrap().powi(2);
        let d2 = path_gain(tp.distance(&ue.position), 3.7).unwrap().powi(2);
        let q = steering_vector(&ap.array, ap.center.bearing_to(&tp));
        let expected = identity(4).scale(l2) + outer(&q).scale(0.64 * d1 * d2);
        assert!(frobenius(&(&ch.phi_ue_ap[0][0] - &expected)) <= 1e-12 * frobenius(&expected));
    }

    #[test]
    fn ap_ap_trace_is_symmetric_under_swap() {
        let sc = one_target_scenario(&[Position::new(10.0, 12.0), Position::new(35.0, -8.0)]);
        let ch = ChannelSecondOrder::build(&sc).unwrap();
        let a = real_trace(&ch.phi_ap_ap[0][1]);
        let b = real_trace(&ch.phi_ap_ap[1][0]);
        assert!((a / b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_scenario_decomposes_exactly() {
        let cfg = SystemConfig { rng_seed: 5, ..SystemConfig::default() };
        let sc = crate::scenario::build_scenario(&cfg).unwrap();
        let ch = ChannelSecondOrder::build(&sc).unwrap();
        let est = EstimationSecondOrder::build(&sc, &ch).unwrap();
        for m in 0..sc.num_aps() {
            for k in 0..sc.ues.len() {
                let phi = &ch.phi_ue_ap[m][k];
                let s = &est.ue[m][k];
                assert!(frobenius(&(&s.r_hat + &s.theta - phi)) <= 1e-10 * frobenius(phi));
                assert!(is_hermitian_psd(&s.r_hat, 1e-10));
                assert!(is_hermitian_psd(&s.theta, 1e-10));
            }
        }
    }
}
