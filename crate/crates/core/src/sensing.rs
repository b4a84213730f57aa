//! Closed-form CRLBs for bistatic range, DOA and DOD, the localization error
//! rate, and a numeric Fisher-information check.
//!
//! For every DL transmitter `m`, UL receiver `n` and target `t` the echo is
//! `y = ζ a_mt ⊗ b_tn` with received SNR `α_f p_s η² ‖w‖² / σ²_z`, where
//! `η = λ_{Am,Tt} λ_{Tt,An}`, `‖w‖² = 1 + χ²` and `α_f` is the target power
//! factor. The range column of the Jacobian uses the band-edge frequency
//! offset `Δf/2`, which reproduces the `π²(Δf/c)²` closed form.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;

use crate::analysis::ScenarioAnalysis;
use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::rates::{normalization, NormalizationCoefficients};
use crate::scenario::{
    angles, path_gain, steering_derivative, steering_vector, AntennaArray, DuplexAssignment, Position, Scenario,
    TargetPowerFactor,
};
use crate::SPEED_OF_LIGHT;

/// `A = Σᵢ (yᵢ cos θ − xᵢ sin θ)` and `B = Σᵢ (yᵢ cos θ − xᵢ sin θ)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayFactors {
    pub a: f64,
    pub b: f64,
}

impl ArrayFactors {
    /// `N B − A²`, nonnegative by Cauchy–Schwarz.
    pub fn spread(&self, n: usize) -> f64 {
        n as f64 * self.b - self.a * self.a
    }
}

pub fn array_factors(array: &AntennaArray, angle: f64) -> ArrayFactors {
    let (s, c) = angle.sin_cos();
    let (a, b) = array.elements().iter().fold((0.0, 0.0), |(a, b), p| {
        let v = p.y * c - p.x * s;
        (a + v, b + v * v)
    });
    ArrayFactors { a, b }
}

/// Assignment-independent sensing geometry.
#[derive(Debug, Clone)]
pub struct SensingGeometry {
    /// `λ_{Am,Tt} = d^{-α}`, indexed `[m][t]`.
    pub amplitude: Vec<Vec<f64>>,
    pub doa: Vec<Vec<f64>>,
    pub dod: Vec<Vec<f64>>,
    /// Factors at AP `m` for DOA `θ_mt`, indexed `[m][t]`.
    pub doa_factors: Vec<Vec<ArrayFactors>>,
    /// Factors at AP `n` for DOD `φ_tn`, indexed `[t][n]`.
    pub dod_factors: Vec<Vec<ArrayFactors>>,
}

impl SensingGeometry {
    pub fn build(scenario: &Scenario) -> Result<Self> {
        let table = angles(scenario)?;
        let alpha = scenario.config.path_loss_exponent;
        let amplitude = scenario
            .aps
            .iter()
            .map(|ap| {
                scenario
                    .targets
                    .iter()
                    .map(|tg| path_gain(ap.center.distance(&tg.position), alpha))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let doa_factors = scenario
            .aps
            .iter()
            .map(|ap| {
                scenario
                    .targets
                    .iter()
                    .map(|tg| array_factors(&ap.array, table.doa[ap.id][tg.id]))
                    .collect()
            })
            .collect();
        let dod_factors = scenario
            .targets
            .iter()
            .map(|tg| {
                scenario
                    .aps
                    .iter()
                    .map(|ap| array_factors(&ap.array, table.dod[tg.id][ap.id]))
                    .collect()
            })
            .collect();
        Ok(Self {
            amplitude,
            doa: table.doa,
            dod: table.dod,
            doa_factors,
            dod_factors,
        })
    }
}

/// Residual interference powers at a UL AP after CLI and UL data cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPowers {
    /// `σ²_dl,n = Σ_{m∈DL} Σ_j p_j ε_j² tr(Θ^A_mn R̂_mj)`
    pub dl: f64,
    /// `σ²_ul,n = Σ_k p_k tr(R̂_nk)`
    pub ul: f64,
}

pub fn residual_powers(
    analysis: &ScenarioAnalysis,
    assignment: &DuplexAssignment,
    ncoef: &NormalizationCoefficients,
    n: usize,
) -> Result<ResidualPowers> {
    if n >= assignment.num_aps() || !assignment.is_ul(n) {
        return Err(Error::Domain(format!("AP {n} is not a UL AP")));
    }
    let sc = &analysis.scenario;
    let mut dl = 0.0;
    for m in assignment.dl_aps() {
        for j in sc.dl_ues() {
            let eps = ncoef.get(j).unwrap_or(0.0);
            dl += sc.ue_power[j] * eps * eps * analysis.theta_ap_r[m][n][j];
        }
    }
    let ul = sc.ul_ues().map(|k| sc.ue_power[k] * analysis.tr_r_hat[n][k]).sum();
    Ok(ResidualPowers { dl, ul })
}

/// Variances of range (m²), DOA (rad²) and DOD (rad²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlbComponents {
    pub range: f64,
    pub doa: f64,
    pub dod: f64,
}

impl CrlbComponents {
    pub fn total(&self) -> f64 {
        self.range + self.doa + self.dod
    }
}

/// Effective quantities entering both the closed forms and the numeric FIM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoParameters {
    pub power_factor: f64,
    pub sensing_power: f64,
    pub eta: f64,
    pub beam_norm_sq: f64,
    pub sigma_z_sq: f64,
}

impl EchoParameters {
    /// `α_f p_s η² ‖w‖² / σ²_z`
    pub fn snr(&self) -> f64 {
        self.power_factor * self.sensing_power * self.eta * self.eta * self.beam_norm_sq / self.sigma_z_sq
    }
}

pub fn echo_parameters(
    analysis: &ScenarioAnalysis,
    assignment: &DuplexAssignment,
    ncoef: &NormalizationCoefficients,
    m: usize,
    n: usize,
    t: usize,
) -> Result<EchoParameters> {
    if m >= assignment.num_aps() || !assignment.is_dl(m) {
        return Err(Error::Domain(format!("AP {m} is not a DL AP")));
    }
    let sc = &analysis.scenario;
    let target = sc
        .targets
        .get(t)
        .ok_or_else(|| Error::InvalidArgument(format!("no target with id {t}")))?;
    let res = residual_powers(analysis, assignment, ncoef, n)?;
    let power_factor = match sc.config.target_power_factor {
        TargetPowerFactor::Squared => target.reflection_coefficient.powi(2),
        TargetPowerFactor::Literal => target.reflection_coefficient,
    };
    Ok(EchoParameters {
        power_factor,
        sensing_power: sc.target_power[t],
        eta: analysis.geometry.amplitude[m][t] * analysis.geometry.amplitude[n][t],
        beam_norm_sq: 1.0 + target.steering_perturbation,
        sigma_z_sq: res.dl + res.ul + sc.config.noise_s,
    })
}

fn singular_check(spread: f64, factors: &ArrayFactors, n: usize, what: &str) -> Result<()> {
    let scale = n as f64 * factors.b;
    if !(spread > 1e-12 * scale) || !(scale > 0.0) {
        return Err(Error::SingularGeometry(format!("{what}: N·B − A² = {spread}")));
    }
    Ok(())
}

/// Closed-form CRLB components for DL AP `m`, UL AP `n` and target `t`.
pub fn crlb_components(
    analysis: &ScenarioAnalysis,
    assignment: &DuplexAssignment,
    ncoef: &NormalizationCoefficients,
    m: usize,
    n: usize,
    t: usize,
) -> Result<CrlbComponents> {
    let echo = echo_parameters(analysis, assignment, ncoef, m, n, t)?;
    let sc = &analysis.scenario;
    let n_ant = sc.num_antennas();
    let nf = n_ant as f64;
    let snr = echo.snr();
    let wl = sc.config.wavelength;
    let range = 1.0 / (snr * PI * PI * (sc.config.bandwidth / SPEED_OF_LIGHT).powi(2) * nf * nf);

    let fa = analysis.geometry.doa_factors[m][t];
    let spread_a = fa.spread(n_ant);
    singular_check(spread_a, &fa, n_ant, "DOA")?;
    let doa = wl * wl / (4.0 * PI * PI * snr * spread_a);

    let fb = analysis.geometry.dod_factors[t][n];
    let spread_b = fb.spread(n_ant);
    singular_check(spread_b, &fb, n_ant, "DOD")?;
    let dod = wl * wl / (4.0 * PI * PI * snr * spread_b);

    Ok(CrlbComponents { range, doa, dod })
}

/// `CRLB_loc,t`: mean component sum over all DL × UL AP pairs. `None` when
/// either AP set is empty; singular pairs make the bound infinite.
pub fn crlb_loc(
    analysis: &ScenarioAnalysis,
    assignment: &DuplexAssignment,
    ncoef: &NormalizationCoefficients,
    t: usize,
) -> Result<Option<f64>> {
    let dl = assignment.dl_aps();
    let ul = assignment.ul_aps();
    if dl.is_empty() || ul.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for &m in &dl {
        for &n in &ul {
            total += match crlb_components(analysis, assignment, ncoef, m, n, t) {
                Ok(c) => c.total(),
                Err(Error::SingularGeometry(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            };
        }
    }
    Ok(Some(total / (dl.len() * ul.len()) as f64))
}

/// `(1 − (τ_dp + τ_up)/τ) log₂(1 + σ²_loc / CRLB)`
pub fn ler(crlb: f64, sigma_loc_sq: f64, data_fraction: f64) -> f64 {
    if crlb.is_infinite() {
        return 0.0;
    }
    data_fraction * (sigma_loc_sq / crlb).ln_1p() / std::f64::consts::LN_2
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingReport {
    pub crlb: Vec<Option<f64>>,
    pub ler: Vec<f64>,
    /// `f2 = Σ_t R^est_t`
    pub sum_ler: f64,
}

pub fn sensing_report(analysis: &ScenarioAnalysis, assignment: &DuplexAssignment) -> Result<SensingReport> {
    if assignment.num_aps() != analysis.scenario.num_aps() {
        return Err(Error::InvalidArgument("assignment size does not match the scenario".into()));
    }
    let cfg = &analysis.scenario.config;
    let ncoef = normalization(analysis, assignment);
    let crlb = (0..analysis.scenario.targets.len())
        .map(|t| crlb_loc(analysis, assignment, &ncoef, t))
        .collect::<Result<Vec<_>>>()?;
    let ler: Vec<f64> = crlb
        .iter()
        .map(|c| c.map_or(0.0, |c| ler(c, cfg.sigma_loc_sq, cfg.data_fraction())))
        .collect();
    let sum_ler = ler.iter().sum();
    Ok(SensingReport { crlb, ler, sum_ler })
}

pub fn sense_sum(analysis: &ScenarioAnalysis, assignment: &DuplexAssignment) -> Result<f64> {
    Ok(sensing_report(analysis, assignment)?.sum_ler)
}

/// Frequency offset used for the range derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeConvention {
    /// `Δf/2`, matching the closed forms.
    BandEdge,
    /// `Δf`, giving four times the range information.
    FullBandwidth,
}

fn kron(a: &CVec, b: &CVec) -> CVec {
    CVec::from_iterator(a.len() * b.len(), a.iter().flat_map(|x| b.iter().map(move |y| x * y)))
}

/// Numeric FIM of (range, DOA, DOD) for DL AP `m`, UL AP `n` and target `t`.
pub fn fim_numeric(
    analysis: &ScenarioAnalysis,
    assignment: &DuplexAssignment,
    ncoef: &NormalizationCoefficients,
    m: usize,
    n: usize,
    t: usize,
    convention: RangeConvention,
) -> Result<Matrix3<f64>> {
    let echo = echo_parameters(analysis, assignment, ncoef, m, n, t)?;
    let sc = &analysis.scenario;
    let geo = &analysis.geometry;
    let arr_m = &sc.aps[m].array;
    let arr_n = &sc.aps[n].array;
    let a = steering_vector(arr_m, geo.doa[m][t]);
    let da = steering_derivative(arr_m, geo.doa[m][t]);
    let b = steering_vector(arr_n, geo.dod[t][n]);
    let db = steering_derivative(arr_n, geo.dod[t][n]);
    let offset = match convention {
        RangeConvention::BandEdge => sc.config.bandwidth / 2.0,
        RangeConvention::FullBandwidth => sc.config.bandwidth,
    };
    let range_scale = Complex64::new(0.0, -2.0 * PI * offset / SPEED_OF_LIGHT);
    let cols = [kron(&a, &b) * range_scale, kron(&da, &b), kron(&a, &db)];
    let d = DMatrix::from_columns(&cols);
    let gram = d.adjoint() * d;
    let snr = echo.snr();
    Ok(Matrix3::from_fn(|i, j| snr * gram[(i, j)].re))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[iy][ix]`, LER of a single probe target at `(xs[ix], ys[iy])`.
    pub values: Vec<Vec<f64>>,
}

/// LER of a single probe target swept over a `resolution × resolution` grid
/// covering the service area and all APs. Cells where the probe coincides
/// with a node are reported as 0.
pub fn ler_heatmap(scenario: &Scenario, assignment: &DuplexAssignment, resolution: usize) -> Result<Heatmap> {
    use rayon::prelude::*;

    if resolution < 2 {
        return Err(Error::InvalidArgument("heatmap resolution must be at least 2".into()));
    }
    let side = scenario.config.area_side;
    let (mut x0, mut x1, mut y0, mut y1) = (0.0f64, side, 0.0f64, side);
    for ap in &scenario.aps {
        x0 = x0.min(ap.center.x);
        x1 = x1.max(ap.center.x);
        y0 = y0.min(ap.center.y);
        y1 = y1.max(ap.center.y);
    }
    let centers = |lo: f64, hi: f64| -> Vec<f64> {
        let step = (hi - lo) / resolution as f64;
        (0..resolution).map(|i| lo + (i as f64 + 0.5) * step).collect()
    };
    let xs = centers(x0, x1);
    let ys = centers(y0, y1);
    let values = ys
        .par_iter()
        .map(|&y| {
            xs.iter()
                .map(|&x| {
                    let probe = match scenario.with_targets(&[Position::new(x, y)]) {
                        Ok(s) => s,
                        Err(Error::Domain(_)) => return Ok(0.0),
                        Err(e) => return Err(e),
                    };
                    match ScenarioAnalysis::sensing_only(probe) {
                        Ok(a) => sense_sum(&a, assignment),
                        Err(Error::Domain(_)) => Ok(0.0),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Heatmap { xs, ys, values })
}
