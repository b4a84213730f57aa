//! Channel sampling and empirical SINR, residual-power and second-moment
//! estimates used to check the closed forms.
//!
//! Two samplers are provided. [`PhysicalSampler`] composes channels from their
//! physical pieces (direct scattering plus target reflections with perturbed
//! amplitudes and steering vectors). [`ChannelSampler`] draws MMSE estimates
//! `ĥ ~ CN(0, R̂)` and errors `e ~ CN(0, Θ)` independently, sets `h = ĥ + e`,
//! and is the source of instantaneous SINR samples. Symbol and sensing-waveform
//! expectations are taken analytically.
//!
//! Trials run in fixed chunks with one ChaCha stream per chunk and chunk
//! results merged in order, so every estimate is bitwise reproducible for a
//! given seed regardless of thread count.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analysis::ScenarioAnalysis;
use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, CMat, CVec};
use crate::rates::{normalization, rate_report, NormalizationCoefficients};
use crate::scenario::{DuplexAssignment, LinkDirection};
use crate::statistics::psi_sqrt;

/// Trials per independently seeded chunk.
pub const CHUNK_TRIALS: usize = 1024;
/// Smallest trial count accepted by the validation report.
pub const MIN_TRIALS: usize = 1000;
/// Denominators below this are treated as zero.
pub const DENOMINATOR_FLOOR: f64 = 1e-30;
/// SINR reported when the denominator is below [`DENOMINATOR_FLOOR`].
pub const SINR_SENTINEL: f64 = 1e30;

/// RNG for chunk `chunk` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// One `CN(0, 1)` draw.
pub fn standard_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

pub fn standard_complex_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    CVec::from_iterator(n, (0..n).map(|_| standard_complex(rng)))
}

/// `CN(0, S Sᴴ)` draw given a square root `S`.
pub fn correlated_vector<R: Rng + ?Sized>(root: &CMat, rng: &mut R) -> CVec {
    root * standard_complex_vector(root.ncols(), rng)
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

impl McEstimate {
    /// Distance to `value` in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        let diff = (self.mean - value).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.std_error
        }
    }
}

/// Streaming mean and variance (Welford, with Chan's merge).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAccumulator {
    count: usize,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2 + delta * delta * (self.count * other.count) as f64 / total as f64;
        self.count = total;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate {
            mean: self.mean,
            std_error: (self.variance() / self.count.max(1) as f64).sqrt(),
            trials: self.count,
        }
    }
}

/// Streaming moments of a pair `(x, y)` for the ratio `E[x]/E[y]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RatioAccumulator {
    count: usize,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    c_xy: f64,
}

impl RatioAccumulator {
    pub fn push(&mut self, x: f64, y: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.c_xy += dx * (y - self.mean_y);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.m2_x += other.m2_x + dx * dx * na * nb / n;
        self.m2_y += other.m2_y + dy * dy * na * nb / n;
        self.c_xy += other.c_xy + dx * dy * na * nb / n;
        self.count += other.count;
    }

    /// `E[x]/E[y]` with a delta-method standard error.
    pub fn estimate(&self) -> McEstimate {
        let n = self.count.max(1) as f64;
        let ratio = if self.mean_y > 0.0 { self.mean_x / self.mean_y } else { 0.0 };
        let dof = (self.count.max(2) - 1) as f64;
        let (vx, vy, cxy) = (self.m2_x / dof, self.m2_y / dof, self.c_xy / dof);
        let var = if self.mean_y > 0.0 {
            ((vx - 2.0 * ratio * cxy + ratio * ratio * vy) / (self.mean_y * self.mean_y)).max(0.0) / n
        } else {
            0.0
        };
        McEstimate {
            mean: ratio,
            std_error: var.sqrt(),
            trials: self.count,
        }
    }
}

/// Entrywise streaming estimate of `E[x xᴴ]` (or of `E[X Xᴴ]` for matrices).
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMomentAccumulator {
    dim: usize,
    re: Vec<MeanAccumulator>,
    im: Vec<MeanAccumulator>,
}

impl SecondMomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            re: vec![MeanAccumulator::default(); dim * dim],
            im: vec![MeanAccumulator::default(); dim * dim],
        }
    }

    pub fn push_vector(&mut self, x: &CVec) {
        self.push_matrix(&(x * x.adjoint()));
    }

    pub fn push_matrix(&mut self, outer: &CMat) {
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.re[i * self.dim + j].push(outer[(i, j)].re);
                self.im[i * self.dim + j].push(outer[(i, j)].im);
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.re.iter_mut().zip(&other.re) {
            a.merge(b);
        }
        for (a, b) in self.im.iter_mut().zip(&other.im) {
            a.merge(b);
        }
    }

    pub fn mean(&self) -> CMat {
        CMat::from_fn(self.dim, self.dim, |i, j| {
            Complex64::new(self.re[i * self.dim + j].mean(), self.im[i * self.dim + j].mean())
        })
    }

    /// Largest entrywise deviation from `target` in standard errors. Entries
    /// whose samples are constant must match to `1e-12` relative.
    pub fn max_z_score(&self, target: &CMat) -> f64 {
        let scale = target.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let k = i * self.dim + j;
                for (acc, value) in [(&self.re[k], target[(i, j)].re), (&self.im[k], target[(i, j)].im)] {
                    let est = acc.estimate();
                    let diff = (est.mean - value).abs();
                    let z = if est.std_error > 1e-12 * scale {
                        diff / est.std_error
                    } else if diff <= 1e-12 * scale {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    worst = worst.max(z);
                }
            }
        }
        worst
    }

    /// Trace estimate with standard error.
    pub fn trace_estimate(&self) -> McEstimate {
        // The diagonal entries of one sample are not independent, so the
        // trace is accumulated separately by callers that need its error.
        let mean = (0..self.dim).map(|i| self.re[i * self.dim + i].mean()).sum();
        let var: f64 = (0..self.dim).map(|i| self.re[i * self.dim + i].variance()).sum();
        let n = self.re[0].count();
        McEstimate {
            mean,
            std_error: (var / n.max(1) as f64).sqrt(),
            trials: n,
        }
    }
}

/// Physical composition of channels from direct and target-reflected paths.
pub struct PhysicalSampler<'a> {
    analysis: &'a ScenarioAnalysis,
    /// `ψ^{1/2}` for AP `m` → target `t`, `[m][t]`.
    doa_roots: Vec<Vec<CMat>>,
    /// `ψ^{1/2}` for target `t` → AP `n`, `[t][n]`.
    dod_roots: Vec<Vec<CMat>>,
}

impl<'a> PhysicalSampler<'a> {
    pub fn new(analysis: &'a ScenarioAnalysis) -> Self {
        let ch = &analysis.channels;
        let chi: Vec<f64> = analysis.scenario.targets.iter().map(|t| t.steering_perturbation).collect();
        let doa_roots = ch
            .steering_doa
            .iter()
            .map(|row| row.iter().zip(&chi).map(|(q, &c)| psi_sqrt(q, c)).collect())
            .collect();
        let dod_roots = ch
            .steering_dod
            .iter()
            .zip(&chi)
            .map(|(row, &c)| row.iter().map(|q| psi_sqrt(q, c)).collect())
            .collect();
        Self {
            analysis,
            doa_roots,
            dod_roots,
        }
    }

    /// Mean amplitude `√(mean power / (1+ρ))` plus a real Gaussian error of
    /// variance `ρ` times the mean power gain.
    fn amplitude<R: Rng + ?Sized>(gamma: f64, relative: f64, rng: &mut R) -> f64 {
        let mean_sq = gamma / (1.0 + relative);
        let noise: f64 = rng.sample(StandardNormal);
        mean_sq.sqrt() * (1.0 + relative.sqrt() * noise)
    }

    fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI * rng.random::<f64>())
    }

    /// Perturbed steering `q ~ CN(q̄, χ² I)` from AP `m` toward target `t`.
    pub fn steering<R: Rng + ?Sized>(&self, m: usize, t: usize, rng: &mut R) -> CVec {
        let chi = self.analysis.scenario.targets[t].steering_perturbation;
        let q = &self.analysis.channels.steering_doa[m][t];
        q + standard_complex_vector(q.len(), rng).scale(chi.sqrt())
    }

    /// `h_mk`: direct Rayleigh path plus one reflection per target.
    pub fn ue_ap<R: Rng + ?Sized>(&self, m: usize, k: usize, rng: &mut R) -> CVec {
        let sc = &self.analysis.scenario;
        let ch = &self.analysis.channels;
        let n = sc.num_antennas();
        let direct = crate::statistics::mean_power_gain(sc.aps[m].center.distance(&sc.ues[k].position), sc.config.path_loss_exponent)
            .expect("validated geometry");
        let mut h = standard_complex_vector(n, rng).scale(direct.sqrt());
        for tg in &sc.targets {
            let amp = tg.reflection_coefficient
                * Self::amplitude(ch.gamma_ap_target[m][tg.id], tg.gain_uncertainty_ap, rng)
                * Self::amplitude(ch.gamma_target_ue[tg.id][k], tg.gain_uncertainty_ue, rng);
            let q = self.steering(m, tg.id, rng);
            h += q * (Self::random_phase(rng) * amp);
        }
        h
    }

    /// `H_A,mn`: direct path `λ g I` plus reflections `α λ' λ' g ψ_mt^{1/2} ψ_tn^{1/2}`.
    pub fn ap_ap<R: Rng + ?Sized>(&self, m: usize, n: usize, rng: &mut R) -> CMat {
        let sc = &self.analysis.scenario;
        let ch = &self.analysis.channels;
        let dim = sc.num_antennas();
        let direct = crate::statistics::mean_power_gain(sc.aps[m].center.distance(&sc.aps[n].center), sc.config.path_loss_exponent)
            .expect("validated geometry");
        let mut h = CMat::identity(dim, dim) * (standard_complex(rng) * direct.sqrt());
        for tg in &sc.targets {
            let amp = tg.reflection_coefficient
                * Self::amplitude(ch.gamma_ap_target[m][tg.id], tg.gain_uncertainty_ap, rng)
                * Self::amplitude(ch.gamma_ap_target[n][tg.id], tg.gain_uncertainty_ap, rng);
            let g = Self::random_phase(rng) * amp;
            h += (&self.doa_roots[m][tg.id] * &self.dod_roots[tg.id][n]) * g;
        }
        h
    }

    /// `h_I,ul`, the UE `u` → UE `l` interference channel.
    pub fn ue_ue<R: Rng + ?Sized>(&self, u: usize, l: usize, rng: &mut R) -> Complex64 {
        let sc = &self.analysis.scenario;
        let ch = &self.analysis.channels;
        let direct = crate::statistics::mean_power_gain(sc.ues[u].position.distance(&sc.ues[l].position), sc.config.path_loss_exponent)
            .expect("validated geometry");
        let mut h = standard_complex(rng) * direct.sqrt();
        for tg in &sc.targets {
            let amp = tg.reflection_coefficient
                * Self::amplitude(ch.gamma_target_ue[tg.id][u], tg.gain_uncertainty_ue, rng)
                * Self::amplitude(ch.gamma_target_ue[tg.id][l], tg.gain_uncertainty_ue, rng);
            h += Self::random_phase(rng) * amp;
        }
        h
    }

    /// Target-link amplitude `λ'` for AP `m` and target `t`.
    pub fn ap_target_amplitude<R: Rng + ?Sized>(&self, m: usize, t: usize, rng: &mut R) -> f64 {
        let tg = &self.analysis.scenario.targets[t];
        Self::amplitude(self.analysis.channels.gamma_ap_target[m][t], tg.gain_uncertainty_ap, rng)
    }
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationBundle {
    /// `ĥ_mk`, indexed `[m][k]`.
    pub estimate: Vec<Vec<CVec>>,
    /// `e_mk`, indexed `[m][k]`.
    pub error: Vec<Vec<CVec>>,
    /// Scalar gains `g` with `Ĥ_A,mn = g R̂^{A 1/2}_mn`, `[m][n]`.
    pub ap_estimate_gain: Vec<Vec<Complex64>>,
    /// Scalar gains `g'` with `E_A,mn = g' Θ^{A 1/2}_mn`, `[m][n]`.
    pub ap_error_gain: Vec<Vec<Complex64>>,
    /// `h_I,ul`, indexed `[u][l]`.
    pub ue_ue: Vec<Vec<Complex64>>,
    /// Perturbed sensing steering `q_mt`, indexed `[m][t]`.
    pub sensing_steering: Vec<Vec<CVec>>,
}

impl RealizationBundle {
    /// `h_mk = ĥ_mk + e_mk`.
    pub fn channel(&self, m: usize, k: usize) -> CVec {
        &self.estimate[m][k] + &self.error[m][k]
    }
}

/// Square roots of every covariance the sampler draws from.
pub struct ChannelSampler<'a> {
    analysis: &'a ScenarioAnalysis,
    physical: PhysicalSampler<'a>,
    r_hat_root: Vec<Vec<CMat>>,
    theta_root: Vec<Vec<CMat>>,
    r_hat_ap_root: Vec<Vec<CMat>>,
    theta_ap_root: Vec<Vec<CMat>>,
}

impl<'a> ChannelSampler<'a> {
    pub fn new(analysis: &'a ScenarioAnalysis) -> Self {
        let est = &analysis.estimates;
        let roots = |rows: &Vec<Vec<crate::statistics::MmseStatistics>>, error: bool| -> Vec<Vec<CMat>> {
            rows.par_iter()
                .map(|row| {
                    row.iter()
                        .map(|s| psd_sqrt(if error { &s.theta } else { &s.r_hat }))
                        .collect()
                })
                .collect()
        };
        Self {
            analysis,
            physical: PhysicalSampler::new(analysis),
            r_hat_root: roots(&est.ue, false),
            theta_root: roots(&est.ue, true),
            r_hat_ap_root: roots(&est.ap, false),
            theta_ap_root: roots(&est.ap, true),
        }
    }

    pub fn analysis(&self) -> &ScenarioAnalysis {
        self.analysis
    }

    /// `Θ^{A 1/2}_mn`
    pub fn theta_ap_root(&self, m: usize, n: usize) -> &CMat {
        &self.theta_ap_root[m][n]
    }

    /// `R̂^{A 1/2}_mn`
    pub fn r_hat_ap_root(&self, m: usize, n: usize) -> &CMat {
        &self.r_hat_ap_root[m][n]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RealizationBundle {
        let sc = &self.analysis.scenario;
        let m_count = sc.num_aps();
        let k_count = sc.ues.len();
        let mut estimate = Vec::with_capacity(m_count);
        let mut error = Vec::with_capacity(m_count);
        for m in 0..m_count {
            estimate.push((0..k_count).map(|k| correlated_vector(&self.r_hat_root[m][k], rng)).collect());
            error.push((0..k_count).map(|k| correlated_vector(&self.theta_root[m][k], rng)).collect());
        }
        let mut ap_estimate_gain = vec![vec![Complex64::new(0.0, 0.0); m_count]; m_count];
        let mut ap_error_gain = vec![vec![Complex64::new(0.0, 0.0); m_count]; m_count];
        for m in 0..m_count {
            for n in 0..m_count {
                if m != n {
                    ap_estimate_gain[m][n] = standard_complex(rng);
                    ap_error_gain[m][n] = standard_complex(rng);
                }
            }
        }
        let ue_ue = (0..k_count)
            .map(|u| {
                (0..k_count)
                    .map(|l| {
                        let phi = self.analysis.channels.phi_ue_ue[u][l];
                        standard_complex(rng) * phi.sqrt()
                    })
                    .collect()
            })
            .collect();
        let sensing_steering = (0..m_count)
            .map(|m| (0..sc.targets.len()).map(|t| self.physical.steering(m, t, rng)).collect())
            .collect();
        RealizationBundle {
            estimate,
            error,
            ap_estimate_gain,
            ap_error_gain,
            ue_ue,
            sensing_steering,
        }
    }
}

/// Deterministic single bundle for `seed`.
pub fn sample_channels(analysis: &ScenarioAnalysis, seed: u64) -> RealizationBundle {
    ChannelSampler::new(analysis).sample(&mut chunk_rng(seed, 0))
}

/// Instantaneous SINR of one UE in one realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstantSinr {
    pub terms: crate::rates::SinrTerms,
    pub sinr: f64,
    /// Set when the denominator fell below [`DENOMINATOR_FLOOR`].
    pub guarded: bool,
}

impl InstantSinr {
    fn new(terms: crate::rates::SinrTerms) -> Self {
        let den = terms.denominator();
        if den < DENOMINATOR_FLOOR {
            let sinr = if terms.desired > 0.0 { SINR_SENTINEL } else { 0.0 };
            return Self {
                terms,
                sinr,
                guarded: true,
            };
        }
        Self {
            terms,
            sinr: terms.desired / den,
            guarded: false,
        }
    }
}

fn dot(a: &CVec, b: &CVec) -> Complex64 {
    a.dotc(b)
}

/// Instantaneous DL SINR of UE `l` under MRT `w_mk = ε_k ĥ_mk`.
pub fn instantaneous_dl_sinr(
    sampler: &ChannelSampler<'_>,
    bundle: &RealizationBundle,
    assignment: &DuplexAssignment,
    ncoef: &NormalizationCoefficients,
    l: usize,
) -> InstantSinr {
    let sc = &sampler.analysis.scenario;
    let Some(eps_l) = ncoef.get(l) else {
        return InstantSinr::new(crate::rates::SinrTerms::default());
    };
    let dl_aps = assignment.dl_aps();
    let p = &sc.ue_power;
    let gain: f64 = dl_aps.iter().map(|&m| bundle.estimate[m][l].norm_squared()).sum();
    let desired = p[l] * eps_l * eps_l * gain * gain;
    let mut inter = 0.0;
    let mut error = 0.0;
    for k in sc.dl_ues() {
        let eps_k = ncoef.get(k).unwrap_or(0.0);
        let mut leak = Complex64::new(0.0, 0.0);
        let mut err = Complex64::new(0.0, 0.0);
        for &m in &dl_aps {
            let w = &bundle.estimate[m][k];
            if k != l {
                leak += dot(&bundle.estimate[m][l], w);
            }
            err += dot(&bundle.error[m][l], w);
        }
        inter += p[k] * eps_k * eps_k * leak.norm_sqr();
        error += p[k] * eps_k * eps_k * err.norm_sqr();
    }
    let n_ant = sc.num_antennas() as f64;
    let mut sense = 0.0;
    for &m in &dl_aps {
        for (t, &p_s) in sc.target_power.iter().enumerate() {
            sense += p_s / n_ant * dot(&bundle.error[m][l], &bundle.sensing_steering[m][t]).norm_sqr();
        }
    }
    let cli = sc.ul_ues().map(|u| p[u] * bundle.ue_ue[u][l].norm_sqr()).sum();
    InstantSinr::new(crate::rates::SinrTerms {
        desired,
        inter,
        error,
        sense,
        cli,
        noise: sc.config.noise_dl,
    })
}

/// Instantaneous UL SINR of UE `u` under MRC `v_nu = ε_u ĥ_nu`.
pub fn instantaneous_ul_sinr(
    sampler: &ChannelSampler<'_>,
    bundle: &RealizationBundle,
    assignment: &DuplexAssignment,
    ncoef: &NormalizationCoefficients,
    u: usize,
) -> InstantSinr {
    let sc = &sampler.analysis.scenario;
    let Some(eps_u) = ncoef.get(u) else {
        return InstantSinr::new(crate::rates::SinrTerms::default());
    };
    let ul_aps = assignment.ul_aps();
    let dl_aps = assignment.dl_aps();
    let p = &sc.ue_power;
    let e2 = eps_u * eps_u;
    let gain: f64 = ul_aps.iter().map(|&n| bundle.estimate[n][u].norm_squared()).sum();
    let desired = p[u] * e2 * gain * gain;
    let mut inter = 0.0;
    let mut error = 0.0;
    for k in sc.ul_ues() {
        let mut leak = Complex64::new(0.0, 0.0);
        let mut err = Complex64::new(0.0, 0.0);
        for &n in &ul_aps {
            let v = &bundle.estimate[n][u];
            if k != u {
                leak += dot(v, &bundle.estimate[n][k]);
            }
            err += dot(v, &bundle.error[n][k]);
        }
        inter += p[k] * e2 * leak.norm_sqr();
        error += p[k] * e2 * err.norm_sqr();
    }
    // x_mn = (g' Θ^{A 1/2}_mn)ᴴ v_nu so that vᴴ E_A w = x_mnᴴ w.
    let mut projected: Vec<(usize, CVec)> = Vec::with_capacity(dl_aps.len());
    for &m in &dl_aps {
        let mut x = CVec::zeros(sc.num_antennas());
        for &n in &ul_aps {
            let root = sampler.theta_ap_root(m, n);
            x += root.ad_mul(&bundle.estimate[n][u]) * bundle.ap_error_gain[m][n].conj();
        }
        projected.push((m, x));
    }
    // Data symbols are shared across transmitting APs, sensing waveforms are
    // per (m, t).
    let mut cli = 0.0;
    for j in sc.dl_ues() {
        let eps_j = ncoef.get(j).unwrap_or(0.0);
        let s: Complex64 = projected.iter().map(|(m, x)| dot(x, &bundle.estimate[*m][j])).sum();
        cli += p[j] * e2 * eps_j * eps_j * s.norm_sqr();
    }
    let n_ant = sc.num_antennas() as f64;
    let mut sense = 0.0;
    for (m, x) in &projected {
        for (t, &p_s) in sc.target_power.iter().enumerate() {
            sense += p_s * e2 / n_ant * dot(x, &bundle.sensing_steering[*m][t]).norm_sqr();
        }
    }
    let noise = sc.config.noise_ul * e2 * gain;
    InstantSinr::new(crate::rates::SinrTerms {
        desired,
        inter,
        error,
        sense,
        cli,
        noise,
    })
}

/// Per-UE Monte Carlo summary.
#[derive(Debug, Clone, PartialEq)]
pub struct UeSinrEstimate {
    pub ue_id: usize,
    pub direction: LinkDirection,
    /// `E[|D|²] / E[denominator]`, the quantity the closed form evaluates.
    pub mean_sinr: McEstimate,
    /// `E[γ]` over realizations, informational.
    pub mean_instant_sinr: McEstimate,
    /// `(1 − (τ_dp+τ_up)/τ) E[log₂(1 + γ)]`, informational.
    pub log_rate: McEstimate,
    pub guarded_draws: usize,
}

#[derive(Debug, Clone, Default)]
struct UeAccumulators {
    ratio: RatioAccumulator,
    instant: MeanAccumulator,
    log_rate: MeanAccumulator,
    guarded: usize,
}

impl UeAccumulators {
    fn merge(&mut self, other: &Self) {
        self.ratio.merge(&other.ratio);
        self.instant.merge(&other.instant);
        self.log_rate.merge(&other.log_rate);
        self.guarded += other.guarded;
    }
}

/// Monte Carlo SINR estimates for every UE under `assignment`.
pub fn estimate_sinr(
    analysis: &ScenarioAnalysis,
    assignment: &DuplexAssignment,
    trials: usize,
    seed: u64,
) -> Result<Vec<UeSinrEstimate>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let sampler = ChannelSampler::new(analysis);
    let ncoef = normalization(analysis, assignment);
    let sc = &analysis.scenario;
    let frac = sc.config.data_fraction();
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    let partials: Vec<Vec<UeAccumulators>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c as u64);
            let count = CHUNK_TRIALS.min(trials - c * CHUNK_TRIALS);
            let mut acc = vec![UeAccumulators::default(); sc.ues.len()];
            for _ in 0..count {
                let bundle = sampler.sample(&mut rng);
                for ue in &sc.ues {
                    let s = match ue.direction {
                        LinkDirection::Downlink => instantaneous_dl_sinr(&sampler, &bundle, assignment, &ncoef, ue.id),
                        LinkDirection::Uplink => instantaneous_ul_sinr(&sampler, &bundle, assignment, &ncoef, ue.id),
                    };
                    let a = &mut acc[ue.id];
                    a.ratio.push(s.terms.desired, s.terms.denominator());
                    a.instant.push(s.sinr);
                    a.log_rate.push(frac * s.sinr.ln_1p() / std::f64::consts::LN_2);
                    a.guarded += usize::from(s.guarded);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![UeAccumulators::default(); sc.ues.len()];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Ok(sc
        .ues
        .iter()
        .zip(total)
        .map(|(ue, a)| UeSinrEstimate {
            ue_id: ue.id,
            direction: ue.direction,
            mean_sinr: a.ratio.estimate(),
            mean_instant_sinr: a.instant.estimate(),
            log_rate: a.log_rate.estimate(),
            guarded_draws: a.guarded,
        })
        .collect())
}

/// Empirical residual powers `(σ²_dl,n, σ²_ul,n)` at UL AP `n`.
pub fn estimate_residual_powers(
    analysis: &ScenarioAnalysis,
    assignment: &DuplexAssignment,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<(McEstimate, McEstimate)> {
    if n >= assignment.num_aps() || !assignment.is_ul(n) {
        return Err(Error::Domain(format!("AP {n} is not a UL AP")));
    }
    let sampler = ChannelSampler::new(analysis);
    let ncoef = normalization(analysis, assignment);
    let sc = &analysis.scenario;
    let chunks = trials.div_ceil(CHUNK_TRIALS);
    let partials: Vec<(MeanAccumulator, MeanAccumulator)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c as u64);
            let count = CHUNK_TRIALS.min(trials - c * CHUNK_TRIALS);
            let mut dl = MeanAccumulator::default();
            let mut ul = MeanAccumulator::default();
            for _ in 0..count {
                let b = sampler.sample(&mut rng);
                let mut p_dl = 0.0;
                for j in sc.dl_ues() {
                    let eps = ncoef.get(j).unwrap_or(0.0);
                    let mut y = CVec::zeros(sc.num_antennas());
                    for m in assignment.dl_aps() {
                        y += sampler.theta_ap_root(m, n) * &b.estimate[m][j] * (b.ap_error_gain[m][n] * eps);
                    }
                    p_dl += sc.ue_power[j] * y.norm_squared();
                }
                let p_ul: f64 = sc.ul_ues().map(|k| sc.ue_power[k] * b.estimate[n][k].norm_squared()).sum();
                dl.push(p_dl);
                ul.push(p_ul);
            }
            (dl, ul)
        })
        .collect();
    let mut dl = MeanAccumulator::default();
    let mut ul = MeanAccumulator::default();
    for (a, b) in &partials {
        dl.merge(a);
        ul.merge(b);
    }
    Ok((dl.estimate(), ul.estimate()))
}

/// One row of the closed-form validation table.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub antennas: usize,
    pub ue_id: usize,
    pub direction: LinkDirection,
    /// Closed-form `E[γ]`.
    pub closed_form: f64,
    pub closed_form_rate: f64,
    pub mc: UeSinrEstimate,
    pub trials: usize,
    pub seed: u64,
}

/// Closed form vs Monte Carlo for every UE and every array size in `n_sweep`.
/// The scenario is rebuilt per array size with the same node positions.
pub fn mc_validation_report(
    analysis: &ScenarioAnalysis,
    assignment: &DuplexAssignment,
    n_sweep: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ValidationRow>> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "validation needs at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    let mut rows = Vec::new();
    for &n in n_sweep {
        let resized = resize_arrays(&analysis.scenario, n)?;
        let a = ScenarioAnalysis::new(resized)?;
        let closed = rate_report(&a, assignment)?;
        let mc = estimate_sinr(&a, assignment, trials, seed)?;
        for (c, e) in closed.per_ue.iter().zip(mc) {
            rows.push(ValidationRow {
                antennas: n,
                ue_id: c.ue_id,
                direction: c.direction,
                closed_form: c.sinr,
                closed_form_rate: c.rate,
                mc: e,
                trials,
                seed,
            });
        }
    }
    Ok(rows)
}

/// Same node positions with centered ULAs of `n` elements.
pub fn resize_arrays(scenario: &crate::scenario::Scenario, n: usize) -> Result<crate::scenario::Scenario> {
    let mut cfg = scenario.config.clone();
    cfg.antennas_per_ap = n;
    let aps: Vec<_> = scenario.aps.iter().map(|a| a.center).collect();
    let dl: Vec<_> = scenario.dl_ues().map(|k| scenario.ues[k].position).collect();
    let ul: Vec<_> = scenario.ul_ues().map(|k| scenario.ues[k].position).collect();
    let tg: Vec<_> = scenario.targets.iter().map(|t| t.position).collect();
    crate::scenario::Scenario::from_positions(cfg, &aps, &dl, &ul, &tg)
}
