//! Network geometry, antenna arrays and the AP duplex assignment.
//!
//! A [`Scenario`] is built deterministically from a [`SystemConfig`]: the AP
//! layout follows [`ApPlacement`], and UEs and targets are drawn uniformly in
//! the square service area from a ChaCha stream seeded by `rng_seed`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CVec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Direction of `other` seen from `self`, in radians.
    pub fn bearing_to(&self, other: &Position) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

/// Element positions are local coordinates relative to the AP center.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaArray {
    element_positions: Vec<Position>,
    wavelength: f64,
}

impl AntennaArray {
    pub fn new(element_positions: Vec<Position>, wavelength: f64) -> Result<Self> {
        if element_positions.is_empty() {
            return Err(Error::InvalidArgument("antenna array needs at least one element".into()));
        }
        if !(wavelength > 0.0) || !wavelength.is_finite() {
            return Err(Error::InvalidArgument("wavelength must be positive".into()));
        }
        for (i, p) in element_positions.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::InvalidArgument(format!("element {i} has a non-finite position")));
            }
            if element_positions[..i].iter().any(|q| q.distance(p) == 0.0) {
                return Err(Error::InvalidArgument(format!("element {i} duplicates an earlier element")));
            }
        }
        Ok(Self {
            element_positions,
            wavelength,
        })
    }

    /// Half-wavelength uniform linear array along x, centered on the AP.
    pub fn centered_ula(n: usize, wavelength: f64) -> Result<Self> {
        let spacing = wavelength / 2.0;
        let offset = (n as f64 - 1.0) / 2.0;
        let elements = (0..n)
            .map(|i| Position::new((i as f64 - offset) * spacing, 0.0))
            .collect();
        Self::new(elements, wavelength)
    }

    /// Half-wavelength uniform linear array along x with its first element at the origin.
    pub fn origin_ula(n: usize, wavelength: f64) -> Result<Self> {
        let spacing = wavelength / 2.0;
        let elements = (0..n).map(|i| Position::new(i as f64 * spacing, 0.0)).collect();
        Self::new(elements, wavelength)
    }

    pub fn len(&self) -> usize {
        self.element_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.element_positions.is_empty()
    }

    pub fn elements(&self) -> &[Position] {
        &self.element_positions
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }
}

/// `exp(j 2π kᵀp_i / λ)` with wave vector `k = [cos θ, sin θ]`.
pub fn steering_vector(array: &AntennaArray, angle: f64) -> CVec {
    let (s, c) = angle.sin_cos();
    let scale = 2.0 * PI / array.wavelength;
    CVec::from_iterator(
        array.len(),
        array
            .elements()
            .iter()
            .map(|p| Complex64::from_polar(1.0, scale * (c * p.x + s * p.y))),
    )
}

/// Derivative of [`steering_vector`] with respect to the angle.
pub fn steering_derivative(array: &AntennaArray, angle: f64) -> CVec {
    let (s, c) = angle.sin_cos();
    let scale = 2.0 * PI / array.wavelength;
    CVec::from_iterator(
        array.len(),
        array.elements().iter().map(|p| {
            let phase = scale * (c * p.x + s * p.y);
            let slope = scale * (p.y * c - p.x * s);
            Complex64::new(0.0, slope) * Complex64::from_polar(1.0, phase)
        }),
    )
}

/// Large-scale amplitude decay `d^{-α}`.
pub fn path_gain(distance: f64, alpha: f64) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::Domain(format!("path gain needs a positive distance, got {distance}")));
    }
    Ok(distance.powf(-alpha))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApNode {
    pub id: usize,
    pub center: Position,
    pub array: AntennaArray,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkDirection {
    Downlink,
    Uplink,
}

impl LinkDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            LinkDirection::Downlink => "dl",
            LinkDirection::Uplink => "ul",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeNode {
    pub id: usize,
    pub position: Position,
    pub direction: LinkDirection,
}

/// Gain uncertainties are relative variances: the variance added to the mean
/// power gain `d̄^{-2α}` of a target link is `gain_uncertainty · d̄^{-2α}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetNode {
    pub id: usize,
    pub position: Position,
    pub reflection_coefficient: f64,
    pub gain_uncertainty_ap: f64,
    pub gain_uncertainty_ue: f64,
    pub steering_perturbation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApPlacement {
    /// Equally spaced on a circle centered in the service area.
    Circle,
    /// Uniformly random in the square service area.
    Uniform,
}

/// How the target reflection coefficient enters the sensing power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetPowerFactor {
    /// `α_t²`, the power of an amplitude coefficient.
    Squared,
    /// `α_t` as printed in the CRLB expressions.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_dl_ues: usize,
    pub num_ul_ues: usize,
    pub num_targets: usize,
    /// Side of the square service area, meters.
    pub area_side: f64,
    pub ap_placement: ApPlacement,
    pub circle_radius: f64,
    /// Minimum separation between any two nodes, meters.
    pub min_separation: f64,
    pub path_loss_exponent: f64,
    pub p_ul: f64,
    pub p_dl: f64,
    pub p_s: f64,
    pub pilot_power: f64,
    pub tau: usize,
    pub tau_up: usize,
    pub tau_dp: usize,
    /// Signal bandwidth, Hz.
    pub bandwidth: f64,
    pub wavelength: f64,
    pub noise_dl: f64,
    pub noise_ul: f64,
    pub noise_s: f64,
    /// Prior location uncertainty, m².
    pub sigma_loc_sq: f64,
    pub reflection_coefficient: f64,
    pub gain_uncertainty_ap: f64,
    pub gain_uncertainty_ue: f64,
    pub steering_perturbation: f64,
    pub target_power_factor: TargetPowerFactor,
    pub rng_seed: u64,
}

pub fn dbw_to_watts(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_aps: 8,
            antennas_per_ap: 20,
            num_dl_ues: 4,
            num_ul_ues: 4,
            num_targets: 2,
            area_side: 300.0,
            ap_placement: ApPlacement::Circle,
            circle_radius: 200.0,
            min_separation: 1.0,
            path_loss_exponent: 3.7,
            p_ul: 0.1,
            p_dl: 0.5,
            p_s: 0.5,
            pilot_power: 0.1,
            tau: 100,
            tau_up: 10,
            tau_dp: 10,
            bandwidth: 10e6,
            wavelength: 0.1,
            noise_dl: dbw_to_watts(-113.0),
            noise_ul: dbw_to_watts(-113.0),
            noise_s: dbw_to_watts(-113.0),
            sigma_loc_sq: 1.0,
            reflection_coefficient: 0.8,
            gain_uncertainty_ap: 0.01,
            gain_uncertainty_ue: 0.01,
            steering_perturbation: 0.01,
            target_power_factor: TargetPowerFactor::Squared,
            rng_seed: 0,
        }
    }
}

fn positive(field: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite (got {value})")))
    }
}

fn non_negative(field: &str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be non-negative (got {value})")))
    }
}

impl SystemConfig {
    pub fn num_ues(&self) -> usize {
        self.num_dl_ues + self.num_ul_ues
    }

    /// Share of the coherence block left for data, `1 − (τ_dp + τ_up)/τ`.
    pub fn data_fraction(&self) -> f64 {
        1.0 - (self.tau_dp + self.tau_up) as f64 / self.tau as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_aps == 0 {
            return Err(Error::config("num_aps", "must be at least 1"));
        }
        if self.num_aps > 64 {
            return Err(Error::config("num_aps", "must not exceed 64"));
        }
        if self.antennas_per_ap == 0 {
            return Err(Error::config("antennas_per_ap", "must be at least 1"));
        }
        positive("area_side", self.area_side)?;
        positive("circle_radius", self.circle_radius)?;
        non_negative("min_separation", self.min_separation)?;
        if !(self.path_loss_exponent > 2.0) || !self.path_loss_exponent.is_finite() {
            return Err(Error::config("path_loss_exponent", "must exceed 2"));
        }
        positive("p_ul", self.p_ul)?;
        positive("p_dl", self.p_dl)?;
        positive("p_s", self.p_s)?;
        positive("pilot_power", self.pilot_power)?;
        if self.tau_up == 0 {
            return Err(Error::config("tau_up", "must be at least 1"));
        }
        if self.tau_dp == 0 {
            return Err(Error::config("tau_dp", "must be at least 1"));
        }
        if self.tau_up + self.tau_dp >= self.tau {
            return Err(Error::config("tau", "must exceed tau_up + tau_dp"));
        }
        positive("bandwidth", self.bandwidth)?;
        positive("wavelength", self.wavelength)?;
        positive("noise_dl", self.noise_dl)?;
        positive("noise_ul", self.noise_ul)?;
        positive("noise_s", self.noise_s)?;
        positive("sigma_loc_sq", self.sigma_loc_sq)?;
        if !(self.reflection_coefficient > 0.0 && self.reflection_coefficient <= 1.0) {
            return Err(Error::config("reflection_coefficient", "must lie in (0, 1]"));
        }
        non_negative("gain_uncertainty_ap", self.gain_uncertainty_ap)?;
        non_negative("gain_uncertainty_ue", self.gain_uncertainty_ue)?;
        non_negative("steering_perturbation", self.steering_perturbation)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SystemConfig,
    pub aps: Vec<ApNode>,
    /// Downlink UEs first, then uplink UEs.
    pub ues: Vec<UeNode>,
    pub targets: Vec<TargetNode>,
    /// Per-UE transmit power (`p_dl,l` or `p_ul,u`), indexed by UE id.
    pub ue_power: Vec<f64>,
    /// Per-target sensing power `p_s,t`.
    pub target_power: Vec<f64>,
}

impl Scenario {
    /// Assemble a scenario from explicit node positions. Arrays are centered ULAs.
    pub fn from_positions(
        config: SystemConfig,
        ap_centers: &[Position],
        dl_ues: &[Position],
        ul_ues: &[Position],
        targets: &[Position],
    ) -> Result<Self> {
        let mut config = config;
        config.num_aps = ap_centers.len();
        config.num_dl_ues = dl_ues.len();
        config.num_ul_ues = ul_ues.len();
        config.num_targets = targets.len();
        config.validate()?;
        let aps = ap_centers
            .iter()
            .enumerate()
            .map(|(id, &center)| {
                Ok(ApNode {
                    id,
                    center,
                    array: AntennaArray::centered_ula(config.antennas_per_ap, config.wavelength)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ues = dl_ues
            .iter()
            .map(|&p| (p, LinkDirection::Downlink))
            .chain(ul_ues.iter().map(|&p| (p, LinkDirection::Uplink)))
            .enumerate()
            .map(|(id, (position, direction))| UeNode {
                id,
                position,
                direction,
            })
            .collect::<Vec<_>>();
        let targets = targets
            .iter()
            .enumerate()
            .map(|(id, &position)| TargetNode {
                id,
                position,
                reflection_coefficient: config.reflection_coefficient,
                gain_uncertainty_ap: config.gain_uncertainty_ap,
                gain_uncertainty_ue: config.gain_uncertainty_ue,
                steering_perturbation: config.steering_perturbation,
            })
            .collect::<Vec<_>>();
        let ue_power = ues
            .iter()
            .map(|ue| match ue.direction {
                LinkDirection::Downlink => config.p_dl,
                LinkDirection::Uplink => config.p_ul,
            })
            .collect();
        let target_power = vec![config.p_s; targets.len()];
        let scenario = Self {
            config,
            aps,
            ues,
            targets,
            ue_power,
            target_power,
        };
        scenario.check_distinct_positions()?;
        Ok(scenario)
    }

    pub fn num_aps(&self) -> usize {
        self.aps.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.config.antennas_per_ap
    }

    pub fn dl_ues(&self) -> impl Iterator<Item = usize> + '_ {
        self.ues
            .iter()
            .filter(|u| u.direction == LinkDirection::Downlink)
            .map(|u| u.id)
    }

    pub fn ul_ues(&self) -> impl Iterator<Item = usize> + '_ {
        self.ues
            .iter()
            .filter(|u| u.direction == LinkDirection::Uplink)
            .map(|u| u.id)
    }

    /// Replace the target set, keeping every other node in place.
    pub fn with_targets(&self, positions: &[Position]) -> Result<Self> {
        let mut next = self.clone();
        next.config.num_targets = positions.len();
        next.targets = positions
            .iter()
            .enumerate()
            .map(|(id, &position)| TargetNode {
                id,
                position,
                reflection_coefficient: self.config.reflection_coefficient,
                gain_uncertainty_ap: self.config.gain_uncertainty_ap,
                gain_uncertainty_ue: self.config.gain_uncertainty_ue,
                steering_perturbation: self.config.steering_perturbation,
            })
            .collect();
        next.target_power = vec![self.config.p_s; positions.len()];
        next.check_distinct_positions()?;
        Ok(next)
    }

    fn all_positions(&self) -> Vec<(String, Position)> {
        let aps = self.aps.iter().map(|a| (format!("AP {}", a.id), a.center));
        let ues = self.ues.iter().map(|u| (format!("UE {}", u.id), u.position));
        let tgs = self.targets.iter().map(|t| (format!("target {}", t.id), t.position));
        aps.chain(ues).chain(tgs).collect()
    }

    fn check_distinct_positions(&self) -> Result<()> {
        let nodes = self.all_positions();
        for (i, (name_a, a)) in nodes.iter().enumerate() {
            for (name_b, b) in &nodes[..i] {
                if a.distance(b) == 0.0 {
                    return Err(Error::Domain(format!("{name_a} coincides with {name_b}")));
                }
            }
        }
        Ok(())
    }
}

fn ap_centers(config: &SystemConfig, rng: &mut ChaCha8Rng) -> Vec<Position> {
    let half = config.area_side / 2.0;
    match config.ap_placement {
        ApPlacement::Circle => (0..config.num_aps)
            .map(|m| {
                let phi = 2.0 * PI * m as f64 / config.num_aps as f64;
                Position::new(half + config.circle_radius * phi.cos(), half + config.circle_radius * phi.sin())
            })
            .collect(),
        ApPlacement::Uniform => (0..config.num_aps)
            .map(|_| uniform_point(config.area_side, rng))
            .collect(),
    }
}

fn uniform_point(side: f64, rng: &mut ChaCha8Rng) -> Position {
    Position::new(rng.random::<f64>() * side, rng.random::<f64>() * side)
}

/// Rejection-sample a point at least `min_separation` away from every placed node.
fn separated_point(config: &SystemConfig, placed: &[Position], rng: &mut ChaCha8Rng) -> Result<Position> {
    const MAX_TRIES: usize = 10_000;
    for _ in 0..MAX_TRIES {
        let p = uniform_point(config.area_side, rng);
        if placed.iter().all(|q| q.distance(&p) >= config.min_separation.max(f64::MIN_POSITIVE)) {
            return Ok(p);
        }
    }
    Err(Error::config(
        "min_separation",
        "cannot be satisfied inside the service area",
    ))
}

/// Deterministic scenario generation from a validated configuration.
pub fn build_scenario(config: &SystemConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let aps = ap_centers(config, &mut rng);
    if config.ap_placement == ApPlacement::Uniform {
        for (i, a) in aps.iter().enumerate() {
            if aps[..i].iter().any(|b| b.distance(a) < config.min_separation.max(f64::MIN_POSITIVE)) {
                return Err(Error::config("min_separation", "violated by AP placement; change rng_seed"));
            }
        }
    }
    let mut placed = aps.clone();
    let mut draw = |count: usize, placed: &mut Vec<Position>| -> Result<Vec<Position>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let p = separated_point(config, placed, &mut rng)?;
            placed.push(p);
            out.push(p);
        }
        Ok(out)
    };
    let dl = draw(config.num_dl_ues, &mut placed)?;
    let ul = draw(config.num_ul_ues, &mut placed)?;
    let targets = draw(config.num_targets, &mut placed)?;
    Scenario::from_positions(config.clone(), &aps, &dl, &ul, &targets)
}

/// DOA `θ_mt` (AP → target) and DOD `φ_tn` (target → AP) tables.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleTables {
    /// `doa[m][t]`
    pub doa: Vec<Vec<f64>>,
    /// `dod[t][n]`
    pub dod: Vec<Vec<f64>>,
}

pub fn angles(scenario: &Scenario) -> Result<AngleTables> {
    let mut doa = vec![vec![0.0; scenario.targets.len()]; scenario.aps.len()];
    let mut dod = vec![vec![0.0; scenario.aps.len()]; scenario.targets.len()];
    for ap in &scenario.aps {
        for tg in &scenario.targets {
            if ap.center.distance(&tg.position) == 0.0 {
                return Err(Error::Domain(format!("AP {} coincides with target {}", ap.id, tg.id)));
            }
            doa[ap.id][tg.id] = ap.center.bearing_to(&tg.position);
            dod[tg.id][ap.id] = tg.position.bearing_to(&ap.center);
        }
    }
    Ok(AngleTables { doa, dod })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DuplexMode {
    Uplink,
    Downlink,
}

/// Binary UL/DL mode per AP. Each AP holds exactly one mode, so
/// `x_u,m + x_d,m = 1` holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DuplexAssignment {
    downlink: Vec<bool>,
}

impl DuplexAssignment {
    pub fn new(downlink: Vec<bool>) -> Self {
        Self { downlink }
    }

    pub fn all_downlink(num_aps: usize) -> Self {
        Self::new(vec![true; num_aps])
    }

    pub fn all_uplink(num_aps: usize) -> Self {
        Self::new(vec![false; num_aps])
    }

    /// Bit `m` set means AP `m` transmits downlink.
    pub fn from_bits(bits: u64, num_aps: usize) -> Self {
        Self::new((0..num_aps).map(|m| bits >> m & 1 == 1).collect())
    }

    pub fn to_bits(&self) -> u64 {
        self.downlink
            .iter()
            .enumerate()
            .fold(0u64, |acc, (m, &dl)| acc | (u64::from(dl) << m))
    }

    pub fn num_aps(&self) -> usize {
        self.downlink.len()
    }

    pub fn mode(&self, m: usize) -> DuplexMode {
        if self.downlink[m] {
            DuplexMode::Downlink
        } else {
            DuplexMode::Uplink
        }
    }

    pub fn is_dl(&self, m: usize) -> bool {
        self.downlink[m]
    }

    pub fn is_ul(&self, m: usize) -> bool {
        !self.downlink[m]
    }

    pub fn x_d(&self) -> Vec<u8> {
        self.downlink.iter().map(|&d| u8::from(d)).collect()
    }

    pub fn x_u(&self) -> Vec<u8> {
        self.downlink.iter().map(|&d| u8::from(!d)).collect()
    }

    pub fn dl_aps(&self) -> Vec<usize> {
        (0..self.num_aps()).filter(|&m| self.downlink[m]).collect()
    }

    pub fn ul_aps(&self) -> Vec<usize> {
        (0..self.num_aps()).filter(|&m| !self.downlink[m]).collect()
    }

    pub fn num_dl(&self) -> usize {
        self.downlink.iter().filter(|&&d| d).count()
    }

    /// Switch the mode of AP `m`.
    pub fn flipped(&self, m: usize) -> Self {
        let mut next = self.clone();
        next.downlink[m] = !next.downlink[m];
        next
    }

    /// Mode vector as 0/1 features (1 = DL).
    pub fn as_features(&self) -> Vec<f64> {
        self.downlink.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect()
    }

    /// e.g. `"10110000"`, AP 0 first.
    pub fn bit_string(&self) -> String {
        self.downlink.iter().map(|&d| if d { '1' } else { '0' }).collect()
    }

    /// Inverse of [`bit_string`](Self::bit_string).
    pub fn parse_bit_string(text: &str) -> Result<Self> {
        text.chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::InvalidArgument(format!("assignment bit must be 0 or 1, got `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn hamming_distance(&self, other: &Self) -> usize {
        self.downlink
            .iter()
            .zip(&other.downlink)
            .filter(|(a, b)| a != b)
            .count()
    }
}
