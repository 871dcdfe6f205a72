//! Reproducible simulation scenarios: geometry, steering vectors, Rician
//! channels, and target ground truth.
//!
//! A scenario holds everything a solver run needs: the channel matrix from the
//! base station to each surface, the channel vector from each surface to each
//! of its users, and the target parameters (direction of arrival plus complex
//! reflection coefficient for point targets, a full response matrix for
//! extended targets). Regeneration with the same seed is bit-identical.

use crate::linalg::{c64, CMat, CVec, C64};
use crate::rng::{self, complex_gaussian};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Bumped whenever the scenario file layout changes.
pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("target {index} direction {theta_deg:.2} deg is outside the identifiable cone (|angle| <= {limit_deg} deg)")]
    EndfireDoa {
        index: usize,
        theta_deg: f64,
        limit_deg: f64,
    },
    #[error("scenario file schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// All scalar dimensions and physical constants of the system.
///
/// Defaults reproduce the reference simulation setting: carrier 6 GHz,
/// half-wavelength element spacing, 1 MHz bandwidth with -174 dBm/Hz noise,
/// Rician factor 5 dB, dwell of 100 symbols, 40 W power budget, and a 10 dB
/// SINR requirement per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// M: antennas at the base station.
    pub num_bs_antennas: usize,
    /// N: reflecting elements per IRS.
    pub num_irs_elements: usize,
    /// Ns: sensing elements per IRS.
    pub num_irs_sensors: usize,
    /// L: number of IRSs.
    pub num_irs: usize,
    /// K: users served per IRS.
    pub users_per_irs: usize,
    /// T: dwell time in symbols.
    pub dwell_symbols: usize,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Spacing of the reflecting elements in meters.
    pub reflect_spacing: f64,
    /// Spacing of the sensing elements in meters.
    pub sensor_spacing: f64,
    /// Noise power at each user receiver, watts.
    pub comm_noise_power: f64,
    /// Noise power at each sensor element, watts.
    pub sense_noise_power: f64,
    /// Total transmit power budget at the base station, watts.
    pub max_power: f64,
    /// Per-user SINR requirement, linear ratio.
    pub sinr_threshold: f64,
    /// Rician factor, linear ratio.
    pub rician_kappa: f64,
    /// Master seed for every random stream derived from this scenario.
    pub rng_seed: u64,
    /// Reference path loss at 1 m, dB (negative).
    pub pathloss_ref_db: f64,
    /// Path-loss exponent of the BS-IRS links.
    pub pathloss_exp_bs_irs: f64,
    /// Path-loss exponent of the IRS-user links.
    pub pathloss_exp_irs_cu: f64,
    /// Radar cross-section of each target, square meters.
    pub target_rcs: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let wavelength = SPEED_OF_LIGHT / 6.0e9;
        // -174 dBm/Hz over 1 MHz
        let noise = db_to_linear(-174.0 + 60.0 - 30.0);
        Self {
            num_bs_antennas: 8,
            num_irs_elements: 8,
            num_irs_sensors: 8,
            num_irs: 2,
            users_per_irs: 2,
            dwell_symbols: 100,
            wavelength,
            reflect_spacing: wavelength / 2.0,
            sensor_spacing: wavelength / 2.0,
            comm_noise_power: noise,
            sense_noise_power: noise,
            max_power: 40.0,
            sinr_threshold: db_to_linear(10.0),
            rician_kappa: db_to_linear(5.0),
            rng_seed: 42,
            pathloss_ref_db: -30.0,
            pathloss_exp_bs_irs: 2.2,
            pathloss_exp_irs_cu: 2.8,
            target_rcs: 1.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let dims = [
            ("num_bs_antennas", self.num_bs_antennas),
            ("num_irs_elements", self.num_irs_elements),
            ("num_irs_sensors", self.num_irs_sensors),
            ("num_irs", self.num_irs),
            ("users_per_irs", self.users_per_irs),
            ("dwell_symbols", self.dwell_symbols),
        ];
        for (name, v) in dims {
            if v < 1 {
                return Err(ScenarioError::BadParameter(format!("{name} must be >= 1")));
            }
        }
        let pos = [
            ("wavelength", self.wavelength),
            ("reflect_spacing", self.reflect_spacing),
            ("sensor_spacing", self.sensor_spacing),
            ("comm_noise_power", self.comm_noise_power),
            ("sense_noise_power", self.sense_noise_power),
            ("max_power", self.max_power),
            ("target_rcs", self.target_rcs),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ScenarioError::BadParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.sinr_threshold >= 0.0) {
            return Err(ScenarioError::BadParameter(format!(
                "sinr_threshold must be >= 0, got {}",
                self.sinr_threshold
            )));
        }
        if !(self.rician_kappa >= 0.0) {
            return Err(ScenarioError::BadParameter(format!(
                "rician_kappa must be >= 0, got {}",
                self.rician_kappa
            )));
        }
        Ok(())
    }

    /// Path-loss amplitude (linear field gain) at the given distance.
    pub fn pathloss_amplitude(&self, dist_m: f64, exponent: f64) -> f64 {
        let pl = db_to_linear(self.pathloss_ref_db) * dist_m.powf(-exponent);
        pl.sqrt()
    }

    /// |beta|^2 from the radar range equation at the given one-way distance.
    pub fn target_gain(&self, dist_m: f64) -> f64 {
        self.wavelength * self.wavelength * self.target_rcs
            / ((4.0 * std::f64::consts::PI).powi(3) * dist_m.powi(4))
    }
}

/// Node placement. Every array stores a broadside unit vector so the
/// direction conventions survive serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub bs_position: [f64; 2],
    pub bs_broadside: [f64; 2],
    pub irs_positions: Vec<[f64; 2]>,
    pub irs_broadsides: Vec<[f64; 2]>,
    /// `cu_positions[l][k]` is user k served by IRS l.
    pub cu_positions: Vec<Vec<[f64; 2]>>,
    pub target_positions: Vec<[f64; 2]>,
}

impl Topology {
    /// Reference layout: BS at the origin, two IRSs at (-30, 30) and (30, 30),
    /// users on the y = 25 line, targets at (-35, 22) and (35, 27). All ULAs
    /// face their service area.
    pub fn two_irs_default() -> Self {
        Self {
            bs_position: [0.0, 0.0],
            bs_broadside: [0.0, 1.0],
            irs_positions: vec![[-30.0, 30.0], [30.0, 30.0]],
            irs_broadsides: vec![[0.0, -1.0], [0.0, -1.0]],
            cu_positions: vec![
                vec![[-40.0, 25.0], [-30.0, 25.0]],
                vec![[30.0, 25.0], [40.0, 25.0]],
            ],
            target_positions: vec![[-35.0, 22.0], [35.0, 27.0]],
        }
    }

    /// Single IRS with one user, for minimal setups.
    pub fn single_irs(k: usize) -> Self {
        let cus = (0..k)
            .map(|i| [-40.0 + 5.0 * i as f64, 25.0])
            .collect::<Vec<_>>();
        Self {
            bs_position: [0.0, 0.0],
            bs_broadside: [0.0, 1.0],
            irs_positions: vec![[-30.0, 30.0]],
            irs_broadsides: vec![[0.0, -1.0]],
            cu_positions: vec![cus],
            target_positions: vec![[-35.0, 22.0]],
        }
    }

    pub fn validate(&self, config: &SystemConfig) -> Result<(), ScenarioError> {
        let l = config.num_irs;
        let k = config.users_per_irs;
        if self.irs_positions.len() != l
            || self.irs_broadsides.len() != l
            || self.cu_positions.len() != l
            || self.target_positions.len() != l
        {
            return Err(ScenarioError::DimensionMismatch(format!(
                "topology has {} IRS entries, config expects {}",
                self.irs_positions.len(),
                l
            )));
        }
        for (i, cus) in self.cu_positions.iter().enumerate() {
            if cus.len() != k {
                return Err(ScenarioError::DimensionMismatch(format!(
                    "IRS {i} has {} users, config expects {k}",
                    cus.len()
                )));
            }
        }
        for b in std::iter::once(&self.bs_broadside).chain(self.irs_broadsides.iter()) {
            let norm = (b[0] * b[0] + b[1] * b[1]).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(ScenarioError::BadParameter(format!(
                    "broadside vector [{}, {}] is not unit length",
                    b[0], b[1]
                )));
            }
        }
        Ok(())
    }
}

/// Steering vector of a ULA: element n carries phase 2π·spacing·n·sin(angle)/λ.
pub fn steering_vector(angle: f64, count: usize, spacing: f64, wavelength: f64) -> CVec {
    debug_assert!(wavelength > 0.0 && spacing > 0.0);
    let step = 2.0 * std::f64::consts::PI * spacing * angle.sin() / wavelength;
    CVec::from_fn(count, |n, _| C64::from_polar(1.0, step * n as f64))
}

/// Angle of `to` seen from an array at `from` with the given broadside unit
/// vector, measured from broadside. Lies in (-π/2, π/2) when the point is in
/// front of the array; only sin(angle) enters steering vectors, so the value
/// is also usable for nodes behind the panel.
pub fn los_angle(from: [f64; 2], to: [f64; 2], broadside: [f64; 2]) -> Result<f64, ScenarioError> {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    let dist = (dx * dx + dy * dy).sqrt();
    if dist < 1e-9 {
        return Err(ScenarioError::DegenerateGeometry(format!(
            "coincident positions ({}, {}) and ({}, {})",
            from[0], from[1], to[0], to[1]
        )));
    }
    let ux = dx / dist;
    let uy = dy / dist;
    let along = ux * broadside[1] - uy * broadside[0];
    let toward = ux * broadside[0] + uy * broadside[1];
    Ok(along.atan2(toward))
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Rician fade around a line-of-sight component.
///
/// The LoS input already carries the path-loss amplitude; the scattered part
/// is drawn i.i.d. CN(0, 1) per entry and scaled to the same amplitude, so
/// E[||H||_F^2] equals ||LoS||_F^2 for every kappa.
pub fn rician_channel<R: Rng + ?Sized>(
    los: &CMat,
    kappa: f64,
    rng: &mut R,
) -> Result<CMat, ScenarioError> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(ScenarioError::BadParameter(format!(
            "rician kappa must be finite and >= 0, got {kappa}"
        )));
    }
    let (nr, nc) = los.shape();
    let amp = los.norm() / ((nr * nc) as f64).sqrt();
    let mut nlos = CMat::zeros(nr, nc);
    // column-major draw order, fixed for reproducibility
    for c in 0..nc {
        for r in 0..nr {
            nlos[(r, c)] = complex_gaussian(rng) * amp;
        }
    }
    let w_los = (kappa / (1.0 + kappa)).sqrt();
    let w_nlos = (1.0 / (1.0 + kappa)).sqrt();
    Ok(los.scale(w_los) + nlos.scale(w_nlos))
}

/// A fully generated scenario; pure data, safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SystemConfig,
    pub topology: Topology,
    /// G_l, N x M channel from the BS to IRS l.
    pub bs_irs_channels: Vec<CMat>,
    /// h_{l,k}, length-N channel from IRS l to its user k.
    pub irs_cu_channels: Vec<Vec<CVec>>,
    /// True direction of arrival of target l at IRS l, radians.
    pub target_doa: Vec<f64>,
    /// True complex reflection coefficient of target l.
    pub target_coeff: Vec<C64>,
    /// Ground-truth Ns x N response matrix of target l (extended model).
    pub extended_response: Vec<CMat>,
}

/// Directions with |angle| above this limit are rejected at build time: the
/// 1/cos²(angle) factor in the direction CRB diverges toward endfire.
pub const DOA_LIMIT_DEG: f64 = 89.0;

pub fn build_scenario(config: &SystemConfig, topology: &Topology) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    topology.validate(config)?;
    let m = config.num_bs_antennas;
    let n = config.num_irs_elements;
    let ns = config.num_irs_sensors;
    let nl = config.num_irs;
    let k = config.users_per_irs;
    let lam = config.wavelength;
    let bs_spacing = lam / 2.0;
    let seed = config.rng_seed;

    let mut gs = Vec::with_capacity(nl);
    let mut hs = Vec::with_capacity(nl);
    let mut thetas = Vec::with_capacity(nl);
    let mut betas = Vec::with_capacity(nl);
    let mut exts = Vec::with_capacity(nl);

    for l in 0..nl {
        let irs = topology.irs_positions[l];
        let irs_b = topology.irs_broadsides[l];

        // BS -> IRS channel
        let d_gl = distance(topology.bs_position, irs);
        let amp_g = config.pathloss_amplitude(d_gl, config.pathloss_exp_bs_irs);
        let aod = los_angle(topology.bs_position, irs, topology.bs_broadside)?;
        let aoa = los_angle(irs, topology.bs_position, irs_b)?;
        let a_rx = steering_vector(aoa, n, config.reflect_spacing, lam);
        let a_tx = steering_vector(aod, m, bs_spacing, lam);
        let los_g = (&a_rx * a_tx.adjoint()).scale(amp_g);
        let g = rician_channel(&los_g, config.rician_kappa, &mut rng::stream(seed, "chan.g", l as u64, 0))?;
        gs.push(g);

        // IRS -> user channels
        let mut row = Vec::with_capacity(k);
        for ki in 0..k {
            let cu = topology.cu_positions[l][ki];
            let d_h = distance(irs, cu);
            let amp_h = config.pathloss_amplitude(d_h, config.pathloss_exp_irs_cu);
            let ang = los_angle(irs, cu, irs_b)?;
            let los_h = CMat::from_fn(n, 1, |r, _| {
                steering_vector(ang, n, config.reflect_spacing, lam)[r] * amp_h
            });
            let hch = rician_channel(
                &los_h,
                config.rician_kappa,
                &mut rng::stream(seed, "chan.h", l as u64, ki as u64),
            )?;
            row.push(CVec::from_fn(n, |r, _| hch[(r, 0)]));
        }
        hs.push(row);

        // target ground truth
        let tgt = topology.target_positions[l];
        let theta = los_angle(irs, tgt, irs_b)?;
        let limit = DOA_LIMIT_DEG.to_radians();
        if theta.abs() > limit {
            return Err(ScenarioError::EndfireDoa {
                index: l,
                theta_deg: theta.to_degrees(),
                limit_deg: DOA_LIMIT_DEG,
            });
        }
        thetas.push(theta);

        let d_t = distance(irs, tgt);
        let beta_amp = config.target_gain(d_t).sqrt();
        let mut beta_rng = rng::stream(seed, "target.beta", l as u64, 0);
        let phase = rng::uniform_phase(&mut beta_rng);
        betas.push(C64::from_polar(beta_amp, phase));

        let mut ext_rng = rng::stream(seed, "target.ext", l as u64, 0);
        let mut ext = CMat::zeros(ns, n);
        for c in 0..n {
            for r in 0..ns {
                ext[(r, c)] = complex_gaussian(&mut ext_rng) * beta_amp;
            }
        }
        exts.push(ext);
    }

    let scenario = Scenario {
        config: config.clone(),
        topology: topology.clone(),
        bs_irs_channels: gs,
        irs_cu_channels: hs,
        target_doa: thetas,
        target_coeff: betas,
        extended_response: exts,
    };
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn num_bs_antennas(&self) -> usize {
        self.config.num_bs_antennas
    }
    pub fn num_irs_elements(&self) -> usize {
        self.config.num_irs_elements
    }
    pub fn num_irs_sensors(&self) -> usize {
        self.config.num_irs_sensors
    }
    pub fn num_irs(&self) -> usize {
        self.config.num_irs
    }
    pub fn users_per_irs(&self) -> usize {
        self.config.users_per_irs
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.config.validate()?;
        let (m, n, ns, nl, k) = (
            self.config.num_bs_antennas,
            self.config.num_irs_elements,
            self.config.num_irs_sensors,
            self.config.num_irs,
            self.config.users_per_irs,
        );
        if self.bs_irs_channels.len() != nl
            || self.irs_cu_channels.len() != nl
            || self.target_doa.len() != nl
            || self.target_coeff.len() != nl
        {
            return Err(ScenarioError::DimensionMismatch(
                "per-IRS arrays do not match num_irs".into(),
            ));
        }
        for (l, g) in self.bs_irs_channels.iter().enumerate() {
            if g.shape() != (n, m) {
                return Err(ScenarioError::DimensionMismatch(format!(
                    "G_{l} has shape {:?}, expected ({n}, {m})",
                    g.shape()
                )));
            }
            if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(ScenarioError::BadParameter(format!("G_{l} has non-finite entries")));
            }
        }
        for (l, row) in self.irs_cu_channels.iter().enumerate() {
            if row.len() != k {
                return Err(ScenarioError::DimensionMismatch(format!(
                    "IRS {l} has {} user channels, expected {k}",
                    row.len()
                )));
            }
            for h in row {
                if h.len() != n {
                    return Err(ScenarioError::DimensionMismatch(format!(
                        "h at IRS {l} has length {}, expected {n}",
                        h.len()
                    )));
                }
            }
        }
        for e in &self.extended_response {
            if e.shape() != (ns, n) {
                return Err(ScenarioError::DimensionMismatch(format!(
                    "extended response has shape {:?}, expected ({ns}, {n})",
                    e.shape()
                )));
            }
        }
        let limit = DOA_LIMIT_DEG.to_radians();
        for (l, th) in self.target_doa.iter().enumerate() {
            if th.abs() > limit {
                return Err(ScenarioError::EndfireDoa {
                    index: l,
                    theta_deg: th.to_degrees(),
                    limit_deg: DOA_LIMIT_DEG,
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ScenarioError> {
        let file = ScenarioFile::from_scenario(self);
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        file.into_scenario()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

// ---------------------------------------------------------------------------
// file layout: complex numbers as [re, im] pairs, matrices column-major

#[derive(Serialize, Deserialize)]
pub(crate) struct MatRepr {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl MatRepr {
    pub(crate) fn from_mat(m: &CMat) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
    pub(crate) fn from_vec(v: &CVec) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
    pub(crate) fn to_mat(&self) -> Result<CMat, ScenarioError> {
        if self.data.len() != self.rows * self.cols {
            return Err(ScenarioError::DimensionMismatch(format!(
                "matrix payload {} entries, header {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(CMat::from_iterator(
            self.rows,
            self.cols,
            self.data.iter().map(|p| c64(p[0], p[1])),
        ))
    }
    pub(crate) fn to_cvec(&self) -> Result<CVec, ScenarioError> {
        let m = self.to_mat()?;
        if m.ncols() != 1 {
            return Err(ScenarioError::DimensionMismatch("expected a column vector".into()));
        }
        Ok(CVec::from_iterator(m.nrows(), m.iter().copied()))
    }
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    version: u32,
    config: SystemConfig,
    topology: Topology,
    bs_irs_channels: Vec<MatRepr>,
    irs_cu_channels: Vec<Vec<MatRepr>>,
    target_doa: Vec<f64>,
    target_coeff: Vec<[f64; 2]>,
    extended_response: Vec<MatRepr>,
}

impl ScenarioFile {
    fn from_scenario(s: &Scenario) -> Self {
        Self {
            version: SCENARIO_SCHEMA_VERSION,
            config: s.config.clone(),
            topology: s.topology.clone(),
            bs_irs_channels: s.bs_irs_channels.iter().map(MatRepr::from_mat).collect(),
            irs_cu_channels: s
                .irs_cu_channels
                .iter()
                .map(|row| row.iter().map(MatRepr::from_vec).collect())
                .collect(),
            target_doa: s.target_doa.clone(),
            target_coeff: s.target_coeff.iter().map(|z| [z.re, z.im]).collect(),
            extended_response: s.extended_response.iter().map(MatRepr::from_mat).collect(),
        }
    }

    fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        if self.version != SCENARIO_SCHEMA_VERSION {
            return Err(ScenarioError::SchemaVersion {
                found: self.version,
                expected: SCENARIO_SCHEMA_VERSION,
            });
        }
        let s = Scenario {
            config: self.config,
            topology: self.topology,
            bs_irs_channels: self
                .bs_irs_channels
                .iter()
                .map(MatRepr::to_mat)
                .collect::<Result<_, _>>()?,
            irs_cu_channels: self
                .irs_cu_channels
                .iter()
                .map(|row| row.iter().map(MatRepr::to_cvec).collect::<Result<_, _>>())
                .collect::<Result<_, _>>()?,
            target_doa: self.target_doa,
            target_coeff: self.target_coeff.iter().map(|p| c64(p[0], p[1])).collect(),
            extended_response: self
                .extended_response
                .iter()
                .map(MatRepr::to_mat)
                .collect::<Result<_, _>>()?,
        };
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_entry;
    use proptest::prelude::*;

    #[test]
    fn steering_at_broadside_is_all_ones() {
        let v = steering_vector(0.0, 4, 0.025, 0.05);
        for z in v.iter() {
            assert!((z - c64(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn steering_single_element_is_one() {
        let v = steering_vector(1.1, 1, 0.025, 0.05);
        assert_eq!(v.len(), 1);
        assert!((v[0] - c64(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn steering_quarter_turn_steps() {
        // spacing λ/2, angle π/6: phase step = 2π·(1/2)·sin(π/6) = π/2
        let lam = 0.05;
        let v = steering_vector(std::f64::consts::FRAC_PI_6, 4, lam / 2.0, lam);
        let expect = [c64(1.0, 0.0), c64(0.0, 1.0), c64(-1.0, 0.0), c64(0.0, -1.0)];
        for (z, e) in v.iter().zip(expect.iter()) {
            assert!((z - e).norm() < 1e-12, "got {z}, want {e}");
        }
    }

    #[test]
    fn los_angle_examples() {
        let up = [0.0, 1.0];
        assert!(los_angle([0.0, 0.0], [0.0, 10.0], up).unwrap().abs() < 1e-15);
        let a = los_angle([0.0, 0.0], [10.0, 10.0], up).unwrap();
        assert!((a - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn los_angle_matches_inverse_trig_oracle() {
        // IRS at (-30, 30) facing -y, target at (-35, 22):
        // offset (-5, -8); component along the array axis is +5, toward broadside +8.
        let got = los_angle([-30.0, 30.0], [-35.0, 22.0], [0.0, -1.0]).unwrap();
        let want = (5.0f64).atan2(8.0);
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn los_angle_rejects_coincident_points() {
        assert!(matches!(
            los_angle([1.0, 2.0], [1.0, 2.0], [0.0, 1.0]),
            Err(ScenarioError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn rician_kappa_infinite_limit_is_los() {
        let los = CMat::from_fn(3, 2, |r, c| C64::from_polar(0.7, 0.3 * (r + 2 * c) as f64));
        let mut rng = rng::stream(1, "t", 0, 0);
        let h = rician_channel(&los, 1e12, &mut rng).unwrap();
        assert!(max_abs_entry(&(h - los)) < 1e-5);
    }

    #[test]
    fn rician_rejects_negative_kappa() {
        let los = CMat::zeros(2, 2);
        let mut rng = rng::stream(1, "t", 0, 0);
        assert!(rician_channel(&los, -0.5, &mut rng).is_err());
    }

    #[test]
    fn rayleigh_second_moment_matches_pathloss_power() {
        // kappa = 0: per-entry power should equal the path-loss power within 2%
        let amp = 3.2e-3;
        let los = CMat::from_fn(10, 10, |r, c| C64::from_polar(amp, 0.1 * (r * 10 + c) as f64));
        let mut rng = rng::stream(5, "t", 0, 0);
        let draws = 1000; // 100k entries total
        let mut acc = 0.0;
        for _ in 0..draws {
            let h = rician_channel(&los, 0.0, &mut rng).unwrap();
            acc += h.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let mean = acc / (draws * 100) as f64;
        let rel = (mean - amp * amp).abs() / (amp * amp);
        assert!(rel < 0.02, "relative error {rel}");
    }

    #[test]
    fn rician_los_power_fraction() {
        // kappa = 5 dB: the coherent (mean) component carries
        // kappa/(1+kappa) ≈ 0.760 of the power.
        let kappa = db_to_linear(5.0);
        let los = CMat::from_fn(4, 4, |r, c| C64::from_polar(1.0, 0.2 * (r * 4 + c) as f64));
        let mut rng = rng::stream(9, "t", 0, 0);
        let draws = 20_000;
        let mut mean = CMat::zeros(4, 4);
        let mut tot_pow = 0.0;
        for _ in 0..draws {
            let h = rician_channel(&los, kappa, &mut rng).unwrap();
            tot_pow += h.norm().powi(2);
            mean += h;
        }
        mean /= c64(draws as f64, 0.0);
        let frac = mean.norm().powi(2) / (tot_pow / draws as f64);
        let want = kappa / (1.0 + kappa);
        assert!((frac - want).abs() < 0.01, "fraction {frac}, want {want}");
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = SystemConfig {
            rng_seed: 42,
            ..SystemConfig::default()
        };
        let topo = Topology::two_irs_default();
        let a = build_scenario(&cfg, &topo).unwrap();
        let b = build_scenario(&cfg, &topo).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn minimal_single_irs_scenario() {
        let cfg = SystemConfig {
            num_irs: 1,
            users_per_irs: 1,
            num_bs_antennas: 2,
            num_irs_elements: 2,
            num_irs_sensors: 2,
            ..SystemConfig::default()
        };
        let s = build_scenario(&cfg, &Topology::single_irs(1)).unwrap();
        assert_eq!(s.bs_irs_channels.len(), 1);
        assert_eq!(s.irs_cu_channels[0].len(), 1);
        assert_eq!(s.target_doa.len(), 1);
    }

    #[test]
    fn default_doa_matches_geometry_oracle() {
        let s = build_scenario(&SystemConfig::default(), &Topology::two_irs_default()).unwrap();
        let want = los_angle([-30.0, 30.0], [-35.0, 22.0], [0.0, -1.0]).unwrap();
        assert!((s.target_doa[0] - want).abs() < 1e-15);
    }

    #[test]
    fn topology_mismatch_is_rejected() {
        let cfg = SystemConfig {
            num_irs: 1,
            ..SystemConfig::default()
        };
        assert!(matches!(
            build_scenario(&cfg, &Topology::two_irs_default()),
            Err(ScenarioError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let cfg = SystemConfig {
            num_bs_antennas: 3,
            num_irs_elements: 3,
            num_irs_sensors: 2,
            ..SystemConfig::default()
        };
        let s = build_scenario(&cfg, &Topology::two_irs_default()).unwrap();
        let text = s.to_json().unwrap();
        assert!(text.contains("\"version\": 1"));
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(s, back);
    }

    proptest! {
        #[test]
        fn steering_conjugate_symmetry(angle in -1.4f64..1.4, count in 1usize..12) {
            let lam = 0.05;
            let v_pos = steering_vector(angle, count, lam / 2.0, lam);
            let v_neg = steering_vector(-angle, count, lam / 2.0, lam);
            for (a, b) in v_pos.iter().zip(v_neg.iter()) {
                prop_assert!((a - b.conj()).norm() < 1e-12);
            }
        }
    }
}
