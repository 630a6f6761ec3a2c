//! System geometry, antenna patterns and the deterministic RIS-to-array
//! channel.
//!
//! The layout is two-dimensional: RIS elements sit on the vertical line
//! `x = 0`, the active array on `x = D`, both centered on `y = 0`. The array
//! boresight points toward the RIS (the `-x` direction), and the look angle
//! of a pair is measured from that boresight.

use std::f64::consts::PI;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::RisPhaseConfig;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Element positions and the pairwise distance / look-angle tables.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemGeometry {
    n_active: usize,
    n_ris: usize,
    separation: f64,
    active_spacing: f64,
    ris_spacing: f64,
    wavelength: f64,
    active_positions: Vec<[f64; 2]>,
    ris_positions: Vec<[f64; 2]>,
    /// Row-major `n_active x n_ris`.
    distances: Vec<f64>,
    angles: Vec<f64>,
}

impl SystemGeometry {
    /// Lays out both arrays and tabulates every element pair.
    pub fn build(
        n_active: usize,
        n_ris: usize,
        active_spacing: f64,
        ris_spacing: f64,
        separation: f64,
        wavelength: f64,
    ) -> Result<Self> {
        if n_active == 0 {
            return Err(Error::InvalidGeometry("N_A must be at least 1".into()));
        }
        if n_ris < n_active {
            return Err(Error::InvalidGeometry(format!(
                "the RIS must not be smaller than the active array (N_R = {n_ris}, N_A = {n_active})"
            )));
        }
        for (name, v) in [
            ("d_A", active_spacing),
            ("d_R", ris_spacing),
            ("D", separation),
            ("wavelength", wavelength),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidGeometry(format!("{name} must be positive, got {v}")));
            }
        }

        let centered = |idx: usize, n: usize, spacing: f64| (idx as f64 - (n as f64 - 1.0) / 2.0) * spacing;
        let active_positions: Vec<[f64; 2]> = (0..n_active)
            .map(|i| [separation, centered(i, n_active, active_spacing)])
            .collect();
        let ris_positions: Vec<[f64; 2]> = (0..n_ris)
            .map(|j| [0.0, centered(j, n_ris, ris_spacing)])
            .collect();

        let mut distances = Vec::with_capacity(n_active * n_ris);
        let mut angles = Vec::with_capacity(n_active * n_ris);
        for a in &active_positions {
            for r in &ris_positions {
                let dx = a[0] - r[0];
                let dy = r[1] - a[1];
                distances.push(dx.hypot(dy));
                angles.push(dy.atan2(dx));
            }
        }

        Ok(Self {
            n_active,
            n_ris,
            separation,
            active_spacing,
            ris_spacing,
            wavelength,
            active_positions,
            ris_positions,
            distances,
            angles,
        })
    }

    pub fn n_active(&self) -> usize {
        self.n_active
    }

    pub fn n_ris(&self) -> usize {
        self.n_ris
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn active_spacing(&self) -> f64 {
        self.active_spacing
    }

    pub fn ris_spacing(&self) -> f64 {
        self.ris_spacing
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn active_positions(&self) -> &[[f64; 2]] {
        &self.active_positions
    }

    pub fn ris_positions(&self) -> &[[f64; 2]] {
        &self.ris_positions
    }

    /// Distance (m) between active element `i` and RIS element `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.n_ris + j]
    }

    /// Look angle (rad) of RIS element `j` seen from active element `i`.
    pub fn angle(&self, i: usize, j: usize) -> f64 {
        self.angles[i * self.n_ris + j]
    }

    /// Pairs that violate the per-element far-field condition
    /// `d > 2 max(ΔA², ΔR²) / λ` for element sizes `ΔA`, `ΔR`.
    pub fn far_field_violations(&self, active_size: f64, ris_size: f64) -> Vec<(usize, usize)> {
        let limit = 2.0 * active_size.powi(2).max(ris_size.powi(2)) / self.wavelength;
        let mut out = Vec::new();
        for i in 0..self.n_active {
            for j in 0..self.n_ris {
                if self.distance(i, j) <= limit {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Active-element spacing that makes the union of the directional sectors
/// cover the whole RIS.
pub fn directional_spacing(
    n_active: usize,
    n_ris: usize,
    ris_spacing: f64,
    separation: f64,
    half_angle: f64,
) -> Result<f64> {
    if n_active <= 2 {
        return Err(Error::DegenerateArray(n_active));
    }
    if !(ris_spacing > 0.0 && separation > 0.0 && half_angle > 0.0) {
        return Err(Error::InvalidGeometry(
            "spacing, separation and sector half-angle must be positive".into(),
        ));
    }
    let numerator = (n_ris as f64 - 1.0) * ris_spacing - 2.0 * separation * half_angle.tan();
    if numerator <= 0.0 {
        return Err(Error::SectorCoversRis { numerator });
    }
    Ok(numerator / (n_active as f64 - 2.0))
}

/// Element radiation pattern, stored on the linear scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AntennaPattern {
    Omni {
        gain: f64,
    },
    /// Constant `gain` inside `[-half_angle, half_angle]`, `backlobe` outside.
    Directional {
        gain: f64,
        half_angle: f64,
        backlobe: f64,
    },
}

impl AntennaPattern {
    pub const OMNI_GAIN_DB: f64 = 3.0;

    pub fn omni() -> Self {
        Self::omni_db(Self::OMNI_GAIN_DB)
    }

    pub fn omni_db(gain_db: f64) -> Self {
        AntennaPattern::Omni {
            gain: db_to_linear(gain_db),
        }
    }

    /// `backlobe_db = None` radiates nothing outside the sector.
    pub fn directional_db(gain_db: f64, half_angle: f64, backlobe_db: Option<f64>) -> Result<Self> {
        if !(half_angle > 0.0 && half_angle < PI / 2.0) {
            return Err(Error::Config(format!(
                "sector half-angle must lie in (0, pi/2), got {half_angle}"
            )));
        }
        if !gain_db.is_finite() {
            return Err(Error::Config("directional gain must be finite".into()));
        }
        Ok(AntennaPattern::Directional {
            gain: db_to_linear(gain_db),
            half_angle,
            backlobe: backlobe_db.map_or(0.0, db_to_linear),
        })
    }

    /// Linear power gain at look angle `theta`.
    pub fn gain(&self, theta: f64) -> f64 {
        match *self {
            AntennaPattern::Omni { gain } => gain,
            AntennaPattern::Directional {
                gain,
                half_angle,
                backlobe,
            } => {
                if theta.abs() <= half_angle {
                    gain
                } else {
                    backlobe
                }
            }
        }
    }
}

/// Distance-dependent pathloss `PL = offset + a·log10(d) + b·log10(f[GHz])` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossModel {
    pub offset_db: f64,
    pub distance_coeff: f64,
    pub frequency_coeff: f64,
    pub min_distance_m: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        Self {
            offset_db: 32.4,
            distance_coeff: 21.0,
            frequency_coeff: 20.0,
            min_distance_m: 1.0,
        }
    }
}

impl PathlossModel {
    pub fn pathloss_db(&self, distance_3d: f64, carrier_hz: f64) -> f64 {
        let d = if distance_3d < self.min_distance_m {
            warn!(
                "distance {distance_3d} m below the pathloss minimum, clamped to {} m",
                self.min_distance_m
            );
            self.min_distance_m
        } else {
            distance_3d
        };
        self.offset_db + self.distance_coeff * d.log10() + self.frequency_coeff * (carrier_hz / 1e9).log10()
    }

    /// Large-scale fading coefficient β (linear power gain).
    pub fn beta(&self, distance_3d: f64, carrier_hz: f64) -> f64 {
        db_to_linear(-self.pathloss_db(distance_3d, carrier_hz))
    }
}

/// Propagation and receiver parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModelParams {
    /// RIS reflection efficiency ρ in (0, 1].
    pub reflection_efficiency: f64,
    pub carrier_hz: f64,
    pub pathloss: PathlossModel,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for ChannelModelParams {
    fn default() -> Self {
        Self {
            reflection_efficiency: 1.0,
            carrier_hz: 1.9e9,
            pathloss: PathlossModel::default(),
            noise_psd_dbm_hz: -174.0,
            bandwidth_hz: 20e6,
            noise_figure_db: 5.0,
        }
    }
}

impl ChannelModelParams {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Receiver noise power σ² in watts.
    pub fn noise_power_w(&self) -> f64 {
        let dbm = self.noise_psd_dbm_hz + linear_to_db(self.bandwidth_hz) + self.noise_figure_db;
        db_to_linear(dbm - 30.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reflection_efficiency > 0.0 && self.reflection_efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "reflection efficiency must lie in (0, 1], got {}",
                self.reflection_efficiency
            )));
        }
        if !(self.carrier_hz > 0.0 && self.bandwidth_hz > 0.0) {
            return Err(Error::Config("carrier and bandwidth must be positive".into()));
        }
        if !(self.noise_power_w() > 0.0) {
            return Err(Error::Config("noise power must be positive".into()));
        }
        Ok(())
    }

    pub fn beta(&self, distance_3d: f64) -> f64 {
        self.pathloss.beta(distance_3d, self.carrier_hz)
    }
}

/// Deterministic `N_A x N_R` RIS-to-array channel.
#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    entries: CMat,
    geometry: Arc<SystemGeometry>,
}

impl ChannelMatrix {
    /// Evaluates every entry of the near-field channel
    /// `√(ρ G_A G_R) λ/(4π d) e^{-i 2π d/λ}`.
    pub fn build(
        geometry: Arc<SystemGeometry>,
        array_pattern: &AntennaPattern,
        ris_pattern: &AntennaPattern,
        reflection_efficiency: f64,
    ) -> Result<Self> {
        if !(reflection_efficiency > 0.0 && reflection_efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "reflection efficiency must lie in (0, 1], got {reflection_efficiency}"
            )));
        }
        let lambda = geometry.wavelength();
        let (na, nr) = (geometry.n_active(), geometry.n_ris());
        let mut entries = CMat::zeros(na, nr);
        for i in 0..na {
            for j in 0..nr {
                let d = geometry.distance(i, j);
                if !(d > 0.0) {
                    return Err(Error::InvalidGeometry(format!("zero distance between pair ({i}, {j})")));
                }
                let theta = geometry.angle(i, j);
                let amplitude = (reflection_efficiency * array_pattern.gain(theta) * ris_pattern.gain(theta)).sqrt()
                    * lambda
                    / (4.0 * PI * d);
                entries[(i, j)] = Complex64::from_polar(amplitude, -2.0 * PI * d / lambda);
            }
        }
        Ok(Self { entries, geometry })
    }

    /// Wraps an arbitrary matrix; used by tests and toy instances.
    pub fn from_matrix(entries: CMat, geometry: Arc<SystemGeometry>) -> Result<Self> {
        if entries.nrows() != geometry.n_active() || entries.ncols() != geometry.n_ris() {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, geometry is {}x{}",
                entries.nrows(),
                entries.ncols(),
                geometry.n_active(),
                geometry.n_ris()
            )));
        }
        Ok(Self { entries, geometry })
    }

    pub fn matrix(&self) -> &CMat {
        &self.entries
    }

    pub fn geometry(&self) -> &SystemGeometry {
        &self.geometry
    }

    pub fn n_active(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_ris(&self) -> usize {
        self.entries.ncols()
    }

    /// `H·Φ`, i.e. every column scaled by its RIS phasor.
    pub fn with_phases(&self, phases: &RisPhaseConfig) -> Result<CMat> {
        scale_columns(&self.entries, phases.phasors())
    }
}

pub(crate) fn scale_columns(m: &CMat, diag: &[Complex64]) -> Result<CMat> {
    if m.ncols() != diag.len() {
        return Err(Error::Dimension(format!(
            "matrix has {} columns, diagonal has {} entries",
            m.ncols(),
            diag.len()
        )));
    }
    let mut out = m.clone();
    for (mut col, &p) in out.column_iter_mut().zip(diag) {
        col *= p;
    }
    Ok(out)
}

/// Per-UE state for one fading realization.
#[derive(Debug, Clone)]
pub struct UserLink {
    /// Horizontal position (m) relative to the RIS center.
    pub position: [f64; 2],
    pub beta: f64,
    /// RIS-to-UE small-scale channel, `N_R` entries.
    pub channel: CVec,
    pub pilot: usize,
    /// Uplink training power (W).
    pub eta_ul: f64,
    /// Downlink power coefficient (W).
    pub eta_dl: f64,
}

impl UserLink {
    pub fn new(position: [f64; 2], beta: f64, n_ris: usize, pilot: usize, eta_ul: f64) -> Self {
        Self {
            position,
            beta,
            channel: CVec::zeros(n_ris),
            pilot,
            eta_ul,
            eta_dl: 0.0,
        }
    }

    pub fn redraw<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.channel = draw_small_scale(self.beta, self.channel.len(), rng);
    }
}

/// i.i.d. `CN(0, β)` entries.
pub fn draw_small_scale<R: Rng + ?Sized>(beta: f64, n: usize, rng: &mut R) -> CVec {
    let scale = (beta / 2.0).sqrt();
    CVec::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

/// Composite channel `H Φ h`.
pub fn compose_effective_channel(h_ris: &CMat, phases: &[Complex64], channel: &CVec) -> Result<CVec> {
    if h_ris.ncols() != phases.len() || phases.len() != channel.len() {
        return Err(Error::Dimension(format!(
            "H is {}x{}, Φ has {} entries, h has {}",
            h_ris.nrows(),
            h_ris.ncols(),
            phases.len(),
            channel.len()
        )));
    }
    let reflected = CVec::from_iterator(channel.len(), channel.iter().zip(phases).map(|(h, p)| h * p));
    Ok(h_ris * reflected)
}
