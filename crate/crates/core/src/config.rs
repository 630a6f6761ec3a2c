//! Experiment configuration.
//!
//! Configuration files are TOML with one table per section. Every key is
//! unique across sections, so a key may also be given at the top level (or
//! through a `key=value` override) and is routed to its section. Keys with a
//! physical unit carry it as a suffix (`p_max_dbw`, `noise_figure_db`,
//! `carrier_hz`, ...); a known key with the wrong suffix is reported as a
//! unit error rather than an unknown key. Missing keys take the reference
//! scenario defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::estimation::{EnergyCriterion, TrainingConfigs};
use crate::geometry::{db_to_linear, directional_spacing, AntennaPattern, ChannelModelParams, PathlossModel, SPEED_OF_LIGHT};
use crate::optimizer::Objective;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub n_active: usize,
    pub n_ris: usize,
    /// Array–RIS separation `D` in wavelengths.
    pub separation_wavelengths: f64,
    pub active_spacing_wavelengths: f64,
    pub ris_spacing_wavelengths: f64,
    pub reflection_efficiency: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub noise_figure_db: f64,
    pub bs_height_m: f64,
    pub ue_height_m: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            n_active: 16,
            n_ris: 64,
            separation_wavelengths: 5.0,
            active_spacing_wavelengths: 0.5,
            ris_spacing_wavelengths: 0.5,
            reflection_efficiency: 1.0,
            carrier_hz: 1.9e9,
            bandwidth_hz: 20e6,
            noise_psd_dbm_per_hz: -174.0,
            noise_figure_db: 5.0,
            bs_height_m: 10.0,
            ue_height_m: 1.5,
        }
    }
}

/// Active spacing used with directional elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionalSpacing {
    /// Widen the array so the sectors jointly cover the RIS; falls back to
    /// `active_spacing_wavelengths` when the sector already spans it.
    #[default]
    Sector,
    /// Keep `active_spacing_wavelengths`.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntennaSection {
    pub omni_gain_db: f64,
    pub ris_gain_db: f64,
    pub directional_gain_db: f64,
    pub sector_half_angle_deg: f64,
    /// Gain outside the sector; absent means no radiation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backlobe_db: Option<f64>,
    pub directional_spacing: DirectionalSpacing,
}

impl Default for AntennaSection {
    fn default() -> Self {
        Self {
            omni_gain_db: 3.0,
            ris_gain_db: 3.0,
            directional_gain_db: 10.0,
            sector_half_angle_deg: 60.0,
            backlobe_db: None,
            directional_spacing: DirectionalSpacing::Sector,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathlossSection {
    pub pathloss_offset_db: f64,
    pub pathloss_distance_coeff: f64,
    pub pathloss_frequency_coeff: f64,
    pub pathloss_min_distance_m: f64,
}

impl Default for PathlossSection {
    fn default() -> Self {
        let p = PathlossModel::default();
        Self {
            pathloss_offset_db: p.offset_db,
            pathloss_distance_coeff: p.distance_coeff,
            pathloss_frequency_coeff: p.frequency_coeff,
            pathloss_min_distance_m: p.min_distance_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsersSection {
    pub n_users: usize,
    pub drop_half_angle_deg: f64,
    pub min_distance_m: f64,
    pub max_distance_m: f64,
}

impl Default for UsersSection {
    fn default() -> Self {
        Self {
            n_users: 8,
            drop_half_angle_deg: 60.0,
            min_distance_m: 10.0,
            max_distance_m: 400.0,
        }
    }
}

/// How the pilot overhead enters the imperfect-CSI prelog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrelogAccounting {
    /// `1 − τ_p/τ_c`.
    #[default]
    SinglePilot,
    /// `1 − Q τ_p/τ_c`, counting every training repetition.
    Repetitions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub pilot_length: usize,
    pub coherence_samples: usize,
    pub uplink_power_w: f64,
    pub energy_fraction: f64,
    pub energy_criterion: EnergyCriterion,
    pub phase_bits: u32,
    /// Number of training configurations `Q`; defaults to `⌈N_R/N_A⌉`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_configs: Option<usize>,
    pub prelog_accounting: PrelogAccounting,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            pilot_length: 16,
            coherence_samples: 200,
            uplink_power_w: 0.8,
            energy_fraction: 0.98,
            energy_criterion: EnergyCriterion::SingularValues,
            phase_bits: 3,
            training_configs: None,
            prelog_accounting: PrelogAccounting::SinglePilot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownlinkSection {
    pub p_max_dbw: f64,
    /// Prelog applied to the perfect-CSI SE.
    pub pcsi_prelog: f64,
}

impl Default for DownlinkSection {
    fn default() -> Self {
        Self {
            p_max_dbw: 7.0,
            pcsi_prelog: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub objectives: Vec<Objective>,
    pub rel_tol: f64,
    pub max_sweeps: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            objectives: vec![Objective::F1, Objective::F2],
            rel_tol: 1e-6,
            max_sweeps: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AntennaKind {
    Omni,
    Directional,
}

impl AntennaKind {
    pub fn name(self) -> &'static str {
        match self {
            AntennaKind::Omni => "omni",
            AntennaKind::Directional => "directional",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RisKind {
    Random,
    Optimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiKind {
    /// Perfect CSI.
    Pcsi,
    /// Imperfect CSI, Monte-Carlo upper bound.
    Ub,
    /// Imperfect CSI, closed-form hardening lower bound.
    Lb,
}

impl CsiKind {
    pub fn name(self) -> &'static str {
        match self {
            CsiKind::Pcsi => "pcsi",
            CsiKind::Ub => "ub",
            CsiKind::Lb => "lb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Number of UE drops.
    pub trials: usize,
    /// Small-scale fading draws per drop.
    pub draws: usize,
    pub seed: u64,
    pub antennas: Vec<AntennaKind>,
    pub ris_modes: Vec<RisKind>,
    pub csi_modes: Vec<CsiKind>,
    pub baseline: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            trials: 100,
            draws: 100,
            seed: 1,
            antennas: vec![AntennaKind::Omni, AntennaKind::Directional],
            ris_modes: vec![RisKind::Random, RisKind::Optimized],
            csi_modes: vec![CsiKind::Pcsi, CsiKind::Ub, CsiKind::Lb],
            baseline: true,
        }
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub antenna: AntennaSection,
    pub pathloss: PathlossSection,
    pub users: UsersSection,
    pub training: TrainingSection,
    pub downlink: DownlinkSection,
    pub optimizer: OptimizerSection,
    pub experiment: ExperimentSection,
}

const SECTIONS: [&str; 8] = [
    "system",
    "antenna",
    "pathloss",
    "users",
    "training",
    "downlink",
    "optimizer",
    "experiment",
];

const UNIT_SUFFIXES: [&str; 14] = [
    "_dbm_per_hz",
    "_wavelengths",
    "_dbw",
    "_dbm",
    "_db",
    "_ghz",
    "_mhz",
    "_hz",
    "_mw",
    "_w",
    "_deg",
    "_rad",
    "_km",
    "_m",
];

fn strip_unit(key: &str) -> &str {
    UNIT_SUFFIXES
        .iter()
        .find_map(|s| key.strip_suffix(s))
        .unwrap_or(key)
}

/// `(section, key)` pairs of every recognized key.
fn known_keys() -> Vec<(String, String)> {
    let value = Value::try_from(ExperimentConfig::default()).expect("default config serializes");
    let mut keys = Vec::new();
    if let Value::Table(t) = value {
        for (section, body) in t {
            if let Value::Table(fields) = body {
                keys.extend(fields.keys().map(|k| (section.clone(), k.clone())));
            }
        }
    }
    // optional keys are skipped when absent
    keys.push(("antenna".into(), "backlobe_db".into()));
    keys.push(("training".into(), "training_configs".into()));
    keys
}

fn unknown_key_error(key: &str, known: &[(String, String)]) -> Error {
    let base = strip_unit(key);
    if let Some((_, expected)) = known.iter().find(|(_, k)| k != key && strip_unit(k) == base) {
        return Error::UnitSuffix {
            key: key.to_string(),
            expected: expected.clone(),
        };
    }
    Error::UnknownKey(key.to_string())
}

/// Moves top-level keys into their sections and rejects unknown keys.
fn normalize(raw: Table) -> Result<Table> {
    let known = known_keys();
    let mut out = Table::new();
    for (key, value) in raw {
        if SECTIONS.contains(&key.as_str()) {
            let Value::Table(fields) = value else {
                return Err(Error::Config(format!("`{key}` must be a table")));
            };
            for (field, v) in fields {
                if !known.iter().any(|(s, k)| s == &key && k == &field) {
                    return Err(unknown_key_error(&field, &known));
                }
                insert(&mut out, &key, field, v);
            }
        } else if let Some((section, _)) = known.iter().find(|(_, k)| k == &key) {
            let section = section.clone();
            insert(&mut out, &section, key, value);
        } else {
            return Err(unknown_key_error(&key, &known));
        }
    }
    Ok(out)
}

fn insert(out: &mut Table, section: &str, key: String, value: Value) {
    let entry = out
        .entry(section.to_string())
        .or_insert_with(|| Value::Table(Table::new()));
    if let Value::Table(t) = entry {
        t.insert(key, value);
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text` and applies `key=value` overrides (values in TOML
    /// syntax; bare words are taken as strings). Overrides win.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let raw: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("malformed configuration: {e}")))?;
        let mut table = normalize(raw)?;
        for item in overrides {
            let (key, value) = parse_override(item)?;
            let (section, field) = match key.split_once('.') {
                Some((s, f)) => (Some(s.to_string()), f.to_string()),
                None => (None, key),
            };
            let mut single = Table::new();
            match section {
                Some(s) => {
                    let mut inner = Table::new();
                    inner.insert(field, value);
                    single.insert(s, Value::Table(inner));
                }
                None => {
                    single.insert(field, value);
                }
            }
            for (section, fields) in normalize(single)? {
                if let Value::Table(fields) = fields {
                    for (k, v) in fields {
                        insert(&mut table, &section, k, v);
                    }
                }
            }
        }
        let config: ExperimentConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        let bad = |msg: String| Err(Error::Config(msg));
        if s.n_active == 0 || s.n_ris < s.n_active {
            return bad(format!(
                "need 1 <= n_active <= n_ris, got n_active = {}, n_ris = {}",
                s.n_active, s.n_ris
            ));
        }
        for (name, v) in [
            ("separation_wavelengths", s.separation_wavelengths),
            ("active_spacing_wavelengths", s.active_spacing_wavelengths),
            ("ris_spacing_wavelengths", s.ris_spacing_wavelengths),
            ("carrier_hz", s.carrier_hz),
            ("bandwidth_hz", s.bandwidth_hz),
            ("bs_height_m", s.bs_height_m),
            ("ue_height_m", s.ue_height_m),
            ("uplink_power_w", self.training.uplink_power_w),
            ("rel_tol", self.optimizer.rel_tol),
            ("pathloss_min_distance_m", self.pathloss.pathloss_min_distance_m),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("`{name}` must be positive, got {v}"));
            }
        }
        if !(s.reflection_efficiency > 0.0 && s.reflection_efficiency <= 1.0) {
            return bad(format!("reflection_efficiency must lie in (0, 1], got {}", s.reflection_efficiency));
        }
        let a = &self.antenna;
        if !(a.sector_half_angle_deg > 0.0 && a.sector_half_angle_deg < 90.0) {
            return bad(format!("sector_half_angle_deg must lie in (0, 90), got {}", a.sector_half_angle_deg));
        }
        let u = &self.users;
        if u.n_users == 0 {
            return bad("n_users must be at least 1".into());
        }
        if !(u.min_distance_m > 0.0 && u.min_distance_m < u.max_distance_m) {
            return bad(format!(
                "need 0 < min_distance_m < max_distance_m, got [{}, {}]",
                u.min_distance_m, u.max_distance_m
            ));
        }
        if !(u.drop_half_angle_deg > 0.0 && u.drop_half_angle_deg <= 90.0) {
            return bad(format!("drop_half_angle_deg must lie in (0, 90], got {}", u.drop_half_angle_deg));
        }
        let t = &self.training;
        if !t.pilot_length.is_power_of_two() {
            return Err(Error::UnsupportedPilotLength(t.pilot_length));
        }
        if t.coherence_samples <= t.pilot_length {
            return bad("coherence_samples must exceed pilot_length".into());
        }
        if !(t.energy_fraction > 0.0 && t.energy_fraction <= 1.0) {
            return bad(format!("energy_fraction must lie in (0, 1], got {}", t.energy_fraction));
        }
        if t.phase_bits < 1 || t.phase_bits > 16 {
            return bad(format!("phase_bits must lie in [1, 16], got {}", t.phase_bits));
        }
        if let Some(q) = t.training_configs {
            if q * s.n_active < s.n_ris {
                return bad(format!(
                    "training_configs = {q} gives fewer observables than RIS elements"
                ));
            }
        }
        if self.prelog_icsi() <= 0.0 {
            return bad("pilot overhead leaves no room for data".into());
        }
        if !(self.downlink.pcsi_prelog > 0.0 && self.downlink.pcsi_prelog <= 1.0) {
            return bad("pcsi_prelog must lie in (0, 1]".into());
        }
        if self.optimizer.max_sweeps == 0 {
            return bad("max_sweeps must be at least 1".into());
        }
        let e = &self.experiment;
        if e.trials == 0 || e.draws == 0 {
            return bad("trials and draws must be at least 1".into());
        }
        if e.ris_modes.contains(&RisKind::Optimized) && self.optimizer.objectives.is_empty() {
            return bad("optimized RIS mode needs at least one objective".into());
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.system.carrier_hz
    }

    pub fn channel_params(&self) -> ChannelModelParams {
        ChannelModelParams {
            reflection_efficiency: self.system.reflection_efficiency,
            carrier_hz: self.system.carrier_hz,
            pathloss: PathlossModel {
                offset_db: self.pathloss.pathloss_offset_db,
                distance_coeff: self.pathloss.pathloss_distance_coeff,
                frequency_coeff: self.pathloss.pathloss_frequency_coeff,
                min_distance_m: self.pathloss.pathloss_min_distance_m,
            },
            noise_psd_dbm_hz: self.system.noise_psd_dbm_per_hz,
            bandwidth_hz: self.system.bandwidth_hz,
            noise_figure_db: self.system.noise_figure_db,
        }
    }

    /// Noise power σ² (W), shared by the array and the UEs.
    pub fn noise_power_w(&self) -> f64 {
        self.channel_params().noise_power_w()
    }

    pub fn p_max_w(&self) -> f64 {
        db_to_linear(self.downlink.p_max_dbw)
    }

    pub fn sector_half_angle(&self) -> f64 {
        self.antenna.sector_half_angle_deg.to_radians()
    }

    /// Resolved number of training configurations `Q`.
    pub fn training_configs(&self) -> usize {
        self.training
            .training_configs
            .unwrap_or_else(|| TrainingConfigs::default_count(self.system.n_active, self.system.n_ris))
    }

    /// Prelog `ξ̄` of the imperfect-CSI measures.
    pub fn prelog_icsi(&self) -> f64 {
        let tau_p = self.training.pilot_length as f64;
        let tau_c = self.training.coherence_samples as f64;
        match self.training.prelog_accounting {
            PrelogAccounting::SinglePilot => 1.0 - tau_p / tau_c,
            PrelogAccounting::Repetitions => 1.0 - self.training_configs() as f64 * tau_p / tau_c,
        }
    }

    pub fn array_pattern(&self, kind: AntennaKind) -> Result<AntennaPattern> {
        match kind {
            AntennaKind::Omni => Ok(AntennaPattern::omni_db(self.antenna.omni_gain_db)),
            AntennaKind::Directional => AntennaPattern::directional_db(
                self.antenna.directional_gain_db,
                self.sector_half_angle(),
                self.antenna.backlobe_db,
            ),
        }
    }

    pub fn ris_pattern(&self) -> AntennaPattern {
        AntennaPattern::omni_db(self.antenna.ris_gain_db)
    }

    /// Active element spacing (m) for the given element type.
    pub fn active_spacing_m(&self, kind: AntennaKind) -> Result<f64> {
        let lambda = self.wavelength();
        let fixed = self.system.active_spacing_wavelengths * lambda;
        match (kind, self.antenna.directional_spacing) {
            (AntennaKind::Omni, _) | (AntennaKind::Directional, DirectionalSpacing::Fixed) => Ok(fixed),
            (AntennaKind::Directional, DirectionalSpacing::Sector) => {
                match directional_spacing(
                    self.system.n_active,
                    self.system.n_ris,
                    self.system.ris_spacing_wavelengths * lambda,
                    self.system.separation_wavelengths * lambda,
                    self.sector_half_angle(),
                ) {
                    Ok(d) => Ok(d),
                    Err(Error::SectorCoversRis { .. }) | Err(Error::DegenerateArray(_)) => Ok(fixed),
                    Err(e) => Err(e),
                }
            }
        }
    }
}

pub(crate) fn parse_override(item: &str) -> Result<(String, Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let doc = format!("v = {raw}");
    let value = match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key present"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key, value))
}
