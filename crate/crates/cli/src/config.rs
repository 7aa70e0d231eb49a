//! Run configuration: JSON schema, validation and resolution into channels.

use std::path::{Path, PathBuf};

use readout_core::protocols::{DesignParams, OperatingPoint, PlanOptions};
use readout_core::DeviceParams;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolName {
    ChiKappaPower,
    Ringdown,
    Efficiency,
    ValidateSnr,
    ChipScenario,
}

impl ProtocolName {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolName::ChiKappaPower => "chi-kappa-power",
            ProtocolName::Ringdown => "ringdown",
            ProtocolName::Efficiency => "efficiency",
            ProtocolName::ValidateSnr => "validate-snr",
            ProtocolName::ChipScenario => "chip-scenario",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub protocol: Option<ProtocolName>,
    #[serde(default)]
    pub devices: Vec<ChannelConfig>,
    #[serde(default)]
    pub chip: Option<ChipConfig>,
    #[serde(default)]
    pub plan: PlanOptions,
    /// IQ points per state written to the `simulate-iq` traces.
    #[serde(default = "default_trace_shots")]
    pub trace_shots: usize,
}

fn default_trace_shots() -> usize {
    1000
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub omega_r: f64,
    pub chi: f64,
    pub kappa: f64,
    pub eta: f64,
    /// Physical ε per unit commanded amplitude.
    #[serde(default = "one")]
    pub drive_gain: f64,
    /// Prior used for experiment design; the true parameters when absent.
    #[serde(default)]
    pub nominal: Option<NominalConfig>,
    pub operating: OperatingConfig,
    /// Readout pulse length in µs; `10/κ_nominal` when absent.
    #[serde(default)]
    pub readout_duration: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalConfig {
    pub omega_r: f64,
    pub chi: f64,
    pub kappa: f64,
    #[serde(default = "one")]
    pub drive_gain: f64,
}

/// Readout operating point. Give exactly one of `nbar` (target photon
/// number of the |0⟩ branch, converted with the nominal parameters) or
/// `amplitude` (commanded).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatingConfig {
    /// Defaults to the nominal ω_r.
    #[serde(default)]
    pub omega_d: Option<f64>,
    #[serde(default)]
    pub nbar: Option<f64>,
    #[serde(default)]
    pub amplitude: Option<f64>,
}

/// Generator for a simulated multi-channel chip with log-uniform κ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChipConfig {
    #[serde(default = "default_channels")]
    pub channels: usize,
    pub kappa_min: f64,
    /// max(κ)/min(κ) of the generator range.
    pub spread: f64,
    pub chi_over_kappa: f64,
    pub eta: f64,
    pub nbar: f64,
    pub omega_r: f64,
    #[serde(default)]
    pub omega_r_step: f64,
    #[serde(default = "one")]
    pub drive_gain: f64,
    /// Readout pulse length in units of 1/κ.
    #[serde(default = "default_readout_kappas")]
    pub readout_kappas: f64,
    /// Channels whose χ is set to zero.
    #[serde(default)]
    pub zero_chi_channels: Vec<usize>,
}

fn default_channels() -> usize {
    54
}

fn default_readout_kappas() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { field: field.into(), message: message.into() }
    }
}

/// A fully resolved simulated channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub index: usize,
    pub name: String,
    pub device: DeviceParams,
    pub drive_gain: f64,
    pub nominal: DesignParams,
    pub operating: OperatingPoint,
    pub readout_duration: f64,
}

impl Channel {
    /// True steady-state photon number at the operating point, per state.
    pub fn true_nbar(&self) -> [f64; 2] {
        readout_core::QubitState::BOTH.map(|q| {
            let eps = self.drive_gain * self.operating.amplitude;
            let delta = self.device.detuning(self.operating.omega_d, q);
            eps * eps / (delta * delta + 0.25 * self.device.kappa * self.device.kappa)
        })
    }
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "config".to_string() } else { path };
        ConfigError::new(field, e.into_inner().to_string())
    })?;
    validate(&config)?;
    Ok(config)
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be finite and > 0 (got {v})")))
    }
}

fn finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, "must be finite"))
    }
}

fn validate_channel(c: &ChannelConfig, at: &str) -> Result<(), ConfigError> {
    let f = |name: &str| format!("{at}.{name}");
    finite(&f("omega_r"), c.omega_r)?;
    finite(&f("chi"), c.chi)?;
    positive(&f("kappa"), c.kappa)?;
    if !(c.eta > 0.0 && c.eta <= 1.0) {
        return Err(ConfigError::new(f("eta"), format!("must be in (0, 1] (got {})", c.eta)));
    }
    positive(&f("drive_gain"), c.drive_gain)?;
    if let Some(n) = &c.nominal {
        finite(&f("nominal.omega_r"), n.omega_r)?;
        finite(&f("nominal.chi"), n.chi)?;
        positive(&f("nominal.kappa"), n.kappa)?;
        positive(&f("nominal.drive_gain"), n.drive_gain)?;
    }
    let op = &c.operating;
    if let Some(w) = op.omega_d {
        finite(&f("operating.omega_d"), w)?;
    }
    match (op.nbar, op.amplitude) {
        (Some(n), None) => positive(&f("operating.nbar"), n)?,
        (None, Some(a)) => positive(&f("operating.amplitude"), a)?,
        _ => return Err(ConfigError::new(f("operating"), "give exactly one of nbar or amplitude")),
    }
    if let Some(t) = c.readout_duration {
        positive(&f("readout_duration"), t)?;
    }
    Ok(())
}

fn validate_plan(p: &PlanOptions) -> Result<(), ConfigError> {
    let f = |name: &str| format!("plan.{name}");
    if p.sweep_points < 8 {
        return Err(ConfigError::new(f("sweep_points"), "must be >= 8"));
    }
    if p.ringdown_delays < 6 {
        return Err(ConfigError::new(f("ringdown_delays"), "must be >= 6"));
    }
    for (name, shots) in [
        ("sweep_shots", p.sweep_shots),
        ("ringdown_shots", p.ringdown_shots),
        ("efficiency_shots", p.efficiency_shots),
        ("readout_shots", p.readout_shots),
    ] {
        if shots < 100 {
            return Err(ConfigError::new(f(name), "must be >= 100"));
        }
    }
    for (name, bins) in [("efficiency_bins", p.efficiency_bins), ("readout_bins", p.readout_bins)] {
        if bins == 0 {
            return Err(ConfigError::new(f(name), "must be >= 1"));
        }
    }
    for (name, v) in [
        ("sweep_half_span", p.sweep_half_span),
        ("sweep_duration", p.sweep_duration),
        ("sweep_max_phase", p.sweep_max_phase),
        ("sweep_max_dephasing", p.sweep_max_dephasing),
        ("ringdown_span", p.ringdown_span),
        ("ringdown_slice", p.ringdown_slice),
        ("ringdown_fill", p.ringdown_fill),
        ("ringdown_phase", p.ringdown_phase),
        ("efficiency_dephasing", p.efficiency_dephasing),
        ("efficiency_max_duration", p.efficiency_max_duration),
        ("tolerance", p.tolerance),
    ] {
        positive(&f(name), v)?;
    }
    if !(p.tail >= 0.0 && p.tail.is_finite()) {
        return Err(ConfigError::new(f("tail"), "must be finite and >= 0"));
    }
    let [lo, hi] = p.contrast_band;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(ConfigError::new(f("contrast_band"), "must satisfy 0 < low < high < 1"));
    }
    Ok(())
}

fn validate_chip(c: &ChipConfig) -> Result<(), ConfigError> {
    let f = |name: &str| format!("chip.{name}");
    if c.channels == 0 {
        return Err(ConfigError::new(f("channels"), "must be >= 1"));
    }
    positive(&f("kappa_min"), c.kappa_min)?;
    if !(c.spread >= 1.0 && c.spread.is_finite()) {
        return Err(ConfigError::new(f("spread"), "must be finite and >= 1"));
    }
    finite(&f("chi_over_kappa"), c.chi_over_kappa)?;
    if !(c.eta > 0.0 && c.eta <= 1.0) {
        return Err(ConfigError::new(f("eta"), "must be in (0, 1]"));
    }
    positive(&f("nbar"), c.nbar)?;
    finite(&f("omega_r"), c.omega_r)?;
    finite(&f("omega_r_step"), c.omega_r_step)?;
    positive(&f("drive_gain"), c.drive_gain)?;
    positive(&f("readout_kappas"), c.readout_kappas)?;
    if let Some((i, ch)) = c.zero_chi_channels.iter().enumerate().find(|(_, ch)| **ch >= c.channels) {
        return Err(ConfigError::new(format!("chip.zero_chi_channels[{i}]"), format!("channel {ch} out of range")));
    }
    Ok(())
}

pub fn validate(c: &RunConfig) -> Result<(), ConfigError> {
    for (i, d) in c.devices.iter().enumerate() {
        validate_channel(d, &format!("devices[{i}]"))?;
    }
    if let Some(chip) = &c.chip {
        validate_chip(chip)?;
    }
    validate_plan(&c.plan)
}

/// Resolve the configured devices into channels.
pub fn resolve_devices(c: &RunConfig) -> Result<Vec<Channel>, ConfigError> {
    if c.devices.is_empty() {
        return Err(ConfigError::new("devices", "at least one device is required"));
    }
    Ok(c.devices.iter().enumerate().map(|(i, d)| resolve_channel(i, d)).collect())
}

pub fn resolve_channel(index: usize, d: &ChannelConfig) -> Channel {
    let nominal = match d.nominal {
        Some(n) => DesignParams { omega_r: n.omega_r, chi: n.chi, kappa: n.kappa, drive_gain: n.drive_gain },
        None => DesignParams { omega_r: d.omega_r, chi: d.chi, kappa: d.kappa, drive_gain: d.drive_gain },
    };
    let omega_d = d.operating.omega_d.unwrap_or(nominal.omega_r);
    let amplitude = match (d.operating.amplitude, d.operating.nbar) {
        (Some(a), _) => a,
        (None, Some(n)) => {
            let delta = omega_d - nominal.omega_r - nominal.chi;
            (n * (delta * delta + 0.25 * nominal.kappa * nominal.kappa)).sqrt() / nominal.drive_gain
        }
        (None, None) => unreachable!("validated"),
    };
    Channel {
        index,
        name: d.name.clone().unwrap_or_else(|| format!("ch{index:02}")),
        device: DeviceParams { omega_r: d.omega_r, chi: d.chi, kappa: d.kappa, eta: d.eta },
        drive_gain: d.drive_gain,
        nominal,
        operating: OperatingPoint { omega_d, amplitude },
        readout_duration: d.readout_duration.unwrap_or(10.0 / nominal.kappa),
    }
}
