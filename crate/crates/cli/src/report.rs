//! Report document written as `report.json`.

use readout_core::protocols::{CharacterizationReport, OperatingPoint, ProtocolFailure};
use readout_core::snr::SnrPrediction;
use readout_core::{DeviceParams, QubitState};
use serde::{Deserialize, Serialize};

use crate::chip::ChipSummary;
use crate::config::{Channel, RunConfig};

pub const TOOL_NAME: &str = "readoutchar";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Flagged,
    ConfigError,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Flagged => 1,
            Status::ConfigError => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        ToolInfo { name: TOOL_NAME.into(), version: TOOL_VERSION.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub channel: Option<usize>,
    pub protocol: Option<String>,
    pub reason: String,
    pub message: String,
    /// Offending config field, for config errors.
    pub field: Option<String>,
}

impl ErrorRecord {
    pub fn from_failure(channel: usize, f: &ProtocolFailure) -> Self {
        ErrorRecord {
            channel: Some(channel),
            protocol: Some(f.protocol.clone()),
            reason: f.reason.clone(),
            message: f.message.clone(),
            field: None,
        }
    }
}

/// Ground truth of a simulated channel, echoed for comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub device: DeviceParams,
    pub drive_gain: f64,
    pub operating: OperatingPoint,
    pub nbar: [f64; 2],
    pub readout_duration: f64,
}

impl From<&Channel> for TruthRecord {
    fn from(c: &Channel) -> Self {
        TruthRecord {
            device: c.device,
            drive_gain: c.drive_gain,
            operating: c.operating,
            nbar: c.true_nbar(),
            readout_duration: c.readout_duration,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub prediction: SnrPrediction,
    /// Closed form for a long drive at ω_d = ω_r; absent off resonance.
    pub snr_steady_state: Option<f64>,
    pub separation_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqSummary {
    pub state: QubitState,
    pub shots: u64,
    pub mean: [f64; 2],
    pub quadrature_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqRecord {
    pub clouds: Vec<IqSummary>,
    pub snr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub index: usize,
    pub name: String,
    pub truth: TruthRecord,
    pub characterization: Option<CharacterizationReport>,
    pub prediction: Option<PredictionRecord>,
    pub iq: Option<IqRecord>,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool: ToolInfo,
    pub command: String,
    pub status: Status,
    pub config: Option<RunConfig>,
    pub channels: Vec<ChannelReport>,
    pub chip_summary: Option<ChipSummary>,
    pub errors: Vec<ErrorRecord>,
}

impl ReportFile {
    pub fn config_error(command: &str, field: &str, message: &str) -> Self {
        ReportFile {
            tool: ToolInfo::default(),
            command: command.into(),
            status: Status::ConfigError,
            config: None,
            channels: Vec::new(),
            chip_summary: None,
            errors: vec![ErrorRecord {
                channel: None,
                protocol: None,
                reason: "config-error".into(),
                message: message.into(),
                field: Some(field.into()),
            }],
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: usize,
    pub backend: String,
}
