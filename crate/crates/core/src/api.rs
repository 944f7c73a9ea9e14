//! JSON bodies exchanged by the HTTP service and its client.

use serde::{Deserialize, Serialize};

use crate::analysis::ResponseCurve;
use crate::pedal::{Engine, PedalError, PedalParams};
use crate::wav::Encoding;

/// Partial parameter update; absent fields keep their current value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsUpdate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treble: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
}

impl ParamsUpdate {
    pub fn apply(&self, current: &PedalParams) -> Result<PedalParams, PedalError> {
        let next = PedalParams {
            gain: self.gain.unwrap_or(current.gain),
            treble: self.treble.unwrap_or(current.treble),
            level: self.level.unwrap_or(current.level),
            engine: self.engine.unwrap_or(current.engine),
        };
        next.validate()?;
        Ok(next)
    }
}

impl From<PedalParams> for ParamsUpdate {
    fn from(p: PedalParams) -> Self {
        Self {
            gain: Some(p.gain),
            treble: Some(p.treble),
            level: Some(p.level),
            engine: Some(p.engine),
        }
    }
}

/// Answer to an upload: where to fetch the result and what it contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessReceipt {
    pub id: u64,
    /// True when an identical earlier render was reused.
    pub cached: bool,
    pub sample_rate: u32,
    /// Channels of the upload; the result is always mono.
    pub channels: u16,
    pub encoding: Encoding,
    pub samples: usize,
    pub peak: f64,
    pub clipped: usize,
    pub params: PedalParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseReport {
    pub engine: Engine,
    pub treble: f64,
    pub gain: f64,
    pub level: f64,
    pub sample_rate: f64,
    /// Small-signal response of the whole chain with this engine.
    #[serde(flatten)]
    pub chain: ResponseCurve,
    /// Tone stage alone, digital and analog.
    pub tone_db: Vec<f64>,
    pub tone_analog_db: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineStatus {
    pub engine: Engine,
    pub available: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipInfo {
    pub sample_rate: u32,
    pub channels: u16,
    pub encoding: Encoding,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub name: String,
    pub version: String,
    /// Rate the pedal runs at when no clip is loaded, and the only rate
    /// the neural engine accepts.
    pub sample_rate: f64,
    /// Availability for the loaded clip (or the default rate).
    pub engines: Vec<EngineStatus>,
    pub clip: Option<ClipInfo>,
}

/// Body of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    /// Stable machine-readable class, e.g. `invalid_params`.
    pub kind: String,
    pub error: String,
}
