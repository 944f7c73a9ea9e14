//! Exit statuses, one per error class.
//!
//! | code | meaning |
//! |---|---|
//! | 1 | anything else |
//! | 2 | bad command line (reported by the argument parser) |
//! | 3 | file or socket I/O |
//! | 4 | unreadable or unsupported WAV |
//! | 5 | neural engine at a sample rate other than 44100 Hz |
//! | 6 | parameter out of range |
//! | 7 | invalid component config or weight file |
//! | 8 | service unreachable or failed |

use std::fmt;

use centaur_client::ClientError;
use centaur_core::analysis::AnalysisError;
use centaur_core::circuits::CircuitError;
use centaur_core::config::ConfigError;
use centaur_core::pedal::PedalError;
use centaur_core::render::RenderError;
use centaur_core::rnn::WeightsError;
use centaur_core::wav::WavError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Other,
    Io,
    Encoding,
    SampleRate,
    Params,
    Config,
    Server,
}

/// A parameter problem found by the command line itself.
#[derive(Debug)]
pub struct ParamError(pub String);

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ParamError {}

impl Failure {
    pub fn code(self) -> u8 {
        match self {
            Failure::Other => 1,
            Failure::Io => 3,
            Failure::Encoding => 4,
            Failure::SampleRate => 5,
            Failure::Params => 6,
            Failure::Config => 7,
            Failure::Server => 8,
        }
    }

    fn of_pedal(e: &PedalError) -> Self {
        match e {
            PedalError::SampleRate { .. } => Failure::SampleRate,
            PedalError::Param { .. } => Failure::Params,
            PedalError::Config(_) | PedalError::Circuit(_) | PedalError::Linear(_) | PedalError::Wdf(_) => {
                Failure::Config
            }
            PedalError::InvalidSampleRate(_) => Failure::Encoding,
        }
    }

    fn of_wav(e: &WavError) -> Self {
        match e {
            WavError::Io(_) => Failure::Io,
            _ => Failure::Encoding,
        }
    }

    /// First recognised error in the chain decides.
    pub fn classify(err: &anyhow::Error) -> Self {
        for cause in err.chain() {
            if let Some(e) = cause.downcast_ref::<ClientError>() {
                return match e.kind() {
                    Some("sample_rate") => Failure::SampleRate,
                    Some("invalid_params") | Some("invalid_bench") => Failure::Params,
                    Some("unsupported_audio") => Failure::Encoding,
                    _ => Failure::Server,
                };
            }
            if let Some(e) = cause.downcast_ref::<RenderError>() {
                return match e {
                    RenderError::Wav(w) => Self::of_wav(w),
                    RenderError::Pedal(p) => Self::of_pedal(p),
                };
            }
            if let Some(e) = cause.downcast_ref::<WavError>() {
                return Self::of_wav(e);
            }
            if let Some(e) = cause.downcast_ref::<PedalError>() {
                return Self::of_pedal(e);
            }
            if let Some(e) = cause.downcast_ref::<AnalysisError>() {
                return match e {
                    AnalysisError::Pedal(p) => Self::of_pedal(p),
                    AnalysisError::BenchSettings => Failure::Params,
                    AnalysisError::Config(_) | AnalysisError::Linear(_) => Failure::Config,
                    _ => Failure::Other,
                };
            }
            if cause.is::<ParamError>() {
                return Failure::Params;
            }
            if cause.is::<ConfigError>() || cause.is::<WeightsError>() || cause.is::<CircuitError>() {
                return Failure::Config;
            }
            if cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
                return Failure::Io;
            }
        }
        Failure::Other
    }
}
