//! Whole-file processing shared by the command line and the service, so
//! both produce the same bytes for the same request.

use thiserror::Error;

use crate::config::ComponentConfig;
use crate::pedal::{Pedal, PedalError, PedalParams};
use crate::rnn::ModelBank;
use crate::wav::{self, WavError, WavSpec};

/// Samples handed to the pedal per call. Output does not depend on it.
pub const RENDER_BLOCK: usize = 512;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Pedal(#[from] PedalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    /// Encoded mono WAV in the input's rate and encoding.
    pub wav: Vec<u8>,
    pub input: WavSpec,
    pub peak: f64,
    /// Samples beyond full scale.
    pub clipped: usize,
}

pub fn render_samples(
    samples: &[f64],
    fs: f64,
    params: &PedalParams,
    config: &ComponentConfig,
    bank: &ModelBank,
) -> Result<Vec<f64>, PedalError> {
    params.validate()?;
    let mut pedal = Pedal::with_bank(config, fs, bank.clone())?;
    let mut out = samples.to_vec();
    for chunk in out.chunks_mut(RENDER_BLOCK) {
        pedal.process_block(params, chunk)?;
    }
    Ok(out)
}

pub fn render_wav(
    input: &[u8],
    params: &PedalParams,
    config: &ComponentConfig,
    bank: &ModelBank,
) -> Result<Rendered, RenderError> {
    let audio = wav::read_bytes(input)?;
    let out = render_samples(&audio.samples, audio.spec.sample_rate as f64, params, config, bank)?;
    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let clipped = out.iter().filter(|x| x.abs() > 1.0).count();
    Ok(Rendered {
        wav: wav::write_bytes(audio.spec.sample_rate, audio.spec.encoding, &out)?,
        input: audio.spec,
        peak,
        clipped,
    })
}
