//! The full signal chain: input buffer, gain stage (circuit or neural),
//! tone control, output buffer and level.
//!
//! Controls are smoothed by one-pole filters and turned into coefficients
//! every [`CONTROL_PERIOD`] samples, counted from the first processed sample
//! so that results never depend on how the stream is cut into blocks. Tone
//! coefficients are ramped linearly between control updates. Switching
//! engines crossfades the two gain-stage outputs over [`CROSSFADE_LEN`]
//! samples; the engine that is not playing is left untouched.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{self, CircuitError, GainStage};
use crate::config::{ComponentConfig, ConfigError};
use crate::linear::{
    bilinear_transform, stage_coeffs, tone_analog_prototype, FilterState, FirstOrderCoeffs, FirstOrderFilter,
    LinearError, StageConfig, StageId, ToneComponents,
};
use crate::rnn::{blend_values, ModelBank, MODEL_SAMPLE_RATE};
use crate::wdf::WdfError;

pub const CONTROL_PERIOD: u64 = 32;
pub const SMOOTHING_TIME: f64 = 0.020;
pub const CROSSFADE_LEN: usize = 2048;
/// A smoother closer than this to its target lands on it.
pub const SMOOTHING_SNAP: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PedalError {
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidSampleRate(f64),
    #[error("the neural engine requires a sample rate of {required} Hz, got {fs} Hz")]
    SampleRate { fs: f64, required: f64 },
    #[error("{name} must lie in [0, 1], got {value}")]
    Param { name: &'static str, value: f64 },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Wdf(#[from] WdfError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Traditional,
    Neural,
}

impl Engine {
    pub const ALL: [Engine; 2] = [Engine::Traditional, Engine::Neural];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Traditional => "traditional",
            Engine::Neural => "neural",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "traditional" => Ok(Engine::Traditional),
            "neural" => Ok(Engine::Neural),
            _ => Err(format!("unknown engine `{s}` (expected traditional or neural)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedalParams {
    pub gain: f64,
    pub treble: f64,
    pub level: f64,
    pub engine: Engine,
}

impl Default for PedalParams {
    fn default() -> Self {
        Self {
            gain: 0.5,
            treble: 0.5,
            level: 0.5,
            engine: Engine::Traditional,
        }
    }
}

impl PedalParams {
    pub fn validate(&self) -> Result<(), PedalError> {
        for (name, value) in [("gain", self.gain), ("treble", self.treble), ("level", self.level)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(PedalError::Param { name, value });
            }
        }
        Ok(())
    }
}

/// Squared level taper.
pub fn level_taper(level: f64) -> f64 {
    level * level
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Smoother {
    value: f64,
    target: f64,
    alpha: f64,
}

impl Smoother {
    fn new(fs: f64) -> Self {
        Self {
            value: 0.0,
            target: 0.0,
            alpha: 1.0 - (-1.0 / (SMOOTHING_TIME * fs)).exp(),
        }
    }

    fn snap(&mut self, v: f64) {
        self.value = v;
        self.target = v;
    }

    #[inline]
    fn step(&mut self) -> f64 {
        let gap = self.target - self.value;
        if gap.abs() < SMOOTHING_SNAP {
            self.value = self.target;
        } else {
            self.value += self.alpha * gap;
        }
        self.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Fade {
    from: Engine,
    pos: usize,
}

/// Tone filter with coefficients ramped towards a target.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ToneRamp {
    coeffs: FirstOrderCoeffs,
    target: FirstOrderCoeffs,
    step: [f64; 3],
    state: FilterState,
}

impl ToneRamp {
    fn retarget(&mut self, target: FirstOrderCoeffs, snap: bool) {
        // Land exactly on the previous target before ramping to the next.
        self.coeffs = if snap { target } else { self.target };
        self.target = target;
        let n = CONTROL_PERIOD as f64;
        self.step = [
            (target.b0 - self.coeffs.b0) / n,
            (target.b1 - self.coeffs.b1) / n,
            (target.a1 - self.coeffs.a1) / n,
        ];
    }

    #[inline]
    fn tick(&mut self, x: f64) -> f64 {
        self.coeffs.b0 += self.step[0];
        self.coeffs.b1 += self.step[1];
        self.coeffs.a1 += self.step[2];
        self.state.tick(&self.coeffs, x)
    }
}

#[derive(Debug, Clone)]
pub struct Pedal {
    fs: f64,
    tone_parts: ToneComponents,
    input_buffer: FirstOrderFilter,
    output_buffer: FirstOrderFilter,
    tone: ToneRamp,
    traditional: GainStage,
    neural: Option<ModelBank>,
    /// Resting outputs of the neural models, removed from their output so
    /// silence maps to silence.
    neural_rest: [f64; 5],
    gain: Smoother,
    treble: Smoother,
    level: Smoother,
    started: bool,
    counter: u64,
    engine: Engine,
    fade: Option<Fade>,
}

impl Pedal {
    /// A pedal with the bundled demonstration network weights.
    pub fn new(config: &ComponentConfig, fs: f64) -> Result<Self, PedalError> {
        Self::with_bank(config, fs, ModelBank::demo())
    }

    pub fn with_bank(config: &ComponentConfig, fs: f64, bank: ModelBank) -> Result<Self, PedalError> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(PedalError::InvalidSampleRate(fs));
        }
        let defaults = PedalParams::default();
        let tone_parts = ToneComponents::from_config(config)?;
        let tone = bilinear_transform(tone_analog_prototype(&tone_parts, defaults.treble)?, fs)?;
        let mut neural = (fs == MODEL_SAMPLE_RATE).then_some(bank);
        let neural_rest = neural.as_mut().map_or([0.0; 5], |b| {
            b.reset();
            b.settle()
        });
        Ok(Self {
            fs,
            tone_parts,
            input_buffer: FirstOrderFilter::new(stage_coeffs(&StageConfig::from_config(StageId::InputBuffer, config)?, fs)?),
            output_buffer: FirstOrderFilter::new(stage_coeffs(&StageConfig::from_config(StageId::OutputBuffer, config)?, fs)?),
            tone: ToneRamp {
                coeffs: tone,
                target: tone,
                step: [0.0; 3],
                state: FilterState::default(),
            },
            traditional: GainStage::new(config, defaults.gain, fs)?,
            neural,
            neural_rest,
            gain: Smoother::new(fs),
            treble: Smoother::new(fs),
            level: Smoother::new(fs),
            started: false,
            counter: 0,
            engine: defaults.engine,
            fade: None,
        })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn neural_available(&self) -> bool {
        self.neural.is_some()
    }

    /// The engine currently playing (the destination during a crossfade).
    pub fn engine(&self) -> Engine {
        self.engine
    }

    /// Samples into the current crossfade, if one is running.
    pub fn fade_position(&self) -> Option<usize> {
        self.fade.map(|f| f.pos)
    }

    pub fn tone_coeffs(&self) -> FirstOrderCoeffs {
        self.tone.coeffs
    }

    /// Smoothed `(gain, treble, level)`.
    pub fn smoothed(&self) -> (f64, f64, f64) {
        (self.gain.value, self.treble.value, self.level.value)
    }

    /// Per-sample smoothing coefficient of the control smoothers.
    pub fn smoothing_alpha(&self) -> f64 {
        self.gain.alpha
    }

    pub fn gain_stage(&self) -> &GainStage {
        &self.traditional
    }

    pub fn model_bank(&self) -> Option<&ModelBank> {
        self.neural.as_ref()
    }

    /// Return to the freshly constructed state.
    pub fn reset(&mut self) {
        self.input_buffer.reset();
        self.output_buffer.reset();
        self.tone.state = FilterState::default();
        self.traditional.reset();
        if let Some(bank) = &mut self.neural {
            bank.reset();
            bank.settle();
        }
        self.started = false;
        self.counter = 0;
        self.fade = None;
    }

    fn check_engine(&self, engine: Engine) -> Result<(), PedalError> {
        if engine == Engine::Neural && self.neural.is_none() {
            return Err(PedalError::SampleRate {
                fs: self.fs,
                required: MODEL_SAMPLE_RATE,
            });
        }
        Ok(())
    }

    fn tone_target(&self, treble: f64) -> Result<FirstOrderCoeffs, PedalError> {
        Ok(bilinear_transform(tone_analog_prototype(&self.tone_parts, treble)?, self.fs)?)
    }

    fn start(&mut self, params: &PedalParams) -> Result<(), PedalError> {
        self.gain.snap(params.gain);
        self.treble.snap(params.treble);
        self.level.snap(params.level);
        self.traditional.set_gain(params.gain)?;
        let tone = self.tone_target(params.treble)?;
        self.tone.retarget(tone, true);
        self.engine = params.engine;
        self.fade = None;
        self.started = true;
        Ok(())
    }

    fn circuit_running(&self) -> bool {
        self.engine == Engine::Traditional || self.fade.is_some_and(|f| f.from == Engine::Traditional)
    }

    fn switch_engine(&mut self, to: Engine) -> Result<(), PedalError> {
        if to == self.engine {
            return Ok(());
        }
        match self.fade {
            // Reversing a fade in progress: both engines are warm, so pick up
            // from the mirrored position.
            Some(f) if f.from == to => {
                self.fade = Some(Fade {
                    from: self.engine,
                    pos: CROSSFADE_LEN - f.pos,
                });
            }
            _ => {
                match to {
                    Engine::Traditional => {
                        self.traditional.reset();
                        self.traditional.set_gain(self.gain.value)?;
                    }
                    Engine::Neural => {
                        if let Some(bank) = &mut self.neural {
                            bank.reset();
                            bank.settle();
                        }
                    }
                }
                self.fade = Some(Fade {
                    from: self.engine,
                    pos: 0,
                });
            }
        }
        self.engine = to;
        Ok(())
    }

    fn run_engine(&mut self, engine: Engine, gain: f64, x: f64) -> Result<f64, PedalError> {
        match engine {
            Engine::Traditional => Ok(self.traditional.tick(x)?),
            Engine::Neural => Ok(self
                .neural
                .as_mut()
                .expect("availability checked before processing")
                .tick(gain, x)
                - blend_values(gain, &self.neural_rest)),
        }
    }

    /// Process `block` in place with `params` as the control targets.
    pub fn process_block(&mut self, params: &PedalParams, block: &mut [f64]) -> Result<(), PedalError> {
        params.validate()?;
        self.check_engine(params.engine)?;
        if !self.started {
            self.start(params)?;
        }
        self.gain.target = params.gain;
        self.treble.target = params.treble;
        self.level.target = params.level;
        self.switch_engine(params.engine)?;

        for x in block.iter_mut() {
            let gain = self.gain.step();
            let treble = self.treble.step();
            let level = self.level.step();
            if self.counter.is_multiple_of(CONTROL_PERIOD) {
                // The idle engine is left untouched; it is re-tuned when it
                // next starts.
                if self.circuit_running() {
                    self.traditional.set_gain(gain)?;
                }
                let tone = self.tone_target(treble)?;
                self.tone.retarget(tone, false);
            }
            self.counter += 1;

            let buffered = self.input_buffer.tick(*x);
            let driven = match self.fade {
                None => self.run_engine(self.engine, gain, buffered)?,
                Some(mut fade) => {
                    let old = self.run_engine(fade.from, gain, buffered)?;
                    let new = self.run_engine(self.engine, gain, buffered)?;
                    fade.pos += 1;
                    let t = fade.pos as f64 / CROSSFADE_LEN as f64;
                    self.fade = (fade.pos < CROSSFADE_LEN).then_some(fade);
                    (1.0 - t) * old + t * new
                }
            };
            let toned = self.tone.tick(driven);
            *x = self.output_buffer.tick(toned) * level_taper(level);
        }
        Ok(())
    }
}

/// Sum of absolute impulse-response samples of a first-order section.
pub fn l1_norm(c: &FirstOrderCoeffs) -> f64 {
    c.b0.abs() + (c.b1 - c.a1 * c.b0).abs() / (1.0 - c.a1.abs())
}

fn tree_l1(mut tick: impl FnMut(f64) -> f64, fs: f64) -> f64 {
    let mut sum = tick(1.0).abs();
    for _ in 1..(2.0 * fs) as usize {
        sum += tick(0.0).abs();
    }
    sum
}

/// Upper bound on the circuit engine's output magnitude for inputs in
/// `[-1, 1]` at fixed `gain` and `level` and any treble setting.
///
/// Linear sections contribute the l1 norms of their impulse responses; the
/// clipper current is limited by the diode pair, which cannot pass more
/// than the current the source can push through R13 while the coupling
/// capacitor holds at most the peak source voltage.
pub fn traditional_output_bound(
    config: &ComponentConfig,
    fs: f64,
    gain: f64,
    level: f64,
) -> Result<f64, PedalError> {
    let coeffs = |stage| -> Result<FirstOrderCoeffs, PedalError> {
        Ok(stage_coeffs(&StageConfig::from_config(stage, config)?, fs)?)
    };
    let input = l1_norm(&coeffs(StageId::InputBuffer)?);

    let mut ff1 = circuits::build_ff1_preamp(config, fs)?;
    let r5 = ff1.tree.find("R5").expect("bias resistor");
    let mut preamp_taps = Vec::new();
    let ff1_current = tree_l1(
        |x| {
            let i = ff1.current(x).expect("linear tree");
            preamp_taps.push(ff1.tree.voltage(r5));
            i
        },
        fs,
    );
    let preamp: f64 = preamp_taps.iter().map(|v| v.abs()).sum::<f64>()
        * (1.0 + config.get("R6")? / config.get("R8")?);

    let (_, lower) = circuits::gain_segments(config.get("RV1")?, gain);
    let amp = l1_norm(&stage_coeffs(&StageConfig::amp_stage(config, lower)?, fs)?);
    let v_amp = input * preamp * amp;

    let mut ff2 = circuits::build_ff2(config, gain, fs)?;
    let ff2_current = tree_l1(|x| ff2.current(x).expect("linear tree"), fs);

    let d = circuits::diodes_from_config(config)?;
    let r18 = config.get("R18")?;
    let i_max = 2.0 * v_amp / config.get("R13")?;
    let v_d = (r18 * i_max).min(d.n * d.vt * (i_max / (2.0 * d.is)).asinh());
    let i_clip = v_d / r18;

    let currents = input * ff1_current + v_amp * ff2_current + i_clip;
    let summing = l1_norm(&coeffs(StageId::SummingAmp)?) * config.get("R19")?;

    let tone_parts = ToneComponents::from_config(config)?;
    let mut tone: f64 = 0.0;
    for k in 0..=100 {
        let c = bilinear_transform(tone_analog_prototype(&tone_parts, k as f64 / 100.0)?, fs)?;
        tone = tone.max(l1_norm(&c));
    }
    let output = l1_norm(&coeffs(StageId::OutputBuffer)?);
    // Small allowance for the truncated tails and the discretized clipper.
    Ok(1.05 * currents * summing * tone * output * level_taper(level))
}
