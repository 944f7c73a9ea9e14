//! Nodal-analysis models of the linear circuit sections.
//!
//! Every section reduces to a first-order analog transfer function
//! `(b1 s + b0) / (a1 s + a0)` that is digitized with the bilinear transform
//! and run as a first-order IIR filter.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::config::{ComponentConfig, ConfigError};

#[derive(Debug, Error, PartialEq)]
pub enum LinearError {
    #[error("analog prototype coefficients must be finite and the denominator non-zero")]
    InvalidPrototype,
    #[error("sample rate must be positive and finite, got {0}")]
    SampleRate(f64),
    #[error("bilinear transform is degenerate: digital denominator leading coefficient is zero")]
    DegeneratePrototype,
    #[error("digital pole {0} lies outside the unit circle")]
    Unstable(f64),
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("stage {stage}: {source}")]
    Component {
        stage: StageId,
        #[source]
        source: ConfigError,
    },
    #[error("treble must lie in [0, 1], got {0}")]
    Treble(f64),
}

/// Analog first-order section `(b1 s + b0) / (a1 s + a0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalogFirstOrder {
    pub b1: f64,
    pub b0: f64,
    pub a1: f64,
    pub a0: f64,
}

impl AnalogFirstOrder {
    pub fn new(b1: f64, b0: f64, a1: f64, a0: f64) -> Result<Self, LinearError> {
        let finite = [b1, b0, a1, a0].iter().all(|c| c.is_finite());
        if !finite || (a1 == 0.0 && a0 == 0.0) {
            return Err(LinearError::InvalidPrototype);
        }
        Ok(Self { b1, b0, a1, a0 })
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        (s * self.b1 + self.b0) / (s * self.a1 + self.a0)
    }

    /// Response on the imaginary axis at `freq` Hz.
    pub fn response(&self, freq: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, 2.0 * PI * freq))
    }

    /// True when the single pole lies in the open left half-plane.
    pub fn is_stable(&self) -> bool {
        self.a1 != 0.0 && -self.a0 / self.a1 < 0.0
    }
}

/// Digital first-order coefficients, normalized so the leading denominator
/// coefficient is one: `H(z) = (b0 + b1 z^-1) / (1 + a1 z^-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub a1: f64,
    pub fs: f64,
}

impl FirstOrderCoeffs {
    pub fn identity(fs: f64) -> Self {
        Self {
            b0: 1.0,
            b1: 0.0,
            a1: 0.0,
            fs,
        }
    }

    pub fn gain(g: f64, fs: f64) -> Self {
        Self {
            b0: g,
            b1: 0.0,
            a1: 0.0,
            fs,
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        (zi * self.b1 + self.b0) / (zi * self.a1 + 1.0)
    }

    /// `H(e^{jωT})` at `freq` Hz.
    pub fn response(&self, freq: f64) -> Complex64 {
        let w = 2.0 * PI * freq / self.fs;
        self.eval(Complex64::from_polar(1.0, w))
    }

    /// Upper bound on `max|y| / max|x|` for this recurrence.
    pub fn peak_gain_bound(&self) -> f64 {
        (self.b0.abs() + self.b1.abs()) / (1.0 - self.a1.abs())
    }
}

/// Digitize `proto` with `s <- 2 fs (1 - z^-1) / (1 + z^-1)`.
pub fn bilinear_transform(proto: AnalogFirstOrder, fs: f64) -> Result<FirstOrderCoeffs, LinearError> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(LinearError::SampleRate(fs));
    }
    let k = 2.0 * fs;
    let d0 = proto.a1 * k + proto.a0;
    if d0 == 0.0 {
        return Err(LinearError::DegeneratePrototype);
    }
    let coeffs = FirstOrderCoeffs {
        b0: (proto.b1 * k + proto.b0) / d0,
        b1: (proto.b0 - proto.b1 * k) / d0,
        a1: (proto.a0 - proto.a1 * k) / d0,
        fs,
    };
    if proto.is_stable() {
        assert!(coeffs.a1.abs() < 1.0, "stable prototype mapped outside the unit circle");
    } else if coeffs.a1.abs() > 1.0 {
        return Err(LinearError::Unstable(-coeffs.a1));
    }
    Ok(coeffs)
}

/// Analog frequency that the bilinear transform maps to digital `freq`.
pub fn prewarp(freq: f64, fs: f64) -> f64 {
    fs / PI * (PI * freq / fs).tan()
}

/// Component values of the tone control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneComponents {
    pub r21: f64,
    pub r22: f64,
    pub r23: f64,
    pub r24: f64,
    pub rv2: f64,
    pub c14: f64,
}

impl ToneComponents {
    pub fn from_config(config: &ComponentConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            r21: config.get("R21")?,
            r22: config.get("R22")?,
            r23: config.get("R23")?,
            r24: config.get("R24")?,
            rv2: config.get("RV2")?,
            c14: config.get("C14")?,
        })
    }

    /// Pot segments `(above wiper, below wiper)` for a treble setting.
    pub fn split(&self, treble: f64) -> (f64, f64) {
        ((1.0 - treble) * self.rv2, treble * self.rv2)
    }
}

impl Default for ToneComponents {
    fn default() -> Self {
        Self::from_config(&ComponentConfig::canonical()).expect("canonical tone values")
    }
}

/// Laplace-domain transfer function of the tone control.
///
/// The op-amp inverting input is a virtual ground; KCL there and at the
/// pot wiper gives an inverting first-order high shelf. The 4.5 V bias at
/// the non-inverting input is ignored.
pub fn tone_analog_prototype(c: &ToneComponents, treble: f64) -> Result<AnalogFirstOrder, LinearError> {
    if !(0.0..=1.0).contains(&treble) {
        return Err(LinearError::Treble(treble));
    }
    let (rv2a, rv2b) = c.split(treble);
    tone_from_segments(c, rv2a, rv2b)
}

fn tone_from_segments(c: &ToneComponents, rv2a: f64, rv2b: f64) -> Result<AnalogFirstOrder, LinearError> {
    let g_low = 1.0 / (c.r21 + rv2b);
    let g_high = 1.0 / (c.r23 + rv2a);
    AnalogFirstOrder::new(
        -c.c14 * (1.0 / c.r22 + g_low),
        -(g_low + g_high) / c.r22,
        c.c14 * (g_high + 1.0 / c.r24),
        (g_low + g_high) / c.r24,
    )
}

/// The linear sections modelled by nodal analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StageId {
    InputBuffer,
    Tone,
    OutputBuffer,
    AmpStage,
    SummingAmp,
}

impl StageId {
    pub const ALL: [StageId; 5] = [
        StageId::InputBuffer,
        StageId::Tone,
        StageId::OutputBuffer,
        StageId::AmpStage,
        StageId::SummingAmp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageId::InputBuffer => "input_buffer",
            StageId::Tone => "tone",
            StageId::OutputBuffer => "output_buffer",
            StageId::AmpStage => "amp_stage",
            StageId::SummingAmp => "summing_amp",
        }
    }

    /// Fixed components read by this stage's builder.
    fn components(self) -> &'static [&'static str] {
        match self {
            StageId::InputBuffer => &["C1", "R2"],
            StageId::Tone => &["R21", "R22", "R23", "R24", "C14"],
            StageId::OutputBuffer => &["C20", "R28"],
            StageId::AmpStage => &["R9", "R10", "C7"],
            StageId::SummingAmp => &["R19", "R20", "C12"],
        }
    }

    /// Potentiometer segments, which may legitimately be zero.
    fn segments(self) -> &'static [&'static str] {
        match self {
            StageId::Tone => &["RV2A", "RV2B"],
            StageId::AmpStage => &["RV1B"],
            _ => &[],
        }
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageId {
    type Err = LinearError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StageId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| LinearError::UnknownStage(s.to_string()))
    }
}

/// A stage together with the component values its builder reads.
#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub stage: StageId,
    pub components: BTreeMap<String, f64>,
}

impl StageConfig {
    /// Collect the stage's components from `config`. Pot-dependent stages
    /// need their segments added with [`StageConfig::with_segment`] or the
    /// dedicated constructors.
    pub fn from_config(stage: StageId, config: &ComponentConfig) -> Result<Self, LinearError> {
        let mut components = BTreeMap::new();
        for &name in stage.components() {
            let value = config
                .get(name)
                .map_err(|source| LinearError::Component { stage, source })?;
            components.insert(name.to_string(), value);
        }
        Ok(Self { stage, components })
    }

    pub fn tone(config: &ComponentConfig, treble: f64) -> Result<Self, LinearError> {
        if !(0.0..=1.0).contains(&treble) {
            return Err(LinearError::Treble(treble));
        }
        let rv2 = config.get("RV2").map_err(|source| LinearError::Component {
            stage: StageId::Tone,
            source,
        })?;
        Ok(Self::from_config(StageId::Tone, config)?
            .with_segment("RV2A", (1.0 - treble) * rv2)
            .with_segment("RV2B", treble * rv2))
    }

    /// Amplifier stage with the gain pot's lower segment in its feedback path.
    pub fn amp_stage(config: &ComponentConfig, rv1_lower: f64) -> Result<Self, LinearError> {
        Ok(Self::from_config(StageId::AmpStage, config)?.with_segment("RV1B", rv1_lower))
    }

    pub fn with_segment(mut self, name: &str, value: f64) -> Self {
        self.components.insert(name.to_string(), value);
        self
    }

    fn value(&self, name: &str) -> Result<f64, LinearError> {
        let missing = || LinearError::Component {
            stage: self.stage,
            source: ConfigError::Missing(name.to_string()),
        };
        let value = *self.components.get(name).ok_or_else(missing)?;
        let is_segment = self.stage.segments().contains(&name);
        let ok = value.is_finite() && if is_segment { value >= 0.0 } else { value > 0.0 };
        if !ok {
            return Err(LinearError::Component {
                stage: self.stage,
                source: ConfigError::NonPositive {
                    name: name.to_string(),
                    value,
                },
            });
        }
        Ok(value)
    }

    /// The stage's Laplace-domain transfer function.
    pub fn prototype(&self) -> Result<AnalogFirstOrder, LinearError> {
        match self.stage {
            StageId::InputBuffer => high_pass(self.value("C1")?, self.value("R2")?),
            StageId::OutputBuffer => high_pass(self.value("C20")?, self.value("R28")?),
            StageId::Tone => {
                let c = ToneComponents {
                    r21: self.value("R21")?,
                    r22: self.value("R22")?,
                    r23: self.value("R23")?,
                    r24: self.value("R24")?,
                    rv2: 0.0,
                    c14: self.value("C14")?,
                };
                tone_from_segments(&c, self.value("RV2A")?, self.value("RV2B")?)
            }
            StageId::AmpStage => {
                // 1 + Zf/Zg with Zf = Rf || Cf.
                let rg = self.value("R9")?;
                let rf = self.value("R10")? + self.value("RV1B")?;
                let tau = rf * self.value("C7")?;
                AnalogFirstOrder::new(tau, 1.0 + rf / rg, tau, 1.0)
            }
            StageId::SummingAmp => {
                // -Zf/Rin with Zf = Rf || Cf.
                let rin = self.value("R19")?;
                let rf = self.value("R20")?;
                let tau = rf * self.value("C12")?;
                AnalogFirstOrder::new(0.0, -rf / rin, tau, 1.0)
            }
        }
    }
}

fn high_pass(c: f64, r: f64) -> Result<AnalogFirstOrder, LinearError> {
    let tau = r * c;
    AnalogFirstOrder::new(tau, 0.0, tau, 1.0)
}

/// Digital coefficients for a configured stage.
pub fn stage_coeffs(cfg: &StageConfig, fs: f64) -> Result<FirstOrderCoeffs, LinearError> {
    bilinear_transform(cfg.prototype()?, fs)
}

/// Delay state of one first-order filter instance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FilterState {
    pub x1: f64,
    pub y1: f64,
}

impl FilterState {
    #[inline]
    pub fn tick(&mut self, c: &FirstOrderCoeffs, x: f64) -> f64 {
        let y = c.b0 * x + c.b1 * self.x1 - c.a1 * self.y1;
        self.x1 = x;
        self.y1 = y;
        y
    }
}

/// Run `block` through the filter in place, carrying `state` across calls.
pub fn process_first_order(coeffs: &FirstOrderCoeffs, state: &mut FilterState, block: &mut [f64]) {
    for x in block.iter_mut() {
        *x = state.tick(coeffs, *x);
    }
}

/// Coefficients plus their state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderFilter {
    pub coeffs: FirstOrderCoeffs,
    pub state: FilterState,
}

impl FirstOrderFilter {
    pub fn new(coeffs: FirstOrderCoeffs) -> Self {
        Self {
            coeffs,
            state: FilterState::default(),
        }
    }

    #[inline]
    pub fn tick(&mut self, x: f64) -> f64 {
        self.state.tick(&self.coeffs, x)
    }

    pub fn process(&mut self, block: &mut [f64]) {
        process_first_order(&self.coeffs, &mut self.state, block);
    }

    pub fn reset(&mut self) {
        self.state = FilterState::default();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(x: f64) -> f64 {
        20.0 * x.log10()
    }

    #[test]
    fn identity_prototype_passes_through() {
        let proto = AnalogFirstOrder::new(2e-3, 5.0, 2e-3, 5.0).unwrap();
        let c = bilinear_transform(proto, 44100.0).unwrap();
        assert!((c.b0 - 1.0).abs() < 1e-15);
        assert!((c.b1 - c.a1).abs() < 1e-15);
    }

    #[test]
    fn rc_lowpass_corner() {
        let (r, cap) = (1e3, 1e-6);
        let proto = AnalogFirstOrder::new(0.0, 1.0, r * cap, 1.0).unwrap();
        let c = bilinear_transform(proto, 44100.0).unwrap();
        let fc = 1.0 / (2.0 * PI * r * cap);
        assert!((fc - 159.155).abs() < 1e-3);
        // warping at fs/277 is ~1e-4 relative in frequency
        assert!((prewarp(fc, 44100.0) / fc - 1.0).abs() < 1e-4);
        let mag = db(c.response(fc).norm());
        assert!((mag + 3.0103).abs() < 0.05, "{mag}");
    }

    #[test]
    fn stable_prototype_maps_inside_unit_circle() {
        for &tau in &[1e-7, 1e-5, 1e-3, 1.0, 100.0] {
            let proto = AnalogFirstOrder::new(0.3, 1.0, tau, 1.0).unwrap();
            let c = bilinear_transform(proto, 44100.0).unwrap();
            assert!(c.a1.abs() < 1.0);
        }
    }

    #[test]
    fn degenerate_and_invalid() {
        // a1 k + a0 = 0
        let proto = AnalogFirstOrder::new(1.0, 1.0, 1.0, -88200.0).unwrap();
        assert_eq!(bilinear_transform(proto, 44100.0), Err(LinearError::DegeneratePrototype));
        assert_eq!(AnalogFirstOrder::new(1.0, 1.0, 0.0, 0.0), Err(LinearError::InvalidPrototype));
        assert_eq!(AnalogFirstOrder::new(f64::NAN, 1.0, 1.0, 0.0), Err(LinearError::InvalidPrototype));
        let ok = AnalogFirstOrder::new(0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(bilinear_transform(ok, 0.0), Err(LinearError::SampleRate(0.0)));
        let unstable = AnalogFirstOrder::new(0.0, 1.0, 1e-3, -1.0).unwrap();
        assert!(matches!(bilinear_transform(unstable, 44100.0), Err(LinearError::Unstable(_))));
    }

    #[test]
    fn tone_treble_zero_numerator() {
        let c = ToneComponents::default();
        let proto = tone_analog_prototype(&c, 0.0).unwrap();
        let expected = -c.c14 * (1.0 / c.r22 + 1.0 / c.r21);
        assert!((proto.b1 - expected).abs() <= 1e-15 * expected.abs());
        assert!(tone_analog_prototype(&c, 1.5).is_err());
    }

    #[test]
    fn tone_is_stable_everywhere() {
        let comps = ComponentConfig::canonical();
        for i in 0..=10 {
            let treble = i as f64 / 10.0;
            let cfg = StageConfig::tone(&comps, treble).unwrap();
            let c = stage_coeffs(&cfg, 44100.0).unwrap();
            assert!(c.a1.abs() < 1.0, "treble {treble}: a1 = {}", c.a1);
        }
    }

    #[test]
    fn stage_dc_and_errors() {
        let comps = ComponentConfig::canonical();
        let cfg = StageConfig::from_config(StageId::InputBuffer, &comps).unwrap();
        let c = stage_coeffs(&cfg, 44100.0).unwrap();
        assert!(c.response(0.0).norm() < 1e-9);
        assert!(c.b0 + c.b1 == 0.0 || (c.b0 + c.b1).abs() < 1e-15);

        assert!(matches!("preamp".parse::<StageId>(), Err(LinearError::UnknownStage(_))));
        for id in StageId::ALL {
            assert_eq!(id.as_str().parse::<StageId>().unwrap(), id);
        }

        let mut partial = comps.clone();
        partial.remove("C20");
        assert!(matches!(
            StageConfig::from_config(StageId::OutputBuffer, &partial),
            Err(LinearError::Component { stage: StageId::OutputBuffer, .. })
        ));

        // amp stage without its pot segment
        let amp = StageConfig::from_config(StageId::AmpStage, &comps).unwrap();
        assert!(stage_coeffs(&amp, 44100.0).is_err());
        let amp = StageConfig::amp_stage(&comps, 0.0).unwrap();
        assert!(stage_coeffs(&amp, 44100.0).is_ok());
        let amp = StageConfig::amp_stage(&comps, -1.0).unwrap();
        assert!(stage_coeffs(&amp, 44100.0).is_err());
    }

    #[test]
    fn summing_amp_flat_resistor_ratio() {
        let mut comps = ComponentConfig::canonical();
        comps.set("R19", 10e3);
        comps.set("R20", 10e3);
        comps.set("C12", 1e-18);
        let cfg = StageConfig::from_config(StageId::SummingAmp, &comps).unwrap();
        let c = stage_coeffs(&cfg, 44100.0).unwrap();
        for f in [20.0, 1000.0, 15000.0] {
            assert!((c.response(f) - Complex64::new(-1.0, 0.0)).norm() < 1e-6);
        }
        comps.set("R20", 33e3);
        let cfg = StageConfig::from_config(StageId::SummingAmp, &comps).unwrap();
        let c = stage_coeffs(&cfg, 44100.0).unwrap();
        assert!((c.response(1000.0).norm() - 3.3).abs() < 1e-6);
    }

    #[test]
    fn output_buffer_matches_analog_at_1k() {
        let comps = ComponentConfig::canonical();
        let cfg = StageConfig::from_config(StageId::OutputBuffer, &comps).unwrap();
        let proto = cfg.prototype().unwrap();
        let c = stage_coeffs(&cfg, 44100.0).unwrap();
        let diff = db(c.response(1000.0).norm()) - db(proto.response(1000.0).norm());
        assert!(diff.abs() < 0.1);
    }

    #[test]
    fn identity_and_zero_processing() {
        let mut f = FirstOrderFilter::new(FirstOrderCoeffs::identity(44100.0));
        let mut block = vec![0.5, -0.25, 1.0, 3.0];
        let orig = block.clone();
        f.process(&mut block);
        assert_eq!(block, orig);

        let comps = ComponentConfig::canonical();
        let cfg = StageConfig::tone(&comps, 0.3).unwrap();
        let mut f = FirstOrderFilter::new(stage_coeffs(&cfg, 44100.0).unwrap());
        let mut zeros = vec![0.0; 128];
        f.process(&mut zeros);
        assert!(zeros.iter().all(|&y| y == 0.0));
    }
}
