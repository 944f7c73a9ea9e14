//! The gain stage's wave digital sub-circuits.
//!
//! Each sub-circuit is described once as a [`SubCircuit`]; the same
//! description yields both the [`WdfTree`] and a netlist in the text format
//! below, so an external circuit simulator can be fed exactly the circuit
//! the WDF realizes. Every 4.5 V rail is AC ground and the summing amp's
//! inverting input (`sum`) is a virtual ground, so sub-circuits see it as
//! node `0`.
//!
//! Netlist lines: `Rname p q ohms`, `Cname p q farads`, `Vname p q IN`
//! (follows the circuit input) or `Vname p q volts`, `Dname p q IS= N= VT=`
//! (antiparallel diode pair), `Oname out in+ in-` (ideal op-amp).
//!
//! The sub-circuits, with orientation `p -> q`:
//!
//! ```text
//! FF-1 + pre-amp   Vin(in,0) drives S1{C3(in,a), P0{R5(a,0),
//!                  S2{R7(a,b), P1{C16(b,0), S3{R19(b,z), RB(z,0)}}}}}
//!                  pre-amp out = v(a) * (1 + R6/R8); i_ff1 = i(R19)
//! clipper          diode pair at the root (d,0) over P{S{C10(d,c),
//!                  R13 source(c,0) driven by the amp output}, R18(d,0)}
//!                  i_clip = i(R18)
//! FF-2             Vamp(amp,0) drives S{RV1U(amp,w), P{RV1L(w,0),
//!                  S{C15(w,f), P{C13(f,0), R17(f,0)}}}}
//!                  i_ff2 = i(R17)
//! ```
//!
//! The gain pot splits into an upper segment `(1 - gain) * RV1` and a lower
//! segment `gain * RV1`, each clamped to at least 1 ohm. The lower segment
//! of the other gang sits in the amplifier's feedback path.

use std::fmt::Write as _;

use thiserror::Error;

use crate::config::{ComponentConfig, ConfigError};
use crate::linear::{stage_coeffs, FilterState, FirstOrderCoeffs, LinearError, StageConfig, StageId};
use crate::wdf::{DiodePair, NodeId, TreeBuilder, WdfError, WdfTree};

/// Smallest resistance a potentiometer segment may take.
pub const MIN_SEGMENT: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Wdf(#[from] WdfError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error("gain must lie in [0, 1], got {0}")]
    Gain(f64),
}

/// A one-port leaf or a two-child adaptor.
#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Resistor(String, f64),
    Capacitor(String, f64),
    /// Voltage source behind a series resistance. An `input` source follows
    /// the circuit input, any other sits at 0 V.
    Source { name: String, ohms: f64, input: bool },
    Series(String, Box<Part>, Box<Part>),
    Parallel(String, Box<Part>, Box<Part>),
}

impl Part {
    pub fn resistor(name: &str, ohms: f64) -> Self {
        Part::Resistor(name.into(), ohms)
    }

    pub fn capacitor(name: &str, farads: f64) -> Self {
        Part::Capacitor(name.into(), farads)
    }

    pub fn series(name: &str, first: Part, second: Part) -> Self {
        Part::Series(name.into(), Box::new(first), Box::new(second))
    }

    pub fn parallel(name: &str, first: Part, second: Part) -> Self {
        Part::Parallel(name.into(), Box::new(first), Box::new(second))
    }
}

/// The unadapted element terminating the tree.
#[derive(Debug, Clone, PartialEq)]
pub enum RootPart {
    /// Ideal voltage source following the circuit input.
    Input(String),
    Diodes(String, DiodePair),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubCircuit {
    pub root: RootPart,
    pub top: Part,
}

impl SubCircuit {
    pub fn build(&self, fs: f64) -> Result<WdfTree, WdfError> {
        fn add(b: &mut TreeBuilder, part: &Part) -> NodeId {
            match part {
                Part::Resistor(n, r) => b.resistor(n, *r),
                Part::Capacitor(n, c) => b.capacitor(n, *c),
                Part::Source { name, ohms, .. } => b.resistive_source(name, *ohms),
                Part::Series(n, x, y) => {
                    let (x, y) = (add(b, x), add(b, y));
                    b.series(n, x, y)
                }
                Part::Parallel(n, x, y) => {
                    let (x, y) = (add(b, x), add(b, y));
                    b.parallel(n, x, y)
                }
            }
        }
        let mut b = TreeBuilder::new();
        let root = match &self.root {
            RootPart::Input(n) => b.ideal_source(n),
            RootPart::Diodes(n, d) => b.diode_pair(n, *d),
        };
        let top = add(&mut b, &self.top);
        b.build(root, top, fs)
    }

    /// Netlist of the same circuit. Element names match the tree's node
    /// names; a source `X` becomes `V_X` in series with resistor `X`.
    pub fn netlist(&self) -> String {
        fn emit(out: &mut String, part: &Part, p: &str, q: &str, next: &mut usize) {
            let mut fresh = || {
                *next += 1;
                format!("n{next}")
            };
            match part {
                Part::Resistor(n, r) => writeln!(out, "{n} {p} {q} {r:e}").unwrap(),
                Part::Capacitor(n, c) => writeln!(out, "{n} {p} {q} {c:e}").unwrap(),
                Part::Source { name, ohms, input } => {
                    let mid = fresh();
                    let value = if *input { "IN" } else { "0" };
                    writeln!(out, "V_{name} {p} {mid} {value}").unwrap();
                    writeln!(out, "{name} {mid} {q} {ohms:e}").unwrap();
                }
                Part::Series(_, x, y) => {
                    let mid = fresh();
                    emit(out, x, p, &mid, next);
                    emit(out, y, &mid, q, next);
                }
                Part::Parallel(_, x, y) => {
                    emit(out, x, p, q, next);
                    emit(out, y, p, q, next);
                }
            }
        }
        let mut out = String::new();
        match &self.root {
            RootPart::Input(n) => writeln!(out, "{n} top 0 IN").unwrap(),
            RootPart::Diodes(n, d) => {
                writeln!(out, "{n} top 0 IS={:e} N={:e} VT={:e}", d.is, d.n, d.vt).unwrap()
            }
        }
        let mut next = 0;
        emit(&mut out, &self.top, "top", "0", &mut next);
        out
    }
}

/// Upper and lower gain-pot segments for `gain`.
pub fn gain_segments(rv1: f64, gain: f64) -> (f64, f64) {
    (
        ((1.0 - gain) * rv1).max(MIN_SEGMENT),
        (gain * rv1).max(MIN_SEGMENT),
    )
}

pub fn diodes_from_config(config: &ComponentConfig) -> Result<DiodePair, ConfigError> {
    Ok(DiodePair {
        is: config.get("D_IS")?,
        vt: config.get("D_VT")?,
        n: config.get("D_N")?,
    })
}

/// The first feed-forward network alone (no pre-amp bias resistor).
pub fn ff1_circuit(config: &ComponentConfig) -> Result<SubCircuit, ConfigError> {
    Ok(SubCircuit {
        root: RootPart::Input("Vin".into()),
        top: Part::series(
            "S1",
            Part::capacitor("C3", config.get("C3")?),
            Part::series("S2", Part::resistor("R7", config.get("R7")?), ff1_tail(config)?),
        ),
    })
}

fn ff1_tail(config: &ComponentConfig) -> Result<Part, ConfigError> {
    Ok(Part::parallel(
        "P1",
        Part::capacitor("C16", config.get("C16")?),
        Part::series(
            "S3",
            Part::resistor("R19", config.get("R19")?),
            Part::Source {
                name: "RB".into(),
                ohms: config.get("RB")?,
                input: false,
            },
        ),
    ))
}

pub fn ff1_preamp_circuit(config: &ComponentConfig) -> Result<SubCircuit, ConfigError> {
    Ok(SubCircuit {
        root: RootPart::Input("Vin".into()),
        top: Part::series(
            "S1",
            Part::capacitor("C3", config.get("C3")?),
            Part::parallel(
                "P0",
                Part::resistor("R5", config.get("R5")?),
                Part::series("S2", Part::resistor("R7", config.get("R7")?), ff1_tail(config)?),
            ),
        ),
    })
}

pub fn clipper_circuit(config: &ComponentConfig) -> Result<SubCircuit, ConfigError> {
    Ok(SubCircuit {
        root: RootPart::Diodes("D1".into(), diodes_from_config(config)?),
        top: Part::parallel(
            "P",
            Part::series(
                "S",
                Part::capacitor("C10", config.get("C10")?),
                Part::Source {
                    name: "R13".into(),
                    ohms: config.get("R13")?,
                    input: true,
                },
            ),
            Part::resistor("R18", config.get("R18")?),
        ),
    })
}

pub fn ff2_circuit(config: &ComponentConfig, gain: f64) -> Result<SubCircuit, CircuitError> {
    if !(0.0..=1.0).contains(&gain) {
        return Err(CircuitError::Gain(gain));
    }
    let (upper, lower) = gain_segments(config.get("RV1")?, gain);
    Ok(SubCircuit {
        root: RootPart::Input("Vamp".into()),
        top: Part::series(
            "S1",
            Part::resistor("RV1U", upper),
            Part::parallel(
                "P1",
                Part::resistor("RV1L", lower),
                Part::series(
                    "S2",
                    Part::capacitor("C15", config.get("C15")?),
                    Part::parallel(
                        "P2",
                        Part::capacitor("C13", config.get("C13")?),
                        Part::resistor("R17", config.get("R17")?),
                    ),
                ),
            ),
        ),
    })
}

/// A built tree with its input node and one output node.
#[derive(Debug, Clone, PartialEq)]
pub struct Tapped {
    pub tree: WdfTree,
    pub input: NodeId,
    pub tap: NodeId,
}

impl Tapped {
    fn new(circuit: &SubCircuit, input: &str, tap: &str, fs: f64) -> Result<Self, WdfError> {
        let tree = circuit.build(fs)?;
        let input = tree.find(input).expect("input node exists");
        let tap = tree.find(tap).expect("tap node exists");
        Ok(Self { tree, input, tap })
    }

    /// Drive the input, run one sample, return the tap's branch current.
    #[inline]
    pub fn current(&mut self, v: f64) -> Result<f64, WdfError> {
        self.tree.set_source(self.input, v)?;
        self.tree.process()?;
        Ok(self.tree.current(self.tap))
    }
}

pub fn build_ff1(config: &ComponentConfig, fs: f64) -> Result<Tapped, CircuitError> {
    Ok(Tapped::new(&ff1_circuit(config)?, "Vin", "R19", fs)?)
}

/// FF-1 joined with the pre-amp input; the tap is the R19 branch.
pub fn build_ff1_preamp(config: &ComponentConfig, fs: f64) -> Result<Tapped, CircuitError> {
    Ok(Tapped::new(&ff1_preamp_circuit(config)?, "Vin", "R19", fs)?)
}

pub fn build_clipper(config: &ComponentConfig, fs: f64) -> Result<Tapped, CircuitError> {
    Ok(Tapped::new(&clipper_circuit(config)?, "R13", "R18", fs)?)
}

pub fn build_ff2(config: &ComponentConfig, gain: f64, fs: f64) -> Result<Tapped, CircuitError> {
    Ok(Tapped::new(&ff2_circuit(config, gain)?, "Vamp", "R17", fs)?)
}

/// One sample of the gain stage's internal signals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GainStageTaps {
    pub preamp: f64,
    pub amp: f64,
    pub i_ff1: f64,
    pub i_clip: f64,
    pub i_ff2: f64,
    pub output: f64,
}

/// The traditional gain stage: WDF sub-circuits plus nodal amplifier and
/// summing stages.
#[derive(Debug, Clone, PartialEq)]
pub struct GainStage {
    config: ComponentConfig,
    fs: f64,
    gain: f64,
    preamp_gain: f64,
    r19: f64,
    rv1: f64,
    rv1_upper: NodeId,
    rv1_lower: NodeId,
    r5: NodeId,
    ff1: Tapped,
    clipper: Tapped,
    ff2: Tapped,
    amp: FirstOrderCoeffs,
    amp_state: FilterState,
    summing: FirstOrderCoeffs,
    summing_state: FilterState,
}

impl GainStage {
    pub fn new(config: &ComponentConfig, gain: f64, fs: f64) -> Result<Self, CircuitError> {
        let ff1 = build_ff1_preamp(config, fs)?;
        let ff2 = build_ff2(config, gain, fs)?;
        let clipper = build_clipper(config, fs)?;
        let rv1 = config.get("RV1")?;
        let (_, lower) = gain_segments(rv1, gain);
        let amp = stage_coeffs(&StageConfig::amp_stage(config, lower)?, fs)?;
        let summing = stage_coeffs(&StageConfig::from_config(StageId::SummingAmp, config)?, fs)?;
        Ok(Self {
            preamp_gain: 1.0 + config.get("R6")? / config.get("R8")?,
            r19: config.get("R19")?,
            rv1,
            rv1_upper: ff2.tree.find("RV1U").expect("pot node"),
            rv1_lower: ff2.tree.find("RV1L").expect("pot node"),
            r5: ff1.tree.find("R5").expect("bias node"),
            config: config.clone(),
            fs,
            gain,
            ff1,
            clipper,
            ff2,
            amp,
            amp_state: FilterState::default(),
            summing,
            summing_state: FilterState::default(),
        })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Move the gain pot: re-adapts FF-2 and recomputes the amp stage.
    pub fn set_gain(&mut self, gain: f64) -> Result<(), CircuitError> {
        if !(0.0..=1.0).contains(&gain) {
            return Err(CircuitError::Gain(gain));
        }
        if gain == self.gain {
            return Ok(());
        }
        let (upper, lower) = gain_segments(self.rv1, gain);
        self.ff2.tree.set_resistance(self.rv1_upper, upper)?;
        self.ff2.tree.set_resistance(self.rv1_lower, lower)?;
        self.amp = stage_coeffs(&StageConfig::amp_stage(&self.config, lower)?, self.fs)?;
        self.gain = gain;
        Ok(())
    }

    pub fn amp_coeffs(&self) -> FirstOrderCoeffs {
        self.amp
    }

    pub fn summing_coeffs(&self) -> FirstOrderCoeffs {
        self.summing
    }

    /// Run one sample and report every intermediate signal.
    pub fn tick_taps(&mut self, x: f64) -> Result<GainStageTaps, WdfError> {
        let i_ff1 = self.ff1.current(x)?;
        let preamp = self.ff1.tree.voltage(self.r5) * self.preamp_gain;
        let amp = self.amp_state.tick(&self.amp, preamp);
        let i_clip = self.clipper.current(amp)?;
        let i_ff2 = self.ff2.current(amp)?;
        // The summing amp coefficients are referred to an R19 input resistor.
        let output = self.summing_state.tick(&self.summing, (i_ff1 + i_clip + i_ff2) * self.r19);
        Ok(GainStageTaps {
            preamp,
            amp,
            i_ff1,
            i_clip,
            i_ff2,
            output,
        })
    }

    #[inline]
    pub fn tick(&mut self, x: f64) -> Result<f64, WdfError> {
        Ok(self.tick_taps(x)?.output)
    }

    pub fn process(&mut self, block: &mut [f64]) -> Result<(), WdfError> {
        for x in block.iter_mut() {
            *x = self.tick(*x)?;
        }
        Ok(())
    }

    /// Clear all reactive state.
    pub fn reset(&mut self) {
        self.ff1.tree.reset();
        self.clipper.tree.reset();
        self.ff2.tree.reset();
        self.amp_state = FilterState::default();
        self.summing_state = FilterState::default();
    }

    /// Netlist of the whole stage with ideal op-amps, in the format of the
    /// module docs. `sum` is the summing amp's inverting input and `out`
    /// its output.
    pub fn netlist(&self) -> String {
        let c = |name: &str| self.config.get(name).expect("validated at construction");
        let (upper, lower) = gain_segments(self.rv1, self.gain);
        let d = diodes_from_config(&self.config).expect("validated at construction");
        let mut s = String::new();
        let mut line = |text: String| {
            s.push_str(&text);
            s.push('\n');
        };
        line("Vin in 0 IN".into());
        // FF-1 and the pre-amp input
        line(format!("C3 in a {:e}", c("C3")));
        line(format!("R5 a 0 {:e}", c("R5")));
        line(format!("R7 a b {:e}", c("R7")));
        line(format!("C16 b 0 {:e}", c("C16")));
        line(format!("R19 b z {:e}", c("R19")));
        line("V_RB z zb 0".into());
        line(format!("RB zb sum {:e}", c("RB")));
        // non-inverting pre-amp
        line("O1 pre a pm".into());
        line(format!("R6 pre pm {:e}", c("R6")));
        line(format!("R8 pm 0 {:e}", c("R8")));
        // amplifier stage
        line("O2 amp pre g".into());
        line(format!("R9 g 0 {:e}", c("R9")));
        line(format!("R10 g h {:e}", c("R10")));
        line(format!("RV1B h amp {lower:e}"));
        line(format!("C7 g amp {:e}", c("C7")));
        // clipper
        line(format!("R13 amp cl {:e}", c("R13")));
        line(format!("C10 d cl {:e}", c("C10")));
        line(format!("D1 d 0 IS={:e} N={:e} VT={:e}", d.is, d.n, d.vt));
        line(format!("R18 d sum {:e}", c("R18")));
        // FF-2
        line(format!("RV1U amp w {upper:e}"));
        line(format!("RV1L w 0 {lower:e}"));
        line(format!("C15 w f {:e}", c("C15")));
        line(format!("C13 f 0 {:e}", c("C13")));
        line(format!("R17 f sum {:e}", c("R17")));
        // inverting summing amp
        line("O3 out 0 sum".into());
        line(format!("R20 sum out {:e}", c("R20")));
        line(format!("C12 sum out {:e}", c("C12")));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_clamp() {
        assert_eq!(gain_segments(100e3, 0.0), (100e3, 1.0));
        assert_eq!(gain_segments(100e3, 1.0), (1.0, 100e3));
        assert_eq!(gain_segments(100e3, 0.25), (75e3, 25e3));
    }

    #[test]
    fn netlist_names_every_leaf() {
        let text = ff1_preamp_circuit(&ComponentConfig::canonical()).unwrap().netlist();
        for name in ["Vin", "C3", "R5", "R7", "C16", "R19", "V_RB", "RB"] {
            assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name}\n{text}");
        }
    }

    #[test]
    fn missing_component_is_reported() {
        let mut c = ComponentConfig::canonical();
        c.remove("C16");
        assert_eq!(
            build_ff1_preamp(&c, 44100.0).unwrap_err(),
            CircuitError::Config(ConfigError::Missing("C16".into()))
        );
        assert!(matches!(GainStage::new(&ComponentConfig::canonical(), 1.5, 44100.0), Err(CircuitError::Gain(_))));
    }

    #[test]
    fn silence_in_silence_out() {
        let mut g = GainStage::new(&ComponentConfig::canonical(), 0.5, 44100.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(g.tick(0.0).unwrap(), 0.0);
        }
    }
}
