//! Neural gain stage: an 8-unit GRU with a one-neuron linear head, and a
//! bank of five such models trained at different gain settings.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const UNITS: usize = 8;
/// Gain settings of the bank's models.
pub const GAIN_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// Sample rate the models were trained at.
pub const MODEL_SAMPLE_RATE: f64 = 44100.0;
pub const DEMO_SEED: u64 = 0x6b6c6f6e;

const DEMO_WEIGHTS: &str = include_str!("../weights/demo_weights.json");

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("reading weights: {0}")]
    Io(String),
    #[error("malformed weight file: {0}")]
    Json(String),
    #[error("weight bank needs {} models, found {found}", GAIN_GRID.len())]
    BankIncomplete { found: usize },
    #[error("no model for gain {0}")]
    MissingGain(f64),
    #[error("model at gain {gain}: {matrix} should be {expected}, found {found}")]
    Dimension {
        gain: f64,
        matrix: &'static str,
        expected: String,
        found: String,
    },
    #[error("model at gain {gain}: {matrix} contains a non-finite value")]
    NonFinite { gain: f64, matrix: &'static str },
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate weights. Input kernels are stored as vectors since the input is
/// scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GruWeights {
    pub wz: [f64; UNITS],
    pub wr: [f64; UNITS],
    pub wc: [f64; UNITS],
    pub uz: [[f64; UNITS]; UNITS],
    pub ur: [[f64; UNITS]; UNITS],
    pub uc: [[f64; UNITS]; UNITS],
    pub bz: [f64; UNITS],
    pub br: [f64; UNITS],
    pub bc: [f64; UNITS],
}

impl GruWeights {
    pub const ZERO: GruWeights = GruWeights {
        wz: [0.0; UNITS],
        wr: [0.0; UNITS],
        wc: [0.0; UNITS],
        uz: [[0.0; UNITS]; UNITS],
        ur: [[0.0; UNITS]; UNITS],
        uc: [[0.0; UNITS]; UNITS],
        bz: [0.0; UNITS],
        br: [0.0; UNITS],
        bc: [0.0; UNITS],
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseWeights {
    pub w: [f64; UNITS],
    pub b: f64,
}

#[inline]
fn dot(a: &[f64; UNITS], b: &[f64; UNITS]) -> f64 {
    let mut acc = 0.0;
    for i in 0..UNITS {
        acc += a[i] * b[i];
    }
    acc
}

/// One GRU update of `h` for input `x`.
#[inline]
pub fn gru_step(w: &GruWeights, h: &mut [f64; UNITS], x: f64) {
    let prev = *h;
    for i in 0..UNITS {
        let z = sigmoid(w.wz[i] * x + dot(&w.uz[i], &prev) + w.bz[i]);
        let r = sigmoid(w.wr[i] * x + dot(&w.ur[i], &prev) + w.br[i]);
        let c = (w.wc[i] * x + r * dot(&w.uc[i], &prev) + w.bc[i]).tanh();
        h[i] = z * prev[i] + (1.0 - z) * c;
    }
    debug_assert!(
        h.iter().all(|v| v.abs() <= 1.0 + 1e-12),
        "GRU state left [-1, 1]: {h:?}"
    );
}

#[inline]
pub fn dense_forward(w: &DenseWeights, h: &[f64; UNITS]) -> f64 {
    dot(&w.w, h) + w.b
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruModel {
    pub gru: GruWeights,
    pub dense: DenseWeights,
    pub h: [f64; UNITS],
}

impl GruModel {
    pub fn new(gru: GruWeights, dense: DenseWeights) -> Self {
        Self {
            gru,
            dense,
            h: [0.0; UNITS],
        }
    }

    #[inline]
    pub fn tick(&mut self, x: f64) -> f64 {
        gru_step(&self.gru, &mut self.h, x);
        dense_forward(&self.dense, &self.h)
    }

    pub fn reset(&mut self) {
        self.h = [0.0; UNITS];
    }

    /// Run on silence until the state stops changing and return the
    /// resting output.
    pub fn settle(&mut self) -> f64 {
        for _ in 0..SETTLE_LIMIT {
            let before = self.h;
            gru_step(&self.gru, &mut self.h, 0.0);
            if before == self.h {
                break;
            }
        }
        dense_forward(&self.dense, &self.h)
    }
}

/// Most silent steps [`GruModel::settle`] takes.
pub const SETTLE_LIMIT: usize = 100_000;

/// Interpolate per-model `values` at `gain` the way the bank blends outputs.
pub fn blend_values(gain: f64, values: &[f64; 5]) -> f64 {
    let (lo, w) = bank_position(gain);
    if w == 0.0 {
        values[lo]
    } else if w == 1.0 {
        values[lo + 1]
    } else {
        (1.0 - w) * values[lo] + w * values[lo + 1]
    }
}

/// Five models on [`GAIN_GRID`], all stepped every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBank {
    models: Vec<GruModel>,
    outputs: [f64; 5],
}

/// Interpolation position of `gain` on the grid: lower model index and the
/// weight of the upper one.
pub fn bank_position(gain: f64) -> (usize, f64) {
    let p = gain.clamp(0.0, 1.0) * (GAIN_GRID.len() - 1) as f64;
    let lo = (p.floor() as usize).min(GAIN_GRID.len() - 2);
    (lo, p - lo as f64)
}

impl ModelBank {
    pub fn new(models: [GruModel; 5]) -> Self {
        Self {
            models: models.into(),
            outputs: [0.0; 5],
        }
    }

    /// Like [`ModelBank::new`] but rejecting non-finite weights.
    pub fn try_new(models: [GruModel; 5]) -> Result<Self, WeightsError> {
        Self::from_file_models(
            GAIN_GRID
                .iter()
                .zip(&models)
                .map(|(&gain, m)| ModelFile::from_model(gain, m))
                .collect(),
        )
    }

    /// The demonstration weights bundled with the crate.
    pub fn demo() -> Self {
        Self::from_json(DEMO_WEIGHTS).expect("bundled weights are valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WeightsError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| WeightsError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, WeightsError> {
        let file: Vec<ModelFile> = serde_json::from_str(text).map_err(|e| WeightsError::Json(e.to_string()))?;
        Self::from_file_models(file)
    }

    fn from_file_models(file: Vec<ModelFile>) -> Result<Self, WeightsError> {
        if file.len() != GAIN_GRID.len() {
            return Err(WeightsError::BankIncomplete { found: file.len() });
        }
        let mut models = Vec::with_capacity(GAIN_GRID.len());
        for &g in &GAIN_GRID {
            let entry = file
                .iter()
                .find(|m| (m.gain - g).abs() < 1e-9)
                .ok_or(WeightsError::MissingGain(g))?;
            models.push(entry.to_model()?);
        }
        Ok(Self {
            models,
            outputs: [0.0; 5],
        })
    }

    pub fn to_json(&self) -> String {
        let file: Vec<ModelFile> = GAIN_GRID
            .iter()
            .zip(&self.models)
            .map(|(&gain, m)| ModelFile::from_model(gain, m))
            .collect();
        serde_json::to_string_pretty(&file).expect("weights serialize")
    }

    pub fn models(&self) -> &[GruModel] {
        &self.models
    }

    /// Step every model on `x` and blend the two bracketing `gain`.
    #[inline]
    pub fn tick(&mut self, gain: f64, x: f64) -> f64 {
        for (y, m) in self.outputs.iter_mut().zip(self.models.iter_mut()) {
            *y = m.tick(x);
        }
        self.blend(gain)
    }

    /// Blend the outputs of the most recent step.
    pub fn blend(&self, gain: f64) -> f64 {
        blend_values(gain, &self.outputs)
    }

    /// Settle every model on silence; returns the resting outputs.
    pub fn settle(&mut self) -> [f64; 5] {
        for (out, m) in self.outputs.iter_mut().zip(&mut self.models) {
            *out = m.settle();
        }
        self.outputs
    }

    /// Per-model outputs of the most recent step.
    pub fn outputs(&self) -> [f64; 5] {
        self.outputs
    }

    pub fn process(&mut self, gain: f64, block: &mut [f64]) {
        for x in block.iter_mut() {
            *x = self.tick(gain, *x);
        }
    }

    pub fn reset(&mut self) {
        self.models.iter_mut().for_each(GruModel::reset);
        self.outputs = [0.0; 5];
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GruFile {
    #[serde(rename = "Wz")]
    wz: Vec<Vec<f64>>,
    #[serde(rename = "Wr")]
    wr: Vec<Vec<f64>>,
    #[serde(rename = "Wc")]
    wc: Vec<Vec<f64>>,
    #[serde(rename = "Uz")]
    uz: Vec<Vec<f64>>,
    #[serde(rename = "Ur")]
    ur: Vec<Vec<f64>>,
    #[serde(rename = "Uc")]
    uc: Vec<Vec<f64>>,
    bz: Vec<f64>,
    br: Vec<f64>,
    bc: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DenseFile {
    #[serde(rename = "W")]
    w: Vec<f64>,
    b: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    gain: f64,
    gru: GruFile,
    dense: DenseFile,
}

fn shape(m: &[Vec<f64>]) -> String {
    let cols: Vec<usize> = m.iter().map(Vec::len).collect();
    match cols.first() {
        Some(&c) if cols.iter().all(|&x| x == c) => format!("{}x{c}", m.len()),
        Some(_) => format!("{} ragged rows", m.len()),
        None => "0x0".into(),
    }
}

impl ModelFile {
    fn to_model(&self) -> Result<GruModel, WeightsError> {
        let gain = self.gain;
        let dim = |matrix: &'static str, expected: String, found: String| WeightsError::Dimension {
            gain,
            matrix,
            expected,
            found,
        };
        let finite = |matrix: &'static str, values: &mut dyn Iterator<Item = &f64>| {
            if values.filter(|v| !v.is_finite()).count() == 0 {
                Ok(())
            } else {
                Err(WeightsError::NonFinite { gain, matrix })
            }
        };
        let kernel = |matrix: &'static str, m: &[Vec<f64>]| -> Result<[f64; UNITS], WeightsError> {
            if m.len() != UNITS || m.iter().any(|r| r.len() != 1) {
                return Err(dim(matrix, format!("{UNITS}x1"), shape(m)));
            }
            finite(matrix, &mut m.iter().flatten())?;
            Ok(std::array::from_fn(|i| m[i][0]))
        };
        let recurrent = |matrix: &'static str, m: &[Vec<f64>]| -> Result<[[f64; UNITS]; UNITS], WeightsError> {
            if m.len() != UNITS || m.iter().any(|r| r.len() != UNITS) {
                return Err(dim(matrix, format!("{UNITS}x{UNITS}"), shape(m)));
            }
            finite(matrix, &mut m.iter().flatten())?;
            Ok(std::array::from_fn(|i| std::array::from_fn(|j| m[i][j])))
        };
        let vector = |matrix: &'static str, v: &[f64]| -> Result<[f64; UNITS], WeightsError> {
            if v.len() != UNITS {
                return Err(dim(matrix, format!("{UNITS}"), v.len().to_string()));
            }
            finite(matrix, &mut v.iter())?;
            Ok(std::array::from_fn(|i| v[i]))
        };
        let g = &self.gru;
        let gru = GruWeights {
            wz: kernel("Wz", &g.wz)?,
            wr: kernel("Wr", &g.wr)?,
            wc: kernel("Wc", &g.wc)?,
            uz: recurrent("Uz", &g.uz)?,
            ur: recurrent("Ur", &g.ur)?,
            uc: recurrent("Uc", &g.uc)?,
            bz: vector("bz", &g.bz)?,
            br: vector("br", &g.br)?,
            bc: vector("bc", &g.bc)?,
        };
        let w = vector("W", &self.dense.w)?;
        finite("b", &mut std::iter::once(&self.dense.b))?;
        Ok(GruModel::new(gru, DenseWeights { w, b: self.dense.b }))
    }

    fn from_model(gain: f64, m: &GruModel) -> Self {
        let col = |v: &[f64; UNITS]| v.iter().map(|&x| vec![x]).collect();
        let mat = |m: &[[f64; UNITS]; UNITS]| m.iter().map(|r| r.to_vec()).collect();
        let g = &m.gru;
        ModelFile {
            gain,
            gru: GruFile {
                wz: col(&g.wz),
                wr: col(&g.wr),
                wc: col(&g.wc),
                uz: mat(&g.uz),
                ur: mat(&g.ur),
                uc: mat(&g.uc),
                bz: g.bz.to_vec(),
                br: g.br.to_vec(),
                bc: g.bc.to_vec(),
            },
            dense: DenseFile {
                w: m.dense.w.to_vec(),
                b: m.dense.b,
            },
        }
    }
}

/// Deterministic stand-in weights shaped like a soft clipper whose drive
/// grows with gain. Values are rounded to 6 decimals so the JSON form is
/// exact.
pub fn generate_demo_bank(seed: u64) -> ModelBank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = |lo: f64, hi: f64| (rng.gen_range(lo..hi) * 1e6_f64).round() / 1e6;
    let models: [GruModel; 5] = std::array::from_fn(|k| {
        let drive = 1.0 + 12.0 * GAIN_GRID[k];
        let mut w = GruWeights::ZERO;
        for i in 0..UNITS {
            w.wz[i] = q(-0.1, 0.1);
            w.wr[i] = q(-0.1, 0.1);
            w.wc[i] = ((0.6 + 0.25 * i as f64) * drive * 1e6).round() / 1e6 + q(-0.05, 0.05);
            w.bz[i] = q(-4.2, -3.8);
            w.br[i] = q(-0.1, 0.1);
            w.bc[i] = q(-0.02, 0.02);
            for j in 0..UNITS {
                w.uz[i][j] = q(-0.1, 0.1);
                w.ur[i][j] = q(-0.1, 0.1);
                w.uc[i][j] = q(-0.1, 0.1);
            }
        }
        let dense = DenseWeights {
            w: std::array::from_fn(|_| q(-0.2, -0.1)),
            b: q(-0.01, 0.01),
        };
        GruModel::new(w, dense)
    });
    ModelBank::new(models)
}
