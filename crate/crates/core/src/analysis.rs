//! Measurement tools: error-to-signal ratio, sine-probe frequency response
//! and the block-size benchmark.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ComponentConfig, ConfigError};
use crate::linear::{bilinear_transform, tone_analog_prototype, FirstOrderFilter, LinearError, ToneComponents};
use crate::pedal::{Engine, Pedal, PedalError, PedalParams};
use crate::rnn::ModelBank;
use crate::signal::white_noise;

pub const BENCH_BLOCK_SIZES: [usize; 10] = [8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096];
pub const MIN_BENCH_SECONDS: f64 = 5.0;
pub const MIN_BENCH_REPETITIONS: usize = 5;

/// Published timings at a 64-sample block (circuit, neural), shown for
/// comparison only.
pub const REFERENCE_BLOCK: usize = 64;
pub const REFERENCE_TIMES: (f64, f64) = (0.0662835, 0.0502434);

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("signals differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference signal has zero energy")]
    ZeroReference,
    #[error("probe frequency {freq} Hz is not below Nyquist ({nyquist} Hz)")]
    AboveNyquist { freq: f64, nyquist: f64 },
    #[error("invalid probe: {0}")]
    Probe(String),
    #[error("benchmark needs at least {MIN_BENCH_SECONDS} s per measurement and {MIN_BENCH_REPETITIONS} repetitions")]
    BenchSettings,
    #[error(transparent)]
    Pedal(#[from] PedalError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsrReport {
    pub esr: f64,
    pub n: usize,
}

/// `Σ (y - ŷ)² / Σ y²`.
pub fn esr(reference: &[f64], estimate: &[f64]) -> Result<EsrReport, AnalysisError> {
    if reference.len() != estimate.len() {
        return Err(AnalysisError::LengthMismatch(reference.len(), estimate.len()));
    }
    let energy: f64 = reference.iter().map(|y| y * y).sum();
    if energy == 0.0 {
        return Err(AnalysisError::ZeroReference);
    }
    let error: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(y, e)| (y - e) * (y - e))
        .sum();
    Ok(EsrReport {
        esr: error / energy,
        n: reference.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub frequencies: Vec<f64>,
    pub magnitudes_db: Vec<f64>,
}

/// `n` log-spaced frequencies from `lo` to `hi` inclusive.
pub fn log_frequencies(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSettings {
    pub amplitude: f64,
    /// Settling time discarded before measuring, in seconds.
    pub warmup: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            amplitude: 1e-3,
            warmup: 0.2,
        }
    }
}

/// Complex amplitude of `x` at `omega` (radians per sample), Hann-windowed.
fn correlate(x: &[f64], omega: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / n).cos();
        let ph = omega * k as f64;
        re += w * v * ph.cos();
        im -= w * v * ph.sin();
    }
    (re, im)
}

/// Magnitude response by sine probing. `make` builds a fresh processor for
/// each frequency; the processor filters a block in place.
pub fn freq_response<F, P>(
    mut make: F,
    freqs: &[f64],
    fs: f64,
    settings: ProbeSettings,
) -> Result<ResponseCurve, AnalysisError>
where
    F: FnMut() -> P,
    P: FnMut(&mut [f64]),
{
    if !(settings.amplitude > 0.0 && settings.warmup >= 0.0) {
        return Err(AnalysisError::Probe("amplitude must be positive and warm-up non-negative".into()));
    }
    let mut magnitudes_db = Vec::with_capacity(freqs.len());
    for &freq in freqs {
        if !(freq > 0.0 && freq < fs / 2.0) {
            return Err(AnalysisError::AboveNyquist {
                freq,
                nyquist: fs / 2.0,
            });
        }
        let warm = (settings.warmup * fs).round() as usize;
        // Whole cycles, at least 20 of them and at least 0.1 s.
        let cycles = (20.0f64).max((0.1 * freq).ceil());
        let len = (cycles * fs / freq).round() as usize;
        let omega = 2.0 * PI * freq / fs;
        let input: Vec<f64> = (0..warm + len)
            .map(|k| settings.amplitude * (omega * k as f64).sin())
            .collect();
        let mut output = input.clone();
        let mut process = make();
        process(&mut output);
        let (xr, xi) = correlate(&input[warm..], omega);
        let (yr, yi) = correlate(&output[warm..], omega);
        let ratio = ((yr * yr + yi * yi) / (xr * xr + xi * xi)).sqrt();
        magnitudes_db.push(20.0 * ratio.log10());
    }
    Ok(ResponseCurve {
        frequencies: freqs.to_vec(),
        magnitudes_db,
    })
}

/// Default display grid for response reports.
pub const RESPONSE_RANGE: (f64, f64) = (20.0, 20_000.0);
pub const RESPONSE_POINTS: usize = 61;

/// Tone stage alone: the probed digital filter and the analog prototype
/// evaluated on the same frequencies.
pub fn tone_response(
    config: &ComponentConfig,
    treble: f64,
    freqs: &[f64],
    fs: f64,
) -> Result<(ResponseCurve, Vec<f64>), AnalysisError> {
    let parts = ToneComponents::from_config(config)?;
    let proto = tone_analog_prototype(&parts, treble)?;
    let coeffs = bilinear_transform(proto, fs)?;
    let digital = freq_response(
        || {
            let mut f = FirstOrderFilter::new(coeffs);
            move |b: &mut [f64]| f.process(b)
        },
        freqs,
        fs,
        ProbeSettings::default(),
    )?;
    let analog = freqs.iter().map(|&f| 20.0 * proto.response(f).norm().log10()).collect();
    Ok((digital, analog))
}

/// Small-signal response of the whole pedal with fixed `params`.
pub fn pedal_response(
    config: &ComponentConfig,
    bank: &ModelBank,
    params: &PedalParams,
    freqs: &[f64],
    fs: f64,
) -> Result<ResponseCurve, AnalysisError> {
    let template = Pedal::with_bank(config, fs, bank.clone())?;
    // Surfaces parameter and sample-rate errors before probing.
    template.clone().process_block(params, &mut [])?;
    freq_response(
        || {
            let mut pedal = template.clone();
            let params = *params;
            move |b: &mut [f64]| pedal.process_block(&params, b).expect("checked above")
        },
        freqs,
        fs,
        ProbeSettings::default(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub block_size: usize,
    pub engine: Engine,
    /// Median wall-clock seconds spent per second of audio.
    pub compute_time_per_audio_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub duration_s: f64,
    pub repetitions: usize,
    pub sample_rate: f64,
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub engines: Vec<Engine>,
    pub block_sizes: Vec<usize>,
    pub duration_s: f64,
    pub repetitions: usize,
    pub fs: f64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            engines: Engine::ALL.to_vec(),
            block_sizes: BENCH_BLOCK_SIZES.to_vec(),
            duration_s: MIN_BENCH_SECONDS,
            repetitions: MIN_BENCH_REPETITIONS,
            fs: 44100.0,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Time every (engine, block size) cell on pre-generated noise. One
/// untimed warm-up pass precedes the timed repetitions; pedal construction
/// is not timed.
pub fn benchmark<F>(mut make: F, settings: &BenchSettings) -> Result<BenchReport, AnalysisError>
where
    F: FnMut() -> Result<Pedal, PedalError>,
{
    if settings.duration_s < MIN_BENCH_SECONDS || settings.repetitions < MIN_BENCH_REPETITIONS {
        return Err(AnalysisError::BenchSettings);
    }
    let input = white_noise(0xbe9c, (settings.duration_s * settings.fs).round() as usize, 0.5);
    let mut buffer = input.clone();
    let mut rows = Vec::new();
    for &engine in &settings.engines {
        let params = PedalParams {
            engine,
            ..PedalParams::default()
        };
        for &block in &settings.block_sizes {
            let mut times = Vec::with_capacity(settings.repetitions);
            for rep in 0..=settings.repetitions {
                let mut pedal = make()?;
                buffer.copy_from_slice(&input);
                let start = Instant::now();
                for chunk in buffer.chunks_mut(block) {
                    pedal.process_block(&params, chunk)?;
                }
                let elapsed = start.elapsed().as_secs_f64();
                std::hint::black_box(&buffer);
                if rep > 0 {
                    times.push(elapsed / settings.duration_s);
                }
            }
            rows.push(BenchRow {
                block_size: block,
                engine,
                compute_time_per_audio_second: median(times),
            });
        }
    }
    Ok(BenchReport {
        duration_s: settings.duration_s,
        repetitions: settings.repetitions,
        sample_rate: settings.fs,
        rows,
    })
}

impl BenchReport {
    pub fn cell(&self, block_size: usize, engine: Engine) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.block_size == block_size && r.engine == engine)
            .map(|r| r.compute_time_per_audio_second)
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.rows.iter().map(|r| r.block_size).collect();
        sizes.sort_unstable();
        sizes.dedup();
        sizes
    }

    /// Aligned columns: block size, then seconds of compute per second of
    /// audio for each engine.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "compute time per second of audio ({} s of audio, median of {})",
            self.duration_s, self.repetitions
        )
        .unwrap();
        writeln!(s, "{:>10}  {:>12}  {:>12}", "block", "traditional", "neural").unwrap();
        let cell = |b, e| match self.cell(b, e) {
            Some(t) => format!("{t:>12.7}"),
            None => format!("{:>12}", "-"),
        };
        for b in self.block_sizes() {
            writeln!(s, "{b:>10}  {}  {}", cell(b, Engine::Traditional), cell(b, Engine::Neural)).unwrap();
        }
        writeln!(
            s,
            "reference (published, block {REFERENCE_BLOCK}): traditional {}  neural {}",
            REFERENCE_TIMES.0, REFERENCE_TIMES.1
        )
        .unwrap();
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
