//! Deterministic test signals.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform white noise in `[-amplitude, amplitude)`.
pub fn white_noise(seed: u64, len: usize, amplitude: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| amplitude * rng.gen_range(-1.0..1.0)).collect()
}

pub fn sine(freq: f64, amplitude: f64, fs: f64, len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| amplitude * (2.0 * PI * freq * n as f64 / fs).sin())
        .collect()
}

/// A guitar-like phrase: Karplus-Strong plucks on a few open-chord notes,
/// normalized to `peak` volts.
pub fn guitar_like(seed: u64, seconds: f64, fs: f64, peak: f64) -> Vec<f64> {
    const NOTES: [f64; 6] = [82.41, 110.0, 146.83, 196.0, 246.94, 329.63];
    let len = (seconds * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let spacing = (0.25 * fs) as usize;
    let mut start = 0;
    while start < len {
        let freq = NOTES[rng.gen_range(0..NOTES.len())];
        let period = (fs / freq).round().max(2.0) as usize;
        let mut line: Vec<f64> = (0..period).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let velocity = rng.gen_range(0.5..1.0);
        let ring = len.min(start + (2.0 * fs) as usize);
        for (k, n) in (start..ring).enumerate() {
            let i = k % period;
            let next = line[(i + 1) % period];
            let y = line[i];
            line[i] = 0.996 * 0.5 * (y + next);
            out[n] += velocity * y;
        }
        start += spacing + rng.gen_range(0..spacing);
    }
    let max = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max > 0.0 {
        out.iter_mut().for_each(|x| *x *= peak / max);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_scaled() {
        assert_eq!(white_noise(3, 100, 0.5), white_noise(3, 100, 0.5));
        assert!(white_noise(3, 1000, 0.5).iter().all(|x| x.abs() <= 0.5));
        let g = guitar_like(1, 1.0, 44100.0, 0.3);
        assert_eq!(g.len(), 44100);
        let peak = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((peak - 0.3).abs() < 1e-12);
    }
}
