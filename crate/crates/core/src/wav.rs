//! Mono WAV input and output (16-bit PCM or 32-bit float).

use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a readable WAV file: {0}")]
    Format(String),
    #[error("unsupported encoding: {0} (expected 16-bit PCM or 32-bit float)")]
    Encoding(String),
    #[error("unsupported channel count {0} (expected 1 or 2)")]
    Channels(u16),
}

impl From<hound::Error> for WavError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(e) => WavError::Io(e),
            hound::Error::Unsupported => WavError::Encoding("unsupported WAV variant".into()),
            other => WavError::Format(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Pcm16,
    Float32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WavSpec {
    pub sample_rate: u32,
    pub channels: u16,
    pub encoding: Encoding,
}

/// Mono samples in `[-1, 1]` full scale, with the spec they were read with.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub spec: WavSpec,
    pub samples: Vec<f64>,
}

pub fn read<R: Read>(reader: R) -> Result<Audio, WavError> {
    let mut wav = hound::WavReader::new(reader)?;
    let s = wav.spec();
    let encoding = match (s.sample_format, s.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => Encoding::Pcm16,
        (hound::SampleFormat::Float, 32) => Encoding::Float32,
        (format, bits) => return Err(WavError::Encoding(format!("{bits}-bit {format:?}"))),
    };
    if !(1..=2).contains(&s.channels) {
        return Err(WavError::Channels(s.channels));
    }
    let interleaved: Vec<f64> = match encoding {
        Encoding::Pcm16 => wav
            .samples::<i16>()
            .map(|v| v.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()?,
        Encoding::Float32 => wav
            .samples::<f32>()
            .map(|v| v.map(f64::from))
            .collect::<Result<_, _>>()?,
    };
    let samples = if s.channels == 2 {
        interleaved.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect()
    } else {
        interleaved
    };
    Ok(Audio {
        spec: WavSpec {
            sample_rate: s.sample_rate,
            channels: s.channels,
            encoding,
        },
        samples,
    })
}

pub fn read_bytes(bytes: &[u8]) -> Result<Audio, WavError> {
    read(Cursor::new(bytes))
}

pub fn read_file(path: impl AsRef<Path>) -> Result<Audio, WavError> {
    read(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Write mono `samples` at `sample_rate`. PCM values are rounded and
/// saturated to the 16-bit range.
pub fn write<W: Write + Seek>(writer: W, sample_rate: u32, encoding: Encoding, samples: &[f64]) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: match encoding {
            Encoding::Pcm16 => 16,
            Encoding::Float32 => 32,
        },
        sample_format: match encoding {
            Encoding::Pcm16 => hound::SampleFormat::Int,
            Encoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut w = hound::WavWriter::new(writer, spec)?;
    match encoding {
        Encoding::Pcm16 => {
            for &x in samples {
                w.write_sample((x * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
            }
        }
        Encoding::Float32 => {
            for &x in samples {
                w.write_sample(x as f32)?;
            }
        }
    }
    w.finalize()?;
    Ok(())
}

pub fn write_bytes(sample_rate: u32, encoding: Encoding, samples: &[f64]) -> Result<Vec<u8>, WavError> {
    let mut cursor = Cursor::new(Vec::new());
    write(&mut cursor, sample_rate, encoding, samples)?;
    Ok(cursor.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_both_encodings() {
        let pcm: Vec<f64> = (-5..5).map(|k| k as f64 * 1000.0 / 32768.0).collect();
        let bytes = write_bytes(44100, Encoding::Pcm16, &pcm).unwrap();
        let back = read_bytes(&bytes).unwrap();
        assert_eq!(back.samples, pcm);
        assert_eq!(back.spec.encoding, Encoding::Pcm16);

        let float: Vec<f64> = (0..100).map(|k| ((k as f64) * 0.37).sin() as f32 as f64).collect();
        let bytes = write_bytes(48000, Encoding::Float32, &float).unwrap();
        let back = read_bytes(&bytes).unwrap();
        assert_eq!(back.samples, float);
        assert_eq!(back.spec.sample_rate, 48000);
        assert_eq!(write_bytes(48000, Encoding::Float32, &back.samples).unwrap(), bytes);
    }

    #[test]
    fn stereo_is_averaged() {
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
        for (l, r) in [(1000i16, 3000i16), (-200, 200)] {
            w.write_sample(l).unwrap();
            w.write_sample(r).unwrap();
        }
        w.finalize().unwrap();
        let audio = read_bytes(&cursor.into_inner()).unwrap();
        assert_eq!(audio.samples, vec![2000.0 / 32768.0, 0.0]);
        assert_eq!(audio.spec.channels, 2);
    }

    #[test]
    fn rejects_other_formats() {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 44100,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_bytes(&cursor.into_inner()), Err(WavError::Encoding(_))));
        assert!(matches!(read_bytes(b"definitely not audio"), Err(WavError::Format(_))));
    }
}
