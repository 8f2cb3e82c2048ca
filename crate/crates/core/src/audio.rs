//! Audio signals and WAV file I/O.
//!
//! The pipeline works on mono signals normalized to `[-1, 1]`. Files are
//! read from 16-bit signed PCM or 32-bit float WAV and written as 16 kHz
//! 16-bit PCM.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("wav {path}: {source}")]
    Wav {
        path: String,
        #[source]
        source: hound::Error,
    },
    #[error("unsupported wav {path}: {reason}")]
    Unsupported { path: String, reason: String },
}

/// A mono audio signal with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioSignal {
    /// Wrap samples, clamping amplitudes into `[-1, 1]`.
    ///
    /// Panics if `sample_rate_hz` is zero.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        assert!(sample_rate_hz > 0, "sample rate must be positive");
        let samples = samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
        AudioSignal {
            samples,
            sample_rate_hz,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Read a mono WAV file (16-bit signed PCM or 32-bit float).
    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self, AudioError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let wrap = |source| AudioError::Wav {
            path: display.clone(),
            source,
        };

        let mut reader = hound::WavReader::open(path).map_err(wrap)?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(AudioError::Unsupported {
                path: display,
                reason: format!("{} channels, expected mono", spec.channels),
            });
        }

        let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Int, 16) => reader
                .samples::<i16>()
                .map(|s| s.map(|v| f64::from(v) / 32768.0))
                .collect::<Result<_, _>>()
                .map_err(wrap)?,
            (hound::SampleFormat::Float, 32) => reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<Result<_, _>>()
                .map_err(wrap)?,
            (fmt, bits) => {
                return Err(AudioError::Unsupported {
                    path: display,
                    reason: format!("{bits}-bit {fmt:?}"),
                })
            }
        };

        Ok(AudioSignal::new(samples, spec.sample_rate))
    }

    /// Write as 16-bit signed PCM.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<(), AudioError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let wrap = |source| AudioError::Wav {
            path: display.clone(),
            source,
        };

        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate_hz,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
        for &s in &self.samples {
            let q = (s * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(q).map_err(wrap)?;
        }
        writer.finalize().map_err(wrap)
    }
}
