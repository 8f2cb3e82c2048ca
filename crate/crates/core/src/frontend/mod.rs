//! Log-RASTA-PLP front end.
//!
//! Converts a raw mono signal into one fixed-length feature vector per
//! utterance:
//!
//! 1. split into overlapping Hamming-windowed frames,
//! 2. drop leading/trailing low-energy frames,
//! 3. per frame, integrate the power spectrum into Bark critical bands
//!    with equal-loudness weighting,
//! 4. RASTA-bandpass each band's log-energy trajectory across frames,
//! 5. cube-root compress, convert to autocorrelation, fit an order-12
//!    all-pole model (Levinson-Durbin), expand to 13 cepstra per frame,
//! 6. truncate/zero-pad to a fixed frame count and flatten frame-major.

mod plp;

pub use plp::{
    bark, bark_to_hz, levinson_durbin, lpc_to_cepstra, plp_cepstra, plp_spectrum, rasta_filter,
    LpcModel, PlpAnalyzer,
};

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::audio::AudioSignal;
use crate::mat::Mat;

/// Floor applied to band energies before taking logs for RASTA filtering.
const LOG_ENERGY_FLOOR: f64 = 1e-20;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("signal too short: {len} samples, need at least {frame_samples}")]
    SignalTooShort { len: usize, frame_samples: usize },
    #[error("singular Toeplitz system: prediction-error variance reached zero")]
    SingularToeplitz,
    #[error("only {bands} critical bands, model order needs {needed}")]
    TooFewBands { bands: usize, needed: usize },
    #[error("invalid frontend config: {0}")]
    BadConfig(String),
    #[error("features csv line {line}: {msg}")]
    FeatureCsv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Front-end configuration.
///
/// `hop_ms` defaults to `frame_ms - overlap_ms`; set it explicitly to use a
/// conventional fixed hop instead.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    pub frame_ms: f64,
    pub overlap_ms: f64,
    pub hop_ms: Option<f64>,
    /// All-pole model order; one cepstrum more than this is emitted.
    pub model_order: usize,
    /// Fixed per-utterance frame count after truncation/padding.
    pub target_frames: usize,
    /// Endpointing threshold below the loudest frame, in dB.
    pub trim_threshold_db: f64,
    pub rasta_enabled: bool,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            frame_ms: 25.0,
            overlap_ms: 10.0,
            hop_ms: None,
            model_order: 12,
            target_frames: 12,
            trim_threshold_db: 40.0,
            rasta_enabled: true,
        }
    }
}

impl FrontendConfig {
    /// Number of cepstral coefficients per frame (`model_order + 1`).
    pub fn n_cepstra(&self) -> usize {
        self.model_order + 1
    }

    /// Flattened feature length (`n_cepstra * target_frames`).
    pub fn feature_len(&self) -> usize {
        self.n_cepstra() * self.target_frames
    }

    fn effective_hop_ms(&self) -> f64 {
        self.hop_ms.unwrap_or(self.frame_ms - self.overlap_ms)
    }

    pub fn validate(&self) -> Result<(), FrontendError> {
        if !(self.overlap_ms > 0.0 && self.overlap_ms < self.frame_ms) {
            return Err(FrontendError::BadConfig(format!(
                "overlap {} ms must be in (0, frame {} ms)",
                self.overlap_ms, self.frame_ms
            )));
        }
        if self.effective_hop_ms() <= 0.0 {
            return Err(FrontendError::BadConfig("hop must be positive".into()));
        }
        if self.model_order < 1 {
            return Err(FrontendError::BadConfig("model order must be >= 1".into()));
        }
        if self.target_frames < 1 {
            return Err(FrontendError::BadConfig(
                "target_frames must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Hamming-windowed frames of a signal.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub frames: Mat,
    pub frame_samples: usize,
    pub hop_samples: usize,
}

impl FrameMatrix {
    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }
}

/// One utterance as a flattened, fixed-length cepstral matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceFeature {
    /// Frame-major concatenation, length `n_cepstra * target_frames`.
    pub values: Vec<f64>,
    /// Frames actually observed; the rest of `values` is zero padding.
    pub n_valid_frames: usize,
}

fn hamming_window(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Split a signal into Hamming-windowed frames.
///
/// `hop = round((frame_ms - overlap_ms) * rate / 1000)` samples unless
/// overridden; frame `i` starts at sample `i * hop`.
pub fn frame_signal(
    signal: &AudioSignal,
    cfg: &FrontendConfig,
) -> Result<FrameMatrix, FrontendError> {
    cfg.validate()?;
    let rate = f64::from(signal.sample_rate_hz());
    let frame_samples = (cfg.frame_ms * rate / 1000.0).round() as usize;
    let hop_samples = (cfg.effective_hop_ms() * rate / 1000.0).round() as usize;
    if frame_samples == 0 || hop_samples == 0 {
        return Err(FrontendError::BadConfig(
            "frame and hop must be at least one sample".into(),
        ));
    }

    let n = signal.len();
    if n < frame_samples {
        return Err(FrontendError::SignalTooShort {
            len: n,
            frame_samples,
        });
    }

    let n_frames = (n - frame_samples) / hop_samples + 1;
    let window = hamming_window(frame_samples);
    let samples = signal.samples();

    let mut frames = Mat::zeros(n_frames, frame_samples);
    for i in 0..n_frames {
        let start = i * hop_samples;
        let row = frames.row_mut(i);
        for (j, w) in window.iter().enumerate() {
            row[j] = w * samples[start + j];
        }
    }

    Ok(FrameMatrix {
        frames,
        frame_samples,
        hop_samples,
    })
}

fn frame_energy_db(frame: &[f64]) -> f64 {
    let e: f64 = frame.iter().map(|x| x * x).sum();
    10.0 * e.log10()
}

/// Drop the maximal leading and trailing runs of frames quieter than
/// `trim_threshold_db` below the loudest frame. Interior frames are never
/// dropped. Degenerate inputs where every frame falls below the threshold
/// keep the single loudest frame.
pub fn trim_silence(frames: &FrameMatrix, cfg: &FrontendConfig) -> FrameMatrix {
    let n = frames.n_frames();
    assert!(n >= 1, "need at least one frame");

    let energies: Vec<f64> = frames.frames.iter_rows().map(frame_energy_db).collect();
    let max_db = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let threshold = max_db - cfg.trim_threshold_db;

    let first = energies.iter().position(|&e| e >= threshold);
    let (first, last) = match first {
        Some(f) => {
            let l = energies.iter().rposition(|&e| e >= threshold).unwrap();
            (f, l)
        }
        None => {
            let loudest = energies
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            (loudest, loudest)
        }
    };

    let kept: Vec<Vec<f64>> = (first..=last)
        .map(|i| frames.frames.row(i).to_vec())
        .collect();
    FrameMatrix {
        frames: Mat::from_rows(&kept),
        frame_samples: frames.frame_samples,
        hop_samples: frames.hop_samples,
    }
}

/// Truncate or zero-pad per-frame cepstra to `target_frames` and flatten
/// frame-major.
pub fn assemble_utterance(cepstra: &[Vec<f64>], cfg: &FrontendConfig) -> UtteranceFeature {
    assert!(!cepstra.is_empty(), "need at least one cepstral frame");
    let n_cep = cfg.n_cepstra();
    let t = cfg.target_frames;

    let n_valid = cepstra.len().min(t);
    let mut values = vec![0.0; n_cep * t];
    for (i, frame) in cepstra.iter().take(n_valid).enumerate() {
        debug_assert_eq!(frame.len(), n_cep);
        values[i * n_cep..(i + 1) * n_cep].copy_from_slice(frame);
    }

    UtteranceFeature {
        values,
        n_valid_frames: n_valid,
    }
}

/// Per-frame cepstra of one utterance: framing, endpointing, critical-band
/// analysis, optional RASTA filtering, and all-pole cepstra.
///
/// This is [`extract_utterance`] without the final fixed-length assembly;
/// callers that derive `target_frames` from a corpus maximum use it to
/// count frames first.
pub fn utterance_cepstra(
    signal: &AudioSignal,
    cfg: &FrontendConfig,
) -> Result<Vec<Vec<f64>>, FrontendError> {
    let framed = frame_signal(signal, cfg)?;
    let trimmed = trim_silence(&framed, cfg);

    let analyzer = PlpAnalyzer::new(trimmed.frame_samples, signal.sample_rate_hz());
    let n_bands = analyzer.n_bands();
    if n_bands < cfg.model_order + 1 {
        return Err(FrontendError::TooFewBands {
            bands: n_bands,
            needed: cfg.model_order + 1,
        });
    }

    let n_frames = trimmed.n_frames();
    let mut band_frames = Mat::zeros(n_frames, n_bands);
    for (i, frame) in trimmed.frames.iter_rows().enumerate() {
        band_frames
            .row_mut(i)
            .copy_from_slice(&analyzer.bark_energies(frame));
    }

    if cfg.rasta_enabled {
        let mut trajectory = vec![0.0; n_frames];
        for b in 0..n_bands {
            for (t, x) in trajectory.iter_mut().enumerate() {
                *x = band_frames.at(t, b).max(LOG_ENERGY_FLOOR).ln();
            }
            let filtered = rasta_filter(&trajectory);
            for (t, &v) in filtered.iter().enumerate() {
                band_frames.set(t, b, v.exp());
            }
        }
    }

    band_frames
        .iter_rows()
        .map(|bands| plp_cepstra(bands, cfg))
        .collect()
}

/// Full front end: signal in, fixed-length flattened feature out.
pub fn extract_utterance(
    signal: &AudioSignal,
    cfg: &FrontendConfig,
) -> Result<UtteranceFeature, FrontendError> {
    let cepstra = utterance_cepstra(signal, cfg)?;
    Ok(assemble_utterance(&cepstra, cfg))
}

/// One feature row: utterance id plus its flattened feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub utterance_id: String,
    pub feature: UtteranceFeature,
}

/// Write feature records as CSV rows `id,n_valid_frames,v0,v1,...`.
///
/// Values use the shortest decimal form that parses back to the identical
/// `f64`, so a write/read cycle is lossless.
pub fn write_features_csv(
    path: impl AsRef<Path>,
    records: &[FeatureRecord],
) -> Result<(), FrontendError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for rec in records {
        write!(w, "{},{}", rec.utterance_id, rec.feature.n_valid_frames)?;
        for v in &rec.feature.values {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a feature CSV written by [`write_features_csv`].
pub fn read_features_csv(path: impl AsRef<Path>) -> Result<Vec<FeatureRecord>, FrontendError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    let mut width = None;

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut fields = line.split(',');
        let id = fields
            .next()
            .ok_or(FrontendError::FeatureCsv {
                line: lineno,
                msg: "missing utterance id".into(),
            })?
            .to_string();
        let n_valid: usize = fields
            .next()
            .ok_or(FrontendError::FeatureCsv {
                line: lineno,
                msg: "missing n_valid_frames".into(),
            })?
            .parse()
            .map_err(|e| FrontendError::FeatureCsv {
                line: lineno,
                msg: format!("bad n_valid_frames: {e}"),
            })?;
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse().map_err(|e| FrontendError::FeatureCsv {
                    line: lineno,
                    msg: format!("bad value {f:?}: {e}"),
                })
            })
            .collect::<Result<_, _>>()?;

        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(FrontendError::FeatureCsv {
                    line: lineno,
                    msg: format!("row has {} values, expected {w}", values.len()),
                })
            }
            _ => {}
        }

        records.push(FeatureRecord {
            utterance_id: id,
            feature: UtteranceFeature {
                values,
                n_valid_frames: n_valid,
            },
        });
    }
    Ok(records)
}
