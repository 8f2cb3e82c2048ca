//! Corpus manifests, train/dev/test splitting, and a deterministic
//! synthetic corpus generator.
//!
//! Real corpora are referenced through a CSV manifest only; no audio is
//! bundled. The generator stands in for a multi-speaker isolated-word
//! corpus at desk scale: each word gets a fixed triple of formant-like
//! frequencies, each speaker a fixed frequency scaling, and each
//! repetition jitter plus noise whose strength grows with the speaker's
//! severity label.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::audio::{AudioError, AudioSignal};
use crate::seed::substream_seed;

pub const SAMPLE_RATE_HZ: u32 = 16_000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("word {word_id} maps to both {first:?} and {second:?}")]
    InconsistentVocabulary {
        word_id: usize,
        first: String,
        second: String,
    },
    #[error("speaker {speaker} word {word_id} has {reps} repetition(s), need at least 2")]
    TooFewRepetitions {
        speaker: String,
        word_id: usize,
        reps: usize,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Speaker impairment level; scales the generator's jitter and noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    High,
    Moderate,
    Mild,
}

impl Severity {
    /// Distortion multiplier applied to jitter and noise.
    pub fn distortion(self) -> f64 {
        match self {
            Severity::Mild => 1.0,
            Severity::Moderate => 2.0,
            Severity::High => 3.0,
        }
    }

    pub fn parse(s: &str) -> Option<Severity> {
        match s {
            "High" => Some(Severity::High),
            "Moderate" => Some(Severity::Moderate),
            "Mild" => Some(Severity::Mild),
            _ => None,
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::High => "High",
            Severity::Moderate => "Moderate",
            Severity::Mild => "Mild",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "dev" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub speaker_id: String,
    pub severity: Severity,
    pub word_id: usize,
    pub word_text: String,
    pub repetition: usize,
    /// Relative to the manifest's directory; doubles as the utterance id.
    pub audio_path: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    /// Word texts ordered by word id.
    pub vocabulary: Vec<String>,
    pub records: Vec<UtteranceRecord>,
}

impl CorpusManifest {
    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.speaker_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

const MANIFEST_HEADER: &str = "speaker_id,severity,word_id,word_text,repetition,audio_path,split";

/// Derive the vocabulary from the records and check its consistency.
fn build_vocabulary(records: &[UtteranceRecord]) -> Result<Vec<String>, CorpusError> {
    let mut by_id: BTreeMap<usize, String> = BTreeMap::new();
    for r in records {
        match by_id.get(&r.word_id) {
            None => {
                by_id.insert(r.word_id, r.word_text.clone());
            }
            Some(existing) if *existing != r.word_text => {
                return Err(CorpusError::InconsistentVocabulary {
                    word_id: r.word_id,
                    first: existing.clone(),
                    second: r.word_text.clone(),
                });
            }
            _ => {}
        }
    }
    Ok(by_id.into_values().collect())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest, CorpusError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or(CorpusError::ParseError {
        line: 1,
        msg: "empty file, expected header".into(),
    })?;
    let header = header?;
    let got: Vec<&str> = header.split(',').collect();
    let want: Vec<&str> = MANIFEST_HEADER.split(',').collect();
    for w in &want {
        if !got.contains(w) {
            return Err(CorpusError::ParseError {
                line: 1,
                msg: format!("missing column {w}"),
            });
        }
    }
    if got != want {
        return Err(CorpusError::ParseError {
            line: 1,
            msg: format!("expected header {MANIFEST_HEADER:?}"),
        });
    }

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CorpusError::ParseError {
                line: lineno,
                msg: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let parse_err = |msg: String| CorpusError::ParseError { line: lineno, msg };
        let severity = Severity::parse(fields[1])
            .ok_or_else(|| parse_err(format!("bad severity {:?}", fields[1])))?;
        let word_id: usize = fields[2]
            .parse()
            .map_err(|e| parse_err(format!("bad word_id: {e}")))?;
        let repetition: usize = fields[4]
            .parse()
            .map_err(|e| parse_err(format!("bad repetition: {e}")))?;
        let split = Split::parse(fields[6])
            .ok_or_else(|| parse_err(format!("bad split {:?}", fields[6])))?;
        records.push(UtteranceRecord {
            speaker_id: fields[0].to_string(),
            severity,
            word_id,
            word_text: fields[3].to_string(),
            repetition,
            audio_path: fields[5].to_string(),
            split,
        });
    }

    let vocabulary = build_vocabulary(&records)?;
    Ok(CorpusManifest {
        vocabulary,
        records,
    })
}

pub fn write_manifest(
    path: impl AsRef<Path>,
    manifest: &CorpusManifest,
) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{MANIFEST_HEADER}")?;
    for r in &manifest.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.speaker_id, r.severity, r.word_id, r.word_text, r.repetition, r.audio_path, r.split
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Synthetic corpus shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_words: usize,
    pub n_speakers: usize,
    pub n_repetitions: usize,
    pub seed: u64,
}

/// Hz frequency of a critical-band position (inverse of `6·asinh(f/600)`).
fn bark_to_hz(z: f64) -> f64 {
    600.0 * (z / 6.0).sinh()
}

/// Formant-like frequency triple for a word, on a mixed-radix lattice of
/// Bark-scale ladders placed at integer Bark positions — the centers of
/// the critical bands a rounding-based analyzer uses. The worst-case
/// combined severity-jitter and speaker-scale shift stays below half a
/// band, so each tone always lands in its own dedicated band and the
/// band-energy pattern identifies the word exactly. The small additive
/// f3 offset keeps triples distinct for vocabularies beyond the 5×5×3
/// lattice without exceeding the Nyquist frequency.
fn word_formants(word_id: usize) -> [f64; 3] {
    let i = (word_id % 5) as f64;
    let j = ((word_id / 5) % 5) as f64;
    let k = word_id / 25;
    let f1 = bark_to_hz(3.0 + i);
    let f2 = bark_to_hz(10.0 + j);
    let f3 = bark_to_hz(16.0 + (k % 3) as f64) + 3.0 * (k / 3) as f64;
    [f1, f2, f3]
}

fn speaker_id_for(index: usize) -> String {
    let sex = if index.is_multiple_of(2) { 'M' } else { 'F' };
    format!("{sex}{:02}", index / 2 + 1)
}

fn severity_for(index: usize) -> Severity {
    match index % 3 {
        0 => Severity::Mild,
        1 => Severity::Moderate,
        _ => Severity::High,
    }
}

fn synth_utterance(
    spec: &SynthSpec,
    speaker_index: usize,
    word_id: usize,
    repetition: usize,
) -> Vec<f64> {
    let speaker_id = speaker_id_for(speaker_index);
    let severity = severity_for(speaker_index);
    let mult = severity.distortion();

    // Per-speaker vocal-tract scaling. Kept within ±2% so that scale and
    // worst-case severity jitter combined shift a tone less than half a
    // critical band from its word's band center.
    let mut spk_rng =
        ChaCha8Rng::seed_from_u64(substream_seed(spec.seed, &["speaker", &speaker_id]));
    let speaker_scale = spk_rng.gen_range(0.98..1.02);

    // Word-anchored duration, so repetitions of one word stay comparable.
    let mut word_rng =
        ChaCha8Rng::seed_from_u64(substream_seed(spec.seed, &["word", &word_id.to_string()]));
    let base_duration = word_rng.gen_range(0.32..0.55);

    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(
        spec.seed,
        &[
            "utt",
            &speaker_id,
            &word_id.to_string(),
            &repetition.to_string(),
        ],
    ));

    let duration = (base_duration + mult * rng.gen_range(-0.015..0.015)).clamp(0.3, 0.6);
    let lead = rng.gen_range(0.05..0.15);
    let tail = rng.gen_range(0.05..0.15);

    let rate = f64::from(SAMPLE_RATE_HZ);
    let n_lead = (lead * rate) as usize;
    let n_voiced = (duration * rate) as usize;
    let n_tail = (tail * rate) as usize;

    let formants = word_formants(word_id);
    let amps = [1.0, 0.6, 0.3];
    let freqs: Vec<f64> = formants
        .iter()
        .map(|f| f * speaker_scale * (1.0 + mult * rng.gen_range(-0.02..0.02)))
        .collect();
    let phases: Vec<f64> = (0..3)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();

    // Noise at roughly 20 dB below the tone power for a mild speaker,
    // scaled up with severity.
    let signal_power: f64 = amps.iter().map(|a| a * a / 2.0).sum();
    let noise_sigma = mult * (signal_power / 10f64.powf(20.0 / 10.0)).sqrt();
    let noise = Normal::new(0.0, noise_sigma).expect("positive sigma");

    let ramp_len = (0.01 * rate) as usize;
    let mut samples = Vec::with_capacity(n_lead + n_voiced + n_tail);
    for _ in 0..n_lead {
        samples.push(rng.gen_range(-1e-5..1e-5));
    }
    for i in 0..n_voiced {
        let t = i as f64 / rate;
        let mut s = 0.0;
        for k in 0..3 {
            s += amps[k] * (std::f64::consts::TAU * freqs[k] * t + phases[k]).sin();
        }
        s += noise.sample(&mut rng);
        // Raised-cosine onset/offset to avoid clicks.
        let env = if i < ramp_len {
            0.5 - 0.5 * (std::f64::consts::PI * i as f64 / ramp_len as f64).cos()
        } else if i + ramp_len >= n_voiced {
            let j = n_voiced - 1 - i;
            0.5 - 0.5 * (std::f64::consts::PI * j as f64 / ramp_len as f64).cos()
        } else {
            1.0
        };
        samples.push(env * s);
    }
    for _ in 0..n_tail {
        samples.push(rng.gen_range(-1e-5..1e-5));
    }

    let peak = samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let scale = 0.5 / peak;
    for s in &mut samples {
        *s *= scale;
    }
    samples
}

/// Generate WAV files under `out_dir/audio/` plus the matching manifest
/// (all records initially `train`; run [`split_corpus`] afterwards).
/// Bit-deterministic given the spec.
pub fn synth_corpus(
    spec: &SynthSpec,
    out_dir: impl AsRef<Path>,
) -> Result<CorpusManifest, CorpusError> {
    assert!(
        spec.n_words >= 1 && spec.n_speakers >= 1 && spec.n_repetitions >= 1,
        "corpus dimensions must be at least 1"
    );
    let out_dir = out_dir.as_ref();
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir)?;

    let mut records = Vec::with_capacity(spec.n_speakers * spec.n_words * spec.n_repetitions);
    for s in 0..spec.n_speakers {
        let speaker_id = speaker_id_for(s);
        let severity = severity_for(s);
        for w in 0..spec.n_words {
            for rep in 0..spec.n_repetitions {
                let samples = synth_utterance(spec, s, w, rep);
                let rel_path = format!("audio/{speaker_id}_w{w:03}_r{rep:02}.wav");
                AudioSignal::new(samples, SAMPLE_RATE_HZ).write_wav(out_dir.join(&rel_path))?;
                records.push(UtteranceRecord {
                    speaker_id: speaker_id.clone(),
                    severity,
                    word_id: w,
                    word_text: format!("word{w:03}"),
                    repetition: rep,
                    audio_path: rel_path,
                    split: Split::Train,
                });
            }
        }
    }

    let vocabulary = build_vocabulary(&records)?;
    let manifest = CorpusManifest {
        vocabulary,
        records,
    };
    write_manifest(out_dir.join("manifest.csv"), &manifest)?;
    Ok(manifest)
}

/// Resolve a record's audio path against the directory its manifest lives
/// in.
pub fn resolve_audio_path(manifest_path: &Path, record: &UtteranceRecord) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&record.audio_path)
}

/// Partition each (speaker, word) group's repetitions into train and test
/// by a seeded draw, keeping at least one repetition on each side;
/// `dev_fraction` of each group's train half (rounded down) then moves to
/// dev. Group order and the per-group substream are both deterministic.
pub fn split_corpus(
    manifest: &CorpusManifest,
    train_fraction: f64,
    dev_fraction: f64,
    seed: u64,
) -> Result<CorpusManifest, CorpusError> {
    assert!(
        (0.0..=1.0).contains(&train_fraction) && (0.0..=1.0).contains(&dev_fraction),
        "fractions must be in [0, 1]"
    );

    let mut groups: BTreeMap<(String, usize), Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        groups
            .entry((r.speaker_id.clone(), r.word_id))
            .or_default()
            .push(i);
    }

    let mut out = manifest.clone();
    for ((speaker, word_id), indices) in &groups {
        let reps = indices.len();
        if reps < 2 {
            return Err(CorpusError::TooFewRepetitions {
                speaker: speaker.clone(),
                word_id: *word_id,
                reps,
            });
        }

        let n_train = ((reps as f64 * train_fraction).floor() as usize).clamp(1, reps - 1);
        let mut shuffled = indices.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(
            seed,
            &["split", speaker, &word_id.to_string()],
        ));
        shuffled.shuffle(&mut rng);

        let n_dev = ((n_train as f64 * dev_fraction).floor() as usize).min(n_train - 1);
        for (pos, &rec_idx) in shuffled.iter().enumerate() {
            out.records[rec_idx].split = if pos < n_train - n_dev {
                Split::Train
            } else if pos < n_train {
                Split::Dev
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}
