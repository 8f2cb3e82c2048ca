//! End-to-end experiment orchestration.
//!
//! One [`ExperimentConfig`] drives the whole pipeline — synthesize (or
//! load) a corpus, split it, extract features, train the SOM codebook and
//! the MLP classifier, estimate the word HMM, optionally optimize it with
//! the GA, decode the test split, and score the result — persisting every
//! stage artifact under the output directory. Per-stage seeds are derived
//! from the single global seed by stage-name hashing, so any stage can be
//! rerun in isolation and reproduce the full run bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    load_manifest, resolve_audio_path, split_corpus, synth_corpus, write_manifest, CorpusManifest,
    Split, SynthSpec, UtteranceRecord,
};
use crate::decoder::{decode_utterance_sequence, hmm_from_labels, WordHmm};
use crate::eval::{
    render_report, render_timing_csv, score_decodes, write_wra_svg, EvalReport, ReportFormat,
    Timing,
};
use crate::frontend::{
    extract_utterance, write_features_csv, FeatureRecord, FrontendConfig, UtteranceFeature,
};
use crate::ga::{
    evolve, export_history_csv, fitness, Chromosome, DevSequence, FitnessRecord, GaConfig,
};
use crate::mlp::{mlp_posteriors, mlp_train, write_mlp_model, MlpConfig, MlpModel};
use crate::seed::stage_seed;
use crate::som::{som_encode, som_train, write_som_model, SomCodebook, SomConfig};
use crate::{
    audio::AudioSignal, decoder::write_hmm_model, mlp::export_loss_csv, som::export_som_csv,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    BadConfig(String),
    #[error("config file: {0}")]
    ConfigParse(String),
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

fn at_stage<E: std::error::Error + Send + Sync + 'static>(
    stage: &'static str,
) -> impl FnOnce(E) -> ExperimentError {
    move |e| ExperimentError::Stage {
        stage,
        source: Box::new(e),
    }
}

/// Where the corpus comes from: generated on the fly or an existing
/// manifest.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Synth(SynthSpec),
    Manifest(PathBuf),
}

/// Full pipeline configuration. The per-stage seeds inside `som`, `mlp`,
/// and `ga` are ignored: [`run_experiment`] replaces them with seeds
/// derived from the global `seed`, and the MLP input/output widths are
/// forced to the SOM unit count and the vocabulary size.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub train_fraction: f64,
    pub dev_fraction: f64,
    pub hmm_smoothing: f64,
    pub frontend: FrontendConfig,
    pub som: SomConfig,
    pub mlp: MlpConfig,
    pub ga: GaConfig,
    pub ga_enabled: bool,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Desk-scale defaults for a given SOM unit count: a 20-word, 5-speaker,
    /// 10-repetition synthetic corpus with an 80/20 split. The classifier
    /// trains harder than the bare [`MlpConfig`] defaults because soft
    /// codebook activations are low-contrast inputs.
    pub fn for_k(
        k_units: usize,
        out_dir: impl Into<PathBuf>,
        seed: u64,
    ) -> Result<ExperimentConfig, ExperimentError> {
        let som =
            SomConfig::for_k(k_units, 0).map_err(|e| ExperimentError::BadConfig(e.to_string()))?;
        let mut mlp = MlpConfig::new(k_units, 96, 0, 0);
        mlp.lr = 0.3;
        mlp.epochs = 800;
        Ok(ExperimentConfig {
            corpus: CorpusSource::Synth(SynthSpec {
                n_words: 20,
                n_speakers: 5,
                n_repetitions: 10,
                seed: 0,
            }),
            train_fraction: 0.8,
            dev_fraction: 0.2,
            hmm_smoothing: 1.0,
            frontend: FrontendConfig::default(),
            mlp,
            ga: GaConfig::new(0),
            ga_enabled: false,
            out_dir: out_dir.into(),
            seed,
            som,
        })
    }

    /// `sysK` naming after the SOM unit count.
    pub fn system_name(&self) -> String {
        format!("sys{}", self.som.k_units)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ExperimentError::BadConfig(format!(
                "train_fraction {} must lie strictly between 0 and 1",
                self.train_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return Err(ExperimentError::BadConfig(format!(
                "dev_fraction {} must lie in [0, 1)",
                self.dev_fraction
            )));
        }
        if self.hmm_smoothing < 0.0 || self.hmm_smoothing.is_nan() {
            return Err(ExperimentError::BadConfig(
                "hmm_smoothing must be nonnegative".into(),
            ));
        }
        if self.mlp.n_input != self.som.k_units {
            return Err(ExperimentError::BadConfig(format!(
                "mlp n_input {} must equal the SOM unit count {}",
                self.mlp.n_input, self.som.k_units
            )));
        }
        self.frontend
            .validate()
            .map_err(|e| ExperimentError::BadConfig(e.to_string()))?;
        self.som
            .validate()
            .map_err(|e| ExperimentError::BadConfig(e.to_string()))?;
        self.ga
            .validate()
            .map_err(|e| ExperimentError::BadConfig(e.to_string()))?;
        if self.ga_enabled && self.dev_fraction == 0.0 {
            return Err(ExperimentError::BadConfig(
                "GA optimization needs a nonzero dev_fraction".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Config file (TOML, one section per stage; every key optional)

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ConfigFile {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    ga_enabled: Option<bool>,
    corpus: CorpusSection,
    split: SplitSection,
    frontend: FrontendSection,
    som: SomSection,
    mlp: MlpSection,
    hmm: HmmSection,
    ga: GaSection,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CorpusSection {
    manifest: Option<PathBuf>,
    n_words: Option<usize>,
    n_speakers: Option<usize>,
    n_repetitions: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SplitSection {
    train_fraction: Option<f64>,
    dev_fraction: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FrontendSection {
    frame_ms: Option<f64>,
    overlap_ms: Option<f64>,
    hop_ms: Option<f64>,
    model_order: Option<usize>,
    target_frames: Option<usize>,
    trim_threshold_db: Option<f64>,
    rasta_enabled: Option<bool>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SomSection {
    k_units: Option<usize>,
    grid_rows: Option<usize>,
    grid_cols: Option<usize>,
    epochs: Option<usize>,
    lr_initial: Option<f64>,
    lr_final: Option<f64>,
    sigma_initial: Option<f64>,
    sigma_final: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct MlpSection {
    n_hidden: Option<usize>,
    lr: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    init_scale: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct HmmSection {
    smoothing: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GaSection {
    population: Option<usize>,
    generations: Option<usize>,
    crossover_rate: Option<f64>,
    mutation_rate_per_gene: Option<f64>,
    mutation_sigma: Option<f64>,
    tournament_size: Option<usize>,
    elite_count: Option<usize>,
    seed_with_baseline: Option<bool>,
}

impl ExperimentConfig {
    /// Parse a TOML config. Missing keys fall back to the defaults of
    /// [`ExperimentConfig::for_k`]; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<ExperimentConfig, ExperimentError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| ExperimentError::ConfigParse(e.to_string()))?;

        let k_units = file.som.k_units.unwrap_or(16);
        let mut cfg = ExperimentConfig::for_k(
            k_units,
            file.out_dir.unwrap_or_else(|| PathBuf::from("out")),
            file.seed.unwrap_or(0),
        )?;
        cfg.ga_enabled = file.ga_enabled.unwrap_or(false);

        let c = &file.corpus;
        let has_synth_keys =
            c.n_words.is_some() || c.n_speakers.is_some() || c.n_repetitions.is_some();
        cfg.corpus = match (&c.manifest, has_synth_keys) {
            (Some(_), true) => {
                return Err(ExperimentError::ConfigParse(
                    "corpus section sets both a manifest path and synthesis parameters".into(),
                ))
            }
            (Some(path), false) => CorpusSource::Manifest(path.clone()),
            (None, _) => CorpusSource::Synth(SynthSpec {
                n_words: c.n_words.unwrap_or(20),
                n_speakers: c.n_speakers.unwrap_or(5),
                n_repetitions: c.n_repetitions.unwrap_or(10),
                seed: 0,
            }),
        };

        if let Some(v) = file.split.train_fraction {
            cfg.train_fraction = v;
        }
        if let Some(v) = file.split.dev_fraction {
            cfg.dev_fraction = v;
        }
        if let Some(v) = file.hmm.smoothing {
            cfg.hmm_smoothing = v;
        }

        let f = &file.frontend;
        let fe = &mut cfg.frontend;
        fe.frame_ms = f.frame_ms.unwrap_or(fe.frame_ms);
        fe.overlap_ms = f.overlap_ms.unwrap_or(fe.overlap_ms);
        fe.hop_ms = f.hop_ms.or(fe.hop_ms);
        fe.model_order = f.model_order.unwrap_or(fe.model_order);
        fe.target_frames = f.target_frames.unwrap_or(fe.target_frames);
        fe.trim_threshold_db = f.trim_threshold_db.unwrap_or(fe.trim_threshold_db);
        fe.rasta_enabled = f.rasta_enabled.unwrap_or(fe.rasta_enabled);

        let s = &file.som;
        let sc = &mut cfg.som;
        match (s.grid_rows, s.grid_cols) {
            (Some(r), Some(c)) => {
                sc.grid_rows = r;
                sc.grid_cols = c;
                sc.sigma_initial = r.max(c) as f64 / 2.0;
            }
            (None, None) => {}
            _ => {
                return Err(ExperimentError::ConfigParse(
                    "som grid_rows and grid_cols must be set together".into(),
                ))
            }
        }
        sc.epochs = s.epochs.unwrap_or(sc.epochs);
        sc.lr_initial = s.lr_initial.unwrap_or(sc.lr_initial);
        sc.lr_final = s.lr_final.unwrap_or(sc.lr_final);
        sc.sigma_initial = s.sigma_initial.unwrap_or(sc.sigma_initial);
        sc.sigma_final = s.sigma_final.unwrap_or(sc.sigma_final);

        let m = &file.mlp;
        let mc = &mut cfg.mlp;
        mc.n_hidden = m.n_hidden.unwrap_or(mc.n_hidden);
        mc.lr = m.lr.unwrap_or(mc.lr);
        mc.epochs = m.epochs.unwrap_or(mc.epochs);
        mc.batch_size = m.batch_size.unwrap_or(mc.batch_size);
        mc.init_scale = m.init_scale.or(mc.init_scale);

        let g = &file.ga;
        let gc = &mut cfg.ga;
        gc.population = g.population.unwrap_or(gc.population);
        gc.generations = g.generations.unwrap_or(gc.generations);
        gc.crossover_rate = g.crossover_rate.unwrap_or(gc.crossover_rate);
        gc.mutation_rate_per_gene = g
            .mutation_rate_per_gene
            .unwrap_or(gc.mutation_rate_per_gene);
        gc.mutation_sigma = g.mutation_sigma.unwrap_or(gc.mutation_sigma);
        gc.tournament_size = g.tournament_size.unwrap_or(gc.tournament_size);
        gc.elite_count = g.elite_count.unwrap_or(gc.elite_count);
        gc.seed_with_baseline = g.seed_with_baseline.unwrap_or(gc.seed_with_baseline);

        cfg.validate()?;
        Ok(cfg)
    }

    /// Render the config back to TOML (inverse of [`from_toml`]).
    pub fn to_toml(&self) -> String {
        let (manifest, synth) = match &self.corpus {
            CorpusSource::Manifest(p) => (Some(p.clone()), None),
            CorpusSource::Synth(s) => (None, Some(s)),
        };
        let file = ConfigFile {
            seed: Some(self.seed),
            out_dir: Some(self.out_dir.clone()),
            ga_enabled: Some(self.ga_enabled),
            corpus: CorpusSection {
                manifest,
                n_words: synth.map(|s| s.n_words),
                n_speakers: synth.map(|s| s.n_speakers),
                n_repetitions: synth.map(|s| s.n_repetitions),
            },
            split: SplitSection {
                train_fraction: Some(self.train_fraction),
                dev_fraction: Some(self.dev_fraction),
            },
            frontend: FrontendSection {
                frame_ms: Some(self.frontend.frame_ms),
                overlap_ms: Some(self.frontend.overlap_ms),
                hop_ms: self.frontend.hop_ms,
                model_order: Some(self.frontend.model_order),
                target_frames: Some(self.frontend.target_frames),
                trim_threshold_db: Some(self.frontend.trim_threshold_db),
                rasta_enabled: Some(self.frontend.rasta_enabled),
            },
            som: SomSection {
                k_units: Some(self.som.k_units),
                grid_rows: Some(self.som.grid_rows),
                grid_cols: Some(self.som.grid_cols),
                epochs: Some(self.som.epochs),
                lr_initial: Some(self.som.lr_initial),
                lr_final: Some(self.som.lr_final),
                sigma_initial: Some(self.som.sigma_initial),
                sigma_final: Some(self.som.sigma_final),
            },
            mlp: MlpSection {
                n_hidden: Some(self.mlp.n_hidden),
                lr: Some(self.mlp.lr),
                epochs: Some(self.mlp.epochs),
                batch_size: Some(self.mlp.batch_size),
                init_scale: self.mlp.init_scale,
            },
            hmm: HmmSection {
                smoothing: Some(self.hmm_smoothing),
            },
            ga: GaSection {
                population: Some(self.ga.population),
                generations: Some(self.ga.generations),
                crossover_rate: Some(self.ga.crossover_rate),
                mutation_rate_per_gene: Some(self.ga.mutation_rate_per_gene),
                mutation_sigma: Some(self.ga.mutation_sigma),
                tournament_size: Some(self.ga.tournament_size),
                elite_count: Some(self.ga.elite_count),
                seed_with_baseline: Some(self.ga.seed_with_baseline),
            },
        };
        toml::to_string_pretty(&file).expect("config serializes")
    }
}

// ---------------------------------------------------------------------------
// Stage helpers (shared by run_experiment and the CLI subcommands)

/// Records of one split, in manifest order; `None` selects everything.
pub fn records_for_split(manifest: &CorpusManifest, split: Option<Split>) -> Vec<&UtteranceRecord> {
    manifest
        .records
        .iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .collect()
}

/// Run the frontend over every utterance in the manifest. Feature ids are
/// the manifest `audio_path` strings; audio paths resolve relative to the
/// manifest's directory.
pub fn extract_corpus_features(
    manifest: &CorpusManifest,
    manifest_path: &Path,
    cfg: &FrontendConfig,
) -> Result<Vec<FeatureRecord>, ExperimentError> {
    let mut out = Vec::with_capacity(manifest.records.len());
    for record in &manifest.records {
        let path = resolve_audio_path(manifest_path, record);
        let signal = AudioSignal::read_wav(&path).map_err(at_stage("extract"))?;
        let feature = extract_utterance(&signal, cfg).map_err(at_stage("extract"))?;
        out.push(FeatureRecord {
            utterance_id: record.audio_path.clone(),
            feature,
        });
    }
    Ok(out)
}

fn feature_index(features: &[FeatureRecord]) -> BTreeMap<&str, &UtteranceFeature> {
    features
        .iter()
        .map(|r| (r.utterance_id.as_str(), &r.feature))
        .collect()
}

fn lookup<'a>(
    index: &BTreeMap<&str, &'a UtteranceFeature>,
    record: &UtteranceRecord,
    stage: &'static str,
) -> Result<&'a UtteranceFeature, ExperimentError> {
    index
        .get(record.audio_path.as_str())
        .copied()
        .ok_or_else(|| ExperimentError::Stage {
            stage,
            source: format!("no feature row for utterance {:?}", record.audio_path).into(),
        })
}

/// Feature vectors of one split, in manifest order (SOM training input).
pub fn split_features(
    manifest: &CorpusManifest,
    features: &[FeatureRecord],
    split: Option<Split>,
) -> Result<Vec<UtteranceFeature>, ExperimentError> {
    let index = feature_index(features);
    records_for_split(manifest, split)
        .into_iter()
        .map(|r| lookup(&index, r, "train-som").cloned())
        .collect()
}

/// SOM-encoded `(activation vector, word label)` pairs of one split, in
/// manifest order (MLP training input).
pub fn encoded_dataset(
    som: &SomCodebook,
    manifest: &CorpusManifest,
    features: &[FeatureRecord],
    split: Option<Split>,
) -> Result<Vec<(Vec<f64>, usize)>, ExperimentError> {
    let index = feature_index(features);
    records_for_split(manifest, split)
        .into_iter()
        .map(|r| {
            let feature = lookup(&index, r, "encode")?;
            let x = som_encode(som, feature).map_err(at_stage("encode"))?;
            Ok((x, r.word_id))
        })
        .collect()
}

/// Word-label sequences of one split, grouped per speaker (speakers in
/// sorted order, utterances in manifest order) — the HMM training data.
pub fn speaker_label_sequences(manifest: &CorpusManifest, split: Option<Split>) -> Vec<Vec<usize>> {
    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for r in records_for_split(manifest, split) {
        by_speaker.entry(&r.speaker_id).or_default().push(r.word_id);
    }
    by_speaker.into_values().collect()
}

/// Per-speaker dev-split sequences as `(posterior matrix, labels)` pairs,
/// the GA's fitness data. Speakers without dev utterances are skipped.
pub fn build_dev_sequences(
    som: &SomCodebook,
    mlp: &MlpModel,
    manifest: &CorpusManifest,
    features: &[FeatureRecord],
) -> Result<Vec<DevSequence>, ExperimentError> {
    let index = feature_index(features);
    let records = records_for_split(manifest, Some(Split::Dev));
    let mut encoded = Vec::with_capacity(records.len());
    for r in &records {
        let feature = lookup(&index, r, "optimize-ga")?;
        encoded.push(som_encode(som, feature).map_err(at_stage("optimize-ga"))?);
    }
    let posteriors = mlp_posteriors(mlp, &encoded).map_err(at_stage("optimize-ga"))?;
    // Each utterance is an isolated word, so the development set mirrors the
    // decoder's per-utterance use: one single-step sequence per utterance.
    // Chaining utterances into longer sequences would train the transition
    // matrix on an ordering artifact of the manifest instead of the task.
    let out = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            (
                crate::mat::Mat::from_rows(std::slice::from_ref(&posteriors.row(i).to_vec())),
                vec![r.word_id],
            )
        })
        .collect();
    Ok(out)
}

/// One decoded utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeRow {
    pub utterance_id: String,
    pub word_id: usize,
    pub log_score: f64,
}

/// Decode every utterance of a split independently (each is one word, so
/// each is a length-1 observation sequence).
pub fn decode_split(
    som: &SomCodebook,
    mlp: &MlpModel,
    hmm: &WordHmm,
    manifest: &CorpusManifest,
    features: &[FeatureRecord],
    split: Option<Split>,
) -> Result<Vec<DecodeRow>, ExperimentError> {
    let index = feature_index(features);
    records_for_split(manifest, split)
        .into_iter()
        .map(|r| {
            let feature = lookup(&index, r, "decode")?;
            let result = decode_utterance_sequence(mlp, som, hmm, std::slice::from_ref(feature))
                .map_err(at_stage("decode"))?;
            Ok(DecodeRow {
                utterance_id: r.audio_path.clone(),
                word_id: result.word_indices[0],
                log_score: result.log_score,
            })
        })
        .collect()
}

/// Write decode rows as `utterance,word_id,word,log_score`; the word text
/// column is filled from the vocabulary when one is supplied.
pub fn write_decodes_csv(
    path: impl AsRef<Path>,
    rows: &[DecodeRow],
    vocabulary: Option<&[String]>,
) -> Result<(), ExperimentError> {
    let mut out = String::from("utterance,word_id,word,log_score\n");
    for row in rows {
        let word = vocabulary
            .and_then(|v| v.get(row.word_id))
            .map(String::as_str)
            .unwrap_or("");
        writeln!(
            out,
            "{},{},{},{}",
            row.utterance_id, row.word_id, word, row.log_score
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(at_stage("decode"))
}

/// Read a decode CSV back (the word-text column is redundant and ignored).
pub fn read_decodes_csv(path: impl AsRef<Path>) -> Result<Vec<DecodeRow>, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(at_stage("evaluate"))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.is_empty() {
            continue;
        }
        let parse = || -> Option<DecodeRow> {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return None;
            }
            Some(DecodeRow {
                utterance_id: fields[0].to_string(),
                word_id: fields[1].parse().ok()?,
                log_score: fields[3].parse().ok()?,
            })
        };
        rows.push(parse().ok_or_else(|| ExperimentError::Stage {
            stage: "evaluate",
            source: format!("decode CSV line {}: malformed row", idx + 1).into(),
        })?);
    }
    Ok(rows)
}

fn decode_pairs(rows: &[DecodeRow]) -> Vec<(String, usize)> {
    rows.iter()
        .map(|r| (r.utterance_id.clone(), r.word_id))
        .collect()
}

// ---------------------------------------------------------------------------
// Full pipeline

/// Everything a pipeline run produces beyond its on-disk artifacts.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub system_name: String,
    /// Baseline report first; the GA-optimized report follows when GA ran.
    pub reports: Vec<EvalReport>,
    pub baseline_dev_fitness: Option<f64>,
    pub ga_best_fitness: Option<f64>,
    pub ga_history: Option<Vec<FitnessRecord>>,
}

/// Run every stage in order, persisting each artifact under
/// `config.out_dir`: the split manifest, features, SOM/MLP/HMM models with
/// CSV exports, decode lists, the report (CSV and aligned text), the
/// timing table, and a WRA bar chart. With `ga_enabled` the baseline
/// system is evaluated too, so the report compares `sysK` with `sysK+GA`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    config.validate()?;
    let t_start = Instant::now();
    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(at_stage("setup"))?;
    std::fs::write(out.join("config.toml"), config.to_toml()).map_err(at_stage("setup"))?;

    // -- corpus
    let source_path = match &config.corpus {
        CorpusSource::Synth(spec) => {
            let spec = SynthSpec {
                seed: stage_seed(config.seed, "synth"),
                ..spec.clone()
            };
            let dir = out.join("corpus");
            synth_corpus(&spec, &dir).map_err(at_stage("synth"))?;
            dir.join("manifest.csv")
        }
        CorpusSource::Manifest(path) => path.clone(),
    };
    let unsplit = load_manifest(&source_path).map_err(at_stage("synth"))?;

    // -- split
    let manifest = split_corpus(
        &unsplit,
        config.train_fraction,
        config.dev_fraction,
        stage_seed(config.seed, "split"),
    )
    .map_err(at_stage("split"))?;
    let manifest_path = out.join("manifest.csv");
    write_manifest(&manifest_path, &manifest).map_err(at_stage("split"))?;
    let vocab_size = manifest.vocab_size();
    if config.mlp.n_output != 0 && config.mlp.n_output != vocab_size {
        return Err(ExperimentError::BadConfig(format!(
            "mlp n_output {} does not match the vocabulary size {}",
            config.mlp.n_output, vocab_size
        )));
    }

    // -- extract (paths in the split manifest are relative to the source)
    let features = extract_corpus_features(&manifest, &source_path, &config.frontend)?;
    write_features_csv(out.join("features.csv"), &features).map_err(at_stage("extract"))?;

    // -- train-som
    let som_cfg = SomConfig {
        seed: stage_seed(config.seed, "som"),
        ..config.som.clone()
    };
    let train_features = split_features(&manifest, &features, Some(Split::Train))?;
    let t_som = Instant::now();
    let som = som_train(&train_features, &som_cfg).map_err(at_stage("train-som"))?;
    let som_seconds = t_som.elapsed().as_secs_f64();
    write_som_model(out.join("som.bin"), &som).map_err(at_stage("train-som"))?;
    export_som_csv(out.join("som_prototypes.csv"), &som).map_err(at_stage("train-som"))?;

    // -- train-mlp
    let mlp_cfg = MlpConfig {
        n_input: config.som.k_units,
        n_output: vocab_size,
        seed: stage_seed(config.seed, "mlp"),
        ..config.mlp.clone()
    };
    let dataset = encoded_dataset(&som, &manifest, &features, Some(Split::Train))?;
    let t_mlp = Instant::now();
    let training = mlp_train(&dataset, &mlp_cfg).map_err(at_stage("train-mlp"))?;
    let mlp_seconds = t_mlp.elapsed().as_secs_f64();
    let mlp = training.model;
    write_mlp_model(out.join("mlp.bin"), &mlp).map_err(at_stage("train-mlp"))?;
    export_loss_csv(out.join("mlp_loss.csv"), &training.epoch_loss)
        .map_err(at_stage("train-mlp"))?;

    // -- build-hmm
    let label_sequences = speaker_label_sequences(&manifest, Some(Split::Train));
    let hmm = hmm_from_labels(&label_sequences, vocab_size, config.hmm_smoothing)
        .map_err(at_stage("build-hmm"))?;
    write_hmm_model(out.join("hmm.bin"), &hmm).map_err(at_stage("build-hmm"))?;

    // -- optimize-ga
    let mut baseline_dev_fitness = None;
    let mut ga_best_fitness = None;
    let mut ga_history = None;
    let mut ga_hmm = None;
    if config.ga_enabled {
        let dev = build_dev_sequences(&som, &mlp, &manifest, &features)?;
        let baseline_fit = fitness(&Chromosome::from_hmm(&hmm), &dev, &hmm.class_priors)
            .map_err(at_stage("optimize-ga"))?;
        let ga_cfg = GaConfig {
            seed: stage_seed(config.seed, "ga"),
            ..config.ga.clone()
        };
        let (optimized, history) = evolve(&dev, &hmm, &ga_cfg).map_err(at_stage("optimize-ga"))?;
        write_hmm_model(out.join("hmm_ga.bin"), &optimized).map_err(at_stage("optimize-ga"))?;
        export_history_csv(out.join("ga_history.csv"), &history)
            .map_err(at_stage("optimize-ga"))?;
        baseline_dev_fitness = Some(baseline_fit);
        ga_best_fitness = history.last().map(|r| r.best_fitness);
        ga_history = Some(history);
        ga_hmm = Some(optimized);
    }

    // -- decode + evaluate
    let timing = Timing {
        som_seconds,
        mlp_seconds,
        total_seconds: t_start.elapsed().as_secs_f64(),
    };
    let system_name = config.system_name();
    let mut reports = Vec::new();

    let rows = decode_split(&som, &mlp, &hmm, &manifest, &features, Some(Split::Test))?;
    write_decodes_csv(out.join("decodes.csv"), &rows, Some(&manifest.vocabulary))?;
    let mut report = score_decodes(&decode_pairs(&rows), &manifest, &system_name)
        .map_err(at_stage("evaluate"))?;
    report.timing = Some(timing.clone());
    write_wra_svg(out.join("wra.svg"), &report).map_err(at_stage("evaluate"))?;
    reports.push(report);

    if let Some(ga_hmm) = &ga_hmm {
        let rows = decode_split(&som, &mlp, ga_hmm, &manifest, &features, Some(Split::Test))?;
        write_decodes_csv(
            out.join("decodes_ga.csv"),
            &rows,
            Some(&manifest.vocabulary),
        )?;
        let mut report = score_decodes(
            &decode_pairs(&rows),
            &manifest,
            &format!("{system_name}+GA"),
        )
        .map_err(at_stage("evaluate"))?;
        report.timing = Some(Timing {
            total_seconds: t_start.elapsed().as_secs_f64(),
            ..timing.clone()
        });
        write_wra_svg(out.join("wra_ga.svg"), &report).map_err(at_stage("evaluate"))?;
        reports.push(report);
    }

    let report_csv = render_report(&reports, ReportFormat::Csv).map_err(at_stage("evaluate"))?;
    std::fs::write(out.join("report.csv"), report_csv).map_err(at_stage("evaluate"))?;
    let report_txt = render_report(&reports, ReportFormat::Text).map_err(at_stage("evaluate"))?;
    std::fs::write(out.join("report.txt"), report_txt).map_err(at_stage("evaluate"))?;
    std::fs::write(out.join("timing.csv"), render_timing_csv(&reports))
        .map_err(at_stage("evaluate"))?;

    Ok(ExperimentOutcome {
        system_name,
        reports,
        baseline_dev_fitness,
        ga_best_fitness,
        ga_history,
    })
}

/// Which variants a grid run evaluates per unit count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaMode {
    /// Baseline only.
    Off,
    /// GA-optimized only (the baseline is still trained as its seed).
    On,
    /// Baseline and GA-optimized side by side.
    Both,
}

#[derive(Debug)]
pub struct GridOutcome {
    pub outcomes: Vec<ExperimentOutcome>,
    /// Reports merged across systems, in run order.
    pub reports: Vec<EvalReport>,
    pub comparison_csv: String,
}

/// Run one experiment per SOM unit count (sharing a single synthesized
/// corpus) and merge the reports into one side-by-side comparison, written
/// to `comparison.csv` / `comparison.txt` / `timing.csv` under the base
/// output directory. Each system runs in its own `sysK/` subdirectory.
pub fn run_grid(
    base: &ExperimentConfig,
    k_list: &[usize],
    ga: GaMode,
) -> Result<GridOutcome, ExperimentError> {
    if k_list.is_empty() {
        return Err(ExperimentError::BadConfig("empty unit-count list".into()));
    }
    std::fs::create_dir_all(&base.out_dir).map_err(at_stage("setup"))?;
    let corpus = match &base.corpus {
        CorpusSource::Synth(spec) => {
            let spec = SynthSpec {
                seed: stage_seed(base.seed, "synth"),
                ..spec.clone()
            };
            let dir = base.out_dir.join("corpus");
            synth_corpus(&spec, &dir).map_err(at_stage("synth"))?;
            CorpusSource::Manifest(dir.join("manifest.csv"))
        }
        other => other.clone(),
    };

    let mut outcomes = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let som = if k == base.som.k_units {
            base.som.clone()
        } else {
            SomConfig::for_k(k, 0).map_err(|e| ExperimentError::BadConfig(e.to_string()))?
        };
        let config = ExperimentConfig {
            corpus: corpus.clone(),
            mlp: MlpConfig {
                n_input: k,
                ..base.mlp.clone()
            },
            ga_enabled: ga != GaMode::Off,
            out_dir: base.out_dir.join(format!("sys{k}")),
            som,
            ..base.clone()
        };
        outcomes.push(run_experiment(&config)?);
    }

    let mut reports = Vec::new();
    for outcome in &outcomes {
        match ga {
            GaMode::Off => reports.push(outcome.reports[0].clone()),
            GaMode::On => reports.push(outcome.reports[1].clone()),
            GaMode::Both => reports.extend(outcome.reports.iter().cloned()),
        }
    }
    let comparison_csv =
        render_report(&reports, ReportFormat::Csv).map_err(at_stage("evaluate"))?;
    std::fs::write(base.out_dir.join("comparison.csv"), &comparison_csv)
        .map_err(at_stage("evaluate"))?;
    let comparison_txt =
        render_report(&reports, ReportFormat::Text).map_err(at_stage("evaluate"))?;
    std::fs::write(base.out_dir.join("comparison.txt"), comparison_txt)
        .map_err(at_stage("evaluate"))?;
    std::fs::write(base.out_dir.join("timing.csv"), render_timing_csv(&reports))
        .map_err(at_stage("evaluate"))?;

    Ok(GridOutcome {
        outcomes,
        reports,
        comparison_csv,
    })
}
