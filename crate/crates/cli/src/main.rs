//! Command-line driver for the isolated-word recognition pipeline.
//!
//! Each pipeline stage is a subcommand working from files, so a full
//! experiment can be run step by step (`synth` → `extract` → `train-som` →
//! `train-mlp` → `build-hmm` → `optimize-ga` → `decode` → `evaluate`) or in
//! one shot (`run`, `grid`). Stage parameters come from an optional TOML
//! config file; explicit flags override it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use asrlab::corpus::{
    load_manifest, synth_corpus, write_manifest, CorpusManifest, Split, SynthSpec,
};
use asrlab::decoder::{
    decode_utterance_sequence, hmm_from_labels, read_hmm_model, write_hmm_model,
};
use asrlab::eval::{render_report, score_decodes, write_wra_svg, EvalReport, ReportFormat};
use asrlab::experiment::{
    build_dev_sequences, encoded_dataset, extract_corpus_features, read_decodes_csv,
    run_experiment, run_grid, speaker_label_sequences, split_features, write_decodes_csv,
    CorpusSource, DecodeRow, ExperimentConfig, GaMode,
};
use asrlab::frontend::{read_features_csv, write_features_csv, FeatureRecord};
use asrlab::ga::{evolve, export_history_csv, fitness, Chromosome, GaConfig};
use asrlab::mlp::{
    export_loss_csv, mlp_posteriors, mlp_train, read_mlp_model, write_mlp_model, MlpConfig,
};
use asrlab::seed::stage_seed;
use asrlab::som::{
    export_som_csv, read_som_model, som_encode, som_train, write_som_model, SomConfig,
};

#[derive(Parser)]
#[command(
    name = "asrlab",
    about = "Isolated-word recognition pipeline: RASTA-PLP features, SOM codebook, \
             MLP posteriors, hybrid HMM decoding, GA-optimized transitions",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed; every stage derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GaModeArg {
    Off,
    On,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic corpus (WAV files + manifest).
    Synth {
        #[command(flatten)]
        common: Common,
        /// Output directory for `audio/` and `manifest.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        words: Option<usize>,
        #[arg(long)]
        speakers: Option<usize>,
        #[arg(long)]
        repetitions: Option<usize>,
        /// Also assign train/dev/test splits to the manifest.
        #[arg(long)]
        split: bool,
    },
    /// Extract RASTA-PLP features for manifest utterances into a CSV.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only extract this split (default: everything).
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        #[arg(long)]
        frame_ms: Option<f64>,
        #[arg(long)]
        overlap_ms: Option<f64>,
        #[arg(long)]
        hop_ms: Option<f64>,
        #[arg(long)]
        model_order: Option<usize>,
        #[arg(long)]
        target_frames: Option<usize>,
        #[arg(long)]
        trim_threshold_db: Option<f64>,
        #[arg(long)]
        rasta: Option<bool>,
    },
    /// Train the SOM codebook on extracted features.
    TrainSom {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
        /// Manifest for split filtering; without it every row trains.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Split to train on when a manifest is given.
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV export of the trained prototypes.
        #[arg(long)]
        csv_out: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr_initial: Option<f64>,
        #[arg(long)]
        lr_final: Option<f64>,
        #[arg(long)]
        sigma_initial: Option<f64>,
        #[arg(long)]
        sigma_final: Option<f64>,
    },
    /// Train the MLP word classifier on SOM-encoded features.
    TrainMlp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        som: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV export of the per-epoch training loss.
        #[arg(long)]
        loss_out: Option<PathBuf>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        init_scale: Option<f64>,
    },
    /// Estimate the word-transition HMM from training labels.
    BuildHmm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        smoothing: Option<f64>,
    },
    /// Optimize the HMM transition and prior probabilities with the GA.
    OptimizeGa {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        som: PathBuf,
        #[arg(long)]
        mlp: PathBuf,
        #[arg(long)]
        hmm: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV export of the per-generation fitness history.
        #[arg(long)]
        history_out: Option<PathBuf>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        crossover_rate: Option<f64>,
        #[arg(long)]
        mutation_rate: Option<f64>,
        #[arg(long)]
        mutation_sigma: Option<f64>,
        #[arg(long)]
        tournament_size: Option<usize>,
        #[arg(long)]
        elite_count: Option<usize>,
    },
    /// Decode utterances to words with the trained models.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        som: PathBuf,
        #[arg(long)]
        mlp: PathBuf,
        #[arg(long)]
        hmm: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Adds word text to the output and enables --split filtering.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Only decode this split (needs --manifest).
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Also write the MLP posterior row of every utterance.
        #[arg(long)]
        posteriors_out: Option<PathBuf>,
    },
    /// Score decode lists against the manifest and render a report.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Decode CSV; repeat for a side-by-side comparison.
        #[arg(long, required = true)]
        decodes: Vec<PathBuf>,
        /// System name per --decodes (defaults to the file stem).
        #[arg(long)]
        system: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
        /// Optional WRA bar chart (first system).
        #[arg(long)]
        svg_out: Option<PathBuf>,
    },
    /// Run the whole pipeline for one system.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// SOM unit count (names the system `sysK`).
        #[arg(long)]
        k: Option<usize>,
        /// Also optimize the HMM with the GA and report both systems.
        #[arg(long)]
        ga: Option<bool>,
    },
    /// Run the pipeline for several unit counts and compare them.
    Grid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated SOM unit counts.
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
        k_list: Vec<usize>,
        #[arg(long, value_enum, default_value = "both")]
        ga: GaModeArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Text,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("[config] reading {}", path.display()))?;
            ExperimentConfig::from_toml(&text).context("[config] parsing")?
        }
        None => ExperimentConfig::for_k(16, "out", 0).expect("default config is valid"),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn read_features(path: &Path) -> Result<Vec<FeatureRecord>> {
    read_features_csv(path).with_context(|| format!("[features] reading {}", path.display()))
}

fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    load_manifest(path).with_context(|| format!("[manifest] reading {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth {
            common,
            out,
            words,
            speakers,
            repetitions,
            split,
        } => {
            let cfg = load_config(&common)?;
            let base = match &cfg.corpus {
                CorpusSource::Synth(s) => s.clone(),
                CorpusSource::Manifest(_) => SynthSpec {
                    n_words: 20,
                    n_speakers: 5,
                    n_repetitions: 10,
                    seed: 0,
                },
            };
            let spec = SynthSpec {
                n_words: words.unwrap_or(base.n_words),
                n_speakers: speakers.unwrap_or(base.n_speakers),
                n_repetitions: repetitions.unwrap_or(base.n_repetitions),
                seed: stage_seed(cfg.seed, "synth"),
            };
            let mut manifest = synth_corpus(&spec, &out).context("[synth]")?;
            if split {
                manifest = asrlab::corpus::split_corpus(
                    &manifest,
                    cfg.train_fraction,
                    cfg.dev_fraction,
                    stage_seed(cfg.seed, "split"),
                )
                .context("[split]")?;
                write_manifest(out.join("manifest.csv"), &manifest).context("[split]")?;
            }
            println!(
                "wrote {} utterances ({} words x {} speakers x {} repetitions) to {}",
                manifest.records.len(),
                spec.n_words,
                spec.n_speakers,
                spec.n_repetitions,
                out.display()
            );
        }

        Command::Extract {
            common,
            manifest,
            out,
            split,
            frame_ms,
            overlap_ms,
            hop_ms,
            model_order,
            target_frames,
            trim_threshold_db,
            rasta,
        } => {
            let cfg = load_config(&common)?;
            let mut fe = cfg.frontend.clone();
            fe.frame_ms = frame_ms.unwrap_or(fe.frame_ms);
            fe.overlap_ms = overlap_ms.unwrap_or(fe.overlap_ms);
            fe.hop_ms = hop_ms.or(fe.hop_ms);
            fe.model_order = model_order.unwrap_or(fe.model_order);
            fe.target_frames = target_frames.unwrap_or(fe.target_frames);
            fe.trim_threshold_db = trim_threshold_db.unwrap_or(fe.trim_threshold_db);
            fe.rasta_enabled = rasta.unwrap_or(fe.rasta_enabled);

            let full = read_manifest(&manifest)?;
            let selected = CorpusManifest {
                vocabulary: full.vocabulary.clone(),
                records: full
                    .records
                    .iter()
                    .filter(|r| split.is_none_or(|s| r.split == Split::from(s)))
                    .cloned()
                    .collect(),
            };
            let features = extract_corpus_features(&selected, &manifest, &fe)?;
            write_features_csv(&out, &features).context("[extract] writing features")?;
            println!(
                "extracted {} features ({} values each) to {}",
                features.len(),
                fe.feature_len(),
                out.display()
            );
        }

        Command::TrainSom {
            common,
            features,
            manifest,
            split,
            out,
            csv_out,
            k,
            epochs,
            lr_initial,
            lr_final,
            sigma_initial,
            sigma_final,
        } => {
            let cfg = load_config(&common)?;
            let mut sc = match k {
                Some(k) if k != cfg.som.k_units => {
                    SomConfig::for_k(k, 0).context("[train-som] bad unit count")?
                }
                _ => cfg.som.clone(),
            };
            sc.epochs = epochs.unwrap_or(sc.epochs);
            sc.lr_initial = lr_initial.unwrap_or(sc.lr_initial);
            sc.lr_final = lr_final.unwrap_or(sc.lr_final);
            sc.sigma_initial = sigma_initial.unwrap_or(sc.sigma_initial);
            sc.sigma_final = sigma_final.unwrap_or(sc.sigma_final);
            sc.seed = stage_seed(cfg.seed, "som");

            let records = read_features(&features)?;
            let training = match &manifest {
                Some(path) => {
                    let manifest = read_manifest(path)?;
                    split_features(&manifest, &records, Some(split.into()))?
                }
                None => records.iter().map(|r| r.feature.clone()).collect(),
            };
            let som = som_train(&training, &sc).context("[train-som]")?;
            write_som_model(&out, &som).context("[train-som] writing model")?;
            if let Some(path) = csv_out {
                export_som_csv(&path, &som).context("[train-som] writing CSV")?;
            }
            println!(
                "trained {}x{} codebook on {} vectors -> {}",
                sc.grid_rows,
                sc.grid_cols,
                training.len(),
                out.display()
            );
        }

        Command::TrainMlp {
            common,
            features,
            manifest,
            som,
            split,
            out,
            loss_out,
            hidden,
            lr,
            epochs,
            batch_size,
            init_scale,
        } => {
            let cfg = load_config(&common)?;
            let manifest = read_manifest(&manifest)?;
            let records = read_features(&features)?;
            let codebook = read_som_model(&som).context("[train-mlp] reading codebook")?;
            let dataset = encoded_dataset(&codebook, &manifest, &records, Some(split.into()))?;

            let mc = MlpConfig {
                n_input: codebook.k_units(),
                n_hidden: hidden.unwrap_or(cfg.mlp.n_hidden),
                n_output: manifest.vocab_size(),
                lr: lr.unwrap_or(cfg.mlp.lr),
                epochs: epochs.unwrap_or(cfg.mlp.epochs),
                batch_size: batch_size.unwrap_or(cfg.mlp.batch_size),
                init_scale: init_scale.or(cfg.mlp.init_scale),
                seed: stage_seed(cfg.seed, "mlp"),
            };
            let training = mlp_train(&dataset, &mc).context("[train-mlp]")?;
            write_mlp_model(&out, &training.model).context("[train-mlp] writing model")?;
            if let Some(path) = loss_out {
                export_loss_csv(&path, &training.epoch_loss).context("[train-mlp] writing loss")?;
            }
            println!(
                "trained {}-{}-{} classifier on {} samples (final loss {:.6}) -> {}",
                mc.n_input,
                mc.n_hidden,
                mc.n_output,
                dataset.len(),
                training.epoch_loss.last().unwrap(),
                out.display()
            );
        }

        Command::BuildHmm {
            common,
            manifest,
            split,
            out,
            smoothing,
        } => {
            let cfg = load_config(&common)?;
            let manifest = read_manifest(&manifest)?;
            let sequences = speaker_label_sequences(&manifest, Some(split.into()));
            let hmm = hmm_from_labels(
                &sequences,
                manifest.vocab_size(),
                smoothing.unwrap_or(cfg.hmm_smoothing),
            )
            .context("[build-hmm]")?;
            write_hmm_model(&out, &hmm).context("[build-hmm] writing model")?;
            println!(
                "estimated {0}x{0} word-transition model from {1} speaker sequences -> {2}",
                manifest.vocab_size(),
                sequences.len(),
                out.display()
            );
        }

        Command::OptimizeGa {
            common,
            manifest,
            features,
            som,
            mlp,
            hmm,
            out,
            history_out,
            population,
            generations,
            crossover_rate,
            mutation_rate,
            mutation_sigma,
            tournament_size,
            elite_count,
        } => {
            let cfg = load_config(&common)?;
            let manifest = read_manifest(&manifest)?;
            let records = read_features(&features)?;
            let codebook = read_som_model(&som).context("[optimize-ga] reading codebook")?;
            let model = read_mlp_model(&mlp).context("[optimize-ga] reading classifier")?;
            let baseline = read_hmm_model(&hmm).context("[optimize-ga] reading model")?;

            let gc = GaConfig {
                population: population.unwrap_or(cfg.ga.population),
                generations: generations.unwrap_or(cfg.ga.generations),
                crossover_rate: crossover_rate.unwrap_or(cfg.ga.crossover_rate),
                mutation_rate_per_gene: mutation_rate.unwrap_or(cfg.ga.mutation_rate_per_gene),
                mutation_sigma: mutation_sigma.unwrap_or(cfg.ga.mutation_sigma),
                tournament_size: tournament_size.unwrap_or(cfg.ga.tournament_size),
                elite_count: elite_count.unwrap_or(cfg.ga.elite_count),
                seed: stage_seed(cfg.seed, "ga"),
                ..cfg.ga
            };
            let dev = build_dev_sequences(&codebook, &model, &manifest, &records)?;
            let baseline_fit = fitness(
                &Chromosome::from_hmm(&baseline),
                &dev,
                &baseline.class_priors,
            )
            .context("[optimize-ga] baseline fitness")?;
            let (optimized, history) = evolve(&dev, &baseline, &gc).context("[optimize-ga]")?;
            write_hmm_model(&out, &optimized).context("[optimize-ga] writing model")?;
            if let Some(path) = history_out {
                export_history_csv(&path, &history).context("[optimize-ga] writing history")?;
            }
            let best = history.last().unwrap().best_fitness;
            println!(
                "optimized over {} generations: fitness {:.6} -> {:.6} ({} dev sequences) -> {}",
                gc.generations,
                baseline_fit,
                best,
                dev.len(),
                out.display()
            );
        }

        Command::Decode {
            common,
            features,
            som,
            mlp,
            hmm,
            out,
            manifest,
            split,
            posteriors_out,
        } => {
            let _ = load_config(&common)?;
            let records = read_features(&features)?;
            let codebook = read_som_model(&som).context("[decode] reading codebook")?;
            let model = read_mlp_model(&mlp).context("[decode] reading classifier")?;
            let hmm = read_hmm_model(&hmm).context("[decode] reading model")?;

            let manifest = manifest.map(|p| read_manifest(&p)).transpose()?;
            if split.is_some() && manifest.is_none() {
                bail!("[decode] --split needs --manifest");
            }
            let selected: Vec<&FeatureRecord> = match (&manifest, split) {
                (Some(m), Some(s)) => {
                    let split = Split::from(s);
                    let wanted: std::collections::BTreeSet<&str> = m
                        .records
                        .iter()
                        .filter(|r| r.split == split)
                        .map(|r| r.audio_path.as_str())
                        .collect();
                    records
                        .iter()
                        .filter(|r| wanted.contains(r.utterance_id.as_str()))
                        .collect()
                }
                _ => records.iter().collect(),
            };

            let mut rows = Vec::with_capacity(selected.len());
            let mut posteriors_csv = String::from("utterance");
            if posteriors_out.is_some() {
                for q in 0..model.n_output() {
                    write!(posteriors_csv, ",q{q}").unwrap();
                }
                posteriors_csv.push('\n');
            }
            for record in &selected {
                let result = decode_utterance_sequence(
                    &model,
                    &codebook,
                    &hmm,
                    std::slice::from_ref(&record.feature),
                )
                .context("[decode]")?;
                rows.push(DecodeRow {
                    utterance_id: record.utterance_id.clone(),
                    word_id: result.word_indices[0],
                    log_score: result.log_score,
                });
                if posteriors_out.is_some() {
                    let x = som_encode(&codebook, &record.feature).context("[decode]")?;
                    let p = mlp_posteriors(&model, std::slice::from_ref(&x)).context("[decode]")?;
                    write!(posteriors_csv, "{}", record.utterance_id).unwrap();
                    for v in p.row(0) {
                        write!(posteriors_csv, ",{v}").unwrap();
                    }
                    posteriors_csv.push('\n');
                }
            }
            let vocabulary = manifest.as_ref().map(|m| m.vocabulary.as_slice());
            write_decodes_csv(&out, &rows, vocabulary)?;
            if let Some(path) = posteriors_out {
                std::fs::write(&path, posteriors_csv).context("[decode] writing posteriors")?;
            }
            println!("decoded {} utterances -> {}", rows.len(), out.display());
        }

        Command::Evaluate {
            common,
            manifest,
            decodes,
            system,
            out,
            format,
            svg_out,
        } => {
            let _ = load_config(&common)?;
            if !system.is_empty() && system.len() != decodes.len() {
                bail!(
                    "[evaluate] got {} --system names for {} --decodes files",
                    system.len(),
                    decodes.len()
                );
            }
            let manifest = read_manifest(&manifest)?;
            let mut reports: Vec<EvalReport> = Vec::with_capacity(decodes.len());
            for (i, path) in decodes.iter().enumerate() {
                let rows = read_decodes_csv(path)?;
                let pairs: Vec<(String, usize)> = rows
                    .into_iter()
                    .map(|r| (r.utterance_id, r.word_id))
                    .collect();
                let name = system.get(i).cloned().unwrap_or_else(|| {
                    path.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| format!("system{}", i + 1))
                });
                reports.push(score_decodes(&pairs, &manifest, &name).context("[evaluate]")?);
            }
            let fmt = match format {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Text => ReportFormat::Text,
            };
            let rendered = render_report(&reports, fmt).context("[evaluate]")?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &rendered).context("[evaluate] writing report")?;
                    println!("wrote report to {}", path.display());
                }
                None => print!("{rendered}"),
            }
            if let Some(path) = svg_out {
                write_wra_svg(&path, &reports[0]).context("[evaluate] writing chart")?;
            }
        }

        Command::Run { common, out, k, ga } => {
            let mut cfg = load_config(&common)?;
            if let Some(k) = k {
                if k != cfg.som.k_units {
                    cfg.som = SomConfig::for_k(k, 0).context("[run] bad unit count")?;
                    cfg.mlp.n_input = k;
                }
            }
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            if let Some(ga) = ga {
                cfg.ga_enabled = ga;
            }
            let outcome = run_experiment(&cfg)?;
            print!(
                "{}",
                render_report(&outcome.reports, ReportFormat::Text).context("[evaluate]")?
            );
            if let (Some(before), Some(after)) =
                (outcome.baseline_dev_fitness, outcome.ga_best_fitness)
            {
                println!("GA dev fitness: {before:.6} -> {after:.6}");
            }
            println!("artifacts in {}", cfg.out_dir.display());
        }

        Command::Grid {
            common,
            out,
            k_list,
            ga,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            let mode = match ga {
                GaModeArg::Off => GaMode::Off,
                GaModeArg::On => GaMode::On,
                GaModeArg::Both => GaMode::Both,
            };
            let grid = run_grid(&cfg, &k_list, mode)?;
            print!(
                "{}",
                render_report(&grid.reports, ReportFormat::Text).context("[evaluate]")?
            );
            println!("artifacts in {}", cfg.out_dir.display());
        }
    }
    Ok(())
}
