//! An isolated-word speech recognition laboratory.
//!
//! `asrlab` implements a complete small-vocabulary recognition pipeline:
//!
//! 1. [`frontend`] — Log-RASTA-PLP feature extraction: framing, energy
//!    endpointing, Bark-domain spectral analysis, RASTA filtering, linear
//!    prediction, and cepstra, flattened to one fixed-length vector per
//!    utterance.
//! 2. [`som`] — a self-organizing map that clusters utterance vectors into
//!    `K` units and re-encodes each utterance as a `K`-dimensional
//!    activation vector.
//! 3. [`mlp`] — a three-layer perceptron trained by backpropagation that
//!    maps activation vectors to word posterior probabilities.
//! 4. [`decoder`] — a hybrid HMM/MLP decoder: posteriors are divided by
//!    class priors to form scaled likelihoods and Viterbi-decoded over a
//!    word-transition model.
//! 5. [`ga`] — a genetic algorithm that re-optimizes the HMM transition
//!    matrix and start distribution against a development set.
//! 6. [`corpus`] — manifest ingestion, train/dev/test splitting, and a
//!    deterministic synthetic corpus generator so the whole pipeline runs
//!    self-contained.
//! 7. [`eval`] — word recognition accuracy, per-speaker and per-severity
//!    report tables, and timing summaries.
//! 8. [`experiment`] — end-to-end orchestration of the `sysK` /
//!    `sysK+GA` experiment grid with persisted artifacts.
//!
//! Everything is deterministic given a seed: identical configuration
//! produces byte-identical models, feature dumps, and reports.
//!
//! ```
//! use asrlab::frontend::{self, FrontendConfig};
//! use asrlab::audio::AudioSignal;
//!
//! // 100 ms of a 440 Hz tone at 16 kHz.
//! let samples: Vec<f64> = (0..1600)
//!     .map(|n| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16000.0).sin())
//!     .collect();
//! let signal = AudioSignal::new(samples, 16000);
//! let cfg = FrontendConfig::default();
//! let feature = frontend::extract_utterance(&signal, &cfg).unwrap();
//! assert_eq!(feature.values.len(), cfg.n_cepstra() * cfg.target_frames);
//! ```

pub mod audio;
pub mod corpus;
pub mod decoder;
pub mod eval;
pub mod experiment;
pub mod frontend;
pub mod ga;
pub mod mat;
pub mod mlp;
pub mod seed;
pub mod som;

mod binio;

// The guide chapters double as doc-tests so their snippets stay compilable.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(frontend, "../../../book/src/frontend.md");
    chapter!(som, "../../../book/src/som.md");
    chapter!(mlp, "../../../book/src/mlp.md");
    chapter!(decoder, "../../../book/src/decoder.md");
    chapter!(ga, "../../../book/src/ga.md");
    chapter!(corpus, "../../../book/src/corpus.md");
    chapter!(evaluation, "../../../book/src/evaluation.md");
    chapter!(cli, "../../../book/src/cli.md");
}
