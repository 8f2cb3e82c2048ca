//! Hybrid HMM/MLP decoder.
//!
//! Classifier posteriors are rescaled by class priors into scaled
//! likelihoods `p(x|q) ∝ p(q|x)/p(q)`, then a word-level HMM (one state
//! per vocabulary word) decodes a word sequence by Viterbi. A scaled
//! forward pass provides the per-step score distributions used as the
//! optimizer's fitness target. Isolated-word recognition is the length-1
//! special case.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::binio;
use crate::frontend::UtteranceFeature;
use crate::mat::Mat;
use crate::mlp::{mlp_posteriors, MlpError, MlpModel};
use crate::som::{som_encode, SomCodebook, SomError};

const MODEL_MAGIC: &[u8; 4] = b"WHMM";
const MODEL_VERSION: u32 = 1;

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DecoderError {
    #[error("no labels and no smoothing: class priors undefined")]
    EmptyLabels,
    #[error("class prior for word {0} is zero")]
    ZeroPrior(usize),
    #[error("label {label} out of range for vocabulary of {v}")]
    LabelOutOfRange { label: usize, v: usize },
    #[error("every path has zero probability")]
    AllPathsImpossible,
    #[error("utterance sequence is empty")]
    EmptySequence,
    #[error("matrix has {got} columns, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("invalid HMM: {0}")]
    BadHmm(String),
    #[error(transparent)]
    Som(#[from] SomError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Word-transition HMM: states are vocabulary words.
#[derive(Debug, Clone, PartialEq)]
pub struct WordHmm {
    /// V×V word-bigram transition matrix; rows are simplex vectors.
    pub transition: Mat,
    /// Initial word distribution.
    pub prior: Vec<f64>,
    /// Class priors p(q) estimated from training labels; strictly positive.
    pub class_priors: Vec<f64>,
}

impl WordHmm {
    pub fn vocab_size(&self) -> usize {
        self.prior.len()
    }

    pub fn validate(&self) -> Result<(), DecoderError> {
        let v = self.vocab_size();
        if self.transition.rows() != v || self.transition.cols() != v {
            return Err(DecoderError::BadHmm(format!(
                "transition is {}x{}, expected {v}x{v}",
                self.transition.rows(),
                self.transition.cols()
            )));
        }
        if self.class_priors.len() != v {
            return Err(DecoderError::BadHmm("class_priors length mismatch".into()));
        }
        for (r, row) in self.transition.iter_rows().enumerate() {
            check_simplex(row, &format!("transition row {r}"))?;
        }
        check_simplex(&self.prior, "prior")?;
        check_simplex(&self.class_priors, "class_priors")?;
        if self.class_priors.iter().any(|&p| p <= 0.0) {
            return Err(DecoderError::BadHmm(
                "class_priors must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

fn check_simplex(row: &[f64], what: &str) -> Result<(), DecoderError> {
    if row.iter().any(|&p| p < 0.0 || p.is_nan()) {
        return Err(DecoderError::BadHmm(format!(
            "{what} has negative or NaN entries"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(DecoderError::BadHmm(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Decoded word sequence with its log score and the per-step normalized
/// forward score distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub word_indices: Vec<usize>,
    pub log_score: f64,
    pub per_step_scores: Mat,
}

/// Smoothed label frequencies: `p(q) = (count(q) + s) / (N + V*s)`.
pub fn estimate_class_priors(
    labels: &[usize],
    v: usize,
    smoothing: f64,
) -> Result<Vec<f64>, DecoderError> {
    assert!(v >= 1, "vocabulary must be non-empty");
    assert!(smoothing >= 0.0, "smoothing must be nonnegative");
    if labels.is_empty() && smoothing == 0.0 {
        return Err(DecoderError::EmptyLabels);
    }
    let mut counts = vec![0usize; v];
    for &q in labels {
        if q >= v {
            return Err(DecoderError::LabelOutOfRange { label: q, v });
        }
        counts[q] += 1;
    }
    let denom = labels.len() as f64 + v as f64 * smoothing;
    Ok(counts
        .iter()
        .map(|&c| (c as f64 + smoothing) / denom)
        .collect())
}

/// Word-bigram HMM from training label sequences: transitions are
/// smoothed bigram frequencies, prior and class priors are smoothed
/// unigram frequencies over all labels.
pub fn hmm_from_labels(
    sequences: &[Vec<usize>],
    v: usize,
    smoothing: f64,
) -> Result<WordHmm, DecoderError> {
    let all: Vec<usize> = sequences.iter().flatten().copied().collect();
    let unigram = estimate_class_priors(&all, v, smoothing)?;

    let mut bigram = vec![vec![0usize; v]; v];
    for seq in sequences {
        for pair in seq.windows(2) {
            let (r, q) = (pair[0], pair[1]);
            if r >= v || q >= v {
                return Err(DecoderError::LabelOutOfRange { label: r.max(q), v });
            }
            bigram[r][q] += 1;
        }
    }

    let mut transition = Mat::zeros(v, v);
    for (r, row) in bigram.iter().enumerate() {
        let total: usize = row.iter().sum();
        let denom = total as f64 + v as f64 * smoothing;
        if denom == 0.0 {
            // No outgoing observations and no smoothing: fall back to
            // uniform so the row stays stochastic.
            for q in 0..v {
                transition.set(r, q, 1.0 / v as f64);
            }
        } else {
            for (q, &count) in row.iter().enumerate() {
                transition.set(r, q, (count as f64 + smoothing) / denom);
            }
        }
    }

    let hmm = WordHmm {
        transition,
        prior: unigram.clone(),
        class_priors: unigram,
    };
    hmm.validate()?;
    Ok(hmm)
}

/// Divide each posterior column by its class prior.
pub fn scaled_likelihoods(posteriors: &Mat, class_priors: &[f64]) -> Result<Mat, DecoderError> {
    if posteriors.cols() != class_priors.len() {
        return Err(DecoderError::DimensionMismatch {
            got: posteriors.cols(),
            expected: class_priors.len(),
        });
    }
    if let Some(q) = class_priors.iter().position(|&p| p <= 0.0) {
        return Err(DecoderError::ZeroPrior(q));
    }
    let mut out = Mat::zeros(posteriors.rows(), posteriors.cols());
    for t in 0..posteriors.rows() {
        let row = out.row_mut(t);
        for (q, r) in row.iter_mut().enumerate() {
            *r = posteriors.at(t, q) / class_priors[q];
        }
    }
    Ok(out)
}

/// `ln` with `ln 0 = -inf` rather than a domain error.
fn ln0(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Most probable state path in log domain. Ties break toward the lower
/// state index at every maximization.
pub fn viterbi(hmm: &WordHmm, likelihoods: &Mat) -> Result<DecodeResult, DecoderError> {
    hmm.validate()?;
    let v = hmm.vocab_size();
    let t_len = likelihoods.rows();
    if t_len == 0 {
        return Err(DecoderError::EmptySequence);
    }
    if likelihoods.cols() != v {
        return Err(DecoderError::DimensionMismatch {
            got: likelihoods.cols(),
            expected: v,
        });
    }

    let ln_a: Vec<f64> = hmm.transition.data().iter().map(|&p| ln0(p)).collect();

    let mut delta: Vec<f64> = (0..v)
        .map(|q| ln0(hmm.prior[q]) + ln0(likelihoods.at(0, q)))
        .collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len.saturating_sub(1));

    for t in 1..t_len {
        let mut next = vec![f64::NEG_INFINITY; v];
        let mut arg = vec![0usize; v];
        for q in 0..v {
            let mut best = f64::NEG_INFINITY;
            let mut best_r = 0;
            for r in 0..v {
                let cand = delta[r] + ln_a[r * v + q];
                if cand > best {
                    best = cand;
                    best_r = r;
                }
            }
            next[q] = best + ln0(likelihoods.at(t, q));
            arg[q] = best_r;
        }
        delta = next;
        back.push(arg);
    }

    let mut best_q = 0;
    let mut best = f64::NEG_INFINITY;
    for (q, &d) in delta.iter().enumerate() {
        if d > best {
            best = d;
            best_q = q;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(DecoderError::AllPathsImpossible);
    }

    let mut path = vec![best_q; t_len];
    for t in (1..t_len).rev() {
        path[t - 1] = back[t - 1][path[t]];
    }

    let (per_step_scores, _) = forward_scores(hmm, likelihoods)?;
    Ok(DecodeResult {
        word_indices: path,
        log_score: best,
        per_step_scores,
    })
}

/// Scaled forward recursion. Each step's scores are renormalized to sum 1
/// and the log normalizers accumulate into the total log-likelihood.
pub fn forward_scores(hmm: &WordHmm, likelihoods: &Mat) -> Result<(Mat, f64), DecoderError> {
    hmm.validate()?;
    let v = hmm.vocab_size();
    let t_len = likelihoods.rows();
    if t_len == 0 {
        return Err(DecoderError::EmptySequence);
    }
    if likelihoods.cols() != v {
        return Err(DecoderError::DimensionMismatch {
            got: likelihoods.cols(),
            expected: v,
        });
    }

    let mut scores = Mat::zeros(t_len, v);
    let mut log_total = 0.0;
    let mut alpha: Vec<f64> = (0..v)
        .map(|q| hmm.prior[q] * likelihoods.at(0, q))
        .collect();

    for t in 0..t_len {
        if t > 0 {
            let prev = scores.row(t - 1).to_vec();
            for (q, a) in alpha.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (r, &pr) in prev.iter().enumerate() {
                    acc += pr * hmm.transition.at(r, q);
                }
                *a = acc * likelihoods.at(t, q);
            }
        }
        let norm: f64 = alpha.iter().sum();
        // `<= 0.0 || is_nan` also rejects a NaN sum from poisoned inputs.
        if norm <= 0.0 || norm.is_nan() {
            return Err(DecoderError::AllPathsImpossible);
        }
        log_total += norm.ln();
        let row = scores.row_mut(t);
        for (q, &a) in alpha.iter().enumerate() {
            row[q] = a / norm;
        }
    }

    Ok((scores, log_total))
}

/// Full decode of an utterance sequence: encode with the map, classify,
/// rescale by class priors, and run Viterbi.
pub fn decode_utterance_sequence(
    mlp: &MlpModel,
    som: &SomCodebook,
    hmm: &WordHmm,
    utterances: &[UtteranceFeature],
) -> Result<DecodeResult, DecoderError> {
    if utterances.is_empty() {
        return Err(DecoderError::EmptySequence);
    }
    let activations: Vec<Vec<f64>> = utterances
        .iter()
        .map(|u| som_encode(som, u))
        .collect::<Result<_, _>>()?;
    let posteriors = mlp_posteriors(mlp, &activations)?;
    let likelihoods = scaled_likelihoods(&posteriors, &hmm.class_priors)?;
    viterbi(hmm, &likelihoods)
}

/// Serialize an HMM: magic, version, V, then transition row-major, prior,
/// class priors as little-endian doubles.
pub fn write_hmm_model(path: impl AsRef<Path>, hmm: &WordHmm) -> Result<(), DecoderError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    binio::write_magic(&mut w, MODEL_MAGIC, MODEL_VERSION)?;
    binio::write_u32(&mut w, hmm.vocab_size() as u32)?;
    binio::write_f64_slice(&mut w, hmm.transition.data())?;
    binio::write_f64_slice(&mut w, &hmm.prior)?;
    binio::write_f64_slice(&mut w, &hmm.class_priors)?;
    w.flush()?;
    Ok(())
}

pub fn read_hmm_model(path: impl AsRef<Path>) -> Result<WordHmm, DecoderError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    binio::expect_header(&mut r, MODEL_MAGIC, MODEL_VERSION)?;
    let v = binio::read_u32(&mut r)? as usize;
    let transition = binio::read_f64_vec(&mut r, v * v)?;
    let prior = binio::read_f64_vec(&mut r, v)?;
    let class_priors = binio::read_f64_vec(&mut r, v)?;

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(DecoderError::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "trailing bytes after model",
        )));
    }

    let hmm = WordHmm {
        transition: Mat::from_vec(v, v, transition),
        prior,
        class_priors,
    };
    hmm.validate()?;
    Ok(hmm)
}

/// CSV export for inspection: transition rows, then prior, then class
/// priors, each tagged in the first column.
pub fn export_hmm_csv(path: impl AsRef<Path>, hmm: &WordHmm) -> Result<(), DecoderError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for (r, row) in hmm.transition.iter_rows().enumerate() {
        write!(w, "A{r}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    write!(w, "pi")?;
    for v in &hmm.prior {
        write!(w, ",{v}")?;
    }
    writeln!(w)?;
    write!(w, "class_prior")?;
    for v in &hmm.class_priors {
        write!(w, ",{v}")?;
    }
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
