//! Genetic optimization of the HMM probability matrices.
//!
//! A chromosome is the flattened transition matrix followed by the initial
//! distribution. Fitness is the negated mean squared error between the
//! decoder's per-step forward score distributions and one-hot truth on a
//! development set; classifier weights and class priors stay frozen.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::decoder::{forward_scores, scaled_likelihoods, DecoderError, WordHmm};
use crate::mat::Mat;

#[derive(Debug, Error)]
pub enum GaError {
    #[error("chromosome invalid: {0}")]
    InvalidChromosome(String),
    #[error("invalid GA config: {0}")]
    BadConfig(String),
    #[error("development set is empty")]
    EmptyDevSet,
    #[error(transparent)]
    Decoder(#[from] DecoderError),
}

/// Flattened `(A, π)`: V rows of `A`, then `π`, length `V² + V`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome {
    pub genes: Vec<f64>,
}

impl Chromosome {
    pub fn from_hmm(hmm: &WordHmm) -> Chromosome {
        let mut genes = hmm.transition.data().to_vec();
        genes.extend_from_slice(&hmm.prior);
        Chromosome { genes }
    }

    /// Decode into an HMM, reusing the frozen class priors.
    pub fn to_hmm(&self, class_priors: &[f64]) -> Result<WordHmm, GaError> {
        let v = class_priors.len();
        if self.genes.len() != v * v + v {
            return Err(GaError::InvalidChromosome(format!(
                "length {} does not fit vocabulary {v}",
                self.genes.len()
            )));
        }
        let hmm = WordHmm {
            transition: Mat::from_vec(v, v, self.genes[..v * v].to_vec()),
            prior: self.genes[v * v..].to_vec(),
            class_priors: class_priors.to_vec(),
        };
        hmm.validate()?;
        Ok(hmm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate_per_gene: f64,
    pub mutation_sigma: f64,
    pub tournament_size: usize,
    pub elite_count: usize,
    pub seed: u64,
    pub seed_with_baseline: bool,
}

impl GaConfig {
    pub fn new(seed: u64) -> GaConfig {
        GaConfig {
            population: 30,
            generations: 100,
            crossover_rate: 0.9,
            mutation_rate_per_gene: 0.01,
            mutation_sigma: 0.05,
            tournament_size: 3,
            elite_count: 2,
            seed,
            seed_with_baseline: true,
        }
    }

    pub fn validate(&self) -> Result<(), GaError> {
        if self.population < 2 {
            return Err(GaError::BadConfig("population must be >= 2".into()));
        }
        if self.elite_count >= self.population {
            return Err(GaError::BadConfig(
                "elite_count must be < population".into(),
            ));
        }
        for (name, rate) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate_per_gene", self.mutation_rate_per_gene),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(GaError::BadConfig(format!("{name} must be in [0,1]")));
            }
        }
        if self.tournament_size < 1 {
            return Err(GaError::BadConfig("tournament_size must be >= 1".into()));
        }
        if self.mutation_sigma < 0.0 || self.mutation_sigma.is_nan() {
            return Err(GaError::BadConfig("mutation_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Convergence log entry for one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
}

/// One utterance sequence of the development set: classifier posteriors
/// (one row per utterance) and the true word indices.
pub type DevSequence = (Mat, Vec<usize>);

/// Project genes back onto the feasible set: negatives clamp to zero, each
/// `A`-row and `π` renormalize to sum 1, and an all-zero row becomes
/// uniform.
pub fn repair(genes: &[f64], v: usize) -> Result<Chromosome, GaError> {
    if genes.len() != v * v + v {
        return Err(GaError::InvalidChromosome(format!(
            "length {} does not fit vocabulary {v}",
            genes.len()
        )));
    }
    if genes.iter().any(|g| !g.is_finite()) {
        return Err(GaError::InvalidChromosome("non-finite gene".into()));
    }

    let mut out = genes.to_vec();
    for row in 0..=v {
        let lo = row * v;
        let slice = &mut out[lo..lo + v];
        let mut sum = 0.0;
        for g in slice.iter_mut() {
            *g = g.max(0.0);
            sum += *g;
        }
        if sum > 0.0 {
            for g in slice.iter_mut() {
                *g /= sum;
            }
        } else {
            for g in slice.iter_mut() {
                *g = 1.0 / v as f64;
            }
        }
    }
    Ok(Chromosome { genes: out })
}

/// Negated mean squared error between per-step forward scores and one-hot
/// truth over every step of the development set. Higher is better; 0 is a
/// perfect score.
pub fn fitness(
    chromosome: &Chromosome,
    dev_set: &[DevSequence],
    class_priors: &[f64],
) -> Result<f64, GaError> {
    if dev_set.is_empty() {
        return Err(GaError::EmptyDevSet);
    }
    let hmm = chromosome.to_hmm(class_priors)?;

    let mut total_sq = 0.0;
    let mut n_steps = 0usize;
    for (posteriors, truth) in dev_set {
        let lik = scaled_likelihoods(posteriors, class_priors)?;
        let (scores, _) = forward_scores(&hmm, &lik)?;
        debug_assert_eq!(scores.rows(), truth.len());
        for (t, &y) in truth.iter().enumerate() {
            let row = scores.row(t);
            for (q, &s) in row.iter().enumerate() {
                let target = if q == y { 1.0 } else { 0.0 };
                total_sq += (target - s) * (target - s);
            }
        }
        n_steps += truth.len();
    }
    Ok(-total_sq / n_steps as f64)
}

fn tournament_pick(fitnesses: &[f64], rng: &mut ChaCha8Rng, tournament_size: usize) -> usize {
    let mut best = rng.gen_range(0..fitnesses.len());
    for _ in 1..tournament_size {
        let challenger = rng.gen_range(0..fitnesses.len());
        if fitnesses[challenger] > fitnesses[best] {
            best = challenger;
        }
    }
    best
}

/// Evolve `(A, π)` against the development set. Returns the best-ever
/// chromosome decoded to an HMM and the per-generation fitness history
/// (generation 0 is the initial population, so the history has
/// `generations + 1` records).
pub fn evolve(
    dev_set: &[DevSequence],
    baseline: &WordHmm,
    cfg: &GaConfig,
) -> Result<(WordHmm, Vec<FitnessRecord>), GaError> {
    cfg.validate()?;
    if dev_set.is_empty() {
        return Err(GaError::EmptyDevSet);
    }
    baseline.validate()?;
    let v = baseline.vocab_size();
    let n_genes = v * v + v;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mutation = Normal::new(0.0, cfg.mutation_sigma)
        .map_err(|e| GaError::BadConfig(format!("mutation sigma: {e}")))?;

    let mut population: Vec<Chromosome> = Vec::with_capacity(cfg.population);
    if cfg.seed_with_baseline {
        population.push(Chromosome::from_hmm(baseline));
    }
    while population.len() < cfg.population {
        let genes: Vec<f64> = (0..n_genes).map(|_| rng.gen_range(0.0..1.0)).collect();
        population.push(repair(&genes, v)?);
    }

    let mut history = Vec::with_capacity(cfg.generations + 1);
    let mut best_ever: Option<(f64, Chromosome)> = None;

    for generation in 0..=cfg.generations {
        let fitnesses: Vec<f64> = population
            .iter()
            .map(|c| fitness(c, dev_set, &baseline.class_priors))
            .collect::<Result<_, _>>()?;

        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&a, &b| fitnesses[b].partial_cmp(&fitnesses[a]).unwrap());
        let best_idx = ranked[0];

        if best_ever
            .as_ref()
            .is_none_or(|(f, _)| fitnesses[best_idx] > *f)
        {
            best_ever = Some((fitnesses[best_idx], population[best_idx].clone()));
        }

        history.push(FitnessRecord {
            generation,
            best_fitness: fitnesses[best_idx],
            mean_fitness: fitnesses.iter().sum::<f64>() / fitnesses.len() as f64,
        });

        if generation == cfg.generations {
            break;
        }

        // Elites survive untouched, so per-generation best cannot drop.
        let mut next: Vec<Chromosome> = ranked[..cfg.elite_count]
            .iter()
            .map(|&i| population[i].clone())
            .collect();

        while next.len() < cfg.population {
            let pa = tournament_pick(&fitnesses, &mut rng, cfg.tournament_size);
            let pb = tournament_pick(&fitnesses, &mut rng, cfg.tournament_size);

            let mut child = population[pa].genes.clone();
            if rng.gen_bool(cfg.crossover_rate) {
                for (g, other) in child.iter_mut().zip(&population[pb].genes) {
                    if rng.gen_bool(0.5) {
                        *g = *other;
                    }
                }
            }
            for g in &mut child {
                if rng.gen_bool(cfg.mutation_rate_per_gene) {
                    *g += mutation.sample(&mut rng);
                }
            }
            let repaired = repair(&child, v)?;
            debug_assert!(chromosome_is_simplex(&repaired, v));
            next.push(repaired);
        }
        population = next;
    }

    let (_, best) = best_ever.expect("at least one generation evaluated");
    Ok((best.to_hmm(&baseline.class_priors)?, history))
}

fn chromosome_is_simplex(c: &Chromosome, v: usize) -> bool {
    (0..=v).all(|row| {
        let lo = row * v;
        let slice = &c.genes[lo..lo + v];
        slice.iter().all(|&g| g >= 0.0) && (slice.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    })
}

/// History CSV: rows `generation,best_fitness,mean_fitness`.
pub fn export_history_csv(
    path: impl AsRef<Path>,
    history: &[FitnessRecord],
) -> Result<(), std::io::Error> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for rec in history {
        writeln!(
            w,
            "{},{},{}",
            rec.generation, rec.best_fitness, rec.mean_fitness
        )?;
    }
    w.flush()
}
