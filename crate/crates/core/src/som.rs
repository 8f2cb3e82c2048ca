//! Self-organizing map over utterance feature vectors.
//!
//! The map clusters utterances into `k_units` prototypes on a small 2D
//! lattice, then re-encodes each utterance as a K-dimensional activation
//! vector (soft assignment over all units) for the classifier stage.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::binio;
use crate::frontend::UtteranceFeature;
use crate::mat::{dist, dist_sq, Mat};

const MODEL_MAGIC: &[u8; 4] = b"SOMC";
const MODEL_VERSION: u32 = 1;

/// Activation floor so encodings stay strictly positive even when a
/// prototype is absurdly far from the query.
const ACTIVATION_FLOOR: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum SomError {
    #[error("need at least {needed} training vectors, got {got}")]
    InsufficientData { got: usize, needed: usize },
    #[error("feature has dimension {got}, codebook expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("invalid SOM config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SomConfig {
    pub k_units: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub sigma_initial: f64,
    pub sigma_final: f64,
    pub seed: u64,
}

impl SomConfig {
    /// Standard configuration for a unit count, on a near-square lattice:
    /// 16 → 4×4, 32 → 4×8, 64 → 8×8, 128 → 8×16.
    pub fn for_k(k_units: usize, seed: u64) -> Result<SomConfig, SomError> {
        let (grid_rows, grid_cols) = match k_units {
            16 => (4, 4),
            32 => (4, 8),
            64 => (8, 8),
            128 => (8, 16),
            _ => {
                // Fall back to the most square factorization.
                let mut best = (1, k_units);
                for r in 1..=k_units {
                    if k_units.is_multiple_of(r) {
                        let c = k_units / r;
                        if r <= c && c - r < best.1 - best.0 {
                            best = (r, c);
                        }
                    }
                }
                best
            }
        };
        let cfg = SomConfig {
            k_units,
            grid_rows,
            grid_cols,
            epochs: 100,
            lr_initial: 0.5,
            lr_final: 0.01,
            sigma_initial: grid_rows.max(grid_cols) as f64 / 2.0,
            sigma_final: 0.5,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SomError> {
        if self.k_units < 2 {
            return Err(SomError::BadConfig("k_units must be >= 2".into()));
        }
        if self.grid_rows * self.grid_cols != self.k_units {
            return Err(SomError::BadConfig(format!(
                "grid {}x{} does not cover {} units",
                self.grid_rows, self.grid_cols, self.k_units
            )));
        }
        if !(self.lr_initial >= self.lr_final && self.lr_final > 0.0) {
            return Err(SomError::BadConfig(
                "need lr_initial >= lr_final > 0".into(),
            ));
        }
        if !(self.sigma_initial >= self.sigma_final && self.sigma_final > 0.0) {
            return Err(SomError::BadConfig(
                "need sigma_initial >= sigma_final > 0".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(SomError::BadConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Trained map: prototypes, their lattice coordinates, and the bandwidth
/// used by the soft encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct SomCodebook {
    pub prototypes: Mat,
    pub grid_coords: Vec<(usize, usize)>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub encode_bandwidth: f64,
}

impl SomCodebook {
    pub fn k_units(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.cols()
    }
}

/// `initial * (final/initial)^(t/epochs)` with `t` the 0-based epoch.
fn decayed(initial: f64, final_: f64, epoch: usize, epochs: usize) -> f64 {
    initial * (final_ / initial).powf(epoch as f64 / epochs as f64)
}

/// Best-matching unit: index of the nearest prototype, ties to the lowest
/// index.
pub fn bmu(prototypes: &Mat, x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, w) in prototypes.iter_rows().enumerate() {
        let d = dist_sq(w, x);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn grid_dist_sq(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dr = a.0 as f64 - b.0 as f64;
    let dc = a.1 as f64 - b.1 as f64;
    dr * dr + dc * dc
}

fn median_pairwise_distance(prototypes: &Mat) -> f64 {
    let k = prototypes.rows();
    let mut dists = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            dists.push(dist(prototypes.row(i), prototypes.row(j)));
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    // Collapsed codebooks (all prototypes equal) would make the encoding
    // divide by zero; fall back to a unit bandwidth.
    if median < 1e-12 {
        1.0
    } else {
        median
    }
}

/// Train a map with the classic online update: per sample, move every
/// prototype toward the sample proportionally to a Gaussian of its lattice
/// distance from the best-matching unit; learning rate and neighborhood
/// width decay exponentially across epochs.
pub fn som_train(features: &[UtteranceFeature], cfg: &SomConfig) -> Result<SomCodebook, SomError> {
    cfg.validate()?;
    if features.len() < cfg.k_units {
        return Err(SomError::InsufficientData {
            got: features.len(),
            needed: cfg.k_units,
        });
    }
    let dim = features[0].values.len();
    for f in features {
        if f.values.len() != dim {
            return Err(SomError::DimensionMismatch {
                got: f.values.len(),
                expected: dim,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let grid_coords: Vec<(usize, usize)> = (0..cfg.k_units)
        .map(|k| (k / cfg.grid_cols, k % cfg.grid_cols))
        .collect();

    // Initialize prototypes from the data itself (sampled without
    // replacement) so they start inside the support.
    let mut idx: Vec<usize> = (0..features.len()).collect();
    idx.shuffle(&mut rng);
    let rows: Vec<Vec<f64>> = idx[..cfg.k_units]
        .iter()
        .map(|&i| features[i].values.clone())
        .collect();
    let mut prototypes = Mat::from_rows(&rows);

    let mut order: Vec<usize> = (0..features.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = decayed(cfg.lr_initial, cfg.lr_final, epoch, cfg.epochs);
        let sigma = decayed(cfg.sigma_initial, cfg.sigma_final, epoch, cfg.epochs);
        let two_sigma_sq = 2.0 * sigma * sigma;

        order.shuffle(&mut rng);
        for &i in &order {
            let x = &features[i].values;
            let best = bmu(&prototypes, x);
            let best_coord = grid_coords[best];
            for (k, &coord) in grid_coords.iter().enumerate() {
                let h = (-grid_dist_sq(best_coord, coord) / two_sigma_sq).exp();
                let step = lr * h;
                if step == 0.0 {
                    continue;
                }
                let w = prototypes.row_mut(k);
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += step * (xj - *wj);
                }
            }
        }
    }

    let encode_bandwidth = median_pairwise_distance(&prototypes);
    Ok(SomCodebook {
        prototypes,
        grid_coords,
        grid_rows: cfg.grid_rows,
        grid_cols: cfg.grid_cols,
        encode_bandwidth,
    })
}

/// Soft assignment over all units: `a_k ∝ exp(−‖x−w_k‖² / (2·bandwidth²))`,
/// normalized to sum 1.
///
/// The common factor `exp(d_min²/(2σ²))` is divided out before
/// exponentiation so distant codebooks cannot underflow every activation;
/// the normalized result is identical.
pub fn som_encode(codebook: &SomCodebook, x: &UtteranceFeature) -> Result<Vec<f64>, SomError> {
    let x = &x.values;
    if x.len() != codebook.dim() {
        return Err(SomError::DimensionMismatch {
            got: x.len(),
            expected: codebook.dim(),
        });
    }

    let d_sq: Vec<f64> = codebook
        .prototypes
        .iter_rows()
        .map(|w| dist_sq(w, x))
        .collect();
    let d_min = d_sq.iter().cloned().fold(f64::INFINITY, f64::min);
    let two_sigma_sq = 2.0 * codebook.encode_bandwidth * codebook.encode_bandwidth;

    let mut a: Vec<f64> = d_sq
        .iter()
        .map(|d| (-(d - d_min) / two_sigma_sq).exp().max(ACTIVATION_FLOOR))
        .collect();
    let total: f64 = a.iter().sum();
    for v in &mut a {
        *v /= total;
    }
    Ok(a)
}

/// One-hot alternative to [`som_encode`]: 1 at the best-matching unit.
pub fn som_encode_one_hot(
    codebook: &SomCodebook,
    x: &UtteranceFeature,
) -> Result<Vec<f64>, SomError> {
    if x.values.len() != codebook.dim() {
        return Err(SomError::DimensionMismatch {
            got: x.values.len(),
            expected: codebook.dim(),
        });
    }
    let mut a = vec![0.0; codebook.k_units()];
    a[bmu(&codebook.prototypes, &x.values)] = 1.0;
    Ok(a)
}

/// Mean distance from each feature to its best-matching prototype.
pub fn som_quantization_error(codebook: &SomCodebook, features: &[UtteranceFeature]) -> f64 {
    assert!(!features.is_empty(), "need at least one feature");
    let total: f64 = features
        .iter()
        .map(|f| {
            let best = bmu(&codebook.prototypes, &f.values);
            dist(codebook.prototypes.row(best), &f.values)
        })
        .sum();
    total / features.len() as f64
}

/// Serialize a codebook: magic, version, K, D, grid dims, bandwidth, then
/// prototypes row-major as little-endian doubles.
pub fn write_som_model(path: impl AsRef<Path>, codebook: &SomCodebook) -> Result<(), SomError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    binio::write_magic(&mut w, MODEL_MAGIC, MODEL_VERSION)?;
    binio::write_u32(&mut w, codebook.k_units() as u32)?;
    binio::write_u32(&mut w, codebook.dim() as u32)?;
    binio::write_u32(&mut w, codebook.grid_rows as u32)?;
    binio::write_u32(&mut w, codebook.grid_cols as u32)?;
    binio::write_f64(&mut w, codebook.encode_bandwidth)?;
    binio::write_f64_slice(&mut w, codebook.prototypes.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_som_model(path: impl AsRef<Path>) -> Result<SomCodebook, SomError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    binio::expect_header(&mut r, MODEL_MAGIC, MODEL_VERSION)?;
    let k = binio::read_u32(&mut r)? as usize;
    let d = binio::read_u32(&mut r)? as usize;
    let grid_rows = binio::read_u32(&mut r)? as usize;
    let grid_cols = binio::read_u32(&mut r)? as usize;
    let encode_bandwidth = binio::read_f64(&mut r)?;
    let data = binio::read_f64_vec(&mut r, k * d)?;

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(SomError::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "trailing bytes after codebook",
        )));
    }

    let grid_coords = (0..k).map(|u| (u / grid_cols, u % grid_cols)).collect();
    Ok(SomCodebook {
        prototypes: Mat::from_vec(k, d, data),
        grid_coords,
        grid_rows,
        grid_cols,
        encode_bandwidth,
    })
}

/// CSV export for inspection: one row per unit, `row,col,w0,w1,...`.
pub fn export_som_csv(path: impl AsRef<Path>, codebook: &SomCodebook) -> Result<(), SomError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for (k, proto) in codebook.prototypes.iter_rows().enumerate() {
        let (r, c) = codebook.grid_coords[k];
        write!(w, "{r},{c}")?;
        for v in proto {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feat(values: Vec<f64>) -> UtteranceFeature {
        UtteranceFeature {
            n_valid_frames: 1,
            values,
        }
    }

    fn two_clouds(n_per: usize, seed: u64) -> Vec<UtteranceFeature> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for i in 0..(2 * n_per) {
            let center = if i % 2 == 0 { -5.0 } else { 5.0 };
            out.push(feat(vec![
                center + rng.gen_range(-0.5..0.5),
                center + rng.gen_range(-0.5..0.5),
            ]));
        }
        out
    }

    fn small_cfg(k: usize, epochs: usize, seed: u64) -> SomConfig {
        let mut cfg = SomConfig::for_k(k, seed).unwrap();
        cfg.epochs = epochs;
        cfg
    }

    #[test]
    fn separated_clouds_get_one_prototype_each() {
        let data = two_clouds(30, 1);
        let cfg = SomConfig {
            k_units: 2,
            grid_rows: 1,
            grid_cols: 2,
            epochs: 60,
            lr_initial: 0.5,
            lr_final: 0.01,
            sigma_initial: 1.0,
            sigma_final: 0.05,
            seed: 9,
        };
        let initial_q = {
            // Quantization error of the raw sampled initialization, for the
            // improvement check below.
            let mut init_cfg = cfg.clone();
            init_cfg.epochs = 1;
            init_cfg.lr_initial = 1e-12;
            init_cfg.lr_final = 1e-13;
            let frozen = som_train(&data, &init_cfg).unwrap();
            som_quantization_error(&frozen, &data)
        };
        let book = som_train(&data, &cfg).unwrap();

        let in_neg = |w: &[f64]| w.iter().all(|&v| v < 0.0);
        let in_pos = |w: &[f64]| w.iter().all(|&v| v > 0.0);
        let w0 = book.prototypes.row(0);
        let w1 = book.prototypes.row(1);
        assert!(
            (in_neg(w0) && in_pos(w1)) || (in_pos(w0) && in_neg(w1)),
            "prototypes did not separate: {w0:?} {w1:?}"
        );

        // Every sample's BMU agrees with its cloud.
        for (i, f) in data.iter().enumerate() {
            let unit = bmu(&book.prototypes, &f.values);
            let cloud_sign = if i % 2 == 0 { -1.0 } else { 1.0 };
            assert!(book.prototypes.row(unit)[0] * cloud_sign > 0.0);
        }

        assert!(som_quantization_error(&book, &data) < initial_q);
    }

    #[test]
    fn distinct_vectors_are_fixed_points() {
        // k_units copies of k_units distinct, well-separated vectors with a
        // vanishing neighborhood: prototypes settle onto the vectors.
        let k = 4;
        let bases: Vec<Vec<f64>> = (0..k)
            .map(|i| vec![10.0 * i as f64, -5.0 * i as f64])
            .collect();
        let mut data = Vec::new();
        for _ in 0..k {
            for b in &bases {
                data.push(feat(b.clone()));
            }
        }
        let cfg = SomConfig {
            k_units: k,
            grid_rows: 2,
            grid_cols: 2,
            epochs: 300,
            lr_initial: 0.5,
            lr_final: 0.01,
            sigma_initial: 1.0,
            sigma_final: 1e-3,
            seed: 4,
        };
        let book = som_train(&data, &cfg).unwrap();
        for b in &bases {
            let best = bmu(&book.prototypes, b);
            assert!(
                dist(book.prototypes.row(best), b) < 1e-3,
                "no prototype near {b:?}"
            );
        }
    }

    #[test]
    fn insufficient_data_is_rejected() {
        let cfg = small_cfg(16, 5, 1);
        let data = vec![feat(vec![0.0, 1.0]); 15];
        assert!(matches!(
            som_train(&data, &cfg),
            Err(SomError::InsufficientData {
                got: 15,
                needed: 16
            })
        ));
    }

    #[test]
    fn encode_is_a_probability_vector_peaked_at_matching_prototype() {
        let data = two_clouds(40, 2);
        let book = som_train(&data, &small_cfg(16, 20, 3)).unwrap();

        let j = 11;
        let x = feat(book.prototypes.row(j).to_vec());
        let a = som_encode(&book, &x).unwrap();
        assert_eq!(a.len(), 16);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|&v| v > 0.0 && v <= 1.0));
        let argmax = a
            .iter()
            .enumerate()
            .max_by(|p, q| p.1.partial_cmp(q.1).unwrap())
            .unwrap()
            .0;
        // Converged maps can leave two units on the same spot; accept any
        // unit exactly as close as j.
        let dj = dist_sq(book.prototypes.row(j), &x.values);
        let da = dist_sq(book.prototypes.row(argmax), &x.values);
        assert!(da <= dj + 1e-12);
    }

    #[test]
    fn encode_equidistant_is_uniform() {
        let book = SomCodebook {
            prototypes: Mat::from_rows(&[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ]),
            grid_coords: vec![(0, 0), (0, 1), (0, 2)],
            grid_rows: 1,
            grid_cols: 3,
            encode_bandwidth: 0.8,
        };
        let a = som_encode(&book, &feat(vec![0.0, 0.0, 0.0])).unwrap();
        for v in &a {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_rejects_wrong_dimension() {
        let data = two_clouds(40, 7);
        let book = som_train(&data, &small_cfg(16, 3, 3)).unwrap();
        assert!(matches!(
            som_encode(&book, &feat(vec![1.0, 2.0, 3.0])),
            Err(SomError::DimensionMismatch {
                got: 3,
                expected: 2
            })
        ));
    }

    #[test]
    fn one_hot_marks_the_bmu() {
        let data = two_clouds(40, 8);
        let book = som_train(&data, &small_cfg(16, 5, 5)).unwrap();
        let x = &data[13];
        let a = som_encode_one_hot(&book, x).unwrap();
        assert_eq!(a.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(a.iter().filter(|&&v| v == 0.0).count(), 15);
        let unit = a.iter().position(|&v| v == 1.0).unwrap();
        assert_eq!(unit, bmu(&book.prototypes, &x.values));
    }

    #[test]
    fn quantization_error_matches_brute_force_scan() {
        let data = two_clouds(25, 12);
        let book = som_train(&data, &small_cfg(16, 10, 6)).unwrap();

        let expected: f64 = data
            .iter()
            .map(|f| {
                book.prototypes
                    .iter_rows()
                    .map(|w| dist(w, &f.values))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / data.len() as f64;
        assert!((som_quantization_error(&book, &data) - expected).abs() < 1e-12);
    }

    #[test]
    fn quantization_error_zero_on_prototype_data() {
        let book = SomCodebook {
            prototypes: Mat::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]),
            grid_coords: vec![(0, 0), (0, 1)],
            grid_rows: 1,
            grid_cols: 2,
            encode_bandwidth: 1.0,
        };
        let data = vec![feat(vec![1.0, 2.0]), feat(vec![-3.0, 0.5])];
        assert_eq!(som_quantization_error(&book, &data), 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = two_clouds(40, 20);
        let a = som_train(&data, &small_cfg(16, 15, 42)).unwrap();
        let b = som_train(&data, &small_cfg(16, 15, 42)).unwrap();
        assert_eq!(a, b);
        let c = som_train(&data, &small_cfg(16, 15, 43)).unwrap();
        assert_ne!(a.prototypes, c.prototypes);
    }

    #[test]
    fn bmu_is_translation_equivariant() {
        let data = two_clouds(40, 30);
        let book = som_train(&data, &small_cfg(16, 10, 7)).unwrap();
        let shift = 3.25;
        let mut shifted = book.prototypes.clone();
        for k in 0..shifted.rows() {
            for v in shifted.row_mut(k) {
                *v += shift;
            }
        }
        for f in &data {
            let q: Vec<f64> = f.values.iter().map(|v| v + shift).collect();
            assert_eq!(bmu(&book.prototypes, &f.values), bmu(&shifted, &q));
        }
    }

    #[test]
    fn model_file_round_trips() {
        let data = two_clouds(40, 77);
        let book = som_train(&data, &small_cfg(16, 10, 8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("som.model");
        write_som_model(&path, &book).unwrap();
        let loaded = read_som_model(&path).unwrap();
        assert_eq!(book, loaded);
    }

    #[test]
    fn model_file_rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.model");
        std::fs::write(&path, b"MLPM\x01\x00\x00\x00").unwrap();
        assert!(read_som_model(&path).is_err());
    }
}
