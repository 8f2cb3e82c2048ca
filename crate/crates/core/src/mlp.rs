//! Three-layer feed-forward classifier trained by backpropagation.
//!
//! Maps K-dimensional map activations to word posterior probabilities:
//! sigmoid hidden layer, softmax output, cross-entropy loss, online
//! stochastic gradient descent with seeded shuffling.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::binio;
use crate::mat::Mat;

const MODEL_MAGIC: &[u8; 4] = b"MLPM";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("input has dimension {got}, model expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("label {label} out of range for {n_output} outputs")]
    LabelOutOfRange { label: usize, n_output: usize },
    #[error("invalid MLP config: {0}")]
    BadConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub n_input: usize,
    pub n_hidden: usize,
    pub n_output: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Half-width of the uniform weight init; `None` uses `1/sqrt(fan_in)`
    /// per layer.
    pub init_scale: Option<f64>,
}

impl MlpConfig {
    pub fn new(n_input: usize, n_hidden: usize, n_output: usize, seed: u64) -> MlpConfig {
        MlpConfig {
            n_input,
            n_hidden,
            n_output,
            lr: 0.01,
            epochs: 200,
            batch_size: 1,
            seed,
            init_scale: None,
        }
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        if self.n_input < 1 || self.n_hidden < 1 || self.n_output < 1 {
            return Err(MlpError::BadConfig("all layer widths must be >= 1".into()));
        }
        if self.lr <= 0.0 || self.lr.is_nan() {
            return Err(MlpError::BadConfig("lr must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(MlpError::BadConfig(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Network parameters: `W1` is hidden×input, `W2` output×hidden.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl MlpModel {
    pub fn n_input(&self) -> usize {
        self.w1.cols()
    }

    pub fn n_hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn n_output(&self) -> usize {
        self.w2.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

fn affine(w: &Mat, x: &[f64], b: &[f64]) -> Vec<f64> {
    w.iter_rows()
        .zip(b)
        .map(|(row, bi)| bi + row.iter().zip(x).map(|(wij, xj)| wij * xj).sum::<f64>())
        .collect()
}

fn forward_parts(model: &MlpModel, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut h = affine(&model.w1, x, &model.b1);
    for v in &mut h {
        *v = sigmoid(*v);
    }
    let mut y = affine(&model.w2, &h, &model.b2);
    softmax_in_place(&mut y);
    (h, y)
}

/// Posterior probabilities for one input vector.
pub fn mlp_forward(model: &MlpModel, x: &[f64]) -> Result<Vec<f64>, MlpError> {
    if x.len() != model.n_input() {
        return Err(MlpError::DimensionMismatch {
            got: x.len(),
            expected: model.n_input(),
        });
    }
    Ok(forward_parts(model, x).1)
}

/// Posterior matrix for a sequence of inputs: row `t` is
/// `mlp_forward(rows[t])`.
pub fn mlp_posteriors(model: &MlpModel, rows: &[Vec<f64>]) -> Result<Mat, MlpError> {
    let v = model.n_output();
    let mut out = Mat::zeros(rows.len(), v);
    for (t, x) in rows.iter().enumerate() {
        let y = mlp_forward(model, x)?;
        out.row_mut(t).copy_from_slice(&y);
    }
    Ok(out)
}

/// Gradients of the cross-entropy loss for one sample, laid out like the
/// model itself.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl MlpGradients {
    fn zeros(model: &MlpModel) -> MlpGradients {
        MlpGradients {
            w1: Mat::zeros(model.n_hidden(), model.n_input()),
            b1: vec![0.0; model.n_hidden()],
            w2: Mat::zeros(model.n_output(), model.n_hidden()),
            b2: vec![0.0; model.n_output()],
        }
    }

    fn scale(&mut self, s: f64) {
        for v in self.w1.data_mut() {
            *v *= s;
        }
        for v in self.w2.data_mut() {
            *v *= s;
        }
        for v in &mut self.b1 {
            *v *= s;
        }
        for v in &mut self.b2 {
            *v *= s;
        }
    }
}

/// Cross-entropy loss `-ln y[label]` and its gradients for one sample.
pub fn mlp_loss_and_gradients(
    model: &MlpModel,
    x: &[f64],
    label: usize,
) -> Result<(f64, MlpGradients), MlpError> {
    if x.len() != model.n_input() {
        return Err(MlpError::DimensionMismatch {
            got: x.len(),
            expected: model.n_input(),
        });
    }
    if label >= model.n_output() {
        return Err(MlpError::LabelOutOfRange {
            label,
            n_output: model.n_output(),
        });
    }

    let (h, y) = forward_parts(model, x);
    let loss = -y[label].max(f64::MIN_POSITIVE).ln();

    // dL/dlogit = y - onehot(label)
    let mut dz: Vec<f64> = y;
    dz[label] -= 1.0;

    let mut g = MlpGradients::zeros(model);
    for (i, &dzi) in dz.iter().enumerate() {
        g.b2[i] = dzi;
        let row = g.w2.row_mut(i);
        for (j, &hj) in h.iter().enumerate() {
            row[j] = dzi * hj;
        }
    }

    // dL/dh, then through the sigmoid.
    for (j, &hj) in h.iter().enumerate() {
        let mut dh = 0.0;
        for (i, &dzi) in dz.iter().enumerate() {
            dh += dzi * model.w2.at(i, j);
        }
        let dpre = dh * hj * (1.0 - hj);
        g.b1[j] = dpre;
        let row = g.w1.row_mut(j);
        for (k, &xk) in x.iter().enumerate() {
            row[k] = dpre * xk;
        }
    }

    Ok((loss, g))
}

fn apply_gradients(model: &mut MlpModel, g: &MlpGradients, lr: f64) {
    for (w, gw) in model.w1.data_mut().iter_mut().zip(g.w1.data()) {
        *w -= lr * gw;
    }
    for (b, gb) in model.b1.iter_mut().zip(&g.b1) {
        *b -= lr * gb;
    }
    for (w, gw) in model.w2.data_mut().iter_mut().zip(g.w2.data()) {
        *w -= lr * gw;
    }
    for (b, gb) in model.b2.iter_mut().zip(&g.b2) {
        *b -= lr * gb;
    }
}

fn accumulate(acc: &mut MlpGradients, g: &MlpGradients) {
    for (a, v) in acc.w1.data_mut().iter_mut().zip(g.w1.data()) {
        *a += v;
    }
    for (a, v) in acc.b1.iter_mut().zip(&g.b1) {
        *a += v;
    }
    for (a, v) in acc.w2.data_mut().iter_mut().zip(g.w2.data()) {
        *a += v;
    }
    for (a, v) in acc.b2.iter_mut().zip(&g.b2) {
        *a += v;
    }
}

/// Seeded initial model: weights uniform in `(-s, s)` with `s` from
/// `init_scale` or `1/sqrt(fan_in)` per layer, biases zero. `W1` is drawn
/// row-major before `W2`.
pub fn mlp_init(cfg: &MlpConfig) -> Result<MlpModel, MlpError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let draw = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| -> Mat {
        let s = cfg.init_scale.unwrap_or(1.0 / (cols as f64).sqrt());
        let data = (0..rows * cols).map(|_| rng.gen_range(-s..s)).collect();
        Mat::from_vec(rows, cols, data)
    };

    let w1 = draw(cfg.n_hidden, cfg.n_input, &mut rng);
    let w2 = draw(cfg.n_output, cfg.n_hidden, &mut rng);
    Ok(MlpModel {
        w1,
        b1: vec![0.0; cfg.n_hidden],
        w2,
        b2: vec![0.0; cfg.n_output],
    })
}

/// Trained model plus the mean per-sample loss observed in each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTraining {
    pub model: MlpModel,
    pub epoch_loss: Vec<f64>,
}

/// Stochastic gradient descent on cross-entropy over `(input, label)`
/// pairs. Samples are shuffled each epoch with the config seed; batches of
/// `batch_size` samples apply their mean gradient.
pub fn mlp_train(dataset: &[(Vec<f64>, usize)], cfg: &MlpConfig) -> Result<MlpTraining, MlpError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(MlpError::EmptyDataset);
    }
    for (x, label) in dataset {
        if x.len() != cfg.n_input {
            return Err(MlpError::DimensionMismatch {
                got: x.len(),
                expected: cfg.n_input,
            });
        }
        if *label >= cfg.n_output {
            return Err(MlpError::LabelOutOfRange {
                label: *label,
                n_output: cfg.n_output,
            });
        }
    }

    let mut model = mlp_init(cfg)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    // Shuffling gets its own stream so the init draws stay independent of
    // the dataset size.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));

    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total_loss = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            let mut acc = MlpGradients::zeros(&model);
            for &i in batch {
                let (x, label) = &dataset[i];
                let (loss, g) = mlp_loss_and_gradients(&model, x, *label)?;
                total_loss += loss;
                accumulate(&mut acc, &g);
            }
            acc.scale(1.0 / batch.len() as f64);
            apply_gradients(&mut model, &acc, cfg.lr);
        }

        epoch_loss.push(total_loss / dataset.len() as f64);
    }

    Ok(MlpTraining { model, epoch_loss })
}

/// Serialize a model: magic, version, dims, then `W1, b1, W2, b2`
/// row-major as little-endian doubles.
pub fn write_mlp_model(path: impl AsRef<Path>, model: &MlpModel) -> Result<(), MlpError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    binio::write_magic(&mut w, MODEL_MAGIC, MODEL_VERSION)?;
    binio::write_u32(&mut w, model.n_input() as u32)?;
    binio::write_u32(&mut w, model.n_hidden() as u32)?;
    binio::write_u32(&mut w, model.n_output() as u32)?;
    binio::write_f64_slice(&mut w, model.w1.data())?;
    binio::write_f64_slice(&mut w, &model.b1)?;
    binio::write_f64_slice(&mut w, model.w2.data())?;
    binio::write_f64_slice(&mut w, &model.b2)?;
    w.flush()?;
    Ok(())
}

pub fn read_mlp_model(path: impl AsRef<Path>) -> Result<MlpModel, MlpError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    binio::expect_header(&mut r, MODEL_MAGIC, MODEL_VERSION)?;
    let n_input = binio::read_u32(&mut r)? as usize;
    let n_hidden = binio::read_u32(&mut r)? as usize;
    let n_output = binio::read_u32(&mut r)? as usize;
    let w1 = binio::read_f64_vec(&mut r, n_hidden * n_input)?;
    let b1 = binio::read_f64_vec(&mut r, n_hidden)?;
    let w2 = binio::read_f64_vec(&mut r, n_output * n_hidden)?;
    let b2 = binio::read_f64_vec(&mut r, n_output)?;

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(MlpError::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "trailing bytes after model",
        )));
    }

    Ok(MlpModel {
        w1: Mat::from_vec(n_hidden, n_input, w1),
        b1,
        w2: Mat::from_vec(n_output, n_hidden, w2),
        b2,
    })
}

/// CSV export of per-epoch training loss: rows `epoch,loss`.
pub fn export_loss_csv(path: impl AsRef<Path>, epoch_loss: &[f64]) -> Result<(), MlpError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for (epoch, loss) in epoch_loss.iter().enumerate() {
        writeln!(w, "{epoch},{loss}")?;
    }
    w.flush()?;
    Ok(())
}
