//! Perceptual linear prediction internals: Bark-domain critical-band
//! analysis, equal-loudness weighting, RASTA trajectory filtering, and the
//! autocorrelation / Levinson-Durbin / cepstrum chain.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::{FrontendConfig, FrontendError};

/// Bark frequency of `f` Hz: `6 * asinh(f / 600)`.
pub fn bark(f_hz: f64) -> f64 {
    let x = f_hz / 600.0;
    6.0 * (x + (x * x + 1.0).sqrt()).ln()
}

/// Inverse of [`bark`].
pub fn bark_to_hz(z: f64) -> f64 {
    600.0 * (z / 6.0).sinh()
}

/// Equal-loudness weight at `f` Hz (40-dB hearing curve approximation).
fn equal_loudness(f_hz: f64) -> f64 {
    let w2 = (2.0 * std::f64::consts::PI * f_hz).powi(2);
    let num = (w2 + 56.8e6) * w2 * w2;
    let den = (w2 + 6.3e6).powi(2) * (w2 + 0.38e9);
    num / den
}

/// Critical-band analyzer for frames of a fixed length and sample rate.
///
/// The power spectrum is integrated over non-overlapping one-Bark bands
/// centered at integer Bark values, then weighted by the equal-loudness
/// curve at each band center. The edge bands copy their neighbor's weight
/// (the loudness curve vanishes at 0 Hz and is unreliable at Nyquist).
pub struct PlpAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    fft_len: usize,
    frame_len: usize,
    /// Band index for each spectrum bin `0..=fft_len/2`.
    bin_band: Vec<usize>,
    /// Equal-loudness weight per band.
    band_weight: Vec<f64>,
}

impl PlpAnalyzer {
    pub fn new(frame_len: usize, sample_rate_hz: u32) -> Self {
        assert!(frame_len > 0, "frame must be non-empty");
        assert!(sample_rate_hz > 0, "sample rate must be positive");

        let fft_len = frame_len.next_power_of_two().max(8);
        let fft = FftPlanner::new().plan_fft_forward(fft_len);

        let nyquist = f64::from(sample_rate_hz) / 2.0;
        let n_bands = bark(nyquist).round() as usize + 1;

        let n_bins = fft_len / 2 + 1;
        let bin_band: Vec<usize> = (0..n_bins)
            .map(|i| {
                let f = i as f64 * f64::from(sample_rate_hz) / fft_len as f64;
                (bark(f).round() as usize).min(n_bands - 1)
            })
            .collect();

        let mut band_weight: Vec<f64> = (0..n_bands)
            .map(|b| equal_loudness(bark_to_hz(b as f64)))
            .collect();
        if n_bands >= 2 {
            band_weight[0] = band_weight[1];
            band_weight[n_bands - 1] = band_weight[n_bands - 2];
        }

        PlpAnalyzer {
            fft,
            fft_len,
            frame_len,
            bin_band,
            band_weight,
        }
    }

    pub fn n_bands(&self) -> usize {
        self.band_weight.len()
    }

    /// Index of the band whose interval contains frequency `f` Hz.
    pub fn band_of_hz(&self, f_hz: f64) -> usize {
        (bark(f_hz).round() as usize).min(self.n_bands() - 1)
    }

    /// Equal-loudness-weighted critical-band energies of a windowed frame.
    pub fn bark_energies(&self, frame: &[f64]) -> Vec<f64> {
        assert_eq!(frame.len(), self.frame_len, "frame length mismatch");

        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.fft_len)
            .collect();
        self.fft.process(&mut buf);

        let mut bands = vec![0.0; self.n_bands()];
        for (i, &band) in self.bin_band.iter().enumerate() {
            bands[band] += buf[i].norm_sqr();
        }
        for (e, w) in bands.iter_mut().zip(&self.band_weight) {
            *e *= w;
        }
        bands
    }
}

/// One-shot critical-band spectrum of a windowed frame.
///
/// Builds a throwaway [`PlpAnalyzer`]; batch callers should construct the
/// analyzer once and reuse it.
pub fn plp_spectrum(frame: &[f64], sample_rate_hz: u32) -> Vec<f64> {
    PlpAnalyzer::new(frame.len(), sample_rate_hz).bark_energies(frame)
}

/// RASTA bandpass filter along a log-energy trajectory.
///
/// Transfer function `H(z) = 0.1 (2 + z^-1 - z^-3 - 2 z^-4) / (1 - 0.98 z^-1)`,
/// applied causally with zero initial state. The numerator sums to zero, so
/// constant trajectories are suppressed in steady state.
pub fn rasta_filter(trajectory: &[f64]) -> Vec<f64> {
    const B: [f64; 5] = [0.2, 0.1, 0.0, -0.1, -0.2];
    const POLE: f64 = 0.98;

    let mut out = Vec::with_capacity(trajectory.len());
    let mut prev_y = 0.0;
    for t in 0..trajectory.len() {
        let mut y = POLE * prev_y;
        for (k, b) in B.iter().enumerate() {
            if t >= k {
                y += b * trajectory[t - k];
            }
        }
        out.push(y);
        prev_y = y;
    }
    out
}

/// Order-`p` linear predictor fitted by the Levinson-Durbin recursion.
#[derive(Debug, Clone)]
pub struct LpcModel {
    /// Predictor coefficients: `x_t ≈ sum_i coeffs[i-1] * x_{t-i}`.
    pub coeffs: Vec<f64>,
    /// Reflection coefficients, one per recursion step.
    pub reflection: Vec<f64>,
    /// Final prediction-error variance (model gain).
    pub error: f64,
}

/// Solve the Toeplitz normal equations for `r[0..=order]`.
///
/// Returns `SingularToeplitz` when the prediction-error variance hits zero
/// (or `r[0] <= 0`), which happens for degenerate spectra such as all-zero
/// band energies.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcModel, FrontendError> {
    assert!(r.len() > order, "need order + 1 autocorrelation lags");

    let mut err = r[0];
    if err <= 0.0 || !err.is_finite() {
        return Err(FrontendError::SingularToeplitz);
    }

    let mut coeffs = vec![0.0; order];
    let mut reflection = Vec::with_capacity(order);

    for i in 1..=order {
        let mut acc = r[i];
        for j in 1..i {
            acc -= coeffs[j - 1] * r[i - j];
        }
        let k = acc / err;
        reflection.push(k);

        // In-place order update: a'_j = a_j - k a_{i-j}.
        let prev = coeffs.clone();
        coeffs[i - 1] = k;
        for j in 1..i {
            coeffs[j - 1] = prev[j - 1] - k * prev[i - j - 1];
        }

        err *= 1.0 - k * k;
        if err <= 0.0 || !err.is_finite() {
            return Err(FrontendError::SingularToeplitz);
        }
    }

    Ok(LpcModel {
        coeffs,
        reflection,
        error: err,
    })
}

/// Cepstrum of the all-pole model spectrum `error / |A(z)|^2`.
///
/// `out[0] = ln(error)`; higher coefficients follow the standard recursion
/// `c_n = a_n + sum_{k<n} (k/n) c_k a_{n-k}`.
pub fn lpc_to_cepstra(lpc: &LpcModel, n_cepstra: usize) -> Vec<f64> {
    let a = |i: usize| -> f64 {
        if i >= 1 && i <= lpc.coeffs.len() {
            lpc.coeffs[i - 1]
        } else {
            0.0
        }
    };

    let mut c = Vec::with_capacity(n_cepstra);
    if n_cepstra == 0 {
        return c;
    }
    c.push(lpc.error.ln());
    for n in 1..n_cepstra {
        let mut v = a(n);
        // `c` holds exactly the coefficients 0..n at this point.
        for (k, &ck) in c.iter().enumerate().skip(1) {
            v += (k as f64 / n as f64) * ck * a(n - k);
        }
        c.push(v);
    }
    c
}

/// Autocorrelation lags `0..=order` of the symmetric band spectrum.
///
/// The band values are treated as samples of an even spectrum of length
/// `2 (K - 1)` and inverse-transformed with a cosine sum.
fn bands_to_autocorr(bands: &[f64], order: usize) -> Vec<f64> {
    let k = bands.len();
    let m = (k - 1) as f64;
    let norm = 1.0 / (2.0 * m);

    (0..=order)
        .map(|lag| {
            let mut acc = bands[0];
            acc += if lag % 2 == 0 {
                bands[k - 1]
            } else {
                -bands[k - 1]
            };
            for (j, &b) in bands.iter().enumerate().take(k - 1).skip(1) {
                acc += 2.0 * b * (std::f64::consts::PI * j as f64 * lag as f64 / m).cos();
            }
            acc * norm
        })
        .collect()
}

/// Cepstral vector `c_0..c_order` from critical-band energies.
///
/// Applies the intensity-loudness power law (cube root), converts the
/// compressed spectrum to autocorrelation, fits the all-pole model, and
/// expands it to cepstra.
pub fn plp_cepstra(bark_energies: &[f64], cfg: &FrontendConfig) -> Result<Vec<f64>, FrontendError> {
    let order = cfg.model_order;
    if bark_energies.len() < order + 1 {
        return Err(FrontendError::TooFewBands {
            bands: bark_energies.len(),
            needed: order + 1,
        });
    }

    let compressed: Vec<f64> = bark_energies.iter().map(|&e| e.max(0.0).cbrt()).collect();
    let r = bands_to_autocorr(&compressed, order);
    let lpc = levinson_durbin(&r, order)?;
    Ok(lpc_to_cepstra(&lpc, cfg.n_cepstra()))
}
