//! Non-subtractive dithered uniform quantization of complex vectors.
//!
//! Every complex entry is handled by a pair of identical real quantizers
//! (real and imaginary part). A pair is described by its dynamic range `γ`
//! and step `Δ = 2γ / 2^b`; the dither on each real component is uniform on
//! `[-Δ/2, Δ/2]`, and the resulting quantization noise is modelled as having
//! the same covariance as the dither.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::check_alpha_bits;
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, CMatrix};

/// Minimum unclipped rows needed by [`validate_noise_statistics`].
pub const MIN_NOISE_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerBank {
    bits: u32,
    gamma: Vec<f64>,
    delta: Vec<f64>,
}

impl QuantizerBank {
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Number of quantizer pairs.
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.bits
    }

    /// Diagonal of `R_d`: complex dither variance `Δ²/6` per pair.
    pub fn dither_variance(&self) -> Vec<f64> {
        self.delta.iter().map(|d| d * d / 6.0).collect()
    }

    /// Diagonal of `R_η`, equal to `R_d`.
    pub fn noise_variance(&self) -> Vec<f64> {
        self.dither_variance()
    }

    pub fn dither_covariance(&self) -> CMatrix {
        diag_matrix(&self.dither_variance())
    }

    pub fn noise_covariance(&self) -> CMatrix {
        diag_matrix(&self.noise_variance())
    }
}

fn diag_matrix(d: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(d.len(), d.len());
    for (i, &v) in d.iter().enumerate() {
        m[(i, i)] = c(v);
    }
    m
}

/// Dynamic range per pair from the complex input variances `E|x_i|²`:
/// `γ = sqrt(α² (1 - α²/(3·4^b))⁻¹ · var / 2)`, which makes `γ` equal `α`
/// standard deviations of the dithered real component.
pub fn calibrate_dynamic_range(input_var: &[f64], alpha: f64, bits: u32) -> Result<QuantizerBank> {
    if !(1..=crate::config::MAX_BITS).contains(&bits) {
        return Err(Error::Config(format!(
            "b_l must be in 1..={} (got {bits})",
            crate::config::MAX_BITS
        )));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::Config(format!("alpha > 0 violated (got {alpha})")));
    }
    check_alpha_bits(alpha, bits)?;
    let a2 = alpha * alpha;
    let gain = a2 / (1.0 - a2 / (3.0 * 4f64.powi(bits as i32)));
    let levels = 2f64.powi(bits as i32);
    let mut gamma = Vec::with_capacity(input_var.len());
    let mut delta = Vec::with_capacity(input_var.len());
    for &v in input_var {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Domain(format!(
                "quantizer input variance must be finite and ≥ 0, got {v}"
            )));
        }
        let g = (gain * v / 2.0).sqrt();
        gamma.push(g);
        delta.push(2.0 * g / levels);
    }
    Ok(QuantizerBank { bits, gamma, delta })
}

/// Fresh dither vector: real and imaginary parts i.i.d. uniform on `[-Δ_i/2, Δ_i/2]`.
pub fn draw_dither<R: Rng + ?Sized>(bank: &QuantizerBank, rng: &mut R) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); bank.len()];
    draw_dither_into(bank, rng, &mut out);
    out
}

pub fn draw_dither_into<R: Rng + ?Sized>(bank: &QuantizerBank, rng: &mut R, out: &mut [Complex64]) {
    for (d, &step) in out.iter_mut().zip(&bank.delta) {
        let re = (rng.random::<f64>() - 0.5) * step;
        let im = (rng.random::<f64>() - 0.5) * step;
        *d = Complex64::new(re, im);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFrame {
    /// Quantizer output.
    pub output: Vec<Complex64>,
    /// `output - input`.
    pub eta: Vec<Complex64>,
    /// Real components that fell outside `[-γ, γ]`.
    pub clipped_count: usize,
}

/// Mid-rise reconstruction of one real component. Returns the output and
/// whether the input was clipped.
#[inline]
pub fn quantize_real(x: f64, gamma: f64, delta: f64, levels: u64) -> (f64, bool) {
    if gamma == 0.0 {
        return (0.0, false);
    }
    let clipped = x > gamma || x < -gamma;
    let top = gamma - gamma * f64::EPSILON;
    let xc = x.clamp(-gamma, top);
    let idx = (((xc + gamma) / delta).floor() as u64).min(levels - 1);
    (-gamma + (idx as f64 + 0.5) * delta, clipped)
}

/// Element-wise quantization of the dithered vector `z`.
pub fn quantize(bank: &QuantizerBank, z: &[Complex64]) -> Result<QuantizedFrame> {
    if z.len() != bank.len() {
        return Err(Error::Dimension(format!(
            "quantizer bank has {} pairs, input has {} entries",
            bank.len(),
            z.len()
        )));
    }
    let mut output = vec![Complex64::new(0.0, 0.0); z.len()];
    let clipped_count = quantize_into(bank, z, &mut output);
    let eta = output.iter().zip(z).map(|(o, zi)| o - zi).collect();
    Ok(QuantizedFrame {
        output,
        eta,
        clipped_count,
    })
}

/// Allocation-free quantization; returns the clipped component count.
pub fn quantize_into(bank: &QuantizerBank, z: &[Complex64], out: &mut [Complex64]) -> usize {
    let levels = bank.levels();
    let mut clipped = 0;
    for i in 0..z.len() {
        let (re, cr) = quantize_real(z[i].re, bank.gamma[i], bank.delta[i], levels);
        let (im, ci) = quantize_real(z[i].im, bank.gamma[i], bank.delta[i], levels);
        clipped += cr as usize + ci as usize;
        out[i] = Complex64::new(re, im);
    }
    clipped
}

/// Realizations of quantization noise together with the pre-dither
/// quantizer inputs they were produced from.
#[derive(Debug, Clone, Default)]
pub struct NoiseSamples {
    pub eta: Vec<Vec<Complex64>>,
    pub input: Vec<Vec<Complex64>>,
    /// Rows dropped because at least one component was clipped.
    pub clipped_rows: usize,
}

impl NoiseSamples {
    /// Records a row; clipped rows are counted but not kept.
    pub fn push(&mut self, input: &[Complex64], frame: &QuantizedFrame) {
        if frame.clipped_count > 0 {
            self.clipped_rows += 1;
            return;
        }
        self.eta.push(frame.eta.clone());
        self.input.push(input.to_vec());
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub delta: f64,
    /// KS distance of `Re(η_i)` to `U[-Δ/2, Δ/2]`.
    pub ks_re: f64,
    pub ks_im: f64,
    pub variance_re: f64,
    pub variance_im: f64,
    /// `Δ²/12`.
    pub expected_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub samples: usize,
    pub clipped_rows: usize,
    pub pairs: Vec<PairStats>,
    /// Largest KS distance over all pairs and both parts.
    pub max_ks: f64,
    /// Diagonal of the sample covariance of η, descending.
    pub diagonal_sorted: Vec<f64>,
    /// Eigenvalues of the sample covariance of η, descending.
    pub eigenvalues_sorted: Vec<f64>,
    /// `max |offdiag| / mean(diag)`.
    pub off_diagonal_ratio: f64,
    /// Largest relative gap between sorted eigenvalues and sorted diagonal.
    pub eigen_diagonal_gap: f64,
    /// Largest |Pearson correlation| between any real component of η and any
    /// real component of the quantizer input.
    pub max_input_correlation: f64,
}

/// Checks the dithered-quantization noise model on recorded samples:
/// uniformity (KS), diagonality of the covariance, and decorrelation from the
/// quantizer input.
pub fn validate_noise_statistics(samples: &NoiseSamples, bank: &QuantizerBank) -> Result<StatReport> {
    let n = samples.len();
    if n < MIN_NOISE_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_NOISE_SAMPLES,
            got: n,
        });
    }
    let r = bank.len();
    if samples.eta.iter().chain(&samples.input).any(|row| row.len() != r) {
        return Err(Error::Dimension(format!("noise samples must have {r} entries per row")));
    }

    let mut pairs = Vec::with_capacity(r);
    for i in 0..r {
        let delta = bank.delta[i];
        let re: Vec<f64> = samples.eta.iter().map(|row| row[i].re).collect();
        let im: Vec<f64> = samples.eta.iter().map(|row| row[i].im).collect();
        pairs.push(PairStats {
            delta,
            ks_re: ks_uniform(&re, delta),
            ks_im: ks_uniform(&im, delta),
            variance_re: variance(&re),
            variance_im: variance(&im),
            expected_variance: delta * delta / 12.0,
        });
    }
    let max_ks = pairs.iter().fold(0.0f64, |m, p| m.max(p.ks_re).max(p.ks_im));

    let cov = sample_covariance(&samples.eta);
    let mut diagonal_sorted: Vec<f64> = (0..r).map(|i| cov[(i, i)].re).collect();
    diagonal_sorted.sort_by(|a, b| b.total_cmp(a));
    let eigenvalues_sorted = hermitian_eigen(&cov)?.values;
    let mean_diag = diagonal_sorted.iter().sum::<f64>() / r.max(1) as f64;
    let mut max_off = 0.0f64;
    for i in 0..r {
        for j in 0..r {
            if i != j {
                max_off = max_off.max(cov[(i, j)].norm());
            }
        }
    }
    let eigen_diagonal_gap = diagonal_sorted
        .iter()
        .zip(&eigenvalues_sorted)
        .map(|(d, e)| ((e - d) / d).abs())
        .fold(0.0, f64::max);

    let mut max_input_correlation = 0.0f64;
    let eta_parts = real_parts(&samples.eta, r);
    let input_parts = real_parts(&samples.input, r);
    for a in &eta_parts {
        for b in &input_parts {
            max_input_correlation = max_input_correlation.max(pearson(a, b).abs());
        }
    }

    Ok(StatReport {
        samples: n,
        clipped_rows: samples.clipped_rows,
        pairs,
        max_ks,
        diagonal_sorted,
        eigenvalues_sorted,
        off_diagonal_ratio: max_off / mean_diag,
        eigen_diagonal_gap,
        max_input_correlation,
    })
}

/// Kolmogorov-Smirnov sup distance between the empirical CDF of `x` and
/// `U[-Δ/2, Δ/2]`.
pub fn ks_uniform(x: &[f64], delta: f64) -> f64 {
    let mut u: Vec<f64> = x.iter().map(|v| (v / delta + 0.5).clamp(0.0, 1.0)).collect();
    u.sort_by(|a, b| a.total_cmp(b));
    let n = u.len() as f64;
    u.iter().enumerate().fold(0.0f64, |d, (i, &ui)| {
        d.max((i as f64 + 1.0) / n - ui).max(ui - i as f64 / n)
    })
}

/// Empirical CDF of `x` evaluated on `grid`.
pub fn empirical_cdf(x: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len().max(1) as f64;
    grid.iter()
        .map(|&g| sorted.partition_point(|&v| v <= g) as f64 / n)
        .collect()
}

fn real_parts(rows: &[Vec<Complex64>], r: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * r);
    for i in 0..r {
        out.push(rows.iter().map(|row| row[i].re).collect());
        out.push(rows.iter().map(|row| row[i].im).collect());
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Unbiased sample covariance `E{(x - m)(x - m)ᴴ}` of complex rows.
pub fn sample_covariance(rows: &[Vec<Complex64>]) -> CMatrix {
    let r = rows.first().map_or(0, |row| row.len());
    let n = rows.len() as f64;
    let mut m = vec![Complex64::new(0.0, 0.0); r];
    for row in rows {
        for (acc, v) in m.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in m.iter_mut() {
        *v /= n;
    }
    let mut cov = CMatrix::zeros(r, r);
    for row in rows {
        for i in 0..r {
            let di = row[i] - m[i];
            for j in 0..r {
                cov[(i, j)] += di * (row[j] - m[j]).conj();
            }
        }
    }
    cov / c(n - 1.0)
}
