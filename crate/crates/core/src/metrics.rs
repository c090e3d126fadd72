//! NMSE / BER accumulation and fronthaul cost accounting.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Per-user sums over samples. Merging is plain addition, so partial
/// accumulators from different workers combine in any grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAccumulator {
    pub sum_sq_err: Vec<f64>,
    pub sum_sq_sig: Vec<f64>,
    pub bit_errors: Vec<u64>,
    pub bits_sent: Vec<u64>,
    pub n_samples: u64,
}

impl MetricAccumulator {
    pub fn new(users: usize) -> Self {
        Self {
            sum_sq_err: vec![0.0; users],
            sum_sq_sig: vec![0.0; users],
            bit_errors: vec![0; users],
            bits_sent: vec![0; users],
            n_samples: 0,
        }
    }

    pub fn users(&self) -> usize {
        self.sum_sq_err.len()
    }

    pub fn accumulate_nmse(&mut self, s_true: &[Complex64], s_hat: &[Complex64]) {
        for (k, (s, e)) in s_true.iter().zip(s_hat).enumerate() {
            self.sum_sq_err[k] += (s - e).norm_sqr();
            self.sum_sq_sig[k] += s.norm_sqr();
        }
        self.n_samples += 1;
    }

    /// BPSK decisions by the sign of `Re(ŝ_k)`; bit `1` maps to `+sqrt(p)`.
    pub fn accumulate_ber(&mut self, bits: &[bool], s_hat: &[Complex64]) {
        for (k, (&b, e)) in bits.iter().zip(s_hat).enumerate() {
            let decided = e.re >= 0.0;
            self.bit_errors[k] += (decided != b) as u64;
            self.bits_sent[k] += 1;
        }
        self.n_samples += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.sum_sq_err.iter_mut().zip(&other.sum_sq_err) {
            *a += b;
        }
        for (a, b) in self.sum_sq_sig.iter_mut().zip(&other.sum_sq_sig) {
            *a += b;
        }
        for (a, b) in self.bit_errors.iter_mut().zip(&other.bit_errors) {
            *a += b;
        }
        for (a, b) in self.bits_sent.iter_mut().zip(&other.bits_sent) {
            *a += b;
        }
        self.n_samples += other.n_samples;
    }

    pub fn nmse_per_user(&self) -> Vec<f64> {
        self.sum_sq_err
            .iter()
            .zip(&self.sum_sq_sig)
            .map(|(e, s)| e / s)
            .collect()
    }

    /// Average over users of the per-user NMSE.
    pub fn nmse(&self) -> f64 {
        mean(&self.nmse_per_user())
    }

    pub fn ber_per_user(&self) -> Vec<f64> {
        self.bit_errors
            .iter()
            .zip(&self.bits_sent)
            .map(|(&e, &n)| e as f64 / n as f64)
            .collect()
    }

    pub fn ber(&self) -> f64 {
        mean(&self.ber_per_user())
    }

    /// `[numerators.., denominators..]` of the chosen metric, used as one
    /// observation by [`RatioMoments`].
    pub fn ratio_terms(&self, metric: Metric) -> Vec<f64> {
        match metric {
            Metric::Nmse => self.sum_sq_err.iter().chain(&self.sum_sq_sig).copied().collect(),
            Metric::Ber => self
                .bit_errors
                .iter()
                .chain(&self.bits_sent)
                .map(|&v| v as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Nmse,
    Ber,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// First and second moments of per-unit `(numerator_k, denominator_k)`
/// vectors. Gives the user-averaged pooled ratio and its delta-method 95%
/// half-width, treating independent simulation units as the i.i.d. draws.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioMoments {
    n_units: u64,
    sum: DVector<f64>,
    cross: DMatrix<f64>,
}

impl RatioMoments {
    pub fn new(users: usize) -> Self {
        Self {
            n_units: 0,
            sum: DVector::zeros(2 * users),
            cross: DMatrix::zeros(2 * users, 2 * users),
        }
    }

    pub fn add_unit(&mut self, terms: &[f64]) {
        let u = DVector::from_column_slice(terms);
        self.sum += &u;
        self.cross.ger(1.0, &u, &u, 1.0);
        self.n_units += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.n_units += other.n_units;
        self.sum += &other.sum;
        self.cross += &other.cross;
    }

    pub fn n_units(&self) -> u64 {
        self.n_units
    }

    /// `(estimate, half_width)`; the half-width is NaN with fewer than two units.
    pub fn estimate(&self) -> (f64, f64) {
        let k = self.sum.len() / 2;
        let n = self.n_units as f64;
        let m = &self.sum / n;
        let mut g = DVector::zeros(2 * k);
        let mut est = 0.0;
        for i in 0..k {
            let (num, den) = (m[i], m[k + i]);
            est += num / den;
            g[i] = 1.0 / (k as f64 * den);
            g[k + i] = -num / (k as f64 * den * den);
        }
        est /= k as f64;
        if self.n_units < 2 {
            return (est, f64::NAN);
        }
        let cov = (&self.cross - &m * m.transpose() * n) / (n - 1.0);
        let var = (g.transpose() * cov * &g)[(0, 0)].max(0.0) / n;
        (est, Z_95 * var.sqrt())
    }
}

/// Inputs of the per-link fronthaul rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FronthaulParams {
    pub bandwidth: f64,
    pub coherence_bandwidth: f64,
    pub coherence_time: f64,
    pub tau_d: u64,
    pub users: usize,
    pub combiner_bits: u32,
    pub quantizer_bits: u32,
    pub streams: usize,
    pub covariance_bits: u64,
}

impl FronthaulParams {
    /// Link leaving AP `ap`.
    pub fn for_ap(cfg: &NetworkConfig, ap: usize) -> Self {
        Self {
            bandwidth: cfg.bandwidth,
            coherence_bandwidth: cfg.coherence_bandwidth,
            coherence_time: cfg.coherence_time,
            tau_d: cfg.tau_d,
            users: cfg.users,
            combiner_bits: cfg.combiner_bits,
            quantizer_bits: cfg.bits[ap],
            streams: cfg.r(),
            covariance_bits: cfg.covariance_bits,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FronthaulRate {
    /// Bits per second on one link.
    pub bits_per_second: f64,
    /// Coherence blocks per coherence time, `B / B_c`.
    pub n_cb: f64,
    /// Bits per estimate entry, `2 (b_c + b_l + 2r - 1)`.
    pub b_s: u64,
}

/// `N_CB (b_e + 2 τ_d K (b_c + b_l + 2r - 1)) / T_c`.
pub fn fronthaul_bitrate(fp: &FronthaulParams) -> Result<FronthaulRate> {
    let tau_c = fp.coherence_time * fp.coherence_bandwidth;
    if fp.tau_d as f64 > tau_c {
        return Err(Error::Config(format!(
            "tau_d ≤ T_c·B_c violated ({} > {tau_c})",
            fp.tau_d
        )));
    }
    let width = multiplier_width(fp.combiner_bits, fp.quantizer_bits, fp.streams);
    let n_cb = fp.bandwidth / fp.coherence_bandwidth;
    let per_block = fp.covariance_bits as f64 + 2.0 * fp.tau_d as f64 * fp.users as f64 * width.accumulator as f64;
    Ok(FronthaulRate {
        bits_per_second: n_cb * per_block / fp.coherence_time,
        n_cb,
        b_s: width.estimate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplierWidth {
    /// Bits per real component of one estimate entry: `b_c + b_l + 2r - 1`.
    pub accumulator: u64,
    /// Bits per complex estimate entry, twice the above.
    pub estimate: u64,
}

/// Word growth of an `r`-term complex inner product of `b_c`-bit and
/// `b_l`-bit operands: products need `b_c + b_l` bits, each of the `2r - 1`
/// additions one more.
pub fn multiplier_width(combiner_bits: u32, quantizer_bits: u32, streams: usize) -> MultiplierWidth {
    let accumulator = combiner_bits as u64 + quantizer_bits as u64 + 2 * streams as u64 - 1;
    MultiplierWidth {
        accumulator,
        estimate: 2 * accumulator,
    }
}
