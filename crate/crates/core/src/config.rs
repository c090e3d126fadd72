//! Scenario parameters shared by every stage of the simulator.
//!
//! Powers are carried in the units they are configured in (dBW for the user
//! transmit power, dBm for the receiver noise) and converted to watts on
//! demand, so a resolved configuration serializes back to exactly the values
//! that were read.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest per-quantizer bit width accepted. Keeps `2^b` exact in `f64`.
pub const MAX_BITS: u32 = 32;

/// Spatial correlation law of each AP-user channel vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CorrelationModel {
    Uncorrelated,
    /// `T[i][j] = rho^|i-j|`, scaled by the large-scale gain.
    Exponential {
        rho: f64,
    },
}

/// Which processing sequence each AP applies before quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProcessingOption {
    /// Inter-AP de-correlation, then PCA, then quantization.
    Option1,
    /// PCA of the raw received vector, then quantization.
    Option2,
    /// Element-wise quantization of the raw received vector.
    Option3,
    /// Option 1 with lossless fronthaul.
    NoQuant,
}

impl ProcessingOption {
    pub const ALL: [ProcessingOption; 4] = [
        ProcessingOption::NoQuant,
        ProcessingOption::Option1,
        ProcessingOption::Option2,
        ProcessingOption::Option3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProcessingOption::Option1 => "Option1",
            ProcessingOption::Option2 => "Option2",
            ProcessingOption::Option3 => "Option3",
            ProcessingOption::NoQuant => "NoQuant",
        }
    }

    /// Stable tag mixed into per-option random streams.
    pub(crate) fn tag(self) -> u64 {
        match self {
            ProcessingOption::Option1 => 1,
            ProcessingOption::Option2 => 2,
            ProcessingOption::Option3 => 3,
            ProcessingOption::NoQuant => 4,
        }
    }

    pub fn is_quantized(self) -> bool {
        self != ProcessingOption::NoQuant
    }
}

impl fmt::Display for ProcessingOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProcessingOption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "option1" | "1" => Ok(ProcessingOption::Option1),
            "option2" | "2" => Ok(ProcessingOption::Option2),
            "option3" | "3" => Ok(ProcessingOption::Option3),
            "noquant" | "none" => Ok(ProcessingOption::NoQuant),
            _ => Err(Error::Config(format!(
                "unknown processing option {s:?} (expected Option1, Option2, Option3 or NoQuant)"
            ))),
        }
    }
}

/// Full scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// L
    pub num_aps: usize,
    /// N
    pub antennas: usize,
    /// K
    pub users: usize,
    /// Per-user transmit power in dB relative to 1 W.
    pub power_db: f64,
    /// Receiver noise power in dBm.
    pub noise_dbm: f64,
    /// Informational; the noise power above already includes it.
    pub noise_figure_db: f64,
    /// Bits per quantizer at each AP.
    pub bits: Vec<u32>,
    /// Dynamic range as a multiple of the quantizer input standard deviation.
    pub alpha: f64,
    /// Side of the square simulation area, meters.
    pub area_side: f64,
    /// Floor on every AP-user distance, meters.
    pub min_distance: f64,
    /// Signal bandwidth, Hz.
    pub bandwidth: f64,
    /// Coherence bandwidth, Hz.
    pub coherence_bandwidth: f64,
    /// Coherence time, seconds.
    pub coherence_time: f64,
    /// Informational carrier frequency, Hz.
    pub carrier_hz: f64,
    /// Uplink data samples per coherence block.
    pub tau_d: u64,
    /// Combining-vector bits per real component.
    pub combiner_bits: u32,
    /// Bits spent reporting the error covariance once per coherence block.
    pub covariance_bits: u64,
    pub correlation: CorrelationModel,
    pub option: ProcessingOption,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let users = 10;
        let combiner_bits = 8;
        Self {
            num_aps: 5,
            antennas: 4,
            users,
            power_db: -10.0,
            noise_dbm: -85.0,
            noise_figure_db: 9.0,
            bits: vec![3; 5],
            alpha: 3.0,
            area_side: 500.0,
            min_distance: 1.0,
            bandwidth: 100e6,
            coherence_bandwidth: 200e3,
            coherence_time: 1e-3,
            carrier_hz: 2e9,
            tau_d: 190,
            combiner_bits,
            covariance_bits: default_covariance_bits(users, combiner_bits),
            correlation: CorrelationModel::Uncorrelated,
            option: ProcessingOption::Option1,
            seed: 1,
        }
    }
}

/// Full complex K x K covariance at combiner precision.
pub fn default_covariance_bits(users: usize, combiner_bits: u32) -> u64 {
    2 * (users as u64) * (users as u64) * combiner_bits as u64
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

impl NetworkConfig {
    /// Per-user transmit power in watts.
    pub fn p(&self) -> f64 {
        db_to_linear(self.power_db)
    }

    /// Receiver noise power in watts.
    pub fn sigma2(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    /// Number of retained PCA streams, `min(N, K)`.
    pub fn r(&self) -> usize {
        self.antennas.min(self.users)
    }

    /// Samples per coherence block, `T_c * B_c`.
    pub fn tau_c(&self) -> f64 {
        self.coherence_time * self.coherence_bandwidth
    }

    pub fn with_uniform_bits(&self, b: u32) -> Self {
        Self {
            bits: vec![b; self.num_aps],
            ..self.clone()
        }
    }

    pub fn with_power_db(&self, power_db: f64) -> Self {
        Self {
            power_db,
            ..self.clone()
        }
    }

    pub fn with_option(&self, option: ProcessingOption) -> Self {
        Self { option, ..self.clone() }
    }

    /// Checks every hard constraint. `K > N` is only warned about.
    pub fn validate(&self) -> Result<()> {
        if self.num_aps == 0 || self.antennas == 0 || self.users == 0 {
            return Err(Error::Config("L, N and K must all be at least 1".into()));
        }
        if self.users <= self.antennas {
            log::warn!(
                "K = {} <= N = {}: outside the K > N regime, running anyway",
                self.users,
                self.antennas
            );
        }
        if self.bits.len() != self.num_aps {
            return Err(Error::Config(format!(
                "b_l has {} entries but L = {}",
                self.bits.len(),
                self.num_aps
            )));
        }
        for &b in &self.bits {
            if b < 1 {
                return Err(Error::Config(
                    "b_l ≥ 1 violated: every AP needs at least one bit".into(),
                ));
            }
            if b > MAX_BITS {
                return Err(Error::Config(format!("b_l ≤ {MAX_BITS} violated (got {b})")));
            }
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(Error::Config(format!("alpha > 0 violated (got {})", self.alpha)));
        }
        for &b in &self.bits {
            check_alpha_bits(self.alpha, b)?;
        }
        for (name, v) in [
            ("p", self.p()),
            ("sigma2", self.sigma2()),
            ("area_side", self.area_side),
            ("d_min", self.min_distance),
            ("B", self.bandwidth),
            ("B_c", self.coherence_bandwidth),
            ("T_c", self.coherence_time),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("{name} > 0 violated (got {v})")));
            }
        }
        if self.tau_d as f64 > self.tau_c() {
            return Err(Error::Config(format!(
                "tau_d ≤ T_c·B_c violated ({} > {})",
                self.tau_d,
                self.tau_c()
            )));
        }
        if let CorrelationModel::Exponential { rho } = self.correlation {
            check_rho(rho)?;
        }
        // Config files store integers as signed 64-bit.
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed ≤ 2^63 - 1 violated (got {})", self.seed)));
        }
        Ok(())
    }
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!(
            "exponential correlation needs 0 ≤ rho < 1 (got {rho})"
        )));
    }
    Ok(())
}

/// The dynamic-range formula is only defined for `α² < 3·4^b`.
pub fn check_alpha_bits(alpha: f64, bits: u32) -> Result<()> {
    let limit = 3.0 * 4f64.powi(bits as i32);
    if alpha * alpha >= limit {
        return Err(Error::Config(format!(
            "α² < 3·4^b violated: alpha = {alpha}, b = {bits} gives α² = {} ≥ {limit}",
            alpha * alpha
        )));
    }
    Ok(())
}
