//! Experiment orchestration: placements → coherence blocks → samples.
//!
//! Every random quantity is drawn from a stream derived from its position in
//! that loop nest (see [`seed_stream`]), so results do not depend on how the
//! work is scheduled. Within one sample, all processing options and all
//! sweep points see the same channel, signal and noise; only the dither
//! stream differs between options.

mod seeding;

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal, generate_placement, receive_signal_into, ChannelModel};
use crate::config::{NetworkConfig, ProcessingOption};
use crate::error::{Error, Result};
use crate::linalg::{CVector, ZERO};
use crate::metrics::{fronthaul_bitrate, FronthaulParams, Metric, MetricAccumulator, RatioMoments};
use crate::pipeline::{ChainParams, ChainPlan};
use crate::quantization::{empirical_cdf, validate_noise_statistics, NoiseSamples, QuantizedFrame, StatReport};

pub use seeding::{seed_stream, RandomStream, StreamRole};

/// Allowed fraction of aborted trials before a run fails.
pub const ABORT_BUDGET: f64 = 1e-3;

/// Placements evaluated per parallel batch before folding.
const BATCH: usize = 32;

/// Points on each CDF table written for the noise studies.
const CDF_POINTS: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Quantization-noise distribution at one AP.
    NoiseCdf,
    /// Quantization-noise covariance at one AP.
    NoiseCov,
    NmseVsBits,
    BerVsPower,
    BitrateTable,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::NoiseCdf => "noise_cdf",
            ExperimentKind::NoiseCov => "noise_cov",
            ExperimentKind::NmseVsBits => "nmse_vs_bits",
            ExperimentKind::BerVsPower => "ber_vs_power",
            ExperimentKind::BitrateTable => "bitrate_table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    /// Bit axis for `nmse_vs_bits` and `bitrate_table`.
    pub bits: Vec<u32>,
    /// Power axis (dBW) for `ber_vs_power`.
    pub powers_db: Vec<f64>,
    pub n_placements: usize,
    pub n_blocks_per_placement: usize,
    pub n_samples_per_block: usize,
    pub options: Vec<ProcessingOption>,
    pub master_seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::NmseVsBits,
            bits: (1..=8).collect(),
            powers_db: (0..=20).map(|i| -20.0 + i as f64).collect(),
            n_placements: 100,
            n_blocks_per_placement: 10,
            n_samples_per_block: 100,
            options: ProcessingOption::ALL.to_vec(),
            master_seed: 1,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_placements == 0 || self.n_blocks_per_placement == 0 || self.n_samples_per_block == 0 {
            return Err(Error::Config(
                "n_placements, n_blocks_per_placement and n_samples_per_block must be ≥ 1".into(),
            ));
        }
        if self.options.is_empty() {
            return Err(Error::Config("options must name at least one processing option".into()));
        }
        match self.kind {
            ExperimentKind::NmseVsBits | ExperimentKind::BitrateTable => {
                if self.bits.is_empty() || !self.bits.windows(2).all(|w| w[0] < w[1]) {
                    return Err(Error::Config("bits must be non-empty and strictly increasing".into()));
                }
            }
            ExperimentKind::BerVsPower => {
                if self.powers_db.is_empty() || !self.powers_db.windows(2).all(|w| w[0] < w[1]) {
                    return Err(Error::Config(
                        "powers_db must be non-empty and strictly increasing".into(),
                    ));
                }
            }
            ExperimentKind::NoiseCdf | ExperimentKind::NoiseCov => {
                if !self.options.iter().any(|o| o.is_quantized()) {
                    return Err(Error::Config("noise studies need a quantized processing option".into()));
                }
            }
        }
        Ok(())
    }
}

/// One curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
    /// 95% confidence half-widths, when the series is a Monte Carlo estimate.
    pub half_widths: Option<Vec<f64>>,
    /// Samples behind each value.
    pub counts: Vec<u64>,
}

/// ECDF tables of one quantizer pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCdf {
    pub pair: usize,
    pub grid: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub uniform: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudy {
    pub ap: usize,
    pub option: ProcessingOption,
    pub bits: u32,
    pub report: StatReport,
    pub cdfs: Vec<PairCdf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: NetworkConfig,
    pub plan: ExperimentPlan,
    pub master_seed: u64,
    pub build_id: String,
    pub wall_time_s: f64,
    pub attempted_trials: u64,
    pub aborted_trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: ExperimentKind,
    pub axis_name: String,
    pub axis: Vec<f64>,
    pub series: Vec<Series>,
    pub noise: Option<NoiseStudy>,
    pub metadata: RunMetadata,
}

impl SweepResult {
    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }
}

pub fn build_id() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Runs `plan` on a dedicated pool of `workers` threads.
pub fn run_experiment_with_workers(plan: &ExperimentPlan, cfg: &NetworkConfig, workers: usize) -> Result<SweepResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| run_experiment(plan, cfg))
}

/// Runs `plan` on the current rayon pool.
pub fn run_experiment(plan: &ExperimentPlan, cfg: &NetworkConfig) -> Result<SweepResult> {
    cfg.validate()?;
    plan.validate()?;
    let started = Instant::now();
    let mut result = match plan.kind {
        ExperimentKind::NmseVsBits => run_sweep(plan, cfg, Sweep::Bits)?,
        ExperimentKind::BerVsPower => run_sweep(plan, cfg, Sweep::Power)?,
        ExperimentKind::BitrateTable => bitrate_table(plan, cfg)?,
        ExperimentKind::NoiseCdf | ExperimentKind::NoiseCov => noise_study(plan, cfg)?,
    };
    result.metadata.wall_time_s = started.elapsed().as_secs_f64();
    Ok(result)
}

fn metadata(plan: &ExperimentPlan, cfg: &NetworkConfig, attempted: u64, aborted: u64) -> RunMetadata {
    RunMetadata {
        config: cfg.clone(),
        plan: plan.clone(),
        master_seed: plan.master_seed,
        build_id: build_id(),
        wall_time_s: 0.0,
        attempted_trials: attempted,
        aborted_trials: aborted,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sweep {
    Bits,
    Power,
}

/// Results of one coherence block for every (axis point, option) cell.
struct BlockOutcome {
    cells: Vec<Option<MetricAccumulator>>,
}

struct PlacementOutcome {
    blocks: Vec<BlockOutcome>,
    attempted: u64,
    aborted: u64,
}

struct SweepContext<'a> {
    plan: &'a ExperimentPlan,
    cfg: &'a NetworkConfig,
    sweep: Sweep,
    /// Scenario at each axis point.
    points: Vec<NetworkConfig>,
}

impl SweepContext<'_> {
    fn n_cells(&self) -> usize {
        self.points.len() * self.plan.options.len()
    }

    fn run_placement(&self, placement_idx: usize) -> Result<PlacementOutcome> {
        let cfg = self.cfg;
        let seed = self.plan.master_seed;
        let p_idx = placement_idx as u64;
        let placement = generate_placement(cfg, &mut seed_stream(seed, p_idx, 0, 0, StreamRole::Placement));
        let model = ChannelModel::new(cfg, &placement)?;
        let users = cfg.users;
        let n_ap = cfg.num_aps;
        let options = &self.plan.options;

        let mut blocks = Vec::with_capacity(self.plan.n_blocks_per_placement);
        let mut attempted = 0;
        let mut aborted = 0;
        for block_idx in 0..self.plan.n_blocks_per_placement {
            let b_idx = block_idx as u64;
            let channel = model.draw(&mut seed_stream(seed, p_idx, b_idx, 0, StreamRole::Channel));

            // One plan per cell; NoQuant ignores the bit width, so a bit
            // sweep shares a single NoQuant plan across the axis.
            let mut plans: Vec<Option<std::sync::Arc<ChainPlan>>> = Vec::with_capacity(self.n_cells());
            let mut shared_noquant: Option<Option<std::sync::Arc<ChainPlan>>> = None;
            for point in &self.points {
                let params = ChainParams::from_config(point);
                for &option in options {
                    if option == ProcessingOption::NoQuant && self.sweep == Sweep::Bits {
                        if let Some(shared) = &shared_noquant {
                            plans.push(shared.clone());
                            continue;
                        }
                    }
                    attempted += 1;
                    let built = match ChainPlan::build(option, &channel.h, &point.bits, &params) {
                        Ok(plan) => Some(std::sync::Arc::new(plan)),
                        Err(Error::Numerical(msg)) => {
                            log::debug!("placement {placement_idx} block {block_idx} {option}: {msg}");
                            aborted += 1;
                            None
                        }
                        Err(e) => return Err(e),
                    };
                    if option == ProcessingOption::NoQuant && self.sweep == Sweep::Bits {
                        shared_noquant = Some(built.clone());
                    }
                    plans.push(built);
                }
            }

            let mut cells: Vec<Option<MetricAccumulator>> = plans
                .iter()
                .map(|p| p.as_ref().map(|_| MetricAccumulator::new(users)))
                .collect();
            let mut base_signal = vec![ZERO; users];
            let mut bits = vec![false; users];
            let mut s = vec![ZERO; users];
            let mut y: Vec<CVector> = vec![CVector::zeros(cfg.antennas); n_ap];

            for sample_idx in 0..self.plan.n_samples_per_block {
                let s_idx = sample_idx as u64;
                let mut sig_rng = seed_stream(seed, p_idx, b_idx, s_idx, StreamRole::Signal);
                match self.sweep {
                    Sweep::Bits => {
                        for v in base_signal.iter_mut() {
                            *v = complex_normal(&mut sig_rng);
                        }
                    }
                    Sweep::Power => {
                        for b in bits.iter_mut() {
                            *b = sig_rng.random::<bool>();
                        }
                    }
                }
                let mut noquant_done: Option<crate::linalg::CVector> = None;
                for (a, point) in self.points.iter().enumerate() {
                    let amp = point.p().sqrt();
                    for k in 0..users {
                        s[k] = match self.sweep {
                            Sweep::Bits => base_signal[k] * amp,
                            Sweep::Power => {
                                let sign = if bits[k] { 1.0 } else { -1.0 };
                                crate::linalg::c(sign * amp)
                            }
                        };
                    }
                    let mut noise_rng = seed_stream(seed, p_idx, b_idx, s_idx, StreamRole::Noise);
                    let sigma2 = point.sigma2();
                    for (hl, yl) in channel.h.iter().zip(y.iter_mut()) {
                        receive_signal_into(hl, &s, sigma2, &mut noise_rng, yl.as_mut_slice())?;
                    }
                    for (o, &option) in options.iter().enumerate() {
                        let cell = a * options.len() + o;
                        let (Some(plan), Some(acc)) = (&plans[cell], &mut cells[cell]) else {
                            continue;
                        };
                        let share = option == ProcessingOption::NoQuant && self.sweep == Sweep::Bits;
                        let s_hat = match (&noquant_done, share) {
                            (Some(prev), true) => prev.clone(),
                            _ => {
                                let mut dither = seed_stream(seed, p_idx, b_idx, s_idx, StreamRole::Dither(option));
                                let out = plan.estimate(&y, &mut dither)?.s_hat;
                                if share {
                                    noquant_done = Some(out.clone());
                                }
                                out
                            }
                        };
                        match self.sweep {
                            Sweep::Bits => acc.accumulate_nmse(&s, s_hat.as_slice()),
                            Sweep::Power => acc.accumulate_ber(&bits, s_hat.as_slice()),
                        }
                    }
                }
            }
            blocks.push(BlockOutcome { cells });
        }
        Ok(PlacementOutcome {
            blocks,
            attempted,
            aborted,
        })
    }
}

fn run_sweep(plan: &ExperimentPlan, cfg: &NetworkConfig, sweep: Sweep) -> Result<SweepResult> {
    let (axis_name, axis, points): (&str, Vec<f64>, Vec<NetworkConfig>) = match sweep {
        Sweep::Bits => (
            "b_l",
            plan.bits.iter().map(|&b| b as f64).collect(),
            plan.bits.iter().map(|&b| cfg.with_uniform_bits(b)).collect(),
        ),
        Sweep::Power => (
            "p_db",
            plan.powers_db.clone(),
            plan.powers_db.iter().map(|&p| cfg.with_power_db(p)).collect(),
        ),
    };
    for point in &points {
        point.validate()?;
    }
    let metric = match sweep {
        Sweep::Bits => Metric::Nmse,
        Sweep::Power => Metric::Ber,
    };
    let ctx = SweepContext {
        plan,
        cfg,
        sweep,
        points,
    };
    let n_cells = ctx.n_cells();
    let mut totals: Vec<MetricAccumulator> = (0..n_cells).map(|_| MetricAccumulator::new(cfg.users)).collect();
    let mut moments: Vec<RatioMoments> = (0..n_cells).map(|_| RatioMoments::new(cfg.users)).collect();
    let mut attempted = 0u64;
    let mut aborted = 0u64;

    let indices: Vec<usize> = (0..plan.n_placements).collect();
    for batch in indices.chunks(BATCH) {
        let outcomes: Vec<Result<PlacementOutcome>> = batch.par_iter().map(|&p| ctx.run_placement(p)).collect();
        // Fold strictly in placement order so results are independent of
        // the worker count.
        for outcome in outcomes {
            let outcome = outcome?;
            attempted += outcome.attempted;
            aborted += outcome.aborted;
            for block in outcome.blocks {
                for (cell, acc) in block.cells.into_iter().enumerate() {
                    if let Some(acc) = acc {
                        moments[cell].add_unit(&acc.ratio_terms(metric));
                        totals[cell].merge(&acc);
                    }
                }
            }
        }
    }
    if aborted as f64 > ABORT_BUDGET * attempted as f64 {
        return Err(Error::TooManyAborted { aborted, attempted });
    }

    let n_opts = plan.options.len();
    let series = plan
        .options
        .iter()
        .enumerate()
        .map(|(o, option)| {
            let mut values = Vec::with_capacity(axis.len());
            let mut hws = Vec::with_capacity(axis.len());
            let mut counts = Vec::with_capacity(axis.len());
            for a in 0..axis.len() {
                let cell = a * n_opts + o;
                let (est, hw) = moments[cell].estimate();
                values.push(est);
                hws.push(hw);
                counts.push(totals[cell].n_samples);
            }
            Series {
                name: option.name().to_string(),
                values,
                half_widths: Some(hws),
                counts,
            }
        })
        .collect();

    Ok(SweepResult {
        kind: plan.kind,
        axis_name: axis_name.to_string(),
        axis,
        series,
        noise: None,
        metadata: metadata(plan, cfg, attempted, aborted),
    })
}

fn bitrate_table(plan: &ExperimentPlan, cfg: &NetworkConfig) -> Result<SweepResult> {
    let mut rate = Vec::with_capacity(plan.bits.len());
    let mut b_s = Vec::with_capacity(plan.bits.len());
    for &b in &plan.bits {
        let r = fronthaul_bitrate(&FronthaulParams::for_ap(&cfg.with_uniform_bits(b), 0))?;
        rate.push(r.bits_per_second);
        b_s.push(r.b_s as f64);
    }
    let counts = vec![1; plan.bits.len()];
    Ok(SweepResult {
        kind: plan.kind,
        axis_name: "b_l".into(),
        axis: plan.bits.iter().map(|&b| b as f64).collect(),
        series: vec![
            Series {
                name: "Br_f".into(),
                values: rate,
                half_widths: None,
                counts: counts.clone(),
            },
            Series {
                name: "b_s".into(),
                values: b_s,
                half_widths: None,
                counts,
            },
        ],
        noise: None,
        metadata: metadata(plan, cfg, 0, 0),
    })
}

/// Collects quantization noise at a randomly chosen AP of one channel
/// realization (placement 0, block 0) and checks it against the model.
fn noise_study(plan: &ExperimentPlan, cfg: &NetworkConfig) -> Result<SweepResult> {
    let seed = plan.master_seed;
    let option = *plan
        .options
        .iter()
        .find(|o| o.is_quantized())
        .expect("validated: a quantized option is present");
    let placement = generate_placement(cfg, &mut seed_stream(seed, 0, 0, 0, StreamRole::Placement));
    let channel = ChannelModel::new(cfg, &placement)?.draw(&mut seed_stream(seed, 0, 0, 0, StreamRole::Channel));
    let ap = seed_stream(seed, 0, 0, 0, StreamRole::Selection).random_range(0..cfg.num_aps);
    let chain = ChainPlan::build(option, &channel.h, &cfg.bits, &ChainParams::from_config(cfg))?;
    let bank = chain.stages[ap]
        .bank
        .clone()
        .expect("quantized option has a quantizer bank");

    let mut samples = NoiseSamples::default();
    let mut s = vec![ZERO; cfg.users];
    let mut y: Vec<CVector> = vec![CVector::zeros(cfg.antennas); cfg.num_aps];
    let amp = cfg.p().sqrt();
    for sample_idx in 0..plan.n_samples_per_block as u64 {
        let mut sig_rng = seed_stream(seed, 0, 0, sample_idx, StreamRole::Signal);
        for v in s.iter_mut() {
            *v = complex_normal(&mut sig_rng) * amp;
        }
        let mut noise_rng = seed_stream(seed, 0, 0, sample_idx, StreamRole::Noise);
        for (hl, yl) in channel.h.iter().zip(y.iter_mut()) {
            receive_signal_into(hl, &s, cfg.sigma2(), &mut noise_rng, yl.as_mut_slice())?;
        }
        let mut dither = seed_stream(seed, 0, 0, sample_idx, StreamRole::Dither(option));
        chain.estimate_observed(&y, &mut dither, |tap| {
            if tap.ap == ap {
                let frame = QuantizedFrame {
                    output: tap.output.to_vec(),
                    eta: tap.output.iter().zip(tap.dithered).map(|(o, z)| o - z).collect(),
                    clipped_count: tap.clipped,
                };
                samples.push(tap.input, &frame);
            }
        })?;
    }
    let report = validate_noise_statistics(&samples, &bank)?;

    let cdfs: Vec<PairCdf> = bank
        .delta()
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            let grid: Vec<f64> = (0..CDF_POINTS)
                .map(|j| delta * (j as f64 / (CDF_POINTS - 1) as f64 - 0.5))
                .collect();
            let re: Vec<f64> = samples.eta.iter().map(|row| row[i].re).collect();
            let im: Vec<f64> = samples.eta.iter().map(|row| row[i].im).collect();
            let uniform = grid.iter().map(|g| (g / delta + 0.5).clamp(0.0, 1.0)).collect();
            PairCdf {
                pair: i,
                re: empirical_cdf(&re, &grid),
                im: empirical_cdf(&im, &grid),
                uniform,
                grid,
            }
        })
        .collect();

    let r = bank.len();
    let n = report.samples as u64;
    let axis: Vec<f64> = (1..=r).map(|i| i as f64).collect();
    let series = match plan.kind {
        ExperimentKind::NoiseCdf => vec![
            Series {
                name: "ks_re".into(),
                values: report.pairs.iter().map(|p| p.ks_re).collect(),
                half_widths: None,
                counts: vec![n; r],
            },
            Series {
                name: "ks_im".into(),
                values: report.pairs.iter().map(|p| p.ks_im).collect(),
                half_widths: None,
                counts: vec![n; r],
            },
        ],
        _ => vec![
            Series {
                name: "diagonal".into(),
                values: report.diagonal_sorted.clone(),
                half_widths: None,
                counts: vec![n; r],
            },
            Series {
                name: "eigenvalue".into(),
                values: report.eigenvalues_sorted.clone(),
                half_widths: None,
                counts: vec![n; r],
            },
        ],
    };
    Ok(SweepResult {
        kind: plan.kind,
        axis_name: match plan.kind {
            ExperimentKind::NoiseCdf => "pair".into(),
            _ => "index".into(),
        },
        axis,
        series,
        noise: Some(NoiseStudy {
            ap,
            option,
            bits: cfg.bits[ap],
            report,
            cdfs,
        }),
        metadata: metadata(plan, cfg, 1, 0),
    })
}
