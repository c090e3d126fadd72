//! Quick invariant suite behind the `selftest` subcommand.

use crate::channel::{complex_normal, generate_placement, receive_signal, ChannelModel};
use crate::config::{NetworkConfig, ProcessingOption};
use crate::error::Result;
use crate::harness::{run_experiment, seed_stream, ExperimentKind, ExperimentPlan, StreamRole};
use crate::linalg::{is_psd, CVector};
use crate::pipeline::{centralized_mmse_oracle, ChainParams, ChainPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Channel and one received sample of instance `i`, all in the default
/// geometry.
fn instance(cfg: &NetworkConfig, seed: u64, i: u64) -> Result<(Vec<crate::linalg::CMatrix>, Vec<CVector>, CVector)> {
    let placement = generate_placement(cfg, &mut seed_stream(seed, i, 0, 0, StreamRole::Placement));
    let channel = ChannelModel::new(cfg, &placement)?.draw(&mut seed_stream(seed, i, 0, 0, StreamRole::Channel));
    let mut sig = seed_stream(seed, i, 0, 0, StreamRole::Signal);
    let s = CVector::from_fn(cfg.users, |_, _| complex_normal(&mut sig) * cfg.p().sqrt());
    let mut noise = seed_stream(seed, i, 0, 0, StreamRole::Noise);
    let y = channel
        .h
        .iter()
        .map(|h| receive_signal(h, &s, cfg.sigma2(), &mut noise))
        .collect::<Result<Vec<_>>>()?;
    Ok((channel.h, y, s))
}

/// Largest elementwise gap between the lossless chain and the centralized
/// estimator over `instances` random channels.
pub fn oracle_gap(cfg: &NetworkConfig, instances: u64, seed: u64) -> Result<f64> {
    let params = ChainParams::from_config(cfg);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let (h, y, _) = instance(cfg, seed, i)?;
        let plan = ChainPlan::build(ProcessingOption::NoQuant, &h, &cfg.bits, &params)?;
        let chain = plan.estimate(
            &y,
            &mut seed_stream(seed, i, 0, 0, StreamRole::Dither(ProcessingOption::NoQuant)),
        )?;
        let central = centralized_mmse_oracle(&h, &y, cfg.p(), cfg.sigma2())?;
        worst = worst.max((chain.s_hat - central).camax());
    }
    Ok(worst)
}

/// Checks that `trace(C_l)` never grows along the chain and every `C_l` is
/// PSD, for every option over `instances` channels. Returns the number of
/// violating chains.
pub fn covariance_violations(cfg: &NetworkConfig, instances: u64, seed: u64) -> Result<usize> {
    let params = ChainParams::from_config(cfg);
    let mut bad = 0;
    for i in 0..instances {
        let (h, _, _) = instance(cfg, seed, i)?;
        for option in ProcessingOption::ALL {
            let plan = ChainPlan::build(option, &h, &cfg.bits, &params)?;
            let traces = plan.covariance_traces();
            let tol = 1e-8 * traces[0];
            let monotone = traces.windows(2).all(|w| w[1] <= w[0] + tol);
            let psd = plan.covariances.iter().all(|c| is_psd(c, 1e-10));
            if !(monotone && psd) {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

pub fn run_selftest(seed: u64) -> Result<Vec<Check>> {
    let cfg = NetworkConfig::default();
    let mut checks = Vec::new();

    let gap = oracle_gap(&cfg, 50, seed)?;
    checks.push(Check {
        name: "oracle equivalence",
        passed: gap < 1e-9,
        detail: format!("max |ŝ_chain - ŝ_central| = {gap:.3e} over 50 channels"),
    });

    let plan = ExperimentPlan {
        kind: ExperimentKind::NoiseCov,
        n_placements: 1,
        n_blocks_per_placement: 1,
        n_samples_per_block: 30_000,
        options: vec![ProcessingOption::Option1],
        master_seed: seed,
        ..ExperimentPlan::default()
    };
    let study = run_experiment(&plan, &cfg)?
        .noise
        .expect("noise studies report statistics");
    let r = &study.report;
    checks.push(Check {
        name: "quantization noise statistics",
        passed: r.max_ks < 0.02 && r.off_diagonal_ratio < 0.05 && r.eigen_diagonal_gap < 0.05,
        detail: format!(
            "AP {}: KS {:.4}, off-diagonal {:.3}, eigen/diagonal gap {:.3} over {} samples",
            study.ap + 1,
            r.max_ks,
            r.off_diagonal_ratio,
            r.eigen_diagonal_gap,
            r.samples
        ),
    });

    let bad = covariance_violations(&cfg, 100, seed)?;
    checks.push(Check {
        name: "covariance recursion",
        passed: bad == 0,
        detail: format!(
            "{bad} of {} chains violate monotone trace or PSD",
            100 * ProcessingOption::ALL.len()
        ),
    });
    Ok(checks)
}
