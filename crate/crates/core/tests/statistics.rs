//! Monte Carlo checks of second-order statistics against their closed forms.

use cellfree_chain::channel::{complex_normal, receive_signal, ChannelModel};
use cellfree_chain::config::{CorrelationModel, NetworkConfig, ProcessingOption};
use cellfree_chain::harness::{run_experiment, ExperimentKind, ExperimentPlan};
use cellfree_chain::linalg::{CMatrix, CVector};
use cellfree_chain::pipeline::{process_ap, received_covariance, ApState, ChainParams};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sample_outer(rows: &[CVector]) -> CMatrix {
    let n = rows[0].len();
    let mut acc = CMatrix::zeros(n, n);
    for r in rows {
        acc += r * r.adjoint();
    }
    acc / Complex64::new(rows.len() as f64, 0.0)
}

fn random_channel(n: usize, k: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(n, k, |_, _| complex_normal(rng))
}

#[test]
fn channel_covariance_matches_model() {
    let model = ChannelModel::from_gains(
        4,
        CorrelationModel::Exponential { rho: 0.6 },
        DMatrix::from_element(1, 1, 2.0),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws: Vec<CVector> = (0..40_000)
        .map(|_| model.draw(&mut rng).h[0].column(0).into_owned())
        .collect();
    let r = &model.draw(&mut rng).covariances[0][0];
    let err = (sample_outer(&draws) - r).camax();
    assert!(err < 0.05, "max deviation {err}");
}

#[test]
fn received_covariance_matches_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = random_channel(4, 6, &mut rng);
    let (p, sigma2): (f64, f64) = (0.5, 0.2);
    let ys: Vec<CVector> = (0..40_000)
        .map(|_| {
            let s = CVector::from_fn(6, |_, _| complex_normal(&mut rng) * p.sqrt());
            receive_signal(&h, &s, sigma2, &mut rng).unwrap()
        })
        .collect();
    let model = received_covariance(&h, p, sigma2);
    let scale = model.diagonal().iter().map(|d| d.re).fold(0.0, f64::max);
    let err = (sample_outer(&ys) - &model).camax();
    assert!(err < 0.03 * scale, "deviation {err} against scale {scale}");
}

/// Draws `n` first-AP refinements of one option on a fixed channel.
fn first_ap_runs(option: ProcessingOption, n: usize) -> (Vec<(CVector, CVector, CVector)>, CMatrix) {
    let cfg = NetworkConfig::default();
    let params = ChainParams {
        p: 1.0,
        sigma2: 0.1,
        alpha: cfg.alpha,
        rank: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = random_channel(4, 10, &mut rng);
    let prior = ApState::prior(10, params.p);
    let mut out = Vec::with_capacity(n);
    let mut r_f = CMatrix::zeros(0, 0);
    for _ in 0..n {
        let s = CVector::from_fn(10, |_, _| complex_normal(&mut rng));
        let y = receive_signal(&h, &s, params.sigma2, &mut rng).unwrap();
        let (state, ws, frame) = process_ap(option, &prior, &h, &y, 3, &params, &mut rng).unwrap();
        let f = match frame {
            Some(frame) => CVector::from_vec(frame.output),
            None => ws.projected.clone(),
        };
        r_f = ws.r_f;
        out.push((s, state.s_hat, f));
    }
    (out, r_f)
}

#[test]
fn quantized_observation_covariance_matches_model() {
    let (runs, r_f) = first_ap_runs(ProcessingOption::Option1, 40_000);
    let fs: Vec<CVector> = runs.into_iter().map(|(_, _, f)| f).collect();
    let sample = sample_outer(&fs);
    for i in 0..r_f.nrows() {
        let rel = (sample[(i, i)].re - r_f[(i, i)].re).abs() / r_f[(i, i)].re;
        assert!(rel < 0.05, "stream {i}: {rel}");
    }
    let mean_diag = r_f.diagonal().iter().map(|d| d.re).sum::<f64>() / r_f.nrows() as f64;
    for i in 0..r_f.nrows() {
        for j in 0..r_f.nrows() {
            if i != j {
                assert!(sample[(i, j)].norm() < 0.05 * mean_diag);
            }
        }
    }
}

#[test]
fn lmmse_error_is_orthogonal_to_observation() {
    for option in [ProcessingOption::NoQuant, ProcessingOption::Option2] {
        let (runs, _) = first_ap_runs(option, 40_000);
        let n = runs.len() as f64;
        let (k, r) = (runs[0].0.len(), runs[0].2.len());
        let mut cross = CMatrix::zeros(k, r);
        let (mut e2, mut f2) = (0.0, 0.0);
        for (s, s_hat, f) in &runs {
            let e = s - s_hat;
            cross += &e * f.adjoint();
            e2 += e.norm_squared();
            f2 += f.norm_squared();
        }
        let corr = cross.camax() / n / ((e2 / n / k as f64) * (f2 / n / r as f64)).sqrt();
        assert!(corr < 0.03, "{option}: normalized cross-correlation {corr}");
    }
}

fn nmse_half_width(placements: usize) -> f64 {
    let plan = ExperimentPlan {
        kind: ExperimentKind::NmseVsBits,
        bits: vec![3],
        n_placements: placements,
        n_blocks_per_placement: 1,
        n_samples_per_block: 20,
        options: vec![ProcessingOption::Option1],
        master_seed: 8,
        ..ExperimentPlan::default()
    };
    let result = run_experiment(&plan, &NetworkConfig::default()).unwrap();
    result.series[0].half_widths.as_ref().unwrap()[0]
}

#[test]
fn half_width_shrinks_as_inverse_root_n() {
    let hw: Vec<f64> = [100, 200, 400].iter().map(|&n| nmse_half_width(n)).collect();
    for w in hw.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio} for {hw:?}");
    }
}

#[test]
fn pure_noise_ber_is_a_coin_flip() {
    let cfg = NetworkConfig {
        noise_dbm: 100.0,
        ..NetworkConfig::default()
    };
    let plan = ExperimentPlan {
        kind: ExperimentKind::BerVsPower,
        powers_db: vec![-10.0],
        n_placements: 20,
        n_blocks_per_placement: 5,
        n_samples_per_block: 100,
        options: vec![ProcessingOption::NoQuant, ProcessingOption::Option1],
        master_seed: 9,
        ..ExperimentPlan::default()
    };
    let result = run_experiment(&plan, &cfg).unwrap();
    for s in &result.series {
        assert_eq!(s.counts[0] * cfg.users as u64, 100_000);
        assert!((s.values[0] - 0.5).abs() < 0.01, "{}: {}", s.name, s.values[0]);
    }
}
