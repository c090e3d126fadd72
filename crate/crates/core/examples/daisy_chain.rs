//! Passes one received sample down the chain under each processing option
//! and prints how the error covariance shrinks from AP to AP.
//!
//! ```bash
//! cargo run --release --example daisy_chain
//! ```

use cellfree_chain::channel::{complex_normal, generate_placement, receive_signal, ChannelModel};
use cellfree_chain::harness::{seed_stream, StreamRole};
use cellfree_chain::linalg::CVector;
use cellfree_chain::pipeline::{ChainParams, ChainPlan};
use cellfree_chain::{NetworkConfig, ProcessingOption};

fn main() -> cellfree_chain::Result<()> {
    let cfg = NetworkConfig::default();
    let placement = generate_placement(&cfg, &mut seed_stream(cfg.seed, 0, 0, 0, StreamRole::Placement));
    let channel = ChannelModel::new(&cfg, &placement)?.draw(&mut seed_stream(cfg.seed, 0, 0, 0, StreamRole::Channel));

    let mut sig = seed_stream(cfg.seed, 0, 0, 0, StreamRole::Signal);
    let s = CVector::from_fn(cfg.users, |_, _| complex_normal(&mut sig) * cfg.p().sqrt());
    let mut noise = seed_stream(cfg.seed, 0, 0, 0, StreamRole::Noise);
    let y: Vec<CVector> = channel
        .h
        .iter()
        .map(|h| receive_signal(h, &s, cfg.sigma2(), &mut noise))
        .collect::<Result<_, _>>()?;

    let params = ChainParams::from_config(&cfg);
    println!("trace(C_l) / (K p) after each AP, b_l = {}:", cfg.bits[0]);
    for option in ProcessingOption::ALL {
        let plan = ChainPlan::build(option, &channel.h, &cfg.bits, &params)?;
        let scale = cfg.users as f64 * cfg.p();
        let traces: Vec<String> = plan
            .covariance_traces()
            .iter()
            .map(|t| format!("{:.3}", t / scale))
            .collect();
        let out = plan.estimate(&y, &mut seed_stream(cfg.seed, 0, 0, 0, StreamRole::Dither(option)))?;
        let err = (&out.s_hat - &s).norm_squared() / s.norm_squared();
        println!(
            "  {option:8} {}  sample error {err:.3}, {} clipped",
            traces.join(" -> "),
            out.clipped
        );
    }
    Ok(())
}
