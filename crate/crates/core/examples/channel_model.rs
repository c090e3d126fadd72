//! Draws one network placement and a few channel blocks, then reports the
//! large-scale gains and how closely the sample covariance tracks the model.
//!
//! ```bash
//! cargo run --release --example channel_model
//! ```

use cellfree_chain::channel::{generate_placement, pathloss_db, ChannelModel};
use cellfree_chain::harness::{seed_stream, StreamRole};
use cellfree_chain::linalg::CMatrix;
use cellfree_chain::{CorrelationModel, NetworkConfig};
use num_complex::Complex64;

fn main() -> cellfree_chain::Result<()> {
    let cfg = NetworkConfig {
        correlation: CorrelationModel::Exponential { rho: 0.5 },
        ..NetworkConfig::default()
    };
    let placement = generate_placement(&cfg, &mut seed_stream(cfg.seed, 0, 0, 0, StreamRole::Placement));

    println!("AP positions (m):");
    for (l, p) in placement.ap_positions.iter().enumerate() {
        println!("  AP {}: ({:6.1}, {:6.1})", l + 1, p[0], p[1]);
    }
    println!("path loss to user 1 (dB):");
    for l in 0..cfg.num_aps {
        let d = placement.distances[(l, 0)];
        println!("  AP {}: d = {d:6.1} m, {:7.2} dB", l + 1, pathloss_db(d)?);
    }

    let model = ChannelModel::new(&cfg, &placement)?;
    let blocks = 5_000;
    let mut sample = CMatrix::zeros(cfg.antennas, cfg.antennas);
    for b in 0..blocks {
        let h = model.draw(&mut seed_stream(cfg.seed, 0, b, 0, StreamRole::Channel)).h;
        let col = h[0].column(0);
        sample += col * col.adjoint();
    }
    sample /= Complex64::new(blocks as f64, 0.0);
    let target = &model
        .draw(&mut seed_stream(cfg.seed, 0, 0, 0, StreamRole::Channel))
        .covariances[0][0];
    let rel = (&sample - target).norm() / target.norm();
    println!(
        "AP 1 / user 1: sample covariance over {blocks} blocks is {:.2}% from the model",
        100.0 * rel
    );
    Ok(())
}
