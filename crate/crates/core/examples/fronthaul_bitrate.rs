//! Fronthaul load per link and the bit growth of the estimate update.
//!
//! ```bash
//! cargo run --example fronthaul_bitrate
//! ```

use cellfree_chain::metrics::{fronthaul_bitrate, multiplier_width, FronthaulParams};
use cellfree_chain::NetworkConfig;

fn main() -> cellfree_chain::Result<()> {
    let cfg = NetworkConfig::default();
    println!(
        "B = {} MHz, B_c = {} kHz, T_c = {} ms, tau_d = {}, b_c = {}, b_e = {}",
        cfg.bandwidth / 1e6,
        cfg.coherence_bandwidth / 1e3,
        cfg.coherence_time * 1e3,
        cfg.tau_d,
        cfg.combiner_bits,
        cfg.covariance_bits
    );
    println!("{:>4} {:>14} {:>6} {:>6}", "b_l", "Br_f (Gbit/s)", "b_s", "width");
    for b in 1..=8 {
        let fp = FronthaulParams::for_ap(&cfg.with_uniform_bits(b), 0);
        let rate = fronthaul_bitrate(&fp)?;
        let w = multiplier_width(cfg.combiner_bits, b, cfg.r());
        println!(
            "{b:>4} {:>14.3} {:>6} {:>6}",
            rate.bits_per_second / 1e9,
            rate.b_s,
            w.accumulator
        );
    }
    Ok(())
}
