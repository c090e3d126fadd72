//! A reduced BPSK bit-error-rate sweep over user transmit power with 3-bit
//! quantizers. The full-size run is `cellfree-chain preset fig5`.
//!
//! ```bash
//! cargo run --release --example ber_sweep
//! ```

use cellfree_chain::{run_experiment, ExperimentKind, ExperimentPlan, NetworkConfig};

fn main() -> cellfree_chain::Result<()> {
    let cfg = NetworkConfig::default().with_uniform_bits(3);
    let plan = ExperimentPlan {
        kind: ExperimentKind::BerVsPower,
        powers_db: vec![-20.0, -15.0, -10.0, -5.0, 0.0],
        n_placements: 40,
        n_blocks_per_placement: 5,
        n_samples_per_block: 100,
        ..ExperimentPlan::default()
    };
    let result = run_experiment(&plan, &cfg)?;
    print!("{:>6}", "p_dB");
    for s in &result.series {
        print!("{:>10}", s.name);
    }
    println!();
    for (i, p) in result.axis.iter().enumerate() {
        print!("{p:>6}");
        for s in &result.series {
            print!("{:>10.2e}", s.values[i]);
        }
        println!();
    }
    Ok(())
}
