//! A reduced NMSE-versus-bits sweep for all four options. The full-size run
//! is `cellfree-chain preset fig4`.
//!
//! ```bash
//! cargo run --release --example nmse_sweep
//! ```

use cellfree_chain::{run_experiment, ExperimentKind, ExperimentPlan, NetworkConfig};

fn main() -> cellfree_chain::Result<()> {
    let plan = ExperimentPlan {
        kind: ExperimentKind::NmseVsBits,
        bits: (1..=8).collect(),
        n_placements: 40,
        n_blocks_per_placement: 5,
        n_samples_per_block: 50,
        ..ExperimentPlan::default()
    };
    let result = run_experiment(&plan, &NetworkConfig::default())?;
    print!("{:>4}", "b_l");
    for s in &result.series {
        print!("{:>18}", s.name);
    }
    println!();
    for (i, b) in result.axis.iter().enumerate() {
        print!("{b:>4}");
        for s in &result.series {
            print!("{:>10.4} ±{:.4}", s.values[i], s.half_widths.as_ref().unwrap()[i]);
        }
        println!();
    }
    println!("{:.1} s", result.metadata.wall_time_s);
    Ok(())
}
