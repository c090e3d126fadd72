//! With lossless fronthaul the chain reproduces centralized LMMSE on the
//! stacked channel of all APs.
//!
//! ```bash
//! cargo run --release --example oracle_check
//! ```

use cellfree_chain::selftest::oracle_gap;
use cellfree_chain::NetworkConfig;

fn main() -> cellfree_chain::Result<()> {
    let cfg = NetworkConfig::default();
    for instances in [10, 100] {
        let gap = oracle_gap(&cfg, instances, 1)?;
        println!("{instances:4} channels: largest |chain - centralized| = {gap:.3e}");
    }
    Ok(())
}
