//! Dithered uniform quantization of a correlated Gaussian stream: the
//! realized noise is uniform, white and uncorrelated with the input.
//!
//! ```bash
//! cargo run --release --example quantizer_noise
//! ```

use cellfree_chain::channel::complex_normal;
use cellfree_chain::quantization::{
    calibrate_dynamic_range, draw_dither, quantize, validate_noise_statistics, NoiseSamples,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cellfree_chain::Result<()> {
    let variances = [4.0, 1.0, 0.25];
    let bank = calibrate_dynamic_range(&variances, 3.0, 3)?;
    for i in 0..bank.len() {
        println!(
            "pair {}: gamma = {:.4}, delta = {:.4}",
            i + 1,
            bank.gamma()[i],
            bank.delta()[i]
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut samples = NoiseSamples::default();
    for _ in 0..50_000 {
        let x: Vec<Complex64> = variances.iter().map(|v| complex_normal(&mut rng) * v.sqrt()).collect();
        let z: Vec<Complex64> = x.iter().zip(draw_dither(&bank, &mut rng)).map(|(a, d)| a + d).collect();
        samples.push(&x, &quantize(&bank, &z)?);
    }
    let report = validate_noise_statistics(&samples, &bank)?;
    println!(
        "{} unclipped samples ({} rows dropped for clipping)",
        report.samples, report.clipped_rows
    );
    for (i, p) in report.pairs.iter().enumerate() {
        println!(
            "pair {}: KS {:.4}/{:.4}, variance {:.3e} vs delta^2/12 = {:.3e}",
            i + 1,
            p.ks_re,
            p.ks_im,
            p.variance_re,
            p.expected_variance
        );
    }
    println!("largest off-diagonal / mean diagonal: {:.4}", report.off_diagonal_ratio);
    println!("largest |corr(noise, input)|: {:.4}", report.max_input_correlation);
    Ok(())
}
