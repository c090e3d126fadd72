use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ProcessingOption;

pub type RandomStream = ChaCha8Rng;

/// What a derived stream is used for. Distinct roles never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamRole {
    Placement,
    Channel,
    Noise,
    Signal,
    Dither(ProcessingOption),
    /// Picks the AP inspected by the noise studies.
    Selection,
}

impl StreamRole {
    fn tag(self) -> u64 {
        match self {
            StreamRole::Placement => 1,
            StreamRole::Channel => 2,
            StreamRole::Noise => 3,
            StreamRole::Signal => 4,
            StreamRole::Selection => 5,
            StreamRole::Dither(option) => 0x100 | option.tag(),
        }
    }
}

/// Counter-based stream derivation: the ChaCha key is the index tuple
/// `(master_seed, placement, block, sample)` and the ChaCha stream id is the
/// role. Any two distinct tuples give unrelated keystreams; equal tuples give
/// identical ones.
pub fn seed_stream(
    master_seed: u64,
    placement_idx: u64,
    block_idx: u64,
    sample_idx: u64,
    role: StreamRole,
) -> RandomStream {
    let mut key = [0u8; 32];
    for (chunk, word) in key
        .chunks_exact_mut(8)
        .zip([master_seed, placement_idx, block_idx, sample_idx])
    {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(role.tag());
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::HashSet;

    #[test]
    fn identical_tuples_identical_draws() {
        let mut a = seed_stream(9, 1, 2, 3, StreamRole::Noise);
        let mut b = seed_stream(9, 1, 2, 3, StreamRole::Noise);
        for _ in 0..100 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn noise_and_dither_are_uncorrelated() {
        let mut a = seed_stream(9, 1, 2, 3, StreamRole::Noise);
        let mut b = seed_stream(9, 1, 2, 3, StreamRole::Dither(ProcessingOption::Option1));
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| a.random::<f64>() - 0.5).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.random::<f64>() - 0.5).collect();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let syy: f64 = ys.iter().map(|y| y * y).sum();
        assert!((sxy / (sxx * syy).sqrt()).abs() < 0.01);
    }

    #[test]
    fn distinct_samples_distinct_streams() {
        let firsts: HashSet<u64> = (0..1000)
            .map(|s| seed_stream(1, 0, 0, s, StreamRole::Signal).random::<u64>())
            .collect();
        assert_eq!(firsts.len(), 1000);
        let roles = [
            StreamRole::Placement,
            StreamRole::Channel,
            StreamRole::Noise,
            StreamRole::Signal,
            StreamRole::Selection,
            StreamRole::Dither(ProcessingOption::Option1),
            StreamRole::Dither(ProcessingOption::Option2),
            StreamRole::Dither(ProcessingOption::Option3),
        ];
        let by_role: HashSet<u64> = roles
            .iter()
            .map(|&r| seed_stream(1, 0, 0, 0, r).random::<u64>())
            .collect();
        assert_eq!(by_role.len(), roles.len());
    }
}
