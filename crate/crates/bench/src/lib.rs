//! Synthetic inputs shared by the benchmarks.

use mmcoreset::{FeatureMatrix, SplitMix64};

/// `n x d` features with coordinates uniform in `[-1, 1)`.
pub fn uniform_features(n: usize, d: usize, seed: u64) -> FeatureMatrix {
    let mut rng = SplitMix64::new(seed);
    let values = (0..n * d)
        .map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0)
        .collect();
    FeatureMatrix::new(n, d, values, "synthetic").expect("finite synthetic features")
}
