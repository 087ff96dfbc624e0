//! Seeded uniform sampling from the bins.
//!
//! The coreset size is `round_half_up(fraction * n)`. It is apportioned over
//! the bins by largest remainder on shares proportional to bin size, and each
//! bin's quota is drawn without replacement by a partial Fisher-Yates shuffle
//! of the bin's indices in ascending order. A single SplitMix64 stream is
//! consumed across bins in bin order.

use crate::error::{Error, Result};
use crate::selector::BinPartition;

/// SplitMix64 generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform-ish draw from `0..bound` by plain modulo.
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }
}

pub fn check_fraction(fraction: f64) -> Result<()> {
    if fraction.is_finite() && fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("fraction must be in (0, 1], got {fraction}")))
    }
}

/// `round_half_up(fraction * n)`.
///
/// Products within `1e-9` relative of a half are treated as exact halves so
/// decimal fractions such as `0.3 * 5` round up as written.
pub fn target_size(n: usize, fraction: f64) -> usize {
    let exact = fraction * n as f64;
    let nudged = exact + 0.5 + 1e-9 * exact.max(1.0);
    (nudged.floor() as usize).min(n)
}

/// Per-bin quotas: largest-remainder apportionment of
/// `target_size(sum(sizes), fraction)` proportional to `bin_sizes`.
pub fn quotas(bin_sizes: &[usize], fraction: f64) -> Result<Vec<usize>> {
    check_fraction(fraction)?;
    if bin_sizes.is_empty() || bin_sizes.contains(&0) {
        return Err(Error::Partition(format!(
            "bin sizes must be non-empty and positive, got {bin_sizes:?}"
        )));
    }
    let n: usize = bin_sizes.iter().sum();
    let total = target_size(n, fraction);
    if total > n {
        return Err(Error::Internal(format!("quota total {total} exceeds {n} samples")));
    }
    // Exact share of bin k is total * size_k / n; keep it as integer
    // quotient and remainder so ranking by fractional part is exact.
    let (n128, total128) = (n as u128, total as u128);
    let mut quota = Vec::with_capacity(bin_sizes.len());
    let mut remainders = Vec::with_capacity(bin_sizes.len());
    for (k, &size) in bin_sizes.iter().enumerate() {
        let scaled = total128 * size as u128;
        quota.push((scaled / n128) as usize);
        remainders.push((scaled % n128, k));
    }
    let leftover = total - quota.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, k) in remainders.iter().take(leftover) {
        quota[k] += 1;
    }
    if let Some(k) = (0..quota.len()).find(|&k| quota[k] > bin_sizes[k]) {
        return Err(Error::Internal(format!(
            "quota {} exceeds size {} of bin {k}",
            quota[k], bin_sizes[k]
        )));
    }
    Ok(quota)
}

/// Sorted sample indices drawn from a partition, with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Coreset {
    pub n: usize,
    pub fraction: f64,
    pub seed: u64,
    pub indices: Vec<usize>,
    pub config_fingerprint: Option<String>,
}

impl Coreset {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// One index per line.
    pub fn to_index_text(&self) -> String {
        let mut out = String::with_capacity(self.indices.len() * 6);
        for i in &self.indices {
            out.push_str(&i.to_string());
            out.push('\n');
        }
        out
    }
}

pub fn sample_coreset(partition: &BinPartition, fraction: f64, seed: u64) -> Result<Coreset> {
    // Re-validate: the partition may have been assembled by hand.
    let partition = BinPartition::new(partition.n(), partition.bins().to_vec())?;
    let quota = quotas(&partition.sizes(), fraction)?;
    let mut rng = SplitMix64::new(seed);
    let mut indices = Vec::with_capacity(quota.iter().sum());
    for (bin, &take) in partition.bins().iter().zip(&quota) {
        let mut members = bin.clone();
        members.sort_unstable();
        let m = members.len();
        for i in 0..take {
            let j = i + rng.below(m - i);
            members.swap(i, j);
        }
        indices.extend_from_slice(&members[..take]);
    }
    indices.sort_unstable();
    Ok(Coreset {
        n: partition.n(),
        fraction,
        seed,
        indices,
        config_fingerprint: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quota_fixtures() {
        assert_eq!(quotas(&[5, 5, 5, 5], 0.2).unwrap(), vec![1, 1, 1, 1]);
        assert_eq!(quotas(&[6, 5, 5, 4], 0.2).unwrap(), vec![1, 1, 1, 1]);
        assert_eq!(quotas(&[6, 5, 5, 4], 1.0).unwrap(), vec![6, 5, 5, 4]);
    }

    #[test]
    fn quota_remainder_ties_go_to_lower_bin() {
        // total = 2, shares 2/3 each: floors 0, remainders equal.
        assert_eq!(quotas(&[1, 1, 1], 0.5).unwrap(), vec![1, 1, 0]);
    }

    #[test]
    fn quota_rejects_bad_input() {
        assert_eq!(quotas(&[5, 5], 0.0).unwrap_err().kind(), "ConfigError");
        assert_eq!(quotas(&[5, 5], 1.5).unwrap_err().kind(), "ConfigError");
        assert_eq!(quotas(&[5, 5], f64::NAN).unwrap_err().kind(), "ConfigError");
        assert_eq!(quotas(&[5, 0], 0.5).unwrap_err().kind(), "PartitionError");
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(target_size(2, 0.25), 1);
        assert_eq!(target_size(5, 0.3), 2);
        assert_eq!(target_size(7, 0.2), 1);
        assert_eq!(target_size(8, 0.2), 2);
        assert_eq!(target_size(1, 0.2), 0);
        assert_eq!(target_size(200, 1.0), 200);
    }

    #[test]
    fn splitmix_first_output_seed_zero() {
        assert_eq!(SplitMix64::new(0).next_u64(), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn full_fraction_selects_everything() {
        let p = BinPartition::new(5, vec![vec![4, 0], vec![3, 1], vec![2]]).unwrap();
        for seed in [0, 1, u64::MAX] {
            assert_eq!(sample_coreset(&p, 1.0, seed).unwrap().indices, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let bins: Vec<Vec<usize>> = (0..4).map(|k| (k * 10..k * 10 + 10).collect()).collect();
        let p = BinPartition::new(40, bins).unwrap();
        let a = sample_coreset(&p, 0.3, 11).unwrap();
        assert_eq!(a, sample_coreset(&p, 0.3, 11).unwrap());
        assert_ne!(a.indices, sample_coreset(&p, 0.3, 12).unwrap().indices);
        assert_eq!(a.len(), 12);
        assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn shuffle_uses_ascending_bin_order() {
        // Bin order in the partition must not influence the draw.
        let a = BinPartition::new(6, vec![vec![5, 2, 0], vec![1, 4, 3]]).unwrap();
        let b = BinPartition::new(6, vec![vec![0, 2, 5], vec![3, 1, 4]]).unwrap();
        for seed in 0..20 {
            assert_eq!(
                sample_coreset(&a, 0.5, seed).unwrap(),
                sample_coreset(&b, 0.5, seed).unwrap()
            );
        }
    }
}
