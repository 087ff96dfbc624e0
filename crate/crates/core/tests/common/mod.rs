//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the selector, sampler or metrics code; the
//! brute-force routines work on plain `Vec<Vec<f64>>` rows.

#![allow(dead_code)]

use mmcoreset::FeatureMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut StdRng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn to_features(rows: &[Vec<f64>]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows, "test").unwrap()
}

pub fn sq(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += (a[k] - b[k]) * (a[k] - b[k]);
    }
    s
}

/// Gain recomputed from the double sum: selected terms minus pool-minus-selected terms.
pub fn direct_gain(rows: &[Vec<f64>], pool: &[usize], bin: &[usize], x: usize) -> f64 {
    let mut inside = 0.0;
    let mut outside = 0.0;
    for &p in pool {
        if bin.contains(&p) {
            inside += sq(&rows[p], &rows[x]);
        } else {
            outside += sq(&rows[p], &rows[x]);
        }
    }
    inside - outside
}

/// Bin sizes from the ceil/floor rule: the first `n mod N` bins are larger.
pub fn schedule(n: usize, bins: usize) -> Vec<usize> {
    let big = n.div_ceil(bins);
    let small = n / bins;
    (0..bins).map(|k| if k < n % bins { big } else { small }).collect()
}

/// Greedy partition recomputing every gain from scratch at every step.
/// Returns the bins and, per step, (chosen, gain of chosen).
pub fn brute_force_partition(rows: &[Vec<f64>], bins: usize) -> (Vec<Vec<usize>>, Vec<(usize, f64)>) {
    let n = rows.len();
    let mut used = vec![false; n];
    let mut out = Vec::new();
    let mut steps = Vec::new();
    for size in schedule(n, bins) {
        let pool: Vec<usize> = (0..n).filter(|&i| !used[i]).collect();
        let mut bin: Vec<usize> = Vec::new();
        while bin.len() < size {
            let mut best: Option<(usize, f64)> = None;
            for &x in &pool {
                if bin.contains(&x) {
                    continue;
                }
                let g = direct_gain(rows, &pool, &bin, x);
                if best.is_none_or(|(_, bg)| g > bg) {
                    best = Some((x, g));
                }
            }
            let (x, g) = best.unwrap();
            bin.push(x);
            steps.push((x, g));
        }
        for &i in &bin {
            used[i] = true;
        }
        out.push(bin);
    }
    (out, steps)
}

/// SplitMix64 written against 128-bit arithmetic with explicit masking.
pub struct ReferenceSplitMix {
    state: u128,
}

impl ReferenceSplitMix {
    const MASK: u128 = (1u128 << 64) - 1;

    pub fn new(seed: u64) -> Self {
        Self { state: seed as u128 }
    }

    pub fn next(&mut self) -> u64 {
        self.state = (self.state + 0x9E3779B97F4A7C15) & Self::MASK;
        let mut z = self.state;
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & Self::MASK;
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & Self::MASK;
        (z ^ (z >> 31)) as u64
    }
}

/// round_half_up(p/q * n) in integer arithmetic.
pub fn round_half_up_ratio(n: usize, p: usize, q: usize) -> usize {
    (2 * p * n + q) / (2 * q)
}

/// Per-point nearest-member scan.
pub fn brute_quantization_error(rows: &[Vec<f64>], coreset: &[usize]) -> f64 {
    let mut total = 0.0;
    for r in rows {
        let mut best = f64::INFINITY;
        for &j in coreset {
            let d = sq(r, &rows[j]);
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    total / rows.len() as f64
}
