//! Proxy quality measures for a coreset.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

fn check_indices(features: &FeatureMatrix, coreset: &[usize]) -> Result<()> {
    match coreset.iter().find(|&&i| i >= features.n()) {
        Some(i) => Err(Error::Index(format!(
            "coreset index {i} outside 0..{}",
            features.n()
        ))),
        None => Ok(()),
    }
}

/// Mean over all samples of the squared distance to the nearest coreset member.
pub fn quantization_error(features: &FeatureMatrix, coreset: &[usize]) -> Result<f64> {
    if coreset.is_empty() {
        return Err(Error::Empty);
    }
    check_indices(features, coreset)?;
    let nearest: Vec<f64> = (0..features.n())
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            coreset
                .iter()
                .map(|&j| features.squared_distance(i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(nearest.iter().sum::<f64>() / features.n() as f64)
}

/// Mean squared distance over unordered pairs of coreset members; 0 for a
/// singleton.
pub fn diversity(features: &FeatureMatrix, coreset: &[usize]) -> Result<f64> {
    if coreset.is_empty() {
        return Err(Error::Empty);
    }
    check_indices(features, coreset)?;
    // Ascending order makes the summation independent of how the caller
    // ordered the indices.
    let mut members = coreset.to_vec();
    members.sort_unstable();
    let m = members.len();
    if m < 2 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for a in 0..m {
        for b in a + 1..m {
            sum += features.squared_distance(members[a], members[b]);
        }
    }
    Ok(sum / (m * (m - 1) / 2) as f64)
}
