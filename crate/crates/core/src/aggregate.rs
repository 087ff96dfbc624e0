//! Token aggregation: one feature vector per multimodal sample.
//!
//! A sample's tokens are pooled across modalities in modality order, so a
//! dataset with token counts `t_1, ..., t_M` contributes `T = sum(t_m)` tokens
//! per sample. `Concat` flattens them (width `sum(t_m * d_m)`); `Mean` and
//! `Sum` reduce them token-wise and need a shared width `d`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::store::MultimodalDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationStrategy {
    Concat,
    Mean,
    Sum,
}

impl AggregationStrategy {
    pub fn label(self) -> &'static str {
        match self {
            AggregationStrategy::Concat => "concat",
            AggregationStrategy::Mean => "mean",
            AggregationStrategy::Sum => "sum",
        }
    }

    /// Output width for the given dataset, or `DimensionError` when a
    /// token-wise reduction meets unequal widths.
    pub fn output_dim(self, dataset: &MultimodalDataset) -> Result<usize> {
        let mods = dataset.modalities();
        match self {
            AggregationStrategy::Concat => Ok(mods.iter().map(|m| m.t() * m.d()).sum()),
            AggregationStrategy::Mean | AggregationStrategy::Sum => {
                let d = mods[0].d();
                if let Some(bad) = mods.iter().find(|m| m.d() != d) {
                    return Err(Error::Dimension(format!(
                        "{} aggregation needs equal widths, but '{}' has d={} and '{}' has d={d}",
                        self.label(),
                        bad.name(),
                        bad.d(),
                        mods[0].name()
                    )));
                }
                Ok(d)
            }
        }
    }
}

impl fmt::Display for AggregationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AggregationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(AggregationStrategy::Concat),
            "mean" => Ok(AggregationStrategy::Mean),
            "sum" => Ok(AggregationStrategy::Sum),
            other => Err(Error::Config(format!(
                "unknown aggregation '{other}' (expected concat, mean or sum)"
            ))),
        }
    }
}

pub fn aggregate(dataset: &MultimodalDataset, strategy: AggregationStrategy) -> Result<FeatureMatrix> {
    let dim = strategy.output_dim(dataset)?;
    let n = dataset.n();
    let mods = dataset.modalities();
    let total_tokens: usize = mods.iter().map(|m| m.t()).sum();

    let mut values = vec![0.0; n * dim];
    values
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(i, row)| match strategy {
            AggregationStrategy::Concat => {
                let mut at = 0;
                for m in mods {
                    let sample = m.sample(i);
                    row[at..at + sample.len()].copy_from_slice(sample);
                    at += sample.len();
                }
            }
            AggregationStrategy::Mean | AggregationStrategy::Sum => {
                for m in mods {
                    for token in m.sample(i).chunks_exact(dim) {
                        for (acc, v) in row.iter_mut().zip(token) {
                            *acc += v;
                        }
                    }
                }
                if strategy == AggregationStrategy::Mean {
                    let count = total_tokens as f64;
                    row.iter_mut().for_each(|v| *v /= count);
                }
            }
        });

    FeatureMatrix::new(n, dim, values, strategy.label())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::EmbeddingTensor;

    fn two_single_token() -> MultimodalDataset {
        MultimodalDataset::new(vec![
            EmbeddingTensor::new("a", 1, 1, 2, vec![1.0, 2.0]).unwrap(),
            EmbeddingTensor::new("b", 1, 1, 2, vec![3.0, 4.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn worked_example() {
        let ds = two_single_token();
        let concat = aggregate(&ds, AggregationStrategy::Concat).unwrap();
        assert_eq!(concat.values(), &[1.0, 2.0, 3.0, 4.0]);
        let mean = aggregate(&ds, AggregationStrategy::Mean).unwrap();
        assert_eq!(mean.values(), &[2.0, 3.0]);
        let sum = aggregate(&ds, AggregationStrategy::Sum).unwrap();
        assert_eq!(sum.values(), &[4.0, 6.0]);
    }

    #[test]
    fn multi_token_concat_is_sample_major() {
        // sample 0 tokens (1,2),(3,4); sample 1 tokens (5,6),(7,8)
        let a = EmbeddingTensor::new("a", 2, 2, 2, (1..=8).map(f64::from).collect()).unwrap();
        let b = EmbeddingTensor::new("b", 2, 1, 1, vec![-1.0, -2.0]).unwrap();
        let ds = MultimodalDataset::new(vec![a, b]).unwrap();
        let fm = aggregate(&ds, AggregationStrategy::Concat).unwrap();
        assert_eq!(fm.dim(), 5);
        assert_eq!(fm.row(0), &[1.0, 2.0, 3.0, 4.0, -1.0]);
        assert_eq!(fm.row(1), &[5.0, 6.0, 7.0, 8.0, -2.0]);
    }

    #[test]
    fn unequal_widths_reject_token_reductions() {
        let ds = MultimodalDataset::new(vec![
            EmbeddingTensor::new("a", 1, 1, 2, vec![1.0, 2.0]).unwrap(),
            EmbeddingTensor::new("b", 1, 1, 3, vec![3.0, 4.0, 5.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(aggregate(&ds, AggregationStrategy::Concat).unwrap().dim(), 5);
        for s in [AggregationStrategy::Mean, AggregationStrategy::Sum] {
            assert_eq!(aggregate(&ds, s).unwrap_err().kind(), "DimensionError");
        }
    }

    #[test]
    fn parse_round_trips_label() {
        for s in [AggregationStrategy::Concat, AggregationStrategy::Mean, AggregationStrategy::Sum] {
            assert_eq!(s.label().parse::<AggregationStrategy>().unwrap(), s);
        }
        assert!("max".parse::<AggregationStrategy>().is_err());
    }
}
