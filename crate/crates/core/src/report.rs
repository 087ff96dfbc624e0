//! Machine-readable run report.
//!
//! Schema (keys are written sorted):
//!
//! ```text
//! {
//!   "config_fingerprint": "<hex sha-256>" | absent,
//!   "dataset": {"n", "modality_count", "modalities": [{"name", "tokens", "dim"}]},
//!   "method": {"label", "aggregation", "reduction", "selection_mode"},
//!   "selection": {"feature_dim", "num_bins", "bin_sizes", "fraction", "coreset_size"},
//!   "quantization_error": f64,
//!   "diversity": f64,
//!   "seeds": {"sampling": u64},
//!   "timing": {"<stage>": seconds, ...} | absent
//! }
//! ```
//!
//! Timing is only present when requested, since wall-clock values would make
//! otherwise identical runs produce different files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregate::AggregationStrategy;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::metrics::{diversity, quantization_error};
use crate::sampler::Coreset;
use crate::selector::{BinPartition, SelectionMode};
use crate::store::MultimodalDataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalitySummary {
    pub name: String,
    pub tokens: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub modality_count: usize,
    pub modalities: Vec<ModalitySummary>,
}

impl DatasetSummary {
    pub fn of(dataset: &MultimodalDataset) -> Self {
        Self {
            n: dataset.n(),
            modality_count: dataset.modality_count(),
            modalities: dataset
                .modalities()
                .iter()
                .map(|m| ModalitySummary {
                    name: m.name().to_string(),
                    tokens: m.t(),
                    dim: m.d(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodLabel {
    /// e.g. `concat+pca1024+submodular`
    pub label: String,
    pub aggregation: AggregationStrategy,
    pub reduction: String,
    pub selection_mode: SelectionMode,
}

impl MethodLabel {
    /// `reduction` is `None` when features go to the selector unreduced.
    pub fn new(aggregation: AggregationStrategy, reduction: Option<&str>, mode: SelectionMode) -> Self {
        let label = match reduction {
            Some(r) => format!("{aggregation}+{r}+submodular"),
            None => format!("{aggregation}+submodular"),
        };
        Self {
            label,
            aggregation,
            reduction: reduction.unwrap_or("none").to_string(),
            selection_mode: mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub feature_dim: usize,
    pub num_bins: usize,
    pub bin_sizes: Vec<usize>,
    pub fraction: f64,
    pub coreset_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub sampling: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
    pub dataset: DatasetSummary,
    pub method: MethodLabel,
    pub selection: SelectionSummary,
    pub quantization_error: f64,
    pub diversity: f64,
    pub seeds: Seeds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<BTreeMap<String, f64>>,
}

/// Everything a report is assembled from. Stages that have not run are `None`.
#[derive(Clone, Debug)]
pub struct ReportInputs<'a> {
    pub config_fingerprint: Option<&'a str>,
    pub method: MethodLabel,
    pub dataset: Option<&'a MultimodalDataset>,
    /// The selector's input features.
    pub features: Option<&'a FeatureMatrix>,
    pub partition: Option<&'a BinPartition>,
    pub coreset: Option<&'a Coreset>,
    pub timing: Option<BTreeMap<String, f64>>,
}

fn require<'a, T>(value: Option<&'a T>, what: &str) -> Result<&'a T> {
    value.ok_or_else(|| Error::Report(format!("missing {what} artifact")))
}

pub fn build_report(inputs: ReportInputs<'_>) -> Result<Report> {
    let dataset = require(inputs.dataset, "dataset")?;
    let features = require(inputs.features, "feature")?;
    let partition = require(inputs.partition, "partition")?;
    let coreset = require(inputs.coreset, "coreset")?;

    let n = dataset.n();
    let sizes = [
        ("features", features.n()),
        ("partition", partition.n()),
        ("coreset", coreset.n),
    ];
    if let Some((what, m)) = sizes.iter().find(|(_, m)| *m != n) {
        return Err(Error::Report(format!(
            "{what} covers {m} samples but the dataset has {n}"
        )));
    }

    Ok(Report {
        config_fingerprint: inputs.config_fingerprint.map(str::to_string),
        dataset: DatasetSummary::of(dataset),
        method: inputs.method,
        selection: SelectionSummary {
            feature_dim: features.dim(),
            num_bins: partition.num_bins(),
            bin_sizes: partition.sizes(),
            fraction: coreset.fraction,
            coreset_size: coreset.len(),
        },
        quantization_error: quantization_error(features, &coreset.indices)?,
        diversity: diversity(features, &coreset.indices)?,
        seeds: Seeds {
            sampling: coreset.seed,
        },
        timing: inputs.timing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::sample_coreset;
    use crate::store::EmbeddingTensor;

    fn setup() -> (MultimodalDataset, FeatureMatrix, BinPartition) {
        let values: Vec<f64> = (0..8).map(f64::from).collect();
        let ds = MultimodalDataset::new(vec![EmbeddingTensor::new("m", 4, 1, 2, values).unwrap()])
            .unwrap();
        let fm = FeatureMatrix::from_tensor(ds.modalities()[0].clone()).unwrap();
        let p = BinPartition::new(4, vec![vec![1, 0], vec![3, 2]]).unwrap();
        (ds, fm, p)
    }

    fn inputs<'a>(
        ds: &'a MultimodalDataset,
        fm: &'a FeatureMatrix,
        p: &'a BinPartition,
        c: &'a Coreset,
    ) -> ReportInputs<'a> {
        ReportInputs {
            config_fingerprint: Some("fp"),
            method: MethodLabel::new(AggregationStrategy::Concat, Some("pca1024"), SelectionMode::Accelerated),
            dataset: Some(ds),
            features: Some(fm),
            partition: Some(p),
            coreset: Some(c),
            timing: None,
        }
    }

    #[test]
    fn full_fraction_has_zero_error() {
        let (ds, fm, p) = setup();
        let c = sample_coreset(&p, 1.0, 3).unwrap();
        let r = build_report(inputs(&ds, &fm, &p, &c)).unwrap();
        assert_eq!(r.quantization_error, 0.0);
        assert_eq!(r.method.label, "concat+pca1024+submodular");
        assert_eq!(r.selection.coreset_size, 4);
        assert!(r.diversity > 0.0);
    }

    #[test]
    fn missing_stage_is_report_error() {
        let (ds, fm, p) = setup();
        let c = sample_coreset(&p, 0.5, 3).unwrap();
        let mut i = inputs(&ds, &fm, &p, &c);
        i.partition = None;
        assert_eq!(build_report(i).unwrap_err().kind(), "ReportError");
    }

    #[test]
    fn label_without_reduction() {
        let m = MethodLabel::new(AggregationStrategy::Mean, None, SelectionMode::Oracle);
        assert_eq!(m.label, "mean+submodular");
        assert_eq!(m.reduction, "none");
    }
}
