//! Multimodal coreset selection.
//!
//! Per-modality token embeddings are pooled into one feature vector per
//! sample ([`aggregate`]), optionally projected with PCA ([`pca`]), split into
//! greedy submodular bins ([`selector`]) and sampled uniformly per bin with a
//! seeded generator ([`sampler`]). [`pipeline`] wires the stages together and
//! persists every intermediate artifact.

pub mod aggregate;
pub mod artifacts;
pub mod diagnostics;
pub mod error;
pub mod features;
pub mod linalg;
pub mod metrics;
pub mod pca;
pub mod pipeline;
pub mod report;
pub mod sampler;
pub mod selector;
pub mod store;

pub use aggregate::{aggregate, AggregationStrategy};
pub use diagnostics::{validate_inputs, Diagnostics};
pub use error::{Error, Result};
pub use features::{squared_distance, FeatureMatrix};
pub use metrics::{diversity, quantization_error};
pub use pca::{fit_pca, fit_pca_with_route, PcaModel, PcaRoute};
pub use pipeline::{run_pipeline, run_stage, PipelineConfig, PipelineOutputs, Reduction, Stage};
pub use report::{build_report, Report};
pub use sampler::{quotas, sample_coreset, target_size, Coreset, SplitMix64};
pub use selector::{
    bin_sizes, compute_gain_direct, select_bins, select_bins_traced, BinPartition, GainState,
    SelectionMode, SelectionTrace, SelectorConfig,
};
pub use store::{
    load_dataset, read_embedding_tensor, write_embedding_tensor, Dtype, EmbeddingTensor,
    MultimodalDataset,
};
