//! Config-driven orchestration: load, aggregate, reduce, select, sample, report.
//!
//! Each stage persists its artifact in the output directory, and
//! [`run_stage`] can execute any single stage from the artifacts of the
//! previous ones. Running the stages one by one yields the same files as
//! [`run_pipeline`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::{aggregate, AggregationStrategy};
use crate::artifacts::{
    read_coreset, read_json, read_partition, write_coreset, write_json, write_partition,
    CORESET_FILE, CORESET_TEXT_FILE, FEATURES_FILE, PARTITION_FILE, REDUCED_FILE, REPORT_FILE,
};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::pca::{fit_pca, COMPONENTS_FILE, MEAN_FILE, MODEL_FILE};
use crate::report::{build_report, MethodLabel, Report, ReportInputs};
use crate::sampler::{check_fraction, sample_coreset, target_size, Coreset};
use crate::selector::{select_bins, BinPartition, SelectionMode, SelectorConfig};
use crate::store::{load_dataset, MultimodalDataset};

/// What happens between aggregation and selection.
///
/// JSON forms: `"none"`, `{"pca": 1024}`, `{"external": "umap.mmeb"}`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    None,
    Pca(usize),
    /// Externally reduced features (e.g. UMAP) read from an MMEB file.
    External(PathBuf),
}

impl Reduction {
    pub fn label(&self) -> Option<String> {
        match self {
            Reduction::None => None,
            Reduction::Pca(k) => Some(format!("pca{k}")),
            Reduction::External(_) => Some("external".to_string()),
        }
    }
}

fn default_bins() -> usize {
    20
}

fn default_fraction() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    #[serde(default = "default_aggregation")]
    pub aggregation: AggregationStrategy,
    #[serde(default)]
    pub reduction: Reduction,
    #[serde(default = "default_bins")]
    pub num_bins: usize,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: SelectionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Adds per-stage wall-clock seconds to the report.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub record_timings: bool,
}

fn default_aggregation() -> AggregationStrategy {
    AggregationStrategy::Concat
}

/// Keys that do not influence which samples are selected.
const UNFINGERPRINTED: [&str; 2] = ["output_dir", "record_timings"];

impl PipelineConfig {
    /// Defaults: concat, no reduction, 20 bins, fraction 0.2, seed 0, accelerated.
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            aggregation: AggregationStrategy::Concat,
            reduction: Reduction::None,
            num_bins: default_bins(),
            fraction: default_fraction(),
            seed: 0,
            mode: SelectionMode::Accelerated,
            output_dir: None,
            record_timings: false,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction(self.fraction)?;
        if self.num_bins == 0 {
            return Err(Error::Config("num_bins must be at least 1".into()));
        }
        if self.reduction == Reduction::Pca(0) {
            return Err(Error::Config("PCA dimension must be at least 1".into()));
        }
        Ok(())
    }

    /// Compact JSON with sorted keys, excluding output location and timing.
    pub fn canonical(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)
            .map_err(|e| Error::Internal(format!("config serialization failed: {e}")))?;
        if let Some(map) = value.as_object_mut() {
            for key in UNFINGERPRINTED {
                map.remove(key);
            }
        }
        Ok(value.to_string())
    }

    /// Hex SHA-256 of [`PipelineConfig::canonical`].
    pub fn fingerprint(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical()?.as_bytes())))
    }

    pub fn method_label(&self) -> MethodLabel {
        MethodLabel::new(self.aggregation, self.reduction.label().as_deref(), self.mode)
    }

    /// Where the selector reads its input in stage-by-stage runs.
    pub fn selection_input(&self, out_dir: &Path) -> PathBuf {
        match &self.reduction {
            Reduction::None => out_dir.join(FEATURES_FILE),
            Reduction::Pca(_) => out_dir.join(REDUCED_FILE),
            Reduction::External(path) => path.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Aggregate,
    Reduce,
    Select,
    Sample,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Aggregate,
        Stage::Reduce,
        Stage::Select,
        Stage::Sample,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Aggregate => "aggregate",
            Stage::Reduce => "reduce",
            Stage::Select => "select",
            Stage::Sample => "sample",
            Stage::Report => "report",
        }
    }
}

/// Files written so far; removed again if the run fails.
#[derive(Default)]
struct Written(Vec<PathBuf>);

impl Written {
    fn track(&mut self, path: PathBuf, result: Result<()>) -> Result<()> {
        // A failed write may still have created the file.
        self.0.push(path);
        result
    }

    fn remove_all(&self) {
        for path in &self.0 {
            let _ = fs::remove_file(path);
        }
    }
}

fn load_stage(cfg: &PipelineConfig) -> Result<MultimodalDataset> {
    load_dataset(&cfg.manifest).map_err(|e| e.in_stage("load"))
}

fn reduce_features(
    cfg: &PipelineConfig,
    features: &FeatureMatrix,
    out_dir: &Path,
    written: &mut Written,
) -> Result<()> {
    let Reduction::Pca(k) = cfg.reduction else {
        return Err(Error::Config(
            "reduce stage needs a PCA reduction in the configuration".into(),
        ));
    };
    let model = fit_pca(features, k)?;
    let reduced = model.transform(features)?;
    for file in [MODEL_FILE, MEAN_FILE, COMPONENTS_FILE] {
        written.0.push(out_dir.join(file));
    }
    model.save(out_dir)?;
    written.track(out_dir.join(REDUCED_FILE), reduced.write(out_dir.join(REDUCED_FILE)))
}

fn external_features(path: &Path, n: Option<usize>) -> Result<FeatureMatrix> {
    let features = FeatureMatrix::read(path)?;
    match n {
        Some(n) if n != features.n() => Err(Error::Alignment(format!(
            "{} holds {} samples but the dataset has {n}",
            path.display(),
            features.n()
        ))),
        _ => Ok(features),
    }
}

fn select_stage(cfg: &PipelineConfig, features: &FeatureMatrix) -> Result<BinPartition> {
    select_bins(features, &SelectorConfig::new(cfg.num_bins, cfg.mode))
}

fn sample_stage(cfg: &PipelineConfig, partition: &BinPartition, fingerprint: &str) -> Result<Coreset> {
    if target_size(partition.n(), cfg.fraction) == 0 {
        return Err(Error::Config(format!(
            "fraction {} of {} samples rounds to an empty coreset",
            cfg.fraction,
            partition.n()
        )));
    }
    let mut coreset = sample_coreset(partition, cfg.fraction, cfg.seed)?;
    coreset.config_fingerprint = Some(fingerprint.to_string());
    Ok(coreset)
}

fn write_coreset_files(out_dir: &Path, coreset: &Coreset, written: &mut Written) -> Result<()> {
    let json = out_dir.join(CORESET_FILE);
    written.track(json.clone(), write_coreset(&json, coreset))?;
    let text = out_dir.join(CORESET_TEXT_FILE);
    let result = fs::write(&text, coreset.to_index_text()).map_err(|e| Error::io(&text, e));
    written.track(text, result)
}

pub struct PipelineOutputs {
    pub partition: BinPartition,
    pub coreset: Coreset,
    pub report: Report,
    pub files: Vec<PathBuf>,
}

/// Runs every stage in memory, writing each artifact to `out_dir`.
/// On failure the files written by this run are removed.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<PipelineOutputs> {
    let mut written = Written::default();
    match pipeline_inner(cfg, out_dir, &mut written) {
        Ok(outputs) => Ok(PipelineOutputs {
            files: written.0,
            ..outputs
        }),
        Err(e) => {
            written.remove_all();
            Err(e)
        }
    }
}

fn pipeline_inner(cfg: &PipelineConfig, out_dir: &Path, written: &mut Written) -> Result<PipelineOutputs> {
    cfg.validate()?;
    let fingerprint = cfg.fingerprint()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut timing = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timing: &mut BTreeMap<String, f64>| {
        timing.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    let dataset = load_stage(cfg)?;
    lap("load", &mut timing);

    let features = aggregate(&dataset, cfg.aggregation).map_err(|e| e.in_stage("aggregate"))?;
    let path = out_dir.join(FEATURES_FILE);
    written
        .track(path.clone(), features.write(&path))
        .map_err(|e| e.in_stage("aggregate"))?;
    lap("aggregate", &mut timing);

    let selection_features = match &cfg.reduction {
        Reduction::None => features,
        Reduction::Pca(_) => {
            reduce_features(cfg, &features, out_dir, written).map_err(|e| e.in_stage("reduce"))?;
            FeatureMatrix::read(out_dir.join(REDUCED_FILE)).map_err(|e| e.in_stage("reduce"))?
        }
        Reduction::External(path) => {
            external_features(path, Some(dataset.n())).map_err(|e| e.in_stage("reduce"))?
        }
    };
    lap("reduce", &mut timing);

    let partition = select_stage(cfg, &selection_features).map_err(|e| e.in_stage("select"))?;
    let path = out_dir.join(PARTITION_FILE);
    written
        .track(path.clone(), write_partition(&path, &partition, Some(&fingerprint)))
        .map_err(|e| e.in_stage("select"))?;
    lap("select", &mut timing);

    let coreset = sample_stage(cfg, &partition, &fingerprint).map_err(|e| e.in_stage("sample"))?;
    write_coreset_files(out_dir, &coreset, written).map_err(|e| e.in_stage("sample"))?;
    lap("sample", &mut timing);

    let report = build_report(ReportInputs {
        config_fingerprint: Some(&fingerprint),
        method: cfg.method_label(),
        dataset: Some(&dataset),
        features: Some(&selection_features),
        partition: Some(&partition),
        coreset: Some(&coreset),
        timing: None,
    })
    .map_err(|e| e.in_stage("report"))?;
    lap("report", &mut timing);
    let report = Report {
        timing: cfg.record_timings.then_some(timing),
        ..report
    };
    let path = out_dir.join(REPORT_FILE);
    written
        .track(path.clone(), write_json(&path, &report))
        .map_err(|e| e.in_stage("report"))?;

    Ok(PipelineOutputs {
        partition,
        coreset,
        report,
        files: Vec::new(),
    })
}

/// Runs one stage against the artifacts already present in `out_dir` and
/// returns the files it wrote. Failed stages leave no partial output.
pub fn run_stage(cfg: &PipelineConfig, out_dir: &Path, stage: Stage) -> Result<Vec<PathBuf>> {
    let mut written = Written::default();
    let result = cfg
        .validate()
        .and_then(|_| fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e)))
        .and_then(|_| stage_inner(cfg, out_dir, stage, &mut written))
        .map_err(|e| e.in_stage(stage.name()));
    match result {
        Ok(()) => Ok(written.0),
        Err(e) => {
            written.remove_all();
            Err(e)
        }
    }
}

fn stage_inner(cfg: &PipelineConfig, out_dir: &Path, stage: Stage, written: &mut Written) -> Result<()> {
    let fingerprint = cfg.fingerprint()?;
    match stage {
        Stage::Aggregate => {
            let dataset = load_dataset(&cfg.manifest)?;
            let features = aggregate(&dataset, cfg.aggregation)?;
            let path = out_dir.join(FEATURES_FILE);
            written.track(path.clone(), features.write(&path))
        }
        Stage::Reduce => {
            let features = FeatureMatrix::read(out_dir.join(FEATURES_FILE))?;
            reduce_features(cfg, &features, out_dir, written)
        }
        Stage::Select => {
            let features = match &cfg.reduction {
                Reduction::External(path) => external_features(path, None)?,
                _ => FeatureMatrix::read(cfg.selection_input(out_dir))?,
            };
            let partition = select_stage(cfg, &features)?;
            let path = out_dir.join(PARTITION_FILE);
            written.track(path.clone(), write_partition(&path, &partition, Some(&fingerprint)))
        }
        Stage::Sample => {
            let partition = read_matching_partition(out_dir, &fingerprint)?;
            let coreset = sample_stage(cfg, &partition, &fingerprint)?;
            write_coreset_files(out_dir, &coreset, written)
        }
        Stage::Report => {
            let dataset = load_dataset(&cfg.manifest)?;
            let features = match &cfg.reduction {
                Reduction::External(path) => external_features(path, Some(dataset.n()))?,
                _ => FeatureMatrix::read(cfg.selection_input(out_dir))?,
            };
            let partition = read_matching_partition(out_dir, &fingerprint)?;
            let coreset = read_coreset(out_dir.join(CORESET_FILE))?;
            if coreset.config_fingerprint.as_deref().is_some_and(|f| f != fingerprint) {
                return Err(Error::Config(
                    "coreset.json was produced by a different configuration".into(),
                ));
            }
            let report = build_report(ReportInputs {
                config_fingerprint: Some(&fingerprint),
                method: cfg.method_label(),
                dataset: Some(&dataset),
                features: Some(&features),
                partition: Some(&partition),
                coreset: Some(&coreset),
                timing: None,
            })?;
            let path = out_dir.join(REPORT_FILE);
            written.track(path.clone(), write_json(&path, &report))
        }
    }
}

fn read_matching_partition(out_dir: &Path, fingerprint: &str) -> Result<BinPartition> {
    let (partition, recorded) = read_partition(out_dir.join(PARTITION_FILE))?;
    if recorded.as_deref().is_some_and(|f| f != fingerprint) {
        return Err(Error::Config(
            "partition.json was produced by a different configuration".into(),
        ));
    }
    Ok(partition)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    read_json(path)
}
