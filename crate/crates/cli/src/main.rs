use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmcoreset::artifacts::REPORT_FILE;
use mmcoreset::pipeline::read_report;
use mmcoreset::{
    run_pipeline, run_stage, validate_inputs, AggregationStrategy, Error, PipelineConfig,
    Reduction, SelectionMode, Stage,
};

/// Multimodal coreset selection over precomputed token embeddings.
#[derive(Parser)]
#[command(name = "mmcoreset", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that every modality in a manifest loads, is finite and aligned.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Run every stage and write partition.json, coreset.json and report.json.
    Pipeline(ConfigArgs),
    /// Load the manifest and write aggregated features (features.mmeb).
    Aggregate(ConfigArgs),
    /// Fit PCA on features.mmeb and write reduced.mmeb plus the model.
    Reduce(ConfigArgs),
    /// Partition the selection features into bins (partition.json).
    Select(ConfigArgs),
    /// Sample the coreset from partition.json (coreset.json, coreset.txt).
    Sample(ConfigArgs),
    /// Compute metrics for coreset.json and write report.json.
    Report(ConfigArgs),
}

/// Configuration file plus per-field overrides.
#[derive(Args)]
struct ConfigArgs {
    /// JSON pipeline configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for all stage artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// concat, mean or sum.
    #[arg(long)]
    aggregation: Option<AggregationStrategy>,
    /// Reduce to K dimensions with PCA.
    #[arg(long, value_name = "K", conflicts_with_all = ["reduced_features", "no_reduction"])]
    pca: Option<usize>,
    /// Use externally reduced features (MMEB file) as the selector input.
    #[arg(long, value_name = "PATH", conflicts_with = "no_reduction")]
    reduced_features: Option<PathBuf>,
    /// Select on the aggregated features directly.
    #[arg(long)]
    no_reduction: bool,
    /// Number of bins.
    #[arg(long)]
    bins: Option<usize>,
    /// Coreset fraction in (0, 1].
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// oracle or accelerated.
    #[arg(long)]
    mode: Option<SelectionMode>,
    /// Record per-stage wall-clock seconds in report.json.
    #[arg(long)]
    timings: bool,
}

impl ConfigArgs {
    fn resolve(self) -> Result<(PipelineConfig, PathBuf), Error> {
        let mut cfg = match (&self.config, &self.manifest) {
            (Some(path), _) => PipelineConfig::read(path)?,
            (None, Some(manifest)) => PipelineConfig::new(manifest),
            (None, None) => {
                return Err(Error::Config("either --config or --manifest is required".into()))
            }
        };
        if let Some(m) = self.manifest {
            cfg.manifest = m;
        }
        if let Some(a) = self.aggregation {
            cfg.aggregation = a;
        }
        if let Some(k) = self.pca {
            cfg.reduction = Reduction::Pca(k);
        }
        if let Some(p) = self.reduced_features {
            cfg.reduction = Reduction::External(p);
        }
        if self.no_reduction {
            cfg.reduction = Reduction::None;
        }
        if let Some(b) = self.bins {
            cfg.num_bins = b;
        }
        if let Some(f) = self.fraction {
            cfg.fraction = f;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if self.timings {
            cfg.record_timings = true;
        }
        let out = self
            .out
            .or_else(|| cfg.output_dir.clone())
            .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
        cfg.validate()?;
        Ok((cfg, out))
    }
}

fn stage_of(command: &Command) -> Option<Stage> {
    match command {
        Command::Aggregate(_) => Some(Stage::Aggregate),
        Command::Reduce(_) => Some(Stage::Reduce),
        Command::Select(_) => Some(Stage::Select),
        Command::Sample(_) => Some(Stage::Sample),
        Command::Report(_) => Some(Stage::Report),
        _ => None,
    }
}

/// Returns the process exit status for commands that report rather than fail.
fn run(command: Command) -> Result<u8, Error> {
    let stage = stage_of(&command);
    match command {
        Command::Validate { manifest } => {
            let diag = validate_inputs(&manifest);
            print!("{}", diag.render());
            Ok(diag.first_error().map_or(0, |e| e.exit_code() as u8))
        }
        Command::Pipeline(args) => {
            let (cfg, out) = args.resolve()?;
            let outputs = run_pipeline(&cfg, &out)?;
            println!("fingerprint {}", cfg.fingerprint()?);
            println!(
                "coreset {} of {} samples from {} bins ({})",
                outputs.coreset.len(),
                outputs.coreset.n,
                outputs.partition.num_bins(),
                outputs.report.method.label
            );
            println!(
                "quantization_error {} diversity {}",
                outputs.report.quantization_error, outputs.report.diversity
            );
            for file in &outputs.files {
                println!("wrote {}", file.display());
            }
            Ok(0)
        }
        Command::Aggregate(args)
        | Command::Reduce(args)
        | Command::Select(args)
        | Command::Sample(args)
        | Command::Report(args) => {
            let stage = stage.expect("stage subcommand");
            let (cfg, out) = args.resolve()?;
            for file in run_stage(&cfg, &out, stage)? {
                println!("wrote {}", file.display());
            }
            if stage == Stage::Report {
                let report = read_report(out.join(REPORT_FILE))?;
                println!(
                    "quantization_error {} diversity {}",
                    report.quantization_error, report.diversity
                );
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
