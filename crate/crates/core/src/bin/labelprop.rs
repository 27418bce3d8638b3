use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use labelprop::pipeline::{self, AnnotationSet, PipelineConfig};
use labelprop::savings::RetrievalCounts;
use labelprop::store::EmbeddingStore;
use labelprop::fsutil::write_text;
use labelprop::Error;

/// Hopfield-memory label propagation over crop embeddings.
///
/// Log verbosity is read from LABELPROP_LOG (e.g. `info`, `debug`).
#[derive(Parser)]
#[command(name = "labelprop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for generation, initialization, shuffling and perturbation.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated embedding spaces to use.
    #[arg(long, value_delimiter = ',')]
    spaces: Option<Vec<String>>,
    /// Fraction of proposals to drop in `perturb`.
    #[arg(long)]
    drop_rate: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic embedding store with truth and proposal sets.
    Synth(Common),
    /// Train one Hopfield head per space and write the ensemble manifest.
    Train(Common),
    /// Label proposals with the trained heads.
    Label {
        #[command(flatten)]
        common: Common,
        /// Proposal annotation file [default: <out>/proposals.json].
        #[arg(long)]
        proposals: Option<PathBuf>,
    },
    /// Drop proposals (and optionally relabel) to mimic weaker segment proposals.
    Perturb {
        #[command(flatten)]
        common: Common,
        /// Annotation file to perturb [default: <out>/proposals.json].
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Evaluate labeled proposals against ground truth and estimate time saved.
    Eval {
        #[command(flatten)]
        common: Common,
        /// [default: <out>/labeled.json]
        #[arg(long)]
        labeled: Option<PathBuf>,
        /// [default: <out>/truth.json]
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Savings table for retrieved/ground-truth counts given as JSON.
    ReportSavings {
        #[command(flatten)]
        common: Common,
        /// JSON object `{"Simple": {"retrieved": .., "ground_truth_total": ..}, ...}`.
        #[arg(long)]
        counts: PathBuf,
        /// Dataset name shown in the table.
        #[arg(long, default_value = "dataset")]
        name: String,
    },
}

fn config(common: &Common) -> labelprop::Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_overrides(common.seed, common.spaces.clone(), common.drop_rate, common.out.clone())?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> labelprop::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> labelprop::Result<()> {
    match cli.command {
        Command::Synth(common) => {
            let cfg = config(&common)?;
            print_json(&pipeline::cmd_synth(&cfg)?)
        }
        Command::Train(common) => {
            let cfg = config(&common)?;
            for r in pipeline::cmd_train(&cfg)? {
                println!(
                    "{}\ttrain_accuracy={:.4}\tloss={:.6}",
                    r.space,
                    r.last().train_accuracy,
                    r.last().loss.total
                );
            }
            Ok(())
        }
        Command::Label { common, proposals } => {
            let cfg = config(&common)?;
            let store = EmbeddingStore::load(cfg.store_path())?;
            let input = AnnotationSet::load(proposals.unwrap_or_else(|| cfg.output("proposals.json")))?;
            let labeled = pipeline::cmd_label(&cfg, &input, &store)?;
            let path = cfg.output("labeled.json");
            labeled.save(&path)?;
            println!("labeled {} proposals -> {}", labeled.annotations.len(), path.display());
            Ok(())
        }
        Command::Perturb { common, input } => {
            let cfg = config(&common)?;
            let input = AnnotationSet::load(input.unwrap_or_else(|| cfg.output("proposals.json")))?;
            let out = pipeline::cmd_perturb(&cfg, &input)?;
            let path = cfg.output("perturbed.json");
            out.save(&path)?;
            println!(
                "kept {} of {} proposals -> {}",
                out.annotations.len(),
                input.annotations.len(),
                path.display()
            );
            Ok(())
        }
        Command::Eval { common, labeled, truth } => {
            let cfg = config(&common)?;
            let store = EmbeddingStore::load(cfg.store_path())?;
            let labeled = AnnotationSet::load(labeled.unwrap_or_else(|| cfg.output("labeled.json")))?;
            let truth = AnnotationSet::load(truth.unwrap_or_else(|| cfg.output("truth.json")))?;
            pipeline::cmd_eval(&cfg, &labeled, &truth, store.registry())?;
            print!("{}", std::fs::read_to_string(cfg.output("eval.txt")).unwrap_or_default());
            print!("{}", std::fs::read_to_string(cfg.output("savings.txt")).unwrap_or_default());
            Ok(())
        }
        Command::ReportSavings { common, counts, name } => {
            let cfg = config(&common)?;
            let text = std::fs::read_to_string(&counts).map_err(|e| Error::Io {
                path: counts.clone(),
                source: e,
            })?;
            let counts: RetrievalCounts = serde_json::from_str(&text)?;
            let (report, table) = pipeline::cmd_report_savings(&name, &counts, &cfg.time_model)?;
            print!("{table}");
            write_text(cfg.output("savings.txt"), &table)?;
            write_text(cfg.output("savings.json"), &serde_json::to_string_pretty(&report)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LABELPROP_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(2)
        }
    }
}
