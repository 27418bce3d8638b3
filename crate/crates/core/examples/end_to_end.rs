//! synth -> train -> perturb -> label -> eval in one process, writing every
//! artifact the CLI would.
//!
//! cargo run --release --example end_to_end -- [config.toml]

use labelprop::pipeline::{run_all, PipelineConfig};

fn main() -> labelprop::Result<()> {
    let mut cfg = match std::env::args().nth(1) {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if std::env::args().nth(1).is_none() {
        cfg.paths.output = std::env::temp_dir().join("labelprop-end-to-end");
    }
    let outcome = run_all(&cfg)?;
    println!("artifacts in {}", cfg.paths.output.display());
    print!("{}", std::fs::read_to_string(cfg.output("eval.txt")).unwrap_or_default());
    print!("{}", std::fs::read_to_string(cfg.output("savings.txt")).unwrap_or_default());
    println!("retrieved: {:?}", outcome.counts.rows.values().map(|r| r.retrieved).collect::<Vec<_>>());
    Ok(())
}
