//! Generate a three-space synthetic store, save it, reload it and print a summary.
//!
//! cargo run --example synth_store -- [seed]

use labelprop::store::{EmbeddingStore, Split};
use labelprop::synth::{synth_generate, SyntheticConfig};

fn main() -> labelprop::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = SyntheticConfig {
        seed,
        ..SyntheticConfig::default()
    };
    let store = synth_generate(&cfg)?;

    let dir = std::env::temp_dir().join("labelprop-synth-store");
    let path = dir.join("store.jsonl");
    store.save(&path)?;
    let reloaded = EmbeddingStore::load(&path)?;
    assert_eq!(reloaded.checksum(), store.checksum());

    println!("store: {}", path.display());
    println!("checksum: {}", store.checksum());
    for (name, space) in store.spaces() {
        println!("space {name}: dim {}, {} records", space.dim(), space.records().len());
    }
    for split in Split::ALL {
        println!("{:<15} {} crops", split.as_str(), store.split(split).len());
    }
    for class in store.registry().classes() {
        println!("class {} {:<9} {}", class.id, class.name, class.complexity);
    }
    Ok(())
}
