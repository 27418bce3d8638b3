//! Nearest-prototype cosine classification from a handful of representatives per class.
//!
//! cargo run --example cosine_baseline -- [k]

use labelprop::cosine::PrototypeBank;
use labelprop::store::Split;
use labelprop::synth::{synth_generate, SyntheticConfig};

fn main() -> labelprop::Result<()> {
    let k = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let cfg = SyntheticConfig {
        cluster_sigma: 1.0,
        ..SyntheticConfig::default()
    };
    let store = synth_generate(&cfg)?;

    for space in store.spaces().keys() {
        let bank = PrototypeBank::build(&store, space, k, cfg.seed)?;
        let mut total = 0;
        let mut correct = 0;
        for (record, class) in store.labeled_in(space, Split::Validation)? {
            total += 1;
            if bank.classify(&record.vector)?.predicted() == class {
                correct += 1;
            }
        }
        println!(
            "{space}: k={k}, accuracy {:.3} ({correct}/{total})",
            correct as f64 / total as f64
        );
    }
    Ok(())
}
