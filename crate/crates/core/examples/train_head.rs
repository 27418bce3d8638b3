//! Initialize a Hopfield head from representatives, train it, and compare
//! validation accuracy before and after.

use labelprop::hopfield::{train_head, HeadConfig, HopfieldHead, Hyperparams};
use labelprop::store::Split;
use labelprop::synth::{synth_generate, SyntheticConfig};

fn accuracy(head: &HopfieldHead, store: &labelprop::store::EmbeddingStore) -> labelprop::Result<f64> {
    let mut n = 0;
    let mut ok = 0;
    for (record, class) in store.labeled_in(&head.space, Split::Validation)? {
        n += 1;
        ok += usize::from(head.predict(&record.vector)?.predicted() == class);
    }
    Ok(ok as f64 / n as f64)
}

fn main() -> labelprop::Result<()> {
    let cfg = SyntheticConfig {
        cluster_sigma: 1.0,
        ..SyntheticConfig::default()
    };
    let store = synth_generate(&cfg)?;
    let head = HopfieldHead::init(&store, "space_a", &HeadConfig::default())?;
    let (trained, report) = train_head(&head, &store, Split::Train, &Hyperparams::default())?;

    println!("epoch  loss      mse       intra     inter     train_acc");
    for e in &report.epochs {
        println!(
            "{:>5}  {:.6}  {:.6}  {:.6}  {:.6}  {:.3}",
            e.epoch, e.loss.total, e.loss.mse, e.loss.intra, e.loss.inter, e.train_accuracy
        );
    }
    println!("validation accuracy: init {:.3}, trained {:.3}", accuracy(&head, &store)?, accuracy(&trained, &store)?);

    let path = std::env::temp_dir().join("labelprop-train-head").join("space_a.json");
    trained.save(&path)?;
    println!("head written to {}", path.display());
    Ok(())
}
