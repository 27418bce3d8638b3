//! Three spaces that each confuse different class pairs: single heads miss
//! what the averaged ensemble recovers.

use std::collections::BTreeMap;

use labelprop::ensemble::EnsemblePredictor;
use labelprop::hopfield::{train_head, HeadConfig, HopfieldHead, Hyperparams};
use labelprop::store::Split;
use labelprop::synth::{synth_generate, SyntheticConfig};

fn main() -> labelprop::Result<()> {
    let spaces = ["space_a", "space_b", "space_c"];
    let cfg = SyntheticConfig {
        cluster_sigma: 1.0,
        samples_per_class_per_split: BTreeMap::from([(Split::Representative, 5), (Split::Train, 100), (Split::Validation, 50)]),
        confusion_pairs: BTreeMap::from([
            ("space_a".to_string(), vec![(0, 1), (2, 3)]),
            ("space_b".to_string(), vec![(4, 5), (6, 7)]),
            ("space_c".to_string(), vec![(8, 9), (0, 2)]),
        ]),
        confusion_blend: 1.0,
        ..SyntheticConfig::default()
    };
    let store = synth_generate(&cfg)?;

    let mut heads = Vec::new();
    for space in spaces {
        let head = HopfieldHead::init(&store, space, &HeadConfig::default())?;
        heads.push(train_head(&head, &store, Split::Train, &Hyperparams::default())?.0);
    }
    let ensemble = EnsemblePredictor::new(store.registry().clone(), heads)?;

    let ids = store.split(Split::Validation);
    let mut single = [0usize; 3];
    let mut joint = 0usize;
    for id in ids {
        let truth = store.class_of(id).expect("validation crops are labeled");
        let queries: BTreeMap<String, Vec<f64>> = spaces
            .iter()
            .map(|s| (s.to_string(), store.space(s).unwrap().get(id).unwrap().vector.clone()))
            .collect();
        for (i, head) in ensemble.heads().iter().enumerate() {
            single[i] += usize::from(head.predict(&queries[&head.space])?.predicted() == truth);
        }
        joint += usize::from(ensemble.predict(&queries)?.predicted() == truth);
    }
    let n = ids.len() as f64;
    for (space, ok) in spaces.iter().zip(single) {
        println!("{space:<9} accuracy {:.3}", ok as f64 / n);
    }
    println!("ensemble  accuracy {:.3}", joint as f64 / n);
    Ok(())
}
