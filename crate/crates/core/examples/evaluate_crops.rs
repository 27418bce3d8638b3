//! Metrics on a small hand-made prediction set, printed as summary and
//! complexity-stratified tables.

use labelprop::eval::{evaluate, render_complexity_table, render_summary_table, Prediction};
use labelprop::store::{ClassRegistry, Complexity};
use labelprop::ScoreVector;

fn main() -> labelprop::Result<()> {
    let registry = ClassRegistry::from_names([
        ("bottle", Complexity::Simple),
        ("can", Complexity::Medium),
        ("cup", Complexity::Complex),
    ])?;
    let rows = [
        ("a", [0.7, 0.2, 0.1], 0),
        ("b", [0.6, 0.3, 0.1], 1),
        ("c", [0.1, 0.8, 0.1], 1),
        ("d", [0.2, 0.2, 0.6], 2),
        ("e", [0.3, 0.1, 0.6], 0),
        ("f", [0.1, 0.1, 0.8], 2),
    ];
    let preds: Vec<Prediction> = rows
        .iter()
        .map(|(id, s, truth)| Prediction::new(*id, ScoreVector(s.to_vec()), *truth, None))
        .collect();
    let report = evaluate(&preds, &registry)?;
    print!("{}", render_summary_table(&[("demo", &report)]));
    println!();
    print!("{}", render_complexity_table(&[("demo", &report)]));
    println!();
    for (class, m) in &report.overall.per_class {
        println!(
            "{:<7} support {} precision {:.3} recall {:.3} ap {:.3}",
            registry.get(*class).unwrap().name,
            m.support,
            m.prf.precision,
            m.prf.recall,
            m.ap.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
