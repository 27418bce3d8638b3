//! Annotation time saved for seven venues' retrieved/ground-truth counts.

use labelprop::savings::{compute_savings, render_savings_table, RetrievalCounts, TimeModel};

const VENUES: [(&str, [(u64, u64); 3]); 7] = [
    ("Bonn", [(2850, 4065), (2425, 3203), (179, 732)]),
    ("Bordeaux", [(1315, 2471), (916, 1703), (86, 1714)]),
    ("Eindhoven", [(2305, 3445), (1095, 1721), (173, 342)]),
    ("Kassel", [(1581, 2230), (1356, 1858), (0, 144)]),
    ("Cologne", [(1509, 2340), (1335, 2082), (73, 253)]),
    ("Nuernberg", [(1484, 2120), (1538, 2115), (117, 353)]),
    ("Salvador", [(1992, 2900), (1842, 2962), (335, 929)]),
];

fn main() -> labelprop::Result<()> {
    let tm = TimeModel::default();
    let reports = VENUES
        .iter()
        .map(|(name, rows)| Ok((*name, compute_savings(&RetrievalCounts::from_rows(*rows)?, &tm)?)))
        .collect::<labelprop::Result<Vec<_>>>()?;
    let rows: Vec<(&str, &_)> = reports.iter().map(|(n, r)| (*n, r)).collect();
    print!("{}", render_savings_table(&rows));
    Ok(())
}
