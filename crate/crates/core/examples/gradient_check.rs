//! Compare analytic gradients with central finite differences on a small random head.

use labelprop::hopfield::{gradients, loss, Bank, HopfieldHead, Hyperparams};
use labelprop::linalg::Matrix;
use labelprop::rng::StreamRng;

fn random(rng: &mut StreamRng, rows: usize, cols: usize, sd: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| sd * rng.normal())
}

fn main() -> labelprop::Result<()> {
    let (d, p, c, m, n) = (8, 4, 5, 2, 3);
    let mut rng = StreamRng::new(7, 0, 0);
    let banks = (0..m)
        .map(|_| Bank {
            w_q: random(&mut rng, d, p, (1.0 / d as f64).sqrt()),
            w_k: random(&mut rng, d, p, (1.0 / d as f64).sqrt()),
            y: random(&mut rng, c, d, 1.0),
        })
        .collect();
    let head = HopfieldHead::from_banks("demo", 0.5, banks)?;
    let x = random(&mut rng, n, d, 1.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
    let hp = Hyperparams::default();

    let analytic = gradients(&head, &x, &labels, &hp)?.flatten();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut idx = 0;
    for b in 0..m {
        for which in 0..3 {
            let len = {
                let bank = &head.banks[b];
                [&bank.w_q, &bank.w_k, &bank.y][which].as_slice().len()
            };
            for i in 0..len {
                let eval = |delta: f64| -> labelprop::Result<f64> {
                    let mut probe = head.clone();
                    let bank = &mut probe.banks[b];
                    let target = match which {
                        0 => &mut bank.w_q,
                        1 => &mut bank.w_k,
                        _ => &mut bank.y,
                    };
                    target.as_mut_slice()[i] += delta;
                    Ok(loss(&probe, &x, &labels, &hp)?.total)
                };
                let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
                let a = analytic[idx];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
                idx += 1;
            }
        }
    }
    println!("{idx} parameters checked, worst relative error {worst:.3e}");
    Ok(())
}
