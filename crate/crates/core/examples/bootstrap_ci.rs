//! Percentile bootstrap intervals, and how they narrow with more samples.

use editbench::metrics::bootstrap_ci;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [20, 200, 2000] {
        let values: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.7) { 1.0 } else { 0.0 }).collect();
        let s = bootstrap_ci("NS", &values, 1000, 0.99, 7).unwrap();
        println!("n {n:>4}: mean {:.3}  99% [{:.3}, {:.3}]", s.mean, s.ci_low, s.ci_high);
    }
    let c = bootstrap_ci("NKL", &[0.25; 10], 1000, 0.99, 7).unwrap();
    println!("constant: [{}, {}]", c.ci_low, c.ci_high);
}
