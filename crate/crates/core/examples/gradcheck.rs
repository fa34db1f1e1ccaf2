//! Finite-difference check of the analytic gradients on a fresh model.

use editbench::protocol::{cmd_gradcheck, fresh_model};

fn main() {
    let seed = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(0);
    let ckpt = fresh_model(seed).unwrap();
    for r in cmd_gradcheck(&ckpt, 100, seed).unwrap() {
        println!("{:<32} {:.3e} {}", r.target, r.max_relative_error, if r.passed() { "ok" } else { "FAIL" });
    }
}
