//! Turn CounterFact records into their prefixed form: the edit sentence in
//! front of every neighborhood prompt.
//!
//! `cargo run --example counterfact_plus -- [input.json]`

use editbench::benchmark::{edit_sentence, parse_counterfact, to_plus};

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/counterfact_sample.json").into());
    let cases = parse_counterfact(&std::fs::read(path).unwrap()).unwrap();
    for case in &cases {
        println!("case {}: {}", case.case_id, edit_sentence(&case.request()).unwrap());
        let plus = to_plus(case).unwrap();
        for (before, after) in case.neighborhood_prompts.iter().zip(&plus.plus_neighborhood_prompts).take(3) {
            println!("  {before}");
            println!("  {after}");
        }
    }
}
