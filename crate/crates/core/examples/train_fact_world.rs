//! Generate a fact world, train a model on it and check that it recalls
//! the canonical facts.
//!
//! `cargo run --release --example train_fact_world -- [seed] [epochs]`

use editbench::benchmark::gen_world;
use editbench::protocol::{fact_recall, RunConfig};
use editbench::tinylm::{train, Checkpoint, TrainSpec, Tokenizer};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(0);
    let config = RunConfig::default();
    let epochs = args.next().map(|s| s.parse().unwrap()).unwrap_or(config.train.epochs);

    let world = gen_world(seed, config.world).unwrap();
    println!("{} facts, {} corpus lines", world.facts.len(), world.corpus.len());
    for line in world.corpus.iter().take(3) {
        println!("  {line}");
    }

    let tok = Tokenizer::build(&world.tokenizer_corpus()).unwrap();
    let init = Checkpoint::init(config.model.config(tok.vocab_size(), seed), tok).unwrap();
    let corpus: Vec<Vec<u32>> = world.corpus.iter().map(|l| init.tokenizer.encode_strict(l).unwrap()).collect();
    let spec = TrainSpec { seed, epochs, ..config.train };
    let (model, report) = train(&init, &corpus, &spec).unwrap();
    for (i, loss) in report.epoch_losses.iter().enumerate().filter(|(i, _)| i % 10 == 9) {
        println!("epoch {:>3}  loss {loss:.4}", i + 1);
    }
    let (hits, total) = fact_recall(&model, &world.cases).unwrap();
    println!("recall {hits}/{total}");
}
