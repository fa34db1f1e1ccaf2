#![allow(dead_code)]

use std::path::PathBuf;

use editbench::benchmark::FactWorld;
use editbench::protocol::{cmd_gen_world, cmd_train, RunConfig};
use editbench::tinylm::{io, Checkpoint};

pub fn example_dir() -> PathBuf {
    PathBuf::from(std::env::var("EDITBENCH_EXAMPLE_DIR").unwrap_or_else(|_| "out/example-world0".into()))
}

/// World 0 and a model trained on it, cached under `out/example-world0`.
/// `EDITBENCH_EPOCHS` shortens training for a quick look.
pub fn world_and_model() -> (FactWorld, Checkpoint) {
    let dir = example_dir();
    let mut config = RunConfig::default();
    if let Ok(e) = std::env::var("EDITBENCH_EPOCHS") {
        config.train.epochs = e.parse().expect("EDITBENCH_EPOCHS");
        config.min_recall = 0.0;
    }
    let model = dir.join("model.tlm");
    if !model.exists() {
        eprintln!("training into {} ({} epochs)", dir.display(), config.train.epochs);
        cmd_gen_world(0, &config, &dir).unwrap();
        let s = cmd_train(&dir.join("world.json"), &config, 0, &dir).unwrap();
        eprintln!("recall {}/{}", s.recall_hits, s.recall_total);
    }
    let world = FactWorld::from_json(&std::fs::read(dir.join("world.json")).unwrap()).unwrap();
    (world, io::load(model).unwrap())
}
