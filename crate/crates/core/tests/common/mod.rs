#![allow(dead_code)]

use std::path::{Path, PathBuf};

use editbench::benchmark::FactWorld;
use editbench::protocol::{cmd_gen_world, cmd_train, RunConfig, TrainSummary};
use editbench::tinylm::{io, Checkpoint};

pub const SAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/counterfact_sample.json");
pub const PLUS_SAMPLE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/counterfact_plus_sample.json");
pub const BIN: &str = env!("CARGO_BIN_EXE_editbench");

pub struct Fixture {
    pub dir: PathBuf,
    pub world: FactWorld,
    pub ckpt: Checkpoint,
    pub summary: TrainSummary,
}

impl Fixture {
    pub fn world_path(&self) -> PathBuf {
        self.dir.join("world.json")
    }

    pub fn model_path(&self) -> PathBuf {
        self.dir.join("model.tlm")
    }
}

/// A fresh scratch directory that outlives the test.
pub fn scratch(name: &str) -> PathBuf {
    let base = Path::new(env!("CARGO_TARGET_TMPDIR"));
    std::fs::create_dir_all(base).unwrap();
    tempfile::Builder::new().prefix(name).tempdir_in(base).unwrap().keep()
}

/// Generates and trains a world through the same functions the binary uses.
pub fn build(seed: u64, config: &RunConfig) -> Fixture {
    let dir = scratch(&format!("world{seed}-"));
    let world = cmd_gen_world(seed, config, &dir).unwrap();
    let summary = cmd_train(&dir.join("world.json"), config, seed, &dir).unwrap();
    let ckpt = io::load(dir.join("model.tlm")).unwrap();
    Fixture { dir, world, ckpt, summary }
}

/// The default configuration: the acceptance fixture.
pub fn trained(seed: u64) -> Fixture {
    build(seed, &RunConfig::default())
}

/// A briefly trained model, for tests that need structure but not recall.
pub fn quick(seed: u64) -> Fixture {
    let mut c = RunConfig::default();
    c.train.epochs = 4;
    c.min_recall = 0.0;
    build(seed, &c)
}
