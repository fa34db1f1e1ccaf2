//! A compact GPT-2 style decoder-only transformer with hand-written
//! backpropagation, activation tracing and a stable checkpoint format.

pub mod config;
pub mod gradcheck;
pub mod io;
pub mod model;
pub mod params;
pub mod tokenizer;
pub mod train;

pub use config::ModelConfig;
pub use model::{
    FinalTokenNll, HiddenGrad, Intervention, MlpGrads, MlpSite, NextTokenDistribution, ParamGrads,
    TraceRecord,
};
pub use params::{BlockId, Checkpoint, LayerParams};
pub use tokenizer::{split_units, Tokenizer};
pub use train::{train, TrainReport, TrainSpec};
