//! Model editing and specificity evaluation at desk scale.
//!
//! * [`tinylm`]: a small trainable transformer with MLP key/value tracing.
//! * [`editors`]: rank-one (ROME-style), multi-layer spread, and
//!   L∞-constrained fine-tuning editors.
//! * [`benchmark`]: CounterFact records, the prepend-the-edit transformation,
//!   and a synthetic fact world generator.
//! * [`metrics`]: neighborhood score, magnitude and KL divergence, with
//!   percentile bootstrap intervals.
//! * [`protocol`]: the end-to-end edit/evaluate/report pipeline behind the
//!   `editbench` binary.

pub mod benchmark;
pub mod editors;
pub mod error;
pub mod metrics;
pub mod protocol;
pub mod tinylm;

pub use error::{Error, Result};
