//! CounterFact records, the CounterFact+ transformation and synthetic
//! fact worlds.

pub mod counterfact;
pub mod plus;
pub mod world;

pub use counterfact::{parse_counterfact, CaseRecord, RequestedRewrite, Target};
pub use plus::{edit_sentence, plus_prompt, strip_edit_prefix, to_plus, PlusCase};
pub use world::{gen_world, validate_world, Fact, FactWorld, Relation, WorldSizes};
