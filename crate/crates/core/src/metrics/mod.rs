//! Neighborhood specificity metrics and bootstrap intervals.

pub mod bootstrap;
pub mod neighborhood;

pub use bootstrap::{bootstrap_ci, AggregateStat};
pub use neighborhood::{
    evaluate_prompt, first_token_prob, mean_nkl, metric_values, nkl, nm, ns, Metric, PromptKey, PromptMeasurement,
    Variant, PROB_FLOOR,
};
