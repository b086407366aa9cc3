//! Logged-data collection, policy evaluation against reference anchors, and
//! random hyperparameter search.

mod collect;
mod evaluate;
mod report;
mod search;

pub use collect::{collect_dataset, CollectedData, CollectionLevel, CollectionPreset};
pub use evaluate::{
    evaluate_policy, normalize, reference_policies, run_episode, summarize, EpisodeOutcome, EvalReport, SeedResult,
};
pub use report::{read_reports, render_table, write_reports};
pub use search::{random_search, Distribution, SearchConfig, SearchSpace, SearchResult, TrialResult};
