//! Campaign orchestration: configuration, seeded parallel snapshots,
//! aggregation and persistence.

mod campaign;
mod config;
mod output;
mod recipes;
mod stats;

pub use campaign::{run_campaign, run_snapshot, CampaignResult, SnapshotResult, StrategyResult};
pub use config::{CampaignConfig, PilotScheme, StrategySpec};
pub use output::{
    read_results_csv, summarize, write_outputs, CampaignSummary, ResultRow, StrategySummary,
};
pub use recipes::{recipe, RECIPE_NAMES};
pub use stats::CdfSummary;
