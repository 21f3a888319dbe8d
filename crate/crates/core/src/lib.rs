//! Prompt-sensitivity testing for LLM macroeconomic forecasts.
//!
//! Backtesting an LLM on periods inside its training window invites two
//! biases: lookahead (the model quietly uses knowledge dated after the
//! stated information cutoff) and context (the model knows more about
//! in-sample periods than the prompt provides). This crate implements the
//! fake date protocols that detect both: forecasts are sampled for a real
//! retrospective date and for the same prompt with its dates shifted past
//! the model's release, and the two forecast distributions are compared with
//! a permutation test. Matching distributions are a precondition for
//! trusting in-sample accuracy numbers.
//!
//! Modules follow the pipeline:
//!
//! - [`date`] / [`data`]: calendar arithmetic and vintage-disciplined
//!   first-release ingestion;
//! - [`prompt`]: templates and the real/fake/seasonal date constructions;
//! - [`gate`]: forecast-text producers (live endpoint, replay cache,
//!   simulated model);
//! - [`parse`]: answer extraction;
//! - [`stats`]: KS statistic, permutation p-values, Wasserstein distance,
//!   Bonferroni bound;
//! - [`testkit`]: the protocols over the quarterly grid, the
//!   date-sensitivity scan, triple screening;
//! - [`report`]: CSV/SVG emission.

pub mod data;
pub mod date;
pub mod gate;
pub mod parse;
pub mod prompt;
pub mod report;
pub mod stats;
pub mod testkit;

mod seeding;

pub use data::{quarterly_grid, snapshot_at, MacroSnapshot, VintageSeries, VintageStore};
pub use date::DateStamp;
pub use gate::{sample_forecasts, Gate, GateRequest, SimulatedGateSpec};
pub use parse::{extract_forecast, ForecastDistribution, ForecastSample};
pub use prompt::{
    fake_prompt, real_prompt, render_prompt, seasonal_fake_date, PromptComponents, TemplateSet,
    VariableKind,
};
pub use stats::{
    bonferroni_bound, ks_statistic, permutation_pvalue, wasserstein, ComparisonResult, Sample,
    StatKind,
};
pub use testkit::{
    assumption2_scan, build_gate, fake_date_test_i, fake_date_test_ii, family_test,
    max_wasserstein_pair, triple_screen, Decision, PValueGrid, Protocol, RunConfig, RunManifest,
    TestOutcome,
};
