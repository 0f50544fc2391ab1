//! Deployment planning over measured runs and priced hardware.

mod catalog;
mod cost;
mod pareto;
mod plan;

pub use catalog::{load_pricing, load_quotes, InstanceQuote, PricingEntry, BYTES_PER_GB};
pub use cost::{estimate_cost_per_kprompt, estimate_latency, online_cost_per_prompt};
pub use pareto::{dominates, non_dominated};
pub use plan::{
    candidate_plans, feasible, pareto_front, recommend, CandidatePlan, ConstraintOp,
    LatencyBasis, Objective, QualityConstraint, RecommendOptions, DEFAULT_BENCH_INSTANCE,
    ONLINE_INSTANCE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("no run summaries to plan from")]
    NoSummaries,
    #[error("no instance quotes")]
    NoQuotes,
    #[error("no feasible plan remains after filtering {candidates} candidates")]
    NoFeasiblePlans { candidates: usize },
    #[error("at least one objective is required")]
    NoObjectives,
    #[error("benchmark instance `{0}` is not in the quote catalog")]
    UnknownBenchInstance(String),
    #[error("no quality metric found in the summaries")]
    NoQualityMetric,
    #[error("plan `{run_id}` on `{instance}` lacks objective `{objective}`")]
    MissingObjective {
        run_id: String,
        instance: String,
        objective: String,
    },
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("invalid objective `{0}`")]
    InvalidObjective(String),
    #[error("invalid constraint `{0}`; expected <metric><op><value> with op one of >=, <=, >, <")]
    InvalidConstraint(String),
    #[error("catalog: {0}")]
    Catalog(String),
}
