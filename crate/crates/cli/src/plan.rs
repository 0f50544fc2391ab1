use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cebench_core::config::Axis;
use cebench_core::recommender::{
    load_pricing, load_quotes, recommend, CandidatePlan, LatencyBasis, Objective,
    QualityConstraint, RecommendOptions, DEFAULT_BENCH_INSTANCE,
};

use crate::{load_summaries, write_atomic, CliError};

pub const RECOMMENDATION_FILE: &str = "recommendation.json";
pub const PARETO_FILE: &str = "pareto.csv";

#[derive(Debug, Clone)]
pub struct RecommendArgs {
    pub runs: PathBuf,
    pub quotes: PathBuf,
    pub pricing: Option<PathBuf>,
    /// Dollars per 1000 prompts.
    pub budget: Option<f64>,
    /// `<metric><op><value>`, e.g. `f1_macro>=0.9`.
    pub constraint: Option<String>,
    /// Comma-separated, e.g. `quality,cost` (the default) or `mae,time`.
    pub objectives: Option<String>,
    pub bench_instance: String,
    /// Scale generation latency only, instead of end-to-end latency.
    pub llm_latency: bool,
    /// Where the outputs go; defaults to `runs`.
    pub out: Option<PathBuf>,
}

impl RecommendArgs {
    pub fn new(runs: impl Into<PathBuf>, quotes: impl Into<PathBuf>) -> Self {
        Self {
            runs: runs.into(),
            quotes: quotes.into(),
            pricing: None,
            budget: None,
            constraint: None,
            objectives: None,
            bench_instance: DEFAULT_BENCH_INSTANCE.to_string(),
            llm_latency: false,
            out: None,
        }
    }
}

fn parse_objectives(text: &str) -> Result<Vec<Objective>, CliError> {
    let objectives = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Objective>, _>>()?;
    if objectives.is_empty() {
        return Err(CliError::Config("at least one objective is required".into()));
    }
    Ok(objectives)
}

/// Ranks deployment plans and writes `recommendation.json` and `pareto.csv`.
pub fn cmd_recommend(args: &RecommendArgs) -> Result<Vec<CandidatePlan>, CliError> {
    if let Some(budget) = args.budget {
        if !(budget >= 0.0) {
            return Err(CliError::Config(format!("budget must be non-negative, got {budget}")));
        }
    }
    let summaries = load_summaries(&args.runs)?;
    let quotes = load_quotes(&args.quotes)?;
    let pricing = match &args.pricing {
        Some(p) => load_pricing(p)?,
        None => Vec::new(),
    };
    let mut options = RecommendOptions {
        bench_instance: args.bench_instance.clone(),
        budget: args.budget,
        pricing,
        ..Default::default()
    };
    if let Some(c) = &args.constraint {
        options.constraint = Some(c.parse::<QualityConstraint>()?);
    }
    if let Some(o) = &args.objectives {
        options.objectives = parse_objectives(o)?;
    }
    if args.llm_latency {
        options.latency_basis = LatencyBasis::Llm;
    }
    let plans = recommend(&summaries, &quotes, &options)?;

    let out = args.out.as_deref().unwrap_or(&args.runs);
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut json = serde_json::to_string_pretty(&plans).expect("plans serialize");
    json.push('\n');
    write_atomic(&out.join(RECOMMENDATION_FILE), json.as_bytes())?;
    write_pareto_csv(&out.join(PARETO_FILE), &plans)?;
    Ok(plans)
}

const AXIS_COLUMNS: [Axis; 6] = Axis::ALL;

fn write_pareto_csv(path: &Path, plans: &[CandidatePlan]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["rank", "run_id", "model", "instance"];
    header.extend(AXIS_COLUMNS.iter().map(|a| a.as_str()));
    header.extend(["quality_metric", "quality", "est_time_s", "est_cost_per_kprompt"]);
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (rank, p) in plans.iter().enumerate() {
        let mut row = vec![
            (rank + 1).to_string(),
            p.run_id.clone(),
            p.model.clone(),
            p.instance.clone(),
        ];
        row.extend(
            AXIS_COLUMNS
                .iter()
                .map(|a| p.axes.get(a.as_str()).cloned().unwrap_or_default()),
        );
        row.push(p.quality_metric.clone());
        row.push(p.quality.to_string());
        row.push(p.est_time.to_string());
        row.push(p.est_cost.map(|c| c.to_string()).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Human-readable plan table.
pub fn format_plan_table(plans: &[CandidatePlan]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:<20} {:<10} {:>10} {:>10} {:>12}  run",
        "rank", "model", "instance", "quality", "est_time", "$/kprompt"
    );
    for (i, p) in plans.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:>4}  {:<20} {:<10} {:>10.4} {:>10.3} {:>12.4}  {}",
            i + 1,
            p.model,
            p.instance,
            p.quality,
            p.est_time,
            p.est_cost.unwrap_or(f64::NAN),
            p.run_id
        );
    }
    out
}
