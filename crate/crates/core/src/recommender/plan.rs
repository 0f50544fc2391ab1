use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    estimate_cost_per_kprompt, estimate_latency, non_dominated, online_cost_per_prompt,
    InstanceQuote, PricingEntry, RecommendError,
};
use crate::evaluators::MetricName;
use crate::monitor::RunSummary;

/// Quote name of the machine the benchmarks ran on.
pub const DEFAULT_BENCH_INSTANCE: &str = "bench";
/// Instance name given to per-token priced service plans.
pub const ONLINE_INSTANCE: &str = "online";

/// One (run, instance) deployment option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePlan {
    pub run_id: String,
    pub axes: BTreeMap<String, String>,
    pub model: String,
    pub instance: String,
    /// Seconds per prompt.
    pub est_time: f64,
    /// Dollars per 1000 prompts; `None` for infeasible plans.
    pub est_cost: Option<f64>,
    pub quality_metric: String,
    pub quality: f64,
    pub metrics: BTreeMap<String, f64>,
    pub feasible: bool,
}

impl CandidatePlan {
    fn objective(&self, objective: &Objective) -> Result<f64, RecommendError> {
        let missing = || RecommendError::MissingObjective {
            run_id: self.run_id.clone(),
            instance: self.instance.clone(),
            objective: objective.to_string(),
        };
        let signed = |name: &str, v: f64| match name.parse::<MetricName>() {
            Ok(m) if !m.lower_is_better() => -v,
            _ => v,
        };
        let value = match objective {
            Objective::Quality => signed(&self.quality_metric, self.quality),
            Objective::Metric(m) => signed(m.as_str(), *self.metrics.get(m.as_str()).ok_or_else(missing)?),
            Objective::Cost => self.est_cost.ok_or_else(missing)?,
            Objective::Time => self.est_time,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(missing())
        }
    }
}

/// A minimized plan field. Larger-is-better metrics are negated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// The plan's selected quality metric.
    Quality,
    Metric(MetricName),
    Cost,
    Time,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Quality => f.write_str("quality"),
            Objective::Metric(m) => f.write_str(m.as_str()),
            Objective::Cost => f.write_str("cost"),
            Objective::Time => f.write_str("time"),
        }
    }
}

impl FromStr for Objective {
    type Err = RecommendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "quality" => Ok(Objective::Quality),
            "cost" | "est_cost" => Ok(Objective::Cost),
            "time" | "est_time" | "latency" => Ok(Objective::Time),
            other => other
                .parse()
                .map(Objective::Metric)
                .map_err(|_| RecommendError::InvalidObjective(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintOp {
    Ge,
    Le,
    Gt,
    Lt,
}

impl ConstraintOp {
    fn as_str(self) -> &'static str {
        match self {
            ConstraintOp::Ge => ">=",
            ConstraintOp::Le => "<=",
            ConstraintOp::Gt => ">",
            ConstraintOp::Lt => "<",
        }
    }
}

/// A bound on one metric, e.g. `f1_macro>=0.9`.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityConstraint {
    pub metric: MetricName,
    pub op: ConstraintOp,
    pub bound: f64,
}

impl QualityConstraint {
    pub fn admits(&self, value: f64) -> bool {
        match self.op {
            ConstraintOp::Ge => value >= self.bound,
            ConstraintOp::Le => value <= self.bound,
            ConstraintOp::Gt => value > self.bound,
            ConstraintOp::Lt => value < self.bound,
        }
    }
}

impl fmt::Display for QualityConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.metric, self.op.as_str(), self.bound)
    }
}

impl FromStr for QualityConstraint {
    type Err = RecommendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || RecommendError::InvalidConstraint(s.to_string());
        let (at, op, len) = [
            (">=", ConstraintOp::Ge),
            ("<=", ConstraintOp::Le),
            (">", ConstraintOp::Gt),
            ("<", ConstraintOp::Lt),
        ]
        .iter()
        .find_map(|(tok, op)| s.find(tok).map(|at| (at, *op, tok.len())))
        .ok_or_else(invalid)?;
        let metric = s[..at].trim().parse().map_err(|_| invalid())?;
        let bound: f64 = s[at + len..].trim().parse().map_err(|_| invalid())?;
        if !bound.is_finite() {
            return Err(invalid());
        }
        Ok(Self { metric, op, bound })
    }
}

/// Which measured latency is scaled to other hardware.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LatencyBasis {
    #[default]
    EndToEnd,
    /// Generation time only, leaving retrieval out of the scaling.
    Llm,
}

#[derive(Debug, Clone)]
pub struct RecommendOptions {
    pub bench_instance: String,
    /// Dollars per 1000 prompts.
    pub budget: Option<f64>,
    pub constraint: Option<QualityConstraint>,
    pub objectives: Vec<Objective>,
    /// Defaults to the constraint's metric, else the first of mae, f1_macro,
    /// f1_micro, specificity present in the summaries.
    pub quality_metric: Option<MetricName>,
    /// Models listed here are planned as online services instead of on quotes.
    pub pricing: Vec<PricingEntry>,
    pub latency_basis: LatencyBasis,
}

impl Default for RecommendOptions {
    fn default() -> Self {
        Self {
            bench_instance: DEFAULT_BENCH_INSTANCE.to_string(),
            budget: None,
            constraint: None,
            objectives: vec![Objective::Quality, Objective::Cost],
            quality_metric: None,
            pricing: Vec::new(),
            latency_basis: LatencyBasis::EndToEnd,
        }
    }
}

/// True iff the run's peak GPU memory fits the instance. An unrecorded peak is treated as not fitting.
pub fn feasible(summary: &RunSummary, quote: &InstanceQuote) -> bool {
    match summary.peak_gpu_memory {
        Some(peak) => peak as f64 <= quote.gpu_memory_bytes(),
        None => {
            log::warn!(
                "run {} has no recorded GPU memory peak; treating it as infeasible on {}",
                summary.run_id,
                quote.name
            );
            false
        }
    }
}

/// Non-dominated plans under `objectives`, in input order.
pub fn pareto_front(
    plans: &[CandidatePlan],
    objectives: &[Objective],
) -> Result<Vec<CandidatePlan>, RecommendError> {
    if objectives.is_empty() {
        return Err(RecommendError::NoObjectives);
    }
    let points = plans
        .iter()
        .map(|p| objectives.iter().map(|o| p.objective(o)).collect())
        .collect::<Result<Vec<Vec<f64>>, _>>()?;
    Ok(non_dominated(&points)
        .into_iter()
        .map(|i| plans[i].clone())
        .collect())
}

fn pick_quality_metric(
    summaries: &[RunSummary],
    options: &RecommendOptions,
) -> Result<MetricName, RecommendError> {
    if let Some(m) = options.quality_metric {
        return Ok(m);
    }
    if let Some(c) = &options.constraint {
        return Ok(c.metric);
    }
    [
        MetricName::Mae,
        MetricName::F1Macro,
        MetricName::F1Micro,
        MetricName::Specificity,
    ]
    .into_iter()
    .find(|m| summaries.iter().any(|s| s.metric(m.as_str()).is_some()))
    .ok_or(RecommendError::NoQualityMetric)
}

/// Every (summary × quote) plan plus one online plan per priced model,
/// with feasibility marked but nothing filtered.
pub fn candidate_plans(
    summaries: &[RunSummary],
    quotes: &[InstanceQuote],
    options: &RecommendOptions,
) -> Result<Vec<CandidatePlan>, RecommendError> {
    if summaries.is_empty() {
        return Err(RecommendError::NoSummaries);
    }
    let metric = pick_quality_metric(summaries, options)?;
    let needs_quotes = summaries
        .iter()
        .any(|s| !options.pricing.iter().any(|p| p.model == s.model));
    let bench = if needs_quotes {
        if quotes.is_empty() {
            return Err(RecommendError::NoQuotes);
        }
        Some(
            quotes
                .iter()
                .find(|q| q.name == options.bench_instance)
                .ok_or_else(|| RecommendError::UnknownBenchInstance(options.bench_instance.clone()))?,
        )
    } else {
        None
    };

    let mut plans = Vec::new();
    for summary in summaries {
        let Some(quality) = summary.metric(metric.as_str()) else {
            log::warn!("run {} has no {metric}; skipping", summary.run_id);
            continue;
        };
        let measured = match options.latency_basis {
            LatencyBasis::EndToEnd => summary.mean_latency_s,
            LatencyBasis::Llm => summary.mean_latency_llm_s,
        };
        let Some(measured) = measured.filter(|t| *t > 0.0) else {
            log::warn!("run {} has no positive latency; skipping", summary.run_id);
            continue;
        };
        let plan = |instance: &str, est_time: f64, est_cost: Option<f64>, feasible: bool| {
            CandidatePlan {
                run_id: summary.run_id.clone(),
                axes: summary.axes.clone(),
                model: summary.model.clone(),
                instance: instance.to_string(),
                est_time,
                est_cost,
                quality_metric: metric.as_str().to_string(),
                quality,
                metrics: summary.metrics.clone(),
                feasible,
            }
        };

        if let Some(pricing) = options.pricing.iter().find(|p| p.model == summary.model) {
            let per_prompt =
                online_cost_per_prompt(summary.mean_tokens_in(), summary.mean_tokens_out(), pricing);
            plans.push(plan(ONLINE_INSTANCE, measured, Some(1000.0 * per_prompt), true));
            continue;
        }
        let bench = bench.expect("bench quote resolved when local runs exist");
        for quote in quotes {
            let est_time = estimate_latency(measured, bench.tflops, quote.tflops)?;
            if feasible(summary, quote) {
                let cost = estimate_cost_per_kprompt(est_time, quote.price_per_hour)?;
                plans.push(plan(&quote.name, est_time, Some(cost), true));
            } else {
                plans.push(plan(&quote.name, est_time, None, false));
            }
        }
    }
    Ok(plans)
}

/// Feasible plans within budget and constraint, reduced to the Pareto
/// front and sorted by estimated cost.
pub fn recommend(
    summaries: &[RunSummary],
    quotes: &[InstanceQuote],
    options: &RecommendOptions,
) -> Result<Vec<CandidatePlan>, RecommendError> {
    if options.objectives.is_empty() {
        return Err(RecommendError::NoObjectives);
    }
    let candidates = candidate_plans(summaries, quotes, options)?;
    let total = candidates.len();
    let kept: Vec<CandidatePlan> = candidates
        .into_iter()
        .filter(|p| p.feasible)
        .filter(|p| match (options.budget, p.est_cost) {
            (Some(budget), Some(cost)) => cost <= budget,
            _ => true,
        })
        .filter(|p| match &options.constraint {
            Some(c) => p
                .metrics
                .get(c.metric.as_str())
                .is_some_and(|v| c.admits(*v)),
            None => true,
        })
        .collect();
    if kept.is_empty() {
        return Err(RecommendError::NoFeasiblePlans { candidates: total });
    }
    let mut front = pareto_front(&kept, &options.objectives)?;
    front.sort_by(|a, b| {
        a.est_cost
            .unwrap_or(f64::INFINITY)
            .total_cmp(&b.est_cost.unwrap_or(f64::INFINITY))
    });
    Ok(front)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GB: u64 = 1 << 30;

    fn summary(run_id: &str, model: &str, mae: f64, latency: f64, peak_gb: Option<u64>) -> RunSummary {
        RunSummary {
            run_id: run_id.into(),
            axes: BTreeMap::from([("model".to_string(), model.to_string())]),
            model: model.into(),
            n_prompts: 10,
            n_errors: 0,
            metrics: BTreeMap::from([("mae".to_string(), mae)]),
            mean_latency_s: Some(latency),
            p95_latency_s: Some(latency),
            mean_latency_llm_s: Some(latency),
            peak_gpu_memory: peak_gb.map(|g| g * GB),
            peak_host_memory: None,
            tokens_in_total: 12760,
            tokens_out_total: 100,
            token_counts_exact: true,
            valid_answer_rate: 1.0,
        }
    }

    fn quotes() -> Vec<InstanceQuote> {
        vec![
            InstanceQuote::new("G6", "L4", 16.0, 30.29, 1.172),
            InstanceQuote::new("bench", "A100", 80.0, 77.97, 4.777),
        ]
    }

    #[test]
    fn feasibility_by_memory() {
        let big = summary("a", "llama3:70b", 1.0, 1.0, Some(40));
        assert!(!feasible(&big, &quotes()[0]));
        assert!(feasible(&big, &quotes()[1]));
        assert!(feasible(&summary("b", "m", 1.0, 1.0, Some(0)), &quotes()[0]));
        assert!(!feasible(&summary("c", "m", 1.0, 1.0, None), &quotes()[1]));
    }

    #[test]
    fn infeasible_plans_carry_no_cost() {
        let plans = candidate_plans(
            &[summary("a", "big", 1.0, 2.0, Some(40))],
            &quotes(),
            &RecommendOptions::default(),
        )
        .unwrap();
        assert_eq!(plans.len(), 2);
        assert!(!plans[0].feasible && plans[0].est_cost.is_none());
        assert!(plans[1].feasible && plans[1].est_cost.is_some());
    }

    #[test]
    fn budget_and_empty_results() {
        let s = [summary("a", "m", 2.0, 7.06, Some(30))];
        let opts = RecommendOptions {
            budget: Some(5.0),
            ..Default::default()
        };
        assert!(matches!(
            recommend(&s, &quotes(), &opts),
            Err(RecommendError::NoFeasiblePlans { candidates: 2 })
        ));
        assert!(matches!(
            recommend(&[], &quotes(), &opts),
            Err(RecommendError::NoSummaries)
        ));
    }

    #[test]
    fn online_plans_use_token_prices() {
        let s = [summary("a", "haiku", 1.0, 3.0, None)];
        let opts = RecommendOptions {
            pricing: vec![PricingEntry {
                model: "haiku".into(),
                input_per_1m: 0.25,
                output_per_1m: 1.25,
            }],
            ..Default::default()
        };
        let plans = recommend(&s, &[], &opts).unwrap();
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].instance, ONLINE_INSTANCE);
        let expected = 1000.0 * (1276.0 * 0.25 + 10.0 * 1.25) / 1e6;
        assert!((plans[0].est_cost.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn constraint_parsing() {
        let c: QualityConstraint = "f1_macro>=0.9".parse().unwrap();
        assert_eq!(c.metric, MetricName::F1Macro);
        assert_eq!(c.op, ConstraintOp::Ge);
        assert!(c.admits(0.9) && !c.admits(0.89));
        let c: QualityConstraint = "mae < 2".parse().unwrap();
        assert_eq!(c.op, ConstraintOp::Lt);
        assert!("mae=2".parse::<QualityConstraint>().is_err());
        assert!("bogus>=1".parse::<QualityConstraint>().is_err());
    }

    #[test]
    fn larger_is_better_metrics_are_negated() {
        let mut good = summary("a", "m", 0.0, 1.0, Some(1));
        good.metrics = BTreeMap::from([("f1_macro".to_string(), 0.95)]);
        let mut bad = good.clone();
        bad.run_id = "b".into();
        bad.metrics = BTreeMap::from([("f1_macro".to_string(), 0.80)]);
        let plans = recommend(&[good, bad], &quotes()[1..], &RecommendOptions::default()).unwrap();
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].run_id, "a");
    }

    #[test]
    fn objective_names() {
        assert_eq!("cost".parse::<Objective>().unwrap(), Objective::Cost);
        assert_eq!("mae".parse::<Objective>().unwrap(), Objective::Metric(MetricName::Mae));
        assert!("speed".parse::<Objective>().is_err());
        assert!(matches!(pareto_front(&[], &[]), Err(RecommendError::NoObjectives)));
    }
}
