use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use cebench_core::config::Axis;
use cebench_core::evaluators::MetricName;
use cebench_core::monitor::RunSummary;
use cebench_core::recommender::non_dominated;

use crate::{load_summaries, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(CliError::Config(format!("unknown report format `{other}`; use csv or json"))),
        }
    }
}

const QUALITY_METRICS: [MetricName; 4] = [
    MetricName::Mae,
    MetricName::F1Macro,
    MetricName::F1Micro,
    MetricName::Specificity,
];

/// Column order of the flat CSV report.
pub const REPORT_COLUMNS: [&str; 21] = [
    "run_id",
    "model",
    "model_quantization",
    "embedding_quantization",
    "top_k",
    "chunk_size",
    "prompting_mode",
    "mae",
    "f1_macro",
    "f1_micro",
    "specificity",
    "valid_answer_rate",
    "n_prompts",
    "n_errors",
    "mean_latency_s",
    "p95_latency_s",
    "mean_latency_llm_s",
    "peak_gpu_memory",
    "peak_host_memory",
    "tokens_in_total",
    "tokens_out_total",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn row(s: &RunSummary) -> Vec<String> {
    let mut row = vec![s.run_id.clone(), s.model.clone()];
    row.extend(
        Axis::ALL
            .iter()
            .skip(1)
            .map(|a| s.axes.get(a.as_str()).cloned().unwrap_or_default()),
    );
    row.extend(QUALITY_METRICS.iter().map(|m| opt(s.metric(m.as_str()))));
    row.push(s.valid_answer_rate.to_string());
    row.push(s.n_prompts.to_string());
    row.push(s.n_errors.to_string());
    row.push(opt(s.mean_latency_s));
    row.push(opt(s.p95_latency_s));
    row.push(opt(s.mean_latency_llm_s));
    row.push(opt(s.peak_gpu_memory));
    row.push(opt(s.peak_host_memory));
    row.push(s.tokens_in_total.to_string());
    row.push(s.tokens_out_total.to_string());
    row
}

/// One row per run, header first.
pub fn report_csv(summaries: &[RunSummary]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(REPORT_COLUMNS).map_err(csv_err)?;
    for s in summaries {
        w.write_record(row(s)).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// The summaries as a pretty JSON array.
pub fn report_json(summaries: &[RunSummary]) -> String {
    let mut text = serde_json::to_string_pretty(summaries).expect("summaries serialize");
    text.push('\n');
    text
}

fn quality_metric(summaries: &[RunSummary]) -> Option<MetricName> {
    QUALITY_METRICS
        .into_iter()
        .find(|m| summaries.iter().any(|s| s.metric(m.as_str()).is_some()))
}

fn escape_xml(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter of quality against mean latency, with the non-dominated runs drawn as triangles.
pub fn render_svg(summaries: &[RunSummary]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const PAD: f64 = 60.0;
    let metric = quality_metric(summaries);
    let points: Vec<(&RunSummary, f64, f64)> = summaries
        .iter()
        .filter_map(|s| {
            let q = s.metric(metric?.as_str())?;
            Some((s, s.mean_latency_s?, q))
        })
        .collect();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{PAD}" y1="{y}" x2="{x}" y2="{y}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{y}" stroke="black"/>"#,
        x = W - PAD / 2.0,
        y = H - PAD
    );
    let ylabel = metric.map(|m| m.as_str()).unwrap_or("quality");
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">mean latency (s)</text>"#,
        W / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape_xml(ylabel)
    );

    if !points.is_empty() {
        let lower_better = metric.is_some_and(|m| m.lower_is_better());
        let objectives: Vec<Vec<f64>> = points
            .iter()
            .map(|(_, t, q)| vec![*t, if lower_better { *q } else { -*q }])
            .collect();
        let front = non_dominated(&objectives);

        let span = |vals: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        let (x0, x1) = span(&mut points.iter().map(|p| p.1));
        let (y0, y1) = span(&mut points.iter().map(|p| p.2));
        let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 1.5 * PAD);
        let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 1.5 * PAD);

        for (v, anchor_x, anchor_y, is_x) in [(x0, px(x0), H - PAD + 15.0, true), (x1, px(x1), H - PAD + 15.0, true), (y0, PAD - 5.0, py(y0), false), (y1, PAD - 5.0, py(y1), false)] {
            let anchor = if is_x { "middle" } else { "end" };
            let _ = writeln!(
                svg,
                r#"<text x="{anchor_x:.1}" y="{anchor_y:.1}" text-anchor="{anchor}">{v:.3}</text>"#
            );
        }
        for (i, (s, t, q)) in points.iter().enumerate() {
            let (x, y) = (px(*t), py(*q));
            let title = escape_xml(&format!("{} {} {ylabel}={q:.4} t={t:.3}s", s.run_id, s.model));
            if front.binary_search(&i).is_ok() {
                let _ = writeln!(
                    svg,
                    r#"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="crimson"><title>{title}</title></polygon>"#,
                    x,
                    y - 6.0,
                    x - 5.0,
                    y + 4.0,
                    x + 5.0,
                    y + 4.0
                );
            } else {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{x:.1}" cy="{y:.1}" r="3.5" fill="steelblue" fill-opacity="0.7"><title>{title}</title></circle>"#
                );
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Renders the report for every summary in `runs`, optionally writing an SVG scatter.
pub fn cmd_report(runs: &Path, format: ReportFormat, svg: Option<&Path>) -> Result<String, CliError> {
    let summaries = load_summaries(runs)?;
    if let Some(path) = svg {
        std::fs::write(path, render_svg(&summaries)).map_err(|e| CliError::io(path, e))?;
    }
    match format {
        ReportFormat::Csv => report_csv(&summaries),
        ReportFormat::Json => Ok(report_json(&summaries)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn summary(id: &str, mae: f64, latency: f64) -> RunSummary {
        RunSummary {
            run_id: id.into(),
            axes: BTreeMap::from([("top_k".to_string(), "5".to_string())]),
            model: "m".into(),
            n_prompts: 2,
            n_errors: 0,
            metrics: BTreeMap::from([("mae".to_string(), mae)]),
            mean_latency_s: Some(latency),
            p95_latency_s: Some(latency),
            mean_latency_llm_s: Some(latency),
            peak_gpu_memory: None,
            peak_host_memory: None,
            tokens_in_total: 10,
            tokens_out_total: 2,
            token_counts_exact: false,
            valid_answer_rate: 1.0,
        }
    }

    #[test]
    fn header_matches_row_width() {
        let csv = report_csv(&[summary("a", 1.0, 2.0)]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), REPORT_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap().split(',').count(), REPORT_COLUMNS.len());
    }

    #[test]
    fn unknown_format() {
        assert!("xml".parse::<ReportFormat>().is_err());
        assert_eq!("CSV".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
    }

    #[test]
    fn svg_marks_front() {
        let svg = render_svg(&[summary("a", 1.0, 2.0), summary("b", 2.0, 3.0), summary("c", 0.5, 4.0)]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 1);
    }
}
