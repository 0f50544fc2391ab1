use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use cebench_cli::plan::format_plan_table;
use cebench_cli::{
    cmd_recommend, cmd_report, exit, plan_prompts, run_batch, CliError, RecommendArgs,
    ReportFormat, RunOptions,
};
use cebench_core::backends::prompt_sha256;
use cebench_core::recommender::DEFAULT_BENCH_INSTANCE;
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "cebench", version, about = "Benchmark LLM pipelines and plan cost-effective deployments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute every run of an experiment grid.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip runs the manifest already marks done.
        #[arg(long)]
        resume: bool,
        #[arg(long, default_value_t = 1)]
        parallel_runs: usize,
    },
    /// Rank deployment plans from run summaries and an instance catalog.
    Recommend {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        quotes: PathBuf,
        /// Per-token prices for online services (`model,input_per_1m,output_per_1m`).
        #[arg(long)]
        pricing: Option<PathBuf>,
        /// Maximum dollars per 1000 prompts.
        #[arg(long)]
        budget: Option<f64>,
        /// e.g. `f1_macro>=0.9`.
        #[arg(long)]
        constraint: Option<String>,
        /// e.g. `quality,cost` or `quality,time`.
        #[arg(long)]
        objectives: Option<String>,
        #[arg(long, default_value = DEFAULT_BENCH_INSTANCE)]
        bench_instance: String,
        /// Scale generation latency only.
        #[arg(long)]
        llm_latency: bool,
        /// Output directory; defaults to --runs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a flat per-run table.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print every rendered prompt as JSONL, for recording replay fixtures.
    Prompts {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run {
            config,
            out,
            resume,
            parallel_runs,
        } => {
            let report = run_batch(&config, &out, &RunOptions { resume, parallel_runs })?;
            println!(
                "{} completed, {} skipped, {} failed, {} backend calls",
                report.completed.len(),
                report.skipped.len(),
                report.failed.len(),
                report.backend_calls
            );
            for (run_id, err) in &report.failed {
                eprintln!("failed {run_id}: {err}");
            }
            Ok(if report.failed.is_empty() {
                exit::SUCCESS
            } else {
                exit::RUN_FAILURES
            })
        }
        Command::Recommend {
            runs,
            quotes,
            pricing,
            budget,
            constraint,
            objectives,
            bench_instance,
            llm_latency,
            out,
        } => {
            let args = RecommendArgs {
                runs,
                quotes,
                pricing,
                budget,
                constraint,
                objectives,
                bench_instance,
                llm_latency,
                out,
            };
            let plans = cmd_recommend(&args)?;
            print!("{}", format_plan_table(&plans));
            Ok(exit::SUCCESS)
        }
        Command::Report {
            runs,
            format,
            svg,
            out,
        } => {
            let format: ReportFormat = format.parse()?;
            let text = cmd_report(&runs, format, svg.as_deref())?;
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?,
                None => print!("{text}"),
            }
            Ok(exit::SUCCESS)
        }
        Command::Prompts { config } => {
            let scratch = std::env::temp_dir().join(format!("cebench-prompts-{}", std::process::id()));
            let planned = plan_prompts(&config, &scratch);
            let _ = std::fs::remove_dir_all(&scratch);
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            for (spec, prompts) in planned? {
                for p in prompts {
                    let line = serde_json::json!({
                        "run_id": spec.run_id,
                        "prompt_id": p.record.prompt_id,
                        "prompt_sha256": prompt_sha256(&p.prompt),
                        "prompt": p.prompt,
                    });
                    writeln!(out, "{line}").map_err(|e| CliError::Runtime(e.to_string()))?;
                }
            }
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
