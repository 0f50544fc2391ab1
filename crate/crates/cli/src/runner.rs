use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use cebench_core::backends::{
    build_fewshot_prompt, build_rag_prompt, connect, Backend, BackendKind, GenerationResult,
};
use cebench_core::config::{
    expand_grid, parse_experiment_config, ExperimentGrid, PromptingMode, QuantizationMode, RunSpec,
};
use cebench_core::corpus::{
    chunk_document, escape_line, load_dataset, render_prompt, Chunk, DatasetFormat, Label,
    PromptRecord,
};
use cebench_core::evaluators::{evaluate, extract_nli_label, extract_score, Prediction};
use cebench_core::monitor::{aggregate, run_probe, write_summary, RunLogWriter, RunRecord};
use cebench_core::vectorstore::{embed, write_snapshot, IndexBuildOptions};
use cebench_core::VectorIndexF32;
use sha2::{Digest, Sha256};

use crate::manifest::{RunManifest, RunStatus, MANIFEST_FILE};
use crate::{CliError, SUMMARY_SUFFIX};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub resume: bool,
    /// Runs in flight at once; prompts within a run are always serial.
    pub parallel_runs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            resume: false,
            parallel_runs: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchReport {
    pub completed: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, String)>,
    /// Generation requests issued during this invocation.
    pub backend_calls: usize,
}

/// Parses a configuration file, resolving relative paths against its directory.
pub fn load_grid(config_path: &Path) -> Result<(ExperimentGrid, String), CliError> {
    let text = fs::read_to_string(config_path).map_err(|e| CliError::io(config_path, e))?;
    let mut grid = parse_experiment_config(&text)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
    grid.dataset_path = resolve(&grid.dataset_path);
    grid.knowledge_paths = grid.knowledge_paths.iter().map(resolve).collect();
    grid.backend.resolve_paths(base);
    grid.probe.resolve_paths(base);
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    Ok((grid, hash))
}

/// A rendered prompt and the time spent building it.
#[derive(Debug, Clone)]
pub struct PreparedPrompt {
    pub record: PromptRecord,
    pub prompt: String,
    /// Retrieval and templating, seconds.
    pub prep_seconds: f64,
}

struct Batch {
    grid: ExperimentGrid,
    records: Vec<PromptRecord>,
    documents: Vec<(String, String)>,
    out_dir: PathBuf,
    indexes: Mutex<HashMap<(u32, QuantizationMode), Arc<VectorIndexF32>>>,
    backend_calls: AtomicUsize,
}

impl Batch {
    fn open(grid: ExperimentGrid, out_dir: &Path) -> Result<Self, CliError> {
        let format = DatasetFormat::from_path(&grid.dataset_path)?;
        let records = load_dataset(&grid.dataset_path, format)?;
        if records.is_empty() {
            return Err(CliError::Config(format!(
                "dataset {} is empty",
                grid.dataset_path.display()
            )));
        }
        let specs = expand_grid(&grid);
        if specs.iter().any(|s| s.prompting_mode() == PromptingMode::FewShot) {
            if records.len() <= grid.shots {
                return Err(CliError::Config(format!(
                    "few-shot prompting takes the first {} records as examples; the dataset has only {}",
                    grid.shots,
                    records.len()
                )));
            }
            if records[..grid.shots].iter().any(|r| r.label == Label::None) {
                return Err(CliError::Config("few-shot examples need labels".into()));
            }
        }
        let needs_knowledge = specs.iter().any(|s| s.prompting_mode() == PromptingMode::Rag);
        if needs_knowledge && grid.knowledge_paths.is_empty() {
            return Err(CliError::Config(
                "rag prompting needs `knowledge` documents".into(),
            ));
        }
        let mut documents = Vec::new();
        if needs_knowledge {
            for path in &grid.knowledge_paths {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                documents.push((path.display().to_string(), text));
            }
        }
        Ok(Self {
            grid,
            records,
            documents,
            out_dir: out_dir.to_path_buf(),
            indexes: Mutex::new(HashMap::new()),
            backend_calls: AtomicUsize::new(0),
        })
    }

    /// Builds, or reuses, the index for one chunking and quantization setting.
    fn index(&self, chunk_size: u32, mode: QuantizationMode) -> Result<Arc<VectorIndexF32>, String> {
        let mut cache = self.indexes.lock().expect("index cache lock");
        if let Some(index) = cache.get(&(chunk_size, mode)) {
            return Ok(index.clone());
        }
        let mut chunks: Vec<Chunk> = Vec::new();
        for (source, text) in &self.documents {
            chunks.extend(
                chunk_document(text, source, chunk_size as usize, self.grid.index.overlap)
                    .map_err(|e| e.to_string())?,
            );
        }
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        let vectors = embed::<f32>(&texts, &self.grid.embedding).map_err(|e| e.to_string())?;
        let options = IndexBuildOptions {
            pq_subspaces: self.grid.index.pq_subspaces,
            pq_centroids: self.grid.index.pq_centroids,
            seed: self.grid.index.seed,
        };
        let index = VectorIndexF32::build(chunks, vectors, mode, &options).map_err(|e| e.to_string())?;

        let dir = self.out_dir.join("indexes");
        fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let path = dir.join(format!("chunk{chunk_size}_{}.idx", mode.as_str()));
        let file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        write_snapshot(&index, std::io::BufWriter::new(file)).map_err(|e| e.to_string())?;

        let index = Arc::new(index);
        cache.insert((chunk_size, mode), index.clone());
        Ok(index)
    }

    fn prepare(&self, spec: &RunSpec) -> Result<Vec<PreparedPrompt>, String> {
        let mode = spec.prompting_mode();
        let (shots, targets) = match mode {
            PromptingMode::FewShot => {
                let shots: Vec<(String, String)> = self.records[..spec.shots]
                    .iter()
                    .map(|r| (r.query_text.clone(), answer_text(&r.label)))
                    .collect();
                (shots, &self.records[spec.shots..])
            }
            _ => (Vec::new(), &self.records[..]),
        };
        let index = match mode {
            PromptingMode::Rag => Some(self.index(spec.chunk_size(), spec.quantization())?),
            _ => None,
        };

        let mut prepared = Vec::with_capacity(targets.len());
        for record in targets {
            let started = Instant::now();
            let prompt = match (&index, mode) {
                (Some(index), _) => {
                    let query = embed::<f32>(&[record.query_text.as_str()], &spec.embedding)
                        .map_err(|e| e.to_string())?;
                    let hits = index
                        .search_top_k(&query[0], spec.top_k() as usize)
                        .map_err(|e| e.to_string())?;
                    let chunks: Vec<&Chunk> = hits.iter().map(|h| index.chunk(h.position)).collect();
                    build_rag_prompt(&spec.prompt_template, record, &chunks)
                }
                (None, PromptingMode::FewShot) => {
                    build_fewshot_prompt(&spec.prompt_template, record, &shots)
                }
                (None, _) => render_prompt(&spec.prompt_template, &record.query_text, Some("")),
            }
            .map_err(|e| e.to_string())?;
            prepared.push(PreparedPrompt {
                record: record.clone(),
                prompt,
                prep_seconds: started.elapsed().as_secs_f64(),
            });
        }
        Ok(prepared)
    }

    /// Executes one run end to end. `Err` marks the run failed.
    fn execute(&self, spec: &RunSpec) -> Result<(), String> {
        let prompts = self.prepare(spec)?;
        let prompt_file = self.out_dir.join("prompts").join(format!("{}.txt", spec.run_id));
        let lines: String = prompts
            .iter()
            .map(|p| escape_line(&p.prompt) + "\n")
            .collect();
        fs::write(&prompt_file, lines).map_err(|e| format!("{}: {e}", prompt_file.display()))?;

        let descriptor = spec.backend.with_model(spec.model());
        let backend = connect(&descriptor).map_err(|e| e.to_string())?;
        // Replayed runs are timed by their recordings alone so repeated runs agree byte for byte.
        let replay = descriptor.kind == BackendKind::MockReplay;

        let log_path = self.out_dir.join(format!("{}.jsonl", spec.run_id));
        let mut log = RunLogWriter::create(&log_path).map_err(|e| e.to_string())?;
        let probe = run_probe(&spec.probe).map_err(|e| e.to_string())?;

        let mut records = Vec::with_capacity(prompts.len());
        for p in &prompts {
            let record = self.generate_one(spec, backend.as_ref(), p, replay);
            log.log_record(&record).map_err(|e| e.to_string())?;
            records.push(record);
        }
        let outcome = probe.stop();
        if let Some(failure) = &outcome.failure {
            log::warn!("run {}: probe failed ({failure}); memory left unknown", spec.run_id);
        }

        let labels: Vec<&Label> = prompts.iter().map(|p| &p.record.label).collect();
        let pairs: Vec<(Option<Prediction>, &Label)> = records
            .iter()
            .zip(labels)
            .map(|(r, l)| (r.extracted_prediction.clone(), l))
            .collect();
        let evaluation = evaluate(&spec.metrics, &pairs);
        let summary = aggregate(
            &records,
            outcome.usable_samples(),
            evaluation.metrics,
            spec.bindings_map(),
            spec.model(),
        )
        .map_err(|e| e.to_string())?;
        let summary_path = self.out_dir.join(format!("{}{SUMMARY_SUFFIX}", spec.run_id));
        write_summary(&summary_path, &summary).map_err(|e| e.to_string())?;

        if summary.n_errors == summary.n_prompts {
            let first = records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
            return Err(format!("every prompt failed; first error: {first}"));
        }
        Ok(())
    }

    fn generate_one(
        &self,
        spec: &RunSpec,
        backend: &dyn Backend,
        prepared: &PreparedPrompt,
        replay: bool,
    ) -> RunRecord {
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let prep = if replay { 0.0 } else { prepared.prep_seconds };
        let mut record = RunRecord {
            run_id: spec.run_id.clone(),
            prompt_id: prepared.record.prompt_id.clone(),
            latency_end_to_end: 0.0,
            latency_llm: 0.0,
            tokens_in: 0,
            tokens_out: 0,
            response_text: String::new(),
            extracted_prediction: None,
            error: None,
            token_counts_exact: false,
        };
        match backend.generate(&prepared.prompt) {
            Ok(GenerationResult {
                text,
                tokens_in,
                tokens_out,
                latency,
                token_counts_exact,
            }) => {
                record.latency_llm = latency;
                record.latency_end_to_end = prep + latency;
                record.tokens_in = tokens_in;
                record.tokens_out = tokens_out;
                record.token_counts_exact = token_counts_exact;
                record.extracted_prediction = extract(&prepared.record.label, &text);
                record.response_text = text;
            }
            Err(e) => {
                log::warn!("run {} prompt {}: {e}", spec.run_id, prepared.record.prompt_id);
                record.error = Some(e.to_string());
            }
        }
        record
    }
}

fn answer_text(label: &Label) -> String {
    match label {
        Label::Score(s) => format!("score: {s}"),
        Label::Class(c) => c.as_str().to_string(),
        Label::None => String::new(),
    }
}

fn extract(label: &Label, response: &str) -> Option<Prediction> {
    match label {
        Label::Class(_) => {
            let nli = extract_nli_label(response);
            if nli.low_confidence {
                log::debug!("ambiguous NLI answer resolved to {:?}", nli.label);
            }
            nli.label.map(Prediction::Nli)
        }
        _ => extract_score(response).map(Prediction::Score),
    }
}

/// Renders every run's prompts without contacting a backend.
pub fn plan_prompts(config_path: &Path, scratch: &Path) -> Result<Vec<(RunSpec, Vec<PreparedPrompt>)>, CliError> {
    let (grid, _) = load_grid(config_path)?;
    let batch = Batch::open(grid, scratch)?;
    expand_grid(&batch.grid)
        .into_iter()
        .map(|spec| {
            let prompts = batch.prepare(&spec).map_err(CliError::Runtime)?;
            Ok((spec, prompts))
        })
        .collect()
}

/// Expands the grid and executes every run, writing logs, summaries and a manifest into `out_dir`.
pub fn run_batch(config_path: &Path, out_dir: &Path, options: &RunOptions) -> Result<BatchReport, CliError> {
    let (grid, config_hash) = load_grid(config_path)?;
    fs::create_dir_all(out_dir.join("prompts")).map_err(|e| CliError::io(out_dir, e))?;
    let batch = Batch::open(grid, out_dir)?;
    let specs = expand_grid(&batch.grid);
    let run_ids: Vec<String> = specs.iter().map(|s| s.run_id.clone()).collect();

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let manifest = if options.resume && manifest_path.exists() {
        RunManifest::resume_from(&config_hash, &run_ids, &RunManifest::load(&manifest_path)?)
    } else {
        RunManifest::new(&config_hash, &run_ids)
    };
    manifest.save(&manifest_path)?;

    let mut report = BatchReport::default();
    let mut todo = Vec::new();
    for spec in &specs {
        let done = manifest
            .entry(&spec.run_id)
            .is_some_and(|e| e.status == RunStatus::Done);
        let summary = out_dir.join(format!("{}{SUMMARY_SUFFIX}", spec.run_id));
        if options.resume && done && summary.exists() {
            report.skipped.push(spec.run_id.clone());
        } else {
            todo.push(spec);
        }
    }

    let manifest = Mutex::new(manifest);
    let results: Mutex<Vec<(usize, Result<(), String>)>> = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    let workers = options.parallel_runs.max(1).min(todo.len().max(1));
    let save_error: Mutex<Option<CliError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = todo.get(i) else { break };
                {
                    let mut m = manifest.lock().expect("manifest lock");
                    m.mark_started(&spec.run_id);
                    if let Err(e) = m.save(&manifest_path) {
                        *save_error.lock().expect("error lock") = Some(e);
                    }
                }
                log::info!("run {} ({}/{})", spec.run_id, i + 1, todo.len());
                let outcome = batch.execute(spec);
                {
                    let mut m = manifest.lock().expect("manifest lock");
                    m.mark_finished(&spec.run_id, outcome.as_ref().err().cloned());
                    if let Err(e) = m.save(&manifest_path) {
                        *save_error.lock().expect("error lock") = Some(e);
                    }
                }
                results.lock().expect("results lock").push((i, outcome));
            });
        }
    });
    if let Some(e) = save_error.into_inner().expect("error lock") {
        return Err(e);
    }

    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(i, _)| *i);
    for (i, outcome) in results {
        let run_id = todo[i].run_id.clone();
        match outcome {
            Ok(()) => report.completed.push(run_id),
            Err(e) => {
                log::error!("run {run_id} failed: {e}");
                report.failed.push((run_id, e));
            }
        }
    }
    report.backend_calls = batch.backend_calls.load(Ordering::Relaxed);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cebench_core::evaluators::NliLabel;

    #[test]
    fn extraction_follows_label_kind() {
        assert_eq!(extract(&Label::Score(3), "score: 7"), Some(Prediction::Score(7)));
        assert_eq!(
            extract(&Label::Class(NliLabel::Neutral), "Answer: contradiction"),
            Some(Prediction::Nli(NliLabel::Contradiction))
        );
        assert_eq!(extract(&Label::None, "no number here"), None);
    }

    #[test]
    fn shot_answers() {
        assert_eq!(answer_text(&Label::Score(12)), "score: 12");
        assert_eq!(answer_text(&Label::Class(NliLabel::Entailment)), "entailment");
    }
}
