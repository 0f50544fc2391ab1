//! Experiment configuration: YAML parsing, validation and grid expansion.
//!
//! A configuration declares a set of variable axes. Every axis that is not
//! listed collapses to the single sentinel value `unset`, so a grid without
//! retrieval settings expands exactly like one with them.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::BackendDescriptor;
use crate::evaluators::MetricName;
use crate::monitor::ProbeDescriptor;
use crate::vectorstore::EmbeddingProvider;

/// Neighbours retrieved when a RAG run leaves `top_k` unset.
pub const DEFAULT_TOP_K: u32 = 5;
/// Chunk size in characters when a RAG run leaves `chunk_size` unset.
pub const DEFAULT_CHUNK_SIZE: u32 = 1000;
/// In-context examples used by few-shot runs.
pub const DEFAULT_SHOTS: usize = 5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error{}: {message}", position_suffix(*.line, *.column))]
    Parse {
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },
    #[error("unknown axis `{0}`")]
    UnknownAxis(String),
    #[error("axis `{0}` has no values")]
    EmptyAxis(String),
    #[error("axis `{axis}` lists `{value}` more than once")]
    DuplicateValue { axis: String, value: String },
    #[error("invalid value `{value}` for axis `{axis}`: {reason}")]
    InvalidValue {
        axis: String,
        value: String,
        reason: String,
    },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn position_suffix(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l}, column {c}"),
        (Some(l), None) => format!(" at line {l}"),
        _ => String::new(),
    }
}

impl From<serde_yaml::Error> for ConfigError {
    fn from(err: serde_yaml::Error) -> Self {
        let location = err.location();
        ConfigError::Parse {
            line: location.as_ref().map(|l| l.line()),
            column: location.as_ref().map(|l| l.column()),
            message: err.to_string(),
        }
    }
}

/// The variable dimensions of an experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Model,
    ModelQuantization,
    EmbeddingQuantization,
    TopK,
    ChunkSize,
    PromptingMode,
}

impl Axis {
    pub const ALL: [Axis; 6] = [
        Axis::Model,
        Axis::ModelQuantization,
        Axis::EmbeddingQuantization,
        Axis::TopK,
        Axis::ChunkSize,
        Axis::PromptingMode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Model => "model",
            Axis::ModelQuantization => "model_quantization",
            Axis::EmbeddingQuantization => "embedding_quantization",
            Axis::TopK => "top_k",
            Axis::ChunkSize => "chunk_size",
            Axis::PromptingMode => "prompting_mode",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Axis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| ConfigError::UnknownAxis(s.to_string()))
    }
}

/// How stored embeddings are encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizationMode {
    #[default]
    No,
    Sq,
    Pq,
}

impl QuantizationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            QuantizationMode::No => "no",
            QuantizationMode::Sq => "sq",
            QuantizationMode::Pq => "pq",
        }
    }
}

impl FromStr for QuantizationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no" => Ok(QuantizationMode::No),
            "sq" => Ok(QuantizationMode::Sq),
            "pq" => Ok(QuantizationMode::Pq),
            other => Err(format!("expected one of no, sq, pq; got `{other}`")),
        }
    }
}

impl fmt::Display for QuantizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptingMode {
    Plain,
    Rag,
    FewShot,
}

impl PromptingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptingMode::Plain => "plain",
            PromptingMode::Rag => "rag",
            PromptingMode::FewShot => "few_shot",
        }
    }
}

impl FromStr for PromptingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(PromptingMode::Plain),
            "rag" => Ok(PromptingMode::Rag),
            "few_shot" | "fewshot" => Ok(PromptingMode::FewShot),
            other => Err(format!("expected one of plain, rag, few_shot; got `{other}`")),
        }
    }
}

/// One value on an axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AxisValue {
    /// Sentinel for axes the configuration does not list.
    Unset,
    Text(String),
    Count(u32),
    Quantization(QuantizationMode),
    Mode(PromptingMode),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Unset => f.write_str("unset"),
            AxisValue::Text(s) => f.write_str(s),
            AxisValue::Count(n) => write!(f, "{n}"),
            AxisValue::Quantization(q) => f.write_str(q.as_str()),
            AxisValue::Mode(m) => f.write_str(m.as_str()),
        }
    }
}

/// Retrieval knobs that are not grid axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexSettings {
    /// Characters shared by consecutive chunks.
    #[serde(default)]
    pub overlap: usize,
    #[serde(default = "default_pq_subspaces")]
    pub pq_subspaces: usize,
    #[serde(default = "default_pq_centroids")]
    pub pq_centroids: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_pq_subspaces() -> usize {
    8
}

fn default_pq_centroids() -> usize {
    256
}

impl Default for IndexSettings {
    fn default() -> Self {
        Self {
            overlap: 0,
            pq_subspaces: default_pq_subspaces(),
            pq_centroids: default_pq_centroids(),
            seed: 0,
        }
    }
}

/// A validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub name: String,
    pub dataset_path: PathBuf,
    pub prompt_template: String,
    pub knowledge_paths: Vec<PathBuf>,
    /// Declared axes in declaration order, followed by unlisted axes bound to `unset`.
    pub axes: Vec<(Axis, Vec<AxisValue>)>,
    pub backend: BackendDescriptor,
    pub metrics: Vec<MetricName>,
    pub repetitions: u32,
    pub embedding: EmbeddingProvider,
    pub probe: ProbeDescriptor,
    pub index: IndexSettings,
    pub shots: usize,
}

impl ExperimentGrid {
    pub fn axis_values(&self, axis: Axis) -> &[AxisValue] {
        self.axes
            .iter()
            .find(|(a, _)| *a == axis)
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[])
    }

    /// Number of run specifications [`expand_grid`] produces.
    pub fn run_count(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product::<usize>() * self.repetitions as usize
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: String,
    dataset: PathBuf,
    template: String,
    #[serde(default)]
    knowledge: Vec<PathBuf>,
    backend: BackendDescriptor,
    #[serde(default)]
    metrics: Vec<String>,
    #[serde(default = "default_repetitions")]
    repetitions: u32,
    #[serde(default)]
    axes: serde_yaml::Mapping,
    #[serde(default)]
    embedding: EmbeddingProvider,
    #[serde(default)]
    probe: ProbeDescriptor,
    #[serde(default)]
    index: IndexSettings,
    #[serde(default = "default_shots")]
    shots: usize,
}

fn default_repetitions() -> u32 {
    1
}

fn default_shots() -> usize {
    DEFAULT_SHOTS
}

/// Parses and validates a YAML experiment configuration.
pub fn parse_experiment_config(text: &str) -> Result<ExperimentGrid, ConfigError> {
    let raw: RawConfig = serde_yaml::from_str(text)?;

    if raw.name.trim().is_empty() {
        return Err(ConfigError::Invalid("`name` must not be empty".into()));
    }
    if raw.repetitions == 0 {
        return Err(ConfigError::Invalid("`repetitions` must be positive".into()));
    }
    if !raw.template.contains("{query}") {
        return Err(ConfigError::Invalid(
            "`template` must contain the `{query}` placeholder".into(),
        ));
    }
    raw.backend
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    raw.probe.validate().map_err(ConfigError::Invalid)?;
    if raw.index.pq_subspaces == 0 || raw.index.pq_centroids == 0 || raw.index.pq_centroids > 256 {
        return Err(ConfigError::Invalid(
            "`index.pq_subspaces` must be positive and `index.pq_centroids` in 1..=256".into(),
        ));
    }

    let metrics = raw
        .metrics
        .iter()
        .map(|m| m.parse::<MetricName>().map_err(|_| ConfigError::UnknownMetric(m.clone())))
        .collect::<Result<Vec<_>, _>>()?;

    let mut axes: Vec<(Axis, Vec<AxisValue>)> = Vec::new();
    for (key, value) in &raw.axes {
        let name = scalar_text(key).ok_or_else(|| ConfigError::Parse {
            line: None,
            column: None,
            message: "axis names must be strings".into(),
        })?;
        let axis: Axis = name.parse()?;
        if axes.iter().any(|(a, _)| *a == axis) {
            return Err(ConfigError::Invalid(format!("axis `{axis}` declared twice")));
        }
        let items = match value {
            serde_yaml::Value::Sequence(items) => items.clone(),
            serde_yaml::Value::Null => Vec::new(),
            single => vec![single.clone()],
        };
        if items.is_empty() {
            return Err(ConfigError::EmptyAxis(axis.to_string()));
        }
        let mut seen = HashSet::new();
        let mut values = Vec::with_capacity(items.len());
        for item in &items {
            let parsed = parse_axis_value(axis, item)?;
            if !seen.insert(parsed.clone()) {
                return Err(ConfigError::DuplicateValue {
                    axis: axis.to_string(),
                    value: parsed.to_string(),
                });
            }
            values.push(parsed);
        }
        axes.push((axis, values));
    }
    for axis in Axis::ALL {
        if !axes.iter().any(|(a, _)| *a == axis) {
            axes.push((axis, vec![AxisValue::Unset]));
        }
    }

    Ok(ExperimentGrid {
        name: raw.name,
        dataset_path: raw.dataset,
        prompt_template: raw.template,
        knowledge_paths: raw.knowledge,
        axes,
        backend: raw.backend,
        metrics,
        repetitions: raw.repetitions,
        embedding: raw.embedding,
        probe: raw.probe,
        index: raw.index,
        shots: raw.shots,
    })
}

fn scalar_text(value: &serde_yaml::Value) -> Option<String> {
    match value {
        serde_yaml::Value::String(s) => Some(s.clone()),
        serde_yaml::Value::Number(n) => Some(n.to_string()),
        serde_yaml::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn parse_axis_value(axis: Axis, value: &serde_yaml::Value) -> Result<AxisValue, ConfigError> {
    let text = scalar_text(value).ok_or_else(|| ConfigError::InvalidValue {
        axis: axis.to_string(),
        value: format!("{value:?}"),
        reason: "expected a scalar".into(),
    })?;
    let invalid = |reason: String| ConfigError::InvalidValue {
        axis: axis.to_string(),
        value: text.clone(),
        reason,
    };
    match axis {
        Axis::Model | Axis::ModelQuantization => {
            if text.trim().is_empty() {
                return Err(invalid("must not be empty".into()));
            }
            Ok(AxisValue::Text(text.clone()))
        }
        Axis::TopK | Axis::ChunkSize => match text.parse::<u32>() {
            Ok(n) if n > 0 => Ok(AxisValue::Count(n)),
            _ => Err(invalid("expected a positive integer".into())),
        },
        Axis::EmbeddingQuantization => text
            .parse::<QuantizationMode>()
            .map(AxisValue::Quantization)
            .map_err(invalid),
        Axis::PromptingMode => text
            .parse::<PromptingMode>()
            .map(AxisValue::Mode)
            .map_err(invalid),
    }
}

/// One fully bound pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    pub grid_name: String,
    /// One value per axis, in grid axis order.
    pub bindings: Vec<(Axis, AxisValue)>,
    pub repetition: u32,
    pub dataset_path: PathBuf,
    pub prompt_template: String,
    pub knowledge_paths: Vec<PathBuf>,
    pub backend: BackendDescriptor,
    pub metrics: Vec<MetricName>,
    pub embedding: EmbeddingProvider,
    pub probe: ProbeDescriptor,
    pub index: IndexSettings,
    pub shots: usize,
}

impl RunSpec {
    pub fn value(&self, axis: Axis) -> &AxisValue {
        self.bindings
            .iter()
            .find(|(a, _)| *a == axis)
            .map(|(_, v)| v)
            .unwrap_or(&AxisValue::Unset)
    }

    /// Bound axis values keyed by axis name.
    pub fn bindings_map(&self) -> BTreeMap<String, String> {
        self.bindings
            .iter()
            .map(|(a, v)| (a.as_str().to_string(), v.to_string()))
            .collect()
    }

    /// Model name sent to the backend: the `model` axis when bound, else the backend default.
    pub fn model(&self) -> &str {
        match self.value(Axis::Model) {
            AxisValue::Text(m) => m,
            _ => &self.backend.model,
        }
    }

    /// `plain` without knowledge documents, `rag` with them, unless bound explicitly.
    pub fn prompting_mode(&self) -> PromptingMode {
        match self.value(Axis::PromptingMode) {
            AxisValue::Mode(m) => *m,
            _ if self.knowledge_paths.is_empty() => PromptingMode::Plain,
            _ => PromptingMode::Rag,
        }
    }

    pub fn top_k(&self) -> u32 {
        match self.value(Axis::TopK) {
            AxisValue::Count(n) => *n,
            _ => DEFAULT_TOP_K,
        }
    }

    pub fn chunk_size(&self) -> u32 {
        match self.value(Axis::ChunkSize) {
            AxisValue::Count(n) => *n,
            _ => DEFAULT_CHUNK_SIZE,
        }
    }

    pub fn quantization(&self) -> QuantizationMode {
        match self.value(Axis::EmbeddingQuantization) {
            AxisValue::Quantization(q) => *q,
            _ => QuantizationMode::No,
        }
    }
}

/// Lowercase hex of the first 128 bits of SHA-256 over the sorted-key JSON of the bound values.
pub fn run_id_for(grid_name: &str, bindings: &[(Axis, AxisValue)], repetition: u32) -> String {
    let mut canonical: BTreeMap<&str, serde_json::Value> = BTreeMap::new();
    for (axis, value) in bindings {
        canonical.insert(axis.as_str(), serde_json::Value::String(value.to_string()));
    }
    canonical.insert("grid", serde_json::Value::String(grid_name.to_string()));
    canonical.insert("repetition", serde_json::Value::from(repetition));
    let bytes = serde_json::to_vec(&canonical).expect("string map serializes");
    let digest = Sha256::digest(&bytes);
    hex::encode(&digest[..16])
}

/// Cartesian product of all axes times repetitions, first axis varying slowest.
pub fn expand_grid(grid: &ExperimentGrid) -> Vec<RunSpec> {
    let mut specs = Vec::with_capacity(grid.run_count());
    if grid.axes.iter().any(|(_, v)| v.is_empty()) {
        return specs;
    }
    let mut cursor = vec![0usize; grid.axes.len()];
    loop {
        let bindings: Vec<(Axis, AxisValue)> = grid
            .axes
            .iter()
            .zip(&cursor)
            .map(|((axis, values), &i)| (*axis, values[i].clone()))
            .collect();
        for repetition in 0..grid.repetitions {
            specs.push(RunSpec {
                run_id: run_id_for(&grid.name, &bindings, repetition),
                grid_name: grid.name.clone(),
                bindings: bindings.clone(),
                repetition,
                dataset_path: grid.dataset_path.clone(),
                prompt_template: grid.prompt_template.clone(),
                knowledge_paths: grid.knowledge_paths.clone(),
                backend: grid.backend.clone(),
                metrics: grid.metrics.clone(),
                embedding: grid.embedding.clone(),
                probe: grid.probe.clone(),
                index: grid.index.clone(),
                shots: grid.shots,
            });
        }

        // odometer increment, last axis fastest
        let mut pos = cursor.len();
        loop {
            if pos == 0 {
                return specs;
            }
            pos -= 1;
            cursor[pos] += 1;
            if cursor[pos] < grid.axes[pos].1.len() {
                break;
            }
            cursor[pos] = 0;
        }
    }
}
