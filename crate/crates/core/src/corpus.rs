//! Datasets, prompt files and knowledge chunking.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluators::NliLabel;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("template is missing the `{0}` placeholder")]
    MissingPlaceholder(&'static str),
    #[error("template uses `{{context}}` but no context was supplied")]
    MissingContext,
    #[error("{records} records but {contexts} contexts")]
    LengthMismatch { records: usize, contexts: usize },
    #[error("overlap {overlap} must be smaller than chunk size {chunk_size}")]
    InvalidOverlap { chunk_size: usize, overlap: usize },
    #[error("chunk size must be at least 1")]
    ZeroChunkSize,
    #[error("{path}: row {row}: missing required field `{field}`")]
    MissingField {
        path: String,
        row: usize,
        field: &'static str,
    },
    #[error("{path}: row {row}: cannot parse label `{label}` as {kind}")]
    BadLabel {
        path: String,
        row: usize,
        label: String,
        kind: String,
    },
    #[error("{path}: duplicate prompt id `{id}`")]
    DuplicateId { path: String, id: String },
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },
    #[error("unsupported dataset extension for {0} (expected .csv or .jsonl)")]
    UnknownFormat(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Ground-truth annotation attached to a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Label {
    Score(i64),
    Class(NliLabel),
    None,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Score(s) => write!(f, "{s}"),
            Label::Class(c) => f.write_str(c.as_str()),
            Label::None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: String,
    pub query_text: String,
    pub label: Label,
}

impl PromptRecord {
    pub fn new(prompt_id: impl Into<String>, query_text: impl Into<String>, label: Label) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            query_text: query_text.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub source_path: String,
    /// Offset in Unicode scalar values.
    pub start_offset: usize,
    pub text: String,
}

pub const QUERY_PLACEHOLDER: &str = "{query}";
pub const CONTEXT_PLACEHOLDER: &str = "{context}";

/// Single-pass literal replacement, so substituted text is never rescanned.
pub(crate) fn substitute(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while !rest.is_empty() {
        if rest.starts_with('{') {
            for (needle, replacement) in pairs {
                if let Some(tail) = rest.strip_prefix(needle) {
                    out.push_str(replacement);
                    rest = tail;
                    continue 'scan;
                }
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

/// Escapes embedded newlines so a prompt fits on one line.
pub fn escape_line(text: &str) -> String {
    text.replace('\n', "\\n")
}

/// Renders one prompt from the template.
pub fn render_prompt(
    template: &str,
    query: &str,
    context: Option<&str>,
) -> Result<String, CorpusError> {
    if !template.contains(QUERY_PLACEHOLDER) {
        return Err(CorpusError::MissingPlaceholder(QUERY_PLACEHOLDER));
    }
    let wants_context = template.contains(CONTEXT_PLACEHOLDER);
    match (wants_context, context) {
        (true, None) => Err(CorpusError::MissingContext),
        (true, Some(ctx)) => Ok(substitute(
            template,
            &[(QUERY_PLACEHOLDER, query), (CONTEXT_PLACEHOLDER, ctx)],
        )),
        (false, _) => Ok(substitute(template, &[(QUERY_PLACEHOLDER, query)])),
    }
}

/// Builds the contents of a line-separated prompt file.
pub fn render_prompts(
    template: &str,
    records: &[PromptRecord],
    context_per_record: Option<&[String]>,
) -> Result<String, CorpusError> {
    if let Some(contexts) = context_per_record {
        if contexts.len() != records.len() {
            return Err(CorpusError::LengthMismatch {
                records: records.len(),
                contexts: contexts.len(),
            });
        }
    }
    let mut out = String::new();
    for (i, record) in records.iter().enumerate() {
        let context = context_per_record.map(|c| c[i].as_str());
        let prompt = render_prompt(template, &record.query_text, context)?;
        out.push_str(&escape_line(&prompt));
        out.push('\n');
    }
    Ok(out)
}

/// Slices `text` into fixed-size character windows.
///
/// Chunk `i` starts at `i * (chunk_size - overlap)` characters. A document no
/// longer than `overlap` still yields a single chunk.
pub fn chunk_document(
    text: &str,
    source: &str,
    chunk_size: usize,
    overlap: usize,
) -> Result<Vec<Chunk>, CorpusError> {
    if chunk_size == 0 {
        return Err(CorpusError::ZeroChunkSize);
    }
    if overlap >= chunk_size {
        return Err(CorpusError::InvalidOverlap {
            chunk_size,
            overlap,
        });
    }
    let mut bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
    let n_chars = bounds.len();
    bounds.push(text.len());

    let step = chunk_size - overlap;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < n_chars {
        let end = (start + chunk_size).min(n_chars);
        chunks.push(Chunk {
            chunk_id: format!("{source}#{}", chunks.len()),
            source_path: source.to_string(),
            start_offset: start,
            text: text[bounds[start]..bounds[end]].to_string(),
        });
        if end == n_chars {
            break;
        }
        start += step;
    }
    Ok(chunks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Jsonl,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Ok(DatasetFormat::Csv),
            Some(e) if e.eq_ignore_ascii_case("jsonl") => Ok(DatasetFormat::Jsonl),
            _ => Err(CorpusError::UnknownFormat(path.display().to_string())),
        }
    }
}

/// Loads prompt records in file order.
///
/// CSV files need a header with at least a `query` column; `id`, `label` and
/// `label_kind` are optional. JSONL rows use the same field names. Missing ids
/// default to the zero-based row index. When `label_kind` is absent it is
/// inferred: integers are scores, class names are NLI labels.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<PromptRecord>, CorpusError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let rows = match format {
        DatasetFormat::Csv => csv_rows(&text, &display)?,
        DatasetFormat::Jsonl => jsonl_rows(&text, &display)?,
    };

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(rows.len());
    for (row, raw) in rows.into_iter().enumerate() {
        let query = raw.query.ok_or(CorpusError::MissingField {
            path: display.clone(),
            row,
            field: "query",
        })?;
        let id = raw.id.unwrap_or_else(|| row.to_string());
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId { path: display, id });
        }
        let label = parse_label(raw.label.as_deref(), raw.label_kind.as_deref()).ok_or_else(|| {
            CorpusError::BadLabel {
                path: display.clone(),
                row,
                label: raw.label.clone().unwrap_or_default(),
                kind: raw.label_kind.clone().unwrap_or_else(|| "label".into()),
            }
        })?;
        records.push(PromptRecord::new(id, query, label));
    }
    Ok(records)
}

#[derive(Default)]
struct RawRow {
    id: Option<String>,
    query: Option<String>,
    label: Option<String>,
    label_kind: Option<String>,
}

fn csv_rows(text: &str, path: &str) -> Result<Vec<RawRow>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let malformed = |e: csv::Error| CorpusError::Malformed {
        path: path.to_string(),
        message: e.to_string(),
    };
    let headers = reader.headers().map_err(malformed)?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (id_col, query_col, label_col, kind_col) =
        (column("id"), column("query"), column("label"), column("label_kind"));
    if query_col.is_none() {
        return Err(CorpusError::MissingField {
            path: path.to_string(),
            row: 0,
            field: "query",
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(malformed)?;
        let get = |col: Option<usize>| col.and_then(|c| record.get(c)).map(str::to_string);
        rows.push(RawRow {
            id: get(id_col).filter(|s| !s.is_empty()),
            query: get(query_col),
            label: get(label_col),
            label_kind: get(kind_col),
        });
    }
    Ok(rows)
}

fn jsonl_rows(text: &str, path: &str) -> Result<Vec<RawRow>, CorpusError> {
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                path: path.to_string(),
                message: format!("line {}: {e}", line_no + 1),
            })?;
        let field = |name: &str| match value.get(name) {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s.clone()),
            Some(other) => Some(other.to_string()),
        };
        rows.push(RawRow {
            id: field("id"),
            query: field("query"),
            label: field("label"),
            label_kind: field("label_kind"),
        });
    }
    Ok(rows)
}

fn parse_label(label: Option<&str>, kind: Option<&str>) -> Option<Label> {
    let label = label.map(str::trim).filter(|l| !l.is_empty());
    let kind = kind.map(str::trim).filter(|k| !k.is_empty());
    match (kind, label) {
        (Some("none"), _) | (None, None) => Some(Label::None),
        (Some(_), None) => None,
        (Some("score"), Some(l)) => l.parse().ok().map(Label::Score),
        (Some("nli"), Some(l)) => l.parse().ok().map(Label::Class),
        (Some(_), Some(_)) => None,
        (None, Some(l)) => l
            .parse()
            .ok()
            .map(Label::Score)
            .or_else(|| l.parse().ok().map(Label::Class)),
    }
}
