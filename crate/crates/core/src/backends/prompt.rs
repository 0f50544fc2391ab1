use crate::corpus::{render_prompt, substitute, Chunk, CorpusError, PromptRecord, CONTEXT_PLACEHOLDER, QUERY_PLACEHOLDER};

/// Separator between retrieved chunks and between few-shot blocks.
pub const CONTEXT_JOINER: &str = "\n\n";

/// `ceil(chars / 4)`, used when an API does not report usage.
pub fn approx_token_count(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Fills `{context}` with the retrieved chunk texts and `{query}` with the record's query.
pub fn build_rag_prompt(
    template: &str,
    record: &PromptRecord,
    retrieved: &[&Chunk],
) -> Result<String, CorpusError> {
    if !template.contains(CONTEXT_PLACEHOLDER) {
        return Err(CorpusError::MissingPlaceholder(CONTEXT_PLACEHOLDER));
    }
    let context = retrieved
        .iter()
        .map(|c| c.text.as_str())
        .collect::<Vec<_>>()
        .join(CONTEXT_JOINER);
    render_prompt(template, &record.query_text, Some(&context))
}

/// `Q: …\nA: …` blocks for each shot, followed by the rendered query.
///
/// A `{context}` placeholder in the template is replaced by the empty string.
pub fn build_fewshot_prompt(
    template: &str,
    record: &PromptRecord,
    shots: &[(String, String)],
) -> Result<String, CorpusError> {
    if !template.contains(QUERY_PLACEHOLDER) {
        return Err(CorpusError::MissingPlaceholder(QUERY_PLACEHOLDER));
    }
    if shots.is_empty() {
        return Err(CorpusError::MissingContext);
    }
    let mut out = shots
        .iter()
        .map(|(q, a)| format!("Q: {q}\nA: {a}"))
        .collect::<Vec<_>>()
        .join(CONTEXT_JOINER);
    out.push_str(CONTEXT_JOINER);
    out.push_str(&substitute(
        template,
        &[(QUERY_PLACEHOLDER, &record.query_text), (CONTEXT_PLACEHOLDER, "")],
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn chunk(text: String) -> Chunk {
        Chunk {
            chunk_id: "c".into(),
            source_path: "s".into(),
            start_offset: 0,
            text,
        }
    }

    #[test]
    fn token_approximation() {
        assert_eq!(approx_token_count(""), 0);
        assert_eq!(approx_token_count(&"x".repeat(4000)), 1000);
        assert_eq!(approx_token_count("abcde"), 2);
        assert_eq!(approx_token_count("éééé"), 1);
    }

    #[test]
    fn rag_without_chunks_has_empty_context() {
        let record = PromptRecord::new("1", "why?", Label::None);
        let prompt = build_rag_prompt("[{context}] {query}", &record, &[]).unwrap();
        assert_eq!(prompt, "[] why?");
    }

    #[test]
    fn rag_prompt_length_is_exact() {
        let template = "Context:\n{context}\nQuestion: {query}";
        let record = PromptRecord::new("1", "q".repeat(100), Label::None);
        let a = chunk("a".repeat(500));
        let b = chunk("b".repeat(500));
        let prompt = build_rag_prompt(template, &record, &[&a, &b]).unwrap();
        let overhead = template.len() - "{context}".len() - "{query}".len() + CONTEXT_JOINER.len();
        assert_eq!(prompt.chars().count(), 1100 + overhead);
    }

    #[test]
    fn rag_requires_context_placeholder() {
        let record = PromptRecord::new("1", "q", Label::None);
        assert!(build_rag_prompt("{query}", &record, &[]).is_err());
    }

    #[test]
    fn five_shots_precede_the_query() {
        let shots: Vec<(String, String)> =
            (0..5).map(|i| (format!("question {i}"), "entailment".to_string())).collect();
        let record = PromptRecord::new("t", "target?", Label::None);
        let prompt = build_fewshot_prompt("Q: {query}\nA:", &record, &shots).unwrap();
        assert_eq!(prompt.matches("\nA: entailment").count(), 5);
        let last_shot = prompt.rfind("question 4").unwrap();
        assert!(prompt.find("target?").unwrap() > last_shot);
        assert!(prompt.ends_with("Q: target?\nA:"));
    }

    #[test]
    fn fewshot_needs_shots() {
        let record = PromptRecord::new("t", "q", Label::None);
        assert!(build_fewshot_prompt("{query}", &record, &[]).is_err());
    }
}
