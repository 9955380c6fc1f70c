//! Modality and semantic-category annotation of content blocks.
//!
//! Classification is LLM-first with a deterministic rule engine behind it.
//! Live and replay clients are asked via the structured prompt below; if the
//! response cannot be parsed after a retry, or the client is a mock (whose
//! fixtures are reserved for generation tests), the rule engine supplies the
//! answer. The rule engine is total, so classification never fails.

use thiserror::Error;

use crate::ir::{ContentBlock, Modality, SemanticCategory, SpecDocument};
use crate::llm::{ChatRequest, LlmClient};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("unparseable classification response: {0}")]
    UnparseableResponse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub modality: Modality,
    pub semantic_category: SemanticCategory,
    /// Step-by-step reasoning (model output) or the rule that fired.
    pub rationale: String,
}

const SYSTEM_ROLE: &str = "You are a hardware specification analyst with expertise in signal \
semantics, interface conventions, and timing behavior. You are assisting in classifying \
document blocks extracted from layout-aware parsers.";

/// Build the classification request for one block. The user prompt states
/// the task, lists both menus, shows one worked example, serializes the
/// layout hints (omitted entirely when there are none), and ends with the
/// block content verbatim.
pub fn build_classification_prompt(block: &ContentBlock) -> ChatRequest {
    let mut user = String::from(
        "TASK DESCRIPTION\n\
         Given a structured content block from a hardware design specification extracted \
         using a layout-aware parser, identify:\n\
         - The modality of the block: {TEXT, TABLE, FORMULA, DIAGRAM}\n\
         - A semantic category from the following (including but not limited to):\n\
           - Architecture\n\
           - Module Interface\n\
           - Timing Behavior\n\
           - Control Logic\n\
           - Reset Behavior\n\
           - Configuration Info\n\
         - Reason step-by-step before giving your answer. Use both the text content and \
         any available layout hints (e.g., block type, section title) to make your judgment.\n\
         \n\
         INPUT EXAMPLE\n\
         \"The module asserts `valid` for two cycles after `ready` is high. `reset` \
         overrides this behavior.\"\n\
         \n\
         EXPECTED OUTPUT\n\
         Modality: TEXT\n\
         Semantic category: Timing Behavior\n",
    );
    if !block.layout_hints.is_empty() {
        user.push_str("\nLAYOUT HINTS\n");
        for (key, value) in &block.layout_hints {
            user.push_str(&format!("{key}: {value}\n"));
        }
    }
    user.push_str("\nCONTENT\n");
    user.push_str(&block.content);
    ChatRequest::new("classify", SYSTEM_ROLE, user)
}

/// Extract the verdict from a model response. The model is told to reason
/// first, so the last `Modality:` / `Semantic category:` pair wins and all
/// text before it is kept as the rationale.
pub fn parse_classification(response: &str) -> Result<ClassificationResult, ClassifyError> {
    let mut modality_at = None;
    let mut offset = 0usize;
    for line in response.lines() {
        let trimmed = line.trim();
        if let Some(rest) = strip_prefix_ci(trimmed, "modality:") {
            modality_at = Some((offset, rest.trim().to_string()));
        }
        offset += line.len() + 1;
    }
    let (modality_offset, modality_raw) = modality_at.ok_or_else(|| {
        ClassifyError::UnparseableResponse("no Modality line found".to_string())
    })?;
    let modality = match modality_raw.to_ascii_uppercase().as_str() {
        "TEXT" => Modality::Text,
        "TABLE" => Modality::Table,
        "FORMULA" => Modality::Formula,
        "DIAGRAM" => Modality::Diagram,
        other => {
            return Err(ClassifyError::UnparseableResponse(format!(
                "unknown modality `{other}`"
            )))
        }
    };

    let tail = &response[modality_offset..];
    let category_raw = tail
        .lines()
        .filter_map(|line| strip_prefix_ci(line.trim(), "semantic category:"))
        .next_back()
        .ok_or_else(|| {
            ClassifyError::UnparseableResponse("no Semantic category line found".to_string())
        })?;
    let label = category_raw.trim();
    if label.is_empty() {
        return Err(ClassifyError::UnparseableResponse(
            "semantic category label is empty".to_string(),
        ));
    }

    Ok(ClassificationResult {
        modality,
        semantic_category: SemanticCategory::from_label(label),
        rationale: response[..modality_offset].trim().to_string(),
    })
}

/// Render a result in the response format `parse_classification` reads, so
/// the two compose to the identity on trim-stable rationales.
pub fn render_classification(result: &ClassificationResult) -> String {
    let mut out = String::new();
    if !result.rationale.is_empty() {
        out.push_str(&result.rationale);
        out.push('\n');
    }
    out.push_str(&format!("Modality: {}\n", result.modality));
    out.push_str(&format!("Semantic category: {}", result.semantic_category));
    out
}

fn strip_prefix_ci<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    if line.len() >= prefix.len() && line[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(&line[prefix.len()..])
    } else {
        None
    }
}

/// Keyword table driving the category vote. Multi-word cues cover diagram
/// conventions (FSM arrows, waveform transition lines) that carry no
/// category keyword of their own.
const CATEGORY_CUES: &[(&str, SemanticCategory)] = &[
    ("reset", SemanticCategory::ResetBehavior),
    ("cycle", SemanticCategory::TimingBehavior),
    ("clock", SemanticCategory::TimingBehavior),
    ("after", SemanticCategory::TimingBehavior),
    ("within", SemanticCategory::TimingBehavior),
    ("stable", SemanticCategory::TimingBehavior),
    ("rise at", SemanticCategory::TimingBehavior),
    ("fall at", SemanticCategory::TimingBehavior),
    ("input", SemanticCategory::ModuleInterface),
    ("output", SemanticCategory::ModuleInterface),
    ("inout", SemanticCategory::ModuleInterface),
    ("port", SemanticCategory::ModuleInterface),
    ("interface", SemanticCategory::ModuleInterface),
    ("width", SemanticCategory::ModuleInterface),
    ("state", SemanticCategory::ControlLogic),
    ("transition", SemanticCategory::ControlLogic),
    ("fsm", SemanticCategory::ControlLogic),
    ("arbiter", SemanticCategory::ControlLogic),
    ("grant", SemanticCategory::ControlLogic),
    ("-->", SemanticCategory::ControlLogic),
    ("architecture", SemanticCategory::Architecture),
    ("block diagram", SemanticCategory::Architecture),
    ("top-level", SemanticCategory::Architecture),
    ("consists of", SemanticCategory::Architecture),
    ("datapath", SemanticCategory::Architecture),
    ("configuration", SemanticCategory::ConfigurationInfo),
    ("register map", SemanticCategory::ConfigurationInfo),
    ("programmable", SemanticCategory::ConfigurationInfo),
    ("mode", SemanticCategory::ConfigurationInfo),
];

fn vote_category(content: &str) -> (SemanticCategory, usize) {
    let lower = content.to_ascii_lowercase();
    // (votes, earliest match position) per category; more votes win, ties
    // go to the category whose first cue appears earliest in the block.
    let mut best: Option<(SemanticCategory, usize, usize)> = None;
    let mut tally: Vec<(SemanticCategory, usize, usize)> = Vec::new();
    for (cue, category) in CATEGORY_CUES {
        let mut votes = 0;
        let mut earliest = usize::MAX;
        let mut from = 0;
        while let Some(pos) = lower[from..].find(cue) {
            votes += 1;
            earliest = earliest.min(from + pos);
            from += pos + cue.len();
        }
        if votes == 0 {
            continue;
        }
        match tally.iter_mut().find(|(c, _, _)| c == category) {
            Some((_, v, e)) => {
                *v += votes;
                *e = (*e).min(earliest);
            }
            None => tally.push((category.clone(), votes, earliest)),
        }
    }
    for (category, votes, earliest) in tally {
        let better = match &best {
            None => true,
            Some((_, bv, be)) => votes > *bv || (votes == *bv && earliest < *be),
        };
        if better {
            best = Some((category, votes, earliest));
        }
    }
    match best {
        Some((category, votes, _)) => (category, votes),
        None => (SemanticCategory::Other("Unclassified".to_string()), 0),
    }
}

fn looks_like_table(block: &ContentBlock) -> bool {
    if block
        .layout_hints
        .get("block_type")
        .is_some_and(|t| t.contains("table"))
    {
        return true;
    }
    let lines: Vec<&str> = block.content.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() {
        return false;
    }
    let piped = lines.iter().filter(|l| l.trim_start().starts_with('|')).count();
    piped * 2 >= lines.len() && piped > 0
}

fn looks_like_diagram(block: &ContentBlock) -> bool {
    if block
        .layout_hints
        .get("block_type")
        .is_some_and(|t| t.contains("figure"))
    {
        return true;
    }
    let content = &block.content;
    let lower = content.to_ascii_lowercase();
    (content.contains("--(") && content.contains(")-->"))
        || lower.contains("rise at cycle")
        || lower.contains("fall at cycle")
        || lower.contains("descend at cycle")
        || lower.contains("timing diagram")
        || lower.contains("fsm diagram")
}

fn looks_like_formula(block: &ContentBlock) -> bool {
    if block
        .layout_hints
        .get("block_type")
        .is_some_and(|t| t.contains("formula"))
    {
        return true;
    }
    let lines: Vec<&str> = block.content.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() {
        return false;
    }
    let formulaic = lines
        .iter()
        .filter(|l| {
            let t = l.trim();
            t.contains('=') || t.contains('\u{2264}') || t.contains('\u{2265}')
                || t.starts_with('$')
                || (t.matches('$').count() >= 2)
        })
        .count();
    formulaic * 2 > lines.len()
}

/// Deterministic fallback classifier. Total: every block gets a verdict.
///
/// Diagram cues are checked before the formula majority rule because FSM
/// edge conditions routinely contain `==`, which would otherwise pull
/// arrow-notation blocks into FORMULA.
pub fn classify_rules(block: &ContentBlock) -> ClassificationResult {
    let (modality, rule) = if looks_like_table(block) {
        (Modality::Table, "pipe grid or table hint")
    } else if looks_like_diagram(block) {
        (Modality::Diagram, "arrow notation, transition list, or figure hint")
    } else if looks_like_formula(block) {
        (Modality::Formula, "relational lines in the majority")
    } else {
        (Modality::Text, "default")
    };
    let (category, votes) = vote_category(&block.content);
    ClassificationResult {
        rationale: format!(
            "rule-based: modality {modality} ({rule}); category {category} ({votes} keyword votes)"
        ),
        modality,
        semantic_category: category,
    }
}

/// Classify one block. Live and replay clients are consulted first; a mock
/// client, a client error, or two unparseable responses fall back to
/// `classify_rules`.
pub fn classify_block(block: &ContentBlock, client: &LlmClient) -> ClassificationResult {
    if client.is_mock() {
        return classify_rules(block);
    }
    let request = build_classification_prompt(block);
    for _ in 0..2 {
        match client.complete(&request) {
            Ok(response) => match parse_classification(&response) {
                Ok(result) => return result,
                Err(_) => continue,
            },
            Err(_) => break,
        }
    }
    classify_rules(block)
}

/// Annotate every block in place; returns the per-block results (rationales
/// included) in document order for audit.
pub fn classify_document(doc: &mut SpecDocument, client: &LlmClient) -> Vec<ClassificationResult> {
    let mut results = Vec::with_capacity(doc.blocks.len());
    for block in &mut doc.blocks {
        let result = classify_block(block, client);
        block.modality = Some(result.modality);
        block.semantic_category = Some(result.semantic_category.clone());
        results.push(result);
    }
    results
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{record_response, ClientMode, MockFixture};

    fn listing_block() -> ContentBlock {
        ContentBlock::new(
            "The module asserts `valid` for two cycles after `ready` is high. \
             `reset` overrides this behavior.",
            1,
        )
    }

    #[test]
    fn prompt_contains_required_sections_and_ends_with_content() {
        let mut block = listing_block();
        block
            .layout_hints
            .insert("block_type".to_string(), "table-like".to_string());
        let req = build_classification_prompt(&block);
        assert!(req.system.contains("hardware specification analyst"));
        assert!(req.user.contains("{TEXT, TABLE, FORMULA, DIAGRAM}"));
        assert!(req.user.contains("Timing Behavior"));
        assert!(req.user.contains("Reason step-by-step"));
        assert!(req.user.contains("block_type: table-like"));
        assert!(req.user.trim_end().ends_with(block.content.as_str()));
    }

    #[test]
    fn prompt_omits_hint_section_when_no_hints() {
        let req = build_classification_prompt(&listing_block());
        assert!(!req.user.contains("LAYOUT HINTS"));
    }

    #[test]
    fn parse_canonical_output() {
        let result = parse_classification("Modality: TEXT\nSemantic category: Timing Behavior")
            .unwrap();
        assert_eq!(result.modality, Modality::Text);
        assert_eq!(result.semantic_category, SemanticCategory::TimingBehavior);
        assert_eq!(result.rationale, "");
    }

    #[test]
    fn parse_keeps_reasoning_and_maps_unknown_category() {
        let response = "The block is a grid of register names.\n\
                        Modality: TABLE\nSemantic category: Register Map";
        let result = parse_classification(response).unwrap();
        assert_eq!(result.modality, Modality::Table);
        assert_eq!(
            result.semantic_category,
            SemanticCategory::Other("Register Map".to_string())
        );
        assert_eq!(result.rationale, "The block is a grid of register names.");
    }

    #[test]
    fn parse_uses_last_verdict_pair() {
        let response = "The example shows:\nModality: TEXT\nSemantic category: Timing Behavior\n\
                        But this block is different.\n\
                        Modality: DIAGRAM\nSemantic category: Control Logic";
        let result = parse_classification(response).unwrap();
        assert_eq!(result.modality, Modality::Diagram);
        assert_eq!(result.semantic_category, SemanticCategory::ControlLogic);
    }

    #[test]
    fn parse_rejects_verdictless_text() {
        assert!(matches!(
            parse_classification("I cannot classify this."),
            Err(ClassifyError::UnparseableResponse(_))
        ));
    }

    #[test]
    fn render_then_parse_is_identity() {
        let original = ClassificationResult {
            modality: Modality::Formula,
            semantic_category: SemanticCategory::Other("Register Map".to_string()),
            rationale: "Two relational lines dominate the block.".to_string(),
        };
        let round = parse_classification(&render_classification(&original)).unwrap();
        assert_eq!(round, original);
    }

    #[test]
    fn rules_classify_listing_text_as_timing() {
        let result = classify_rules(&listing_block());
        assert_eq!(result.modality, Modality::Text);
        assert_eq!(result.semantic_category, SemanticCategory::TimingBehavior);
    }

    #[test]
    fn rules_classify_fsm_arrows_as_control_diagram() {
        let block = ContentBlock::new("IDLE --(start)--> REQ", 1);
        let result = classify_rules(&block);
        assert_eq!(result.modality, Modality::Diagram);
        assert_eq!(result.semantic_category, SemanticCategory::ControlLogic);
    }

    #[test]
    fn rules_classify_pipe_grid_as_interface_table() {
        let block = ContentBlock::new("| name | dir | width |", 1);
        let result = classify_rules(&block);
        assert_eq!(result.modality, Modality::Table);
        assert_eq!(result.semantic_category, SemanticCategory::ModuleInterface);
    }

    #[test]
    fn rules_classify_waveform_transitions_as_timing_diagram() {
        let block = ContentBlock::new(
            "Signal transitions:\n- ien rise at cycle 44\n- irq_flag rise at cycle 44",
            1,
        );
        let result = classify_rules(&block);
        assert_eq!(result.modality, Modality::Diagram);
        assert_eq!(result.semantic_category, SemanticCategory::TimingBehavior);
    }

    #[test]
    fn rules_classify_equation_lines_as_formula() {
        let block = ContentBlock::new("$ baud = f_clk / (16 * divisor) $", 1);
        let result = classify_rules(&block);
        assert_eq!(result.modality, Modality::Formula);
    }

    #[test]
    fn rules_honor_table_hint_without_pipes() {
        let mut block = ContentBlock::new("name dir width", 1);
        block
            .layout_hints
            .insert("block_type".to_string(), "table-like".to_string());
        assert_eq!(classify_rules(&block).modality, Modality::Table);
    }

    #[test]
    fn mock_mode_uses_rules_not_fixtures() {
        let dir = tempfile::tempdir().unwrap();
        let fixture = MockFixture {
            tag: "classify".to_string(),
            contains: vec![],
            response: "Modality: DIAGRAM\nSemantic category: Architecture".to_string(),
        };
        std::fs::write(
            dir.path().join("classify.json"),
            serde_json::to_string(&fixture).unwrap(),
        )
        .unwrap();
        let client = LlmClient::new(ClientMode::Mock {
            fixture_dir: dir.path().to_path_buf(),
        });
        let result = classify_block(&listing_block(), &client);
        assert_eq!(result.modality, Modality::Text);
        assert_eq!(result.semantic_category, SemanticCategory::TimingBehavior);
    }

    #[test]
    fn replay_mode_prefers_recorded_verdict() {
        let dir = tempfile::tempdir().unwrap();
        let block = listing_block();
        let request = build_classification_prompt(&block);
        record_response(
            dir.path(),
            &request,
            "test-model",
            "Reasoning here.\nModality: TEXT\nSemantic category: Reset Behavior",
        )
        .unwrap();
        let client = LlmClient::new(ClientMode::Replay {
            cache_dir: dir.path().to_path_buf(),
            model: "test-model".to_string(),
        });
        let result = classify_block(&block, &client);
        assert_eq!(result.semantic_category, SemanticCategory::ResetBehavior);
    }

    #[test]
    fn replay_miss_falls_back_to_rules() {
        let dir = tempfile::tempdir().unwrap();
        let client = LlmClient::new(ClientMode::Replay {
            cache_dir: dir.path().to_path_buf(),
            model: "test-model".to_string(),
        });
        let result = classify_block(&listing_block(), &client);
        assert_eq!(result.semantic_category, SemanticCategory::TimingBehavior);
        assert!(result.rationale.starts_with("rule-based"));
    }

    #[test]
    fn classify_document_annotates_every_block() {
        let mut doc = SpecDocument::new(
            "demo",
            vec![listing_block(), ContentBlock::new("| a | b |", 1)],
        );
        let client = LlmClient::new(ClientMode::Mock {
            fixture_dir: std::env::temp_dir(),
        });
        let results = classify_document(&mut doc, &client);
        assert_eq!(results.len(), 2);
        assert!(doc.blocks.iter().all(|b| b.is_classified()));
    }
}
