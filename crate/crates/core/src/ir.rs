//! Block-level document model produced by ingestion.
//!
//! A specification arrives as an ordered stream of content blocks, each one
//! a fragment of the original document (a paragraph, a table, a formula, a
//! diagram description) enriched with whatever layout metadata the upstream
//! segmenter produced. Blocks start life unclassified; the classification
//! stage fills in [`Modality`] and [`SemanticCategory`] before the analyzers
//! consume them.
//!
//! On disk a document is a JSONL stream: a `meta` first line naming the
//! design, then one JSON object per block. [`split_plaintext`] offers a
//! fallback for raw text with no segmenter output at all.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IrError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("invalid block at index {index}: {message}")]
    InvalidBlock { index: usize, message: String },
    #[error("input text is empty")]
    EmptyInput,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Structural kind of a content block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modality {
    Text,
    Table,
    Formula,
    Diagram,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Modality::Text => "TEXT",
            Modality::Table => "TABLE",
            Modality::Formula => "FORMULA",
            Modality::Diagram => "DIAGRAM",
        };
        f.write_str(s)
    }
}

/// Functional role of a block within the specification.
///
/// The named variants cover the categories the pipeline acts on; anything
/// else is preserved verbatim under [`SemanticCategory::Other`] so that no
/// classifier output is lost.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SemanticCategory {
    Architecture,
    ModuleInterface,
    TimingBehavior,
    ControlLogic,
    ResetBehavior,
    ConfigurationInfo,
    Other(String),
}

impl SemanticCategory {
    /// Canonical label, as written in prompts and stored on disk.
    pub fn label(&self) -> &str {
        match self {
            SemanticCategory::Architecture => "Architecture",
            SemanticCategory::ModuleInterface => "Module Interface",
            SemanticCategory::TimingBehavior => "Timing Behavior",
            SemanticCategory::ControlLogic => "Control Logic",
            SemanticCategory::ResetBehavior => "Reset Behavior",
            SemanticCategory::ConfigurationInfo => "Configuration Info",
            SemanticCategory::Other(label) => label,
        }
    }

    /// Case-insensitive mapping from a free-text label to the enum; labels
    /// that match no known category come back as `Other` with the original
    /// trimmed text preserved.
    pub fn from_label(label: &str) -> SemanticCategory {
        let trimmed = label.trim();
        let folded: String = trimmed
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match folded.as_str() {
            "architecture" => SemanticCategory::Architecture,
            "moduleinterface"
            | "interfacedeclaration"
            | "moduleinterfacedeclaration"
            | "moduledeclaration" => SemanticCategory::ModuleInterface,
            "timingbehavior" => SemanticCategory::TimingBehavior,
            "controllogic" => SemanticCategory::ControlLogic,
            "resetbehavior" => SemanticCategory::ResetBehavior,
            "configurationinfo" | "configurationinformation" => {
                SemanticCategory::ConfigurationInfo
            }
            _ => SemanticCategory::Other(trimmed.to_string()),
        }
    }
}

impl fmt::Display for SemanticCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for SemanticCategory {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for SemanticCategory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        if raw.trim().is_empty() {
            return Err(D::Error::custom("semantic category label is empty"));
        }
        Ok(SemanticCategory::from_label(&raw))
    }
}

/// Page-relative block position, each coordinate a fraction of the page in
/// `[0, 1]` with `(x0, y0)` the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    fn validate(&self) -> Result<(), String> {
        let coords = [self.x0, self.y0, self.x1, self.y1];
        if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(format!(
                "bounding box coordinates must lie in [0, 1]: {self:?}"
            ));
        }
        if self.x0 > self.x1 || self.y0 > self.y1 {
            return Err(format!("bounding box corners are inverted: {self:?}"));
        }
        Ok(())
    }
}

/// One layout-segmented fragment of the specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentBlock {
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_category: Option<SemanticCategory>,
    pub page_number: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounding_box: Option<BoundingBox>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub layout_hints: BTreeMap<String, String>,
}

impl ContentBlock {
    pub fn new(content: impl Into<String>, page_number: u32) -> ContentBlock {
        ContentBlock {
            content: content.into(),
            modality: None,
            semantic_category: None,
            page_number,
            bounding_box: None,
            layout_hints: BTreeMap::new(),
        }
    }

    /// True once both classification attributes are present.
    pub fn is_classified(&self) -> bool {
        self.modality.is_some() && self.semantic_category.is_some()
    }

    fn validate(&self) -> Result<(), String> {
        if self.content.trim().is_empty() {
            return Err("content is empty".to_string());
        }
        if self.page_number == 0 {
            return Err("page_number must be at least 1".to_string());
        }
        if let Some(SemanticCategory::Other(label)) = &self.semantic_category {
            if label.trim().is_empty() {
                return Err("semantic category label is empty".to_string());
            }
        }
        if let Some(bbox) = &self.bounding_box {
            bbox.validate()?;
        }
        Ok(())
    }
}

/// A complete specification: named design plus its ordered block stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecDocument {
    pub design_name: String,
    pub blocks: Vec<ContentBlock>,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: Meta,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    design_name: String,
}

impl SpecDocument {
    pub fn new(design_name: impl Into<String>, blocks: Vec<ContentBlock>) -> SpecDocument {
        SpecDocument {
            design_name: design_name.into(),
            blocks,
        }
    }

    /// Serialize to the JSONL interchange form: meta line, then one block
    /// per line in document order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let meta = MetaLine {
            meta: Meta {
                design_name: self.design_name.clone(),
            },
        };
        out.push_str(&serde_json::to_string(&meta).expect("meta serializes"));
        out.push('\n');
        for block in &self.blocks {
            out.push_str(&serde_json::to_string(block).expect("block serializes"));
            out.push('\n');
        }
        out
    }

    /// Parse the JSONL interchange form, validating every block.
    pub fn from_jsonl(text: &str) -> Result<SpecDocument, IrError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let meta_line = lines
            .next()
            .ok_or_else(|| IrError::MalformedDocument("document is empty".to_string()))?;
        let meta: MetaLine = serde_json::from_str(meta_line).map_err(|e| {
            IrError::MalformedDocument(format!("first line is not a meta record: {e}"))
        })?;
        if meta.meta.design_name.trim().is_empty() {
            return Err(IrError::MalformedDocument(
                "design_name is empty".to_string(),
            ));
        }

        let mut blocks = Vec::new();
        for (index, line) in lines.enumerate() {
            let block: ContentBlock = serde_json::from_str(line).map_err(|e| {
                IrError::MalformedDocument(format!("block line {}: {e}", index + 1))
            })?;
            block
                .validate()
                .map_err(|message| IrError::InvalidBlock { index, message })?;
            blocks.push(block);
        }
        if blocks.is_empty() {
            return Err(IrError::MalformedDocument(
                "document has no blocks".to_string(),
            ));
        }
        Ok(SpecDocument {
            design_name: meta.meta.design_name,
            blocks,
        })
    }
}

/// Load and validate a block-stream document from disk.
pub fn load_spec(path: &Path) -> Result<SpecDocument, IrError> {
    let text = fs::read_to_string(path)?;
    SpecDocument::from_jsonl(&text)
}

/// Write a document in the same JSONL form [`load_spec`] reads.
pub fn save_spec(doc: &SpecDocument, path: &Path) -> Result<(), IrError> {
    fs::write(path, doc.to_jsonl())?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum LineKind {
    Blank,
    Table,
    Formula,
    Prose,
}

fn line_kind(line: &str) -> LineKind {
    let trimmed = line.trim_start();
    if trimmed.trim().is_empty() {
        LineKind::Blank
    } else if trimmed.starts_with('|') {
        LineKind::Table
    } else if trimmed.starts_with('$') {
        LineKind::Formula
    } else {
        LineKind::Prose
    }
}

/// Split raw text into blocks when no segmenter output is available.
///
/// Paragraphs break on blank lines. Runs of `|`-prefixed lines and runs of
/// `$`-prefixed lines are fenced into their own blocks (tagged with a
/// `block_type` layout hint) even without surrounding blank lines, so a
/// table embedded mid-paragraph survives as one unit. Every block lands on
/// page 1.
pub fn split_plaintext(text: &str, design_name: &str) -> Result<SpecDocument, IrError> {
    if text.trim().is_empty() {
        return Err(IrError::EmptyInput);
    }

    let mut blocks = Vec::new();
    let mut run: Vec<&str> = Vec::new();
    let mut run_kind = LineKind::Blank;

    let flush = |run: &mut Vec<&str>, kind: LineKind, blocks: &mut Vec<ContentBlock>| {
        if run.is_empty() {
            return;
        }
        let content = run.join("\n").trim().to_string();
        run.clear();
        if content.is_empty() {
            return;
        }
        let mut block = ContentBlock::new(content, 1);
        match kind {
            LineKind::Table => {
                block
                    .layout_hints
                    .insert("block_type".to_string(), "table-like".to_string());
            }
            LineKind::Formula => {
                block
                    .layout_hints
                    .insert("block_type".to_string(), "formula-like".to_string());
            }
            _ => {}
        }
        blocks.push(block);
    };

    for line in text.lines() {
        let kind = line_kind(line);
        match kind {
            LineKind::Blank => {
                flush(&mut run, run_kind, &mut blocks);
            }
            _ => {
                if kind != run_kind {
                    flush(&mut run, run_kind, &mut blocks);
                }
                run.push(line);
                run_kind = kind;
            }
        }
    }
    flush(&mut run, run_kind, &mut blocks);

    Ok(SpecDocument::new(design_name, blocks))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_block() -> ContentBlock {
        ContentBlock::new(
            "The module asserts `valid` for two cycles after `ready` is high. \
             `reset` overrides this behavior.",
            1,
        )
    }

    #[test]
    fn load_single_block_document() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.jsonl");
        let doc = SpecDocument::new("demo", vec![sample_block()]);
        save_spec(&doc, &path).unwrap();

        let loaded = load_spec(&path).unwrap();
        assert_eq!(loaded.blocks.len(), 1);
        assert!(!loaded.blocks[0].is_classified());
        assert!(loaded.blocks[0].content.contains("asserts `valid`"));
    }

    #[test]
    fn empty_block_list_is_malformed() {
        let err = SpecDocument::from_jsonl("{\"meta\":{\"design_name\":\"demo\"}}\n").unwrap_err();
        assert!(matches!(err, IrError::MalformedDocument(_)));
    }

    #[test]
    fn page_number_zero_is_invalid_at_index() {
        let text = "{\"meta\":{\"design_name\":\"demo\"}}\n\
                    {\"content\":\"ok\",\"page_number\":0}\n";
        let err = SpecDocument::from_jsonl(text).unwrap_err();
        assert!(matches!(err, IrError::InvalidBlock { index: 0, .. }));
    }

    #[test]
    fn missing_meta_line_is_malformed() {
        let text = "{\"content\":\"ok\",\"page_number\":1}\n";
        let err = SpecDocument::from_jsonl(text).unwrap_err();
        assert!(matches!(err, IrError::MalformedDocument(_)));
    }

    #[test]
    fn inverted_bounding_box_is_invalid() {
        let text = "{\"meta\":{\"design_name\":\"demo\"}}\n\
                    {\"content\":\"ok\",\"page_number\":1,\
                     \"bounding_box\":{\"x0\":0.9,\"y0\":0.1,\"x1\":0.2,\"y1\":0.4}}\n";
        let err = SpecDocument::from_jsonl(text).unwrap_err();
        assert!(matches!(err, IrError::InvalidBlock { index: 0, .. }));
    }

    #[test]
    fn jsonl_round_trip_is_field_exact() {
        let mut classified = sample_block();
        classified.modality = Some(Modality::Text);
        classified.semantic_category = Some(SemanticCategory::TimingBehavior);
        classified.bounding_box = Some(BoundingBox {
            x0: 0.1,
            y0: 0.2,
            x1: 0.8,
            y1: 0.4,
        });
        classified
            .layout_hints
            .insert("section".to_string(), "3.2".to_string());
        let mut other = ContentBlock::new("| a | b |", 2);
        other.modality = Some(Modality::Table);
        other.semantic_category = Some(SemanticCategory::Other("Register Map".to_string()));

        let doc = SpecDocument::new("uart", vec![classified, other]);
        let round = SpecDocument::from_jsonl(&doc.to_jsonl()).unwrap();
        assert_eq!(round, doc);
    }

    #[test]
    fn category_labels_normalize_case_insensitively() {
        assert_eq!(
            SemanticCategory::from_label("timing behavior"),
            SemanticCategory::TimingBehavior
        );
        assert_eq!(
            SemanticCategory::from_label("Module/Interface Declaration"),
            SemanticCategory::ModuleInterface
        );
        assert_eq!(
            SemanticCategory::from_label("Register Map"),
            SemanticCategory::Other("Register Map".to_string())
        );
    }

    #[test]
    fn split_two_paragraphs() {
        let doc = split_plaintext("first paragraph\n\nsecond paragraph\n", "demo").unwrap();
        assert_eq!(doc.blocks.len(), 2);
        assert_eq!(doc.blocks[0].content, "first paragraph");
        assert_eq!(doc.blocks[1].content, "second paragraph");
        assert!(doc.blocks.iter().all(|b| b.page_number == 1));
    }

    #[test]
    fn split_fences_table_rows_into_one_block() {
        let text = "intro text\n| name | dir |\n| clk | input |\n| rst | input |\nafter\n";
        let doc = split_plaintext(text, "demo").unwrap();
        assert_eq!(doc.blocks.len(), 3);
        assert_eq!(
            doc.blocks[1].layout_hints.get("block_type").map(String::as_str),
            Some("table-like")
        );
        assert_eq!(doc.blocks[1].content.lines().count(), 3);
    }

    #[test]
    fn split_fences_formula_lines() {
        let text = "$ throughput = burst / cycles\n\nplain prose\n";
        let doc = split_plaintext(text, "demo").unwrap();
        assert_eq!(doc.blocks.len(), 2);
        assert_eq!(
            doc.blocks[0].layout_hints.get("block_type").map(String::as_str),
            Some("formula-like")
        );
    }

    #[test]
    fn split_rejects_whitespace_only_input() {
        let err = split_plaintext("  \n\t\n", "demo").unwrap_err();
        assert!(matches!(err, IrError::EmptyInput));
    }

    #[test]
    fn split_preserves_every_character() {
        let text = "alpha beta\n| x | y |\n$ z = 1\ngamma\n\ndelta";
        let doc = split_plaintext(text, "demo").unwrap();
        let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        let joined: String = doc.blocks.iter().map(|b| b.content.as_str()).collect();
        assert_eq!(strip(&joined), strip(text));
    }
}
