//! Modality-specific extraction of structured records from classified
//! blocks.
//!
//! Each analyzer turns one kind of block into a typed record: prose into
//! module/port declarations, FSM edge lists into transitions plus
//! pseudocode, waveform transition lists into bounded temporal constraints,
//! pipe grids into table records, and relational expressions into formula
//! records. Only the text analyzer consults the LLM; the rest are
//! mechanical, which keeps the temporal math independently testable.

use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{ContentBlock, Modality, SpecDocument};
use crate::llm::{ChatRequest, LlmClient};
use crate::sva::TemporalConstraint;

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("unparseable analyzer response: {0}")]
    UnparseableResponse(String),
    #[error("no FSM transitions found in block")]
    NoTransitionsFound,
    #[error("no rising trigger event among the timing events")]
    NoTriggerEvent,
    #[error("ragged table: {0}")]
    RaggedTable(String),
    #[error("no relational operator found in `{0}`")]
    NoRelationFound(String),
    #[error("block {index} is not classified")]
    UnclassifiedBlock { index: usize },
    #[error("block cannot be analyzed: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
    Inout,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Direction::Input => "input",
            Direction::Output => "output",
            Direction::Inout => "inout",
        };
        f.write_str(s)
    }
}

impl Direction {
    pub(crate) fn parse(s: &str) -> Option<Direction> {
        match s.trim().to_ascii_lowercase().as_str() {
            "input" => Some(Direction::Input),
            "output" => Some(Direction::Output),
            "inout" => Some(Direction::Inout),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortDecl {
    pub name: String,
    pub direction: Direction,
    pub width: u32,
    #[serde(default)]
    pub description: String,
}

/// Structured result of the text analyzer. Absent fields stay empty; the
/// analyzer never invents content the paragraph does not state.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModuleInfo {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub ports: Vec<PortDecl>,
    #[serde(default)]
    pub implementation: BTreeMap<String, String>,
    #[serde(default)]
    pub example_usage: String,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub module_interface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmTransition {
    pub source: String,
    pub condition: String,
    pub destination: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsmAnalysis {
    pub transitions: Vec<FsmTransition>,
    pub pseudocode: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Rise,
    Fall,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimingEvent {
    pub signal: String,
    pub edge: EdgeKind,
    pub cycle: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Interface,
    Register,
    Mode,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRecord {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub inferred_kind: TableKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Relation::Eq => "=",
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Lt => "<",
            Relation::Gt => ">",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaRecord {
    pub lhs: String,
    pub relation: Relation,
    pub rhs: String,
    pub prose: String,
}

/// One analyzer result, tagged for the JSONL records stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyzerRecord {
    ModuleInfo(ModuleInfo),
    Fsm(FsmAnalysis),
    Timing(TemporalConstraint),
    Table(TableRecord),
    Formula(FormulaRecord),
}

/// Analyzer record plus the block it came from, for traceability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedRecord {
    pub block_index: usize,
    pub page_number: u32,
    #[serde(flatten)]
    pub record: AnalyzerRecord,
}

const TEXT_SYSTEM_ROLE: &str = "You are an expert digital hardware design analyst.";

/// Build the text-analyzer request: the YAML schema, the extraction rules,
/// and the paragraph itself.
pub fn build_text_prompt(block: &ContentBlock) -> ChatRequest {
    let mut user = String::from(
        "TASK DESCRIPTION\n\
         You will be given a paragraph from hardware specifications.\n\
         Your job is to extract structured design information using the following YAML schema:\n\
         ---\n\
         name: string\n\
         description: string\n\
         ports:\n\
           - name: string\n\
             direction: input | output | inout\n\
             width: int\n\
             description: string\n\
         implementation:\n\
           reset: string\n\
           accumulation: string\n\
           output_behavior: string\n\
           counter_operation: string\n\
         example_usage: string\n\
         notes:\n\
           - string\n\
         module_interface: string\n\
         ---\n\
         \n\
         INSTRUCTIONS\n\
         - Use only the information present in the paragraph.\n\
         - Do not invent missing fields; leave them blank or as empty lists.\n\
         - Maintain accurate terminology and formatting.\n\
         \n\
         INPUT\n",
    );
    user.push_str(&block.content);
    ChatRequest::new("analyze", TEXT_SYSTEM_ROLE, user)
}

fn split_kv(line: &str) -> Option<(String, String)> {
    let (key, value) = line.split_once(':')?;
    let value = value.trim().trim_matches('"').to_string();
    Some((key.trim().to_ascii_lowercase(), value))
}

#[derive(Default)]
struct PortDraft {
    name: Option<String>,
    direction: Option<String>,
    width: Option<String>,
    description: String,
}

impl PortDraft {
    fn apply(&mut self, key: &str, value: String) {
        match key {
            "name" => self.name = Some(value),
            "direction" | "i/o directions" | "dir" => self.direction = Some(value),
            "width" => self.width = Some(value),
            "description" => self.description = value,
            _ => {}
        }
    }

    fn finish(self) -> Result<PortDecl, AnalyzeError> {
        let name = self
            .name
            .filter(|n| !n.is_empty())
            .ok_or_else(|| AnalyzeError::UnparseableResponse("port without a name".to_string()))?;
        let direction_raw = self.direction.unwrap_or_default();
        let direction = Direction::parse(&direction_raw).ok_or_else(|| {
            AnalyzeError::UnparseableResponse(format!(
                "port `{name}` has invalid direction `{direction_raw}`"
            ))
        })?;
        // Unstated widths default to a single bit, the usual convention for
        // control signals; a stated width must be a positive integer.
        let width = match self.width.as_deref().map(str::trim) {
            None | Some("") => 1,
            Some(raw) => raw.parse::<u32>().ok().filter(|w| *w >= 1).ok_or_else(|| {
                AnalyzeError::UnparseableResponse(format!(
                    "port `{name}` has non-integer width `{raw}`"
                ))
            })?,
        };
        Ok(PortDecl {
            name,
            direction,
            width,
            description: self.description,
        })
    }
}

enum YamlSection {
    Top,
    Ports,
    Implementation,
    Notes,
}

const PORT_FIELDS: &[&str] = &["name", "direction", "i/o directions", "dir", "width", "description"];

/// Parse the YAML-style analyzer response. Tolerant of two model quirks:
/// list items emitted without indentation, and the two-column port layout
/// (`- name: clk  - direction: input`), which is split before each dashed
/// known key.
pub fn parse_module_info(response: &str) -> Result<ModuleInfo, AnalyzeError> {
    let seg_re = Regex::new(r"\s-\s*(?:name|direction|width|description)\s*:").unwrap();
    let mut info = ModuleInfo::default();
    let mut section = YamlSection::Top;
    let mut drafts: Vec<PortDraft> = Vec::new();

    for raw in response.lines() {
        let line = raw.trim_end();
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed == "---" || trimmed.starts_with("```") {
            continue;
        }
        let indented = line.len() > trimmed.len();

        if let Some(item) = trimmed.strip_prefix('-') {
            match section {
                YamlSection::Ports => {
                    drafts.push(PortDraft::default());
                    let body = item.trim_start();
                    // Split multi-field lines at each ` - key:` boundary.
                    let mut pieces = Vec::new();
                    let mut start = 0;
                    for m in seg_re.find_iter(body) {
                        pieces.push(&body[start..m.start()]);
                        start = m.start();
                    }
                    pieces.push(&body[start..]);
                    let draft = drafts.last_mut().expect("just pushed");
                    for piece in pieces {
                        let piece = piece.trim().trim_start_matches('-').trim_start();
                        if let Some((key, value)) = split_kv(piece) {
                            draft.apply(&key, value);
                        }
                    }
                }
                YamlSection::Notes => {
                    let item = item.trim();
                    if !item.is_empty() {
                        info.notes.push(item.to_string());
                    }
                }
                _ => {}
            }
            continue;
        }

        let Some((key, value)) = split_kv(trimmed) else {
            continue;
        };
        let top_key = matches!(
            key.as_str(),
            "name" | "description" | "ports" | "implementation" | "example_usage" | "notes"
                | "module_interface"
        );
        // A port continuation field shares key names with the top level
        // ("name", "description"); indentation resolves the ambiguity, and
        // unindented continuations are still caught when the key is not a
        // top-level one.
        let port_field = matches!(section, YamlSection::Ports)
            && !drafts.is_empty()
            && PORT_FIELDS.contains(&key.as_str())
            && (indented || !top_key);
        if port_field {
            drafts.last_mut().expect("checked non-empty").apply(&key, value);
            continue;
        }
        if (!indented || matches!(section, YamlSection::Top)) && top_key {
            match key.as_str() {
                "name" => info.name = value,
                "description" => info.description = value,
                "example_usage" => info.example_usage = value,
                "module_interface" => info.module_interface = value,
                "ports" => section = YamlSection::Ports,
                "implementation" => section = YamlSection::Implementation,
                "notes" => section = YamlSection::Notes,
                _ => unreachable!(),
            }
            if matches!(
                key.as_str(),
                "name" | "description" | "example_usage" | "module_interface"
            ) {
                section = YamlSection::Top;
            }
            continue;
        }
        if matches!(section, YamlSection::Implementation) && !value.is_empty() {
            info.implementation.insert(key, value);
        }
    }

    info.ports = drafts
        .into_iter()
        .map(PortDraft::finish)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(info)
}

/// Deterministic extraction for offline runs: backticked port declarations
/// ("output `ack` (1 bit) acknowledges transfer") and a backticked module
/// name, straight from the prose.
pub fn extract_module_info_offline(block: &ContentBlock) -> ModuleInfo {
    let port_re = Regex::new(
        r"(?i)\b(input|output|inout)\s+`([A-Za-z_]\w*)`(?:\s*\((\d+)\s*-?\s*bits?\))?\s*([^.;\n]*)",
    )
    .unwrap();
    let name_re = Regex::new(r"(?i)\bmodule\s+`([A-Za-z_]\w*)`|`([A-Za-z_]\w*)`\s+module\b")
        .unwrap();

    let mut info = ModuleInfo::default();
    if let Some(caps) = name_re.captures(&block.content) {
        if let Some(name) = caps.get(1).or(caps.get(2)) {
            info.name = name.as_str().to_string();
        }
    }
    for caps in port_re.captures_iter(&block.content) {
        let direction = Direction::parse(&caps[1]).expect("regex restricts direction");
        let width = caps
            .get(3)
            .and_then(|w| w.as_str().parse::<u32>().ok())
            .unwrap_or(1)
            .max(1);
        info.ports.push(PortDecl {
            name: caps[2].to_string(),
            direction,
            width,
            description: caps.get(4).map_or("", |m| m.as_str()).trim().to_string(),
        });
    }
    info
}

/// Extract module and port structure from a prose block. The LLM response
/// is parsed against the YAML schema with one retry; a client error (no
/// fixture, cache miss, transport) falls back to the offline extractor so
/// the pipeline stays hermetic.
pub fn analyze_text(block: &ContentBlock, client: &LlmClient) -> Result<ModuleInfo, AnalyzeError> {
    let request = build_text_prompt(block);
    let mut last_err = None;
    for _ in 0..2 {
        match client.complete(&request) {
            Ok(response) => match parse_module_info(&response) {
                Ok(info) => return Ok(info),
                Err(e) => last_err = Some(e),
            },
            Err(_) => return Ok(extract_module_info_offline(block)),
        }
    }
    Err(last_err.expect("loop ran"))
}

/// Parse `SRC --(cond)--> DST` edges into transitions plus one pseudocode
/// line per edge, in the fixed `if (state == SRC && cond) then next_state =
/// DST;` shape.
pub fn analyze_fsm(block: &ContentBlock) -> Result<FsmAnalysis, AnalyzeError> {
    let edge_re = Regex::new(
        r"([A-Za-z_]\w*)\s*--\(\s*((?:[^()]|\([^()]*\))*?)\s*\)-->\s*([A-Za-z_]\w*)",
    )
    .unwrap();
    let mut transitions = Vec::new();
    for caps in edge_re.captures_iter(&block.content) {
        let condition = caps[2].trim();
        transitions.push(FsmTransition {
            source: caps[1].to_string(),
            // An unconditional edge still needs a well-formed guard.
            condition: if condition.is_empty() { "1" } else { condition }.to_string(),
            destination: caps[3].to_string(),
        });
    }
    if transitions.is_empty() {
        return Err(AnalyzeError::NoTransitionsFound);
    }
    let pseudocode = transitions
        .iter()
        .map(|t| {
            format!(
                "if (state == {} && {}) then next_state = {};",
                t.source, t.condition, t.destination
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(FsmAnalysis {
        transitions,
        pseudocode,
    })
}

/// Pull `signal rise/fall at cycle N` events out of waveform-description
/// text. A clause without a signal name ("..., descend at cycle 51")
/// inherits the previous event's signal.
pub fn extract_timing_events(text: &str) -> Vec<TimingEvent> {
    let event_re = Regex::new(
        r"(?i)(?:\b([A-Za-z_]\w*)\s+)?\b(rise|fall|descend)(?:s)?\s+at\s+cycle\s+(\d+)",
    )
    .unwrap();
    let mut events = Vec::new();
    let mut last_signal: Option<String> = None;
    for caps in event_re.captures_iter(text) {
        let signal = match caps.get(1) {
            Some(m) => {
                let s = m.as_str().to_string();
                last_signal = Some(s.clone());
                s
            }
            None => match &last_signal {
                Some(s) => s.clone(),
                None => continue,
            },
        };
        let edge = match caps[2].to_ascii_lowercase().as_str() {
            "rise" => EdgeKind::Rise,
            _ => EdgeKind::Fall,
        };
        let cycle: u32 = caps[3].parse().expect("regex restricts digits");
        events.push(TimingEvent {
            signal,
            edge,
            cycle,
        });
    }
    events
}

fn pluralize(n: u32) -> &'static str {
    if n == 1 {
        "cycle"
    } else {
        "cycles"
    }
}

/// Derive a bounded temporal constraint from transition events.
///
/// The trigger is the earliest rising signal (ties go to event order). For
/// every other signal rising at cycle `r` relative to trigger cycle `t`,
/// the response window is `F[r-t : r-t+1]`; a fall at `f` adds the hold
/// window `G[0 : f-r-2]` when that upper bound is non-negative.
pub fn analyze_timing(events: &[TimingEvent]) -> Result<TemporalConstraint, AnalyzeError> {
    let trigger = events
        .iter()
        .filter(|e| e.edge == EdgeKind::Rise)
        .min_by_key(|e| e.cycle)
        .ok_or(AnalyzeError::NoTriggerEvent)?
        .clone();
    let t = trigger.cycle;

    let mut seen: Vec<&str> = Vec::new();
    let mut parts = Vec::new();
    let mut prose_parts = Vec::new();
    for event in events {
        if event.signal == trigger.signal
            || event.edge != EdgeKind::Rise
            || seen.iter().any(|s| *s == event.signal)
        {
            continue;
        }
        seen.push(&event.signal);
        let s = &event.signal;
        let r = event.cycle;
        let lo = r - t;
        let hi = lo + 1;
        let mut formula = format!("F[{lo}:{hi}] {s}");
        let mut prose = format!("{s} becomes high within {hi} {}", pluralize(hi));
        let fall = events
            .iter()
            .find(|e| e.signal == *s && e.edge == EdgeKind::Fall && e.cycle > r);
        if let Some(fall) = fall {
            if fall.cycle >= r + 2 {
                let hold_hi = fall.cycle - r - 2;
                let held = fall.cycle - r - 1;
                formula.push_str(&format!(" && G[0:{hold_hi}] {s}"));
                prose.push_str(&format!(" and remains high for {held} {}", pluralize(held)));
            }
        }
        parts.push(formula);
        prose_parts.push(prose);
    }
    if parts.is_empty() {
        // A trigger with nothing responding to it carries no constraint.
        return Err(AnalyzeError::NoTriggerEvent);
    }

    let prose = format!(
        "After {} is asserted, {}.",
        trigger.signal,
        prose_parts.join("; ")
    );
    let constraint = TemporalConstraint::new(trigger.signal, parts.join(" && "), prose)
        .expect("derived bounds are well-formed");
    Ok(constraint)
}

fn is_separator_row(cells: &[String]) -> bool {
    cells.iter().all(|c| {
        let t = c.trim().trim_matches(':');
        !t.is_empty() && t.chars().all(|ch| ch == '-')
    })
}

/// Parse a `|`-grid into header and rows, inferring what the table is
/// about from header keywords. Cell text is preserved verbatim apart from
/// boundary trimming.
pub fn analyze_table(block: &ContentBlock) -> Result<TableRecord, AnalyzeError> {
    let mut grid: Vec<Vec<String>> = Vec::new();
    for line in block.content.lines() {
        let trimmed = line.trim();
        if !trimmed.starts_with('|') {
            continue;
        }
        let inner = trimmed.trim_start_matches('|').trim_end_matches('|');
        let cells: Vec<String> = inner.split('|').map(|c| c.trim().to_string()).collect();
        if is_separator_row(&cells) {
            continue;
        }
        grid.push(cells);
    }
    if grid.is_empty() {
        return Err(AnalyzeError::RaggedTable(
            "no `|` grid lines found".to_string(),
        ));
    }
    let header = grid.remove(0);
    for (i, row) in grid.iter().enumerate() {
        if row.len() != header.len() {
            return Err(AnalyzeError::RaggedTable(format!(
                "row {} has {} cells, header has {}",
                i + 1,
                row.len(),
                header.len()
            )));
        }
    }

    let joined = header.join(" ").to_ascii_lowercase();
    let inferred_kind = if ["name", "dir", "width", "signal"]
        .iter()
        .any(|k| joined.contains(k))
    {
        TableKind::Interface
    } else if ["addr", "reset value", "offset"].iter().any(|k| joined.contains(k)) {
        TableKind::Register
    } else if joined.contains("mode") {
        TableKind::Mode
    } else {
        TableKind::Other
    };

    Ok(TableRecord {
        header,
        rows: grid,
        inferred_kind,
    })
}

/// Split a formula on its outermost relation symbol (depth 0 with respect
/// to parentheses) and phrase the relation in prose.
pub fn analyze_formula(block: &ContentBlock) -> Result<FormulaRecord, AnalyzeError> {
    let text = block.content.trim().trim_matches('$').trim();
    let bytes = text.as_bytes();
    let mut depth = 0i32;
    let mut split: Option<(usize, usize, Relation)> = None;
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        let c = bytes[i];
        match c {
            b'(' => depth += 1,
            b')' => depth -= 1,
            _ if depth == 0 => {
                // Two-character operators first; `!=` is not a supported
                // relation and must not be split at its `=`.
                let hit = if rest.starts_with("<=") {
                    Some((2, Relation::Le))
                } else if rest.starts_with(">=") {
                    Some((2, Relation::Ge))
                } else if rest.starts_with("==") {
                    Some((2, Relation::Eq))
                } else if rest.starts_with("!=") {
                    i += 2;
                    continue;
                } else if rest.starts_with('\u{2264}') {
                    Some(('\u{2264}'.len_utf8(), Relation::Le))
                } else if rest.starts_with('\u{2265}') {
                    Some(('\u{2265}'.len_utf8(), Relation::Ge))
                } else if c == b'=' {
                    Some((1, Relation::Eq))
                } else if c == b'<' {
                    Some((1, Relation::Lt))
                } else if c == b'>' {
                    Some((1, Relation::Gt))
                } else {
                    None
                };
                if let Some((len, relation)) = hit {
                    split = Some((i, i + len, relation));
                    break;
                }
            }
            _ => {}
        }
        i += match c {
            _ if c < 0x80 => 1,
            _ => text[i..].chars().next().map_or(1, char::len_utf8),
        };
    }

    let Some((start, end, relation)) = split else {
        return Err(AnalyzeError::NoRelationFound(text.to_string()));
    };
    let lhs = text[..start].trim();
    let rhs = text[end..].trim();
    if lhs.is_empty() || rhs.is_empty() {
        return Err(AnalyzeError::NoRelationFound(text.to_string()));
    }
    let prose = match relation {
        Relation::Eq => format!("{lhs} equals {rhs}"),
        Relation::Le => format!("{lhs} is at most {rhs}"),
        Relation::Ge => format!("{lhs} is at least {rhs}"),
        Relation::Lt => format!("{lhs} is less than {rhs}"),
        Relation::Gt => format!("{lhs} is greater than {rhs}"),
    };
    Ok(FormulaRecord {
        lhs: lhs.to_string(),
        relation,
        rhs: rhs.to_string(),
        prose,
    })
}

/// Route one classified block to its analyzer. Diagram blocks are split by
/// content: arrow notation means an FSM, otherwise the block is read as a
/// waveform transition list.
pub fn analyze_block(
    block: &ContentBlock,
    client: &LlmClient,
) -> Result<AnalyzerRecord, AnalyzeError> {
    let modality = block
        .modality
        .ok_or_else(|| AnalyzeError::Unsupported("block is unclassified".to_string()))?;
    match modality {
        Modality::Text => analyze_text(block, client).map(AnalyzerRecord::ModuleInfo),
        Modality::Table => analyze_table(block).map(AnalyzerRecord::Table),
        Modality::Formula => analyze_formula(block).map(AnalyzerRecord::Formula),
        Modality::Diagram => {
            if block.content.contains(")-->") {
                analyze_fsm(block).map(AnalyzerRecord::Fsm)
            } else {
                let events = extract_timing_events(&block.content);
                analyze_timing(&events).map(AnalyzerRecord::Timing)
            }
        }
    }
}

/// Document-level analysis result: the records that parsed, plus the
/// blocks that had to be skipped and why.
#[derive(Debug)]
pub struct AnalysisOutput {
    pub records: Vec<TaggedRecord>,
    pub skipped: Vec<(usize, String)>,
}

/// Analyze every block. An unclassified block is a contract violation and
/// aborts; a block whose analyzer finds nothing usable (no transitions, no
/// relation) is recorded as skipped rather than failing the document.
pub fn analyze_document(
    doc: &SpecDocument,
    client: &LlmClient,
) -> Result<AnalysisOutput, AnalyzeError> {
    let mut output = AnalysisOutput {
        records: Vec::new(),
        skipped: Vec::new(),
    };
    for (index, block) in doc.blocks.iter().enumerate() {
        if !block.is_classified() {
            return Err(AnalyzeError::UnclassifiedBlock { index });
        }
        match analyze_block(block, client) {
            Ok(record) => output.records.push(TaggedRecord {
                block_index: index,
                page_number: block.page_number,
                record,
            }),
            Err(AnalyzeError::UnparseableResponse(m)) => {
                return Err(AnalyzeError::UnparseableResponse(m))
            }
            Err(e) => output.skipped.push((index, e.to_string())),
        }
    }
    Ok(output)
}

const RECORDS_SCHEMA: &str = "records/v1";

/// Serialize tagged records as JSONL with a schema header line.
pub fn records_to_jsonl(records: &[TaggedRecord]) -> String {
    let mut out = format!("{{\"schema\":\"{RECORDS_SCHEMA}\"}}\n");
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Parse the records stream written by [`records_to_jsonl`].
pub fn records_from_jsonl(text: &str) -> Result<Vec<TaggedRecord>, AnalyzeError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| AnalyzeError::UnparseableResponse("records stream is empty".to_string()))?;
    let header_value: serde_json::Value = serde_json::from_str(header)
        .map_err(|e| AnalyzeError::UnparseableResponse(format!("bad schema line: {e}")))?;
    if header_value.get("schema").and_then(|s| s.as_str()) != Some(RECORDS_SCHEMA) {
        return Err(AnalyzeError::UnparseableResponse(format!(
            "expected schema {RECORDS_SCHEMA}"
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let record: TaggedRecord = serde_json::from_str(line).map_err(|e| {
            AnalyzeError::UnparseableResponse(format!("record line {}: {e}", i + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ClientMode, MockFixture};
    use crate::sva::parse_temporal;

    fn mock_client(dir: &std::path::Path) -> LlmClient {
        LlmClient::new(ClientMode::Mock {
            fixture_dir: dir.to_path_buf(),
        })
    }

    fn fixture(dir: &std::path::Path, name: &str, tag: &str, response: &str) {
        let f = MockFixture {
            tag: tag.to_string(),
            contains: vec![],
            response: response.to_string(),
        };
        std::fs::write(dir.join(name), serde_json::to_string(&f).unwrap()).unwrap();
    }

    #[test]
    fn text_prompt_carries_schema_rules_and_content() {
        let block = ContentBlock::new("the accumulator paragraph", 1);
        let req = build_text_prompt(&block);
        assert!(req.system.contains("hardware design analyst"));
        assert!(req.user.contains("input | output | inout"));
        assert!(req.user.contains("Do not invent missing fields"));
        assert!(req.user.trim_end().ends_with("the accumulator paragraph"));
    }

    #[test]
    fn parse_clean_yaml_response() {
        let response = [
            "name: counter",
            "description: A 4-bit up counter.",
            "ports:",
            "  - name: clk",
            "    direction: input",
            "    width: 1",
            "    description: clock",
            "  - name: count",
            "    direction: output",
            "    width: 4",
            "    description: current value",
            "implementation:",
            "  reset: synchronous clear",
            "  counter_operation: increments each cycle",
            "notes:",
            "  - wraps at 15",
            "module_interface: module counter(input clk, output [3:0] count);",
        ]
        .join("\n");
        let info = parse_module_info(&response).unwrap();
        assert_eq!(info.name, "counter");
        assert_eq!(info.ports.len(), 2);
        assert_eq!(info.ports[1].width, 4);
        assert_eq!(info.ports[1].direction, Direction::Output);
        assert_eq!(
            info.implementation.get("reset").map(String::as_str),
            Some("synchronous clear")
        );
        assert_eq!(info.notes, vec!["wraps at 15".to_string()]);
        assert!(info.module_interface.starts_with("module counter"));
    }

    #[test]
    fn parse_tolerates_two_column_port_lines() {
        // List items arrive unindented here, as some models emit them.
        let response = "name: m\n\
                        ports:\n\
                        - name: ack - direction: output\n\
                        - name: req - direction: input - width: 1\n";
        let info = parse_module_info(response).unwrap();
        assert_eq!(info.ports.len(), 2);
        assert_eq!(info.ports[0].name, "ack");
        assert_eq!(info.ports[0].direction, Direction::Output);
        assert_eq!(info.ports[1].name, "req");
        assert_eq!(info.ports[1].width, 1);
    }

    #[test]
    fn analyze_text_maps_canned_response_to_module_info() {
        let dir = tempfile::tempdir().unwrap();
        fixture(
            dir.path(),
            "text.json",
            "analyze",
            "name: xfer\nports:\n  - name: ack\n    direction: output\n    width: 1\n    description: acknowledges transfer\n",
        );
        let block = ContentBlock::new("output `ack` (1 bit) acknowledges transfer", 1);
        let info = analyze_text(&block, &mock_client(dir.path())).unwrap();
        assert_eq!(
            info.ports,
            vec![PortDecl {
                name: "ack".to_string(),
                direction: Direction::Output,
                width: 1,
                description: "acknowledges transfer".to_string(),
            }]
        );
    }

    #[test]
    fn analyze_text_rejects_word_widths_after_retry() {
        let dir = tempfile::tempdir().unwrap();
        fixture(
            dir.path(),
            "text.json",
            "analyze",
            "ports:\n  - name: ack\n    direction: output\n    width: two\n",
        );
        let block = ContentBlock::new("some paragraph", 1);
        let err = analyze_text(&block, &mock_client(dir.path())).unwrap_err();
        assert!(matches!(err, AnalyzeError::UnparseableResponse(_)));
    }

    #[test]
    fn analyze_text_falls_back_to_offline_extraction() {
        let dir = tempfile::tempdir().unwrap();
        let block = ContentBlock::new("output `ack` (1 bit) acknowledges transfer", 1);
        let info = analyze_text(&block, &mock_client(dir.path())).unwrap();
        assert_eq!(info.ports.len(), 1);
        assert_eq!(info.ports[0].name, "ack");
        assert_eq!(info.ports[0].description, "acknowledges transfer");

        let plain = ContentBlock::new("no interface details here", 1);
        let empty = analyze_text(&plain, &mock_client(dir.path())).unwrap();
        assert!(empty.ports.is_empty());
    }

    #[test]
    fn fsm_edges_become_transitions_and_pseudocode() {
        let block = ContentBlock::new("IDLE --(start)--> REQ; REQ --(ack)--> GRANT", 1);
        let fsm = analyze_fsm(&block).unwrap();
        assert_eq!(fsm.transitions.len(), 2);
        assert_eq!(
            fsm.pseudocode.lines().collect::<Vec<_>>(),
            vec![
                "if (state == IDLE && start) then next_state = REQ;",
                "if (state == REQ && ack) then next_state = GRANT;",
            ]
        );
        assert_eq!(fsm.pseudocode.lines().count(), fsm.transitions.len());
    }

    #[test]
    fn fsm_self_loop_and_nested_condition() {
        let block = ContentBlock::new("A --(x)--> A\nB --((p || q) && r)--> C", 1);
        let fsm = analyze_fsm(&block).unwrap();
        assert_eq!(
            fsm.transitions[0],
            FsmTransition {
                source: "A".to_string(),
                condition: "x".to_string(),
                destination: "A".to_string(),
            }
        );
        assert_eq!(fsm.transitions[1].condition, "(p || q) && r");
    }

    #[test]
    fn fsm_without_arrows_is_an_error() {
        let block = ContentBlock::new("states: IDLE, REQ, GRANT", 1);
        assert!(matches!(
            analyze_fsm(&block),
            Err(AnalyzeError::NoTransitionsFound)
        ));
    }

    #[test]
    fn timing_events_extract_with_signal_carry_forward() {
        let events = extract_timing_events(
            "Signal Transitions:\n  - ien rise at cycle 44\n  - irq_flag rise at cycle 44, descend at cycle 51",
        );
        assert_eq!(events.len(), 3);
        assert_eq!(events[2].signal, "irq_flag");
        assert_eq!(events[2].edge, EdgeKind::Fall);
        assert_eq!(events[2].cycle, 51);
    }

    #[test]
    fn timing_reproduces_interrupt_example_exactly() {
        let events = vec![
            TimingEvent {
                signal: "ien".to_string(),
                edge: EdgeKind::Rise,
                cycle: 44,
            },
            TimingEvent {
                signal: "irq_flag".to_string(),
                edge: EdgeKind::Rise,
                cycle: 44,
            },
            TimingEvent {
                signal: "irq_flag".to_string(),
                edge: EdgeKind::Fall,
                cycle: 51,
            },
        ];
        let constraint = analyze_timing(&events).unwrap();
        assert_eq!(
            constraint.render(),
            "ien => F[0:1] irq_flag && G[0:5] irq_flag"
        );
        assert_eq!(
            constraint.prose,
            "After ien is asserted, irq_flag becomes high within 1 cycle and remains high for 6 cycles."
        );
        assert!(parse_temporal(&constraint.formula).is_ok());
    }

    #[test]
    fn timing_short_pulse_example() {
        let events = vec![
            TimingEvent {
                signal: "a".to_string(),
                edge: EdgeKind::Rise,
                cycle: 0,
            },
            TimingEvent {
                signal: "b".to_string(),
                edge: EdgeKind::Rise,
                cycle: 0,
            },
            TimingEvent {
                signal: "b".to_string(),
                edge: EdgeKind::Fall,
                cycle: 2,
            },
        ];
        let constraint = analyze_timing(&events).unwrap();
        assert_eq!(constraint.render(), "a => F[0:1] b && G[0:0] b");
    }

    #[test]
    fn timing_without_rise_is_an_error() {
        let events = vec![TimingEvent {
            signal: "x".to_string(),
            edge: EdgeKind::Fall,
            cycle: 3,
        }];
        assert!(matches!(
            analyze_timing(&events),
            Err(AnalyzeError::NoTriggerEvent)
        ));
    }

    #[test]
    fn table_with_port_columns_is_interface_kind() {
        let block = ContentBlock::new(
            "| name | direction | width |\n|---|---|---|\n| clk | input | 1 |\n| count | output | 4 |",
            1,
        );
        let table = analyze_table(&block).unwrap();
        assert_eq!(table.inferred_kind, TableKind::Interface);
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[1], vec!["count", "output", "4"]);
    }

    #[test]
    fn table_with_addr_columns_is_register_kind() {
        let block = ContentBlock::new("| addr | reset value |\n| 0x0 | 0 |", 1);
        let table = analyze_table(&block).unwrap();
        assert_eq!(table.inferred_kind, TableKind::Register);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let block = ContentBlock::new("| a | b | c |\n| 1 | 2 |", 1);
        assert!(matches!(
            analyze_table(&block),
            Err(AnalyzeError::RaggedTable(_))
        ));
    }

    #[test]
    fn formula_splits_on_relation() {
        let le = analyze_formula(&ContentBlock::new("t_setup \u{2264} 2", 1)).unwrap();
        assert_eq!(le.lhs, "t_setup");
        assert_eq!(le.relation, Relation::Le);
        assert_eq!(le.rhs, "2");
        assert_eq!(le.prose, "t_setup is at most 2");

        let eq = analyze_formula(&ContentBlock::new("latency = depth + 1", 1)).unwrap();
        assert_eq!(
            (eq.lhs.as_str(), eq.relation, eq.rhs.as_str()),
            ("latency", Relation::Eq, "depth + 1")
        );
    }

    #[test]
    fn formula_ignores_relations_inside_parens_and_inequality() {
        let shielded = analyze_formula(&ContentBlock::new("f(x < 2) = y", 1)).unwrap();
        assert_eq!(shielded.lhs, "f(x < 2)");
        assert_eq!(shielded.relation, Relation::Eq);

        assert!(matches!(
            analyze_formula(&ContentBlock::new("a != b", 1)),
            Err(AnalyzeError::NoRelationFound(_))
        ));
        assert!(matches!(
            analyze_formula(&ContentBlock::new("hello world", 1)),
            Err(AnalyzeError::NoRelationFound(_))
        ));
    }

    #[test]
    fn document_dispatch_routes_by_modality_and_skips_empty_diagrams() {
        use crate::ir::SemanticCategory;
        let dir = tempfile::tempdir().unwrap();
        let mut doc = SpecDocument::new(
            "demo",
            vec![
                ContentBlock::new("output `ack` (1 bit) acknowledges transfer", 1),
                ContentBlock::new("IDLE --(start)--> REQ", 1),
                ContentBlock::new("| name | width |\n| ack | 1 |", 1),
                ContentBlock::new("latency = 2", 1),
                ContentBlock::new("a diagram with no usable content", 1),
            ],
        );
        let modalities = [
            Modality::Text,
            Modality::Diagram,
            Modality::Table,
            Modality::Formula,
            Modality::Diagram,
        ];
        for (block, modality) in doc.blocks.iter_mut().zip(modalities) {
            block.modality = Some(modality);
            block.semantic_category = Some(SemanticCategory::ModuleInterface);
        }
        let output = analyze_document(&doc, &mock_client(dir.path())).unwrap();
        assert_eq!(output.records.len(), 4);
        assert_eq!(output.skipped.len(), 1);
        assert_eq!(output.skipped[0].0, 4);
        assert!(matches!(output.records[1].record, AnalyzerRecord::Fsm(_)));
        assert_eq!(output.records[2].block_index, 2);
    }

    #[test]
    fn unclassified_block_aborts_document_analysis() {
        let dir = tempfile::tempdir().unwrap();
        let doc = SpecDocument::new("demo", vec![ContentBlock::new("text", 1)]);
        assert!(matches!(
            analyze_document(&doc, &mock_client(dir.path())),
            Err(AnalyzeError::UnclassifiedBlock { index: 0 })
        ));
    }

    #[test]
    fn records_jsonl_round_trip() {
        let records = vec![
            TaggedRecord {
                block_index: 0,
                page_number: 1,
                record: AnalyzerRecord::Formula(FormulaRecord {
                    lhs: "latency".to_string(),
                    relation: Relation::Eq,
                    rhs: "2".to_string(),
                    prose: "latency equals 2".to_string(),
                }),
            },
            TaggedRecord {
                block_index: 3,
                page_number: 2,
                record: AnalyzerRecord::Fsm(FsmAnalysis {
                    transitions: vec![FsmTransition {
                        source: "A".to_string(),
                        condition: "x".to_string(),
                        destination: "B".to_string(),
                    }],
                    pseudocode: "if (state == A && x) then next_state = B;".to_string(),
                }),
            },
        ];
        let text = records_to_jsonl(&records);
        assert!(text.starts_with("{\"schema\":\"records/v1\"}"));
        assert_eq!(records_from_jsonl(&text).unwrap(), records);
    }
}
