//! Per-signal aggregation of analyzer records into a unified signal
//! description.
//!
//! Every analyzer emits records independently; this module groups the
//! ones that mention a given signal, reconciles attributes (tables win
//! over prose, disagreeing widths are a hard error), derives temporal
//! roles from the timing formula's shape, and carries a source
//! reference for every field it fills so the result stays auditable.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyze::{AnalyzerRecord, Direction, FsmTransition, Relation, TaggedRecord};
use crate::sva::{parse_bool_expr, response_shape, shape_fragment, TemporalConstraint};

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("no analyzer record mentions signal `{name}`")]
    UnknownSignal { name: String },
    #[error("conflicting {field} for `{name}`: {a} vs {b}")]
    Conflict {
        name: String,
        field: &'static str,
        a: String,
        b: String,
    },
    #[error("cannot derive an intent triplet for `{name}`: missing {missing}")]
    InsufficientSemantics { name: String, missing: String },
    #[error("expected schema `{SIGNALS_SCHEMA}`, found `{found}`")]
    BadSchema { found: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// How a signal participates in the design's temporal behavior. The
/// variants are ordered the way role lists are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemporalRole {
    /// Asserted as a consequence of some trigger.
    Responder,
    /// The response window is finite.
    BoundedDelay,
    /// Must stay asserted for a hold interval once raised.
    Stabilizer,
    /// Acts as the trigger of some timing constraint.
    Initiator,
    /// Constrained by a standalone relational formula.
    InvariantHolder,
}

impl std::fmt::Display for TemporalRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TemporalRole::Responder => "responder",
            TemporalRole::BoundedDelay => "bounded-delay",
            TemporalRole::Stabilizer => "stabilizer",
            TemporalRole::Initiator => "initiator",
            TemporalRole::InvariantHolder => "invariant-holder",
        };
        f.write_str(s)
    }
}

/// Seed for assertion generation: when `precondition` holds,
/// `consequence` must follow under `timing`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentTriplet {
    pub precondition: String,
    pub consequence: String,
    pub timing: String,
}

/// Points a populated field back at the analyzer record it came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceRef {
    pub block_index: usize,
    pub page_number: u32,
    pub kind: String,
    pub field: String,
}

/// Everything the pipeline knows about one signal, merged across
/// analyzers. Fields an analyzer did not supply stay empty rather than
/// being guessed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub name: String,
    pub width: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_value: Option<u64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub category: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub control_logic: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fsm_transitions: Vec<FsmTransition>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub timing_constraint: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub temporal_logic: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub natural_language: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub temporal_roles: Vec<TemporalRole>,
    /// Equality formulas over this signal, kept only when they fall
    /// inside the assertion language's boolean subset.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invariants: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<IntentTriplet>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traceability: Vec<SourceRef>,
}

/// True when `name` appears in `text` as a whole identifier, not as a
/// substring of a longer one.
fn mentions_ident(text: &str, name: &str) -> bool {
    if name.is_empty() {
        return false;
    }
    let is_ident = |c: u8| c.is_ascii_alphanumeric() || c == b'_';
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(rel) = text[from..].find(name) {
        let start = from + rel;
        let end = start + name.len();
        let left_ok = start == 0 || !is_ident(bytes[start - 1]);
        let right_ok = end == bytes.len() || !is_ident(bytes[end]);
        if left_ok && right_ok {
            return true;
        }
        from = start + 1;
    }
    false
}

/// Lowercased identifier fragments of length >= 2, split on anything
/// that is not alphanumeric. `SEND_ACK` and `ack_out` both contain the
/// fragment `ack`, which is how state names get linked to signals.
fn ident_tokens(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| t.len() >= 2)
        .map(|t| t.to_ascii_lowercase())
        .collect()
}

fn tokens_overlap(a: &str, b: &str) -> bool {
    let ta = ident_tokens(a);
    let tb = ident_tokens(b);
    ta.intersection(&tb).next().is_some()
}

/// A transition concerns a signal when its condition tests the signal
/// or it enters a state named after the signal. Transitions that only
/// leave such a state describe deassertion and are excluded.
fn transition_concerns(t: &FsmTransition, name: &str) -> bool {
    mentions_ident(&t.condition, name) || tokens_overlap(&t.destination, name)
}

fn control_expr(t: &FsmTransition) -> String {
    if t.condition.trim() == "1" || t.condition.trim().is_empty() {
        format!("state == {}", t.source)
    } else {
        format!("state == {} && {}", t.source, t.condition)
    }
}

fn first_int(cell: &str) -> Option<u32> {
    let digits: String = cell
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.parse().ok()
}

fn parse_value(cell: &str) -> Option<u64> {
    let s = cell.trim();
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else {
        s.parse().ok()
    }
}

fn header_index(header: &[String], names: &[&str]) -> Option<usize> {
    header.iter().position(|h| {
        let h = h.trim().to_ascii_lowercase();
        names.iter().any(|n| h == *n)
    })
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn clean_cell(cell: &str) -> String {
    cell.trim().trim_matches('`').trim().to_string()
}

const NAME_COLUMNS: &[&str] = &["name", "signal", "signal name"];
const WIDTH_COLUMNS: &[&str] = &["width", "width (bits)", "bits"];
const DIRECTION_COLUMNS: &[&str] = &["direction", "dir"];
const DEFAULT_COLUMNS: &[&str] = &["default", "default value", "reset value", "reset"];
const CATEGORY_COLUMNS: &[&str] = &["category", "type"];
const DESCRIPTION_COLUMNS: &[&str] = &["description", "desc"];

/// One source's claim about an attribute, kept so conflicts can name
/// both sides.
struct Claim<T> {
    value: T,
    kind: &'static str,
}

struct Accumulator<'a> {
    name: &'a str,
    text_direction: Option<Direction>,
    table_direction: Option<Direction>,
    width: Option<Claim<u32>>,
    default_value: Option<u64>,
    category: String,
    descriptions: Vec<String>,
    control_logic: String,
    transitions: Vec<FsmTransition>,
    timing: Option<TemporalConstraint>,
    timing_fragment: String,
    roles: BTreeSet<TemporalRole>,
    invariants: Vec<String>,
    refs: BTreeSet<SourceRef>,
}

impl<'a> Accumulator<'a> {
    fn new(name: &'a str) -> Self {
        Accumulator {
            name,
            text_direction: None,
            table_direction: None,
            width: None,
            default_value: None,
            category: String::new(),
            descriptions: Vec::new(),
            control_logic: String::new(),
            transitions: Vec::new(),
            timing: None,
            timing_fragment: String::new(),
            roles: BTreeSet::new(),
            invariants: Vec::new(),
            refs: BTreeSet::new(),
        }
    }

    fn claim_width(&mut self, value: u32, kind: &'static str) -> Result<(), MergeError> {
        match &self.width {
            Some(prior) if prior.value != value => Err(MergeError::Conflict {
                name: self.name.to_string(),
                field: "width",
                a: format!("{} ({})", prior.value, prior.kind),
                b: format!("{value} ({kind})"),
            }),
            Some(_) => Ok(()),
            None => {
                self.width = Some(Claim { value, kind });
                Ok(())
            }
        }
    }

    fn push_description(&mut self, desc: &str) {
        let desc = desc.trim();
        if !desc.is_empty() && !self.descriptions.iter().any(|d| d == desc) {
            self.descriptions.push(desc.to_string());
        }
    }
}

fn record_kind(record: &AnalyzerRecord) -> &'static str {
    match record {
        AnalyzerRecord::ModuleInfo(_) => "module_info",
        AnalyzerRecord::Fsm(_) => "fsm",
        AnalyzerRecord::Timing(_) => "timing",
        AnalyzerRecord::Table(_) => "table",
        AnalyzerRecord::Formula(_) => "formula",
    }
}

/// Merges every record that mentions `name` into one SignalSpec.
/// Records that do not mention the signal are ignored; if none does,
/// the signal is unknown.
pub fn merge_signal(name: &str, records: &[TaggedRecord]) -> Result<SignalSpec, MergeError> {
    let mut acc = Accumulator::new(name);

    for tagged in records {
        let kind = record_kind(&tagged.record);
        let mut touched: Vec<&'static str> = Vec::new();

        match &tagged.record {
            AnalyzerRecord::ModuleInfo(info) => {
                for port in info.ports.iter().filter(|p| p.name == name) {
                    if acc.text_direction.is_none() {
                        acc.text_direction = Some(port.direction);
                        touched.push("direction");
                    }
                    acc.claim_width(port.width, "module_info")?;
                    touched.push("width");
                    if !port.description.trim().is_empty() {
                        acc.push_description(&port.description);
                        touched.push("natural_language");
                    }
                }
            }
            AnalyzerRecord::Table(table) => {
                let Some(name_col) = header_index(&table.header, NAME_COLUMNS) else {
                    continue;
                };
                for row in &table.rows {
                    if row.get(name_col).map(|c| clean_cell(c)) != Some(name.to_string()) {
                        continue;
                    }
                    if let Some(i) = header_index(&table.header, WIDTH_COLUMNS) {
                        if let Some(w) = row.get(i).and_then(|c| first_int(c)) {
                            acc.claim_width(w, "table")?;
                            touched.push("width");
                        }
                    }
                    if let Some(i) = header_index(&table.header, DIRECTION_COLUMNS) {
                        if let Some(d) = row.get(i).and_then(|c| Direction::parse(c)) {
                            acc.table_direction = Some(d);
                            touched.push("direction");
                        }
                    }
                    if let Some(i) = header_index(&table.header, DEFAULT_COLUMNS) {
                        if let Some(v) = row.get(i).and_then(|c| parse_value(c)) {
                            acc.default_value = Some(v);
                            touched.push("default_value");
                        }
                    }
                    if let Some(i) = header_index(&table.header, CATEGORY_COLUMNS) {
                        if let Some(c) = row.get(i) {
                            let c = clean_cell(c);
                            if !c.is_empty() && acc.category.is_empty() {
                                acc.category = c;
                                touched.push("category");
                            }
                        }
                    }
                    if let Some(i) = header_index(&table.header, DESCRIPTION_COLUMNS) {
                        if let Some(d) = row.get(i) {
                            if !d.trim().is_empty() {
                                acc.push_description(d);
                                touched.push("natural_language");
                            }
                        }
                    }
                }
            }
            AnalyzerRecord::Fsm(fsm) => {
                for t in fsm.transitions.iter().filter(|t| transition_concerns(t, name)) {
                    if acc.control_logic.is_empty() {
                        acc.control_logic = control_expr(t);
                        touched.push("control_logic");
                    }
                    if !acc.transitions.contains(t) {
                        acc.transitions.push(t.clone());
                    }
                    touched.push("fsm_transitions");
                }
            }
            AnalyzerRecord::Timing(constraint) => {
                let in_formula = mentions_ident(&constraint.formula, name);
                let is_trigger = constraint.trigger == name;
                if !in_formula && !is_trigger {
                    continue;
                }
                if is_trigger {
                    acc.roles.insert(TemporalRole::Initiator);
                    touched.push("temporal_roles");
                }
                if in_formula && acc.timing.is_none() {
                    acc.timing = Some(constraint.clone());
                    touched.push("temporal_logic");
                    if !constraint.prose.trim().is_empty() {
                        touched.push("natural_language");
                    }
                    if let Ok(shape) = response_shape(constraint) {
                        if shape.signal == name {
                            acc.timing_fragment = shape_fragment(&shape).to_string();
                            touched.push("timing_constraint");
                            acc.roles.insert(TemporalRole::Responder);
                            acc.roles.insert(TemporalRole::BoundedDelay);
                            if shape.hold >= 1 {
                                acc.roles.insert(TemporalRole::Stabilizer);
                            }
                            touched.push("temporal_roles");
                        }
                    }
                }
            }
            AnalyzerRecord::Formula(formula) => {
                if mentions_ident(&formula.lhs, name) || mentions_ident(&formula.rhs, name) {
                    acc.roles.insert(TemporalRole::InvariantHolder);
                    touched.push("temporal_roles");
                    if formula.relation == Relation::Eq {
                        let expr = format!("{} == {}", formula.lhs, formula.rhs);
                        if parse_bool_expr(&expr).is_ok() && !acc.invariants.contains(&expr) {
                            acc.invariants.push(expr);
                            touched.push("invariants");
                        }
                    }
                }
            }
        }

        for field in touched {
            acc.refs.insert(SourceRef {
                block_index: tagged.block_index,
                page_number: tagged.page_number,
                kind: kind.to_string(),
                field: field.to_string(),
            });
        }
    }

    if acc.refs.is_empty() {
        return Err(MergeError::UnknownSignal {
            name: name.to_string(),
        });
    }

    let natural_language = match &acc.timing {
        Some(c) if !c.prose.trim().is_empty() => c.prose.clone(),
        _ => acc.descriptions.join("; "),
    };

    let mut spec = SignalSpec {
        name: name.to_string(),
        width: acc.width.as_ref().map(|c| c.value).unwrap_or(1),
        direction: acc.table_direction.or(acc.text_direction),
        default_value: acc.default_value,
        category: acc.category,
        control_logic: acc.control_logic,
        fsm_transitions: acc.transitions,
        timing_constraint: acc.timing_fragment,
        temporal_logic: acc.timing.map(|c| c.formula).unwrap_or_default(),
        natural_language,
        temporal_roles: acc.roles.into_iter().collect(),
        invariants: acc.invariants,
        intent: None,
        traceability: acc.refs.into_iter().collect(),
    };
    // Signals without both a precondition and a timing window stay in
    // the set but are not generable from a triplet.
    spec.intent = derive_intent(&spec).ok();
    Ok(spec)
}

/// Builds the generation triplet from a merged signal. The consequence
/// polarity follows the default value: a signal idling at 1 is
/// asserted by driving it to 0.
pub fn derive_intent(spec: &SignalSpec) -> Result<IntentTriplet, MergeError> {
    let mut missing = Vec::new();
    if spec.control_logic.is_empty() {
        missing.push("control_logic");
    }
    if spec.timing_constraint.is_empty() {
        missing.push("timing_constraint");
    }
    if !missing.is_empty() {
        return Err(MergeError::InsufficientSemantics {
            name: spec.name.clone(),
            missing: missing.join(", "),
        });
    }
    let asserted_level = if spec.default_value == Some(1) { 0 } else { 1 };
    Ok(IntentTriplet {
        precondition: spec.control_logic.clone(),
        consequence: format!("{} == {}", spec.name, asserted_level),
        timing: spec.timing_constraint.clone(),
    })
}

/// Collects every signal name the records declare: module ports plus
/// rows of tables that carry a name column.
pub fn discover_signals(records: &[TaggedRecord]) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    for tagged in records {
        match &tagged.record {
            AnalyzerRecord::ModuleInfo(info) => {
                names.extend(info.ports.iter().map(|p| p.name.clone()));
            }
            AnalyzerRecord::Table(table) => {
                if let Some(col) = header_index(&table.header, NAME_COLUMNS) {
                    for row in &table.rows {
                        if let Some(cell) = row.get(col) {
                            let cell = clean_cell(cell);
                            if is_identifier(&cell) {
                                names.insert(cell);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    names
}

/// Merges every discovered signal. Name discovery guarantees each
/// merge finds at least one record, so only conflicts can fail.
pub fn merge_all(records: &[TaggedRecord]) -> Result<Vec<SignalSpec>, MergeError> {
    discover_signals(records)
        .iter()
        .map(|name| merge_signal(name, records))
        .collect()
}

pub const SIGNALS_SCHEMA: &str = "signals/v1";

#[derive(Serialize, Deserialize)]
struct SignalsDoc {
    schema: String,
    signals: Vec<SignalSpec>,
}

pub fn signals_to_json(specs: &[SignalSpec]) -> String {
    let doc = SignalsDoc {
        schema: SIGNALS_SCHEMA.to_string(),
        signals: specs.to_vec(),
    };
    serde_json::to_string_pretty(&doc).expect("signal specs serialize")
}

pub fn signals_from_json(src: &str) -> Result<Vec<SignalSpec>, MergeError> {
    let doc: SignalsDoc = serde_json::from_str(src)?;
    if doc.schema != SIGNALS_SCHEMA {
        return Err(MergeError::BadSchema { found: doc.schema });
    }
    Ok(doc.signals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyze::{FsmAnalysis, ModuleInfo, PortDecl, TableKind, TableRecord};

    fn port(name: &str, direction: Direction, width: u32, desc: &str) -> PortDecl {
        PortDecl {
            name: name.into(),
            direction,
            width,
            description: desc.into(),
        }
    }

    fn tag(block_index: usize, page_number: u32, record: AnalyzerRecord) -> TaggedRecord {
        TaggedRecord {
            block_index,
            page_number,
            record,
        }
    }

    /// Records for a read-acknowledge handshake: an interface paragraph,
    /// an interface table, the controller FSM, and the acknowledge
    /// timing waveform.
    fn handshake_records() -> Vec<TaggedRecord> {
        let info = ModuleInfo {
            name: "handshake_ctrl".into(),
            description: "Read acknowledge controller".into(),
            ports: vec![
                port("clk", Direction::Input, 1, "clock"),
                port("data_valid", Direction::Input, 1, "read data strobe"),
                port("ack_out", Direction::Output, 1, "read acknowledge"),
            ],
            ..ModuleInfo::default()
        };
        let table = TableRecord {
            header: ["Name", "Direction", "Width", "Default Value", "Category"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            rows: vec![
                vec!["clk".into(), "input".into(), "1".into(), "0".into(), "clock".into()],
                vec![
                    "data_valid".into(),
                    "input".into(),
                    "1".into(),
                    "0".into(),
                    "status signal".into(),
                ],
                vec![
                    "ack_out".into(),
                    "output".into(),
                    "1".into(),
                    "0".into(),
                    "control signal".into(),
                ],
            ],
            inferred_kind: TableKind::Interface,
        };
        let fsm = FsmAnalysis {
            transitions: vec![
                FsmTransition {
                    source: "IDLE".into(),
                    condition: "read_req".into(),
                    destination: "READ".into(),
                },
                FsmTransition {
                    source: "READ".into(),
                    condition: "data_valid".into(),
                    destination: "SEND_ACK".into(),
                },
                FsmTransition {
                    source: "SEND_ACK".into(),
                    condition: "1".into(),
                    destination: "IDLE".into(),
                },
            ],
            pseudocode: String::new(),
        };
        let timing = TemporalConstraint::new(
            "data_valid",
            "F[1:2] ack_out && G[0:1] ack_out",
            "If data_valid is asserted during READ, then ack_out must be asserted \
             within 2 cycles and held for at least 1 cycle.",
        )
        .unwrap();
        vec![
            tag(1, 3, AnalyzerRecord::ModuleInfo(info)),
            tag(2, 3, AnalyzerRecord::Table(table)),
            tag(3, 4, AnalyzerRecord::Fsm(fsm)),
            tag(4, 5, AnalyzerRecord::Timing(timing)),
        ]
    }

    #[test]
    fn acknowledge_signal_merges_field_for_field() {
        let spec = merge_signal("ack_out", &handshake_records()).unwrap();
        assert_eq!(spec.name, "ack_out");
        assert_eq!(spec.width, 1);
        assert_eq!(spec.direction, Some(Direction::Output));
        assert_eq!(spec.default_value, Some(0));
        assert_eq!(spec.category, "control signal");
        assert_eq!(spec.control_logic, "state == READ && data_valid");
        assert_eq!(
            spec.fsm_transitions,
            vec![FsmTransition {
                source: "READ".into(),
                condition: "data_valid".into(),
                destination: "SEND_ACK".into(),
            }]
        );
        assert_eq!(spec.timing_constraint, "##[1:2] ack_out[*2]");
        assert_eq!(spec.temporal_logic, "F[1:2] ack_out && G[0:1] ack_out");
        assert_eq!(
            spec.natural_language,
            "If data_valid is asserted during READ, then ack_out must be asserted \
             within 2 cycles and held for at least 1 cycle."
        );
        assert_eq!(
            spec.temporal_roles,
            vec![
                TemporalRole::Responder,
                TemporalRole::BoundedDelay,
                TemporalRole::Stabilizer,
            ]
        );
        assert_eq!(
            spec.intent,
            Some(IntentTriplet {
                precondition: "state == READ && data_valid".into(),
                consequence: "ack_out == 1".into(),
                timing: "##[1:2] ack_out[*2]".into(),
            })
        );
    }

    #[test]
    fn every_populated_field_has_a_source_ref() {
        let spec = merge_signal("ack_out", &handshake_records()).unwrap();
        for field in [
            "direction",
            "width",
            "default_value",
            "category",
            "control_logic",
            "fsm_transitions",
            "timing_constraint",
            "temporal_logic",
            "natural_language",
            "temporal_roles",
        ] {
            assert!(
                spec.traceability.iter().any(|r| r.field == field),
                "field `{field}` has no source ref: {:?}",
                spec.traceability
            );
        }
    }

    #[test]
    fn table_only_signal_keeps_attributes_and_no_intent() {
        let table = TableRecord {
            header: vec!["Name".into(), "Width".into(), "Reset Value".into()],
            rows: vec![vec!["mode_sel".into(), "2".into(), "0x1".into()]],
            inferred_kind: TableKind::Register,
        };
        let records = vec![tag(7, 12, AnalyzerRecord::Table(table))];
        let spec = merge_signal("mode_sel", &records).unwrap();
        assert_eq!(spec.width, 2);
        assert_eq!(spec.default_value, Some(1));
        assert_eq!(spec.direction, None);
        assert!(spec.intent.is_none());
        assert!(spec.temporal_roles.is_empty());
    }

    #[test]
    fn disagreeing_widths_are_a_hard_error() {
        let mut records = handshake_records();
        let AnalyzerRecord::Table(table) = &mut records[1].record else {
            panic!("fixture changed");
        };
        table.rows[2][2] = "8".into();
        let err = merge_signal("ack_out", &records).unwrap_err();
        assert!(matches!(err, MergeError::Conflict { field: "width", .. }), "{err}");
    }

    #[test]
    fn unmentioned_signal_is_unknown() {
        let err = merge_signal("bus_grant", &handshake_records()).unwrap_err();
        assert!(matches!(err, MergeError::UnknownSignal { .. }));
    }

    #[test]
    fn merging_duplicated_records_changes_nothing() {
        let records = handshake_records();
        let doubled: Vec<TaggedRecord> =
            records.iter().chain(records.iter()).cloned().collect();
        assert_eq!(
            merge_signal("ack_out", &records).unwrap(),
            merge_signal("ack_out", &doubled).unwrap()
        );
    }

    #[test]
    fn default_high_signal_gets_active_low_consequence() {
        let table = TableRecord {
            header: vec!["Name".into(), "Width".into(), "Default".into()],
            rows: vec![vec!["en_n".into(), "1".into(), "1".into()]],
            inferred_kind: TableKind::Interface,
        };
        let fsm = FsmAnalysis {
            transitions: vec![FsmTransition {
                source: "IDLE".into(),
                condition: "cfg_write".into(),
                destination: "EN_OFF".into(),
            }],
            pseudocode: String::new(),
        };
        let timing = TemporalConstraint::new("cfg_write", "F[0:1] en_n", "").unwrap();
        let records = vec![
            tag(0, 1, AnalyzerRecord::Table(table)),
            tag(1, 1, AnalyzerRecord::Fsm(fsm)),
            tag(2, 2, AnalyzerRecord::Timing(timing)),
        ];
        let spec = merge_signal("en_n", &records).unwrap();
        let intent = spec.intent.expect("generable");
        assert_eq!(intent.consequence, "en_n == 0");
        assert_eq!(intent.precondition, "state == IDLE && cfg_write");
        assert_eq!(intent.timing, "##[0:1] en_n");
    }

    #[test]
    fn trigger_signal_is_an_initiator() {
        let specs = merge_all(&handshake_records()).unwrap();
        let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["ack_out", "clk", "data_valid"]);
        let dv = specs.iter().find(|s| s.name == "data_valid").unwrap();
        assert!(dv.temporal_roles.contains(&TemporalRole::Initiator));
        assert!(dv.intent.is_none());
    }

    #[test]
    fn signal_json_round_trips_under_versioned_schema() {
        let specs = merge_all(&handshake_records()).unwrap();
        let json = signals_to_json(&specs);
        assert!(json.contains("\"signals/v1\""));
        assert_eq!(signals_from_json(&json).unwrap(), specs);

        let bad = json.replace("signals/v1", "signals/v0");
        assert!(matches!(
            signals_from_json(&bad).unwrap_err(),
            MergeError::BadSchema { .. }
        ));
    }

    #[test]
    fn formula_mention_marks_an_invariant_holder() {
        let formula = crate::analyze::FormulaRecord {
            lhs: "fifo_count".into(),
            relation: crate::analyze::Relation::Le,
            rhs: "DEPTH".into(),
            prose: "fifo_count is at most DEPTH".into(),
        };
        let records = vec![tag(9, 6, AnalyzerRecord::Formula(formula))];
        let spec = merge_signal("fifo_count", &records).unwrap();
        assert_eq!(spec.temporal_roles, vec![TemporalRole::InvariantHolder]);
        // An ordering relation has no boolean-subset rendering.
        assert!(spec.invariants.is_empty());
    }

    #[test]
    fn expressible_equality_formulas_become_invariants() {
        let formula = crate::analyze::FormulaRecord {
            lhs: "parity".into(),
            relation: crate::analyze::Relation::Eq,
            rhs: "^data".into(),
            prose: "parity equals the xor of data".into(),
        };
        let records = vec![tag(9, 6, AnalyzerRecord::Formula(formula))];
        let spec = merge_signal("parity", &records).unwrap();
        assert_eq!(spec.invariants, vec!["parity == ^data"]);
        assert!(spec
            .traceability
            .iter()
            .any(|r| r.field == "invariants" && r.kind == "formula"));
    }

    #[test]
    fn whole_identifier_matching_ignores_substrings() {
        assert!(mentions_ident("ack_out && ready", "ack_out"));
        assert!(!mentions_ident("ack_out_delayed", "ack_out"));
        assert!(!mentions_ident("stack_out", "ack_out"));
        assert!(mentions_ident("(ack_out)", "ack_out"));
    }
}
