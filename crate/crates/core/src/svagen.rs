//! Four-step assertion synthesis from merged signal descriptions.
//!
//! The generator walks each signal through semantic decomposition,
//! pattern selection, temporal binding, and syntax synthesis. An LLM
//! client drives the steps when one is available; a deterministic
//! template path produces the same four-step record offline, which
//! keeps the procedure testable without network access. Prompts are
//! optionally augmented with passages retrieved from a local corpus
//! and, on refinement iterations, with cues describing the mutations
//! the current assertion set failed to catch.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatRequest, LlmClient, LlmError};
use crate::merge::{IntentTriplet, SignalSpec, TemporalRole};
use crate::sva::{
    parse_bool_expr, parse_sequence, parse_sva, render_sva, BoolExpr, Clocking, Delay, Edge,
    Property, SeqElem, SeqStep, Sequence, SvaAst,
};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("signal `{name}` has neither an intent triplet nor an expressible invariant")]
    NonGenerableSignal { name: String },
    #[error("generation response could not be parsed: {0}")]
    UnparseableResponse(String),
    #[error("timing `{text}` matches neither the prose grammar nor a sequence fragment")]
    UnboundTiming { text: String },
    #[error("corpus directory `{dir}` is missing or holds no text files")]
    EmptyCorpus { dir: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The closed set of assertion shapes the generator emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssertionPattern {
    Implication,
    Stability,
    Invariant,
}

impl fmt::Display for AssertionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AssertionPattern::Implication => "Implication",
            AssertionPattern::Stability => "Stability",
            AssertionPattern::Invariant => "Invariant",
        };
        f.write_str(s)
    }
}

/// A corpus excerpt paired with its retrieval score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    pub score: f64,
}

/// Input to one generation call: the signal, feedback cues from the
/// previous evaluation round (empty on the first), and retrieved
/// reference passages.
#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub signal: SignalSpec,
    pub mutation_points: Vec<String>,
    pub retrieved: Vec<Passage>,
}

/// The four recorded step outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSteps {
    pub decomposition: String,
    pub pattern: AssertionPattern,
    pub temporal: String,
    pub final_text: String,
}

/// One synthesized assertion. `ast` is always the parse of
/// `steps.final_text`; construction fails otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub id: String,
    pub signal: String,
    pub iteration: u32,
    pub steps: GenerationSteps,
    pub ast: SvaAst,
    pub retrieved: Vec<String>,
    pub mutation_points: Vec<String>,
}

/// Serializable provenance for one assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub id: String,
    pub signal: String,
    pub iteration: u32,
    pub pattern: AssertionPattern,
    pub decomposition: String,
    pub temporal: String,
    pub sva: String,
    pub retrieved: Vec<String>,
    pub mutation_points: Vec<String>,
}

impl GenerationResult {
    pub fn provenance(&self) -> ProvenanceRecord {
        ProvenanceRecord {
            id: self.id.clone(),
            signal: self.signal.clone(),
            iteration: self.iteration,
            pattern: self.steps.pattern,
            decomposition: self.steps.decomposition.clone(),
            temporal: self.steps.temporal.clone(),
            sva: self.steps.final_text.clone(),
            retrieved: self.retrieved.clone(),
            mutation_points: self.mutation_points.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub clock: String,
    pub corpus_dir: Option<PathBuf>,
    pub retrieval_k: usize,
    /// When false, the prompt collapses to a single-step request and
    /// the response is read as a bare assertion.
    pub chain_of_thought: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            clock: "clk".into(),
            corpus_dir: None,
            retrieval_k: 3,
            chain_of_thought: true,
        }
    }
}

/// Deterministic pattern choice, also used to sanity-check an LLM's
/// pick: a finite window means implication; a hold requirement without
/// a precondition means stability; anything else is an invariant.
pub fn select_pattern(triplet: Option<&IntentTriplet>, roles: &[TemporalRole]) -> AssertionPattern {
    let has_timing = triplet.map(|t| !t.timing.trim().is_empty()).unwrap_or(false);
    let has_precondition = triplet
        .map(|t| !t.precondition.trim().is_empty())
        .unwrap_or(false);
    if has_timing {
        AssertionPattern::Implication
    } else if !has_precondition && roles.contains(&TemporalRole::Stabilizer) {
        AssertionPattern::Stability
    } else {
        AssertionPattern::Invariant
    }
}

/// Rewrites "X is high"-style prose clauses into boolean expression
/// text. Clauses already in expression form pass through unchanged.
pub fn normalize_bool_prose(text: &str) -> String {
    text.split("&&")
        .map(normalize_clause)
        .collect::<Vec<_>>()
        .join(" && ")
}

const HIGH_SUFFIXES: &[&str] = &[
    " is high",
    " is asserted",
    " must be high",
    " must be asserted",
    " becomes high",
];
const LOW_SUFFIXES: &[&str] = &[
    " is low",
    " is deasserted",
    " is not asserted",
    " must be low",
    " becomes low",
];

fn negate(expr: &str) -> String {
    let plain = expr.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        format!("!{expr}")
    } else {
        format!("!({expr})")
    }
}

fn normalize_clause(clause: &str) -> String {
    let clause = clause.trim();
    let lower = clause.to_ascii_lowercase();
    for suffix in HIGH_SUFFIXES {
        if lower.ends_with(suffix) {
            return clause[..clause.len() - suffix.len()].trim().to_string();
        }
    }
    for suffix in LOW_SUFFIXES {
        if lower.ends_with(suffix) {
            return negate(clause[..clause.len() - suffix.len()].trim());
        }
    }
    // `x == 1` / `x == 0` fold to the bare or negated atom.
    if let Some((lhs, rhs)) = clause.split_once("==") {
        let lhs = lhs.trim();
        let plain = lhs.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if plain && !lhs.is_empty() {
            match rhs.trim() {
                "1" => return lhs.to_string(),
                "0" => return negate(lhs),
                _ => {}
            }
        }
    }
    clause.to_string()
}

/// Turns a timing description into a delay-plus-repetition sequence
/// fragment over `consequence`. Accepts either the prose grammar
/// ("between A and B cycles, and hold for >=H cycles", "within N
/// cycles") or an already-formed fragment, which is validated and
/// passed through.
pub fn bind_temporal(timing: &str, consequence: &BoolExpr) -> Result<String, GenError> {
    let t = timing.trim();
    let unbound = || GenError::UnboundTiming {
        text: timing.to_string(),
    };
    if t.is_empty() {
        return Err(unbound());
    }
    if t.starts_with("##") {
        parse_sequence(t).map_err(|_| unbound())?;
        return Ok(t.to_string());
    }
    let lower = t.to_ascii_lowercase();
    let between = Regex::new(r"between\s+(\d+)\s+and\s+(\d+)\s+cycles?").unwrap();
    let within = Regex::new(r"within\s+(\d+)\s+cycles?").unwrap();
    let exactly = Regex::new(r"after\s+exactly\s+(\d+)\s+cycles?").unwrap();
    let hold = Regex::new(r"(?:hold|held|stay|stays|remain|remains)[a-z ]*?for\s*(?:at\s+least\s+)?(?:>=\s*)?(\d+)\s*cycles?").unwrap();

    let num = |m: &regex::Captures, i: usize| m[i].parse::<u32>().map_err(|_| unbound());
    let (lo, hi) = if let Some(c) = between.captures(&lower) {
        (num(&c, 1)?, num(&c, 2)?)
    } else if let Some(c) = within.captures(&lower) {
        (0, num(&c, 1)?)
    } else if let Some(c) = exactly.captures(&lower) {
        let n = num(&c, 1)?;
        (n, n)
    } else {
        return Err(unbound());
    };
    if lo > hi {
        return Err(unbound());
    }
    let rep = match hold.captures(&lower) {
        Some(c) => num(&c, 1)?.max(1),
        None => 1,
    };
    let seq = Sequence {
        steps: vec![SeqStep {
            delay: Delay::new(lo, hi),
            elem: SeqElem::repeated(consequence.clone(), rep),
        }],
    };
    Ok(seq.to_string())
}

fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
        .collect()
}

struct Chunk {
    id: String,
    text: String,
    tokens: Vec<String>,
}

/// Splits a file into passages of at most `limit` whitespace tokens,
/// breaking on blank lines so passages stay self-contained.
fn chunk_file(name: &str, text: &str, limit: usize) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    let mut current = String::new();
    let mut count = 0usize;
    let flush = |current: &mut String, count: &mut usize, chunks: &mut Vec<Chunk>| {
        let text = current.trim().to_string();
        if !text.is_empty() {
            chunks.push(Chunk {
                id: format!("{name}#{}", chunks.len()),
                tokens: tokenize(&text),
                text,
            });
        }
        current.clear();
        *count = 0;
    };
    for para in text.split("\n\n") {
        let words = para.split_whitespace().count();
        if count > 0 && count + words > limit {
            flush(&mut current, &mut count, &mut chunks);
        }
        if !para.trim().is_empty() {
            if !current.is_empty() {
                current.push_str("\n\n");
            }
            current.push_str(para.trim_end());
            count += words;
        }
    }
    flush(&mut current, &mut count, &mut chunks);
    chunks
}

const CHUNK_TOKEN_LIMIT: usize = 400;
const BM25_K1: f64 = 1.2;
const BM25_B: f64 = 0.75;

/// Ranks corpus passages against the query with BM25 over ≤400-token
/// chunks. Ties and equal scores resolve by passage id, so results are
/// stable across runs.
pub fn retrieve(query: &str, corpus_dir: &Path, k: usize) -> Result<Vec<Passage>, GenError> {
    let mut files: Vec<PathBuf> = fs::read_dir(corpus_dir)
        .map_err(|_| GenError::EmptyCorpus {
            dir: corpus_dir.display().to_string(),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("txt") | Some("md")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(GenError::EmptyCorpus {
            dir: corpus_dir.display().to_string(),
        });
    }
    let mut chunks = Vec::new();
    for path in &files {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("corpus")
            .to_string();
        let text = fs::read_to_string(path)?;
        chunks.extend(chunk_file(&name, &text, CHUNK_TOKEN_LIMIT));
    }
    if k == 0 || chunks.is_empty() {
        return Ok(Vec::new());
    }

    let n = chunks.len() as f64;
    let avg_len = chunks.iter().map(|c| c.tokens.len()).sum::<usize>() as f64 / n;
    let query_terms: Vec<String> = tokenize(query);
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for term in &query_terms {
        let count = chunks
            .iter()
            .filter(|c| c.tokens.iter().any(|t| t == term))
            .count();
        df.insert(term, count);
    }
    let mut scored: Vec<Passage> = chunks
        .iter()
        .map(|c| {
            let len_norm = 1.0 - BM25_B + BM25_B * c.tokens.len() as f64 / avg_len;
            let score: f64 = query_terms
                .iter()
                .map(|term| {
                    let tf = c.tokens.iter().filter(|t| *t == term).count() as f64;
                    if tf == 0.0 {
                        return 0.0;
                    }
                    let d = df[term.as_str()] as f64;
                    let idf = ((n - d + 0.5) / (d + 0.5) + 1.0).ln();
                    idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * len_norm)
                })
                .sum();
            Passage {
                id: c.id.clone(),
                text: c.text.clone(),
                score,
            }
        })
        .filter(|p| p.score > 0.0)
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    scored.truncate(k);
    Ok(scored)
}

const GEN_SYSTEM_ROLE: &str =
    "You are a hardware verification expert specialized in SVA generation.";

/// The triplet a request works from: the merged one when present,
/// otherwise a degenerate triplet carrying the first expressible
/// invariant as its consequence.
fn effective_triplet(spec: &SignalSpec) -> Result<IntentTriplet, GenError> {
    if let Some(t) = &spec.intent {
        return Ok(t.clone());
    }
    if let Some(inv) = spec.invariants.first() {
        return Ok(IntentTriplet {
            precondition: String::new(),
            consequence: inv.clone(),
            timing: String::new(),
        });
    }
    Err(GenError::NonGenerableSignal {
        name: spec.name.clone(),
    })
}

/// Builds the four-step generation prompt. The mutation feedback block
/// appears only when cues are present, so a first-iteration prompt is a
/// strict subset of later ones.
pub fn build_generation_prompt(req: &GenerationRequest) -> Result<ChatRequest, GenError> {
    let triplet = effective_triplet(&req.signal)?;
    let mut user = String::from(
        "TASK DESCRIPTION\n\
         Given a structured specification segment for a signal (including precondition, \
         consequence, and timing window), generate a valid SVA in four steps:\n",
    );
    if !req.mutation_points.is_empty() {
        user.push_str(
            "\nIf mutation detection feedback is available, consider the following uncovered \
             mutation conditions to guide assertion refinement:\n",
        );
        user.push_str(&format!(
            "- mutation_points: {}\n",
            serde_json::to_string(&req.mutation_points).expect("string list serializes")
        ));
    }
    user.push_str(
        "\nStep 1 - Semantic Decomposition:\n\
         Extract the intent into three parts:\n\
         - Precondition: When should this assertion be triggered?\n\
         - Consequence: What signal behavior must happen?\n\
         - Timing: Within what time window must it occur?\n\
         Step 2 - Pattern Selection:\n\
         Choose the best matching assertion pattern:\n\
         - Implication (if A then B within N cycles)\n\
         - Stability (signal must remain constant)\n\
         - Invariant (property must always hold)\n\
         Step 3 - Temporal Binding:\n\
         Translate timing into SystemVerilog syntax, e.g., ##[2:4], [*2], etc.\n\
         Step 4 - SVA Syntax Synthesis:\n\
         Assemble the final assertion using SystemVerilog syntax. Include clock edge and \
         proper operators.\n\
         Answer with the four steps labeled Step 1: through Step 4:.\n",
    );
    if !req.retrieved.is_empty() {
        user.push_str("\nREFERENCES\n");
        for p in &req.retrieved {
            user.push_str(&format!("[{}]\n{}\n", p.id, p.text));
        }
    }
    user.push_str("\nINPUT\n");
    let input = serde_json::json!({
        "precondition": triplet.precondition,
        "consequence": triplet.consequence,
        "timing": triplet.timing,
        "mutation_points": req.mutation_points,
    });
    user.push_str(&serde_json::to_string_pretty(&input).expect("input block serializes"));
    user.push('\n');
    Ok(ChatRequest::new("generate", GEN_SYSTEM_ROLE, user))
}

/// Single-step variant used when chain-of-thought prompting is
/// disabled: same input block, no step scaffold.
pub fn build_direct_prompt(req: &GenerationRequest) -> Result<ChatRequest, GenError> {
    let triplet = effective_triplet(&req.signal)?;
    let mut user = String::from(
        "Write one SystemVerilog assertion for the following signal intent. \
         Reply with only the assertion.\n\nINPUT\n",
    );
    let input = serde_json::json!({
        "precondition": triplet.precondition,
        "consequence": triplet.consequence,
        "timing": triplet.timing,
        "mutation_points": req.mutation_points,
    });
    user.push_str(&serde_json::to_string_pretty(&input).expect("input block serializes"));
    user.push('\n');
    Ok(ChatRequest::new("generate", GEN_SYSTEM_ROLE, user))
}

fn extract_assertion(text: &str) -> Result<String, GenError> {
    let start = text.find("assert").ok_or_else(|| {
        GenError::UnparseableResponse("no `assert` keyword in final step".into())
    })?;
    let rel_end = text[start..].find(';').ok_or_else(|| {
        GenError::UnparseableResponse("assertion is not `;`-terminated".into())
    })?;
    let raw: String = text[start..start + rel_end + 1]
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    Ok(raw)
}

/// Parses a four-step response into the recorded steps plus the AST of
/// the final assertion. Headers are matched case-insensitively and the
/// final step may span several lines.
pub fn parse_generation_response(text: &str) -> Result<(GenerationSteps, SvaAst), GenError> {
    let header = Regex::new(r"(?i)^\s*step\s*([1-4])\s*[:.\-]\s*(.*)$").unwrap();
    let mut sections: [Vec<String>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for line in text.lines() {
        if let Some(c) = header.captures(line) {
            let idx = c[1].parse::<usize>().unwrap() - 1;
            current = Some(idx);
            let rest = c[2].trim();
            if !rest.is_empty() {
                sections[idx].push(rest.to_string());
            }
        } else if let Some(idx) = current {
            sections[idx].push(line.trim().to_string());
        }
    }
    for (i, s) in sections.iter().enumerate() {
        if s.iter().all(|l| l.is_empty()) {
            return Err(GenError::UnparseableResponse(format!(
                "missing Step {} section",
                i + 1
            )));
        }
    }
    let decomposition = sections[0].join("\n").trim().to_string();

    let pattern_text = sections[1].join(" ").to_ascii_lowercase();
    let pattern = if pattern_text.contains("implication") {
        AssertionPattern::Implication
    } else if pattern_text.contains("stability") {
        AssertionPattern::Stability
    } else if pattern_text.contains("invariant") {
        AssertionPattern::Invariant
    } else {
        return Err(GenError::UnparseableResponse(format!(
            "Step 2 names no known pattern: `{pattern_text}`"
        )));
    };

    let temporal_raw = sections[2].join(" ");
    let temporal = temporal_raw
        .trim()
        .strip_prefix("Temporal:")
        .or_else(|| temporal_raw.trim().strip_prefix("temporal:"))
        .unwrap_or(temporal_raw.trim())
        .trim()
        .to_string();

    let final_text = extract_assertion(&sections[3].join("\n"))?;
    let ast = parse_sva(&final_text)
        .map_err(|e| GenError::UnparseableResponse(format!("Step 4 does not parse: {e}")))?;
    Ok((
        GenerationSteps {
            decomposition,
            pattern,
            temporal,
            final_text,
        },
        ast,
    ))
}

fn implication_ast(clock: &str, antecedent: BoolExpr, fragment: &str) -> Result<SvaAst, GenError> {
    let consequent = parse_sequence(fragment)
        .map_err(|e| GenError::UnparseableResponse(format!("bound timing does not parse: {e}")))?;
    Ok(SvaAst {
        clocking: Clocking {
            edge: Edge::Pos,
            signal: clock.to_string(),
        },
        body: Property::Implication {
            antecedent: Sequence::single(antecedent),
            consequent,
        },
    })
}

fn bare_ast(clock: &str, expr: BoolExpr) -> SvaAst {
    SvaAst {
        clocking: Clocking {
            edge: Edge::Pos,
            signal: clock.to_string(),
        },
        body: Property::Seq(Sequence::single(expr)),
    }
}

/// Runs pattern selection, temporal binding, and template assembly
/// without an LLM. Yields one assertion per intent triplet plus one
/// per expressible invariant.
pub fn synthesize_offline(
    spec: &SignalSpec,
    clock: &str,
) -> Result<Vec<(GenerationSteps, SvaAst)>, GenError> {
    if spec.intent.is_none() && spec.invariants.is_empty() {
        return Err(GenError::NonGenerableSignal {
            name: spec.name.clone(),
        });
    }
    let mut out = Vec::new();
    if let Some(triplet) = &spec.intent {
        let pattern = select_pattern(Some(triplet), &spec.temporal_roles);
        let decomposition = format!(
            "Precondition: {}\nConsequence: {}\nTiming: {}",
            triplet.precondition, triplet.consequence, triplet.timing
        );
        let parse = |text: &str| {
            let norm = normalize_bool_prose(text);
            parse_bool_expr(&norm).map_err(|e| {
                GenError::UnparseableResponse(format!("`{text}` is not a boolean expression: {e}"))
            })
        };
        let (temporal, ast) = match pattern {
            AssertionPattern::Implication => {
                let ante = parse(&triplet.precondition)?;
                let cons = parse(&triplet.consequence)?;
                let fragment = bind_temporal(&triplet.timing, &cons)?;
                let ast = implication_ast(clock, ante, &fragment)?;
                (fragment, ast)
            }
            AssertionPattern::Stability => {
                // Once raised, the signal stays raised for a cycle.
                let sig = BoolExpr::signal(&spec.name);
                let fragment = format!("##1 {}", spec.name);
                let ast = implication_ast(clock, sig, &fragment)?;
                (fragment, ast)
            }
            AssertionPattern::Invariant => {
                let cons = parse(&triplet.consequence)?;
                (String::new(), bare_ast(clock, cons))
            }
        };
        let final_text = render_sva(&ast);
        out.push((
            GenerationSteps {
                decomposition,
                pattern,
                temporal,
                final_text,
            },
            ast,
        ));
    }
    for inv in &spec.invariants {
        let expr = parse_bool_expr(inv).map_err(|e| {
            GenError::UnparseableResponse(format!("invariant `{inv}` does not parse: {e}"))
        })?;
        let ast = bare_ast(clock, expr);
        let final_text = render_sva(&ast);
        out.push((
            GenerationSteps {
                decomposition: format!("Invariant: {inv} must always hold"),
                pattern: AssertionPattern::Invariant,
                temporal: String::new(),
                final_text,
            },
            ast,
        ));
    }
    Ok(out)
}

fn retrieval_query(spec: &SignalSpec, triplet: &IntentTriplet) -> String {
    let pattern = select_pattern(Some(triplet), &spec.temporal_roles);
    let cue = match pattern {
        AssertionPattern::Implication => "implication delay window repetition",
        AssertionPattern::Stability => "stability hold constant",
        AssertionPattern::Invariant => "invariant always holds",
    };
    format!(
        "{cue} {} {} {} {}",
        spec.name, triplet.precondition, triplet.consequence, triplet.timing
    )
}

/// One LLM round for a signal, with a single repair retry that appends
/// the parse failure to the prompt.
fn generate_via_client(
    client: &LlmClient,
    prompt: &ChatRequest,
) -> Result<(GenerationSteps, SvaAst), GenError> {
    let first = client.complete(prompt)?;
    match parse_generation_response(&first) {
        Ok(parsed) => Ok(parsed),
        Err(e) => {
            let mut repair = prompt.clone();
            repair.user.push_str(&format!(
                "\nYour previous response could not be used: {e}\n\
                 Respond again with all four steps and a syntactically valid assertion.\n"
            ));
            let second = client.complete(&repair)?;
            parse_generation_response(&second)
        }
    }
}

/// Everything one generation round produced, plus the signals it had
/// to skip and why.
#[derive(Debug, Default)]
pub struct GenerationOutput {
    pub results: Vec<GenerationResult>,
    pub skipped: Vec<(String, String)>,
}

/// Generates assertions for every signal, in input order. Signals
/// without generable content are recorded as skipped rather than
/// failing the round. Feedback cues are looked up per signal name.
pub fn generate_all(
    client: &LlmClient,
    specs: &[SignalSpec],
    cfg: &GenConfig,
    feedback: &BTreeMap<String, Vec<String>>,
    iteration: u32,
) -> Result<GenerationOutput, GenError> {
    let mut out = GenerationOutput::default();
    let mut seen_text = std::collections::BTreeSet::new();
    for spec in specs {
        let triplet = match effective_triplet(spec) {
            Ok(t) => t,
            Err(e) => {
                out.skipped.push((spec.name.clone(), e.to_string()));
                continue;
            }
        };
        let mutation_points = feedback.get(&spec.name).cloned().unwrap_or_default();
        let retrieved = match (&cfg.corpus_dir, cfg.retrieval_k) {
            (Some(dir), k) if k > 0 => retrieve(&retrieval_query(spec, &triplet), dir, k)?,
            _ => Vec::new(),
        };
        let req = GenerationRequest {
            signal: spec.clone(),
            mutation_points: mutation_points.clone(),
            retrieved,
        };

        // Fixture-backed clients answer only the cases they script;
        // everything else takes the deterministic template path.
        let llm_steps = if client.is_mock() {
            let prompt = if cfg.chain_of_thought {
                build_generation_prompt(&req)?
            } else {
                build_direct_prompt(&req)?
            };
            match client.complete(&prompt) {
                Ok(text) => match parse_generation_response(&text) {
                    Ok(parsed) => Some(parsed),
                    Err(_) => None,
                },
                Err(LlmError::FixtureMiss { .. }) => None,
                Err(e) => return Err(e.into()),
            }
        } else {
            let prompt = if cfg.chain_of_thought {
                build_generation_prompt(&req)?
            } else {
                build_direct_prompt(&req)?
            };
            match generate_via_client(client, &prompt) {
                Ok(parsed) => Some(parsed),
                Err(GenError::Llm(_)) => None,
                Err(e) => {
                    out.skipped.push((spec.name.clone(), e.to_string()));
                    continue;
                }
            }
        };

        let mut produced: Vec<(GenerationSteps, SvaAst)> = Vec::new();
        match llm_steps {
            Some(parsed) => {
                produced.push(parsed);
                // Invariant extras are mechanical either way.
                for inv in &spec.invariants {
                    if let Ok(expr) = parse_bool_expr(inv) {
                        let ast = bare_ast(&cfg.clock, expr);
                        produced.push((
                            GenerationSteps {
                                decomposition: format!("Invariant: {inv} must always hold"),
                                pattern: AssertionPattern::Invariant,
                                temporal: String::new(),
                                final_text: render_sva(&ast),
                            },
                            ast,
                        ));
                    }
                }
            }
            None => match synthesize_offline(spec, &cfg.clock) {
                Ok(items) => produced.extend(items),
                Err(e) => {
                    out.skipped.push((spec.name.clone(), e.to_string()));
                    continue;
                }
            },
        }

        for (steps, ast) in produced {
            if !seen_text.insert(steps.final_text.clone()) {
                continue;
            }
            out.results.push(GenerationResult {
                id: String::new(),
                signal: spec.name.clone(),
                iteration,
                steps,
                ast,
                retrieved: req.retrieved.iter().map(|p| p.id.clone()).collect(),
                mutation_points: mutation_points.clone(),
            });
        }
    }
    for (i, r) in out.results.iter_mut().enumerate() {
        r.id = format!("a{:03}", i + 1);
    }
    Ok(out)
}

/// Renders results as an assertion file: a comment line naming the id,
/// signal, and pattern, then the assertion itself.
pub fn assertions_to_file(results: &[GenerationResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&format!(
            "// {} {} {}\n{}\n",
            r.id, r.signal, r.steps.pattern, r.steps.final_text
        ));
    }
    out
}

/// Reads an assertion file back: one assertion per line, `//` comments
/// allowed. A comment of the form `// <id> ...` names the assertion on
/// the following line; unnamed assertions get line-numbered ids.
pub fn assertions_from_file(src: &str) -> Result<Vec<(String, SvaAst)>, GenError> {
    let mut out = Vec::new();
    let mut pending_id: Option<String> = None;
    for (lineno, line) in src.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix("//") {
            if let Some(first) = comment.split_whitespace().next() {
                pending_id = Some(first.to_string());
            }
            continue;
        }
        let ast = parse_sva(line)
            .map_err(|e| GenError::UnparseableResponse(format!("line {}: {e}", lineno + 1)))?;
        let id = pending_id
            .take()
            .unwrap_or_else(|| format!("line{}", lineno + 1));
        out.push((id, ast));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ClientMode;
    use crate::merge::SourceRef;

    fn triplet(pre: &str, cons: &str, timing: &str) -> IntentTriplet {
        IntentTriplet {
            precondition: pre.into(),
            consequence: cons.into(),
            timing: timing.into(),
        }
    }

    fn spec_with(intent: Option<IntentTriplet>, roles: Vec<TemporalRole>) -> SignalSpec {
        SignalSpec {
            name: "read_valid".into(),
            width: 1,
            direction: None,
            default_value: None,
            category: String::new(),
            control_logic: String::new(),
            fsm_transitions: Vec::new(),
            timing_constraint: String::new(),
            temporal_logic: String::new(),
            natural_language: String::new(),
            temporal_roles: roles,
            invariants: Vec::new(),
            intent,
            traceability: vec![SourceRef {
                block_index: 0,
                page_number: 1,
                kind: "table".into(),
                field: "width".into(),
            }],
        }
    }

    fn strip_ws(s: &str) -> String {
        s.chars().filter(|c| !c.is_whitespace()).collect()
    }

    #[test]
    fn offline_path_reproduces_the_reference_assertion() {
        let spec = spec_with(
            Some(triplet(
                "read_req is high && arbiter_grant is low",
                "read_valid must be high",
                "between 2 and 4 cycles, and hold for >=2 cycles",
            )),
            vec![
                TemporalRole::Responder,
                TemporalRole::BoundedDelay,
                TemporalRole::Stabilizer,
            ],
        );
        let items = synthesize_offline(&spec, "clk").unwrap();
        assert_eq!(items.len(), 1);
        let (steps, _ast) = &items[0];
        assert_eq!(steps.pattern, AssertionPattern::Implication);
        assert_eq!(steps.temporal, "##[2:4] read_valid[*2]");
        assert_eq!(
            strip_ws(&steps.final_text),
            strip_ws(
                "assert property (@(posedge clk)(read_req && !arbiter_grant) |-> ##[2:4]read_valid[*2]);"
            )
        );
    }

    #[test]
    fn pattern_selection_is_total_and_windowed_first() {
        let t = triplet("a", "b", "between 2 and 4 cycles");
        assert_eq!(
            select_pattern(Some(&t), &[]),
            AssertionPattern::Implication
        );
        let hold_only = triplet("", "b", "");
        assert_eq!(
            select_pattern(Some(&hold_only), &[TemporalRole::Stabilizer]),
            AssertionPattern::Stability
        );
        assert_eq!(
            select_pattern(Some(&triplet("", "parity == ^data", "")), &[]),
            AssertionPattern::Invariant
        );
        assert_eq!(select_pattern(None, &[]), AssertionPattern::Invariant);
    }

    #[test]
    fn temporal_binding_covers_the_prose_grammar() {
        let sig = parse_bool_expr("read_valid").unwrap();
        assert_eq!(
            bind_temporal("between 2 and 4 cycles, and hold for >=2 cycles", &sig).unwrap(),
            "##[2:4] read_valid[*2]"
        );
        assert_eq!(
            bind_temporal("within 1 cycle", &sig).unwrap(),
            "##[0:1] read_valid"
        );
        assert_eq!(
            bind_temporal("after exactly 3 cycles", &sig).unwrap(),
            "##3 read_valid"
        );
        assert_eq!(
            bind_temporal("##[1:2] ack_out[*2]", &sig).unwrap(),
            "##[1:2] ack_out[*2]"
        );
        assert!(matches!(
            bind_temporal("eventually someday", &sig),
            Err(GenError::UnboundTiming { .. })
        ));
        assert!(matches!(
            bind_temporal("between 4 and 2 cycles", &sig),
            Err(GenError::UnboundTiming { .. })
        ));
    }

    #[test]
    fn bound_fragments_always_parse_as_sequences() {
        let sig = parse_bool_expr("!en_n").unwrap();
        for timing in [
            "between 0 and 7 cycles, and hold for >=3 cycles",
            "within 2 cycles",
            "after exactly 1 cycle",
        ] {
            let frag = bind_temporal(timing, &sig).unwrap();
            parse_sequence(&frag).unwrap_or_else(|e| panic!("`{frag}` does not parse: {e}"));
        }
    }

    #[test]
    fn prose_normalization_handles_levels_and_equality() {
        assert_eq!(
            normalize_bool_prose("read_req is high && arbiter_grant is low"),
            "read_req && !arbiter_grant"
        );
        assert_eq!(normalize_bool_prose("ack_out == 1"), "ack_out");
        assert_eq!(normalize_bool_prose("en_n == 0"), "!en_n");
        assert_eq!(
            normalize_bool_prose("state == READ && data_valid"),
            "state == READ && data_valid"
        );
    }

    #[test]
    fn prompt_embeds_the_triplet_as_json() {
        let req = GenerationRequest {
            signal: spec_with(
                Some(triplet(
                    "read_req is high && arbiter_grant is low",
                    "read_valid must be high",
                    "between 2 and 4 cycles, and hold for >=2 cycles",
                )),
                vec![],
            ),
            mutation_points: vec![],
            retrieved: vec![],
        };
        let prompt = build_generation_prompt(&req).unwrap();
        assert_eq!(prompt.tag, "generate");
        assert!(prompt.system.contains("hardware verification expert"));
        assert!(prompt
            .user
            .contains("\"precondition\": \"read_req is high && arbiter_grant is low\""));
        assert!(prompt.user.contains("Step 4 - SVA Syntax Synthesis"));
        assert!(!prompt.user.contains("mutation detection feedback"));
    }

    #[test]
    fn feedback_round_extends_the_first_prompt() {
        let base = GenerationRequest {
            signal: spec_with(Some(triplet("a", "b", "within 1 cycle")), vec![]),
            mutation_points: vec![],
            retrieved: vec![],
        };
        let mut with_cues = base.clone();
        with_cues.mutation_points = vec!["read_valid never asserted".into()];
        let p0 = build_generation_prompt(&base).unwrap();
        let p1 = build_generation_prompt(&with_cues).unwrap();
        for section in [
            "TASK DESCRIPTION",
            "Step 1 - Semantic Decomposition",
            "Step 2 - Pattern Selection",
            "Step 3 - Temporal Binding",
            "Step 4 - SVA Syntax Synthesis",
            "INPUT",
        ] {
            assert!(p0.user.contains(section), "p0 lacks {section}");
            assert!(p1.user.contains(section), "p1 lacks {section}");
        }
        assert!(p1.user.contains("read_valid never asserted"));
        assert!(p1.user.len() > p0.user.len());
    }

    #[test]
    fn nongenerable_signal_is_rejected() {
        let req = GenerationRequest {
            signal: spec_with(None, vec![]),
            mutation_points: vec![],
            retrieved: vec![],
        };
        assert!(matches!(
            build_generation_prompt(&req),
            Err(GenError::NonGenerableSignal { .. })
        ));
    }

    #[test]
    fn four_step_response_parses_into_steps_and_ast() {
        let response = "Step 1:\nIf (read_req && !arbiter_grant), then read_valid must become \
                        high within 2-4 cycles and stay high for >=2 cycles.\n\
                        Step 2:Pattern: Implication\n\
                        Step 3:Temporal: ##[2:4] read_valid[*2]\n\
                        Step 4:assert property (@(posedge clk)(read_req && !arbiter_grant) |-> ##[2:4]read_valid[*2]);";
        let (steps, ast) = parse_generation_response(response).unwrap();
        assert_eq!(steps.pattern, AssertionPattern::Implication);
        assert_eq!(steps.temporal, "##[2:4] read_valid[*2]");
        assert_eq!(ast, parse_sva(&steps.final_text).unwrap());
    }

    #[test]
    fn responses_missing_a_step_are_rejected() {
        let response = "Step 1: something\nStep 2: Pattern: Implication\n\
                        Step 4: assert property (@(posedge clk) a |-> b);";
        let err = parse_generation_response(response).unwrap_err();
        assert!(err.to_string().contains("Step 3"), "{err}");
    }

    #[test]
    fn retrieval_ranks_on_topic_passages_first() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("a-implication.md"),
            "Implication patterns use |-> with a delay range. The delay range ##[m:n] \
             bounds the response window of an implication.\n\nUnrelated paragraph about \
             linting style.",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("b-reset.md"),
            "Reset behavior: hold reset for two cycles before releasing.",
        )
        .unwrap();
        let hits = retrieve("implication delay range", dir.path(), 2).unwrap();
        assert!(!hits.is_empty());
        assert_eq!(hits[0].id, "a-implication.md#0");
        assert!(hits[0].text.contains("|->"));

        assert!(retrieve("anything", dir.path().join("missing").as_path(), 2).is_err());
        assert_eq!(
            retrieve("implication", dir.path(), 0).unwrap(),
            Vec::<Passage>::new()
        );
    }

    #[test]
    fn retrieval_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["one.md", "two.md", "three.md"] {
            std::fs::write(
                dir.path().join(name),
                "delay window repetition hold assert property",
            )
            .unwrap();
        }
        let a = retrieve("delay window", dir.path(), 3).unwrap();
        let b = retrieve("delay window", dir.path(), 3).unwrap();
        assert_eq!(a, b);
        // Equal scores fall back to id order.
        let ids: Vec<&str> = a.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["one.md#0", "three.md#0", "two.md#0"]);
    }

    #[test]
    fn generate_all_assigns_ids_in_signal_order() {
        let client = LlmClient::new(ClientMode::Mock {
            fixture_dir: PathBuf::from("/nonexistent-fixtures"),
        });
        let mut first = spec_with(
            Some(triplet("a is high", "b must be high", "within 1 cycle")),
            vec![],
        );
        first.name = "alpha".into();
        let mut second = first.clone();
        second.name = "beta".into();
        second.intent = Some(triplet("c is high", "d must be high", "within 2 cycles"));
        let out = generate_all(
            &client,
            &[first, second],
            &GenConfig::default(),
            &BTreeMap::new(),
            0,
        )
        .unwrap();
        assert_eq!(out.results.len(), 2);
        assert_eq!(out.results[0].id, "a001");
        assert_eq!(out.results[0].signal, "alpha");
        assert_eq!(out.results[1].id, "a002");
        assert_eq!(out.results[1].signal, "beta");
        assert!(out.skipped.is_empty());
    }

    #[test]
    fn assertion_file_round_trips_ids_and_asts() {
        let client = LlmClient::new(ClientMode::Mock {
            fixture_dir: PathBuf::from("/nonexistent-fixtures"),
        });
        let spec = spec_with(
            Some(triplet("a is high", "b must be high", "within 1 cycle")),
            vec![],
        );
        let out = generate_all(
            &client,
            &[spec],
            &GenConfig::default(),
            &BTreeMap::new(),
            0,
        )
        .unwrap();
        let file = assertions_to_file(&out.results);
        let back = assertions_from_file(&file).unwrap();
        assert_eq!(back.len(), out.results.len());
        for ((id, ast), r) in back.iter().zip(&out.results) {
            assert_eq!(id, &r.id);
            assert_eq!(ast, &r.ast);
        }
    }

    #[test]
    fn offline_generation_is_byte_deterministic() {
        let client = LlmClient::new(ClientMode::Mock {
            fixture_dir: PathBuf::from("/nonexistent-fixtures"),
        });
        let mut spec = spec_with(
            Some(triplet(
                "state == READ && data_valid",
                "ack_out == 1",
                "##[1:2] ack_out[*2]",
            )),
            vec![TemporalRole::Responder],
        );
        spec.invariants = vec!["parity == ^data".into()];
        let run = || {
            let out = generate_all(
                &client,
                std::slice::from_ref(&spec),
                &GenConfig::default(),
                &BTreeMap::new(),
                0,
            )
            .unwrap();
            assertions_to_file(&out.results)
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.contains("assert property (@(posedge clk) (state == READ && data_valid) |-> ##[1:2] ack_out[*2]);"));
        assert!(a.contains("assert property (@(posedge clk) parity == ^data);"));
    }
}
