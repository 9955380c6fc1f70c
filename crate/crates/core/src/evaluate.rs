//! Metric computation over detection matrices and the bounded
//! refinement loop that feeds undetected mutants back into generation.
//!
//! Scores are exact rationals, never floats, so reports are stable and
//! the cross-check against a brute-force recount is an equality, not a
//! tolerance. The loop stops on full detection, on a stalled
//! undetected set, or at the iteration cap, whichever comes first.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{build_matrix, check_golden, CheckConfig, CheckError, DetectionMatrix};
use crate::llm::LlmClient;
use crate::merge::SignalSpec;
use crate::rtl::{Mutant, MutantRecord, RtlModule};
use crate::svagen::{generate_all, GenConfig, GenError, GenerationResult};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("assertion set is empty")]
    EmptyAssertionSet,
    #[error("mutant set is empty")]
    EmptyMutantSet,
    #[error("assertion index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("assertion `{id}` has no semantic label and no default entry")]
    MissingLabel { id: String },
    #[error("assertion `{id}` has no golden-design verdict")]
    MissingGoldenResult { id: String },
    #[error("mutant id `{id}` is not in the manifest")]
    UnknownMutantId { id: String },
    #[error("assertion `{id}` is not a row of the matrix")]
    Misaligned { id: String },
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error(transparent)]
    Gen(#[from] GenError),
}

/// Ground truth for one assertion, supplied by a labels file or
/// fixture annotation, never inferred by the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticLabel {
    pub semantically_corr: bool,
    #[serde(default)]
    pub note: String,
}

pub type LabelMap = BTreeMap<String, SemanticLabel>;

pub fn labels_from_json(src: &str) -> Result<LabelMap, serde_json::Error> {
    serde_json::from_str(src)
}

/// Looks up an assertion's label, falling back to the `default` entry
/// when present.
pub fn label_for<'a>(labels: &'a LabelMap, id: &str) -> Result<&'a SemanticLabel, EvalError> {
    labels
        .get(id)
        .or_else(|| labels.get("default"))
        .ok_or_else(|| EvalError::MissingLabel { id: id.to_string() })
}

/// Number of mutants assertion row `i` detects: the row sum.
pub fn score(matrix: &DetectionMatrix, i: usize) -> Result<u64, EvalError> {
    let row = matrix.cells.get(i).ok_or(EvalError::IndexOutOfRange {
        index: i,
        len: matrix.cells.len(),
    })?;
    Ok(row.iter().map(|&b| b as u64).sum())
}

/// Mean row sum across all assertions.
pub fn avg_mutation_score(matrix: &DetectionMatrix) -> Result<Ratio<u64>, EvalError> {
    let n = matrix.assertions.len() as u64;
    if n == 0 {
        return Err(EvalError::EmptyAssertionSet);
    }
    let total: u64 = (0..matrix.assertions.len())
        .map(|i| score(matrix, i))
        .sum::<Result<u64, _>>()?;
    Ok(Ratio::new(total, n))
}

/// Fraction of mutants detected by at least one assertion.
pub fn mdr(matrix: &DetectionMatrix) -> Result<Ratio<u64>, EvalError> {
    let k = matrix.mutants.len() as u64;
    if k == 0 {
        return Err(EvalError::EmptyMutantSet);
    }
    let detected = (0..matrix.mutants.len())
        .filter(|&j| matrix.cells.iter().any(|row| row[j] == 1))
        .count() as u64;
    Ok(Ratio::new(detected, k))
}

/// Fraction of the final set that fails on the golden design without
/// being semantically wrong by design intent. Failures labeled
/// semantically correct point at real design flaws and stay out of the
/// numerator.
pub fn fpr(
    final_ids: &[String],
    golden_fails: &BTreeMap<String, bool>,
    labels: &LabelMap,
) -> Result<Ratio<u64>, EvalError> {
    if final_ids.is_empty() {
        return Err(EvalError::EmptyAssertionSet);
    }
    let mut numerator = 0u64;
    for id in final_ids {
        let fails = *golden_fails
            .get(id)
            .ok_or_else(|| EvalError::MissingGoldenResult { id: id.clone() })?;
        let label = label_for(labels, id)?;
        if fails && !label.semantically_corr {
            numerator += 1;
        }
    }
    Ok(Ratio::new(numerator, final_ids.len() as u64))
}

/// Splits results into survivors (score >= 1) and the ids of pruned
/// zero-score assertions, preserving order.
pub fn prune_zero_scores(
    results: &[GenerationResult],
    matrix: &DetectionMatrix,
) -> Result<(Vec<GenerationResult>, Vec<String>), EvalError> {
    let mut survivors = Vec::new();
    let mut pruned = Vec::new();
    for r in results {
        let row = matrix
            .assertions
            .iter()
            .position(|id| id == &r.id)
            .ok_or_else(|| EvalError::Misaligned { id: r.id.clone() })?;
        if score(matrix, row)? >= 1 {
            survivors.push(r.clone());
        } else {
            pruned.push(r.id.clone());
        }
    }
    Ok((survivors, pruned))
}

/// Mutant ids whose matrix column is all-zero.
pub fn undetected_mutants(matrix: &DetectionMatrix) -> Vec<String> {
    (0..matrix.mutants.len())
        .filter(|&j| matrix.cells.iter().all(|row| row[j] == 0))
        .map(|j| matrix.mutants[j].clone())
        .collect()
}

/// One feedback cue per undetected mutant, deduplicated by (affected
/// signals, operator) so repeated edits of the same kind collapse into
/// a single hint.
pub fn mutation_points(
    undetected: &[String],
    manifest: &[MutantRecord],
) -> Result<Vec<String>, EvalError> {
    let by_id: BTreeMap<&str, &MutantRecord> =
        manifest.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut cues = Vec::new();
    let mut seen = BTreeSet::new();
    for id in undetected {
        let record = by_id
            .get(id.as_str())
            .ok_or_else(|| EvalError::UnknownMutantId { id: id.clone() })?;
        let signals = record.affected.join(", ");
        if seen.insert((signals.clone(), record.operator.clone())) {
            cues.push(format!(
                "{} at {} affecting {}",
                record.operator, record.location, signals
            ));
        }
    }
    Ok(cues)
}

/// Feedback cues grouped by affected signal, the shape generation
/// consumes.
pub fn feedback_by_signal(
    undetected: &[String],
    manifest: &[MutantRecord],
) -> Result<BTreeMap<String, Vec<String>>, EvalError> {
    let by_id: BTreeMap<&str, &MutantRecord> =
        manifest.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for id in undetected {
        let record = by_id
            .get(id.as_str())
            .ok_or_else(|| EvalError::UnknownMutantId { id: id.clone() })?;
        let signals = record.affected.join(", ");
        if !seen.insert((signals.clone(), record.operator.clone())) {
            continue;
        }
        let cue = format!(
            "{} at {} affecting {}",
            record.operator, record.location, signals
        );
        for signal in &record.affected {
            out.entry(signal.clone()).or_default().push(cue.clone());
        }
    }
    Ok(out)
}

/// The quality numbers for one assertion set against one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub design: String,
    pub method: String,
    pub svas_generated: usize,
    pub syntax_correct: usize,
    pub functional_correct: usize,
    pub per_assertion_scores: BTreeMap<String, u64>,
    pub avg_mutation_score: Ratio<u64>,
    /// Recomputed over the post-prune survivor rows; the paper is
    /// ambiguous about which set the average covers, so both appear.
    pub avg_mutation_score_pruned: Ratio<u64>,
    pub mdr: Ratio<u64>,
    pub fpr: Ratio<u64>,
}

/// Computes the full metric suite. `generated` is the raw count before
/// syntax filtering; `matrix` covers the syntax-correct set; `final_ids`
/// is the post-prune set used for functional correctness and FPR.
#[allow(clippy::too_many_arguments)]
pub fn compute_metrics(
    design: &str,
    method: &str,
    generated: usize,
    matrix: &DetectionMatrix,
    final_ids: &[String],
    golden_fails: &BTreeMap<String, bool>,
    labels: &LabelMap,
) -> Result<MetricsReport, EvalError> {
    let mut per_assertion_scores = BTreeMap::new();
    for (i, id) in matrix.assertions.iter().enumerate() {
        per_assertion_scores.insert(id.clone(), score(matrix, i)?);
    }
    let final_set: BTreeSet<&String> = final_ids.iter().collect();
    let surviving_scores: Vec<u64> = matrix
        .assertions
        .iter()
        .enumerate()
        .filter(|(_, id)| final_set.contains(id))
        .map(|(i, _)| score(matrix, i))
        .collect::<Result<_, _>>()?;
    let avg_pruned = if surviving_scores.is_empty() {
        Ratio::new(0, 1)
    } else {
        Ratio::new(
            surviving_scores.iter().sum::<u64>(),
            surviving_scores.len() as u64,
        )
    };
    let mut functional_correct = 0usize;
    for id in final_ids {
        if label_for(labels, id)?.semantically_corr {
            functional_correct += 1;
        }
    }
    Ok(MetricsReport {
        design: design.to_string(),
        method: method.to_string(),
        svas_generated: generated,
        syntax_correct: matrix.assertions.len(),
        functional_correct,
        per_assertion_scores,
        avg_mutation_score: avg_mutation_score(matrix)?,
        avg_mutation_score_pruned: avg_pruned,
        mdr: mdr(matrix)?,
        fpr: fpr(final_ids, golden_fails, labels)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MdrOne,
    NoProgress,
    MaxIter,
}

/// Everything one refinement iteration produced.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub iteration: u32,
    pub results: Vec<GenerationResult>,
    pub skipped: Vec<(String, String)>,
    pub matrix: DetectionMatrix,
    pub metrics: MetricsReport,
    pub survivors: Vec<GenerationResult>,
    pub pruned: Vec<String>,
    pub undetected: Vec<String>,
    pub stop: Option<StopReason>,
}

/// Mutant modules plus their manifest rows, in matching order. Built
/// from freshly generated mutants or rehydrated from a persisted
/// mutant set, where the modules come from reparsed source files.
#[derive(Debug, Clone, Default)]
pub struct MutantSet {
    pub modules: Vec<(String, RtlModule)>,
    pub manifest: Vec<MutantRecord>,
}

impl MutantSet {
    pub fn from_mutants(mutants: &[Mutant]) -> MutantSet {
        MutantSet {
            modules: mutants
                .iter()
                .map(|m| (m.id.clone(), m.module.clone()))
                .collect(),
            manifest: mutants.iter().map(Mutant::record).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RefinementConfig {
    pub design: String,
    pub method: String,
    pub max_iter: u32,
    pub check: CheckConfig,
    pub gen: GenConfig,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            design: "design".into(),
            method: "pipeline".into(),
            max_iter: 3,
            check: CheckConfig::default(),
            gen: GenConfig::default(),
        }
    }
}

fn golden_fail_map(
    results: &[GenerationResult],
    golden: &RtlModule,
    cfg: &CheckConfig,
) -> Result<BTreeMap<String, bool>, EvalError> {
    let mut out = BTreeMap::new();
    for r in results {
        let verdict = match check_golden(&r.ast, golden, cfg) {
            Ok(v) => v.is_fail(),
            // Assertions over signals the design does not expose
            // cannot produce counterexamples on it.
            Err(CheckError::UnknownSignal { .. }) => false,
            Err(e) => return Err(e.into()),
        };
        out.insert(r.id.clone(), verdict);
    }
    Ok(out)
}

/// Runs bounded mutation-guided refinement: generate, check, prune,
/// feed undetected mutants back, repeat. Returns one state per
/// iteration; the last carries the stop reason.
pub fn run_refinement(
    client: &LlmClient,
    specs: &[SignalSpec],
    golden: &RtlModule,
    mutants: &MutantSet,
    labels: &LabelMap,
    cfg: &RefinementConfig,
) -> Result<Vec<IterationState>, EvalError> {
    if mutants.is_empty() {
        return Err(EvalError::EmptyMutantSet);
    }
    let mut history: Vec<IterationState> = Vec::new();
    let mut generated_total = 0usize;
    let mut next_ordinal = 1usize;
    let mut current: Vec<GenerationResult> = Vec::new();
    let mut seen_texts: BTreeSet<String> = BTreeSet::new();
    let mut feedback: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut prev_undetected: Option<Vec<String>> = None;

    for iteration in 0..cfg.max_iter {
        let fresh = generate_all(client, specs, &cfg.gen, &feedback, iteration)?;
        generated_total += fresh.results.len();
        let skipped = fresh.skipped;
        for mut r in fresh.results {
            if !seen_texts.insert(r.steps.final_text.clone()) {
                continue;
            }
            r.id = format!("a{next_ordinal:03}");
            next_ordinal += 1;
            current.push(r);
        }
        if current.is_empty() {
            // A first round with no output is a hard error. A later one
            // means regeneration only re-proposed already-pruned texts,
            // which is a stall, not a failure.
            if let Some(last) = history.last_mut() {
                last.stop = Some(StopReason::NoProgress);
                break;
            }
            return Err(EvalError::EmptyAssertionSet);
        }

        let pairs: Vec<(String, crate::sva::SvaAst)> = current
            .iter()
            .map(|r| (r.id.clone(), r.ast.clone()))
            .collect();
        let outcome = build_matrix(&pairs, &mutants.modules, &cfg.check)?;
        let (survivors, pruned) = prune_zero_scores(&current, &outcome.matrix)?;
        let golden_fails = golden_fail_map(&current, golden, &cfg.check)?;
        let final_ids: Vec<String> = survivors.iter().map(|r| r.id.clone()).collect();
        // A round where everything scored zero still needs an FPR
        // denominator; fall back to the unpruned set.
        let fpr_ids = if final_ids.is_empty() {
            outcome.matrix.assertions.clone()
        } else {
            final_ids
        };
        let metrics = compute_metrics(
            &cfg.design,
            &cfg.method,
            generated_total,
            &outcome.matrix,
            &fpr_ids,
            &golden_fails,
            labels,
        )?;
        let undetected = undetected_mutants(&outcome.matrix);

        let stop = if metrics.mdr == Ratio::new(1, 1) {
            Some(StopReason::MdrOne)
        } else if prev_undetected.as_ref() == Some(&undetected) {
            Some(StopReason::NoProgress)
        } else if iteration + 1 == cfg.max_iter {
            Some(StopReason::MaxIter)
        } else {
            None
        };

        let state = IterationState {
            iteration,
            results: current.clone(),
            skipped,
            matrix: outcome.matrix,
            metrics,
            survivors: survivors.clone(),
            pruned,
            undetected: undetected.clone(),
            stop,
        };
        let done = state.stop.is_some();
        history.push(state);
        if done {
            break;
        }

        feedback = feedback_by_signal(&undetected, &mutants.manifest)?;
        prev_undetected = Some(undetected);
        current = survivors;
    }
    Ok(history)
}
