//! Stage implementations behind the subcommands.
//!
//! Every stage reads its input from the artifact the previous stage
//! persisted and writes its own artifact under the output directory,
//! so any stage can be re-run in isolation and a failed run keeps the
//! artifacts of the stages that completed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use specsva::analyze::{analyze_document, records_from_jsonl, records_to_jsonl};
use specsva::checker::{
    build_matrix, check_golden, persist_witnesses, CheckError, DetectionMatrix, GoldenVerdict,
};
use specsva::classify::classify_document;
use specsva::evaluate::{
    self, labels_from_json, run_refinement, IterationState, LabelMap, MutantSet,
    RefinementConfig, SemanticLabel,
};
use specsva::ir::{save_spec, SpecDocument};
use specsva::llm::LlmClient;
use specsva::merge::{merge_all, signals_from_json, signals_to_json, SignalSpec};
use specsva::report::write_report;
use specsva::rtl::{generate_mutants, parse_rtl, read_manifest, write_mutant_set, RtlModule};
use specsva::sva::SvaAst;
use specsva::svagen::{assertions_from_file, assertions_to_file, generate_all, GenerationResult};

use crate::config::PipelineConfig;

#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

fn fail(stage: &'static str, message: impl ToString) -> StageError {
    StageError {
        stage,
        message: message.to_string(),
    }
}

/// Artifact locations under the output directory. The layout is fixed
/// so tests and resumed runs can find everything by convention.
pub struct Layout {
    pub blocks: PathBuf,
    pub classified: PathBuf,
    pub classification: PathBuf,
    pub records: PathBuf,
    pub records_skipped: PathBuf,
    pub signals: PathBuf,
    pub assertions: PathBuf,
    pub provenance: PathBuf,
    pub gen_skipped: PathBuf,
    pub mutants_dir: PathBuf,
    pub matrix: PathBuf,
    pub golden: PathBuf,
    pub witness_dir: PathBuf,
    pub report_dir: PathBuf,
    pub history: PathBuf,
}

impl Layout {
    pub fn new(out: &Path) -> Layout {
        Layout {
            blocks: out.join("blocks/blocks.jsonl"),
            classified: out.join("blocks/classified.jsonl"),
            classification: out.join("blocks/classification.json"),
            records: out.join("records/records.jsonl"),
            records_skipped: out.join("records/skipped.json"),
            signals: out.join("signals/signals.json"),
            assertions: out.join("assertions/assertions.sva"),
            provenance: out.join("assertions/provenance.json"),
            gen_skipped: out.join("assertions/skipped.json"),
            mutants_dir: out.join("mutants"),
            matrix: out.join("matrix/matrix.json"),
            golden: out.join("matrix/golden.json"),
            witness_dir: out.join("matrix/witnesses"),
            report_dir: out.join("report"),
            history: out.join("report/history.json"),
        }
    }
}

fn write_artifact(stage: &'static str, path: &Path, content: &str) -> Result<(), StageError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| fail(stage, e))?;
    }
    fs::write(path, content).map_err(|e| fail(stage, e))
}

fn read_artifact(stage: &'static str, path: &Path, producer: &str) -> Result<String, StageError> {
    if !path.is_file() {
        return Err(fail(
            stage,
            format!(
                "missing artifact {}; run `{producer}` first",
                path.display()
            ),
        ));
    }
    fs::read_to_string(path).map_err(|e| fail(stage, e))
}

/// Validate the block stream and persist it in canonical form. A file
/// that does not start with a JSON meta line is treated as plain text
/// and segmented on blank lines.
pub fn ingest(cfg: &PipelineConfig, lay: &Layout) -> Result<(), StageError> {
    const STAGE: &str = "ingest";
    let text = fs::read_to_string(&cfg.blockstream).map_err(|e| fail(STAGE, e))?;
    let doc = if text.trim_start().starts_with('{') {
        SpecDocument::from_jsonl(&text).map_err(|e| fail(STAGE, e))?
    } else {
        specsva::ir::split_plaintext(&text, &cfg.design).map_err(|e| fail(STAGE, e))?
    };
    if let Some(parent) = lay.blocks.parent() {
        fs::create_dir_all(parent).map_err(|e| fail(STAGE, e))?;
    }
    save_spec(&doc, &lay.blocks).map_err(|e| fail(STAGE, e))?;
    eprintln!("ingest: {} blocks", doc.blocks.len());
    Ok(())
}

/// Assign modality and semantic category to every block.
pub fn classify(
    cfg: &PipelineConfig,
    lay: &Layout,
    client: &LlmClient,
) -> Result<(), StageError> {
    const STAGE: &str = "classify";
    let text = read_artifact(STAGE, &lay.blocks, "ingest")?;
    let mut doc = SpecDocument::from_jsonl(&text).map_err(|e| fail(STAGE, e))?;
    let results = classify_document(&mut doc, client);
    save_spec(&doc, &lay.classified).map_err(|e| fail(STAGE, e))?;
    let audit = json!({
        "schema": "classify/v1",
        "results": results
            .iter()
            .map(|r| {
                json!({
                    "modality": r.modality.to_string(),
                    "category": r.semantic_category.label(),
                    "rationale": r.rationale,
                })
            })
            .collect::<Vec<_>>(),
    });
    write_artifact(
        STAGE,
        &lay.classification,
        &format!("{}\n", serde_json::to_string_pretty(&audit).unwrap()),
    )?;
    eprintln!("classify: {} blocks annotated", results.len());
    let _ = cfg;
    Ok(())
}

/// Run the modality analyzers over the classified blocks.
pub fn analyze(
    cfg: &PipelineConfig,
    lay: &Layout,
    client: &LlmClient,
) -> Result<(), StageError> {
    const STAGE: &str = "analyze";
    let text = read_artifact(STAGE, &lay.classified, "classify")?;
    let doc = SpecDocument::from_jsonl(&text).map_err(|e| fail(STAGE, e))?;
    let output = analyze_document(&doc, client).map_err(|e| fail(STAGE, e))?;
    write_artifact(STAGE, &lay.records, &records_to_jsonl(&output.records))?;
    let skipped = json!({
        "schema": "skipped/v1",
        "blocks": output
            .skipped
            .iter()
            .map(|(index, reason)| json!({ "index": index, "reason": reason }))
            .collect::<Vec<_>>(),
    });
    write_artifact(
        STAGE,
        &lay.records_skipped,
        &format!("{}\n", serde_json::to_string_pretty(&skipped).unwrap()),
    )?;
    eprintln!(
        "analyze: {} records, {} blocks skipped",
        output.records.len(),
        output.skipped.len()
    );
    let _ = cfg;
    Ok(())
}

/// Merge analyzer records into per-signal specifications.
pub fn merge(cfg: &PipelineConfig, lay: &Layout) -> Result<(), StageError> {
    const STAGE: &str = "merge";
    let text = read_artifact(STAGE, &lay.records, "analyze")?;
    let records = records_from_jsonl(&text).map_err(|e| fail(STAGE, e))?;
    let specs = merge_all(&records).map_err(|e| fail(STAGE, e))?;
    write_artifact(STAGE, &lay.signals, &signals_to_json(&specs))?;
    eprintln!("merge: {} signals", specs.len());
    let _ = cfg;
    Ok(())
}

fn load_signals(stage: &'static str, lay: &Layout) -> Result<Vec<SignalSpec>, StageError> {
    let text = read_artifact(stage, &lay.signals, "merge")?;
    signals_from_json(&text).map_err(|e| fail(stage, e))
}

fn write_generation_artifacts(
    stage: &'static str,
    lay: &Layout,
    results: &[GenerationResult],
    skipped: &[(String, String)],
) -> Result<(), StageError> {
    write_artifact(stage, &lay.assertions, &assertions_to_file(results))?;
    let provenance = json!({
        "schema": "provenance/v1",
        "records": results.iter().map(|r| r.provenance()).collect::<Vec<_>>(),
    });
    write_artifact(
        stage,
        &lay.provenance,
        &format!("{}\n", serde_json::to_string_pretty(&provenance).unwrap()),
    )?;
    let skipped = json!({
        "schema": "skipped/v1",
        "signals": skipped
            .iter()
            .map(|(name, reason)| json!({ "name": name, "reason": reason }))
            .collect::<Vec<_>>(),
    });
    write_artifact(
        stage,
        &lay.gen_skipped,
        &format!("{}\n", serde_json::to_string_pretty(&skipped).unwrap()),
    )
}

/// Single-pass assertion generation (no mutation feedback).
pub fn generate(
    cfg: &PipelineConfig,
    lay: &Layout,
    client: &LlmClient,
) -> Result<(), StageError> {
    const STAGE: &str = "generate";
    let specs = load_signals(STAGE, lay)?;
    let output = generate_all(client, &specs, &cfg.gen, &BTreeMap::new(), 0)
        .map_err(|e| fail(STAGE, e))?;
    write_generation_artifacts(STAGE, lay, &output.results, &output.skipped)?;
    eprintln!(
        "generate: {} assertions, {} signals skipped",
        output.results.len(),
        output.skipped.len()
    );
    Ok(())
}

/// Produce the mutant set from the golden RTL.
pub fn mutate(cfg: &PipelineConfig, lay: &Layout) -> Result<(), StageError> {
    const STAGE: &str = "mutate";
    let src = fs::read_to_string(&cfg.rtl).map_err(|e| fail(STAGE, e))?;
    let golden = parse_rtl(&src).map_err(|e| fail(STAGE, e))?;
    let mutants =
        generate_mutants(&golden, cfg.mutate_budget, cfg.mutate_seed).map_err(|e| fail(STAGE, e))?;
    write_mutant_set(&lay.mutants_dir, &golden, &mutants).map_err(|e| fail(STAGE, e))?;
    eprintln!("mutate: {} mutants", mutants.len());
    Ok(())
}

fn load_golden(stage: &'static str, cfg: &PipelineConfig) -> Result<RtlModule, StageError> {
    let src = fs::read_to_string(&cfg.rtl).map_err(|e| fail(stage, e))?;
    parse_rtl(&src).map_err(|e| fail(stage, e))
}

fn load_mutants(
    stage: &'static str,
    lay: &Layout,
) -> Result<Vec<(String, RtlModule)>, StageError> {
    if !lay.mutants_dir.join("manifest.json").is_file() {
        return Err(fail(
            stage,
            format!(
                "missing artifact {}; run `mutate` first",
                lay.mutants_dir.join("manifest.json").display()
            ),
        ));
    }
    let manifest = read_manifest(&lay.mutants_dir).map_err(|e| fail(stage, e))?;
    let mut out = Vec::with_capacity(manifest.mutants.len());
    for record in &manifest.mutants {
        let path = lay.mutants_dir.join(format!("{}.v", record.id));
        let src = fs::read_to_string(&path).map_err(|e| fail(stage, e))?;
        let module = parse_rtl(&src).map_err(|e| fail(stage, e))?;
        out.push((record.id.clone(), module));
    }
    Ok(out)
}

fn golden_entry(verdict: Result<GoldenVerdict, CheckError>) -> Result<(bool, String), CheckError> {
    match verdict {
        Ok(v) => Ok((v.is_fail(), v.label().to_string())),
        // An assertion over signals the design lacks cannot fail on it.
        Err(CheckError::UnknownSignal { name }) => {
            Ok((false, format!("skipped ({name} not in design)")))
        }
        Err(e) => Err(e),
    }
}

fn write_golden_verdicts(
    stage: &'static str,
    lay: &Layout,
    cfg: &PipelineConfig,
    golden: &RtlModule,
    assertions: &[(String, SvaAst)],
) -> Result<(), StageError> {
    let mut verdicts = BTreeMap::new();
    for (id, ast) in assertions {
        let (fails, label) = golden_entry(check_golden(ast, golden, &cfg.check))
            .map_err(|e| fail(stage, e))?;
        verdicts.insert(id.clone(), json!({ "fails": fails, "label": label }));
    }
    let doc = json!({ "schema": "golden/v1", "verdicts": verdicts });
    write_artifact(
        stage,
        &lay.golden,
        &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()),
    )
}

/// Build the assertion-by-mutant detection matrix and re-check every
/// assertion against the golden design.
pub fn check(cfg: &PipelineConfig, lay: &Layout) -> Result<(), StageError> {
    const STAGE: &str = "check";
    let text = read_artifact(STAGE, &lay.assertions, "generate")?;
    let assertions = assertions_from_file(&text).map_err(|e| fail(STAGE, e))?;
    let mutants = load_mutants(STAGE, lay)?;
    let golden = load_golden(STAGE, cfg)?;
    let outcome = build_matrix(&assertions, &mutants, &cfg.check).map_err(|e| fail(STAGE, e))?;
    write_artifact(STAGE, &lay.matrix, &outcome.matrix.to_json())?;
    persist_witnesses(&lay.witness_dir, &outcome).map_err(|e| fail(STAGE, e))?;
    write_golden_verdicts(STAGE, lay, cfg, &golden, &assertions)?;
    eprintln!(
        "check: {} assertions x {} mutants",
        outcome.matrix.assertions.len(),
        outcome.matrix.mutants.len()
    );
    Ok(())
}

fn load_labels(cfg: &PipelineConfig) -> Result<LabelMap, String> {
    match &cfg.labels {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
            labels_from_json(&text).map_err(|e| e.to_string())
        }
        None => {
            eprintln!("warning: no labels file configured; assuming assertions match intent");
            let mut map = LabelMap::new();
            map.insert(
                "default".into(),
                SemanticLabel {
                    semantically_corr: true,
                    note: "no labels file configured".into(),
                },
            );
            Ok(map)
        }
    }
}

fn golden_fails_from_artifact(
    stage: &'static str,
    lay: &Layout,
) -> Result<BTreeMap<String, bool>, StageError> {
    let text = read_artifact(stage, &lay.golden, "check")?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| fail(stage, e))?;
    let verdicts = doc
        .get("verdicts")
        .and_then(|v| v.as_object())
        .ok_or_else(|| fail(stage, "golden verdicts artifact has no `verdicts` object"))?;
    let mut out = BTreeMap::new();
    for (id, entry) in verdicts {
        let fails = entry.get("fails").and_then(|f| f.as_bool()).unwrap_or(false);
        out.insert(id.clone(), fails);
    }
    Ok(out)
}

/// Compute metrics from the persisted matrix and write the report.
pub fn evaluate(cfg: &PipelineConfig, lay: &Layout) -> Result<(), StageError> {
    const STAGE: &str = "evaluate";
    let matrix_text = read_artifact(STAGE, &lay.matrix, "check")?;
    let matrix = DetectionMatrix::from_json(&matrix_text).map_err(|e| fail(STAGE, e))?;
    let golden_fails = golden_fails_from_artifact(STAGE, lay)?;
    let labels = load_labels(cfg).map_err(|e| fail(STAGE, e))?;
    let generated = match fs::read_to_string(&lay.provenance) {
        Ok(text) => serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .and_then(|v| v.get("records").and_then(|r| r.as_array()).map(|r| r.len()))
            .unwrap_or(matrix.assertions.len()),
        Err(_) => matrix.assertions.len(),
    };
    let mut final_ids = Vec::new();
    for (i, id) in matrix.assertions.iter().enumerate() {
        if evaluate::score(&matrix, i).map_err(|e| fail(STAGE, e))? >= 1 {
            final_ids.push(id.clone());
        }
    }
    // A set where everything scored zero still gets a report; the FPR
    // denominator falls back to the full row set.
    if final_ids.is_empty() {
        final_ids = matrix.assertions.clone();
    }
    let metrics = evaluate::compute_metrics(
        &cfg.design,
        &cfg.method,
        generated,
        &matrix,
        &final_ids,
        &golden_fails,
        &labels,
    )
    .map_err(|e| fail(STAGE, e))?;
    write_report(&lay.report_dir, &[metrics]).map_err(|e| fail(STAGE, e))?;
    eprintln!("evaluate: report written to {}", lay.report_dir.display());
    Ok(())
}

fn history_json(history: &[IterationState]) -> String {
    let iterations: Vec<_> = history
        .iter()
        .map(|state| {
            json!({
                "iteration": state.iteration,
                "assertions": state.results.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
                "survivors": state.survivors.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
                "pruned": state.pruned,
                "undetected": state.undetected,
                "stop": state.stop,
                "metrics": state.metrics,
            })
        })
        .collect();
    let doc = json!({ "schema": "refinement/v1", "iterations": iterations });
    format!("{}\n", serde_json::to_string_pretty(&doc).unwrap())
}

/// The fused generate/check/evaluate loop with mutation feedback.
pub fn refine(
    cfg: &PipelineConfig,
    lay: &Layout,
    client: &LlmClient,
) -> Result<(), StageError> {
    const STAGE: &str = "refine";
    let specs = load_signals(STAGE, lay)?;
    let golden = load_golden(STAGE, cfg)?;
    let manifest_path = lay.mutants_dir.join("manifest.json");
    if !manifest_path.is_file() {
        mutate(cfg, lay)?;
    }
    let modules = load_mutants(STAGE, lay)?;
    let manifest = read_manifest(&lay.mutants_dir).map_err(|e| fail(STAGE, e))?;
    let mutants = MutantSet {
        modules,
        manifest: manifest.mutants,
    };
    let labels = load_labels(cfg).map_err(|e| fail(STAGE, e))?;
    let rcfg = RefinementConfig {
        design: cfg.design.clone(),
        method: cfg.method.clone(),
        max_iter: cfg.max_iter,
        check: cfg.check.clone(),
        gen: cfg.gen.clone(),
    };
    let history = run_refinement(client, &specs, &golden, &mutants, &labels, &rcfg)
        .map_err(|e| fail(STAGE, e))?;

    for state in &history {
        let path = lay
            .assertions
            .with_file_name(format!("iter{}.sva", state.iteration));
        write_artifact(STAGE, &path, &assertions_to_file(&state.results))?;
        let matrix_path = lay
            .matrix
            .with_file_name(format!("iter{}.json", state.iteration));
        write_artifact(STAGE, &matrix_path, &state.matrix.to_json())?;
    }

    let last = history.last().expect("refinement yields at least one state");
    write_generation_artifacts(STAGE, lay, &last.survivors, &last.skipped)?;
    write_artifact(STAGE, &lay.matrix, &last.matrix.to_json())?;
    let final_assertions: Vec<(String, SvaAst)> = last
        .results
        .iter()
        .map(|r| (r.id.clone(), r.ast.clone()))
        .collect();
    write_golden_verdicts(STAGE, lay, cfg, &golden, &final_assertions)?;
    write_artifact(STAGE, &lay.history, &history_json(&history))?;
    write_report(&lay.report_dir, &[last.metrics.clone()]).map_err(|e| fail(STAGE, e))?;
    let stop = last
        .stop
        .map(|s| format!("{:?}", s))
        .unwrap_or_else(|| "none".into());
    eprintln!(
        "refine: {} iterations, {} final assertions, stop {}",
        history.len(),
        last.survivors.len(),
        stop
    );
    Ok(())
}

/// Which pipeline stage `run` starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum StageName {
    Ingest,
    Classify,
    Analyze,
    Merge,
    Generate,
    Mutate,
    Check,
    Evaluate,
}

/// Full pipeline. Stages before `from` are not recomputed; their
/// persisted artifacts are loaded instead. Starting at `check` or
/// `evaluate` runs the remaining stages single-pass, since refinement
/// only makes sense when generation is allowed to run.
pub fn run(
    cfg: &PipelineConfig,
    lay: &Layout,
    client: &LlmClient,
    from: StageName,
) -> Result<(), StageError> {
    if from <= StageName::Ingest {
        ingest(cfg, lay)?;
    }
    if from <= StageName::Classify {
        classify(cfg, lay, client)?;
    }
    if from <= StageName::Analyze {
        analyze(cfg, lay, client)?;
    }
    if from <= StageName::Merge {
        merge(cfg, lay)?;
    }
    match from {
        StageName::Check => {
            check(cfg, lay)?;
            evaluate(cfg, lay)
        }
        StageName::Evaluate => evaluate(cfg, lay),
        _ => {
            if from <= StageName::Mutate {
                mutate(cfg, lay)?;
            }
            refine(cfg, lay, client)
        }
    }
}
