//! Pipeline library for turning hardware design specifications into
//! SystemVerilog assertions that are vetted by mutation testing.
//!
//! The crate is organized along the pipeline stages:
//!
//! * [`ir`] - block-level document model produced by ingestion
//! * [`classify`] - modality / semantic-category annotation of blocks
//! * [`analyze`] - modality-specific extraction into typed records
//! * [`merge`] - per-signal unification of analyzer records
//! * [`sva`] - assertion subset: AST, parser, renderer, finite-trace
//!   evaluator, and the bounded temporal-logic fragment
//! * [`rtl`] - synthesizable Verilog subset: parser, cycle simulator,
//!   mutant generator
//! * [`checker`] - assertion-vs-mutant detection matrix construction
//! * [`svagen`] - staged assertion generation with retrieval support
//! * [`evaluate`] - mutation-score metrics and the refinement loop
//! * [`llm`] - chat-completion client with live, replay, and mock modes

pub mod analyze;
pub mod checker;
pub mod classify;
pub mod evaluate;
pub mod ir;
pub mod llm;
pub mod merge;
pub mod report;
pub mod rtl;
pub mod sva;
pub mod svagen;
