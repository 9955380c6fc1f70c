//! Assertion language support: AST, parser, canonical renderer,
//! finite-trace evaluator, and the bounded temporal fragment that
//! timing analysis produces.

mod ast;
mod eval;
mod parser;
mod temporal;
mod trace;

pub use ast::{
    render_sva, BoolExpr, Clocking, CmpOp, Delay, Edge, Operand, Property, SeqElem, SeqStep,
    Sequence, SvaAst,
};
pub use eval::{eval_bool, eval_sva, eval_sva_within, match_ends, Verdict};
pub use parser::{parse_bool_expr, parse_sequence, parse_sva};
pub use temporal::{
    eval_constraint, eval_temporal, parse_temporal, response_shape, shape_fragment, tl_to_sva,
    ResponseShape, TemporalConstraint, TemporalFormula,
};
pub use trace::{SignalTrace, Trace, TraceError};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SvaError {
    #[error("syntax error at byte {position}: expected {expected}, found {found}")]
    Syntax {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("assertion references `{name}` which is not in the trace")]
    UnknownSignal { name: String },
    #[error("constraint does not fit the supported response shape: {reason}")]
    UnsupportedShape { reason: String },
}

impl SvaError {
    pub(crate) fn syntax(position: usize, expected: &str, found: &str) -> Self {
        SvaError::Syntax {
            position,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Shifts a syntax error by `base` bytes; used when a sub-parser
    /// ran on a slice of the original input.
    pub(crate) fn offset(self, base: usize) -> Self {
        match self {
            SvaError::Syntax {
                position,
                expected,
                found,
            } => SvaError::Syntax {
                position: position + base,
                expected,
                found,
            },
            other => other,
        }
    }
}
