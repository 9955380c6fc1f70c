//! Finite-trace evaluation of parsed assertions.
//!
//! Semantics are pessimistic at the trace boundary: an obligation whose
//! delay window or repetition extends past the last sampled cycle
//! counts as a failure rather than an unknown. A consequence is that a
//! trace can only satisfy an implication through matches that complete
//! inside the trace.

use std::collections::BTreeSet;

use super::ast::*;
use super::trace::Trace;
use super::SvaError;

/// Outcome of checking one assertion against one trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// The property held but its antecedent never matched, so the
    /// trace exercised nothing. Detection logic treats this as a
    /// non-detection.
    VacuousPass,
    /// `cycle` is the first start cycle with a violated obligation.
    Fail { cycle: usize },
}

impl Verdict {
    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }
}

fn operand_value(op: &Operand, trace: &Trace, cycle: usize) -> Result<u64, SvaError> {
    match op {
        Operand::Const(v) => Ok(*v),
        Operand::Signal(name) => trace
            .value(name, cycle)
            .ok_or_else(|| SvaError::UnknownSignal { name: name.clone() }),
        Operand::ReduceXor(name) => {
            let v = trace
                .value(name, cycle)
                .ok_or_else(|| SvaError::UnknownSignal { name: name.clone() })?;
            let masked = match trace.width(name) {
                Some(w) if w < 64 => v & ((1u64 << w) - 1),
                _ => v,
            };
            Ok((masked.count_ones() & 1) as u64)
        }
    }
}

pub fn eval_bool(expr: &BoolExpr, trace: &Trace, cycle: usize) -> Result<bool, SvaError> {
    Ok(match expr {
        BoolExpr::Atom(op) => operand_value(op, trace, cycle)? != 0,
        BoolExpr::Cmp { op, lhs, rhs } => {
            let l = operand_value(lhs, trace, cycle)?;
            let r = operand_value(rhs, trace, cycle)?;
            match op {
                CmpOp::Eq => l == r,
                CmpOp::Ne => l != r,
            }
        }
        BoolExpr::Not(inner) => !eval_bool(inner, trace, cycle)?,
        BoolExpr::And(l, r) => eval_bool(l, trace, cycle)? && eval_bool(r, trace, cycle)?,
        BoolExpr::Or(l, r) => eval_bool(l, trace, cycle)? || eval_bool(r, trace, cycle)?,
    })
}

/// End cycles of every complete match of `seq` that begins at `start`.
/// Matches that would need cycles beyond the trace are dropped, which
/// is exactly the pessimistic-truncation rule.
pub fn match_ends(seq: &Sequence, trace: &Trace, start: usize) -> Result<BTreeSet<usize>, SvaError> {
    let len = trace.len();
    // Frontier of "element may begin after this point": for the first
    // step the base is the start cycle itself.
    let mut frontier: BTreeSet<usize> = BTreeSet::new();
    frontier.insert(start);
    for step in &seq.steps {
        let mut next = BTreeSet::new();
        for &base in &frontier {
            for d in step.delay.lo..=step.delay.hi {
                // An element starts `d` cycles after the previous
                // element's end (after the sequence start for the
                // first element).
                let begin = base + d as usize;
                let end = begin + step.elem.rep as usize - 1;
                if end >= len {
                    continue;
                }
                let mut ok = true;
                for c in begin..=end {
                    if !eval_bool(&step.elem.expr, trace, c)? {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    next.insert(end);
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(frontier)
}

fn validate_signals(ast: &SvaAst, trace: &Trace) -> Result<(), SvaError> {
    for name in ast.signals() {
        if !trace.has_signal(&name) {
            return Err(SvaError::UnknownSignal { name });
        }
    }
    Ok(())
}

/// Evaluates the assertion over the whole trace, checking the property
/// at every cycle.
pub fn eval_sva(ast: &SvaAst, trace: &Trace) -> Result<Verdict, SvaError> {
    eval_sva_within(ast, trace, trace.len())
}

/// Evaluates the assertion with property start cycles restricted to
/// `0..start_limit`. Bounded checking uses this to keep obligations
/// inside a trace that was padded past the stimulus window.
pub fn eval_sva_within(
    ast: &SvaAst,
    trace: &Trace,
    start_limit: usize,
) -> Result<Verdict, SvaError> {
    validate_signals(ast, trace)?;
    let limit = start_limit.min(trace.len());
    match &ast.body {
        Property::Seq(seq) => {
            for t in 0..limit {
                if match_ends(seq, trace, t)?.is_empty() {
                    return Ok(Verdict::Fail { cycle: t });
                }
            }
            Ok(Verdict::Pass)
        }
        Property::Implication {
            antecedent,
            consequent,
        } => {
            let mut triggered = false;
            for t in 0..limit {
                let ends = match_ends(antecedent, trace, t)?;
                if ends.is_empty() {
                    continue;
                }
                triggered = true;
                for end in ends {
                    if match_ends(consequent, trace, end)?.is_empty() {
                        return Ok(Verdict::Fail { cycle: t });
                    }
                }
            }
            if triggered {
                Ok(Verdict::Pass)
            } else {
                Ok(Verdict::VacuousPass)
            }
        }
    }
}
