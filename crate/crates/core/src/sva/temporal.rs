//! Bounded temporal-logic fragment used by the timing analyzer:
//! `F[a:b]` (eventually within a window), `G[a:b]` (always within a
//! window), `X` (next), boolean connectives, and signal atoms.
//!
//! Timing analysis emits constraints of the shape
//! `trigger => F[a:b] s && G[0:h] s`, read as "after the trigger, `s`
//! rises within `a..b` cycles and then stays high for `h` further
//! cycles". That windowed-hold reading is what the SVA lowering
//! `trigger |-> ##[a:b] s[*h+1]` implements. Note that it anchors the
//! `G` hold at the cycle where `s` rises; evaluating the same text as
//! a plain conjunction with [`eval_temporal`] anchors both operators
//! at the trigger cycle instead, which is a strictly different (and
//! for `a > 0` incomparable) predicate. [`eval_constraint`] provides
//! the windowed-hold evaluation that matches the lowering.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::eval::eval_bool;
use super::parser::parse_bool_expr;
use super::trace::Trace;
use super::SvaError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemporalFormula {
    Atom(BoolExpr),
    Not(Box<TemporalFormula>),
    And(Box<TemporalFormula>, Box<TemporalFormula>),
    Or(Box<TemporalFormula>, Box<TemporalFormula>),
    Finally {
        lo: u32,
        hi: u32,
        inner: Box<TemporalFormula>,
    },
    Globally {
        lo: u32,
        hi: u32,
        inner: Box<TemporalFormula>,
    },
    Next(Box<TemporalFormula>),
}

impl TemporalFormula {
    fn precedence(&self) -> u8 {
        match self {
            TemporalFormula::Or(..) => 1,
            TemporalFormula::And(..) => 2,
            _ => 3,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let parens = self.precedence() < min;
        if parens {
            write!(f, "(")?;
        }
        match self {
            TemporalFormula::Atom(e) => write!(f, "{e}")?,
            TemporalFormula::Not(inner) => {
                write!(f, "!")?;
                inner.fmt_prec(f, 3)?;
            }
            TemporalFormula::And(l, r) => {
                l.fmt_prec(f, 2)?;
                write!(f, " && ")?;
                r.fmt_prec(f, 2)?;
            }
            TemporalFormula::Or(l, r) => {
                l.fmt_prec(f, 1)?;
                write!(f, " || ")?;
                r.fmt_prec(f, 1)?;
            }
            TemporalFormula::Finally { lo, hi, inner } => {
                write!(f, "F[{lo}:{hi}] ")?;
                inner.fmt_prec(f, 3)?;
            }
            TemporalFormula::Globally { lo, hi, inner } => {
                write!(f, "G[{lo}:{hi}] ")?;
                inner.fmt_prec(f, 3)?;
            }
            TemporalFormula::Next(inner) => {
                write!(f, "X ")?;
                inner.fmt_prec(f, 3)?;
            }
        }
        if parens {
            write!(f, ")")?;
        }
        Ok(())
    }

    pub fn collect_signals(&self, out: &mut std::collections::BTreeSet<String>) {
        match self {
            TemporalFormula::Atom(e) => e.collect_signals(out),
            TemporalFormula::Not(i) | TemporalFormula::Next(i) => i.collect_signals(out),
            TemporalFormula::And(l, r) | TemporalFormula::Or(l, r) => {
                l.collect_signals(out);
                r.collect_signals(out);
            }
            TemporalFormula::Finally { inner, .. } | TemporalFormula::Globally { inner, .. } => {
                inner.collect_signals(out)
            }
        }
    }
}

impl fmt::Display for TemporalFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Splits `F[0:1] irq_flag && G[0:5] irq_flag` style text into tokens
/// the tiny grammar below can consume. The boolean atoms are delegated
/// to the assertion expression parser.
struct TemporalParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> TemporalParser<'a> {
    fn new(src: &'a str) -> Self {
        TemporalParser { src, pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len()
            && self.src.as_bytes()[self.pos].is_ascii_whitespace()
        {
            self.pos += 1;
        }
    }

    fn peek_byte(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.as_bytes().get(self.pos).copied()
    }

    fn starts_with(&mut self, pat: &str) -> bool {
        self.skip_ws();
        self.src[self.pos..].starts_with(pat)
    }

    fn eat(&mut self, pat: &str) -> bool {
        if self.starts_with(pat) {
            self.pos += pat.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, pat: &str) -> Result<(), SvaError> {
        if self.eat(pat) {
            Ok(())
        } else {
            let found: String = self.src[self.pos..].chars().take(8).collect();
            Err(SvaError::syntax(self.pos, &format!("`{pat}`"), &found))
        }
    }

    fn number(&mut self) -> Result<u32, SvaError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src.as_bytes()[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.src[start..self.pos]
            .parse()
            .map_err(|_| SvaError::syntax(start, "number", ""))
    }

    fn window(&mut self) -> Result<(u32, u32), SvaError> {
        self.expect("[")?;
        let lo = self.number()?;
        self.expect(":")?;
        let hi = self.number()?;
        self.expect("]")?;
        if lo > hi {
            return Err(SvaError::syntax(
                self.pos,
                "window with lo <= hi",
                &format!("[{lo}:{hi}]"),
            ));
        }
        Ok((lo, hi))
    }

    /// `F` / `G` / `X` only open a temporal operator when followed by
    /// their window or another operator; otherwise they are ordinary
    /// identifiers (a signal could be named `F`).
    fn formula(&mut self) -> Result<TemporalFormula, SvaError> {
        let mut lhs = self.conjunct()?;
        while self.eat("||") {
            let rhs = self.conjunct()?;
            lhs = TemporalFormula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conjunct(&mut self) -> Result<TemporalFormula, SvaError> {
        let mut lhs = self.unary()?;
        while {
            self.skip_ws();
            self.src[self.pos..].starts_with("&&")
        } {
            self.pos += 2;
            let rhs = self.unary()?;
            lhs = TemporalFormula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<TemporalFormula, SvaError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        if rest.starts_with('!') {
            self.pos += 1;
            return Ok(TemporalFormula::Not(Box::new(self.unary()?)));
        }
        if rest.starts_with("F[") {
            self.pos += 1;
            let (lo, hi) = self.window()?;
            return Ok(TemporalFormula::Finally {
                lo,
                hi,
                inner: Box::new(self.unary()?),
            });
        }
        if rest.starts_with("G[") {
            self.pos += 1;
            let (lo, hi) = self.window()?;
            return Ok(TemporalFormula::Globally {
                lo,
                hi,
                inner: Box::new(self.unary()?),
            });
        }
        if rest.starts_with("X ") || rest.starts_with("X(") {
            self.pos += 1;
            return Ok(TemporalFormula::Next(Box::new(self.unary()?)));
        }
        if self.peek_byte() == Some(b'(') {
            self.pos += 1;
            let inner = self.formula()?;
            self.expect(")")?;
            return Ok(inner);
        }
        self.atom()
    }

    /// Consumes the longest prefix that parses as a boolean expression
    /// (stopping before `&&`, `||`, or `)` at depth zero).
    fn atom(&mut self) -> Result<TemporalFormula, SvaError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut depth = 0usize;
        while self.pos < self.src.len() {
            let rest = &self.src[self.pos..];
            if depth == 0 && (rest.starts_with("&&") || rest.starts_with("||")) {
                break;
            }
            match bytes[self.pos] {
                b'(' => depth += 1,
                b')' => {
                    if depth == 0 {
                        break;
                    }
                    depth -= 1;
                }
                _ => {}
            }
            self.pos += 1;
        }
        let text = self.src[start..self.pos].trim();
        if text.is_empty() {
            return Err(SvaError::syntax(start, "temporal atom", ""));
        }
        let expr = parse_bool_expr(text).map_err(|e| e.offset(start))?;
        Ok(TemporalFormula::Atom(expr))
    }
}

/// Parses a bounded temporal formula such as
/// `F[0:1] irq_flag && G[0:5] irq_flag`.
pub fn parse_temporal(src: &str) -> Result<TemporalFormula, SvaError> {
    let mut p = TemporalParser::new(src);
    let f = p.formula()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        let found: String = p.src[p.pos..].chars().take(8).collect();
        return Err(SvaError::syntax(p.pos, "end of formula", &found));
    }
    Ok(f)
}

/// Evaluates the formula at cycle `at` with both windows anchored
/// there. Truncated windows are pessimistic: an `F` only succeeds
/// through an in-trace witness, a `G` whose window leaves the trace is
/// false, and `X` at the last cycle is false.
pub fn eval_temporal(formula: &TemporalFormula, trace: &Trace, at: usize) -> Result<bool, SvaError> {
    Ok(match formula {
        TemporalFormula::Atom(e) => eval_bool(e, trace, at)?,
        TemporalFormula::Not(inner) => !eval_temporal(inner, trace, at)?,
        TemporalFormula::And(l, r) => {
            eval_temporal(l, trace, at)? && eval_temporal(r, trace, at)?
        }
        TemporalFormula::Or(l, r) => {
            eval_temporal(l, trace, at)? || eval_temporal(r, trace, at)?
        }
        TemporalFormula::Finally { lo, hi, inner } => {
            let mut found = false;
            for d in *lo..=*hi {
                let cycle = at + d as usize;
                if cycle >= trace.len() {
                    break;
                }
                if eval_temporal(inner, trace, cycle)? {
                    found = true;
                    break;
                }
            }
            found
        }
        TemporalFormula::Globally { lo, hi, inner } => {
            let mut holds = true;
            for d in *lo..=*hi {
                let cycle = at + d as usize;
                if cycle >= trace.len() || !eval_temporal(inner, trace, cycle)? {
                    holds = false;
                    break;
                }
            }
            holds
        }
        TemporalFormula::Next(inner) => {
            at + 1 < trace.len() && eval_temporal(inner, trace, at + 1)?
        }
    })
}

/// A timing-analysis result: a trigger, the temporal formula for the
/// response, and the prose it was derived from. The formula is stored
/// in canonical text form and is guaranteed to parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalConstraint {
    pub trigger: String,
    pub formula: String,
    pub prose: String,
}

impl TemporalConstraint {
    pub fn new(
        trigger: impl Into<String>,
        formula: impl Into<String>,
        prose: impl Into<String>,
    ) -> Result<Self, SvaError> {
        let trigger = trigger.into();
        let formula = formula.into();
        let parsed = parse_temporal(&formula)?;
        Ok(TemporalConstraint {
            trigger,
            formula: parsed.to_string(),
            prose: prose.into(),
        })
    }

    pub fn parsed(&self) -> Result<TemporalFormula, SvaError> {
        parse_temporal(&self.formula)
    }

    /// Renders as `trigger => formula`.
    pub fn render(&self) -> String {
        format!("{} => {}", self.trigger, self.formula)
    }

    /// Parses `ien => F[0:1] irq_flag && G[0:5] irq_flag` style text.
    pub fn parse(src: &str) -> Result<Self, SvaError> {
        let Some((trigger, formula)) = src.split_once("=>") else {
            return Err(SvaError::syntax(0, "`trigger => formula`", src));
        };
        TemporalConstraint::new(trigger.trim(), formula.trim(), "")
    }
}

/// The response shape `F[lo:hi] signal (&& G[0:hold] signal)?` that the
/// SVA lowering supports. `hold` is 0 when the `G` conjunct is absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseShape {
    pub trigger: String,
    pub signal: String,
    pub lo: u32,
    pub hi: u32,
    pub hold: u32,
}

fn atom_signal(f: &TemporalFormula) -> Option<&str> {
    if let TemporalFormula::Atom(BoolExpr::Atom(Operand::Signal(s))) = f {
        Some(s)
    } else {
        None
    }
}

/// Extracts the supported response shape from a constraint.
pub fn response_shape(constraint: &TemporalConstraint) -> Result<ResponseShape, SvaError> {
    let unsupported = |reason: &str| SvaError::UnsupportedShape {
        reason: reason.to_string(),
    };
    if constraint.trigger.is_empty()
        || !constraint
            .trigger
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return Err(unsupported("trigger must be a plain signal name"));
    }
    let formula = constraint.parsed()?;
    let (f_part, g_part) = match &formula {
        TemporalFormula::And(l, r) => (l.as_ref(), Some(r.as_ref())),
        other => (other, None),
    };
    let TemporalFormula::Finally { lo, hi, inner } = f_part else {
        return Err(unsupported("expected `F[a:b] signal` as the first conjunct"));
    };
    let Some(signal) = atom_signal(inner) else {
        return Err(unsupported("`F` must wrap a plain signal atom"));
    };
    let hold = match g_part {
        None => 0,
        Some(TemporalFormula::Globally { lo: 0, hi, inner }) => {
            if atom_signal(inner) != Some(signal) {
                return Err(unsupported("`G` must hold the same signal as `F`"));
            }
            *hi
        }
        Some(_) => {
            return Err(unsupported(
                "second conjunct must be `G[0:h]` over the same signal",
            ))
        }
    };
    Ok(ResponseShape {
        trigger: constraint.trigger.clone(),
        signal: signal.to_string(),
        lo: *lo,
        hi: *hi,
        hold,
    })
}

/// Sequence fragment `##[lo:hi] signal[*hold+1]` for a response shape.
pub fn shape_fragment(shape: &ResponseShape) -> Sequence {
    Sequence {
        steps: vec![SeqStep {
            delay: Delay::new(shape.lo, shape.hi),
            elem: SeqElem::repeated(BoolExpr::signal(&shape.signal), shape.hold + 1),
        }],
    }
}

/// Lowers a supported constraint to
/// `assert property (@(posedge clock) trigger |-> ##[a:b] s[*h+1]);`.
pub fn tl_to_sva(constraint: &TemporalConstraint, clock: &str) -> Result<SvaAst, SvaError> {
    let shape = response_shape(constraint)?;
    Ok(SvaAst {
        clocking: Clocking {
            edge: Edge::Pos,
            signal: clock.to_string(),
        },
        body: Property::Implication {
            antecedent: Sequence::single(BoolExpr::signal(&shape.trigger)),
            consequent: shape_fragment(&shape),
        },
    })
}

/// Windowed-hold evaluation of a constraint at `at`: if the trigger is
/// high, the response signal must rise within `[lo, hi]` cycles and
/// stay high for `hold` further cycles, all inside the trace. Agrees
/// with evaluating the lowered assertion at the same cycle.
pub fn eval_constraint(
    constraint: &TemporalConstraint,
    trace: &Trace,
    at: usize,
) -> Result<bool, SvaError> {
    let shape = response_shape(constraint)?;
    let trig = trace
        .value(&shape.trigger, at)
        .ok_or_else(|| SvaError::UnknownSignal {
            name: shape.trigger.clone(),
        })?;
    if trig == 0 {
        return Ok(true);
    }
    if !trace.has_signal(&shape.signal) {
        return Err(SvaError::UnknownSignal {
            name: shape.signal.clone(),
        });
    }
    for d in shape.lo..=shape.hi {
        let begin = at + d as usize;
        let end = begin + shape.hold as usize;
        if end >= trace.len() {
            continue;
        }
        let all_high = (begin..=end).all(|c| trace.value(&shape.signal, c).is_some_and(|v| v != 0));
        if all_high {
            return Ok(true);
        }
    }
    Ok(false)
}
