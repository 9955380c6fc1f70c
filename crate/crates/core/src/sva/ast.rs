//! AST for the supported assertion subset.
//!
//! The subset covers one top-level clocking event, boolean expressions
//! over sampled signals, bounded delay windows `##[m:n]`, consecutive
//! repetition `[*k]`, and a single overlapping or non-overlapping
//! implication. Non-overlapping `|=>` is desugared at parse time, so
//! the AST only carries overlapping implications.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    Pos,
    Neg,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Edge::Pos => write!(f, "posedge"),
            Edge::Neg => write!(f, "negedge"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clocking {
    pub edge: Edge,
    pub signal: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmpOp::Eq => write!(f, "=="),
            CmpOp::Ne => write!(f, "!="),
        }
    }
}

/// Leaf value inside a boolean expression. Sized Verilog literals such
/// as `4'd2` are collapsed to their numeric value when parsed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Signal(String),
    Const(u64),
    /// XOR reduction of a signal, `^sig`.
    ReduceXor(String),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Signal(s) => write!(f, "{s}"),
            Operand::Const(v) => write!(f, "{v}"),
            Operand::ReduceXor(s) => write!(f, "^{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    /// A bare operand; truth value is `operand != 0`.
    Atom(Operand),
    Cmp {
        op: CmpOp,
        lhs: Operand,
        rhs: Operand,
    },
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    pub fn signal(name: impl Into<String>) -> Self {
        BoolExpr::Atom(Operand::Signal(name.into()))
    }

    fn precedence(&self) -> u8 {
        match self {
            BoolExpr::Or(..) => 1,
            BoolExpr::And(..) => 2,
            BoolExpr::Not(_) => 3,
            BoolExpr::Atom(_) | BoolExpr::Cmp { .. } => 4,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.precedence();
        let parens = prec < min;
        if parens {
            write!(f, "(")?;
        }
        match self {
            BoolExpr::Atom(op) => write!(f, "{op}")?,
            BoolExpr::Cmp { op, lhs, rhs } => write!(f, "{lhs} {op} {rhs}")?,
            BoolExpr::Not(inner) => {
                write!(f, "!")?;
                inner.fmt_prec(f, 4)?;
            }
            BoolExpr::And(l, r) => {
                l.fmt_prec(f, 2)?;
                write!(f, " && ")?;
                r.fmt_prec(f, 2)?;
            }
            BoolExpr::Or(l, r) => {
                l.fmt_prec(f, 1)?;
                write!(f, " || ")?;
                r.fmt_prec(f, 1)?;
            }
        }
        if parens {
            write!(f, ")")?;
        }
        Ok(())
    }

    /// Collects every signal name referenced by the expression.
    pub fn collect_signals(&self, out: &mut std::collections::BTreeSet<String>) {
        fn operand(op: &Operand, out: &mut std::collections::BTreeSet<String>) {
            if let Operand::Signal(s) | Operand::ReduceXor(s) = op {
                out.insert(s.clone());
            }
        }
        match self {
            BoolExpr::Atom(op) => operand(op, out),
            BoolExpr::Cmp { lhs, rhs, .. } => {
                operand(lhs, out);
                operand(rhs, out);
            }
            BoolExpr::Not(inner) => inner.collect_signals(out),
            BoolExpr::And(l, r) | BoolExpr::Or(l, r) => {
                l.collect_signals(out);
                r.collect_signals(out);
            }
        }
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// `##[lo:hi]` delay window. A bare `##n` is the degenerate window
/// `[n:n]`; the renderer prints it back in the short form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Delay {
    pub lo: u32,
    pub hi: u32,
}

impl Delay {
    pub const ZERO: Delay = Delay { lo: 0, hi: 0 };

    pub fn new(lo: u32, hi: u32) -> Self {
        Delay { lo, hi }
    }
}

impl fmt::Display for Delay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == self.hi {
            write!(f, "##{}", self.lo)
        } else {
            write!(f, "##[{}:{}]", self.lo, self.hi)
        }
    }
}

/// One element of a sequence: a boolean expression held for `rep`
/// consecutive cycles. `rep == 1` means no repetition suffix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SeqElem {
    pub expr: BoolExpr,
    pub rep: u32,
}

impl SeqElem {
    pub fn new(expr: BoolExpr) -> Self {
        SeqElem { expr, rep: 1 }
    }

    pub fn repeated(expr: BoolExpr, rep: u32) -> Self {
        SeqElem { expr, rep }
    }
}

impl fmt::Display for SeqElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let atomic = matches!(self.expr, BoolExpr::Atom(_));
        let needs_parens = match self.expr {
            BoolExpr::And(..) | BoolExpr::Or(..) => true,
            // `x == 1 [*2]` would not re-parse; keep comparisons and
            // negations grouped whenever a repetition is attached.
            _ => self.rep > 1 && !atomic,
        };
        if needs_parens {
            write!(f, "({})", self.expr)?;
        } else {
            write!(f, "{}", self.expr)?;
        }
        if self.rep > 1 {
            write!(f, "[*{}]", self.rep)?;
        }
        Ok(())
    }
}

/// A delay-separated chain of elements. The first step's delay is the
/// offset from the sequence start (implicitly `##0` when absent in the
/// source); each later delay is measured from the end of the previous
/// element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SeqStep {
    pub delay: Delay,
    pub elem: SeqElem,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sequence {
    pub steps: Vec<SeqStep>,
}

impl Sequence {
    pub fn single(expr: BoolExpr) -> Self {
        Sequence {
            steps: vec![SeqStep {
                delay: Delay::ZERO,
                elem: SeqElem::new(expr),
            }],
        }
    }

    /// Longest number of cycles a complete match can span, counted
    /// from the start cycle. Used to size simulation traces.
    pub fn max_span(&self) -> u32 {
        self.steps
            .iter()
            .map(|s| s.delay.hi + s.elem.rep.saturating_sub(1))
            .sum()
    }

    pub fn collect_signals(&self, out: &mut std::collections::BTreeSet<String>) {
        for step in &self.steps {
            step.elem.expr.collect_signals(out);
        }
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            if i == 0 {
                if step.delay != Delay::ZERO {
                    write!(f, "{} ", step.delay)?;
                }
            } else {
                write!(f, " {} ", step.delay)?;
            }
            write!(f, "{}", step.elem)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Property {
    Seq(Sequence),
    Implication {
        antecedent: Sequence,
        consequent: Sequence,
    },
}

impl Property {
    pub fn collect_signals(&self, out: &mut std::collections::BTreeSet<String>) {
        match self {
            Property::Seq(s) => s.collect_signals(out),
            Property::Implication {
                antecedent,
                consequent,
            } => {
                antecedent.collect_signals(out);
                consequent.collect_signals(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SvaAst {
    pub clocking: Clocking,
    pub body: Property,
}

impl SvaAst {
    /// Signals sampled by the assertion, clock excluded.
    pub fn signals(&self) -> std::collections::BTreeSet<String> {
        let mut out = std::collections::BTreeSet::new();
        self.body.collect_signals(&mut out);
        out
    }

    /// Number of cycles past the start cycle the assertion can need to
    /// discharge an obligation. Traces should extend at least this far
    /// beyond the last cycle where the property is checked.
    pub fn temporal_depth(&self) -> u32 {
        match &self.body {
            Property::Seq(s) => s.max_span(),
            Property::Implication {
                antecedent,
                consequent,
            } => antecedent.max_span() + consequent.max_span(),
        }
    }
}

/// Canonical single-line rendering. Parsing the output yields the same
/// AST back, which is what the round-trip tests pin down.
pub fn render_sva(ast: &SvaAst) -> String {
    let body = match &ast.body {
        Property::Seq(s) => format!("{s}"),
        Property::Implication {
            antecedent,
            consequent,
        } => format!("{antecedent} |-> {consequent}"),
    };
    format!(
        "assert property (@({} {}) {});",
        ast.clocking.edge, ast.clocking.signal, body
    )
}

impl fmt::Display for SvaAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", render_sva(self))
    }
}
