//! AST for the synthesizable Verilog subset the pipeline can simulate
//! and mutate: one module, ANSI port list, `localparam` constants,
//! registers with optional initializers, continuous assigns, and
//! clocked processes made of if/else trees and non-blocking assigns.

use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    Input,
    Output,
    Inout,
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dir::Input => write!(f, "input"),
            Dir::Output => write!(f, "output"),
            Dir::Inout => write!(f, "inout"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Port {
    pub name: String,
    pub dir: Dir,
    pub width: u32,
    /// `output reg [w:0] name` both declares the port and the register.
    pub is_reg: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegDecl {
    pub name: String,
    pub width: u32,
    /// Explicit `= value` initializer; registers without one start at 0.
    pub init: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireDecl {
    pub name: String,
    pub width: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    /// Logical negation `!`, yields one bit.
    Not,
    /// Bitwise complement `~` within the operand width.
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    BitAnd,
    BitOr,
    BitXor,
    Eq,
    Ne,
    Lt,
    Gt,
    LAnd,
    LOr,
}

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::BitAnd => "&",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::LAnd => "&&",
            BinOp::LOr => "||",
        }
    }

    /// Binding strength, matching Verilog operator precedence for the
    /// covered subset (tighter binds higher).
    pub fn precedence(&self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 8,
            BinOp::Lt | BinOp::Gt => 7,
            BinOp::Eq | BinOp::Ne => 6,
            BinOp::BitAnd => 5,
            BinOp::BitXor => 4,
            BinOp::BitOr => 3,
            BinOp::LAnd => 2,
            BinOp::LOr => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    /// Sized literals lose their width at parse time; the value is
    /// what matters for simulation and mutation.
    Const(u64),
    Ident(String),
    Unary {
        op: UnOp,
        inner: Box<Expr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    pub fn ident(name: impl Into<String>) -> Self {
        Expr::Ident(name.into())
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Ident(s) => write!(f, "{s}"),
            Expr::Unary { op, inner } => {
                write!(f, "{}", if *op == UnOp::Not { "!" } else { "~" })?;
                inner.fmt_prec(f, 9)
            }
            Expr::Binary { op, lhs, rhs } => {
                let prec = op.precedence();
                let parens = prec < min;
                if parens {
                    write!(f, "(")?;
                }
                lhs.fmt_prec(f, prec)?;
                write!(f, " {} ", op.symbol())?;
                // Left-associative: the right child needs one more.
                rhs.fmt_prec(f, prec + 1)?;
                if parens {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }

    pub fn collect_idents(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Ident(s) => {
                out.insert(s.clone());
            }
            Expr::Unary { inner, .. } => inner.collect_idents(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_idents(out);
                rhs.collect_idents(out);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    NonBlocking {
        target: String,
        expr: Expr,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
}

impl Stmt {
    /// Registers written anywhere inside this statement.
    pub fn collect_targets(&self, out: &mut BTreeSet<String>) {
        match self {
            Stmt::NonBlocking { target, .. } => {
                out.insert(target.clone());
            }
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                for s in then_body.iter().chain(else_body) {
                    s.collect_targets(out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Process {
    pub clock: String,
    /// Signal named in an `or posedge <sig>` sensitivity term. At the
    /// cycle granularity of the simulator it behaves like a
    /// synchronous reset; it is kept so the source renders back.
    pub async_reset: Option<String>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assign {
    pub target: String,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtlModule {
    pub name: String,
    pub ports: Vec<Port>,
    pub params: Vec<(String, u64)>,
    pub regs: Vec<RegDecl>,
    pub wires: Vec<WireDecl>,
    pub assigns: Vec<Assign>,
    pub processes: Vec<Process>,
}

impl RtlModule {
    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn param_value(&self, name: &str) -> Option<u64> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    /// The single clock driving every process. A module with no
    /// processes still treats an input named `clk` as its clock so
    /// the port is not mistaken for stimulus.
    pub fn clock(&self) -> Option<&str> {
        self.processes
            .first()
            .map(|p| p.clock.as_str())
            .or_else(|| {
                self.ports
                    .iter()
                    .find(|p| p.dir == Dir::Input && p.name == "clk")
                    .map(|p| p.name.as_str())
            })
    }

    /// Declared width of a signal (port, register, or wire).
    pub fn width_of(&self, name: &str) -> Option<u32> {
        if let Some(r) = self.regs.iter().find(|r| r.name == name) {
            return Some(r.width);
        }
        if let Some(w) = self.wires.iter().find(|w| w.name == name) {
            return Some(w.width);
        }
        self.port(name).map(|p| p.width)
    }

    /// Input ports that carry stimulus, i.e. everything except the
    /// clock. This is the enumeration order for bounded checking.
    pub fn stimulus_inputs(&self) -> Vec<&Port> {
        let clock = self.clock().unwrap_or("");
        self.ports
            .iter()
            .filter(|p| p.dir == Dir::Input && p.name != clock)
            .collect()
    }
}

fn fmt_width(width: u32) -> String {
    if width == 1 {
        String::new()
    } else {
        format!("[{}:0] ", width - 1)
    }
}

fn fmt_stmt(out: &mut String, stmt: &Stmt, indent: usize) {
    let pad = "  ".repeat(indent);
    match stmt {
        Stmt::NonBlocking { target, expr } => {
            out.push_str(&format!("{pad}{target} <= {expr};\n"));
        }
        Stmt::If {
            cond,
            then_body,
            else_body,
        } => {
            out.push_str(&format!("{pad}if ({cond}) begin\n"));
            for s in then_body {
                fmt_stmt(out, s, indent + 1);
            }
            if else_body.is_empty() {
                out.push_str(&format!("{pad}end\n"));
            } else {
                out.push_str(&format!("{pad}end else begin\n"));
                for s in else_body {
                    fmt_stmt(out, s, indent + 1);
                }
                out.push_str(&format!("{pad}end\n"));
            }
        }
    }
}

/// Renders one statement without surrounding context, for diffs.
pub fn render_stmt(stmt: &Stmt) -> String {
    let mut out = String::new();
    fmt_stmt(&mut out, stmt, 0);
    out.trim_end().to_string()
}

/// Renders the module back to Verilog source. Re-parsing the output
/// yields an equal AST, which keeps mutant files faithful.
pub fn render_rtl(m: &RtlModule) -> String {
    let mut out = String::new();
    out.push_str(&format!("module {}(\n", m.name));
    for (i, p) in m.ports.iter().enumerate() {
        let comma = if i + 1 == m.ports.len() { "" } else { "," };
        let reg = if p.is_reg { "reg " } else { "" };
        out.push_str(&format!(
            "  {} {}{}{}{}\n",
            p.dir,
            reg,
            fmt_width(p.width),
            p.name,
            comma
        ));
    }
    out.push_str(");\n");
    for (name, value) in &m.params {
        out.push_str(&format!("  localparam {name} = {value};\n"));
    }
    for r in &m.regs {
        if m.port(&r.name).is_some() {
            continue; // declared through `output reg`
        }
        match r.init {
            Some(v) => out.push_str(&format!("  reg {}{} = {};\n", fmt_width(r.width), r.name, v)),
            None => out.push_str(&format!("  reg {}{};\n", fmt_width(r.width), r.name)),
        }
    }
    for w in &m.wires {
        if m.port(&w.name).is_some() {
            continue;
        }
        out.push_str(&format!("  wire {}{};\n", fmt_width(w.width), w.name));
    }
    for a in &m.assigns {
        out.push_str(&format!("  assign {} = {};\n", a.target, a.expr));
    }
    for p in &m.processes {
        match &p.async_reset {
            Some(rst) => out.push_str(&format!(
                "  always @(posedge {} or posedge {}) begin\n",
                p.clock, rst
            )),
            None => out.push_str(&format!("  always @(posedge {}) begin\n", p.clock)),
        }
        for s in &p.body {
            fmt_stmt(&mut out, s, 2);
        }
        out.push_str("  end\n");
    }
    out.push_str("endmodule\n");
    out
}

impl fmt::Display for RtlModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", render_rtl(self))
    }
}
