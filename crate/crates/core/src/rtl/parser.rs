//! Recursive-descent parser for the Verilog subset. Anything outside
//! the subset is rejected with a named construct rather than a generic
//! syntax error, so callers can tell "typo" from "unsupported feature".

use super::ast::{Assign, BinOp, Dir, Expr, Port, Process, RegDecl, RtlModule, Stmt, UnOp, WireDecl};
use super::RtlError;
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(u64),
    Punct(&'static str),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Punct(p) => format!("`{p}`"),
        }
    }
}

/// Constructs we recognise but deliberately do not model.
const UNSUPPORTED: &[&str] = &[
    "initial", "case", "casex", "casez", "for", "while", "repeat", "forever", "function", "task",
    "generate", "genvar", "integer", "real", "signed", "always_comb", "always_ff", "always_latch",
    "negedge", "inout", "fork",
];

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
        }
    }

    fn bump(&mut self) -> u8 {
        let b = self.src[self.pos];
        if b == b'\n' {
            self.line += 1;
        }
        self.pos += 1;
        b
    }

    fn skip_trivia(&mut self) -> Result<(), RtlError> {
        loop {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
                self.bump();
            }
            if self.src[self.pos..].starts_with(b"//") {
                while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                    self.bump();
                }
            } else if self.src[self.pos..].starts_with(b"/*") {
                let start = self.line;
                self.bump();
                self.bump();
                loop {
                    if self.pos >= self.src.len() {
                        return Err(RtlError::Syntax {
                            line: start,
                            message: "unterminated block comment".into(),
                        });
                    }
                    if self.src[self.pos..].starts_with(b"*/") {
                        self.bump();
                        self.bump();
                        break;
                    }
                    self.bump();
                }
            } else {
                return Ok(());
            }
        }
    }

    fn lex(mut self) -> Result<Vec<(Tok, usize)>, RtlError> {
        let mut toks = Vec::new();
        loop {
            self.skip_trivia()?;
            if self.pos >= self.src.len() {
                return Ok(toks);
            }
            let line = self.line;
            let b = self.src[self.pos];
            if b.is_ascii_alphabetic() || b == b'_' {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric()
                        || self.src[self.pos] == b'_'
                        || self.src[self.pos] == b'$')
                {
                    self.bump();
                }
                let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                toks.push((Tok::Ident(word.to_string()), line));
            } else if b.is_ascii_digit() {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.bump();
                }
                let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                if self.pos < self.src.len() && self.src[self.pos] == b'\'' {
                    self.bump();
                    let base = if self.pos < self.src.len() {
                        self.bump()
                    } else {
                        0
                    };
                    let radix = match base.to_ascii_lowercase() {
                        b'b' => 2,
                        b'd' => 10,
                        b'h' => 16,
                        _ => {
                            return Err(RtlError::Syntax {
                                line,
                                message: format!("unknown literal base `{}`", base as char),
                            })
                        }
                    };
                    let vstart = self.pos;
                    while self.pos < self.src.len()
                        && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                    {
                        self.bump();
                    }
                    let body = std::str::from_utf8(&self.src[vstart..self.pos])
                        .unwrap()
                        .replace('_', "");
                    let value = u64::from_str_radix(&body, radix).map_err(|_| RtlError::Syntax {
                        line,
                        message: format!("bad literal digits `{body}`"),
                    })?;
                    toks.push((Tok::Number(value), line));
                } else {
                    let value: u64 = digits.parse().map_err(|_| RtlError::Syntax {
                        line,
                        message: format!("number `{digits}` out of range"),
                    })?;
                    toks.push((Tok::Number(value), line));
                }
            } else {
                let rest = &self.src[self.pos..];
                let two: &[(&[u8], &'static str)] = &[
                    (b"<=", "<="),
                    (b"==", "=="),
                    (b"!=", "!="),
                    (b"&&", "&&"),
                    (b"||", "||"),
                ];
                let mut matched = false;
                for (pat, tok) in two {
                    if rest.starts_with(pat) {
                        self.bump();
                        self.bump();
                        toks.push((Tok::Punct(tok), line));
                        matched = true;
                        break;
                    }
                }
                if matched {
                    continue;
                }
                let single: &[(u8, &'static str)] = &[
                    (b'(', "("),
                    (b')', ")"),
                    (b'[', "["),
                    (b']', "]"),
                    (b';', ";"),
                    (b',', ","),
                    (b':', ":"),
                    (b'=', "="),
                    (b'@', "@"),
                    (b'+', "+"),
                    (b'-', "-"),
                    (b'&', "&"),
                    (b'|', "|"),
                    (b'^', "^"),
                    (b'<', "<"),
                    (b'>', ">"),
                    (b'!', "!"),
                    (b'~', "~"),
                ];
                match single.iter().find(|(c, _)| *c == b) {
                    Some((_, tok)) => {
                        self.bump();
                        toks.push((Tok::Punct(tok), line));
                    }
                    None => {
                        return Err(RtlError::Syntax {
                            line,
                            message: format!("unexpected character `{}`", b as char),
                        })
                    }
                }
            }
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|(_, l)| *l)
            .unwrap_or(1)
    }

    fn err(&self, expected: &str) -> RtlError {
        let found = match self.peek() {
            Some(t) => t.describe(),
            None => "end of input".into(),
        };
        RtlError::Syntax {
            line: self.line(),
            message: format!("expected {expected}, found {found}"),
        }
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(q)) if *q == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &'static str) -> Result<(), RtlError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.err(&format!("`{p}`")))
        }
    }

    fn check_supported(&self, word: &str) -> Result<(), RtlError> {
        if UNSUPPORTED.contains(&word) {
            Err(RtlError::UnsupportedConstruct {
                line: self.line(),
                construct: word.to_string(),
            })
        } else {
            Ok(())
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, RtlError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.check_supported(&s)?;
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(what)),
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if let Some(Tok::Ident(s)) = self.peek() {
            if s == kw {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), RtlError> {
        if self.eat_keyword(kw) {
            return Ok(());
        }
        if let Some(Tok::Ident(s)) = self.peek() {
            self.check_supported(&s.clone())?;
        }
        Err(self.err(&format!("`{kw}`")))
    }

    fn number(&mut self) -> Result<u64, RtlError> {
        match self.peek() {
            Some(Tok::Number(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.err("a number")),
        }
    }

    /// `[msb:0]` or nothing; returns the bit width.
    fn width(&mut self) -> Result<u32, RtlError> {
        if !self.eat_punct("[") {
            return Ok(1);
        }
        let line = self.line();
        let msb = self.number()?;
        self.expect_punct(":")?;
        let lsb = self.number()?;
        self.expect_punct("]")?;
        if lsb != 0 {
            return Err(RtlError::UnsupportedConstruct {
                line,
                construct: format!("range [{msb}:{lsb}] with nonzero LSB"),
            });
        }
        if msb >= 64 {
            return Err(RtlError::Syntax {
                line,
                message: format!("width {} exceeds 64 bits", msb + 1),
            });
        }
        Ok(msb as u32 + 1)
    }

    fn primary(&mut self) -> Result<Expr, RtlError> {
        if self.eat_punct("(") {
            let e = self.expr(0)?;
            self.expect_punct(")")?;
            return Ok(e);
        }
        if self.eat_punct("!") {
            return Ok(Expr::Unary {
                op: UnOp::Not,
                inner: Box::new(self.primary()?),
            });
        }
        if self.eat_punct("~") {
            return Ok(Expr::Unary {
                op: UnOp::BitNot,
                inner: Box::new(self.primary()?),
            });
        }
        match self.peek() {
            Some(Tok::Number(_)) => Ok(Expr::Const(self.number()?)),
            Some(Tok::Ident(_)) => {
                let name = self.ident("an expression")?;
                if self.peek() == Some(&Tok::Punct("[")) {
                    return Err(RtlError::UnsupportedConstruct {
                        line: self.line(),
                        construct: "bit or part select".into(),
                    });
                }
                Ok(Expr::Ident(name))
            }
            _ => Err(self.err("an expression")),
        }
    }

    fn expr(&mut self, min_prec: u8) -> Result<Expr, RtlError> {
        let mut lhs = self.primary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Punct("+")) => BinOp::Add,
                Some(Tok::Punct("-")) => BinOp::Sub,
                Some(Tok::Punct("&")) => BinOp::BitAnd,
                Some(Tok::Punct("|")) => BinOp::BitOr,
                Some(Tok::Punct("^")) => BinOp::BitXor,
                Some(Tok::Punct("==")) => BinOp::Eq,
                Some(Tok::Punct("!=")) => BinOp::Ne,
                Some(Tok::Punct("<")) => BinOp::Lt,
                Some(Tok::Punct(">")) => BinOp::Gt,
                Some(Tok::Punct("&&")) => BinOp::LAnd,
                Some(Tok::Punct("||")) => BinOp::LOr,
                _ => break,
            };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.expr(prec + 1)?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn stmt(&mut self) -> Result<Stmt, RtlError> {
        if self.eat_keyword("if") {
            self.expect_punct("(")?;
            let cond = self.expr(0)?;
            self.expect_punct(")")?;
            let then_body = self.block_or_single()?;
            let else_body = if self.eat_keyword("else") {
                if let Some(Tok::Ident(s)) = self.peek() {
                    if s == "if" {
                        // `else if` chains nest as a single-statement else arm.
                        return Ok(Stmt::If {
                            cond,
                            then_body,
                            else_body: vec![self.stmt()?],
                        });
                    }
                }
                self.block_or_single()?
            } else {
                Vec::new()
            };
            return Ok(Stmt::If {
                cond,
                then_body,
                else_body,
            });
        }
        let target = self.ident("a statement")?;
        if !self.eat_punct("<=") {
            if self.peek() == Some(&Tok::Punct("=")) {
                return Err(RtlError::UnsupportedConstruct {
                    line: self.line(),
                    construct: "blocking assignment in a clocked process".into(),
                });
            }
            return Err(self.err("`<=`"));
        }
        let expr = self.expr(0)?;
        self.expect_punct(";")?;
        Ok(Stmt::NonBlocking { target, expr })
    }

    fn block_or_single(&mut self) -> Result<Vec<Stmt>, RtlError> {
        if self.eat_keyword("begin") {
            let mut body = Vec::new();
            while !self.eat_keyword("end") {
                if self.peek().is_none() {
                    return Err(self.err("`end`"));
                }
                body.push(self.stmt()?);
            }
            Ok(body)
        } else {
            Ok(vec![self.stmt()?])
        }
    }

    fn port(&mut self) -> Result<Port, RtlError> {
        let dir = if self.eat_keyword("input") {
            Dir::Input
        } else if self.eat_keyword("output") {
            Dir::Output
        } else {
            self.check_supported(match self.peek() {
                Some(Tok::Ident(s)) => s.as_str(),
                _ => "",
            })?;
            return Err(self.err("`input` or `output`"));
        };
        let is_reg = self.eat_keyword("reg");
        if is_reg && dir == Dir::Input {
            return Err(RtlError::Syntax {
                line: self.line(),
                message: "input ports cannot be registers".into(),
            });
        }
        self.eat_keyword("wire");
        let width = self.width()?;
        let name = self.ident("a port name")?;
        Ok(Port {
            name,
            dir,
            width,
            is_reg,
        })
    }

    fn module(&mut self) -> Result<RtlModule, RtlError> {
        self.expect_keyword("module")?;
        let name = self.ident("a module name")?;
        let mut ports = Vec::new();
        self.expect_punct("(")?;
        if !self.eat_punct(")") {
            loop {
                ports.push(self.port()?);
                if self.eat_punct(")") {
                    break;
                }
                self.expect_punct(",")?;
            }
        }
        self.expect_punct(";")?;

        let mut m = RtlModule {
            name,
            params: Vec::new(),
            regs: ports
                .iter()
                .filter(|p| p.is_reg)
                .map(|p| RegDecl {
                    name: p.name.clone(),
                    width: p.width,
                    init: None,
                })
                .collect(),
            wires: Vec::new(),
            assigns: Vec::new(),
            processes: Vec::new(),
            ports,
        };

        loop {
            if self.eat_keyword("endmodule") {
                break;
            }
            if self.eat_keyword("localparam") {
                loop {
                    let pname = self.ident("a parameter name")?;
                    self.expect_punct("=")?;
                    let value = self.number()?;
                    m.params.push((pname, value));
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")?;
            } else if self.eat_keyword("reg") {
                let width = self.width()?;
                loop {
                    let rname = self.ident("a register name")?;
                    let init = if self.eat_punct("=") {
                        Some(self.number()?)
                    } else {
                        None
                    };
                    m.regs.push(RegDecl {
                        name: rname,
                        width,
                        init,
                    });
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")?;
            } else if self.eat_keyword("wire") {
                let width = self.width()?;
                loop {
                    let wname = self.ident("a wire name")?;
                    m.wires.push(WireDecl { name: wname, width });
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")?;
            } else if self.eat_keyword("assign") {
                let target = self.ident("an assign target")?;
                self.expect_punct("=")?;
                let expr = self.expr(0)?;
                self.expect_punct(";")?;
                m.assigns.push(Assign { target, expr });
            } else if self.eat_keyword("always") {
                self.expect_punct("@")?;
                self.expect_punct("(")?;
                self.expect_keyword("posedge")?;
                let clock = self.ident("a clock name")?;
                let async_reset = if self.eat_keyword("or") {
                    self.expect_keyword("posedge")?;
                    Some(self.ident("a reset name")?)
                } else {
                    None
                };
                self.expect_punct(")")?;
                let body = self.block_or_single()?;
                m.processes.push(Process {
                    clock,
                    async_reset,
                    body,
                });
            } else {
                if let Some(Tok::Ident(s)) = self.peek() {
                    self.check_supported(s.clone().as_str())?;
                }
                return Err(self.err("a module item or `endmodule`"));
            }
        }
        if self.pos != self.toks.len() {
            return Err(self.err("end of input"));
        }
        Ok(m)
    }
}

/// Declaration and use checks that make downstream passes panic-free:
/// every name resolves, assignment targets match their declarations,
/// processes share one clock, and continuous assigns are acyclic.
pub(super) fn validate(m: &RtlModule) -> Result<(), RtlError> {
    let mut declared = BTreeSet::new();
    let all_names = m
        .ports
        .iter()
        .map(|p| p.name.clone())
        .chain(m.regs.iter().filter(|r| m.port(&r.name).is_none()).map(|r| r.name.clone()))
        .chain(m.wires.iter().map(|w| w.name.clone()))
        .chain(m.params.iter().map(|(n, _)| n.clone()));
    for name in all_names {
        if !declared.insert(name.clone()) {
            return Err(RtlError::Validation {
                message: format!("`{name}` is declared more than once"),
            });
        }
    }

    let is_reg = |name: &str| m.regs.iter().any(|r| r.name == name);
    let is_wire = |name: &str| {
        !is_reg(name)
            && (m.wires.iter().any(|w| w.name == name)
                || m.port(name).is_some_and(|p| p.dir == Dir::Output && !p.is_reg))
    };

    let check_expr = |expr: &Expr| -> Result<(), RtlError> {
        let mut idents = BTreeSet::new();
        expr.collect_idents(&mut idents);
        for id in idents {
            if !declared.contains(&id) {
                return Err(RtlError::Validation {
                    message: format!("`{id}` is used but never declared"),
                });
            }
        }
        Ok(())
    };

    for a in &m.assigns {
        if !is_wire(&a.target) {
            return Err(RtlError::Validation {
                message: format!("assign target `{}` is not a wire", a.target),
            });
        }
        check_expr(&a.expr)?;
    }
    if m.assigns
        .iter()
        .map(|a| a.target.as_str())
        .collect::<BTreeSet<_>>()
        .len()
        != m.assigns.len()
    {
        return Err(RtlError::Validation {
            message: "a wire has more than one continuous driver".into(),
        });
    }

    fn check_stmts(
        stmts: &[Stmt],
        is_reg: &impl Fn(&str) -> bool,
        check_expr: &impl Fn(&Expr) -> Result<(), RtlError>,
    ) -> Result<(), RtlError> {
        for s in stmts {
            match s {
                Stmt::NonBlocking { target, expr } => {
                    if !is_reg(target) {
                        return Err(RtlError::Validation {
                            message: format!("non-blocking target `{target}` is not a register"),
                        });
                    }
                    check_expr(expr)?;
                }
                Stmt::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    check_expr(cond)?;
                    check_stmts(then_body, is_reg, check_expr)?;
                    check_stmts(else_body, is_reg, check_expr)?;
                }
            }
        }
        Ok(())
    }

    let clocks: BTreeSet<_> = m.processes.iter().map(|p| p.clock.clone()).collect();
    if clocks.len() > 1 {
        return Err(RtlError::Validation {
            message: format!(
                "multiple clocks: {}",
                clocks.into_iter().collect::<Vec<_>>().join(", ")
            ),
        });
    }
    for p in &m.processes {
        if m.port(&p.clock).map(|pt| pt.dir) != Some(Dir::Input) {
            return Err(RtlError::Validation {
                message: format!("clock `{}` is not an input port", p.clock),
            });
        }
        check_stmts(&p.body, &is_reg, &check_expr)?;
    }

    comb_order(m)?;
    Ok(())
}

/// Topological evaluation order for continuous assigns, or the cycle
/// that prevents one.
pub(super) fn comb_order(m: &RtlModule) -> Result<Vec<usize>, RtlError> {
    let targets: Vec<&str> = m.assigns.iter().map(|a| a.target.as_str()).collect();
    let mut deps: Vec<Vec<usize>> = Vec::with_capacity(m.assigns.len());
    for a in &m.assigns {
        let mut idents = BTreeSet::new();
        a.expr.collect_idents(&mut idents);
        deps.push(
            idents
                .iter()
                .filter_map(|id| targets.iter().position(|t| t == id))
                .collect(),
        );
    }
    let mut order = Vec::new();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; m.assigns.len()];
    fn visit(
        i: usize,
        deps: &[Vec<usize>],
        state: &mut [u8],
        order: &mut Vec<usize>,
        targets: &[&str],
    ) -> Result<(), RtlError> {
        match state[i] {
            2 => return Ok(()),
            1 => {
                return Err(RtlError::CombinationalCycle {
                    signal: targets[i].to_string(),
                })
            }
            _ => {}
        }
        state[i] = 1;
        for &d in &deps[i] {
            visit(d, deps, state, order, targets)?;
        }
        state[i] = 2;
        order.push(i);
        Ok(())
    }
    for i in 0..m.assigns.len() {
        visit(i, &deps, &mut state, &mut order, &targets)?;
    }
    Ok(order)
}

/// Parses and validates one module of the supported subset.
pub fn parse_rtl(src: &str) -> Result<RtlModule, RtlError> {
    let toks = Lexer::new(src).lex()?;
    let mut parser = Parser { toks, pos: 0 };
    let m = parser.module()?;
    validate(&m)?;
    Ok(m)
}
