//! Whitespace-insensitive recursive-descent parser for the assertion
//! subset. Errors carry the byte position plus what was expected, so a
//! failed generation step can be fed back verbatim as repair context.

use super::ast::*;
use super::SvaError;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(u64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Star,
    Colon,
    Semi,
    At,
    Caret,
    Bang,
    DelayOp,
    EqEq,
    NotEq,
    AndAnd,
    OrOr,
    ImplOverlap,
    ImplNonOverlap,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Star => "`*`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Semi => "`;`".into(),
            Tok::At => "`@`".into(),
            Tok::Caret => "`^`".into(),
            Tok::Bang => "`!`".into(),
            Tok::DelayOp => "`##`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::NotEq => "`!=`".into(),
            Tok::AndAnd => "`&&`".into(),
            Tok::OrOr => "`||`".into(),
            Tok::ImplOverlap => "`|->`".into(),
            Tok::ImplNonOverlap => "`|=>`".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, SvaError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            b'[' => {
                out.push((i, Tok::LBracket));
                i += 1;
            }
            b']' => {
                out.push((i, Tok::RBracket));
                i += 1;
            }
            b'*' => {
                out.push((i, Tok::Star));
                i += 1;
            }
            b':' => {
                out.push((i, Tok::Colon));
                i += 1;
            }
            b';' => {
                out.push((i, Tok::Semi));
                i += 1;
            }
            b'@' => {
                out.push((i, Tok::At));
                i += 1;
            }
            b'^' => {
                out.push((i, Tok::Caret));
                i += 1;
            }
            b'#' => {
                if bytes.get(i + 1) == Some(&b'#') {
                    out.push((i, Tok::DelayOp));
                    i += 2;
                } else {
                    return Err(SvaError::syntax(i, "`##`", "`#`"));
                }
            }
            b'=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push((i, Tok::EqEq));
                    i += 2;
                } else {
                    return Err(SvaError::syntax(i, "`==`", "`=`"));
                }
            }
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push((i, Tok::NotEq));
                    i += 2;
                } else {
                    out.push((i, Tok::Bang));
                    i += 1;
                }
            }
            b'&' => {
                if bytes.get(i + 1) == Some(&b'&') {
                    out.push((i, Tok::AndAnd));
                    i += 2;
                } else {
                    return Err(SvaError::syntax(i, "`&&`", "`&`"));
                }
            }
            b'|' => match bytes.get(i + 1) {
                Some(b'|') => {
                    out.push((i, Tok::OrOr));
                    i += 2;
                }
                Some(b'-') if bytes.get(i + 2) == Some(&b'>') => {
                    out.push((i, Tok::ImplOverlap));
                    i += 3;
                }
                Some(b'=') if bytes.get(i + 2) == Some(&b'>') => {
                    out.push((i, Tok::ImplNonOverlap));
                    i += 3;
                }
                _ => return Err(SvaError::syntax(i, "`||`, `|->` or `|=>`", "`|`")),
            },
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut value: u64 = src[start..i]
                    .parse()
                    .map_err(|_| SvaError::syntax(start, "number", &src[start..i]))?;
                // Sized literal such as 4'd2, 1'b0, 8'hff. The width
                // prefix is accepted and dropped; only the value is kept.
                if bytes.get(i) == Some(&b'\'') {
                    i += 1;
                    let base = match bytes.get(i) {
                        Some(b'b') | Some(b'B') => 2,
                        Some(b'd') | Some(b'D') => 10,
                        Some(b'h') | Some(b'H') => 16,
                        _ => return Err(SvaError::syntax(i, "literal base `b`, `d` or `h`", "")),
                    };
                    i += 1;
                    let dstart = i;
                    while i < bytes.len()
                        && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                    {
                        i += 1;
                    }
                    let digits: String = src[dstart..i].chars().filter(|c| *c != '_').collect();
                    value = u64::from_str_radix(&digits, base)
                        .map_err(|_| SvaError::syntax(dstart, "literal digits", &digits))?;
                }
                out.push((start, Tok::Number(value)));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$')
                {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
            }
            other => {
                return Err(SvaError::syntax(
                    i,
                    "assertion token",
                    &format!("`{}`", other as char),
                ))
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, SvaError> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            end: src.len(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.end)
    }

    fn err(&self, expected: &str) -> SvaError {
        let found = self
            .peek()
            .map(|t| t.describe())
            .unwrap_or_else(|| "end of input".into());
        SvaError::syntax(self.here(), expected, &found)
    }

    fn expect(&mut self, want: Tok) -> Result<(), SvaError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&want.describe()))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SvaError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(&format!("`{kw}`"))),
        }
    }

    fn number(&mut self) -> Result<u64, SvaError> {
        match self.peek() {
            Some(Tok::Number(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.err("number")),
        }
    }

    fn ident(&mut self) -> Result<String, SvaError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("identifier")),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn assertion(&mut self) -> Result<SvaAst, SvaError> {
        self.expect_keyword("assert")?;
        self.expect_keyword("property")?;
        self.expect(Tok::LParen)?;
        let clocking = self.clocking()?;
        let body = self.property()?;
        self.expect(Tok::RParen)?;
        if self.peek() == Some(&Tok::Semi) {
            self.pos += 1;
        }
        if !self.at_end() {
            return Err(self.err("end of assertion"));
        }
        Ok(SvaAst { clocking, body })
    }

    fn clocking(&mut self) -> Result<Clocking, SvaError> {
        self.expect(Tok::At)?;
        self.expect(Tok::LParen)?;
        let edge = match self.peek() {
            Some(Tok::Ident(s)) if s == "posedge" => Edge::Pos,
            Some(Tok::Ident(s)) if s == "negedge" => Edge::Neg,
            _ => return Err(self.err("`posedge` or `negedge`")),
        };
        self.pos += 1;
        let signal = self.ident()?;
        self.expect(Tok::RParen)?;
        Ok(Clocking { edge, signal })
    }

    fn property(&mut self) -> Result<Property, SvaError> {
        let antecedent = self.sequence()?;
        match self.peek() {
            Some(Tok::ImplOverlap) => {
                self.pos += 1;
                let consequent = self.sequence()?;
                Ok(Property::Implication {
                    antecedent,
                    consequent,
                })
            }
            Some(Tok::ImplNonOverlap) => {
                self.pos += 1;
                let mut consequent = self.sequence()?;
                // a |=> b  is  a |-> ##1 b
                let first = &mut consequent.steps[0].delay;
                first.lo += 1;
                first.hi += 1;
                Ok(Property::Implication {
                    antecedent,
                    consequent,
                })
            }
            _ => Ok(Property::Seq(antecedent)),
        }
    }

    fn sequence(&mut self) -> Result<Sequence, SvaError> {
        let mut steps = Vec::new();
        let first_delay = if self.peek() == Some(&Tok::DelayOp) {
            self.delay()?
        } else {
            Delay::ZERO
        };
        steps.push(SeqStep {
            delay: first_delay,
            elem: self.seq_elem()?,
        });
        while self.peek() == Some(&Tok::DelayOp) {
            let delay = self.delay()?;
            steps.push(SeqStep {
                delay,
                elem: self.seq_elem()?,
            });
        }
        Ok(Sequence { steps })
    }

    fn delay(&mut self) -> Result<Delay, SvaError> {
        self.expect(Tok::DelayOp)?;
        match self.peek() {
            Some(Tok::Number(_)) => {
                let n = self.number()? as u32;
                Ok(Delay::new(n, n))
            }
            Some(Tok::LBracket) => {
                self.pos += 1;
                let lo = self.number()? as u32;
                self.expect(Tok::Colon)?;
                let hi = self.number()? as u32;
                self.expect(Tok::RBracket)?;
                if lo > hi {
                    return Err(SvaError::syntax(
                        self.here(),
                        "delay window with lo <= hi",
                        &format!("[{lo}:{hi}]"),
                    ));
                }
                Ok(Delay::new(lo, hi))
            }
            _ => Err(self.err("delay count or `[lo:hi]` window")),
        }
    }

    fn seq_elem(&mut self) -> Result<SeqElem, SvaError> {
        let expr = self.bool_or()?;
        let rep = if self.peek() == Some(&Tok::LBracket) {
            self.pos += 1;
            self.expect(Tok::Star)?;
            let k = self.number()? as u32;
            self.expect(Tok::RBracket)?;
            if k == 0 {
                return Err(SvaError::syntax(
                    self.here(),
                    "repetition count of at least 1",
                    "[*0]",
                ));
            }
            k
        } else {
            1
        };
        Ok(SeqElem { expr, rep })
    }

    fn bool_or(&mut self) -> Result<BoolExpr, SvaError> {
        let mut lhs = self.bool_and()?;
        while self.peek() == Some(&Tok::OrOr) {
            self.pos += 1;
            let rhs = self.bool_and()?;
            lhs = BoolExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn bool_and(&mut self) -> Result<BoolExpr, SvaError> {
        let mut lhs = self.bool_unary()?;
        while self.peek() == Some(&Tok::AndAnd) {
            self.pos += 1;
            let rhs = self.bool_unary()?;
            lhs = BoolExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn bool_unary(&mut self) -> Result<BoolExpr, SvaError> {
        if self.peek() == Some(&Tok::Bang) {
            self.pos += 1;
            let inner = self.bool_unary()?;
            return Ok(BoolExpr::Not(Box::new(inner)));
        }
        self.bool_primary()
    }

    fn bool_primary(&mut self) -> Result<BoolExpr, SvaError> {
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let inner = self.bool_or()?;
            self.expect(Tok::RParen)?;
            return Ok(inner);
        }
        let lhs = self.operand()?;
        let op = match self.peek() {
            Some(Tok::EqEq) => Some(CmpOp::Eq),
            Some(Tok::NotEq) => Some(CmpOp::Ne),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let rhs = self.operand()?;
            Ok(BoolExpr::Cmp { op, lhs, rhs })
        } else {
            Ok(BoolExpr::Atom(lhs))
        }
    }

    fn operand(&mut self) -> Result<Operand, SvaError> {
        match self.peek() {
            Some(Tok::Ident(_)) => Ok(Operand::Signal(self.ident()?)),
            Some(Tok::Number(_)) => Ok(Operand::Const(self.number()?)),
            Some(Tok::Caret) => {
                self.pos += 1;
                Ok(Operand::ReduceXor(self.ident()?))
            }
            _ => Err(self.err("signal, literal or `^signal`")),
        }
    }
}

/// Parses a complete `assert property (...)` line.
pub fn parse_sva(src: &str) -> Result<SvaAst, SvaError> {
    Parser::new(src)?.assertion()
}

/// Parses a bare sequence fragment such as `##[1:2] ack_out[*2]`.
pub fn parse_sequence(src: &str) -> Result<Sequence, SvaError> {
    let mut p = Parser::new(src)?;
    let seq = p.sequence()?;
    if !p.at_end() {
        return Err(p.err("end of sequence"));
    }
    Ok(seq)
}

/// Parses a bare boolean expression such as `state == READ && data_valid`.
pub fn parse_bool_expr(src: &str) -> Result<BoolExpr, SvaError> {
    let mut p = Parser::new(src)?;
    let expr = p.bool_or()?;
    if !p.at_end() {
        return Err(p.err("end of expression"));
    }
    Ok(expr)
}
