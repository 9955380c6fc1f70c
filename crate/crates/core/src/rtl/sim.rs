//! Cycle-accurate two-phase simulator. Each cycle first settles the
//! combinational fabric against current register state and inputs,
//! samples every signal into the trace, then commits non-blocking
//! updates so right-hand sides read pre-edge values.

use super::ast::{BinOp, Expr, RtlModule, Stmt, UnOp};
use super::parser::comb_order;
use super::RtlError;
use crate::sva::Trace;
use std::collections::BTreeMap;

pub(super) fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Input waveforms, one column per non-clock input port. Cycles past
/// the last row read as all-zero, which lets a checker extend a run
/// beyond the driven window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stimulus {
    pub inputs: Vec<String>,
    pub rows: Vec<Vec<u64>>,
}

impl Stimulus {
    pub fn new(inputs: Vec<String>, rows: Vec<Vec<u64>>) -> Self {
        Stimulus { inputs, rows }
    }

    pub fn zeros(inputs: Vec<String>, len: usize) -> Self {
        let row = vec![0; inputs.len()];
        Stimulus {
            inputs,
            rows: vec![row; len],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn value(&self, column: usize, cycle: usize) -> u64 {
        self.rows.get(cycle).map_or(0, |row| row[column])
    }
}

/// Width of an expression under the module's declarations, following
/// self-determined sizing: literals are 32 bits, comparisons and
/// logical operators produce one bit, everything else takes the wider
/// operand.
fn expr_width(m: &RtlModule, expr: &Expr) -> u32 {
    match expr {
        Expr::Const(_) => 32,
        Expr::Ident(name) => m
            .width_of(name)
            .unwrap_or_else(|| if m.param_value(name).is_some() { 32 } else { 1 }),
        Expr::Unary { op: UnOp::Not, .. } => 1,
        Expr::Unary {
            op: UnOp::BitNot,
            inner,
        } => expr_width(m, inner),
        Expr::Binary { op, lhs, rhs } => match op {
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Gt | BinOp::LAnd | BinOp::LOr => 1,
            _ => expr_width(m, lhs).max(expr_width(m, rhs)),
        },
    }
}

fn eval(m: &RtlModule, expr: &Expr, env: &BTreeMap<String, u64>) -> u64 {
    match expr {
        Expr::Const(v) => *v,
        // Name resolution was validated at parse time.
        Expr::Ident(name) => env[name.as_str()],
        Expr::Unary { op, inner } => {
            let v = eval(m, inner, env);
            match op {
                UnOp::Not => (v == 0) as u64,
                UnOp::BitNot => !v & mask(expr_width(m, inner)),
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let l = eval(m, lhs, env);
            let r = eval(m, rhs, env);
            let w = mask(expr_width(m, expr));
            match op {
                BinOp::Add => l.wrapping_add(r) & w,
                BinOp::Sub => l.wrapping_sub(r) & w,
                BinOp::BitAnd => l & r,
                BinOp::BitOr => l | r,
                BinOp::BitXor => l ^ r,
                BinOp::Eq => (l == r) as u64,
                BinOp::Ne => (l != r) as u64,
                BinOp::Lt => (l < r) as u64,
                BinOp::Gt => (l > r) as u64,
                BinOp::LAnd => (l != 0 && r != 0) as u64,
                BinOp::LOr => (l != 0 || r != 0) as u64,
            }
        }
    }
}

fn exec_stmts(
    m: &RtlModule,
    stmts: &[Stmt],
    env: &BTreeMap<String, u64>,
    next: &mut BTreeMap<String, u64>,
) {
    for s in stmts {
        match s {
            Stmt::NonBlocking { target, expr } => {
                let width = m.width_of(target).unwrap_or(1);
                next.insert(target.clone(), eval(m, expr, env) & mask(width));
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                if eval(m, cond, env) != 0 {
                    exec_stmts(m, then_body, env, next);
                } else {
                    exec_stmts(m, else_body, env, next);
                }
            }
        }
    }
}

/// Runs the module for `cycles` sampled cycles and returns a trace
/// over every port (except the clock), register, and wire, with
/// localparams attached as named constants.
pub fn simulate(m: &RtlModule, stim: &Stimulus, cycles: usize) -> Result<Trace, RtlError> {
    let expected: Vec<String> = m
        .stimulus_inputs()
        .iter()
        .map(|p| p.name.to_string())
        .collect();
    for name in &stim.inputs {
        if !expected.contains(name) {
            return Err(RtlError::UnknownSignal { name: name.clone() });
        }
    }
    for name in &expected {
        if !stim.inputs.contains(name) {
            return Err(RtlError::Validation {
                message: format!("stimulus is missing input `{name}`"),
            });
        }
    }
    for (i, row) in stim.rows.iter().enumerate() {
        if row.len() != stim.inputs.len() {
            return Err(RtlError::Validation {
                message: format!(
                    "stimulus row {i} has {} values for {} inputs",
                    row.len(),
                    stim.inputs.len()
                ),
            });
        }
    }

    let order = comb_order(m)?;
    let clock = m.clock().unwrap_or("");

    // Trace columns in declaration order: ports, then internal state.
    let mut columns: Vec<(String, u32)> = Vec::new();
    for p in &m.ports {
        if p.name != clock {
            columns.push((p.name.clone(), p.width));
        }
    }
    for r in &m.regs {
        if m.port(&r.name).is_none() {
            columns.push((r.name.clone(), r.width));
        }
    }
    for w in &m.wires {
        if m.port(&w.name).is_none() {
            columns.push((w.name.clone(), w.width));
        }
    }
    let mut recorded: BTreeMap<String, Vec<u64>> = columns
        .iter()
        .map(|(name, _)| (name.clone(), Vec::with_capacity(cycles)))
        .collect();

    let mut regs: BTreeMap<String, u64> = m
        .regs
        .iter()
        .map(|r| (r.name.clone(), r.init.unwrap_or(0) & mask(r.width)))
        .collect();

    for cycle in 0..cycles {
        let mut env: BTreeMap<String, u64> = regs.clone();
        for (name, value) in &m.params {
            env.insert(name.clone(), *value);
        }
        for (i, name) in stim.inputs.iter().enumerate() {
            let width = m.width_of(name).unwrap_or(1);
            env.insert(name.clone(), stim.value(i, cycle) & mask(width));
        }
        for &i in &order {
            let a = &m.assigns[i];
            let width = m.width_of(&a.target).unwrap_or(1);
            let value = eval(m, &a.expr, &env) & mask(width);
            env.insert(a.target.clone(), value);
        }
        for (name, values) in recorded.iter_mut() {
            values.push(env[name.as_str()]);
        }
        let mut next = regs.clone();
        for p in &m.processes {
            exec_stmts(m, &p.body, &env, &mut next);
        }
        regs = next;
    }

    let mut trace = Trace::new(
        columns
            .iter()
            .map(|(name, width)| (name.clone(), *width, recorded.remove(name).unwrap()))
            .collect(),
    )
    .map_err(|e| RtlError::Validation {
        message: format!("trace assembly failed: {e}"),
    })?;
    for (name, value) in &m.params {
        trace.set_const(name, *value);
    }
    Ok(trace)
}
