//! Sampled traces: per-signal value sequences of uniform length, plus
//! named constants (design parameters) that assertions may compare
//! state registers against.
//!
//! The on-disk form is a VCD-lite text table:
//!
//! ```text
//! # optional comment
//! = IDLE 0
//! rst count[4]
//! 1 0000
//! 0 0001
//! ```
//!
//! One header line names the signals (multi-bit signals carry a
//! `[width]` suffix), then one row per cycle with binary values. Lines
//! starting with `=` define constants.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("trace must cover at least one cycle")]
    Empty,
    #[error("signal `{name}` has {got} cycles, trace has {expected}")]
    LengthMismatch {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("signal `{0}` already present in trace")]
    DuplicateSignal(String),
    #[error("malformed trace line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalTrace {
    pub width: u32,
    pub values: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    len: usize,
    signals: BTreeMap<String, SignalTrace>,
    consts: BTreeMap<String, u64>,
}

impl Trace {
    /// Builds a trace from (name, width, values) columns. All columns
    /// must have the same non-zero length.
    pub fn new(columns: Vec<(String, u32, Vec<u64>)>) -> Result<Self, TraceError> {
        let mut trace = Trace::default();
        for (name, width, values) in columns {
            trace.push_signal(name, width, values)?;
        }
        if trace.len == 0 {
            return Err(TraceError::Empty);
        }
        Ok(trace)
    }

    pub fn push_signal(
        &mut self,
        name: String,
        width: u32,
        values: Vec<u64>,
    ) -> Result<(), TraceError> {
        if values.is_empty() {
            return Err(TraceError::Empty);
        }
        if self.len != 0 && values.len() != self.len {
            return Err(TraceError::LengthMismatch {
                name,
                got: values.len(),
                expected: self.len,
            });
        }
        if self.signals.contains_key(&name) {
            return Err(TraceError::DuplicateSignal(name));
        }
        self.len = values.len();
        self.signals.insert(name, SignalTrace { width, values });
        Ok(())
    }

    pub fn set_const(&mut self, name: impl Into<String>, value: u64) {
        self.consts.insert(name.into(), value);
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn has_signal(&self, name: &str) -> bool {
        self.signals.contains_key(name) || self.consts.contains_key(name)
    }

    /// Sampled value at a cycle; constants are visible at every cycle.
    pub fn value(&self, name: &str, cycle: usize) -> Option<u64> {
        if let Some(sig) = self.signals.get(name) {
            return sig.values.get(cycle).copied();
        }
        self.consts.get(name).copied()
    }

    pub fn width(&self, name: &str) -> Option<u32> {
        self.signals.get(name).map(|s| s.width)
    }

    pub fn signal_names(&self) -> impl Iterator<Item = &str> {
        self.signals.keys().map(|s| s.as_str())
    }

    pub fn consts(&self) -> &BTreeMap<String, u64> {
        &self.consts
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, value) in &self.consts {
            let _ = writeln!(out, "= {name} {value}");
        }
        let header: Vec<String> = self
            .signals
            .iter()
            .map(|(name, sig)| {
                if sig.width == 1 {
                    name.clone()
                } else {
                    format!("{name}[{}]", sig.width)
                }
            })
            .collect();
        let _ = writeln!(out, "{}", header.join(" "));
        for cycle in 0..self.len {
            let row: Vec<String> = self
                .signals
                .values()
                .map(|sig| {
                    let width = sig.width.max(1) as usize;
                    format!("{:0width$b}", sig.values[cycle])
                })
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TraceError> {
        let mut consts = BTreeMap::new();
        let mut header: Option<Vec<(String, Option<u32>)>> = None;
        let mut rows: Vec<Vec<u64>> = Vec::new();
        let mut widths: Vec<u32> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('=') {
                let mut parts = rest.split_whitespace();
                let name = parts.next().ok_or_else(|| TraceError::Malformed {
                    line: lineno + 1,
                    reason: "constant line needs a name".into(),
                })?;
                let value = parts
                    .next()
                    .and_then(|v| v.parse::<u64>().ok())
                    .ok_or_else(|| TraceError::Malformed {
                        line: lineno + 1,
                        reason: "constant line needs a numeric value".into(),
                    })?;
                consts.insert(name.to_string(), value);
                continue;
            }
            match &header {
                None => {
                    let cols = line
                        .split_whitespace()
                        .map(|col| {
                            if let Some(open) = col.find('[') {
                                let name = col[..open].to_string();
                                let width = col[open + 1..]
                                    .trim_end_matches(']')
                                    .parse::<u32>()
                                    .ok();
                                (name, width)
                            } else {
                                (col.to_string(), None)
                            }
                        })
                        .collect::<Vec<_>>();
                    widths = vec![0; cols.len()];
                    header = Some(cols);
                }
                Some(cols) => {
                    let cells: Vec<&str> = line.split_whitespace().collect();
                    if cells.len() != cols.len() {
                        return Err(TraceError::Malformed {
                            line: lineno + 1,
                            reason: format!(
                                "row has {} values, header has {}",
                                cells.len(),
                                cols.len()
                            ),
                        });
                    }
                    let mut row = Vec::with_capacity(cells.len());
                    for (idx, cell) in cells.iter().enumerate() {
                        let value =
                            u64::from_str_radix(cell, 2).map_err(|_| TraceError::Malformed {
                                line: lineno + 1,
                                reason: format!("`{cell}` is not a binary value"),
                            })?;
                        widths[idx] = widths[idx].max(cell.len() as u32);
                        row.push(value);
                    }
                    rows.push(row);
                }
            }
        }
        let header = header.ok_or(TraceError::Empty)?;
        if rows.is_empty() {
            return Err(TraceError::Empty);
        }
        let mut trace = Trace::default();
        for (idx, (name, declared)) in header.into_iter().enumerate() {
            let width = declared.unwrap_or(widths[idx]).max(1);
            let values = rows.iter().map(|r| r[idx]).collect();
            trace.push_signal(name, width, values)?;
        }
        trace.consts = consts;
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_preserves_values_and_consts() {
        let mut trace = Trace::new(vec![
            ("rst".into(), 1, vec![1, 0, 0]),
            ("count".into(), 4, vec![0, 0, 1]),
        ])
        .unwrap();
        trace.set_const("IDLE", 0);
        let text = trace.to_text();
        let back = Trace::from_text(&text).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn ragged_columns_are_rejected() {
        let err = Trace::new(vec![
            ("a".into(), 1, vec![1, 0]),
            ("b".into(), 1, vec![1]),
        ])
        .unwrap_err();
        assert!(matches!(err, TraceError::LengthMismatch { .. }));
    }

    #[test]
    fn zero_cycle_trace_is_rejected() {
        assert_eq!(Trace::new(vec![]).unwrap_err(), TraceError::Empty);
    }
}
