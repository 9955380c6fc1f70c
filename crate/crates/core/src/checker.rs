//! Bounded checking of assertions against designs and their mutants.
//!
//! A cell of the detection matrix answers "does assertion `a` fail on
//! design `m` for any stimulus in the configured set". Stimuli are
//! either exhaustively enumerated (complete up to the trace length)
//! or drawn from a seeded generator. Runs are extended past the
//! stimulus window by the assertion's temporal depth with idle inputs
//! so obligations raised near the end are judged on real cycles
//! rather than failed by truncation.

use crate::rtl::{simulate, RtlModule, Stimulus};
use crate::sva::{eval_sva_within, render_sva, SvaAst, Trace, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("assertion references `{name}` which the design does not expose")]
    UnknownSignal { name: String },
    #[error("exhaustive checking needs {bits} stimulus bits, above the cap of {cap}")]
    BudgetExceeded { bits: u32, cap: u32 },
    #[error("bad check configuration: {message}")]
    Config { message: String },
    #[error(transparent)]
    Rtl(#[from] crate::rtl::RtlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    Exhaustive,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub mode: CheckMode,
    /// Cycles of driven stimulus per run; also the window in which
    /// assertion obligations may start.
    pub trace_length: usize,
    /// Number of runs in random mode.
    pub max_stimuli: usize,
    pub seed: u64,
    /// Exhaustive mode must satisfy input_bits * trace_length <= cap.
    pub exhaustive_cap: u32,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            mode: CheckMode::Random,
            trace_length: 8,
            max_stimuli: 256,
            seed: 0,
            exhaustive_cap: 20,
        }
    }
}

impl CheckConfig {
    pub fn validate(&self) -> Result<(), CheckError> {
        if self.trace_length < 2 {
            return Err(CheckError::Config {
                message: format!("trace_length {} is below the minimum of 2", self.trace_length),
            });
        }
        if self.mode == CheckMode::Random && self.max_stimuli == 0 {
            return Err(CheckError::Config {
                message: "random mode needs max_stimuli >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Where a matrix cell's verdict came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Simulated,
    External,
    Skipped,
}

/// detect(a, m) for every assertion row and mutant column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionMatrix {
    pub schema: String,
    pub assertions: Vec<String>,
    pub mutants: Vec<String>,
    /// Row-major bits, cells[i][j] = detect(assertions[i], mutants[j]).
    pub cells: Vec<Vec<u8>>,
    pub provenance: Vec<Vec<Provenance>>,
}

impl DetectionMatrix {
    pub fn new(
        assertions: Vec<String>,
        mutants: Vec<String>,
        cells: Vec<Vec<u8>>,
        provenance: Vec<Vec<Provenance>>,
    ) -> Result<Self, CheckError> {
        let n = assertions.len();
        let k = mutants.len();
        let dims_ok = cells.len() == n
            && provenance.len() == n
            && cells.iter().all(|row| row.len() == k)
            && provenance.iter().all(|row| row.len() == k);
        if !dims_ok {
            return Err(CheckError::Config {
                message: "matrix dimensions do not match id lists".into(),
            });
        }
        if cells.iter().flatten().any(|&b| b > 1) {
            return Err(CheckError::Config {
                message: "matrix cells must be 0 or 1".into(),
            });
        }
        Ok(DetectionMatrix {
            schema: "matrix/v1".to_string(),
            assertions,
            mutants,
            cells,
            provenance,
        })
    }

    pub fn get(&self, assertion: usize, mutant: usize) -> u8 {
        self.cells[assertion][mutant]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckError> {
        let m: DetectionMatrix = serde_json::from_str(text).map_err(|e| CheckError::Config {
            message: format!("matrix does not parse: {e}"),
        })?;
        DetectionMatrix::new(m.assertions, m.mutants, m.cells, m.provenance)
    }
}

/// Deterministic stimulus family for one design: index in, waveform
/// out. Random mode gives each index its own generator stream, so the
/// first S stimuli are the same for every max_stimuli >= S.
struct StimulusSet {
    inputs: Vec<(String, u32)>,
    trace_length: usize,
    mode: CheckMode,
    count: u64,
    seed: u64,
}

impl StimulusSet {
    fn build(m: &RtlModule, cfg: &CheckConfig) -> Result<Self, CheckError> {
        cfg.validate()?;
        let inputs: Vec<(String, u32)> = m
            .stimulus_inputs()
            .iter()
            .map(|p| (p.name.clone(), p.width))
            .collect();
        let bits_per_cycle: u32 = inputs.iter().map(|(_, w)| *w).sum();
        let count = match cfg.mode {
            CheckMode::Exhaustive => {
                let total_bits = bits_per_cycle * cfg.trace_length as u32;
                if total_bits > cfg.exhaustive_cap {
                    return Err(CheckError::BudgetExceeded {
                        bits: total_bits,
                        cap: cfg.exhaustive_cap,
                    });
                }
                1u64 << total_bits
            }
            CheckMode::Random => cfg.max_stimuli as u64,
        };
        Ok(StimulusSet {
            inputs,
            trace_length: cfg.trace_length,
            mode: cfg.mode,
            count,
            seed: cfg.seed,
        })
    }

    fn len(&self) -> u64 {
        self.count
    }

    fn get(&self, index: u64) -> Stimulus {
        let names: Vec<String> = self.inputs.iter().map(|(n, _)| n.clone()).collect();
        let mut rows = Vec::with_capacity(self.trace_length);
        match self.mode {
            CheckMode::Exhaustive => {
                // Cycle-major bit layout, LSB first: low index bits
                // drive early cycles, so index 0 is the idle run.
                let mut remaining = index;
                for _ in 0..self.trace_length {
                    let mut row = Vec::with_capacity(self.inputs.len());
                    for (_, width) in &self.inputs {
                        let mask = if *width >= 64 {
                            u64::MAX
                        } else {
                            (1u64 << width) - 1
                        };
                        row.push(remaining & mask);
                        remaining >>= width;
                    }
                    rows.push(row);
                }
            }
            CheckMode::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(index);
                for _ in 0..self.trace_length {
                    let row = self
                        .inputs
                        .iter()
                        .map(|(_, width)| {
                            let mask = if *width >= 64 {
                                u64::MAX
                            } else {
                                (1u64 << width) - 1
                            };
                            rng.random::<u64>() & mask
                        })
                        .collect();
                    rows.push(row);
                }
            }
        }
        Stimulus::new(names, rows)
    }
}

fn signals_available(assertion: &SvaAst, m: &RtlModule) -> Result<(), CheckError> {
    let clock = m.clock().unwrap_or("").to_string();
    for name in assertion.signals() {
        let known = name != clock
            && (m.width_of(&name).is_some() || m.param_value(&name).is_some());
        if !known {
            return Err(CheckError::UnknownSignal { name });
        }
    }
    Ok(())
}

/// Simulates one run and judges the assertion over it. The run is
/// padded past the driven window by the assertion's temporal depth
/// (inputs idle) and obligations may start anywhere in the window.
fn judge(
    assertion: &SvaAst,
    m: &RtlModule,
    stimulus: &Stimulus,
    cfg: &CheckConfig,
) -> Result<(Verdict, Trace), CheckError> {
    let horizon = cfg.trace_length + assertion.temporal_depth() as usize + 1;
    let trace = simulate(m, stimulus, horizon)?;
    let verdict = eval_sva_within(assertion, &trace, cfg.trace_length)
        .map_err(|e| match e {
            crate::sva::SvaError::UnknownSignal { name } => CheckError::UnknownSignal { name },
            other => CheckError::Config {
                message: format!("evaluation failed: {other}"),
            },
        })?;
    Ok((verdict, trace))
}

/// Eq.-style detection bit: 1 iff some stimulus makes the assertion
/// fail on this design. The witness is the first failing trace in
/// stimulus order.
pub fn detect_with_witness(
    assertion: &SvaAst,
    mutant: &RtlModule,
    cfg: &CheckConfig,
) -> Result<(u8, Option<Trace>), CheckError> {
    signals_available(assertion, mutant)?;
    let set = StimulusSet::build(mutant, cfg)?;
    for index in 0..set.len() {
        let stimulus = set.get(index);
        let (verdict, trace) = judge(assertion, mutant, &stimulus, cfg)?;
        if verdict.is_fail() {
            return Ok((1, Some(trace)));
        }
    }
    Ok((0, None))
}

pub fn detect(assertion: &SvaAst, mutant: &RtlModule, cfg: &CheckConfig) -> Result<u8, CheckError> {
    detect_with_witness(assertion, mutant, cfg).map(|(bit, _)| bit)
}

/// Verdict of an assertion against the unmutated design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoldenVerdict {
    Holds,
    Fails { cycle: usize, trace: Trace },
    Vacuous,
}

impl GoldenVerdict {
    pub fn is_fail(&self) -> bool {
        matches!(self, GoldenVerdict::Fails { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            GoldenVerdict::Holds => "holds",
            GoldenVerdict::Fails { .. } => "fails",
            GoldenVerdict::Vacuous => "vacuous",
        }
    }
}

/// Re-evaluates an assertion on the golden design: `Fails` carries the
/// first counterexample, `Vacuous` means no stimulus ever fired the
/// antecedent.
pub fn check_golden(
    assertion: &SvaAst,
    rtl: &RtlModule,
    cfg: &CheckConfig,
) -> Result<GoldenVerdict, CheckError> {
    signals_available(assertion, rtl)?;
    let set = StimulusSet::build(rtl, cfg)?;
    let mut fired = false;
    for index in 0..set.len() {
        let stimulus = set.get(index);
        let (verdict, trace) = judge(assertion, rtl, &stimulus, cfg)?;
        match verdict {
            Verdict::Fail { cycle } => return Ok(GoldenVerdict::Fails { cycle, trace }),
            Verdict::Pass => fired = true,
            Verdict::VacuousPass => {}
        }
    }
    if fired {
        Ok(GoldenVerdict::Holds)
    } else {
        Ok(GoldenVerdict::Vacuous)
    }
}

/// A computed matrix plus the witness traces behind its 1-bits,
/// keyed by (assertion id, mutant id).
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub matrix: DetectionMatrix,
    pub witnesses: BTreeMap<(String, String), Trace>,
}

/// Builds the full detection matrix. Cells are independent and run
/// concurrently; the merged result is ordered by the id lists, so the
/// outcome is identical to a sequential scan. Assertions that
/// reference signals a design does not expose produce skipped cells
/// with bit 0 instead of failing the whole matrix.
pub fn build_matrix(
    assertions: &[(String, SvaAst)],
    mutants: &[(String, RtlModule)],
    cfg: &CheckConfig,
) -> Result<CheckOutcome, CheckError> {
    cfg.validate()?;
    let coords: Vec<(usize, usize)> = (0..assertions.len())
        .flat_map(|i| (0..mutants.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<(u8, Provenance, Option<Trace>), CheckError>> = coords
        .par_iter()
        .map(|&(i, j)| {
            let (_, ast) = &assertions[i];
            let (_, module) = &mutants[j];
            match detect_with_witness(ast, module, cfg) {
                Ok((bit, witness)) => Ok((bit, Provenance::Simulated, witness)),
                Err(CheckError::UnknownSignal { .. }) => Ok((0, Provenance::Skipped, None)),
                Err(e) => Err(e),
            }
        })
        .collect();

    let n = assertions.len();
    let k = mutants.len();
    let mut cells = vec![vec![0u8; k]; n];
    let mut provenance = vec![vec![Provenance::Simulated; k]; n];
    let mut witnesses = BTreeMap::new();
    for (&(i, j), result) in coords.iter().zip(results) {
        let (bit, prov, witness) = result?;
        cells[i][j] = bit;
        provenance[i][j] = prov;
        if let Some(trace) = witness {
            witnesses.insert((assertions[i].0.clone(), mutants[j].0.clone()), trace);
        }
    }
    let matrix = DetectionMatrix::new(
        assertions.iter().map(|(id, _)| id.clone()).collect(),
        mutants.iter().map(|(id, _)| id.clone()).collect(),
        cells,
        provenance,
    )?;
    Ok(CheckOutcome { matrix, witnesses })
}

/// Writes each witness as `<assertion id>__<mutant id>.trace` in the
/// trace text format, so a detected cell can be replayed offline.
pub fn persist_witnesses(dir: &Path, outcome: &CheckOutcome) -> Result<Vec<PathBuf>, CheckError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for ((aid, mid), trace) in &outcome.witnesses {
        let path = dir.join(format!("{aid}__{mid}.trace"));
        std::fs::write(&path, trace.to_text())?;
        written.push(path);
    }
    Ok(written)
}

/// Lays out a self-contained job for an external bounded model
/// checker (SymbiYosys layout): the design, a checker module binding
/// the assertion, and the job config. Never invokes the tool.
pub fn emit_external_job(
    assertion: &SvaAst,
    rtl: &RtlModule,
    outdir: &Path,
) -> Result<Vec<PathBuf>, CheckError> {
    std::fs::create_dir_all(outdir)?;
    let design_file = "design.v";
    let props_file = "properties.sv";
    let job_file = "job.sby";

    let mut props = String::new();
    props.push_str(&format!("module {}_props(\n", rtl.name));
    let mut first = true;
    for p in &rtl.ports {
        if !first {
            props.push_str(",\n");
        }
        first = false;
        let width = if p.width == 1 {
            String::new()
        } else {
            format!("[{}:0] ", p.width - 1)
        };
        props.push_str(&format!("  input {}{}", width, p.name));
    }
    props.push_str("\n);\n");
    props.push_str(&format!("  {}\n", render_sva(assertion)));
    props.push_str("endmodule\n");

    let depth = rtl
        .regs
        .iter()
        .map(|r| 1u32 << r.width.min(6))
        .max()
        .unwrap_or(8)
        .max(assertion.temporal_depth() + 2);
    let job = format!(
        "[options]\nmode bmc\ndepth {depth}\n\n[engines]\nsmtbmc\n\n[script]\nread -formal -sv {props_file}\nread -formal {design_file}\nprep -top {top}\n\n[files]\n{design_file}\n{props_file}\n",
        top = rtl.name,
    );

    let paths = [
        (design_file, crate::rtl::render_rtl(rtl)),
        (props_file, props),
        (job_file, job),
    ];
    let mut written = Vec::new();
    for (name, content) in paths {
        let path = outdir.join(name);
        std::fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}
