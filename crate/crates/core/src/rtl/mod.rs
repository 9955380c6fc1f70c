//! Verilog-subset frontend: parse, render, simulate, and mutate small
//! synchronous designs so generated assertions can be scored against
//! seeded bugs without an external simulator.

mod ast;
mod mutate;
mod parser;
mod sim;

pub use ast::{
    render_rtl, render_stmt, Assign, BinOp, Dir, Expr, Port, Process, RegDecl, RtlModule, Stmt,
    UnOp, WireDecl,
};
pub use mutate::{
    apply_site, enumerate_sites, generate_mutants, read_manifest, write_mutant_set, Mutant,
    MutantManifest, MutantRecord, MutationOp, MutationSite,
};
pub use parser::parse_rtl;
pub use sim::{simulate, Stimulus};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RtlError {
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unsupported construct at line {line}: `{construct}`")]
    UnsupportedConstruct { line: usize, construct: String },
    #[error("invalid module: {message}")]
    Validation { message: String },
    #[error("combinational cycle through `{signal}`")]
    CombinationalCycle { signal: String },
    #[error("unknown signal `{name}`")]
    UnknownSignal { name: String },
    #[error("module has no usable mutation sites")]
    NoMutationSites,
}

#[cfg(test)]
mod tests {
    use super::*;

    const COUNTER: &str = "\
module counter(
  input clk,
  input rst,
  output reg [3:0] count,
  output zero
);
  assign zero = count == 0;
  always @(posedge clk) begin
    if (rst) begin
      count <= 0;
    end else begin
      count <= count + 1;
    end
  end
endmodule
";

    fn counter() -> RtlModule {
        parse_rtl(COUNTER).unwrap()
    }

    fn step_stimulus() -> Stimulus {
        // Reset on the first cycle only.
        Stimulus::new(
            vec!["rst".into()],
            vec![vec![1], vec![0], vec![0], vec![0], vec![0]],
        )
    }

    #[test]
    fn counter_counts_after_reset() {
        let trace = simulate(&counter(), &step_stimulus(), 5).unwrap();
        let counts: Vec<u64> = (0..5).map(|t| trace.value("count", t).unwrap()).collect();
        assert_eq!(counts, vec![0, 0, 1, 2, 3]);
        let zeros: Vec<u64> = (0..5).map(|t| trace.value("zero", t).unwrap()).collect();
        assert_eq!(zeros, vec![1, 1, 0, 0, 0]);
    }

    #[test]
    fn render_round_trips() {
        let m = counter();
        let again = parse_rtl(&render_rtl(&m)).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn output_reg_port_declares_register() {
        let m = counter();
        assert!(m.port("count").unwrap().is_reg);
        assert_eq!(m.width_of("count"), Some(4));
        assert_eq!(m.stimulus_inputs().len(), 1, "clock is not stimulus");
    }

    #[test]
    fn localparams_become_trace_constants() {
        let src = "\
module fsm(input clk, input go, output reg [1:0] state);
  localparam IDLE = 0, RUN = 1;
  always @(posedge clk) begin
    if (state == IDLE && go) begin
      state <= RUN;
    end
  end
endmodule
";
        let m = parse_rtl(src).unwrap();
        assert_eq!(m.param_value("RUN"), Some(1));
        let stim = Stimulus::new(vec!["go".into()], vec![vec![1], vec![0]]);
        let trace = simulate(&m, &stim, 2).unwrap();
        assert_eq!(trace.value("IDLE", 0), Some(0));
        assert_eq!(trace.value("state", 1), Some(1));
    }

    #[test]
    fn initial_block_is_unsupported() {
        let src = "module t(input clk); initial begin end endmodule";
        match parse_rtl(src) {
            Err(RtlError::UnsupportedConstruct { construct, .. }) => {
                assert_eq!(construct, "initial")
            }
            other => panic!("expected unsupported construct, got {other:?}"),
        }
    }

    #[test]
    fn blocking_assign_in_process_is_unsupported() {
        let src = "\
module t(input clk, output reg q);
  always @(posedge clk) begin
    q = 1;
  end
endmodule
";
        match parse_rtl(src) {
            Err(RtlError::UnsupportedConstruct { construct, line }) => {
                assert!(construct.contains("blocking"));
                assert_eq!(line, 3);
            }
            other => panic!("expected unsupported construct, got {other:?}"),
        }
    }

    #[test]
    fn negedge_is_unsupported() {
        let src = "\
module t(input clk, output reg q);
  always @(negedge clk) begin
    q <= 1;
  end
endmodule
";
        assert!(matches!(
            parse_rtl(src),
            Err(RtlError::UnsupportedConstruct { construct, .. }) if construct == "negedge"
        ));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let src = "module t(input clk);\n  wire w\nendmodule";
        match parse_rtl(src) {
            Err(RtlError::Syntax { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("endmodule"), "message: {message}");
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn undeclared_name_is_rejected() {
        let src = "module t(input clk, output w); assign w = ghost; endmodule";
        assert!(matches!(parse_rtl(src), Err(RtlError::Validation { .. })));
    }

    #[test]
    fn combinational_cycles_are_rejected() {
        let src = "\
module t(input clk, output a);
  wire b;
  assign a = b;
  assign b = a;
endmodule
";
        assert!(matches!(
            parse_rtl(src),
            Err(RtlError::CombinationalCycle { .. })
        ));
    }

    #[test]
    fn multiple_clocks_are_rejected() {
        let src = "\
module t(input clk, input clk2, output reg a, output reg b);
  always @(posedge clk) begin
    a <= 1;
  end
  always @(posedge clk2) begin
    b <= 1;
  end
endmodule
";
        assert!(matches!(parse_rtl(src), Err(RtlError::Validation { .. })));
    }

    #[test]
    fn async_reset_form_clears_on_reset_cycle() {
        let src = "\
module t(input clk, input rst, output reg [3:0] q);
  always @(posedge clk or posedge rst) begin
    if (rst) begin
      q <= 0;
    end else begin
      q <= q + 1;
    end
  end
endmodule
";
        let m = parse_rtl(src).unwrap();
        let stim = Stimulus::new(
            vec!["rst".into()],
            vec![vec![0], vec![0], vec![1], vec![0]],
        );
        let trace = simulate(&m, &stim, 4).unwrap();
        let qs: Vec<u64> = (0..4).map(|t| trace.value("q", t).unwrap()).collect();
        assert_eq!(qs, vec![0, 1, 2, 0]);
        // The sensitivity list survives rendering.
        assert!(render_rtl(&m).contains("or posedge rst"));
    }

    #[test]
    fn stimulus_column_order_does_not_matter() {
        let src = "\
module t(input clk, input a, input b, output w);
  assign w = a & b;
endmodule
";
        let m = parse_rtl(src).unwrap();
        let fwd = Stimulus::new(vec!["a".into(), "b".into()], vec![vec![1, 0], vec![1, 1]]);
        let rev = Stimulus::new(vec!["b".into(), "a".into()], vec![vec![0, 1], vec![1, 1]]);
        let t1 = simulate(&m, &fwd, 2).unwrap();
        let t2 = simulate(&m, &rev, 2).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn missing_stimulus_input_is_an_error() {
        let m = counter();
        let stim = Stimulus::new(vec![], vec![]);
        assert!(matches!(
            simulate(&m, &stim, 2),
            Err(RtlError::Validation { .. })
        ));
        let stray = Stimulus::new(vec!["nope".into()], vec![vec![0]]);
        assert!(matches!(
            simulate(&m, &stray, 1),
            Err(RtlError::UnknownSignal { .. })
        ));
    }

    #[test]
    fn site_enumeration_is_stable_and_ordered() {
        let sites = enumerate_sites(&counter());
        let sites_again = enumerate_sites(&counter());
        assert_eq!(sites, sites_again);
        // Process sites come before assign sites.
        let first_assign = sites
            .iter()
            .position(|s| s.location.starts_with("assign"))
            .unwrap();
        assert!(sites[..first_assign]
            .iter()
            .all(|s| s.location.starts_with("proc0")));
        // The reset guard admits both negation and branch deletion.
        assert!(sites
            .iter()
            .any(|s| s.op == MutationOp::CondNegate && s.location == "proc0/if0"));
        assert!(sites
            .iter()
            .any(|s| s.op == MutationOp::ResetBranchDelete && s.location == "proc0/if0"));
    }

    #[test]
    fn reset_branch_delete_splices_else_branch() {
        let m = counter();
        let sites = enumerate_sites(&m);
        let ordinal = sites
            .iter()
            .position(|s| s.op == MutationOp::ResetBranchDelete)
            .unwrap();
        let mutated = apply_site(&m, ordinal);
        let rendered = render_rtl(&mutated);
        assert!(!rendered.contains("if (rst)"));
        assert!(rendered.contains("count <= count + 1;"));
        // Without the reset branch the counter never clears.
        let trace = simulate(&mutated, &step_stimulus(), 5).unwrap();
        let counts: Vec<u64> = (0..5).map(|t| trace.value("count", t).unwrap()).collect();
        assert_eq!(counts, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn mutants_are_deterministic_and_budgeted() {
        let m = counter();
        let a = generate_mutants(&m, 4, 7).unwrap();
        let b = generate_mutants(&m, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        let all = generate_mutants(&m, usize::MAX, 7).unwrap();
        let c = generate_mutants(&m, 4, 8).unwrap();
        assert!(all.len() > 4);
        // A different seed may pick a different subset but never a
        // different size.
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn mutants_differ_from_original_and_stay_valid() {
        let m = counter();
        for mutant in generate_mutants(&m, usize::MAX, 0).unwrap() {
            assert_ne!(mutant.module, m, "{} is a no-op", mutant.id);
            let rendered = render_rtl(&mutant.module);
            let reparsed = parse_rtl(&rendered).expect("mutant parses");
            assert_eq!(reparsed, mutant.module);
        }
    }

    #[test]
    fn no_op_edits_are_discarded_as_equivalent() {
        let src = "\
module t(input clk, input [3:0] x, output [3:0] y);
  assign y = x - 0;
endmodule
";
        let m = parse_rtl(src).unwrap();
        let sites = enumerate_sites(&m);
        assert!(sites
            .iter()
            .any(|s| matches!(s.op, MutationOp::BinaryOpReplace { .. })));
        let mutants = generate_mutants(&m, usize::MAX, 0).unwrap();
        // `x - 0` -> `x + 0` folds back to the original and is culled.
        assert!(mutants
            .iter()
            .all(|mu| !matches!(mu.site.op, MutationOp::BinaryOpReplace { .. })));
    }

    #[test]
    fn signal_swap_respects_widths_and_clock() {
        let m = counter();
        for site in enumerate_sites(&m) {
            if let MutationOp::SignalSwap { from, to } = &site.op {
                assert_ne!(to, "clk");
                assert_eq!(m.width_of(from), m.width_of(to));
            }
        }
    }

    #[test]
    fn manifest_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let m = counter();
        let mutants = generate_mutants(&m, 3, 1).unwrap();
        write_mutant_set(dir.path(), &m, &mutants).unwrap();
        let manifest = read_manifest(dir.path()).unwrap();
        assert_eq!(manifest.module, "counter");
        assert_eq!(manifest.mutants.len(), 3);
        for record in &manifest.mutants {
            let src = std::fs::read_to_string(dir.path().join(format!("{}.v", record.id))).unwrap();
            parse_rtl(&src).expect("stored mutant parses");
        }
    }
}
