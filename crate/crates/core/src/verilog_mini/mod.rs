//! A combinational Verilog subset: parser, gate-level lowering, vector
//! simulation and a unit-cost PPA model. This is the engine behind the mock
//! toolchain backend.

mod ast;
mod elaborate;
mod netlist;
mod parse;
mod ppa;
mod vectors;

use std::collections::HashMap;

use thiserror::Error;

pub use ast::{Assign, BinaryOp, Direction, Expr, Literal, Net, Pos, Port, Select, SignalRef, MAX_WIDTH};
pub use netlist::{BitName, Gate, GateKind, GateNetlist, Sig};
pub use ppa::{estimate_ppa, CostModel, PpaMetrics};
pub use vectors::{PortSpec, VectorRow, VectorTable, VectorTableError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{column}: {message}")]
pub struct SyntaxError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("elaboration failed: {message}")]
pub struct ElaborationError {
    pub message: String,
}

impl ElaborationError {
    pub(crate) fn new(message: impl Into<String>) -> Self {
        Self { message: message.into() }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("testbench ports do not match the module: {0}")]
    PortMismatch(String),
    #[error(transparent)]
    Elaboration(#[from] ElaborationError),
}

/// A parsed and checked module: identifiers resolve, each driven bit has one
/// driver, outputs are fully driven and assigns form no combinational loop.
#[derive(Debug, Clone)]
pub struct MiniModule {
    name: String,
    ports: Vec<Port>,
    nets: Vec<Net>,
    assigns: Vec<Assign>,
    /// Assign indices in dependency order.
    order: Vec<usize>,
    syms: ast::Symbols,
}

impl MiniModule {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    pub fn nets(&self) -> &[Net] {
        &self.nets
    }

    pub fn assigns(&self) -> &[Assign] {
        &self.assigns
    }

    pub fn inputs(&self) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(|p| p.direction == Direction::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(|p| p.direction == Direction::Output)
    }

    pub fn input_bits(&self) -> u32 {
        self.inputs().map(|p| p.width).sum()
    }

    /// Direct evaluation of the assigns on integers, without building gates.
    /// `inputs` and the result follow port order.
    pub fn eval_ports(&self, inputs: &[u64]) -> Result<Vec<u64>, ElaborationError> {
        let mut values: HashMap<String, u64> = HashMap::new();
        for (p, v) in self.inputs().zip(inputs) {
            ast::check_width(p.width)?;
            values.insert(p.name.clone(), v & ast::mask(p.width));
        }
        for p in self.outputs() {
            values.insert(p.name.clone(), 0);
        }
        for n in &self.nets {
            ast::check_width(n.width)?;
            values.insert(n.name.clone(), 0);
        }
        for &ai in &self.order {
            let a = &self.assigns[ai];
            let lhs: u32 = a.target.iter().map(|t| self.syms.ref_width(t)).sum();
            let ctx = ast::check_width(lhs.max(ast::self_width(&a.expr, &self.syms)))?;
            let mut v = ast::eval_expr(&a.expr, ctx, &self.syms, &values)?;
            for t in a.target.iter().rev() {
                let o = self.syms.offsets(t);
                let w = o.end - o.start;
                let slot = values.get_mut(&t.name).expect("checked target");
                let field = ast::mask(w) << o.start;
                *slot = (*slot & !field) | ((v & ast::mask(w)) << o.start);
                v = if w >= 64 { 0 } else { v >> w };
            }
        }
        Ok(self.outputs().map(|p| values[&p.name]).collect())
    }
}

/// Parses and checks one module of the combinational subset.
pub fn parse_mini(source: &str) -> Result<MiniModule, SyntaxError> {
    parse::parse(source)
}

/// Lowers a module to NOT/AND2/OR2/XOR2 gates.
pub fn elaborate(m: &MiniModule) -> Result<GateNetlist, ElaborationError> {
    elaborate::elaborate(m)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowResult {
    pub pass: bool,
    /// Observed outputs in header order.
    pub observed: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionalResult {
    pub rows: Vec<RowResult>,
    pub pass: bool,
}

impl FunctionalResult {
    pub fn failures(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.iter().enumerate().filter(|(_, r)| !r.pass).map(|(i, _)| i)
    }
}

/// Runs every row of `tb` on the elaborated netlist of `m`.
pub fn simulate_vectors(m: &MiniModule, tb: &VectorTable) -> Result<FunctionalResult, SimError> {
    let netlist = elaborate(m)?;
    simulate_netlist(m, &netlist, tb)
}

/// Like [`simulate_vectors`] for an already elaborated netlist.
pub fn simulate_netlist(m: &MiniModule, netlist: &GateNetlist, tb: &VectorTable) -> Result<FunctionalResult, SimError> {
    check_ports(m, tb)?;
    // column of each netlist input bit / output bit in the table
    let in_col: Vec<(usize, u32)> = netlist
        .inputs
        .iter()
        .map(|b| (tb.inputs.iter().position(|p| p.name == b.port).expect("checked"), b.bit))
        .collect();
    let out_col: Vec<(usize, u32)> = netlist
        .outputs
        .iter()
        .map(|(b, _)| (tb.outputs.iter().position(|p| p.name == b.port).expect("checked"), b.bit))
        .collect();

    let mut rows = Vec::with_capacity(tb.rows.len());
    for chunk in tb.rows.chunks(64) {
        let lanes: Vec<u64> = in_col
            .iter()
            .map(|&(col, bit)| {
                chunk.iter().enumerate().fold(0u64, |acc, (lane, r)| acc | (((r.inputs[col] >> bit) & 1) << lane))
            })
            .collect();
        let out = netlist.eval_lanes(&lanes);
        for (lane, r) in chunk.iter().enumerate() {
            let mut observed = vec![0u64; tb.outputs.len()];
            for (word, &(col, bit)) in out.iter().zip(&out_col) {
                observed[col] |= ((word >> lane) & 1) << bit;
            }
            rows.push(RowResult { pass: observed == r.expected, observed });
        }
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(FunctionalResult { rows, pass })
}

fn check_ports(m: &MiniModule, tb: &VectorTable) -> Result<(), SimError> {
    let side = |dir: Direction, specs: &[PortSpec], label: &str| -> Result<(), SimError> {
        let mut mine: Vec<(&str, u32)> =
            m.ports.iter().filter(|p| p.direction == dir).map(|p| (p.name.as_str(), p.width)).collect();
        let mut theirs: Vec<(&str, u32)> = specs.iter().map(|p| (p.name.as_str(), p.width)).collect();
        mine.sort_unstable();
        theirs.sort_unstable();
        if mine == theirs {
            Ok(())
        } else {
            Err(SimError::PortMismatch(format!("{label}: module has {mine:?}, testbench has {theirs:?}")))
        }
    };
    side(Direction::Input, &tb.inputs, "inputs")?;
    side(Direction::Output, &tb.outputs, "outputs")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn module(src: &str) -> MiniModule {
        parse_mini(src).unwrap_or_else(|e| panic!("{e}\n{src}"))
    }

    const FULL_ADDER_5: &str = "module fa(input a, input b, input cin, output sum, output cout);
  wire p = a ^ b;
  assign sum = p ^ cin;
  assign cout = (a & b) | (cin & p);
endmodule";

    const FULL_ADDER_7: &str = "module fa(input a, input b, input cin, output sum, output cout);
  assign sum = a ^ b ^ cin;
  assign cout = (a & b) | (a & cin) | (b & cin);
endmodule";

    #[test]
    fn parses_and_gate() {
        let m = module("module m(input a, input b, output y); assign y = a & b; endmodule");
        assert_eq!(m.assigns().len(), 1);
        assert_eq!(m.ports().len(), 3);
    }

    #[test]
    fn dangling_operator_is_a_syntax_error() {
        let e = parse_mini("module m(input a, output y); assign y = a +; endmodule").unwrap_err();
        assert_eq!((e.line, e.column), (1, 43));
        assert!(e.message.contains('+'), "{e}");
    }

    #[test]
    fn sequential_logic_is_rejected() {
        let e = parse_mini("module m(input a, output y); always @(posedge clk) y <= a; endmodule").unwrap_err();
        assert!(e.message.contains("always"), "{e}");
    }

    #[test]
    fn truncated_source_is_rejected() {
        assert!(parse_mini("module m(").is_err());
    }

    #[test]
    fn static_checks() {
        let cases = [
            ("module m(input a, output y); assign y = b; endmodule", "not declared"),
            ("module m(input a, output y); assign y = a; assign y = ~a; endmodule", "more than one driver"),
            ("module m(input a, output y, output z); assign y = a; endmodule", "never driven"),
            ("module m(input a, output y); wire t; assign t = y; assign y = t & a; endmodule", "loop"),
            ("module m(input a, output y); assign a = y; assign y = 1'b0; endmodule", "input"),
            ("module m(input [3:0] a, output y); assign y = a[4]; endmodule", "outside"),
            ("module m(input a, output y); assign y = a && a; endmodule", "expected an expression"),
            ("module m(input a, output y); assign y = 1'bx; endmodule", "x/z"),
        ];
        for (src, needle) in cases {
            let e = parse_mini(src).unwrap_err();
            assert!(e.message.contains(needle), "{src}: {e}");
        }
    }

    #[test]
    fn non_ansi_ports_and_bit_level_drivers() {
        let m = module(
            "module m(a, y);
  input [1:0] a;
  output [1:0] y;
  assign y[1] = y[0] ^ a[1];
  assign y[0] = a[0];
endmodule",
        );
        assert_eq!(m.eval_ports(&[0b11]).unwrap(), vec![0b01]);
    }

    #[test]
    fn and_gate_lowers_to_one_gate() {
        let n = elaborate(&module("module m(input a, input b, output y); assign y = a & b; endmodule")).unwrap();
        assert_eq!(n.gate_count(), 1);
        assert_eq!(n.count(GateKind::And2), 1);
    }

    #[test]
    fn full_adder_with_shared_propagate_has_five_gates() {
        let n = elaborate(&module(FULL_ADDER_5)).unwrap();
        assert_eq!((n.count(GateKind::Xor2), n.count(GateKind::And2), n.count(GateKind::Or2)), (2, 2, 1));
        assert_eq!(n.gate_count(), 5);
        let n7 = elaborate(&module(FULL_ADDER_7)).unwrap();
        assert_eq!((n7.count(GateKind::Xor2), n7.count(GateKind::And2), n7.count(GateKind::Or2)), (2, 3, 2));
    }

    #[test]
    fn behavioural_full_adder_matches_the_five_gate_structure() {
        let n = elaborate(&module(
            "module fa(input a, input b, input cin, output sum, output cout); assign {cout, sum} = a + b + cin; endmodule",
        ))
        .unwrap();
        assert_eq!(n.gate_count(), 5);
    }

    #[test]
    fn eight_bit_adder_with_carry_in_is_forty_gates() {
        let n = elaborate(&module(
            "module add8(input [7:0] a, input [7:0] b, input cin, output [7:0] s, output cout);
  assign {cout, s} = a + b + cin;
endmodule",
        ))
        .unwrap();
        assert_eq!(n.gate_count(), 40);
        n.validate().unwrap();
    }

    #[test]
    fn unsized_constant_in_concat_fails_elaboration() {
        let m = module("module m(input a, output [32:0] y); assign y = {a, 5}; endmodule");
        assert!(elaborate(&m).is_err());
        assert!(m.eval_ports(&[1]).is_err());
    }

    #[test]
    fn wide_expressions_fail_elaboration() {
        let m = module("module m(input [40:0] a, input [40:0] b, output [81:0] y); assign y = {a, b}; endmodule");
        assert!(matches!(elaborate(&m), Err(ElaborationError { .. })));
    }

    #[test]
    fn and_module_vectors() {
        let m = module("module m(input a, input b, output y); assign y = a & b; endmodule");
        let ok = VectorTable::parse("ports: in a b -> out y\na=1 b=1 -> y=1").unwrap();
        assert!(simulate_vectors(&m, &ok).unwrap().pass);
        let bad = VectorTable::parse("ports: in a b -> out y\na=1 b=1 -> y=1\na=1 b=0 -> y=1").unwrap();
        let r = simulate_vectors(&m, &bad).unwrap();
        assert!(!r.pass);
        assert_eq!(r.failures().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn port_mismatch_is_reported() {
        let m = module("module m(input a, input b, output y); assign y = a & b; endmodule");
        let tb = VectorTable::parse("ports: in a c -> out y\na=1 c=1 -> y=1").unwrap();
        assert!(matches!(simulate_vectors(&m, &tb), Err(SimError::PortMismatch(_))));
        let tb = VectorTable::parse("ports: in a[2] b -> out y\na=1 b=1 -> y=1").unwrap();
        assert!(matches!(simulate_vectors(&m, &tb), Err(SimError::PortMismatch(_))));
    }

    #[test]
    fn eight_bit_adder_vectors_against_integer_sums() {
        let m = module(
            "module add8(input [7:0] a, input [7:0] b, output [7:0] s, output cout); assign {cout, s} = a + b; endmodule",
        );
        let mut text = String::from("ports: in a[8] b[8] -> out s[8] cout[1]\n");
        let mut x: u32 = 12345;
        let mut cases = vec![(0u32, 0u32), (255, 1), (255, 255), (128, 128)];
        for _ in 0..32 {
            x = x.wrapping_mul(1_103_515_245).wrapping_add(12345);
            cases.push(((x >> 8) & 0xff, (x >> 16) & 0xff));
        }
        for (a, b) in &cases {
            let sum = a + b;
            text.push_str(&format!("a={a} b={b} -> s={} cout={}\n", sum & 0xff, sum >> 8));
        }
        let tb = VectorTable::parse(&text).unwrap();
        assert!(simulate_vectors(&m, &tb).unwrap().pass);
        // corrupt one expectation
        let wrong = text.replace("a=255 b=1 -> s=0 cout=1", "a=255 b=1 -> s=0 cout=0");
        assert!(!simulate_vectors(&m, &VectorTable::parse(&wrong).unwrap()).unwrap().pass);
    }

    #[test]
    fn ppa_examples() {
        let and = elaborate(&module("module m(input a, input b, output y); assign y = a & b; endmodule")).unwrap();
        assert_eq!(estimate_ppa(&and), PpaMetrics::new(0.01, 1.0, 0.01));
        let wire = elaborate(&module("module m(input a, output y); assign y = a; endmodule")).unwrap();
        assert_eq!(estimate_ppa(&wire), PpaMetrics::new(0.01, 0.1, 0.001));
        let fa5 = estimate_ppa(&elaborate(&module(FULL_ADDER_5)).unwrap());
        let fa7 = estimate_ppa(&elaborate(&module(FULL_ADDER_7)).unwrap());
        assert_eq!(fa5.area_um2, 7.0);
        assert_eq!(fa7.area_um2, 9.0);
    }

    #[test]
    fn elaboration_is_deterministic() {
        let src = "module m(input [3:0] a, input [3:0] b, output [7:0] y, output z); assign y = a * b; assign z = a < b; endmodule";
        let a = elaborate(&module(src)).unwrap();
        let b = elaborate(&module(src)).unwrap();
        assert_eq!(a, b);
        assert_eq!(estimate_ppa(&a), estimate_ppa(&b));
    }

    #[test]
    fn operators_agree_with_integer_semantics() {
        let src = "module ops(input [3:0] a, input [2:0] b, input s,
  output [3:0] sh, output [3:0] sr, output [6:0] p, output lt, output ge, output eq, output ne,
  output [3:0] d, output [3:0] c, output [4:0] k);
  assign sh = a << b;
  assign sr = a >> b;
  assign p = a * b;
  assign lt = a < b;
  assign ge = a >= {1'b0, b};
  assign eq = a == 4'd5;
  assign ne = a != b;
  assign d = a - b;
  assign c = s ? a : ~a;
  assign k = {a[1:0], b};
endmodule";
        let m = module(src);
        let n = elaborate(&m).unwrap();
        n.validate().unwrap();
        for a in 0..16u64 {
            for b in 0..8u64 {
                for s in 0..2u64 {
                    let want = vec![
                        (a << b) & 15,
                        a >> b,
                        a * b,
                        u64::from(a < b),
                        u64::from(a >= b),
                        u64::from(a == 5),
                        u64::from(a != b),
                        a.wrapping_sub(b) & 15,
                        if s == 1 { a } else { !a & 15 },
                        ((a & 3) << 3) | b,
                    ];
                    assert_eq!(m.eval_ports(&[a, b, s]).unwrap(), want, "a={a} b={b} s={s}");
                    let mut bits = Vec::new();
                    for (v, w) in [(a, 4), (b, 3), (s, 1)] {
                        bits.extend((0..w).map(|i| (v >> i) & 1 == 1));
                    }
                    let out = n.eval_bits(&bits);
                    let mut got = Vec::new();
                    let mut at = 0;
                    for p in m.outputs() {
                        let mut v = 0u64;
                        for i in 0..p.width {
                            v |= u64::from(out[at]) << i;
                            at += 1;
                        }
                        got.push(v);
                    }
                    assert_eq!(got, want, "netlist a={a} b={b} s={s}");
                }
            }
        }
    }
}
