//! Vector-table testbenches.
//!
//! ```text
//! # 8-bit adder
//! ports: in a[8] b[8] -> out s[8] cout[1]
//! a=0x0F b=0x01 -> s=0x10 cout=0
//! ```
//!
//! Values may be decimal, `0x` hex or `0b` binary and must fit the declared width.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{mask, Direction};
use super::MiniModule;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("vector table line {line}: {message}")]
pub struct VectorTableError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortSpec {
    pub name: String,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorRow {
    /// Values in header order.
    pub inputs: Vec<u64>,
    pub expected: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorTable {
    pub inputs: Vec<PortSpec>,
    pub outputs: Vec<PortSpec>,
    pub rows: Vec<VectorRow>,
}

fn parse_value(text: &str) -> Option<u64> {
    let t: String = text.chars().filter(|&c| c != '_').collect();
    if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(h, 16).ok()
    } else if let Some(b) = t.strip_prefix("0b").or_else(|| t.strip_prefix("0B")) {
        u64::from_str_radix(b, 2).ok()
    } else {
        t.parse().ok()
    }
}

fn parse_port(tok: &str, line: usize) -> Result<PortSpec, VectorTableError> {
    let bad = |m: String| VectorTableError { line, message: m };
    let (name, width) = match tok.split_once('[') {
        Some((n, rest)) => {
            let w = rest
                .strip_suffix(']')
                .and_then(|w| w.parse::<u32>().ok())
                .ok_or_else(|| bad(format!("malformed port width in `{tok}`")))?;
            (n, w)
        }
        None => (tok, 1),
    };
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(bad(format!("malformed port name `{tok}`")));
    }
    if width == 0 || width > 64 {
        return Err(bad(format!("port `{name}` width {width} is outside 1..=64")));
    }
    Ok(PortSpec { name: name.to_string(), width })
}

impl VectorTable {
    pub fn parse(text: &str) -> Result<Self, VectorTableError> {
        let mut header: Option<(Vec<PortSpec>, Vec<PortSpec>)> = None;
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let bad = |m: String| VectorTableError { line: line_no, message: m };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((ins, outs)) = &header else {
                let body = line.strip_prefix("ports:").ok_or_else(|| bad("expected a `ports:` header".into()))?;
                let (lhs, rhs) = body.split_once("->").ok_or_else(|| bad("header is missing `->`".into()))?;
                let mut lt = lhs.split_whitespace();
                let mut rt = rhs.split_whitespace();
                if lt.next() != Some("in") || rt.next() != Some("out") {
                    return Err(bad("header must read `ports: in … -> out …`".into()));
                }
                let ins = lt.map(|t| parse_port(t, line_no)).collect::<Result<Vec<_>, _>>()?;
                let outs = rt.map(|t| parse_port(t, line_no)).collect::<Result<Vec<_>, _>>()?;
                if outs.is_empty() {
                    return Err(bad("header declares no outputs".into()));
                }
                let mut names: Vec<&str> = ins.iter().chain(&outs).map(|p| p.name.as_str()).collect();
                names.sort_unstable();
                if names.windows(2).any(|w| w[0] == w[1]) {
                    return Err(bad("duplicate port in header".into()));
                }
                header = Some((ins, outs));
                continue;
            };
            let (lhs, rhs) = line.split_once("->").ok_or_else(|| bad("row is missing `->`".into()))?;
            let assign = |side: &str, ports: &[PortSpec]| -> Result<Vec<u64>, VectorTableError> {
                let mut vals: HashMap<&str, u64> = HashMap::new();
                for tok in side.split_whitespace() {
                    let (k, v) = tok.split_once('=').ok_or_else(|| bad(format!("expected name=value, got `{tok}`")))?;
                    let port = ports
                        .iter()
                        .find(|p| p.name == k)
                        .ok_or_else(|| bad(format!("`{k}` is not declared on this side of the header")))?;
                    let v = parse_value(v).ok_or_else(|| bad(format!("malformed value `{v}`")))?;
                    if v & !mask(port.width) != 0 {
                        return Err(bad(format!("value {v:#x} does not fit `{k}`[{}]", port.width)));
                    }
                    if vals.insert(k, v).is_some() {
                        return Err(bad(format!("`{k}` assigned twice")));
                    }
                }
                ports
                    .iter()
                    .map(|p| vals.get(p.name.as_str()).copied().ok_or_else(|| bad(format!("`{}` is not assigned", p.name))))
                    .collect()
            };
            rows.push(VectorRow { inputs: assign(lhs, ins)?, expected: assign(rhs, outs)? });
        }
        let (inputs, outputs) = header.ok_or(VectorTableError { line: 0, message: "empty vector table".into() })?;
        Ok(Self { inputs, outputs, rows })
    }

    pub fn case_count(&self) -> usize {
        self.rows.len()
    }

    pub fn to_text(&self) -> String {
        let port = |p: &PortSpec| format!("{}[{}]", p.name, p.width);
        let mut s = format!(
            "ports: in {} -> out {}\n",
            self.inputs.iter().map(port).collect::<Vec<_>>().join(" "),
            self.outputs.iter().map(port).collect::<Vec<_>>().join(" ")
        );
        for r in &self.rows {
            let side = |ports: &[PortSpec], vals: &[u64]| {
                ports.iter().zip(vals).map(|(p, v)| format!("{}={v:#x}", p.name)).collect::<Vec<_>>().join(" ")
            };
            let _ = writeln!(s, "{} -> {}", side(&self.inputs, &r.inputs), side(&self.outputs, &r.expected));
        }
        s
    }

    /// Header built from a module's ports, with no rows.
    pub fn for_module(m: &MiniModule) -> Self {
        let spec = |d: Direction| {
            m.ports()
                .iter()
                .filter(|p| p.direction == d)
                .map(|p| PortSpec { name: p.name.clone(), width: p.width })
                .collect()
        };
        Self { inputs: spec(Direction::Input), outputs: spec(Direction::Output), rows: Vec::new() }
    }

    /// Self-checking Verilog testbench for external simulators. Prints
    /// `FAIL: case N` on any mismatch and `PASS` at the end otherwise.
    pub fn to_verilog_testbench(&self, module_name: &str) -> String {
        let mut s = String::from("`timescale 1ns/1ps\nmodule tb;\n");
        for p in &self.inputs {
            let _ = writeln!(s, "  reg [{}:0] {};", p.width - 1, p.name);
        }
        for p in &self.outputs {
            let _ = writeln!(s, "  wire [{}:0] {};", p.width - 1, p.name);
        }
        let conns: Vec<String> = self.inputs.iter().chain(&self.outputs).map(|p| format!(".{0}({0})", p.name)).collect();
        let _ = writeln!(s, "  {module_name} dut({});", conns.join(", "));
        s.push_str("  integer errors;\n  initial begin\n    errors = 0;\n");
        for (i, r) in self.rows.iter().enumerate() {
            for (p, v) in self.inputs.iter().zip(&r.inputs) {
                let _ = writeln!(s, "    {} = {}'h{v:x};", p.name, p.width);
            }
            s.push_str("    #1;\n");
            let cond: Vec<String> = self
                .outputs
                .iter()
                .zip(&r.expected)
                .map(|(p, v)| format!("{} !== {}'h{v:x}", p.name, p.width))
                .collect();
            let _ = writeln!(
                s,
                "    if ({}) begin $display(\"FAIL: case {i}\"); errors = errors + 1; end",
                cond.join(" || ")
            );
        }
        s.push_str("    if (errors == 0) $display(\"PASS\");\n    $finish;\n  end\nendmodule\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADDER: &str = "# adder\nports: in a[8] b[8] -> out s[8] cout[1]\na=0x0F b=0x01 -> s=0x10 cout=0 # trailing\n\na=255 b=1 -> s=0 cout=1\n";

    #[test]
    fn parses_header_and_rows() {
        let t = VectorTable::parse(ADDER).unwrap();
        assert_eq!(t.inputs, vec![PortSpec { name: "a".into(), width: 8 }, PortSpec { name: "b".into(), width: 8 }]);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1], VectorRow { inputs: vec![255, 1], expected: vec![0, 1] });
    }

    #[test]
    fn rejects_value_wider_than_port() {
        let e = VectorTable::parse("ports: in a[2] -> out y\na=4 -> y=0").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn rejects_missing_port() {
        assert!(VectorTable::parse("ports: in a b -> out y\na=1 -> y=1").is_err());
    }

    #[test]
    fn text_round_trip() {
        let t = VectorTable::parse(ADDER).unwrap();
        assert_eq!(VectorTable::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn verilog_testbench_mentions_every_case() {
        let t = VectorTable::parse(ADDER).unwrap();
        let tb = t.to_verilog_testbench("adder");
        assert!(tb.contains("adder dut(.a(a), .b(b), .s(s), .cout(cout));"));
        assert!(tb.contains("FAIL: case 1"));
    }
}
