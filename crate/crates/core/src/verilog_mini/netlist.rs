//! Two-input gate netlists.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    Not,
    And2,
    Or2,
    Xor2,
}

/// A single-bit signal: a constant, a primary input bit or a gate output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sig {
    Const(bool),
    Input(u32),
    Gate(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    /// Second fanin is ignored for `Not`.
    pub fanin: [Sig; 2],
}

impl Gate {
    pub fn inputs(&self) -> &[Sig] {
        match self.kind {
            GateKind::Not => &self.fanin[..1],
            _ => &self.fanin[..],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitName {
    pub port: String,
    pub bit: u32,
}

/// Gates are stored in topological order: every fanin of gate `i` is a
/// constant, an input, or a gate with index `< i`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateNetlist {
    pub inputs: Vec<BitName>,
    pub outputs: Vec<(BitName, Sig)>,
    pub gates: Vec<Gate>,
}

impl GateNetlist {
    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn count(&self, kind: GateKind) -> usize {
        self.gates.iter().filter(|g| g.kind == kind).count()
    }

    /// Appends a gate; its fanins must already exist.
    pub fn push_gate(&mut self, kind: GateKind, a: Sig, b: Sig) -> Sig {
        self.gates.push(Gate { kind, fanin: [a, b] });
        Sig::Gate((self.gates.len() - 1) as u32)
    }

    /// Checks topological ordering and that every reference is in range.
    pub fn validate(&self) -> Result<(), String> {
        let ok = |s: Sig, limit: usize| match s {
            Sig::Const(_) => true,
            Sig::Input(i) => (i as usize) < self.inputs.len(),
            Sig::Gate(g) => (g as usize) < limit,
        };
        for (i, g) in self.gates.iter().enumerate() {
            if let Some(bad) = g.inputs().iter().find(|s| !ok(**s, i)) {
                return Err(format!("gate {i} has fanin {bad:?} that does not precede it"));
            }
        }
        for (name, s) in &self.outputs {
            if !ok(*s, self.gates.len()) {
                return Err(format!("output {}[{}] refers to missing {s:?}", name.port, name.bit));
            }
        }
        Ok(())
    }

    /// Evaluates 64 input vectors at once. `inputs[i]` holds lane bits of input bit `i`.
    pub fn eval_lanes(&self, inputs: &[u64]) -> Vec<u64> {
        assert_eq!(inputs.len(), self.inputs.len(), "one lane word per input bit");
        let mut values = vec![0u64; self.gates.len()];
        let get = |s: Sig, values: &[u64]| match s {
            Sig::Const(false) => 0,
            Sig::Const(true) => u64::MAX,
            Sig::Input(i) => inputs[i as usize],
            Sig::Gate(g) => values[g as usize],
        };
        for (i, g) in self.gates.iter().enumerate() {
            let a = get(g.fanin[0], &values);
            values[i] = match g.kind {
                GateKind::Not => !a,
                GateKind::And2 => a & get(g.fanin[1], &values),
                GateKind::Or2 => a | get(g.fanin[1], &values),
                GateKind::Xor2 => a ^ get(g.fanin[1], &values),
            };
        }
        self.outputs.iter().map(|(_, s)| get(*s, &values)).collect()
    }

    /// Single-vector convenience wrapper around [`Self::eval_lanes`].
    pub fn eval_bits(&self, inputs: &[bool]) -> Vec<bool> {
        let lanes: Vec<u64> = inputs.iter().map(|&b| if b { 1 } else { 0 }).collect();
        self.eval_lanes(&lanes).into_iter().map(|w| w & 1 == 1).collect()
    }
}

/// Builds a netlist with constant folding and structural hashing. The hash
/// table is scoped: [`NetlistBuilder::begin_scope`] forgets earlier entries so
/// sharing stays within one assign.
#[derive(Debug, Default)]
pub(crate) struct NetlistBuilder {
    pub(crate) netlist: GateNetlist,
    shared: HashMap<(GateKind, Sig, Sig), Sig>,
}

impl NetlistBuilder {
    pub(crate) fn begin_scope(&mut self) {
        self.shared.clear();
    }

    fn gate(&mut self, kind: GateKind, a: Sig, b: Sig) -> Sig {
        // commutative gates get a canonical operand order
        let (a, b) = if kind != GateKind::Not && b < a { (b, a) } else { (a, b) };
        let key = (kind, a, b);
        if let Some(&s) = self.shared.get(&key) {
            return s;
        }
        let s = self.netlist.push_gate(kind, a, b);
        self.shared.insert(key, s);
        s
    }

    pub(crate) fn not(&mut self, a: Sig) -> Sig {
        match a {
            Sig::Const(v) => Sig::Const(!v),
            Sig::Gate(g) if self.netlist.gates[g as usize].kind == GateKind::Not => {
                self.netlist.gates[g as usize].fanin[0]
            }
            _ => self.gate(GateKind::Not, a, Sig::Const(false)),
        }
    }

    pub(crate) fn and(&mut self, a: Sig, b: Sig) -> Sig {
        match (a, b) {
            (Sig::Const(false), _) | (_, Sig::Const(false)) => Sig::Const(false),
            (Sig::Const(true), x) | (x, Sig::Const(true)) => x,
            _ if a == b => a,
            _ => self.gate(GateKind::And2, a, b),
        }
    }

    pub(crate) fn or(&mut self, a: Sig, b: Sig) -> Sig {
        match (a, b) {
            (Sig::Const(true), _) | (_, Sig::Const(true)) => Sig::Const(true),
            (Sig::Const(false), x) | (x, Sig::Const(false)) => x,
            _ if a == b => a,
            _ => self.gate(GateKind::Or2, a, b),
        }
    }

    pub(crate) fn xor(&mut self, a: Sig, b: Sig) -> Sig {
        match (a, b) {
            (Sig::Const(false), x) | (x, Sig::Const(false)) => x,
            (Sig::Const(true), x) | (x, Sig::Const(true)) => self.not(x),
            _ if a == b => Sig::Const(false),
            _ => self.gate(GateKind::Xor2, a, b),
        }
    }

    /// `sel ? when_true : when_false` as (sel & t) | (~sel & f).
    pub(crate) fn mux(&mut self, sel: Sig, when_true: Sig, when_false: Sig) -> Sig {
        if let Sig::Const(v) = sel {
            return if v { when_true } else { when_false };
        }
        if when_true == when_false {
            return when_true;
        }
        let t = self.and(sel, when_true);
        let ns = self.not(sel);
        let f = self.and(ns, when_false);
        self.or(t, f)
    }

    /// Full adder with the propagate term shared between sum and carry.
    pub(crate) fn full_add(&mut self, a: Sig, b: Sig, c: Sig) -> (Sig, Sig) {
        let p = self.xor(a, b);
        let sum = self.xor(p, c);
        let g = self.and(a, b);
        let t = self.and(c, p);
        (sum, self.or(g, t))
    }

    /// Ripple-carry addition of equal-width vectors (LSB first).
    pub(crate) fn ripple_add(&mut self, a: &[Sig], b: &[Sig], carry_in: Sig) -> (Vec<Sig>, Sig) {
        debug_assert_eq!(a.len(), b.len());
        let mut carry = carry_in;
        let mut sum = Vec::with_capacity(a.len());
        for (&x, &y) in a.iter().zip(b) {
            let (s, c) = self.full_add(x, y, carry);
            sum.push(s);
            carry = c;
        }
        (sum, carry)
    }

    pub(crate) fn and_tree(&mut self, bits: &[Sig]) -> Sig {
        self.tree(bits, Sig::Const(true), Self::and)
    }

    pub(crate) fn or_tree(&mut self, bits: &[Sig]) -> Sig {
        self.tree(bits, Sig::Const(false), Self::or)
    }

    fn tree(&mut self, bits: &[Sig], identity: Sig, op: fn(&mut Self, Sig, Sig) -> Sig) -> Sig {
        match bits.len() {
            0 => identity,
            1 => bits[0],
            n => {
                let (l, r) = bits.split_at(n / 2);
                let l = self.tree(l, identity, op);
                let r = self.tree(r, identity, op);
                op(self, l, r)
            }
        }
    }

    /// Drops gates that no output depends on, keeping topological order.
    pub(crate) fn finish(self) -> GateNetlist {
        let mut n = self.netlist;
        let mut live = vec![false; n.gates.len()];
        for (_, s) in &n.outputs {
            if let Sig::Gate(g) = s {
                live[*g as usize] = true;
            }
        }
        for i in (0..n.gates.len()).rev() {
            if live[i] {
                for s in n.gates[i].inputs() {
                    if let Sig::Gate(g) = s {
                        live[*g as usize] = true;
                    }
                }
            }
        }
        let mut remap = vec![u32::MAX; n.gates.len()];
        let mut kept = Vec::new();
        let fix = |s: Sig, remap: &[u32]| match s {
            Sig::Gate(g) => Sig::Gate(remap[g as usize]),
            other => other,
        };
        for (i, g) in n.gates.iter().enumerate() {
            if live[i] {
                remap[i] = kept.len() as u32;
                kept.push(Gate { kind: g.kind, fanin: [fix(g.fanin[0], &remap), fix(g.fanin[1], &remap)] });
            }
        }
        for (_, s) in n.outputs.iter_mut() {
            *s = fix(*s, &remap);
        }
        n.gates = kept;
        n
    }
}
