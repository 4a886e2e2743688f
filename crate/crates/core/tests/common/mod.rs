//! Random combinational modules with an independent evaluator.
//!
//! The evaluator follows Verilog sizing: operands of context-determined
//! operators are widened to the larger of the context and their own width;
//! comparison operands are sized among themselves; shift amounts, ternary
//! conditions and concatenation items are self-determined.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub enum E {
    Sig(String, u32),
    Bit(String, u32),
    Lit(u64, u32),
    Not(Box<E>),
    Bin(&'static str, Box<E>, Box<E>),
    Shift(&'static str, Box<E>, u32),
    Cmp(&'static str, Box<E>, Box<E>),
    Cond(Box<E>, Box<E>, Box<E>),
    Cat(Vec<E>),
}

pub fn mask(w: u32) -> u64 {
    if w >= 64 {
        u64::MAX
    } else {
        (1u64 << w) - 1
    }
}

impl E {
    pub fn width(&self) -> u32 {
        match self {
            E::Sig(_, w) | E::Lit(_, w) => *w,
            E::Bit(..) | E::Cmp(..) => 1,
            E::Not(a) | E::Shift(_, a, _) => a.width(),
            E::Bin(_, a, b) => a.width().max(b.width()),
            E::Cond(_, a, b) => a.width().max(b.width()),
            E::Cat(items) => items.iter().map(E::width).sum(),
        }
    }

    pub fn render(&self) -> String {
        match self {
            E::Sig(n, _) => n.clone(),
            E::Bit(n, i) => format!("{n}[{i}]"),
            E::Lit(v, w) => format!("{w}'d{v}"),
            E::Not(a) => format!("~({})", a.render()),
            E::Bin(op, a, b) | E::Cmp(op, a, b) => format!("({} {op} {})", a.render(), b.render()),
            E::Shift(op, a, s) => format!("({} {op} {s})", a.render()),
            E::Cond(c, a, b) => format!("({} ? {} : {})", c.render(), a.render(), b.render()),
            E::Cat(items) => format!("{{{}}}", items.iter().map(E::render).collect::<Vec<_>>().join(", ")),
        }
    }

    /// Value of the expression evaluated in a context of `ctx` bits.
    pub fn eval(&self, ctx: u32, env: &dyn Fn(&str) -> u64) -> u64 {
        let w = ctx.max(self.width());
        let m = mask(w);
        match self {
            E::Sig(n, _) => env(n),
            E::Bit(n, i) => (env(n) >> i) & 1,
            E::Lit(v, _) => *v,
            E::Not(a) => !a.eval(w, env) & m,
            E::Bin(op, a, b) => {
                let (x, y) = (a.eval(w, env), b.eval(w, env));
                let r = match *op {
                    "&" => x & y,
                    "|" => x | y,
                    "^" => x ^ y,
                    "+" => x.wrapping_add(y),
                    "-" => x.wrapping_sub(y),
                    "*" => x.wrapping_mul(y),
                    _ => unreachable!(),
                };
                r & m
            }
            E::Shift(op, a, s) => {
                let x = a.eval(w, env);
                let r = match *op {
                    "<<" => x.checked_shl(*s).unwrap_or(0),
                    _ => x.checked_shr(*s).unwrap_or(0),
                };
                r & m
            }
            E::Cmp(op, a, b) => {
                let cw = a.width().max(b.width());
                let (x, y) = (a.eval(cw, env), b.eval(cw, env));
                u64::from(match *op {
                    "==" => x == y,
                    "!=" => x != y,
                    "<" => x < y,
                    ">" => x > y,
                    "<=" => x <= y,
                    _ => x >= y,
                })
            }
            E::Cond(c, a, b) => {
                if c.eval(c.width(), env) != 0 {
                    a.eval(w, env)
                } else {
                    b.eval(w, env)
                }
            }
            E::Cat(items) => items.iter().fold(0, |acc, it| {
                let iw = it.width();
                (acc << iw) | (it.eval(iw, env) & mask(iw))
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomModule {
    pub source: String,
    /// (name, width), in declaration order.
    pub inputs: Vec<(String, u32)>,
    pub outputs: Vec<(String, u32, E)>,
}

impl RandomModule {
    pub fn input_bits(&self) -> u32 {
        self.inputs.iter().map(|i| i.1).sum()
    }

    /// Splits a packed vector (first input in the low bits) into port values.
    pub fn unpack(&self, mut v: u64) -> Vec<u64> {
        self.inputs
            .iter()
            .map(|(_, w)| {
                let x = v & mask(*w);
                v >>= w;
                x
            })
            .collect()
    }

    /// Output values according to the independent evaluator.
    pub fn expected(&self, inputs: &[u64]) -> Vec<u64> {
        let env = |n: &str| self.inputs.iter().zip(inputs).find(|((name, _), _)| name == n).map(|(_, v)| *v).expect("known input");
        self.outputs.iter().map(|(_, w, e)| e.eval(*w, &env) & mask(*w)).collect()
    }
}

fn leaf(rng: &mut impl Rng, inputs: &[(String, u32)]) -> E {
    let (n, w) = inputs.choose(rng).expect("inputs").clone();
    match rng.gen_range(0..6) {
        0 => {
            let lw = rng.gen_range(1..=6);
            E::Lit(rng.gen_range(0..=mask(lw)), lw)
        }
        1 if w > 1 => E::Bit(n, rng.gen_range(0..w)),
        _ => E::Sig(n, w),
    }
}

fn expr(rng: &mut impl Rng, inputs: &[(String, u32)], depth: u32) -> E {
    if depth == 0 || rng.gen_bool(0.25) {
        return leaf(rng, inputs);
    }
    let sub = |rng: &mut _| Box::new(expr(rng, inputs, depth - 1));
    match rng.gen_range(0..10) {
        0 => E::Not(sub(rng)),
        1..=4 => {
            let op = *["&", "|", "^", "+", "-", "*"].choose(rng).unwrap();
            E::Bin(op, sub(rng), sub(rng))
        }
        5 => E::Shift(*["<<", ">>"].choose(rng).unwrap(), sub(rng), rng.gen_range(0..4)),
        6 => E::Cmp(*["==", "!=", "<", ">", "<=", ">="].choose(rng).unwrap(), sub(rng), sub(rng)),
        7 | 8 => E::Cond(sub(rng), sub(rng), sub(rng)),
        _ => E::Cat(vec![expr(rng, inputs, depth - 1), expr(rng, inputs, depth - 1)]),
    }
}

/// A module with at most `max_bits` input bits and one to three outputs.
pub fn random_module(rng: &mut impl Rng, index: usize, max_bits: u32) -> RandomModule {
    let mut inputs = Vec::new();
    let mut bits = 0;
    let names = ["a", "b", "c", "d"];
    for name in names.iter().take(rng.gen_range(1..=4)) {
        let left = max_bits - bits;
        if left == 0 {
            break;
        }
        let w = rng.gen_range(1..=left.min(5));
        inputs.push((name.to_string(), w));
        bits += w;
    }
    let outputs: Vec<(String, u32, E)> = (0..rng.gen_range(1..=3))
        .map(|i| {
            let e = expr(rng, &inputs, 3);
            (format!("y{i}"), rng.gen_range(1..=10), e)
        })
        .collect();
    let decl = |(n, w): (&str, u32), dir: &str| if w == 1 { format!("{dir} {n}") } else { format!("{dir} [{}:0] {n}", w - 1) };
    let mut ports: Vec<String> = inputs.iter().map(|(n, w)| decl((n, *w), "input")).collect();
    ports.extend(outputs.iter().map(|(n, w, _)| decl((n, *w), "output")));
    let mut source = format!("module r{index}({});\n", ports.join(", "));
    for (n, _, e) in &outputs {
        source.push_str(&format!("  assign {n} = {};\n", e.render()));
    }
    source.push_str("endmodule\n");
    RandomModule { source, inputs, outputs }
}
