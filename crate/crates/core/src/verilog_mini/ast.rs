//! Syntax tree for the combinational subset plus a direct integer evaluator.
//!
//! Width rules follow Verilog's unsigned context-determined sizing: an
//! assignment is evaluated at `max(lhs width, expression width)`, arithmetic
//! and bitwise operands are zero-extended to that context, comparisons size
//! their operands against each other, shift amounts and ternary conditions
//! are self-determined, and unsized literals are 32 bits wide.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ElaborationError;

/// Widest signal or expression the evaluator and the gate lowering accept.
pub const MAX_WIDTH: u32 = 64;
/// Width Verilog assigns to unsized literals.
pub const UNSIZED_WIDTH: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
    pub width: u32,
    /// Index of the least significant bit in the declared range.
    pub lsb: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Net {
    pub name: String,
    pub width: u32,
    pub lsb: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Select {
    Whole,
    Bit(u32),
    /// `[msb:lsb]` in declared index space.
    Range(u32, u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignalRef {
    pub name: String,
    pub select: Select,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Literal {
    pub value: u64,
    /// `None` for unsized literals.
    pub width: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    And,
    Or,
    Xor,
    Add,
    Sub,
    Mul,
    Shl,
    Shr,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl BinaryOp {
    pub fn is_comparison(self) -> bool {
        matches!(self, Self::Eq | Self::Ne | Self::Lt | Self::Gt | Self::Le | Self::Ge)
    }

    pub fn is_shift(self) -> bool {
        matches!(self, Self::Shl | Self::Shr)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::And => "&",
            Self::Or => "|",
            Self::Xor => "^",
            Self::Add => "+",
            Self::Sub => "-",
            Self::Mul => "*",
            Self::Shl => "<<",
            Self::Shr => ">>",
            Self::Eq => "==",
            Self::Ne => "!=",
            Self::Lt => "<",
            Self::Gt => ">",
            Self::Le => "<=",
            Self::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Ref(SignalRef),
    Const(Literal),
    Not(Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
    Concat(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assign {
    /// Concatenation parts, most significant first. A plain target has one part.
    pub target: Vec<SignalRef>,
    pub expr: Expr,
    pub pos: Pos,
}

/// Width and declared lsb of every port and net.
#[derive(Debug, Clone, Default)]
pub(crate) struct Symbols {
    map: HashMap<String, (u32, u32)>,
}

impl Symbols {
    pub(crate) fn insert(&mut self, name: &str, width: u32, lsb: u32) {
        self.map.insert(name.to_string(), (width, lsb));
    }

    pub(crate) fn get(&self, name: &str) -> Option<(u32, u32)> {
        self.map.get(name).copied()
    }

    /// Bit offsets (LSB first) that a reference covers.
    pub(crate) fn offsets(&self, r: &SignalRef) -> std::ops::Range<u32> {
        let (width, lsb) = self.map[&r.name];
        match r.select {
            Select::Whole => 0..width,
            Select::Bit(i) => (i - lsb)..(i - lsb + 1),
            Select::Range(m, l) => (l - lsb)..(m - lsb + 1),
        }
    }

    pub(crate) fn ref_width(&self, r: &SignalRef) -> u32 {
        let o = self.offsets(r);
        o.end - o.start
    }
}

/// Self-determined width of an expression.
pub(crate) fn self_width(e: &Expr, syms: &Symbols) -> u32 {
    match e {
        Expr::Ref(r) => syms.ref_width(r),
        Expr::Const(l) => l.width.unwrap_or(UNSIZED_WIDTH),
        Expr::Not(x) => self_width(x, syms),
        Expr::Binary(op, l, r) => {
            if op.is_comparison() {
                1
            } else if op.is_shift() {
                self_width(l, syms)
            } else {
                self_width(l, syms).max(self_width(r, syms))
            }
        }
        Expr::Cond(_, t, f) => self_width(t, syms).max(self_width(f, syms)),
        Expr::Concat(parts) => parts.iter().map(|p| self_width(p, syms)).sum(),
    }
}

pub(crate) fn check_width(width: u32) -> Result<u32, ElaborationError> {
    if width > MAX_WIDTH {
        Err(ElaborationError::new(format!(
            "expression width {width} exceeds the supported {MAX_WIDTH} bits"
        )))
    } else {
        Ok(width)
    }
}

pub(crate) fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Evaluates `e` at context width `ctx` given whole-signal values (offset 0 = lsb).
pub(crate) fn eval_expr(
    e: &Expr,
    ctx: u32,
    syms: &Symbols,
    values: &HashMap<String, u64>,
) -> Result<u64, ElaborationError> {
    check_width(ctx)?;
    let m = mask(ctx);
    Ok(match e {
        Expr::Ref(r) => {
            let v = values[&r.name];
            let o = syms.offsets(r);
            (v >> o.start) & mask(o.end - o.start)
        }
        Expr::Const(l) => l.value & mask(l.width.unwrap_or(UNSIZED_WIDTH)) & m,
        Expr::Not(x) => !eval_expr(x, ctx, syms, values)? & m,
        Expr::Binary(op, l, r) => {
            if op.is_comparison() {
                let w = check_width(self_width(l, syms).max(self_width(r, syms)))?;
                let a = eval_expr(l, w, syms, values)?;
                let b = eval_expr(r, w, syms, values)?;
                let t = match op {
                    BinaryOp::Eq => a == b,
                    BinaryOp::Ne => a != b,
                    BinaryOp::Lt => a < b,
                    BinaryOp::Gt => a > b,
                    BinaryOp::Le => a <= b,
                    BinaryOp::Ge => a >= b,
                    _ => unreachable!(),
                };
                u64::from(t)
            } else if op.is_shift() {
                let a = eval_expr(l, ctx, syms, values)?;
                let amount = eval_expr(r, check_width(self_width(r, syms))?, syms, values)?;
                if amount >= 64 {
                    0
                } else if *op == BinaryOp::Shl {
                    (a << amount) & m
                } else {
                    a >> amount
                }
            } else {
                let a = eval_expr(l, ctx, syms, values)?;
                let b = eval_expr(r, ctx, syms, values)?;
                let v = match op {
                    BinaryOp::And => a & b,
                    BinaryOp::Or => a | b,
                    BinaryOp::Xor => a ^ b,
                    BinaryOp::Add => a.wrapping_add(b),
                    BinaryOp::Sub => a.wrapping_sub(b),
                    BinaryOp::Mul => a.wrapping_mul(b),
                    _ => unreachable!(),
                };
                v & m
            }
        }
        Expr::Cond(c, t, f) => {
            let cond = eval_expr(c, check_width(self_width(c, syms))?, syms, values)?;
            eval_expr(if cond != 0 { t } else { f }, ctx, syms, values)?
        }
        Expr::Concat(parts) => {
            let mut acc: u128 = 0;
            for p in parts {
                if matches!(p, Expr::Const(Literal { width: None, .. })) {
                    return Err(ElaborationError::new("unsized constant in concatenation"));
                }
                let w = check_width(self_width(p, syms))?;
                acc = (acc << w) | u128::from(eval_expr(p, w, syms, values)?);
            }
            (acc as u64) & m
        }
    })
}
