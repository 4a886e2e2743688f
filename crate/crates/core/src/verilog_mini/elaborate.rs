//! Lowering of a checked [`MiniModule`] to a [`GateNetlist`].
//!
//! * `+`/`-`: ripple-carry full adders; `a - b` is `a + ~b + 1`. In an
//!   addition chain of three or more terms, the last one-bit term becomes the
//!   carry-in of the first adder.
//! * `*`: array multiplier (AND partial products summed by ripple adders).
//! * shifts: one 2:1 mux stage per shift-amount bit.
//! * `<`, `>`, `<=`, `>=`: subtract and inspect the carry out.
//! * `==`, `!=`: per-bit XOR, inverted, reduced by an AND tree.
//! * `?:`: per-bit 2:1 mux on the OR-reduced condition.

use std::collections::HashMap;

use super::ast::{self, BinaryOp, Direction, Expr, Literal, SignalRef};
use super::netlist::{BitName, GateNetlist, NetlistBuilder, Sig};
use super::{ElaborationError, MiniModule};

pub(crate) fn elaborate(m: &MiniModule) -> Result<GateNetlist, ElaborationError> {
    for p in &m.ports {
        ast::check_width(p.width)?;
    }
    for n in &m.nets {
        ast::check_width(n.width)?;
    }

    let mut lower = Lowering { m, b: NetlistBuilder::default(), bits: HashMap::new() };
    for p in m.ports.iter().filter(|p| p.direction == Direction::Input) {
        let mut sigs = Vec::with_capacity(p.width as usize);
        for bit in 0..p.width {
            sigs.push(Some(Sig::Input(lower.b.netlist.inputs.len() as u32)));
            lower.b.netlist.inputs.push(BitName { port: p.name.clone(), bit });
        }
        lower.bits.insert(p.name.clone(), sigs);
    }
    for p in m.ports.iter().filter(|p| p.direction == Direction::Output) {
        lower.bits.insert(p.name.clone(), vec![None; p.width as usize]);
    }
    for n in &m.nets {
        lower.bits.insert(n.name.clone(), vec![None; n.width as usize]);
    }

    for &ai in &m.order {
        let a = &m.assigns[ai];
        lower.b.begin_scope();
        let lhs_width: u32 = a.target.iter().map(|t| m.syms.ref_width(t)).sum();
        let ctx = ast::check_width(lhs_width.max(ast::self_width(&a.expr, &m.syms)))?;
        let value = lower.expr(&a.expr, ctx)?;
        let mut at = 0usize;
        for t in a.target.iter().rev() {
            let offsets = m.syms.offsets(t);
            let slot = lower.bits.get_mut(&t.name).expect("checked target");
            for off in offsets {
                slot[off as usize] = Some(value[at]);
                at += 1;
            }
        }
    }

    for p in m.ports.iter().filter(|p| p.direction == Direction::Output) {
        for (bit, s) in lower.bits[&p.name].iter().enumerate() {
            let s = s.expect("every output bit is driven");
            lower.b.netlist.outputs.push((BitName { port: p.name.clone(), bit: bit as u32 }, s));
        }
    }
    Ok(lower.b.finish())
}

struct Lowering<'a> {
    m: &'a MiniModule,
    b: NetlistBuilder,
    bits: HashMap<String, Vec<Option<Sig>>>,
}

impl Lowering<'_> {
    fn width(&self, e: &Expr) -> u32 {
        ast::self_width(e, &self.m.syms)
    }

    fn signal(&self, r: &SignalRef) -> Vec<Sig> {
        let slot = &self.bits[&r.name];
        self.m
            .syms
            .offsets(r)
            .map(|o| slot[o as usize].expect("assigns are lowered in dependency order"))
            .collect()
    }

    fn extend(mut v: Vec<Sig>, ctx: u32) -> Vec<Sig> {
        v.resize(ctx as usize, Sig::Const(false));
        v
    }

    /// Lowers `e` to exactly `ctx` bits, LSB first.
    fn expr(&mut self, e: &Expr, ctx: u32) -> Result<Vec<Sig>, ElaborationError> {
        ast::check_width(ctx)?;
        Ok(match e {
            Expr::Ref(r) => {
                let mut v = self.signal(r);
                v.truncate(ctx as usize);
                Self::extend(v, ctx)
            }
            Expr::Const(l) => const_bits(l, ctx),
            Expr::Not(x) => {
                let v = self.expr(x, ctx)?;
                v.into_iter().map(|s| self.b.not(s)).collect()
            }
            Expr::Binary(op, l, r) => self.binary(*op, l, r, ctx)?,
            Expr::Cond(c, t, f) => {
                let cw = ast::check_width(self.width(c))?;
                let cond = self.expr(c, cw)?;
                let sel = self.b.or_tree(&cond);
                let tv = self.expr(t, ctx)?;
                let fv = self.expr(f, ctx)?;
                tv.into_iter().zip(fv).map(|(x, y)| self.b.mux(sel, x, y)).collect()
            }
            Expr::Concat(parts) => {
                let mut v = Vec::new();
                for p in parts.iter().rev() {
                    if matches!(p, Expr::Const(Literal { width: None, .. })) {
                        return Err(ElaborationError::new("unsized constant in concatenation"));
                    }
                    let w = ast::check_width(self.width(p))?;
                    v.extend(self.expr(p, w)?);
                }
                v.truncate(ctx as usize);
                Self::extend(v, ctx)
            }
        })
    }

    fn binary(&mut self, op: BinaryOp, l: &Expr, r: &Expr, ctx: u32) -> Result<Vec<Sig>, ElaborationError> {
        if op.is_comparison() {
            let w = ast::check_width(self.width(l).max(self.width(r)))?;
            let a = self.expr(l, w)?;
            let b = self.expr(r, w)?;
            let bit = match op {
                BinaryOp::Eq => self.equal(&a, &b),
                BinaryOp::Ne => {
                    let eq = self.equal(&a, &b);
                    self.b.not(eq)
                }
                BinaryOp::Lt => self.less(&a, &b),
                BinaryOp::Gt => self.less(&b, &a),
                BinaryOp::Le => {
                    let gt = self.less(&b, &a);
                    self.b.not(gt)
                }
                BinaryOp::Ge => {
                    let lt = self.less(&a, &b);
                    self.b.not(lt)
                }
                _ => unreachable!(),
            };
            return Ok(Self::extend(vec![bit], ctx));
        }
        if op.is_shift() {
            let value = self.expr(l, ctx)?;
            let aw = ast::check_width(self.width(r))?;
            let amount = self.expr(r, aw)?;
            return Ok(self.shift(value, &amount, op == BinaryOp::Shl));
        }
        match op {
            BinaryOp::Add => self.add_chain(l, r, ctx),
            BinaryOp::Sub => {
                let a = self.expr(l, ctx)?;
                let b = self.expr(r, ctx)?;
                let nb: Vec<Sig> = b.into_iter().map(|s| self.b.not(s)).collect();
                Ok(self.b.ripple_add(&a, &nb, Sig::Const(true)).0)
            }
            BinaryOp::Mul => {
                let a = self.expr(l, ctx)?;
                let b = self.expr(r, ctx)?;
                Ok(self.multiply(&a, &b))
            }
            BinaryOp::And | BinaryOp::Or | BinaryOp::Xor => {
                let a = self.expr(l, ctx)?;
                let b = self.expr(r, ctx)?;
                Ok(a.into_iter()
                    .zip(b)
                    .map(|(x, y)| match op {
                        BinaryOp::And => self.b.and(x, y),
                        BinaryOp::Or => self.b.or(x, y),
                        _ => self.b.xor(x, y),
                    })
                    .collect())
            }
            _ => unreachable!(),
        }
    }

    fn add_chain(&mut self, l: &Expr, r: &Expr, ctx: u32) -> Result<Vec<Sig>, ElaborationError> {
        let mut terms = Vec::new();
        flatten_add(l, &mut terms);
        flatten_add(r, &mut terms);
        let mut carry_in = Sig::Const(false);
        if terms.len() >= 3 {
            if let Some(i) = terms.iter().rposition(|t| self.width(t) == 1) {
                let t = terms.remove(i);
                carry_in = self.expr(t, 1)?[0];
            }
        }
        let mut acc = self.expr(terms[0], ctx)?;
        for (k, t) in terms[1..].iter().enumerate() {
            let v = self.expr(t, ctx)?;
            let cin = if k == 0 { carry_in } else { Sig::Const(false) };
            acc = self.b.ripple_add(&acc, &v, cin).0;
        }
        Ok(acc)
    }

    fn equal(&mut self, a: &[Sig], b: &[Sig]) -> Sig {
        let same: Vec<Sig> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| {
                let d = self.b.xor(x, y);
                self.b.not(d)
            })
            .collect();
        self.b.and_tree(&same)
    }

    /// Unsigned `a < b`: no carry out of `a + ~b + 1`.
    fn less(&mut self, a: &[Sig], b: &[Sig]) -> Sig {
        let nb: Vec<Sig> = b.iter().map(|&s| self.b.not(s)).collect();
        let (_, carry) = self.b.ripple_add(a, &nb, Sig::Const(true));
        self.b.not(carry)
    }

    fn shift(&mut self, mut value: Vec<Sig>, amount: &[Sig], left: bool) -> Vec<Sig> {
        let w = value.len();
        for (k, &sel) in amount.iter().enumerate() {
            let dist = 1usize.checked_shl(k as u32).unwrap_or(usize::MAX);
            let shifted: Vec<Sig> = (0..w)
                .map(|i| {
                    let src = if left { i.checked_sub(dist) } else { i.checked_add(dist).filter(|&s| s < w) };
                    src.map_or(Sig::Const(false), |s| value[s])
                })
                .collect();
            value = value.iter().zip(shifted).map(|(&keep, moved)| self.b.mux(sel, moved, keep)).collect();
        }
        value
    }

    fn multiply(&mut self, a: &[Sig], b: &[Sig]) -> Vec<Sig> {
        let w = a.len();
        let mut acc = vec![Sig::Const(false); w];
        for (j, &bj) in b.iter().enumerate() {
            let mut pp = vec![Sig::Const(false); w];
            for i in 0..w.saturating_sub(j) {
                pp[i + j] = self.b.and(a[i], bj);
            }
            if pp.iter().all(|s| *s == Sig::Const(false)) {
                continue;
            }
            acc = self.b.ripple_add(&acc, &pp, Sig::Const(false)).0;
        }
        acc
    }
}

fn flatten_add<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match e {
        Expr::Binary(BinaryOp::Add, l, r) => {
            flatten_add(l, out);
            flatten_add(r, out);
        }
        other => out.push(other),
    }
}

fn const_bits(l: &Literal, ctx: u32) -> Vec<Sig> {
    let w = l.width.unwrap_or(ast::UNSIZED_WIDTH);
    let v = l.value & ast::mask(w);
    (0..ctx).map(|i| Sig::Const(i < 64 && (v >> i) & 1 == 1)).collect()
}
