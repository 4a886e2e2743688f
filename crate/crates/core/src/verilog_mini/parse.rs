//! Lexer, recursive-descent parser and static checks for the mini subset.

use std::collections::{HashMap, HashSet, VecDeque};

use super::ast::{Assign, BinaryOp, Direction, Expr, Literal, Net, Pos, Port, Select, SignalRef, Symbols};
use super::{MiniModule, SyntaxError};

/// Declared ranges wider than this are rejected outright.
const MAX_DECLARED_WIDTH: u32 = 4096;

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "always", "always_comb", "always_ff", "initial", "reg", "integer", "parameter", "localparam", "genvar",
    "generate", "endgenerate", "function", "endfunction", "task", "endtask", "posedge", "negedge", "begin",
    "end", "if", "else", "case", "casez", "casex", "endcase", "for", "while", "inout", "logic", "signed",
    "supply0", "supply1", "tri", "defparam", "fork", "join", "real", "time",
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(Literal),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
}

const SYMBOLS: &[&str] = &[
    "<<", ">>", "==", "!=", "<=", ">=", "~", "&", "|", "^", "+", "-", "*", "<", ">", "?", ":", "{", "}", "(", ")",
    "[", "]", ";", ",", "=", "#", "@", "!", "/", "%", ".",
];

fn err(pos: Pos, message: impl Into<String>) -> SyntaxError {
    SyntaxError { line: pos.line, column: pos.column, message: message.into() }
}

fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let mut at_line_start = true;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
                at_line_start = true;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            bump!();
            bump!();
            loop {
                if i >= chars.len() {
                    return Err(err(pos, "unterminated block comment"));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
            continue;
        }
        if c == '`' {
            // compiler directives such as `timescale are ignored to end of line
            if !at_line_start {
                return Err(err(pos, "macro usage is outside the supported subset"));
            }
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        at_line_start = false;
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                bump!();
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), pos });
            continue;
        }
        if c == '\\' {
            return Err(err(pos, "escaped identifiers are not supported"));
        }
        if c.is_ascii_digit() || c == '\'' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                bump!();
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Token { tok: Tok::Number(parse_number(&text, pos)?), pos });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let sym = SYMBOLS.iter().find(|s| rest.starts_with(*s));
        match sym {
            Some(s) => {
                for _ in 0..s.len() {
                    bump!();
                }
                out.push(Token { tok: Tok::Sym(s), pos });
            }
            None => return Err(err(pos, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, column: col } });
    Ok(out)
}

fn parse_number(text: &str, pos: Pos) -> Result<Literal, SyntaxError> {
    let clean: String = text.chars().filter(|&c| c != '_').collect();
    let Some(tick) = clean.find('\'') else {
        let value = clean
            .parse::<u64>()
            .map_err(|_| err(pos, format!("malformed decimal literal `{text}`")))?;
        return Ok(Literal { value, width: None });
    };
    let width = if tick == 0 {
        None
    } else {
        let w: u32 = clean[..tick]
            .parse()
            .map_err(|_| err(pos, format!("malformed literal size in `{text}`")))?;
        if w == 0 || w > 64 {
            return Err(err(pos, format!("literal size {w} is outside 1..=64")));
        }
        Some(w)
    };
    let mut rest = clean[tick + 1..].chars();
    let radix = match rest.next().map(|c| c.to_ascii_lowercase()) {
        Some('b') => 2,
        Some('o') => 8,
        Some('d') => 10,
        Some('h') => 16,
        Some('s') => return Err(err(pos, "signed literals are not supported")),
        _ => return Err(err(pos, format!("malformed based literal `{text}`"))),
    };
    let digits: String = rest.collect();
    if digits.chars().any(|c| matches!(c.to_ascii_lowercase(), 'x' | 'z' | '?')) {
        return Err(err(pos, "x/z literal values are not supported"));
    }
    if digits.is_empty() {
        return Err(err(pos, format!("literal `{text}` has no digits")));
    }
    let value =
        u64::from_str_radix(&digits, radix).map_err(|_| err(pos, format!("malformed based literal `{text}`")))?;
    let value = match width {
        Some(w) if w < 64 => value & ((1u64 << w) - 1),
        _ => value,
    };
    Ok(Literal { value, width })
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
}

struct Decl {
    name: String,
    width: u32,
    lsb: u32,
    pos: Pos,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), SyntaxError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected `{s}`")))
        }
    }

    fn unexpected(&self, what: &str) -> SyntaxError {
        let found = match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(_) => "number".to_string(),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        };
        err(self.pos(), format!("{what}, found {found}"))
    }

    fn ident(&mut self) -> Result<(String, Pos), SyntaxError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(name) => {
                if let Some(kw) = UNSUPPORTED_KEYWORDS.iter().find(|k| **k == name) {
                    return Err(unsupported(pos, kw));
                }
                if is_reserved(&name) {
                    return Err(err(pos, format!("expected identifier, found keyword `{name}`")));
                }
                self.next();
                Ok((name, pos))
            }
            _ => Err(self.unexpected("expected identifier")),
        }
    }

    fn const_index(&mut self) -> Result<u32, SyntaxError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Number(l) => {
                self.next();
                u32::try_from(l.value).map_err(|_| err(pos, "index too large"))
            }
            _ => Err(self.unexpected("expected a constant index")),
        }
    }

    /// Optional `[msb:lsb]`, returning (width, lsb).
    fn range(&mut self) -> Result<(u32, u32), SyntaxError> {
        if !self.is_sym("[") {
            return Ok((1, 0));
        }
        let pos = self.pos();
        self.next();
        let msb = self.const_index()?;
        self.expect_sym(":")?;
        let lsb = self.const_index()?;
        self.expect_sym("]")?;
        if msb < lsb {
            return Err(err(pos, "ascending ranges are not supported"));
        }
        let width = msb - lsb + 1;
        if width > MAX_DECLARED_WIDTH {
            return Err(err(pos, format!("declared width {width} is too large")));
        }
        Ok((width, lsb))
    }

    /// `[wire] [range] name {, name}` after a direction keyword. Stops before a
    /// comma that introduces the next direction group in an ANSI header.
    fn decl_names(&mut self, in_header: bool) -> Result<Vec<Decl>, SyntaxError> {
        if self.is_kw("wire") {
            self.next();
        }
        if self.is_kw("reg") || self.is_kw("logic") {
            return Err(unsupported(self.pos(), "reg"));
        }
        let (width, lsb) = self.range()?;
        let mut out = Vec::new();
        loop {
            let (name, pos) = self.ident()?;
            out.push(Decl { name, width, lsb, pos });
            if !self.is_sym(",") {
                break;
            }
            let next = &self.toks[self.at + 1].tok;
            if in_header && matches!(next, Tok::Ident(k) if k == "input" || k == "output" || k == "inout") {
                break;
            }
            self.next();
        }
        Ok(out)
    }

    fn signal_ref(&mut self) -> Result<SignalRef, SyntaxError> {
        let (name, pos) = self.ident()?;
        let select = if self.eat_sym("[") {
            let hi = self.const_index()?;
            let s = if self.eat_sym(":") { Select::Range(hi, self.const_index()?) } else { Select::Bit(hi) };
            self.expect_sym("]")?;
            s
        } else {
            Select::Whole
        };
        Ok(SignalRef { name, select, pos })
    }

    fn lvalue(&mut self) -> Result<Vec<SignalRef>, SyntaxError> {
        if self.eat_sym("{") {
            let mut parts = vec![self.signal_ref()?];
            while self.eat_sym(",") {
                parts.push(self.signal_ref()?);
            }
            self.expect_sym("}")?;
            Ok(parts)
        } else {
            Ok(vec![self.signal_ref()?])
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let cond = self.binary(0)?;
        if self.eat_sym("?") {
            let t = self.expr()?;
            self.expect_sym(":")?;
            let f = self.expr()?;
            return Ok(Expr::Cond(Box::new(cond), Box::new(t), Box::new(f)));
        }
        Ok(cond)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, SyntaxError> {
        const LEVELS: &[&[(&str, BinaryOp)]] = &[
            &[("|", BinaryOp::Or)],
            &[("^", BinaryOp::Xor)],
            &[("&", BinaryOp::And)],
            &[("==", BinaryOp::Eq), ("!=", BinaryOp::Ne)],
            &[("<=", BinaryOp::Le), (">=", BinaryOp::Ge), ("<", BinaryOp::Lt), (">", BinaryOp::Gt)],
            &[("<<", BinaryOp::Shl), (">>", BinaryOp::Shr)],
            &[("+", BinaryOp::Add), ("-", BinaryOp::Sub)],
            &[("*", BinaryOp::Mul)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let op = LEVELS[level].iter().find(|(s, _)| self.is_sym(s)).map(|(_, op)| *op);
            let Some(op) = op else { break };
            let op_pos = self.pos();
            self.next();
            if matches!(self.peek(), Tok::Sym(";" | ")" | "}" | ",") | Tok::Eof) {
                return Err(err(op_pos, format!("operator `{}` is missing its right operand", op.symbol())));
            }
            let rhs = self.binary(level + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat_sym("~") {
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Number(l) => {
                self.next();
                Ok(Expr::Const(l))
            }
            Tok::Ident(_) => Ok(Expr::Ref(self.signal_ref()?)),
            Tok::Sym("(") => {
                self.next();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("{") => {
                self.next();
                let mut parts = vec![self.expr()?];
                if self.is_sym("{") {
                    return Err(err(pos, "replication is outside the supported subset"));
                }
                while self.eat_sym(",") {
                    parts.push(self.expr()?);
                }
                self.expect_sym("}")?;
                Ok(Expr::Concat(parts))
            }
            Tok::Sym(s @ ("!" | "&&" | "||" | "/" | "%")) => {
                Err(err(pos, format!("operator `{s}` is outside the supported subset")))
            }
            _ => Err(self.unexpected("expected an expression")),
        }
    }
}

fn is_reserved(name: &str) -> bool {
    matches!(name, "module" | "endmodule" | "input" | "output" | "wire" | "assign")
}

fn unsupported(pos: Pos, kw: &str) -> SyntaxError {
    err(pos, format!("`{kw}` is outside the supported combinational subset"))
}

pub(crate) fn parse(src: &str) -> Result<MiniModule, SyntaxError> {
    let mut p = Parser { toks: lex(src)?, at: 0 };

    if !p.is_kw("module") {
        if let Tok::Ident(k) = p.peek() {
            if k == "macromodule" || UNSUPPORTED_KEYWORDS.contains(&k.as_str()) {
                return Err(unsupported(p.pos(), &k.clone()));
            }
        }
        return Err(p.unexpected("expected `module`"));
    }
    p.next();
    let (name, name_pos) = p.ident()?;
    if p.is_sym("#") {
        return Err(err(p.pos(), "module parameters are outside the supported subset"));
    }

    // ports in declaration order; None direction means non-ANSI header entry
    let mut header: Vec<(String, Pos)> = Vec::new();
    let mut decls: Vec<(Direction, Decl)> = Vec::new();
    if p.eat_sym("(") && !p.eat_sym(")") {
        loop {
            if p.is_kw("input") || p.is_kw("output") {
                let dir = if p.is_kw("input") { Direction::Input } else { Direction::Output };
                p.next();
                for d in p.decl_names(true)? {
                    header.push((d.name.clone(), d.pos));
                    decls.push((dir, d));
                }
            } else if p.is_kw("inout") {
                return Err(unsupported(p.pos(), "inout"));
            } else {
                header.push(p.ident()?);
            }
            if p.eat_sym(")") {
                break;
            }
            p.expect_sym(",")?;
        }
    }
    p.expect_sym(";")?;

    let mut nets: Vec<Decl> = Vec::new();
    let mut assigns: Vec<Assign> = Vec::new();
    loop {
        let pos = p.pos();
        match p.peek().clone() {
            Tok::Ident(k) if k == "endmodule" => {
                p.next();
                break;
            }
            Tok::Ident(k) if k == "input" || k == "output" => {
                let dir = if k == "input" { Direction::Input } else { Direction::Output };
                p.next();
                for d in p.decl_names(false)? {
                    decls.push((dir, d));
                }
                p.expect_sym(";")?;
            }
            Tok::Ident(k) if k == "wire" => {
                p.next();
                let (width, lsb) = p.range()?;
                loop {
                    let (name, npos) = p.ident()?;
                    if p.eat_sym("=") {
                        let expr = p.expr()?;
                        assigns.push(Assign {
                            target: vec![SignalRef { name: name.clone(), select: Select::Whole, pos: npos }],
                            expr,
                            pos: npos,
                        });
                    }
                    nets.push(Decl { name, width, lsb, pos: npos });
                    if !p.eat_sym(",") {
                        break;
                    }
                }
                p.expect_sym(";")?;
            }
            Tok::Ident(k) if k == "assign" => {
                p.next();
                loop {
                    let apos = p.pos();
                    let target = p.lvalue()?;
                    p.expect_sym("=")?;
                    let expr = p.expr()?;
                    assigns.push(Assign { target, expr, pos: apos });
                    if !p.eat_sym(",") {
                        break;
                    }
                }
                p.expect_sym(";")?;
            }
            Tok::Ident(k) => {
                if let Some(kw) = UNSUPPORTED_KEYWORDS.iter().find(|x| **x == k) {
                    return Err(unsupported(pos, kw));
                }
                if k == "module" {
                    return Err(err(pos, "missing `endmodule` before the next module"));
                }
                return Err(err(pos, format!("module instantiation or unknown item `{k}` is not supported")));
            }
            Tok::Eof => return Err(err(pos, "expected `endmodule`, found end of input")),
            _ => return Err(p.unexpected("expected a module item")),
        }
    }
    if !matches!(p.peek(), Tok::Eof) {
        return Err(err(p.pos(), "only a single module per source is supported"));
    }

    build_module(name, name_pos, header, decls, nets, assigns)
}

fn build_module(
    name: String,
    name_pos: Pos,
    header: Vec<(String, Pos)>,
    decls: Vec<(Direction, Decl)>,
    net_decls: Vec<Decl>,
    assigns: Vec<Assign>,
) -> Result<MiniModule, SyntaxError> {
    let mut syms = Symbols::default();
    let mut kinds: HashMap<String, Option<Direction>> = HashMap::new();
    let mut ports_by_name: HashMap<String, Port> = HashMap::new();

    for (dir, d) in &decls {
        if kinds.contains_key(&d.name) {
            return Err(err(d.pos, format!("`{}` is declared more than once", d.name)));
        }
        if !header.iter().any(|(h, _)| h == &d.name) {
            return Err(err(d.pos, format!("`{}` is not listed in the port list", d.name)));
        }
        kinds.insert(d.name.clone(), Some(*dir));
        syms.insert(&d.name, d.width, d.lsb);
        ports_by_name.insert(
            d.name.clone(),
            Port { name: d.name.clone(), direction: *dir, width: d.width, lsb: d.lsb },
        );
    }
    let mut seen = HashSet::new();
    let mut ports = Vec::new();
    for (h, pos) in &header {
        if !seen.insert(h.clone()) {
            return Err(err(*pos, format!("port `{h}` is listed more than once")));
        }
        match ports_by_name.remove(h) {
            Some(p) => ports.push(p),
            None => return Err(err(*pos, format!("port `{h}` has no direction declaration"))),
        }
    }

    let mut nets = Vec::new();
    for d in net_decls {
        match kinds.get(&d.name) {
            Some(Some(Direction::Output)) => {
                // `output y; wire y;` redeclaration is legal if widths agree
                if syms.get(&d.name) != Some((d.width, d.lsb)) {
                    return Err(err(d.pos, format!("`{}` redeclared with a different range", d.name)));
                }
            }
            Some(_) => return Err(err(d.pos, format!("`{}` is declared more than once", d.name))),
            None => {
                kinds.insert(d.name.clone(), None);
                syms.insert(&d.name, d.width, d.lsb);
                nets.push(Net { name: d.name, width: d.width, lsb: d.lsb });
            }
        }
    }

    let check_ref = |r: &SignalRef| -> Result<(), SyntaxError> {
        let Some((width, lsb)) = syms.get(&r.name) else {
            return Err(err(r.pos, format!("`{}` is not declared", r.name)));
        };
        let msb = lsb + width - 1;
        let ok = match r.select {
            Select::Whole => true,
            Select::Bit(i) => (lsb..=msb).contains(&i),
            Select::Range(m, l) => m >= l && l >= lsb && m <= msb,
        };
        if ok {
            Ok(())
        } else {
            Err(err(r.pos, format!("select on `{}` is outside its declared range [{msb}:{lsb}]", r.name)))
        }
    };

    // drivers per bit
    let mut driver: HashMap<(String, u32), usize> = HashMap::new();
    for (ai, a) in assigns.iter().enumerate() {
        for t in &a.target {
            check_ref(t)?;
            if kinds[&t.name] == Some(Direction::Input) {
                return Err(err(t.pos, format!("cannot assign to input `{}`", t.name)));
            }
            for bit in syms.offsets(t) {
                if driver.insert((t.name.clone(), bit), ai).is_some() {
                    return Err(err(t.pos, format!("`{}` bit {bit} has more than one driver", t.name)));
                }
            }
        }
    }

    // dependencies between assigns
    let mut deps: Vec<HashSet<usize>> = vec![HashSet::new(); assigns.len()];
    for (ai, a) in assigns.iter().enumerate() {
        let mut refs = Vec::new();
        collect_refs(&a.expr, &mut refs);
        for r in refs {
            check_ref(r)?;
            if kinds[&r.name] == Some(Direction::Input) {
                continue;
            }
            for bit in syms.offsets(r) {
                match driver.get(&(r.name.clone(), bit)) {
                    Some(&d) => {
                        deps[ai].insert(d);
                    }
                    None => {
                        return Err(err(r.pos, format!("`{}` bit {bit} is read but never driven", r.name)));
                    }
                }
            }
        }
    }

    for port in ports.iter().filter(|p| p.direction == Direction::Output) {
        for bit in 0..port.width {
            if !driver.contains_key(&(port.name.clone(), bit)) {
                return Err(err(name_pos, format!("output `{}` bit {bit} is never driven", port.name)));
            }
        }
    }

    // Kahn's algorithm over assigns
    let mut indegree: Vec<usize> = deps.iter().map(HashSet::len).collect();
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); assigns.len()];
    for (ai, ds) in deps.iter().enumerate() {
        for &d in ds {
            users[d].push(ai);
        }
    }
    let mut ready: VecDeque<usize> = (0..assigns.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(assigns.len());
    while let Some(i) = ready.pop_front() {
        order.push(i);
        let mut us = users[i].clone();
        us.sort_unstable();
        for u in us {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.push_back(u);
            }
        }
    }
    if order.len() != assigns.len() {
        let stuck = (0..assigns.len()).find(|i| !order.contains(i)).unwrap_or(0);
        let target = &assigns[stuck].target[0].name;
        return Err(err(assigns[stuck].pos, format!("combinational loop through `{target}`")));
    }

    Ok(MiniModule { name, ports, nets, assigns, order, syms })
}

pub(crate) fn collect_refs<'a>(e: &'a Expr, out: &mut Vec<&'a SignalRef>) {
    match e {
        Expr::Ref(r) => out.push(r),
        Expr::Const(_) => {}
        Expr::Not(x) => collect_refs(x, out),
        Expr::Binary(_, l, r) => {
            collect_refs(l, out);
            collect_refs(r, out);
        }
        Expr::Cond(c, t, f) => {
            collect_refs(c, out);
            collect_refs(t, out);
            collect_refs(f, out);
        }
        Expr::Concat(parts) => parts.iter().for_each(|p| collect_refs(p, out)),
    }
}
