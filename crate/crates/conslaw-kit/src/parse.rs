//! Text form of expressions and system files.
//!
//! The printer produces a string the parser maps back to the identical
//! canonical expression. Jets are written with an underscore suffix
//! (`u_txx`, or `u_{t:2,x:1}` when compact letters would be ambiguous),
//! function symbols with a derivative suffix and explicit arguments
//! (`A_u(u)`), exponentials as `exp(...)`, and reciprocals of sums as a
//! parenthesized base with a negative power.
//!
//! System files are line-oriented:
//!
//! ```text
//! # comment
//! indep t x
//! dep u weight 1
//! const eps
//! fn A(u)
//! fn IntA(u) d/u = A(u)
//! fn h(t,x) generic rule h_t -> -h_xx
//! eq u_t = A(u)*u_xx + A_u(u)*u_x^2
//! cv mass = u, -A(u)*u_x
//! potential 2d v from mass
//! potential abelian p: p_t = A(u)*u_x, p_x = u
//! potential standard v from mass
//! potential covering w: w_t = u*exp(v), w_x = exp(v)
//! ```
//!
//! Declarations (indep, dep, const, fn, eq) must precede potential lines.
//! Consecutive potential lines of the same kind extend one covering (a
//! tower built over the same base); a line of a different kind starts a
//! new covering over the previous combined system.

use num::{BigInt, BigRational, One, Signed};

use crate::diffsys::{DiffSystem, Equation};
use crate::error::{Error, Result};
use crate::expr::{Atom, Expr, Term};
use crate::jet::Weighting;
use crate::multiindex::MultiIndex;
use crate::potential::{
    abelian_covering, extend_weighting, general_covering, potential_system_2d,
    standard_potential_system, CoveringKind, PotentialStructure,
};
use crate::session::{ConstraintRule, FuncDef, Session};

// ---------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------

fn rat_str(c: &BigRational) -> String {
    if c.denom().is_one() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

/// Derivative suffix over named slots: compact letters (`txx`) when every
/// slot name is a single character and the total order is at most four,
/// otherwise the braced form `{t:2,x:1}`.
fn suffix_str(names: &[&str], counts: &[u32]) -> String {
    let order: u32 = counts.iter().sum();
    if names.iter().all(|n| n.chars().count() == 1) && order <= 4 {
        let mut s = String::new();
        for (n, &c) in names.iter().zip(counts) {
            for _ in 0..c {
                s.push_str(n);
            }
        }
        s
    } else {
        let mut parts = Vec::new();
        for (n, &c) in names.iter().zip(counts) {
            if c == 1 {
                parts.push((*n).to_string());
            } else if c > 1 {
                parts.push(format!("{n}:{c}"));
            }
        }
        format!("{{{}}}", parts.join(","))
    }
}

fn atom_str(sess: &Session, a: &Atom) -> String {
    match a {
        Atom::Indep(i) => sess.indep_name(*i).into(),
        Atom::Jet { dep, idx } => {
            if idx.is_zero() {
                sess.dep_name(*dep).into()
            } else {
                let names: Vec<&str> = (0..sess.n()).map(|i| sess.indep_name(i)).collect();
                format!(
                    "{}_{}",
                    sess.dep_name(*dep),
                    suffix_str(&names, idx.as_slice())
                )
            }
        }
        Atom::Func { id, der, args } => {
            let def = sess.func(*id);
            let mut s = def.name.clone();
            if der.iter().any(|&c| c > 0) {
                let names: Vec<&str> = def.params.iter().map(|p| p.as_str()).collect();
                s.push('_');
                s.push_str(&suffix_str(&names, der));
            }
            if !def.params.is_empty() {
                s.push('(');
                let rendered: Vec<String> = args.iter().map(|g| print_expr(sess, g)).collect();
                s.push_str(&rendered.join(","));
                s.push(')');
            }
            s
        }
        Atom::Exp(g) => format!("exp({})", print_expr(sess, g)),
        Atom::Pow(b) => format!("({})", print_expr(sess, b)),
        Atom::Param(i) => format!("${i}"),
    }
}

fn term_magnitude(sess: &Session, t: &Term) -> String {
    let cabs = t.coeff.abs();
    if t.factors.is_empty() {
        return rat_str(&cabs);
    }
    let mut parts: Vec<String> = Vec::new();
    if !cabs.is_one() {
        parts.push(rat_str(&cabs));
    }
    for (a, k) in &t.factors {
        let base = atom_str(sess, a);
        if *k == 1 {
            parts.push(base);
        } else {
            parts.push(format!("{base}^{k}"));
        }
    }
    parts.join("*")
}

/// Renders an expression; `parse_expr` maps the result back to `e`.
pub fn print_expr(sess: &Session, e: &Expr) -> String {
    let terms = e.terms();
    if terms.is_empty() {
        return "0".into();
    }
    let mut s = String::new();
    for (i, t) in terms.iter().enumerate() {
        let neg = t.coeff.is_negative();
        if i == 0 {
            if neg {
                s.push('-');
            }
        } else {
            s.push_str(if neg { " - " } else { " + " });
        }
        s.push_str(&term_magnitude(sess, t));
    }
    s
}

// ---------------------------------------------------------------------
// Lexing
// ---------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
enum Suffix {
    Plain(String),
    Braced(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Int(BigInt),
    Ident {
        name: String,
        suffix: Option<Suffix>,
    },
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Equals,
    Colon,
    Arrow,
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        col,
        msg: msg.into(),
    }
}

/// Tokenizes one source line; columns are 1-based. A `#` starts a comment
/// running to the end of the line.
fn lex(src: &str, line: usize) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let col = i + 1;
        let c = chars[i];
        match c {
            '#' => break,
            c if c.is_whitespace() => {
                i += 1;
            }
            '+' => {
                out.push((Tok::Plus, col));
                i += 1;
            }
            '-' => {
                if chars.get(i + 1) == Some(&'>') {
                    out.push((Tok::Arrow, col));
                    i += 2;
                } else {
                    out.push((Tok::Minus, col));
                    i += 1;
                }
            }
            '*' => {
                out.push((Tok::Star, col));
                i += 1;
            }
            '/' => {
                out.push((Tok::Slash, col));
                i += 1;
            }
            '^' => {
                out.push((Tok::Caret, col));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, col));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, col));
                i += 1;
            }
            ',' => {
                out.push((Tok::Comma, col));
                i += 1;
            }
            '=' => {
                out.push((Tok::Equals, col));
                i += 1;
            }
            ':' => {
                out.push((Tok::Colon, col));
                i += 1;
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                let n = digits
                    .parse::<BigInt>()
                    .map_err(|_| perr(line, col, "invalid integer"))?;
                out.push((Tok::Int(n), col));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                let name: String = chars[start..i].iter().collect();
                let mut suffix = None;
                if i < chars.len() && chars[i] == '_' {
                    i += 1;
                    if i < chars.len() && chars[i] == '{' {
                        i += 1;
                        let s = i;
                        while i < chars.len() && chars[i] != '}' {
                            i += 1;
                        }
                        if i == chars.len() {
                            return Err(perr(line, col, "unterminated `{` in suffix"));
                        }
                        suffix = Some(Suffix::Braced(chars[s..i].iter().collect()));
                        i += 1;
                    } else {
                        let s = i;
                        while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                            i += 1;
                        }
                        if s == i {
                            return Err(perr(line, col, "empty suffix after `_`"));
                        }
                        suffix = Some(Suffix::Plain(chars[s..i].iter().collect()));
                    }
                }
                out.push((Tok::Ident { name, suffix }, col));
            }
            other => {
                return Err(perr(line, col, format!("unexpected character `{other}`")));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Suffix resolution
// ---------------------------------------------------------------------

/// Parses a derivative suffix into per-slot counts. Plain suffixes are
/// matched greedily (longest slot name first at each position); braced
/// suffixes list `name` or `name:count` entries separated by commas.
fn suffix_counts(sfx: &Suffix, slots: &[&str], line: usize, col: usize) -> Result<Vec<u32>> {
    let mut counts = vec![0u32; slots.len()];
    match sfx {
        Suffix::Plain(s) => {
            let mut rest = s.as_str();
            while !rest.is_empty() {
                let hit = slots
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| rest.starts_with(**n))
                    .max_by_key(|(_, n)| n.len());
                match hit {
                    Some((k, n)) => {
                        counts[k] += 1;
                        rest = &rest[n.len()..];
                    }
                    None => {
                        return Err(perr(
                            line,
                            col,
                            format!("suffix `{s}` does not match the declared variables"),
                        ))
                    }
                }
            }
        }
        Suffix::Braced(s) => {
            for entry in s.split(',') {
                let entry = entry.trim();
                if entry.is_empty() {
                    continue;
                }
                let (name, count) = match entry.split_once(':') {
                    Some((n, c)) => {
                        let k = c.trim().parse::<u32>().map_err(|_| {
                            perr(
                                line,
                                col,
                                format!("invalid count in suffix entry `{entry}`"),
                            )
                        })?;
                        (n.trim(), k)
                    }
                    None => (entry, 1),
                };
                match slots.iter().position(|n| *n == name) {
                    Some(k) => counts[k] += count,
                    None => {
                        return Err(perr(
                            line,
                            col,
                            format!("unknown variable `{name}` in suffix"),
                        ))
                    }
                }
            }
        }
    }
    Ok(counts)
}

// ---------------------------------------------------------------------
// Expression parsing
// ---------------------------------------------------------------------

struct Parser<'s> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    sess: &'s Session,
    /// When set, these names resolve to `Atom::Param` placeholders
    /// (derivative templates of function symbols).
    params: Option<&'s [String]>,
}

impl<'s> Parser<'s> {
    fn new(toks: Vec<(Tok, usize)>, line: usize, sess: &'s Session) -> Self {
        Parser {
            toks,
            pos: 0,
            line,
            sess,
            params: None,
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(_, c)| *c)
            .unwrap_or_else(|| self.toks.last().map(|(_, c)| c + 1).unwrap_or(1))
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(perr(self.line, self.col(), format!("expected {what}")))
        }
    }

    fn at_end(&self) -> bool {
        self.pos == self.toks.len()
    }

    fn expr(&mut self) -> Result<Expr> {
        let neg = self.eat(&Tok::Minus);
        let mut acc = self.term()?;
        if neg {
            acc = acc.neg();
        }
        loop {
            if self.eat(&Tok::Plus) {
                acc = acc.add(&self.term()?);
            } else if self.eat(&Tok::Minus) {
                acc = acc.sub(&self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.factor()?;
        loop {
            if self.eat(&Tok::Star) {
                acc = acc.mul(&self.factor()?);
            } else if self.eat(&Tok::Slash) {
                acc = acc.mul(&self.factor()?.inverse()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat(&Tok::Caret) {
            let neg = self.eat(&Tok::Minus);
            let col = self.col();
            let k = match self.next() {
                Some(Tok::Int(n)) => {
                    i32::try_from(&n).map_err(|_| perr(self.line, col, "exponent out of range"))?
                }
                _ => return Err(perr(self.line, col, "expected integer exponent")),
            };
            return base.powi(if neg { -k } else { k });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let col = self.col();
        match self.next() {
            Some(Tok::Int(n)) => Ok(Expr::from_rat(BigRational::from_integer(n))),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident { name, suffix }) => {
                if name == "exp" && suffix.is_none() {
                    self.expect(&Tok::LParen, "`(` after exp")?;
                    let g = self.expr()?;
                    self.expect(&Tok::RParen, "`)`")?;
                    return Expr::exp(&g);
                }
                self.resolve(name, suffix, col)
            }
            _ => Err(perr(self.line, col, "expected an expression")),
        }
    }

    fn resolve(&mut self, name: String, suffix: Option<Suffix>, col: usize) -> Result<Expr> {
        if let Some(params) = self.params {
            if let Some(i) = params.iter().position(|p| *p == name) {
                if suffix.is_some() {
                    return Err(perr(self.line, col, "parameters take no suffix"));
                }
                return Ok(Expr::atom(Atom::Param(i)));
            }
        }
        if let Some(i) = self.sess.indep_index(&name) {
            if suffix.is_some() {
                return Err(perr(
                    self.line,
                    col,
                    "independent variables take no jet suffix",
                ));
            }
            return Ok(Expr::indep(i));
        }
        if let Some(d) = self.sess.dep_index(&name) {
            if self.peek() == Some(&Tok::LParen) {
                return Err(perr(
                    self.line,
                    col,
                    "dependent variables take no argument list",
                ));
            }
            let idx = match suffix {
                None => MultiIndex::zero(self.sess.n()),
                Some(sfx) => {
                    let names: Vec<&str> = (0..self.sess.n())
                        .map(|i| self.sess.indep_name(i))
                        .collect();
                    MultiIndex::new(suffix_counts(&sfx, &names, self.line, col)?)
                }
            };
            return Ok(Expr::jet(d, idx));
        }
        if let Some(fid) = self.sess.func_index(&name) {
            let def = self.sess.func(fid).clone();
            let der: Vec<u32> = match suffix {
                None => vec![0; def.arity()],
                Some(sfx) => {
                    let names: Vec<&str> = def.params.iter().map(|p| p.as_str()).collect();
                    suffix_counts(&sfx, &names, self.line, col)?
                }
            };
            let args: Vec<Expr> = if self.eat(&Tok::LParen) {
                let mut args = Vec::new();
                if self.peek() != Some(&Tok::RParen) {
                    loop {
                        args.push(self.expr()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(&Tok::RParen, "`)`")?;
                if args.len() != def.arity() {
                    return Err(Error::Arity {
                        name: def.name.clone(),
                        expected: def.arity(),
                        got: args.len(),
                    });
                }
                args
            } else {
                def.params
                    .iter()
                    .map(|p| self.default_arg(p, col))
                    .collect::<Result<_>>()?
            };
            return Expr::func(self.sess, fid, der, args);
        }
        Err(Error::UnknownSymbol(name))
    }

    /// Default argument for a parameter written without an explicit list:
    /// an enclosing template parameter of the same name, an independent
    /// variable, or the order-zero jet of a dependent variable.
    fn default_arg(&self, p: &str, col: usize) -> Result<Expr> {
        if let Some(params) = self.params {
            if let Some(i) = params.iter().position(|q| q == p) {
                return Ok(Expr::atom(Atom::Param(i)));
            }
        }
        if let Some(i) = self.sess.indep_index(p) {
            return Ok(Expr::indep(i));
        }
        if let Some(d) = self.sess.dep_index(p) {
            return Ok(Expr::jet(d, MultiIndex::zero(self.sess.n())));
        }
        Err(perr(
            self.line,
            col,
            format!("no default argument for parameter `{p}`"),
        ))
    }
}

/// Parses a standalone expression in the given session.
pub fn parse_expr(sess: &Session, src: &str) -> Result<Expr> {
    let toks = lex(src, 1)?;
    let mut p = Parser::new(toks, 1, sess);
    let e = p.expr()?;
    if !p.at_end() {
        return Err(perr(1, p.col(), "unexpected trailing input"));
    }
    Ok(e)
}

// ---------------------------------------------------------------------
// System files
// ---------------------------------------------------------------------

/// A parsed system file: the base system, the potential structure built by
/// `potential` lines (if any), the weighting (declared weights extended
/// over all potentials), and the named conserved currents.
#[derive(Clone, Debug)]
pub struct SystemFile {
    /// The system built from the `eq` lines, before any potentials.
    pub system: DiffSystem,
    /// The covering built by the last run of `potential` lines, if any.
    /// Its `base` is the combined system of the preceding run, so for a
    /// single run it is `system` itself.
    pub structure: Option<PotentialStructure>,
    pub weighting: Weighting,
    pub cvs: Vec<(String, Vec<Expr>)>,
}

impl SystemFile {
    /// The system operations act on: the combined system when potentials
    /// are present, the base system otherwise.
    pub fn working(&self) -> &DiffSystem {
        self.structure
            .as_ref()
            .map(|s| &s.combined)
            .unwrap_or(&self.system)
    }

    pub fn cv(&self, name: &str) -> Option<&Vec<Expr>> {
        self.cvs.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn ident_of(tok: Option<Tok>, line: usize, col: usize) -> Result<(String, Option<Suffix>)> {
    match tok {
        Some(Tok::Ident { name, suffix }) => Ok((name, suffix)),
        _ => Err(perr(line, col, "expected a name")),
    }
}

struct FileBuilder {
    sess: Session,
    eqs: Vec<Equation>,
    weights: Vec<u32>,
    cvs: Vec<(String, Vec<Expr>)>,
    system: Option<DiffSystem>,
    structure: Option<PotentialStructure>,
    run_kind: Option<CoveringKind>,
    run_base: Option<DiffSystem>,
    run_base_weights: Vec<u32>,
    run_specs: Vec<(String, Vec<Expr>)>,
    current_weights: Vec<u32>,
}

impl FileBuilder {
    fn new() -> Self {
        FileBuilder {
            sess: Session::new(),
            eqs: Vec::new(),
            weights: Vec::new(),
            cvs: Vec::new(),
            system: None,
            structure: None,
            run_kind: None,
            run_base: None,
            run_base_weights: Vec::new(),
            run_specs: Vec::new(),
            current_weights: Vec::new(),
        }
    }

    fn declarations_open(&self, line: usize) -> Result<()> {
        if self.structure.is_some() {
            return Err(perr(line, 1, "declarations must precede potential lines"));
        }
        Ok(())
    }

    /// Session expressions are parsed in: grows as potentials are added.
    fn parse_sess(&self) -> &Session {
        self.structure
            .as_ref()
            .map(|s| s.combined.sess())
            .unwrap_or(&self.sess)
    }

    fn ensure_system(&mut self) -> Result<()> {
        if self.system.is_none() {
            self.system = Some(DiffSystem::new(self.sess.clone(), self.eqs.clone())?);
            self.current_weights = self.weights.clone();
        }
        Ok(())
    }

    fn working(&self) -> &DiffSystem {
        self.structure
            .as_ref()
            .map(|s| &s.combined)
            .unwrap_or_else(|| self.system.as_ref().expect("system built"))
    }

    fn line_fn(&mut self, rest: &str, line: usize) -> Result<()> {
        self.declarations_open(line)?;
        let toks = lex(rest, line)?;
        let mut p = Parser::new(toks, line, &self.sess);
        let col = p.col();
        let (name, sfx) = ident_of(p.next(), line, col)?;
        if sfx.is_some() {
            return Err(perr(line, col, "function names take no suffix here"));
        }
        p.expect(&Tok::LParen, "`(` after the function name")?;
        let mut params: Vec<String> = Vec::new();
        if p.peek() != Some(&Tok::RParen) {
            loop {
                let col = p.col();
                let (pn, psfx) = ident_of(p.next(), line, col)?;
                if psfx.is_some() {
                    return Err(perr(line, col, "parameter names take no suffix"));
                }
                params.push(pn);
                if !p.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        p.expect(&Tok::RParen, "`)`")?;
        let mut generic = false;
        let mut derivative: Vec<Option<Expr>> = vec![None; params.len()];
        let mut constraint: Option<ConstraintRule> = None;
        loop {
            let col = p.col();
            match p.next() {
                None => break,
                Some(Tok::Ident {
                    name: kw,
                    suffix: None,
                }) if kw == "generic" => {
                    generic = true;
                }
                Some(Tok::Ident {
                    name: kw,
                    suffix: None,
                }) if kw == "d" => {
                    p.expect(&Tok::Slash, "`/` after d")?;
                    let col = p.col();
                    let (pn, psfx) = ident_of(p.next(), line, col)?;
                    if psfx.is_some() {
                        return Err(perr(line, col, "expected a bare parameter name"));
                    }
                    let slot = params
                        .iter()
                        .position(|q| *q == pn)
                        .ok_or_else(|| perr(line, col, format!("unknown parameter `{pn}`")))?;
                    p.expect(&Tok::Equals, "`=`")?;
                    p.params = Some(&params);
                    let template = p.expr()?;
                    p.params = None;
                    derivative[slot] = Some(template);
                }
                Some(Tok::Ident {
                    name: kw,
                    suffix: None,
                }) if kw == "rule" => {
                    constraint = Some(parse_rule(&mut p, &name, &params, line)?);
                }
                _ => return Err(perr(line, col, "expected `generic`, `d/...` or `rule`")),
            }
        }
        let def = FuncDef {
            name,
            params,
            derivative,
            constraint,
            constant: false,
            generic,
        };
        self.sess.add_func(def)?;
        Ok(())
    }

    fn line_eq(&mut self, rest: &str, line: usize) -> Result<()> {
        self.declarations_open(line)?;
        if self.system.is_some() {
            return Err(perr(
                line,
                1,
                "equations must precede conserved currents and potentials",
            ));
        }
        let toks = lex(rest, line)?;
        let mut p = Parser::new(toks, line, &self.sess);
        let col = p.col();
        let (name, sfx) = ident_of(p.next(), line, col)?;
        let dep = self
            .sess
            .dep_index(&name)
            .ok_or_else(|| perr(line, col, format!("unknown dependent variable `{name}`")))?;
        let sfx = sfx.ok_or_else(|| {
            perr(
                line,
                col,
                "the left-hand side must be a derivative of a dependent variable",
            )
        })?;
        let names: Vec<&str> = (0..self.sess.n())
            .map(|i| self.sess.indep_name(i))
            .collect();
        let idx = MultiIndex::new(suffix_counts(&sfx, &names, line, col)?);
        p.expect(&Tok::Equals, "`=`")?;
        let rhs = p.expr()?;
        if !p.at_end() {
            return Err(perr(line, p.col(), "unexpected trailing input"));
        }
        self.eqs.push(Equation::new(dep, idx, rhs));
        Ok(())
    }

    fn line_cv(&mut self, rest: &str, line: usize) -> Result<()> {
        self.ensure_system()?;
        let toks = lex(rest, line)?;
        let sess = self.parse_sess().clone();
        let mut p = Parser::new(toks, line, &sess);
        let col = p.col();
        let (name, sfx) = ident_of(p.next(), line, col)?;
        if sfx.is_some() {
            return Err(perr(line, col, "current names take no suffix"));
        }
        if self.cvs.iter().any(|(n, _)| *n == name) {
            return Err(perr(
                line,
                col,
                format!("current `{name}` already declared"),
            ));
        }
        p.expect(&Tok::Equals, "`=`")?;
        let mut comps = vec![p.expr()?];
        while p.eat(&Tok::Comma) {
            comps.push(p.expr()?);
        }
        if !p.at_end() {
            return Err(perr(line, p.col(), "unexpected trailing input"));
        }
        self.cvs.push((name, comps));
        Ok(())
    }

    fn line_potential(&mut self, rest: &str, line: usize) -> Result<()> {
        self.ensure_system()?;
        let (kind_word, tail) = match rest.trim_start().split_once(char::is_whitespace) {
            Some((k, t)) => (k, t),
            None => {
                return Err(perr(
                    line,
                    1,
                    "expected a covering kind and its description",
                ))
            }
        };
        let kind = match kind_word {
            "2d" => CoveringKind::TwoDim,
            "abelian" => CoveringKind::Abelian,
            "standard" => CoveringKind::Standard,
            "covering" => CoveringKind::General,
            other => {
                return Err(perr(
                    line,
                    1,
                    format!(
                    "unknown covering kind `{other}` (expected 2d, abelian, standard or covering)"
                ),
                ))
            }
        };
        let specs = match kind {
            CoveringKind::TwoDim | CoveringKind::Standard => {
                self.specs_from_currents(tail, line)?
            }
            CoveringKind::Abelian => self.specs_from_fluxes(tail, line, false)?,
            CoveringKind::General => self.specs_from_fluxes(tail, line, true)?,
        };
        let working = self.working().clone();
        if self.run_kind != Some(kind) {
            self.run_kind = Some(kind);
            self.run_base = Some(working);
            self.run_base_weights = self.current_weights.clone();
            self.run_specs.clear();
        }
        self.run_specs.extend(specs);
        let base = self.run_base.as_ref().expect("run base set");
        let st = match kind {
            CoveringKind::TwoDim => potential_system_2d(base, &self.run_specs)?,
            CoveringKind::Abelian => abelian_covering(base, &self.run_specs)?,
            CoveringKind::Standard => standard_potential_system(base, &self.run_specs)?,
            CoveringKind::General => general_covering(base, &self.run_specs)?,
        };
        let bw = Weighting {
            rho: self.run_base_weights.clone(),
        };
        self.current_weights = extend_weighting(&st, &bw)?.rho;
        self.structure = Some(st);
        Ok(())
    }

    /// `NAME... from CURRENT...`: one potential (or potential triple, for
    /// the standard kind) per named current.
    fn specs_from_currents(&self, tail: &str, line: usize) -> Result<Vec<(String, Vec<Expr>)>> {
        let ws = words(tail);
        let split = ws
            .iter()
            .position(|w| *w == "from")
            .ok_or_else(|| perr(line, 1, "expected `from` between names and currents"))?;
        let names = &ws[..split];
        let cv_names = &ws[split + 1..];
        if names.is_empty() || names.len() != cv_names.len() {
            return Err(perr(
                line,
                1,
                "expected as many potential names as current names",
            ));
        }
        let mut specs = Vec::new();
        for (nm, cvn) in names.iter().zip(cv_names) {
            let f = self
                .cvs
                .iter()
                .find(|(n, _)| n == cvn)
                .map(|(_, f)| f.clone())
                .ok_or_else(|| perr(line, 1, format!("unknown current `{cvn}`")))?;
            specs.push((nm.to_string(), f));
        }
        Ok(specs)
    }

    /// `NAME: NAME_t = EXPR, NAME_x = EXPR, ...`: one flux per direction.
    /// For general coverings the fluxes may mention `NAME` itself, so they
    /// are parsed in a session pre-extended by it.
    fn specs_from_fluxes(
        &self,
        tail: &str,
        line: usize,
        self_referencing: bool,
    ) -> Result<Vec<(String, Vec<Expr>)>> {
        let (head, assigns) = tail
            .split_once(':')
            .ok_or_else(|| perr(line, 1, "expected `name: name_t = ..., name_x = ...`"))?;
        let name = head.trim().to_string();
        if name.is_empty() {
            return Err(perr(line, 1, "expected a potential name before `:`"));
        }
        let mut sess = self.parse_sess().clone();
        if self_referencing {
            sess.add_dep(&name)?;
        }
        let n = sess.n();
        let toks = lex(assigns, line)?;
        let mut p = Parser::new(toks, line, &sess);
        let mut fluxes: Vec<Option<Expr>> = vec![None; n];
        loop {
            let col = p.col();
            let (nm, sfx) = ident_of(p.next(), line, col)?;
            if nm != name {
                return Err(perr(
                    line,
                    col,
                    format!("expected assignments to `{name}_<direction>`"),
                ));
            }
            let sfx = sfx.ok_or_else(|| perr(line, col, "expected a direction suffix"))?;
            let names: Vec<&str> = (0..n).map(|i| sess.indep_name(i)).collect();
            let counts = suffix_counts(&sfx, &names, line, col)?;
            let nz: Vec<(usize, u32)> = counts
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c > 0)
                .map(|(i, &c)| (i, c))
                .collect();
            let dir = match nz[..] {
                [(d, 1)] => d,
                _ => return Err(perr(line, col, "expected a single first-order direction")),
            };
            if fluxes[dir].is_some() {
                return Err(perr(line, col, "direction assigned twice"));
            }
            p.expect(&Tok::Equals, "`=`")?;
            fluxes[dir] = Some(p.expr()?);
            if !p.eat(&Tok::Comma) {
                break;
            }
        }
        if !p.at_end() {
            return Err(perr(line, p.col(), "unexpected trailing input"));
        }
        let mut g = Vec::new();
        for (dir, f) in fluxes.into_iter().enumerate() {
            g.push(f.ok_or_else(|| {
                perr(
                    line,
                    1,
                    format!("missing flux for direction `{}`", sess.indep_name(dir)),
                )
            })?);
        }
        Ok(vec![(name, g)])
    }

    fn finish(mut self) -> Result<SystemFile> {
        self.ensure_system()?;
        let weighting = Weighting {
            rho: self.current_weights.clone(),
        };
        if self.structure.is_none() {
            self.system
                .as_ref()
                .expect("system built")
                .check_weights(&weighting)?;
        }
        Ok(SystemFile {
            system: self.system.expect("system built"),
            structure: self.structure,
            weighting,
            cvs: self.cvs,
        })
    }
}

/// Parses a constraint rule `NAME_<slot> -> [-] [k[/m]*] NAME_<suffix>`;
/// the left side must be a single first derivative and both sides must
/// use the function being declared.
fn parse_rule(
    p: &mut Parser,
    fname: &str,
    params: &[String],
    line: usize,
) -> Result<ConstraintRule> {
    let col = p.col();
    let (lname, lsfx) = ident_of(p.next(), line, col)?;
    if lname != fname {
        return Err(perr(
            line,
            col,
            "the rule must rewrite the declared function",
        ));
    }
    let slots: Vec<&str> = params.iter().map(|q| q.as_str()).collect();
    let lsfx = lsfx.ok_or_else(|| perr(line, col, "expected a derivative suffix"))?;
    let lcounts = suffix_counts(&lsfx, &slots, line, col)?;
    let nz: Vec<(usize, u32)> = lcounts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0)
        .map(|(i, &c)| (i, c))
        .collect();
    let kill = match nz[..] {
        [(k, 1)] => k,
        _ => {
            return Err(perr(
                line,
                col,
                "the rule must eliminate a single first derivative",
            ))
        }
    };
    p.expect(&Tok::Arrow, "`->`")?;
    let neg = p.eat(&Tok::Minus);
    let mut coeff = BigRational::one();
    if let Some(Tok::Int(_)) = p.peek() {
        let Some(Tok::Int(num)) = p.next() else {
            unreachable!()
        };
        let mut c = BigRational::from_integer(num);
        if p.eat(&Tok::Slash) {
            let col = p.col();
            match p.next() {
                Some(Tok::Int(den)) => c /= BigRational::from_integer(den),
                _ => return Err(perr(line, col, "expected a denominator")),
            }
        }
        p.expect(&Tok::Star, "`*`")?;
        coeff = c;
    }
    if neg {
        coeff = -coeff;
    }
    let col = p.col();
    let (rname, rsfx) = ident_of(p.next(), line, col)?;
    if rname != fname {
        return Err(perr(
            line,
            col,
            "the rule must rewrite to the same function",
        ));
    }
    let add = match rsfx {
        None => vec![0; params.len()],
        Some(sfx) => suffix_counts(&sfx, &slots, line, col)?,
    };
    Ok(ConstraintRule { kill, coeff, add })
}

/// Parses a complete system file.
pub fn parse_system_file(src: &str) -> Result<SystemFile> {
    let mut b = FileBuilder::new();
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (head, rest) = match trimmed.split_once(char::is_whitespace) {
            Some((h, r)) => (h, r),
            None => (trimmed, ""),
        };
        match head {
            "indep" => {
                b.declarations_open(line)?;
                if b.system.is_some() {
                    return Err(perr(line, 1, "declare variables before equations"));
                }
                for w in words(rest) {
                    b.sess.add_indep(w)?;
                }
            }
            "dep" => {
                b.declarations_open(line)?;
                if b.system.is_some() {
                    return Err(perr(line, 1, "declare variables before equations"));
                }
                let ws = words(rest);
                match ws[..] {
                    [name] => {
                        b.sess.add_dep(name)?;
                        b.weights.push(1);
                    }
                    [name, "weight", w] => {
                        b.sess.add_dep(name)?;
                        b.weights.push(
                            w.parse::<u32>()
                                .map_err(|_| perr(line, 1, format!("invalid weight `{w}`")))?,
                        );
                    }
                    _ => return Err(perr(line, 1, "expected `dep NAME` or `dep NAME weight N`")),
                }
            }
            "const" => {
                b.declarations_open(line)?;
                if b.system.is_some() {
                    return Err(perr(line, 1, "declare symbols before equations"));
                }
                let ws = words(rest);
                if ws.len() != 1 {
                    return Err(perr(line, 1, "expected `const NAME`"));
                }
                b.sess.add_func(FuncDef::constant(ws[0]))?;
            }
            "fn" => b.line_fn(rest, line)?,
            "eq" => b.line_eq(rest, line)?,
            "cv" => b.line_cv(rest, line)?,
            "potential" => b.line_potential(rest, line)?,
            other => {
                return Err(perr(line, 1, format!("unknown directive `{other}`")));
            }
        }
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat_sess() -> Session {
        let mut sess = Session::new();
        sess.add_indep("t").unwrap();
        sess.add_indep("x").unwrap();
        sess.add_dep("u").unwrap();
        sess
    }

    fn roundtrip(sess: &Session, src: &str) -> Expr {
        let e = parse_expr(sess, src).unwrap();
        let printed = print_expr(sess, &e);
        let back = parse_expr(sess, &printed).unwrap();
        assert_eq!(e, back, "print/parse mismatch: {src} -> {printed}");
        e
    }

    #[test]
    fn parses_polynomials_and_jets() {
        let sess = heat_sess();
        let e = roundtrip(&sess, "3*u_tx^2 - x*u/2 + 1/3");
        assert_eq!(e.terms().len(), 3);
        let braced = parse_expr(&sess, "u_{t,x}").unwrap();
        assert_eq!(braced, parse_expr(&sess, "u_tx").unwrap());
        let deep = parse_expr(&sess, "u_{x:5}").unwrap();
        assert_eq!(deep, Expr::jet(0, MultiIndex::new(vec![0, 5])));
        // order five prints in braced form and still roundtrips
        assert_eq!(print_expr(&sess, &deep), "u_{x:5}");
        roundtrip(&sess, "u_{x:5}");
    }

    #[test]
    fn parses_exponentials_and_reciprocals() {
        let sess = heat_sess();
        roundtrip(&sess, "exp(2*x)*u");
        roundtrip(&sess, "(u + 1)^-1");
        roundtrip(&sess, "u^-2*u_x");
        let one = parse_expr(&sess, "(exp(x) + 1)*(exp(x) + 1)^-1").unwrap();
        assert!(one.is_one());
        let q = parse_expr(&sess, "u_x/u").unwrap();
        assert_eq!(q, parse_expr(&sess, "u^-1*u_x").unwrap());
    }

    #[test]
    fn unknown_symbols_are_reported() {
        let sess = heat_sess();
        match parse_expr(&sess, "u + z") {
            Err(Error::UnknownSymbol(name)) => assert_eq!(name, "z"),
            other => panic!("expected UnknownSymbol, got {other:?}"),
        }
        assert!(matches!(parse_expr(&sess, "u +"), Err(Error::Parse { .. })));
    }

    #[test]
    fn function_symbols_use_default_arguments() {
        let mut sess = heat_sess();
        sess.add_func(FuncDef::opaque("A", &["u"])).unwrap();
        let bare = parse_expr(&sess, "A").unwrap();
        let explicit = parse_expr(&sess, "A(u)").unwrap();
        assert_eq!(bare, explicit);
        let der = roundtrip(&sess, "A_u(u)*u_x");
        assert_eq!(print_expr(&sess, &der), "u_x*A_u(u)");
    }

    #[test]
    fn parses_full_diffusion_file() {
        let src = "\
# diffusion with a convection term
indep t x
dep u weight 1
fn A(u)
fn IntA(u) d/u = A(u)
eq u_t = A*u_xx + A_u*u_x^2
cv mass = u, -A*u_x
potential 2d v from mass
";
        let sf = parse_system_file(src).unwrap();
        assert_eq!(sf.system.equations().len(), 1);
        let st = sf.structure.as_ref().unwrap();
        assert_eq!(st.pot_deps, vec![1]);
        // the base equation is excluded by the induced compatibility
        assert!(st.combined.equations()[0].excluded.is_some());
        assert_eq!(sf.weighting.rho, vec![1, 1]);
        assert_eq!(sf.cvs.len(), 1);
    }

    #[test]
    fn constraint_rules_apply_eagerly() {
        let src = "\
indep t x
dep u
fn h(t,x) generic rule h_t -> -h_xx
eq u_t = u_xx
cv hflow = h*u, h_x*u - h*u_x
";
        let sf = parse_system_file(src).unwrap();
        let sess = sf.system.sess();
        let ht = parse_expr(sess, "h_t(t,x)").unwrap();
        let hxx = parse_expr(sess, "h_xx(t,x)").unwrap();
        assert_eq!(ht, hxx.neg());
    }

    #[test]
    fn tower_of_potentials_shares_one_structure() {
        let src = "\
indep t x
dep u
eq u_t = u_xx
cv mass = u, -u_x
potential 2d v from mass
cv vmass = v, -u
potential 2d w from vmass
";
        let sf = parse_system_file(src).unwrap();
        let st = sf.structure.as_ref().unwrap();
        assert_eq!(st.pot_deps, vec![1, 2]);
        // minimal set: v_x = u, w_t = u ... w_x = v (v_t and base excluded)
        let minimal = st.combined.minimal_indices();
        assert_eq!(minimal.len(), 3);
    }

    #[test]
    fn abelian_and_covering_lines() {
        let src = "\
indep t x
dep u
eq u_t = u_xx
potential abelian p: p_t = u_x, p_x = u
potential covering w: w_t = w, w_x = 0
";
        let sf = parse_system_file(src).unwrap();
        let st = sf.structure.as_ref().unwrap();
        assert_eq!(st.kind, CoveringKind::General);
        // the covering is built over the abelian combined system
        assert_eq!(st.base.equations().len(), 3);
        assert!(st.covering.is_some());
    }

    #[test]
    fn incompatible_abelian_fluxes_report_residual() {
        let src = "\
indep t x
dep u
eq u_t = u_xx
potential abelian p: p_t = u, p_x = u
";
        match parse_system_file(src) {
            Err(Error::IncompatibleFluxes(r)) => assert_eq!(r, "u_xx - u_x"),
            other => panic!("expected IncompatibleFluxes, got {other:?}"),
        }
    }
}
