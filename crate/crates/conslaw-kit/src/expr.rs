//! Canonical expression kernel.
//!
//! An [`Expr`] is a fully expanded sum of [`Term`]s; a term is an exact
//! rational coefficient times a multiset of `(Atom, integer power)`
//! factors. Terms are kept sorted with merged monomials, so structural
//! equality is semantic equality for the supported expression class.
//!
//! Atom inventory:
//! - `Indep(i)`: independent variable x_i,
//! - `Jet { dep, idx }`: jet variable u^dep with derivative multi-index,
//! - `Func { id, der, args }`: opaque function symbol with a slot
//!   derivative index (`der[j]` = order of differentiation in slot j),
//! - `Exp(g)`: exponential factor e^g with a primitive exponent,
//! - `Pow(b)`: a monic multi-term base carried as an atom; appears only
//!   with negative powers (positive powers of sums are expanded),
//! - `Param(j)`: placeholder used inside derivative-rule templates only.
//!
//! Exponential factors with syntactically equal exponents merge by adding
//! integer powers; exponents are normalized to a primitive form (integer
//! content extracted into the power) so `exp(2x) == exp(x)^2`. Reciprocals
//! of sums are normalized by leading-term elimination: a term containing
//! both `Pow(b)^k` (k < 0) and the leading monomial of `b` is rewritten
//! via `lead(b)·b^k = b^{k+1} − (b − lead(b))·b^k`, which makes
//! `(e^x+c)·(e^x+c)^{-1} = 1` hold canonically. The elimination only fires
//! when the non-leading monomials of `b` share no atoms with the leading
//! one (termination is proven for that class; other bases are left
//! unnormalized).

use std::collections::{BTreeMap, BTreeSet};

use num::{BigInt, BigRational, One, Signed, Zero};

use crate::error::{Error, Result};
use crate::multiindex::MultiIndex;
use crate::session::{FuncId, Session};

/// Rewrite fuel for canonicalization; exceeding it means a base outside
/// the supported class slipped past the eligibility check.
const CANON_FUEL: usize = 100_000;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Atom {
    Indep(usize),
    Jet {
        dep: usize,
        idx: MultiIndex,
    },
    Func {
        id: FuncId,
        der: Vec<u32>,
        args: Vec<Expr>,
    },
    Exp(Expr),
    Pow(Expr),
    Param(usize),
}

impl Atom {
    pub fn jet(dep: usize, idx: MultiIndex) -> Atom {
        Atom::Jet { dep, idx }
    }

    pub fn jet0(dep: usize, n: usize) -> Atom {
        Atom::Jet {
            dep,
            idx: MultiIndex::zero(n),
        }
    }
}

/// coefficient * product of factors; factors are sorted by atom and hold
/// nonzero integer powers.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Term {
    pub factors: Vec<(Atom, i32)>,
    pub coeff: BigRational,
}

impl Term {
    pub fn constant(c: BigRational) -> Term {
        Term {
            factors: Vec::new(),
            coeff: c,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.factors.is_empty()
    }

    fn monomial_eq(&self, other: &Term) -> bool {
        self.factors == other.factors
    }

    /// Power of `atom` in this term (0 if absent).
    pub fn power_of(&self, atom: &Atom) -> i32 {
        self.factors
            .iter()
            .find(|(a, _)| a == atom)
            .map(|(_, k)| *k)
            .unwrap_or(0)
    }

    /// Total degree in jet atoms (top level only). None if any jet power
    /// is negative.
    pub fn jet_degree(&self) -> Option<u32> {
        let mut d: i64 = 0;
        for (a, k) in &self.factors {
            if let Atom::Jet { .. } = a {
                if *k < 0 {
                    return None;
                }
                d += *k as i64;
            }
        }
        Some(d as u32)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Expr {
    terms: Vec<Term>,
}

fn rat_int(k: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(k))
}

fn rat_pow(r: &BigRational, k: i32) -> Result<BigRational> {
    if r.is_zero() {
        return if k > 0 {
            Ok(BigRational::zero())
        } else if k == 0 {
            Ok(BigRational::one())
        } else {
            Err(Error::ZeroToNegativePower)
        };
    }
    let mut acc = BigRational::one();
    let base = if k >= 0 { r.clone() } else { r.recip() };
    for _ in 0..k.unsigned_abs() {
        acc *= &base;
    }
    Ok(acc)
}

fn rat_gcd(a: &BigRational, b: &BigRational) -> BigRational {
    use num::Integer;
    let num = a.numer().gcd(b.numer());
    let den = a.denom().lcm(b.denom());
    BigRational::new(num, den)
}

impl Expr {
    pub fn zero() -> Expr {
        Expr { terms: Vec::new() }
    }

    pub fn one() -> Expr {
        Expr::from_int(1)
    }

    pub fn from_int(k: i64) -> Expr {
        Expr::from_rat(rat_int(k))
    }

    pub fn from_rat(c: BigRational) -> Expr {
        if c.is_zero() {
            Expr::zero()
        } else {
            Expr {
                terms: vec![Term::constant(c)],
            }
        }
    }

    pub fn atom(a: Atom) -> Expr {
        Expr::from_terms(vec![Term {
            factors: vec![(a, 1)],
            coeff: BigRational::one(),
        }])
    }

    pub fn indep(i: usize) -> Expr {
        Expr::atom(Atom::Indep(i))
    }

    pub fn jet(dep: usize, idx: MultiIndex) -> Expr {
        Expr::atom(Atom::Jet { dep, idx })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.as_rational().map(|c| c.is_one()).unwrap_or(false)
    }

    /// Some(c) when the expression is the rational constant c.
    pub fn as_rational(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 if self.terms[0].is_constant() => Some(self.terms[0].coeff.clone()),
            _ => None,
        }
    }

    /// Canonicalizing constructor: merges factor powers, expands positive
    /// powers of sum bases, applies the reciprocal elimination rule, sorts
    /// and merges monomials.
    pub fn from_terms(terms: Vec<Term>) -> Expr {
        let mut work = terms;
        let mut done: Vec<Term> = Vec::new();
        let mut fuel = CANON_FUEL;
        while let Some(t) = work.pop() {
            if fuel == 0 {
                panic!("expression canonicalization exceeded fuel; base outside supported class");
            }
            fuel -= 1;
            if t.coeff.is_zero() {
                continue;
            }
            // merge factors
            let mut map: BTreeMap<Atom, i64> = BTreeMap::new();
            for (a, k) in t.factors {
                if k != 0 {
                    *map.entry(a).or_insert(0) += k as i64;
                }
            }
            map.retain(|_, k| *k != 0);
            // expand positive powers of sum bases
            if let Some((b, k)) = map.iter().find_map(|(a, k)| match a {
                Atom::Pow(b) if *k > 0 => Some((b.clone(), *k)),
                _ => None,
            }) {
                let mut rest = map;
                rest.remove(&Atom::Pow(b.clone()));
                let base_term = Expr {
                    terms: vec![Term {
                        factors: rest.into_iter().map(|(a, k)| (a, k as i32)).collect(),
                        coeff: t.coeff,
                    }],
                };
                let mut prod = base_term;
                for _ in 0..k {
                    prod = prod.mul_raw(&b);
                }
                work.extend(prod.terms);
                continue;
            }
            // reciprocal elimination
            let mut rewritten = false;
            for (a, &k) in map.iter() {
                let b = match a {
                    Atom::Pow(b) if k < 0 => b,
                    _ => continue,
                };
                let lead = &b.terms[0];
                if !elimination_eligible(b) {
                    continue;
                }
                if !lead.factors.iter().all(|(la, lp)| {
                    *lp > 0 && map.get(la).map(|q| *q >= *lp as i64).unwrap_or(false)
                }) {
                    continue;
                }
                // t = (t/lead) * lead * b^k  ->  (t/lead)*(b^{k+1} - tail*b^k)
                let mut quot = map.clone();
                for (la, lp) in &lead.factors {
                    let q = quot.get_mut(la).unwrap();
                    *q -= *lp as i64;
                    if *q == 0 {
                        quot.remove(la);
                    }
                }
                let pow_atom = Atom::Pow(b.clone());
                let mk = |m: &BTreeMap<Atom, i64>, c: BigRational| Term {
                    factors: m
                        .iter()
                        .filter(|(_, k)| **k != 0)
                        .map(|(a, k)| (a.clone(), *k as i32))
                        .collect(),
                    coeff: c,
                };
                let mut first = quot.clone();
                *first.entry(pow_atom.clone()).or_insert(0) += 1;
                work.push(mk(&first, t.coeff.clone() / &lead.coeff));
                for tail in &b.terms[1..] {
                    let mut m = quot.clone();
                    for (ta, tp) in &tail.factors {
                        *m.entry(ta.clone()).or_insert(0) += *tp as i64;
                    }
                    work.push(mk(&m, -&t.coeff * &tail.coeff / &lead.coeff));
                }
                rewritten = true;
                break;
            }
            if rewritten {
                continue;
            }
            done.push(Term {
                factors: map.into_iter().map(|(a, k)| (a, k as i32)).collect(),
                coeff: t.coeff,
            });
        }
        // sort descending, merge monomials
        done.sort_by(|a, b| b.factors.cmp(&a.factors));
        let mut out: Vec<Term> = Vec::new();
        for t in done {
            match out.last_mut() {
                Some(prev) if prev.monomial_eq(&t) => prev.coeff += t.coeff,
                _ => out.push(t),
            }
        }
        out.retain(|t| !t.coeff.is_zero());
        Expr { terms: out }
    }

    fn mul_raw(&self, other: &Expr) -> Expr {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for t1 in &self.terms {
            for t2 in &other.terms {
                let mut factors = t1.factors.clone();
                factors.extend(t2.factors.iter().cloned());
                terms.push(Term {
                    factors,
                    coeff: &t1.coeff * &t2.coeff,
                });
            }
        }
        Expr::from_terms(terms)
    }

    pub fn add(&self, other: &Expr) -> Expr {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Expr::from_terms(terms)
    }

    pub fn neg(&self) -> Expr {
        Expr {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    factors: t.factors.clone(),
                    coeff: -&t.coeff,
                })
                .collect(),
        }
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        self.mul_raw(other)
    }

    pub fn scale(&self, c: &BigRational) -> Expr {
        if c.is_zero() {
            return Expr::zero();
        }
        Expr {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    factors: t.factors.clone(),
                    coeff: &t.coeff * c,
                })
                .collect(),
        }
    }

    /// Multiplicative inverse. Single terms invert factor by factor; a
    /// multi-term expression becomes a reciprocal atom with a monic base.
    pub fn inverse(&self) -> Result<Expr> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        if self.terms.len() == 1 {
            let t = &self.terms[0];
            return Ok(Expr::from_terms(vec![Term {
                factors: t.factors.iter().map(|(a, k)| (a.clone(), -k)).collect(),
                coeff: t.coeff.recip(),
            }]));
        }
        let c = self.terms[0].coeff.clone();
        let base = self.scale(&c.recip());
        Ok(Expr::from_terms(vec![Term {
            factors: vec![(Atom::Pow(base), -1)],
            coeff: c.recip(),
        }]))
    }

    pub fn powi(&self, k: i32) -> Result<Expr> {
        if k == 0 {
            return Ok(Expr::one());
        }
        if k < 0 {
            return self.inverse()?.powi(-k);
        }
        let mut acc = Expr::one();
        for _ in 0..k {
            acc = acc.mul(self);
        }
        Ok(acc)
    }

    pub fn div(&self, other: &Expr) -> Result<Expr> {
        Ok(self.mul(&other.inverse()?))
    }

    /// Exponential factor e^g, normalized to a primitive exponent with an
    /// integer power whenever the exponent's rational content is integer.
    pub fn exp(g: &Expr) -> Result<Expr> {
        if g.is_zero() {
            return Ok(Expr::one());
        }
        if g.as_rational().is_some() {
            return Err(Error::ExpOfConstant);
        }
        let mut content = BigRational::zero();
        for t in &g.terms {
            content = rat_gcd(&content, &t.coeff.abs());
        }
        let sign = if g.terms[0].coeff.is_negative() {
            -1
        } else {
            1
        };
        let k_rat = &content * rat_int(sign as i64);
        if k_rat.is_integer() {
            let k_big = k_rat.to_integer();
            if let Ok(k) = i32::try_from(&k_big) {
                let prim = g.scale(&k_rat.recip());
                return Ok(Expr::from_terms(vec![Term {
                    factors: vec![(Atom::Exp(prim), k)],
                    coeff: BigRational::one(),
                }]));
            }
        }
        let prim = g.scale(&rat_int(sign as i64));
        Ok(Expr::from_terms(vec![Term {
            factors: vec![(Atom::Exp(prim), sign)],
            coeff: BigRational::one(),
        }]))
    }

    /// Function-symbol application with eager rule handling: constraint
    /// rules rewrite derivatives in the killed slot; registered derivative
    /// templates replace first-order slot derivatives.
    pub fn func(sess: &Session, id: FuncId, der: Vec<u32>, args: Vec<Expr>) -> Result<Expr> {
        let def = sess.func(id);
        if args.len() != def.arity() || der.len() != def.arity() {
            return Err(Error::Arity {
                name: def.name.clone(),
                expected: def.arity(),
                got: args.len().max(der.len()),
            });
        }
        let mut der = der;
        let mut coeff = BigRational::one();
        if let Some(rule) = &def.constraint {
            while der[rule.kill] >= 1 {
                der[rule.kill] -= 1;
                coeff *= &rule.coeff;
                for (j, extra) in rule.add.iter().enumerate() {
                    der[j] += extra;
                }
            }
        }
        let templated = (0..def.arity()).find(|&j| der[j] >= 1 && def.derivative[j].is_some());
        if let Some(j) = templated {
            der[j] -= 1;
            let mut e = def.derivative[j].clone().unwrap();
            for (k, &times) in der.iter().enumerate() {
                for _ in 0..times {
                    e = partial_diff(sess, &e, &Atom::Param(k))?;
                }
            }
            for (k, arg) in args.iter().enumerate() {
                e = substitute(sess, &e, &Atom::Param(k), arg)?;
            }
            return Ok(e.scale(&coeff));
        }
        Ok(Expr::from_terms(vec![Term {
            factors: vec![(Atom::Func { id, der, args }, 1)],
            coeff,
        }]))
    }

    /// Visits every atom, including atoms nested inside function
    /// arguments, exponents and reciprocal bases. Composite atoms are
    /// visited before their contents.
    pub fn for_each_atom(&self, f: &mut dyn FnMut(&Atom)) {
        for t in &self.terms {
            for (a, _) in &t.factors {
                visit_atom(a, f);
            }
        }
    }

    pub fn any_atom(&self, pred: &dyn Fn(&Atom) -> bool) -> bool {
        let mut found = false;
        self.for_each_atom(&mut |a| {
            if pred(a) {
                found = true;
            }
        });
        found
    }

    /// All jet atoms (dep, idx) occurring anywhere in the expression.
    pub fn jet_atoms(&self) -> BTreeSet<(usize, MultiIndex)> {
        let mut out = BTreeSet::new();
        self.for_each_atom(&mut |a| {
            if let Atom::Jet { dep, idx } = a {
                out.insert((*dep, idx.clone()));
            }
        });
        out
    }

    /// True if `atom` occurs inside a composite atom (not at term level).
    pub fn occurs_nested(&self, atom: &Atom) -> bool {
        let mut found = false;
        for t in &self.terms {
            for (a, _) in &t.factors {
                if a != atom {
                    visit_atom(a, &mut |inner| {
                        if inner != a && inner == atom {
                            found = true;
                        }
                    });
                } else {
                    // the atom itself at term level: still need to check its innards
                    match a {
                        Atom::Func { args, .. } => {
                            for arg in args {
                                if arg.any_atom(&|x| x == atom) {
                                    found = true;
                                }
                            }
                        }
                        Atom::Exp(g) | Atom::Pow(g) if g.any_atom(&|x| x == atom) => {
                            found = true;
                        }
                        _ => {}
                    }
                }
            }
        }
        found
    }

    /// Splits the expression as a polynomial in `atom`: power -> cofactor.
    /// Errors if the atom occurs nested inside a composite atom.
    pub fn as_poly_in(&self, atom: &Atom) -> Result<BTreeMap<i32, Expr>> {
        if self.occurs_nested(atom) {
            return Err(Error::Unsupported(
                "atom occurs inside a composite factor; polynomial split unavailable".into(),
            ));
        }
        let mut out: BTreeMap<i32, Vec<Term>> = BTreeMap::new();
        for t in &self.terms {
            let k = t.power_of(atom);
            let rest = Term {
                factors: t
                    .factors
                    .iter()
                    .filter(|(a, _)| a != atom)
                    .cloned()
                    .collect(),
                coeff: t.coeff.clone(),
            };
            out.entry(k).or_default().push(rest);
        }
        Ok(out
            .into_iter()
            .map(|(k, ts)| (k, Expr::from_terms(ts)))
            .collect())
    }

    /// Splits into jet-homogeneous components: total jet degree -> part.
    /// Errors on negative jet powers.
    pub fn split_by_jet_degree(&self) -> Result<BTreeMap<u32, Expr>> {
        let mut out: BTreeMap<u32, Vec<Term>> = BTreeMap::new();
        for t in &self.terms {
            let d = t.jet_degree().ok_or_else(|| {
                Error::Unsupported("negative jet power in polynomial-only operation".into())
            })?;
            out.entry(d).or_default().push(t.clone());
        }
        Ok(out
            .into_iter()
            .map(|(d, ts)| (d, Expr { terms: ts }))
            .collect())
    }

    /// Exact rational evaluation under an atom binding. Exponential
    /// factors only evaluate when their exponent evaluates to zero;
    /// reciprocal bases are evaluated recursively.
    pub fn eval_rational(&self, bind: &BTreeMap<Atom, BigRational>) -> Result<BigRational> {
        let mut acc = BigRational::zero();
        for t in &self.terms {
            let mut v = t.coeff.clone();
            for (a, k) in &t.factors {
                let av = eval_atom(a, bind)?;
                v *= rat_pow(&av, *k)?;
            }
            acc += v;
        }
        Ok(acc)
    }
}

fn eval_atom(a: &Atom, bind: &BTreeMap<Atom, BigRational>) -> Result<BigRational> {
    match a {
        Atom::Exp(g) => {
            let gv = g.eval_rational(bind)?;
            if gv.is_zero() {
                Ok(BigRational::one())
            } else {
                Err(Error::Unsupported(
                    "exp factor with nonzero exponent in rational evaluation".into(),
                ))
            }
        }
        Atom::Pow(b) => b.eval_rational(bind),
        _ => bind
            .get(a)
            .cloned()
            .ok_or_else(|| Error::UnboundAtom(format!("{a:?}"))),
    }
}

fn visit_atom(a: &Atom, f: &mut dyn FnMut(&Atom)) {
    f(a);
    match a {
        Atom::Func { args, .. } => {
            for arg in args {
                arg.for_each_atom(f);
            }
        }
        Atom::Exp(g) | Atom::Pow(g) => g.for_each_atom(f),
        _ => {}
    }
}

/// Eligibility for the reciprocal elimination rule: the base's leading
/// monomial has positive powers only and shares no atoms with the tail
/// monomials (this guarantees termination).
fn elimination_eligible(b: &Expr) -> bool {
    let lead = &b.terms[0];
    if lead.factors.is_empty() || lead.factors.iter().any(|(_, p)| *p <= 0) {
        return false;
    }
    let lead_atoms: BTreeSet<&Atom> = lead.factors.iter().map(|(a, _)| a).collect();
    b.terms[1..]
        .iter()
        .all(|t| t.factors.iter().all(|(a, _)| !lead_atoms.contains(a)))
}

/// Replaces every occurrence of `target` (at term level and inside
/// composite atoms) by `repl`, recanonicalizing.
pub fn substitute(sess: &Session, e: &Expr, target: &Atom, repl: &Expr) -> Result<Expr> {
    let mut acc = Expr::zero();
    for t in e.terms() {
        let mut prod = Expr::from_rat(t.coeff.clone());
        for (a, k) in &t.factors {
            let base: Expr = if a == target {
                repl.clone()
            } else {
                rebuild_atom(sess, a, target, repl)?
            };
            prod = prod.mul(&base.powi(*k)?);
        }
        acc = acc.add(&prod);
    }
    Ok(acc)
}

/// The atom as a power-one expression with `target`->`repl` applied to its
/// contents.
fn rebuild_atom(sess: &Session, a: &Atom, target: &Atom, repl: &Expr) -> Result<Expr> {
    Ok(match a {
        Atom::Func { id, der, args } => {
            let mut new_args = Vec::with_capacity(args.len());
            let mut changed = false;
            for arg in args {
                let na = substitute(sess, arg, target, repl)?;
                changed |= &na != arg;
                new_args.push(na);
            }
            if changed {
                Expr::func(sess, *id, der.clone(), new_args)?
            } else {
                Expr::atom(a.clone())
            }
        }
        Atom::Exp(g) => {
            let ng = substitute(sess, g, target, repl)?;
            if &ng == g {
                Expr::atom(a.clone())
            } else {
                Expr::exp(&ng)?
            }
        }
        Atom::Pow(b) => {
            let nb = substitute(sess, b, target, repl)?;
            if &nb == b {
                Expr::atom(a.clone())
            } else {
                nb
            }
        }
        _ => Expr::atom(a.clone()),
    })
}

/// Generic derivation over the term algebra. `base` supplies the
/// derivative of leaf atoms (returning `None` delegates composite atoms to
/// structural recursion; leaf atoms it declines derive to zero).
pub fn derive(
    sess: &Session,
    e: &Expr,
    base: &mut dyn FnMut(&Atom) -> Result<Option<Expr>>,
) -> Result<Expr> {
    let mut acc = Expr::zero();
    for t in e.terms() {
        for (i, (a, k)) in t.factors.iter().enumerate() {
            let da = derive_atom(sess, a, base)?;
            if da.is_zero() {
                continue;
            }
            // coeff * k * a^{k-1} * da * (other factors)
            let mut factors: Vec<(Atom, i32)> = Vec::with_capacity(t.factors.len());
            for (j, (b, p)) in t.factors.iter().enumerate() {
                let p = if i == j { *p - 1 } else { *p };
                if p != 0 {
                    factors.push((b.clone(), p));
                }
            }
            let piece = Expr::from_terms(vec![Term {
                factors,
                coeff: &t.coeff * rat_int(*k as i64),
            }]);
            acc = acc.add(&piece.mul(&da));
        }
    }
    Ok(acc)
}

fn derive_atom(
    sess: &Session,
    a: &Atom,
    base: &mut dyn FnMut(&Atom) -> Result<Option<Expr>>,
) -> Result<Expr> {
    if let Some(d) = base(a)? {
        return Ok(d);
    }
    match a {
        Atom::Func { id, der, args } => {
            let mut acc = Expr::zero();
            for j in 0..args.len() {
                let darg = derive(sess, &args[j], base)?;
                if darg.is_zero() {
                    continue;
                }
                let mut der2 = der.clone();
                der2[j] += 1;
                let fj = Expr::func(sess, *id, der2, args.clone())?;
                acc = acc.add(&fj.mul(&darg));
            }
            Ok(acc)
        }
        Atom::Exp(g) => {
            let dg = derive(sess, g, base)?;
            if dg.is_zero() {
                return Ok(Expr::zero());
            }
            Ok(Expr::exp(g)?.mul(&dg))
        }
        // Pow(b) as an atom stands for b^1; the factor rule supplies the
        // k*b^{k-1} part.
        Atom::Pow(b) => derive(sess, b, base),
        _ => Ok(Expr::zero()),
    }
}

/// Formal partial derivative with respect to the atom `z` (chain rule
/// through function arguments, exponents and reciprocal bases).
pub fn partial_diff(sess: &Session, e: &Expr, z: &Atom) -> Result<Expr> {
    derive(sess, e, &mut |a| {
        if a == z {
            Ok(Some(Expr::one()))
        } else {
            match a {
                Atom::Indep(_) | Atom::Jet { .. } | Atom::Param(_) => Ok(Some(Expr::zero())),
                _ => Ok(None),
            }
        }
    })
}
