//! Expression generators shared by the integration test targets. Each
//! target compiles this module separately, so not every item is used by
//! every target.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num::{BigInt, BigRational};
use proptest::prelude::*;

use conslaw_kit::expr::{Atom, Expr};
use conslaw_kit::multiindex::MultiIndex;
use conslaw_kit::session::{FuncDef, Session};

pub fn sess_tu() -> Session {
    let mut s = Session::new();
    s.add_indep("t").unwrap();
    s.add_indep("x").unwrap();
    s.add_dep("u").unwrap();
    s
}

pub fn sess_rich() -> Session {
    let mut s = sess_tu();
    s.add_func(FuncDef::opaque("A", &["u"])).unwrap();
    s
}

/// Recipe for a generated expression. Strategies produce recipes, and the
/// properties materialize them against a session, so strategies stay
/// `'static` and shrinking works on plain data.
#[derive(Clone, Debug)]
pub enum Rx {
    Int(i64),
    T,
    X,
    /// Jet of `u` with the given (t, x) orders.
    Jet(u8, u8),
    /// `A(u)` with an opaque function symbol.
    FuncA,
    ExpU,
    ExpX,
    /// `(u + x + 2)^-1`.
    Inv,
    Add(Box<Rx>, Box<Rx>),
    Mul(Box<Rx>, Box<Rx>),
    Neg(Box<Rx>),
}

pub fn build(sess: &Session, r: &Rx) -> Expr {
    let u0 = || Expr::jet(0, MultiIndex::zero(2));
    match r {
        Rx::Int(k) => Expr::from_int(*k),
        Rx::T => Expr::indep(0),
        Rx::X => Expr::indep(1),
        Rx::Jet(a, b) => Expr::jet(0, MultiIndex::new(vec![*a as u32, *b as u32])),
        Rx::FuncA => {
            let id = sess.func_index("A").unwrap();
            Expr::func(sess, id, vec![0], vec![u0()]).unwrap()
        }
        Rx::ExpU => Expr::exp(&u0()).unwrap(),
        Rx::ExpX => Expr::exp(&Expr::indep(1)).unwrap(),
        Rx::Inv => u0()
            .add(&Expr::indep(1))
            .add(&Expr::from_int(2))
            .inverse()
            .unwrap(),
        Rx::Add(a, b) => build(sess, a).add(&build(sess, b)),
        Rx::Mul(a, b) => build(sess, a).mul(&build(sess, b)),
        Rx::Neg(a) => build(sess, a).neg(),
    }
}

fn compose(leaf: BoxedStrategy<Rx>) -> BoxedStrategy<Rx> {
    leaf.prop_recursive(3, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Rx::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Rx::Mul(Box::new(a), Box::new(b))),
            inner.prop_map(|a| Rx::Neg(Box::new(a))),
        ]
    })
    .boxed()
}

/// Polynomials in t, x and jets of u up to order (1, 2).
pub fn arb_poly() -> BoxedStrategy<Rx> {
    compose(
        prop_oneof![
            (-4i64..=4).prop_map(Rx::Int),
            Just(Rx::T),
            Just(Rx::X),
            (0u8..=1, 0u8..=2).prop_map(|(a, b)| Rx::Jet(a, b)),
        ]
        .boxed(),
    )
}

/// Jet-free polynomials in t and x.
pub fn arb_base_poly() -> BoxedStrategy<Rx> {
    compose(prop_oneof![(-4i64..=4).prop_map(Rx::Int), Just(Rx::T), Just(Rx::X),].boxed())
}

/// Expressions drawing on the full atom inventory: function symbols,
/// exponential factors, and reciprocals of sums.
pub fn arb_rich() -> BoxedStrategy<Rx> {
    compose(
        prop_oneof![
            (-4i64..=4).prop_map(Rx::Int),
            Just(Rx::T),
            Just(Rx::X),
            (0u8..=1, 0u8..=2).prop_map(|(a, b)| Rx::Jet(a, b)),
            Just(Rx::FuncA),
            Just(Rx::ExpU),
            Just(Rx::ExpX),
            Just(Rx::Inv),
        ]
        .boxed(),
    )
}

pub fn rat(n: i32, d: u8) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d as i64 + 1))
}

/// Binds every atom the polynomial generator can produce.
pub fn bindings(vals: &[(i32, u8); 8]) -> BTreeMap<Atom, BigRational> {
    let mut b = BTreeMap::new();
    b.insert(Atom::Indep(0), rat(vals[0].0, vals[0].1));
    b.insert(Atom::Indep(1), rat(vals[1].0, vals[1].1));
    let mut i = 2;
    for dt in 0..=1u32 {
        for dx in 0..=2u32 {
            b.insert(
                Atom::jet(0, MultiIndex::new(vec![dt, dx])),
                rat(vals[i].0, vals[i].1),
            );
            i += 1;
        }
    }
    b
}
