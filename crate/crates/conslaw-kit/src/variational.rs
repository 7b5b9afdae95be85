//! Variational operators on jet expressions: Euler operators (plain and
//! higher), Frechet derivatives and their adjoints, the total-divergence
//! test, and an exact homotopy inverting the divergence on polynomial
//! expressions.

use std::collections::BTreeSet;

use num::{BigInt, BigRational, One, Zero};

use crate::error::{Error, Result};
use crate::expr::{partial_diff, Atom, Expr};
use crate::jet::{total_derivative, total_derivative_multi};
use crate::multiindex::MultiIndex;
use crate::session::Session;

/// Sum of total derivatives of the components of a current.
pub fn divergence(sess: &Session, f: &[Expr]) -> Result<Expr> {
    if f.len() != sess.n() {
        return Err(Error::ComponentCount {
            expected: sess.n(),
            got: f.len(),
        });
    }
    let mut acc = Expr::zero();
    for (i, fi) in f.iter().enumerate() {
        acc = acc.add(&total_derivative(sess, fi, i)?);
    }
    Ok(acc)
}

fn jet_indices_of(e: &Expr, dep: usize) -> BTreeSet<MultiIndex> {
    e.jet_atoms()
        .into_iter()
        .filter(|(d, _)| *d == dep)
        .map(|(_, idx)| idx)
        .collect()
}

/// (-D)^alpha f = (-1)^{|alpha|} D^alpha f.
fn minus_d(sess: &Session, e: &Expr, alpha: &MultiIndex) -> Result<Expr> {
    let d = total_derivative_multi(sess, e, alpha)?;
    if alpha.order() % 2 == 1 {
        Ok(d.neg())
    } else {
        Ok(d)
    }
}

/// Euler operator in the dependent `dep`:
/// `E_dep(e) = sum_alpha (-D)^alpha (de/du_alpha)`.
pub fn euler(sess: &Session, e: &Expr, dep: usize) -> Result<Expr> {
    let mut acc = Expr::zero();
    for idx in jet_indices_of(e, dep) {
        let p = partial_diff(
            sess,
            e,
            &Atom::Jet {
                dep,
                idx: idx.clone(),
            },
        )?;
        acc = acc.add(&minus_d(sess, &p, &idx)?);
    }
    Ok(acc)
}

pub fn euler_all(sess: &Session, e: &Expr) -> Result<Vec<Expr>> {
    (0..sess.num_deps()).map(|a| euler(sess, e, a)).collect()
}

/// Higher Euler operator:
/// `E_dep^alpha(e) = sum_{beta >= alpha} C(beta, alpha) (-D)^{beta-alpha} (de/du_beta)`.
pub fn higher_euler(sess: &Session, e: &Expr, dep: usize, alpha: &MultiIndex) -> Result<Expr> {
    let mut acc = Expr::zero();
    for beta in jet_indices_of(e, dep) {
        if !beta.geq(alpha) {
            continue;
        }
        let c = beta.binom(alpha);
        if c.is_zero() {
            continue;
        }
        let p = partial_diff(
            sess,
            e,
            &Atom::Jet {
                dep,
                idx: beta.clone(),
            },
        )?;
        let delta = beta.checked_sub(alpha).unwrap();
        acc = acc.add(&minus_d(sess, &p, &delta)?.scale(&c));
    }
    Ok(acc)
}

/// An expression is a total divergence iff all its Euler components vanish.
pub fn is_total_divergence(sess: &Session, e: &Expr) -> Result<bool> {
    for a in 0..sess.num_deps() {
        if !euler(sess, e, a)?.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Frechet derivative of the vector `p` in the direction `q` (one entry
/// per dependent): `(D_p q)_i = sum_a sum_alpha dp_i/du^a_alpha D^alpha q_a`.
pub fn frechet(sess: &Session, p: &[Expr], q: &[Expr]) -> Result<Vec<Expr>> {
    if q.len() != sess.num_deps() {
        return Err(Error::ComponentCount {
            expected: sess.num_deps(),
            got: q.len(),
        });
    }
    let mut out = Vec::with_capacity(p.len());
    for pi in p {
        let mut acc = Expr::zero();
        for (a, idx) in pi.jet_atoms() {
            let c = partial_diff(
                sess,
                pi,
                &Atom::Jet {
                    dep: a,
                    idx: idx.clone(),
                },
            )?;
            acc = acc.add(&c.mul(&total_derivative_multi(sess, &q[a], &idx)?));
        }
        out.push(acc);
    }
    Ok(out)
}

/// Adjoint Frechet derivative applied to a covector `w` (one entry per
/// component of `p`): `(D_p^* w)_a = sum_i sum_alpha (-D)^alpha (dp_i/du^a_alpha * w_i)`.
pub fn frechet_adjoint(sess: &Session, p: &[Expr], w: &[Expr]) -> Result<Vec<Expr>> {
    if w.len() != p.len() {
        return Err(Error::ComponentCount {
            expected: p.len(),
            got: w.len(),
        });
    }
    let mut out = Vec::with_capacity(sess.num_deps());
    for a in 0..sess.num_deps() {
        let mut acc = Expr::zero();
        for (pi, wi) in p.iter().zip(w) {
            for idx in jet_indices_of(pi, a) {
                let c = partial_diff(
                    sess,
                    pi,
                    &Atom::Jet {
                        dep: a,
                        idx: idx.clone(),
                    },
                )?;
                acc = acc.add(&minus_d(sess, &c.mul(wi), &idx)?);
            }
        }
        out.push(acc);
    }
    Ok(out)
}

fn homotopy_precondition(sess: &Session, h: &Expr) -> Result<()> {
    let mut bad: Option<String> = None;
    h.for_each_atom(&mut |a| {
        if bad.is_some() {
            return;
        }
        match a {
            Atom::Indep(_) | Atom::Jet { .. } => {}
            Atom::Func { id, .. } if sess.func(*id).constant => {}
            _ => bad = Some(format!("{a:?}")),
        }
    });
    if let Some(b) = bad {
        return Err(Error::Unsupported(format!(
            "divergence homotopy needs a polynomial jet expression; found {b}"
        )));
    }
    for t in h.terms() {
        for (a, k) in &t.factors {
            if matches!(a, Atom::Jet { .. }) && *k < 0 {
                return Err(Error::Unsupported(
                    "divergence homotopy needs nonnegative jet powers".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Inverts the total divergence on polynomial expressions: given `h` with
/// all Euler components zero, returns a current `f` with `Div f = h`
/// exactly. Jet-dependent terms are handled by higher Euler operators with
/// a scaling homotopy resolved degree by degree; jet-free monomials by a
/// radial homotopy in the independents.
pub fn homotopy_divergence(sess: &Session, h: &Expr) -> Result<Vec<Expr>> {
    homotopy_precondition(sess, h)?;
    if !is_total_divergence(sess, h)? {
        return Err(Error::NotADivergence(
            "an Euler component of the input is nonzero".into(),
        ));
    }
    let n = sess.n();
    let mut f = vec![Expr::zero(); n];

    // candidate indices gamma per dependent with E^gamma possibly nonzero
    let mut gammas: Vec<BTreeSet<MultiIndex>> = vec![BTreeSet::new(); sess.num_deps()];
    for (a, beta) in h.jet_atoms() {
        for g in beta.iter_leq() {
            gammas[a].insert(g);
        }
    }

    for (a, gset) in gammas.iter().enumerate() {
        let u_a = Expr::jet(a, MultiIndex::zero(n));
        for gamma in gset {
            for (i, f_i) in f.iter_mut().enumerate() {
                if gamma.get(i) == 0 {
                    continue;
                }
                let alpha = gamma.checked_sub(&MultiIndex::unit(n, i)).unwrap();
                let e_gamma = higher_euler(sess, h, a, gamma)?;
                if e_gamma.is_zero() {
                    continue;
                }
                // (alpha_i + 1) / (|alpha| + 1)
                let c = BigRational::new(
                    BigInt::from(alpha.get(i) as i64 + 1),
                    BigInt::from(alpha.order() as i64 + 1),
                );
                let mut scaled = Expr::zero();
                for (d, piece) in e_gamma.split_by_jet_degree()? {
                    // scaling homotopy: a degree-d piece integrates to 1/(d+1)
                    let w = BigRational::new(BigInt::one(), BigInt::from(d as i64 + 1));
                    scaled = scaled.add(&piece.scale(&w));
                }
                let contrib = total_derivative_multi(sess, &u_a.mul(&scaled), &alpha)?.scale(&c);
                *f_i = f_i.add(&contrib);
            }
        }
    }

    // jet-free remainder: c * x^m = Div(x_i * c * x^m / (n + |m|))
    let div_so_far = divergence(sess, &f)?;
    let rest = h.sub(&div_so_far);
    for t in rest.terms() {
        if t.jet_degree() != Some(0) {
            return Err(Error::NotADivergence(
                "jet part not resolved by the homotopy".into(),
            ));
        }
        let mut total: i64 = n as i64;
        for (a, k) in &t.factors {
            if matches!(a, Atom::Indep(_)) {
                total += *k as i64;
            }
        }
        if total == 0 {
            return Err(Error::Unsupported(
                "jet-free monomial of radial degree -n has no polynomial potential".into(),
            ));
        }
        let te = Expr::from_terms(vec![t.clone()])
            .scale(&BigRational::new(BigInt::one(), BigInt::from(total)));
        for (i, fi) in f.iter_mut().enumerate() {
            *fi = fi.add(&Expr::indep(i).mul(&te));
        }
    }

    let check = divergence(sess, &f)?;
    if check != *h {
        return Err(Error::NotADivergence(
            "homotopy result failed the exact divergence check".into(),
        ));
    }
    Ok(f)
}

fn atom_depends_on(a: &Atom, dir: usize) -> bool {
    match a {
        Atom::Indep(j) => *j == dir,
        Atom::Jet { .. } => true,
        Atom::Func { args, .. } => args.iter().any(|g| depends_on(g, dir)),
        Atom::Exp(g) | Atom::Pow(g) => depends_on(g, dir),
        Atom::Param(_) => false,
    }
}

fn depends_on(e: &Expr, dir: usize) -> bool {
    e.terms()
        .iter()
        .any(|t| t.factors.iter().any(|(a, _)| atom_depends_on(a, dir)))
}

/// Antiderivative in the single variable `x_dir` for expressions free of
/// jet variables, found by a small rule table (power rule, exponential
/// patterns, integration by parts for `x^k e^{ax}`, exact-derivative
/// matching for reciprocal powers of sums). The result is verified by
/// differentiation; inputs outside the table give `NoRuleApplies`.
pub fn integrate_x(sess: &Session, e: &Expr, dir: usize) -> Result<Expr> {
    let mut phi = Expr::zero();

    // Terms sharing a reciprocal base are integrated as one group: the
    // canonical form spreads d/dx(c*b^{1-j}) over several powers of b, so
    // the exact-derivative ansatz must consume the whole group at once.
    let mut bases: Vec<Expr> = Vec::new();
    for t in e.terms() {
        for (a, k) in &t.factors {
            if let Atom::Pow(b) = a {
                if *k < 0 && depends_on(b, dir) && !bases.contains(b) {
                    bases.push(b.clone());
                }
            }
        }
    }
    let mut remaining: Vec<crate::expr::Term> = e.terms().to_vec();
    for b in bases {
        let pow_atom = Atom::Pow(b.clone());
        let (group, rest): (Vec<_>, Vec<_>) = remaining
            .into_iter()
            .partition(|t| t.factors.iter().any(|(a, _)| *a == pow_atom));
        remaining = rest;
        if group.is_empty() {
            continue;
        }
        let j = group.iter().map(|t| -t.power_of(&pow_atom)).max().unwrap();
        if j < 2 {
            return Err(Error::NoRuleApplies(
                "antiderivative of a reciprocal power would need a logarithm".into(),
            ));
        }
        let s = Expr::from_terms(group);
        let cand = b.powi(1 - j)?;
        let d = total_derivative(sess, &cand, dir)?;
        // clear b^{-j} from both sides so the quotient cancels exactly
        let bj = b.powi(j)?;
        let q = s.mul(&bj).div(&d.mul(&bj)).map_err(|_| {
            Error::NoRuleApplies("reciprocal group is not an exact derivative".into())
        })?;
        if depends_on(&q, dir) {
            return Err(Error::NoRuleApplies(
                "reciprocal group is not an exact derivative".into(),
            ));
        }
        phi = phi.add(&q.mul(&cand));
    }

    'terms: for t in &remaining {
        let te = Expr::from_terms(vec![t.clone()]);
        let xfac: Vec<(Atom, i32)> = t
            .factors
            .iter()
            .filter(|(a, _)| atom_depends_on(a, dir))
            .cloned()
            .collect();
        if xfac.is_empty() {
            phi = phi.add(&te.mul(&Expr::indep(dir)));
            continue;
        }
        // exact-derivative ansatz on exponential factors
        for (a, k) in &xfac {
            if !matches!(a, Atom::Exp(_)) {
                continue;
            }
            let cand = Expr::atom(a.clone()).powi(*k)?;
            let d = total_derivative(sess, &cand, dir)?;
            if d.is_zero() {
                continue;
            }
            let q = match te.div(&d) {
                Ok(q) => q,
                Err(_) => continue,
            };
            if !depends_on(&q, dir) {
                phi = phi.add(&q.mul(&cand));
                continue 'terms;
            }
        }
        // power rule
        if let [(Atom::Indep(_), k)] = xfac.as_slice() {
            if *k == -1 {
                return Err(Error::NoRuleApplies(
                    "antiderivative of a reciprocal power would need a logarithm".into(),
                ));
            }
            let xk1 = Expr::indep(dir).powi(k + 1)?;
            let c = te.div(&Expr::indep(dir).powi(*k)?)?;
            phi = phi.add(&c.mul(&xk1).scale(&BigRational::new(
                BigInt::one(),
                BigInt::from(*k as i64 + 1),
            )));
            continue;
        }
        // x^k * exp(g)^m with rational slope dg/dx
        if let [(Atom::Indep(_), k), (Atom::Exp(g), m)] | [(Atom::Exp(g), m), (Atom::Indep(_), k)] =
            xfac.as_slice()
        {
            if *k >= 1 {
                let slope = total_derivative(sess, g, dir)?;
                if let Some(a) = slope.as_rational() {
                    let rate = a * BigRational::from_integer(BigInt::from(*m as i64));
                    if !rate.is_zero() {
                        let ee = Expr::atom(Atom::Exp(g.clone())).powi(*m)?;
                        let c = te.div(&Expr::indep(dir).powi(*k)?)?.div(&ee)?;
                        // I_j = x^j e / rate - (j / rate) I_{j-1}
                        let mut i_j = ee.scale(&rate.recip());
                        for j in 1..=*k {
                            i_j = Expr::indep(dir).powi(j)?.mul(&ee).scale(&rate.recip()).sub(
                                &i_j.scale(
                                    &(BigRational::from_integer(BigInt::from(j as i64)) / &rate),
                                ),
                            );
                        }
                        phi = phi.add(&c.mul(&i_j));
                        continue;
                    }
                }
            }
        }
        return Err(Error::NoRuleApplies(format!(
            "no antiderivative rule for {:?}",
            xfac
        )));
    }
    if total_derivative(sess, &phi, dir)? != *e {
        return Err(Error::NoRuleApplies(
            "antiderivative candidate failed the derivative check".into(),
        ));
    }
    Ok(phi)
}

/// Antiderivative with respect to a single atom of an expression that is
/// polynomial in that atom (all other factors held fixed).
pub fn partial_antiderivative(_sess: &Session, e: &Expr, z: &Atom) -> Result<Expr> {
    let parts = e.as_poly_in(z)?;
    let mut acc = Expr::zero();
    for (k, c) in parts {
        if k == -1 {
            return Err(Error::NoRuleApplies(
                "antiderivative of a reciprocal power would need a logarithm".into(),
            ));
        }
        let zk = Expr::atom(z.clone()).powi(k + 1)?;
        acc = acc.add(
            &c.mul(&zk)
                .scale(&BigRational::new(BigInt::one(), BigInt::from(k as i64 + 1))),
        );
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sess() -> Session {
        let mut s = Session::new();
        s.add_indep("t").unwrap();
        s.add_indep("x").unwrap();
        s.add_dep("u").unwrap();
        s
    }

    fn u(i: u32, j: u32) -> Expr {
        Expr::jet(0, MultiIndex::new(vec![i, j]))
    }

    #[test]
    fn euler_kills_divergences() {
        let s = sess();
        // D_x(u u_x) = u_x^2 + u u_xx
        let e = u(0, 1).powi(2).unwrap().add(&u(0, 0).mul(&u(0, 2)));
        assert!(euler(&s, &e, 0).unwrap().is_zero());
        assert!(is_total_divergence(&s, &e).unwrap());
        // u_x u_t is not a divergence
        let ne = u(0, 1).mul(&u(1, 0));
        assert!(!is_total_divergence(&s, &ne).unwrap());
    }

    #[test]
    fn euler_of_quadratic_lagrangian() {
        let s = sess();
        let lag = u(0, 1)
            .powi(2)
            .unwrap()
            .scale(&BigRational::new(BigInt::one(), BigInt::from(2)));
        let e = euler(&s, &lag, 0).unwrap();
        assert_eq!(e, u(0, 2).neg());
    }

    #[test]
    fn higher_euler_at_zero_is_euler() {
        let s = sess();
        let e = u(0, 0).mul(&u(0, 2)).add(&u(1, 0).mul(&u(0, 1)));
        let z = MultiIndex::zero(2);
        assert_eq!(
            higher_euler(&s, &e, 0, &z).unwrap(),
            euler(&s, &e, 0).unwrap()
        );
    }

    #[test]
    fn homotopy_heat_flux() {
        let s = sess();
        let h = u(1, 0).sub(&u(0, 2));
        let f = homotopy_divergence(&s, &h).unwrap();
        assert_eq!(f, vec![u(0, 0), u(0, 1).neg()]);
    }

    #[test]
    fn homotopy_quadratic_flux() {
        let s = sess();
        let h = u(1, 0).add(&u(0, 0).mul(&u(0, 1)));
        let f = homotopy_divergence(&s, &h).unwrap();
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        assert_eq!(f, vec![u(0, 0), u(0, 0).powi(2).unwrap().scale(&half)]);
    }

    #[test]
    fn homotopy_handles_jet_free_terms() {
        let s = sess();
        let h = u(1, 0)
            .add(&Expr::indep(1).powi(3).unwrap())
            .add(&Expr::one());
        let f = homotopy_divergence(&s, &h).unwrap();
        assert_eq!(divergence(&s, &f).unwrap(), h);
    }

    #[test]
    fn homotopy_rejects_non_divergences_and_function_symbols() {
        let mut s = sess();
        assert!(matches!(
            homotopy_divergence(&s, &u(0, 1).mul(&u(1, 0))),
            Err(Error::NotADivergence(_))
        ));
        let a = s
            .add_func(crate::session::FuncDef::opaque("A", &["u"]))
            .unwrap();
        let e = Expr::func(&s, a, vec![1], vec![u(0, 0)])
            .unwrap()
            .mul(&u(0, 1));
        assert!(matches!(
            homotopy_divergence(&s, &e),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn antiderivatives_by_rule() {
        let s = sess();
        let x = Expr::indep(1);
        let check = |e: &Expr, expect: &Expr| {
            assert_eq!(integrate_x(&s, e, 1).unwrap(), *expect);
        };
        let third = BigRational::new(BigInt::one(), BigInt::from(3));
        check(&x.powi(2).unwrap(), &x.powi(3).unwrap().scale(&third));
        check(&x.powi(-2).unwrap(), &x.powi(-1).unwrap().neg());
        let ex = Expr::exp(&x).unwrap();
        check(&ex, &ex);
        // t is a constant for d/dx
        check(
            &Expr::indep(0).mul(&x),
            &Expr::indep(0)
                .mul(&x.powi(2).unwrap())
                .scale(&BigRational::new(BigInt::one(), BigInt::from(2))),
        );
        // by parts: int x^2 e^{3x}
        let e3x = Expr::exp(&x.scale(&BigRational::from_integer(BigInt::from(3)))).unwrap();
        let e = x.powi(2).unwrap().mul(&e3x);
        let phi = integrate_x(&s, &e, 1).unwrap();
        assert_eq!(total_derivative(&s, &phi, 1).unwrap(), e);
        // logarithmic cases are refused
        assert!(matches!(
            integrate_x(&s, &x.powi(-1).unwrap(), 1),
            Err(Error::NoRuleApplies(_))
        ));
    }

    #[test]
    fn antiderivative_of_reciprocal_sum_power() {
        let mut s = sess();
        let eps = s
            .add_func(crate::session::FuncDef::constant("eps"))
            .unwrap();
        let epse = Expr::func(&s, eps, vec![], vec![]).unwrap();
        let x = Expr::indep(1);
        let b = Expr::exp(&x).unwrap().add(&epse);
        let e = Expr::exp(&x).unwrap().mul(&b.powi(-2).unwrap());
        let phi = integrate_x(&s, &e, 1).unwrap();
        assert_eq!(phi, b.powi(-1).unwrap().neg());
        // first power would be a logarithm
        let e1 = Expr::exp(&x).unwrap().mul(&b.powi(-1).unwrap());
        assert!(integrate_x(&s, &e1, 1).is_err());
    }

    #[test]
    fn partial_antiderivative_in_a_jet() {
        let s = sess();
        let v = Atom::Jet {
            dep: 0,
            idx: MultiIndex::zero(2),
        };
        let ve = Expr::atom(v.clone());
        let e = ve.powi(2).unwrap().mul(&Expr::indep(0)).add(&Expr::one());
        let phi = partial_antiderivative(&s, &e, &v).unwrap();
        let third = BigRational::new(BigInt::one(), BigInt::from(3));
        let expect = ve
            .powi(3)
            .unwrap()
            .mul(&Expr::indep(0))
            .scale(&third)
            .add(&ve);
        assert_eq!(phi, expect);
        assert!(partial_antiderivative(&s, &ve.powi(-1).unwrap(), &v).is_err());
    }

    #[test]
    fn frechet_and_adjoint() {
        let mut s = sess();
        let mut hdef = crate::session::FuncDef::opaque("h", &["t", "x"]);
        hdef.constraint = None;
        let hid = s.add_func(hdef).unwrap();
        let h = Expr::func(&s, hid, vec![0, 0], vec![Expr::indep(0), Expr::indep(1)]).unwrap();
        let p = vec![u(1, 0).sub(&u(0, 2))];
        // linear operator: Frechet derivative reproduces it on its argument
        let dq = frechet(&s, &p, &[u(0, 0)]).unwrap();
        assert_eq!(dq, p);
        // adjoint of the heat operator is the backward heat operator
        let adj = frechet_adjoint(&s, &p, std::slice::from_ref(&h)).unwrap();
        let ht = Expr::func(&s, hid, vec![1, 0], vec![Expr::indep(0), Expr::indep(1)]).unwrap();
        let hxx = Expr::func(&s, hid, vec![0, 2], vec![Expr::indep(0), Expr::indep(1)]).unwrap();
        assert_eq!(adj, vec![ht.neg().sub(&hxx)]);
    }
}
