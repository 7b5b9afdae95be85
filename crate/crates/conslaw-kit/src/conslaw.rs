//! Conservation-law operations: verifying conserved currents, extracting
//! and verifying characteristics, the cosymmetry (adjoint-symmetry) test,
//! equivalence of conserved currents, and resolving two-dimensional null
//! divergences by a single potential function.

use std::collections::BTreeMap;

use crate::diffsys::{DiffSystem, TraceStep};
use crate::error::{Error, Result};
use crate::expr::{Atom, Expr};
use crate::jet::{total_derivative, total_derivative_multi};
use crate::multiindex::MultiIndex;
use crate::variational::{divergence, frechet_adjoint, integrate_x, partial_antiderivative};

const IBP_DEPTH: usize = 256;
const PEEL_FUEL: usize = 1024;

/// Multipliers of a conservation-law identity, one component per minimal
/// (non-excluded) equation of the system, in equation order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Characteristic {
    pub components: Vec<Expr>,
}

impl Characteristic {
    /// Component paired with the system equation `eq_idx`, if minimal.
    pub fn component_for(&self, sys: &DiffSystem, eq_idx: usize) -> Option<&Expr> {
        sys.minimal_indices()
            .iter()
            .position(|&k| k == eq_idx)
            .map(|p| &self.components[p])
    }
}

/// A current is conserved iff its divergence reduces to zero modulo the
/// system.
pub fn verify_conserved_vector(sys: &DiffSystem, f: &[Expr]) -> Result<()> {
    let div = divergence(sys.sess(), f)?;
    let r = sys.reduce(&div)?;
    if r.is_zero() {
        Ok(())
    } else {
        Err(Error::NotConserved(format!(
            "divergence does not vanish on solutions ({} residual terms)",
            r.terms().len()
        )))
    }
}

/// Checks the exact identity
/// `Div f = sum_k chi_k * (lead_k - rhs_k)` over the minimal equations.
pub fn verify_characteristic(sys: &DiffSystem, f: &[Expr], chi: &Characteristic) -> Result<()> {
    let minimal = sys.minimal_indices();
    if chi.components.len() != minimal.len() {
        return Err(Error::ComponentCount {
            expected: minimal.len(),
            got: chi.components.len(),
        });
    }
    let mut rhs = Expr::zero();
    for (c, &k) in chi.components.iter().zip(&minimal) {
        rhs = rhs.add(&c.mul(&sys.equations()[k].residual()));
    }
    let div = divergence(sys.sess(), f)?;
    if div == rhs {
        Ok(())
    } else {
        Err(Error::NotConserved(
            "characteristic identity does not hold exactly".into(),
        ))
    }
}

fn ibp(
    sys: &DiffSystem,
    eq_idx: usize,
    gamma: &MultiIndex,
    q: Expr,
    lambda: &mut BTreeMap<usize, Expr>,
    w: &mut [Expr],
    depth: usize,
) -> Result<()> {
    if q.is_zero() {
        return Ok(());
    }
    if depth > IBP_DEPTH {
        return Err(Error::Fuel("integration by parts recursed too deep".into()));
    }
    if let Some(i) = gamma.first_nonzero() {
        // q D^gamma(res) = D_i(q D^{gamma-e_i} res) - (D_i q) D^{gamma-e_i} res
        let gm = gamma
            .checked_sub(&MultiIndex::unit(gamma.len(), i))
            .unwrap();
        let dres = total_derivative_multi(sys.sess(), &sys.equations()[eq_idx].residual(), &gm)?;
        w[i] = w[i].add(&q.mul(&dres));
        let dq = total_derivative(sys.sess(), &q, i)?;
        ibp(sys, eq_idx, &gm, dq.neg(), lambda, w, depth + 1)
    } else {
        match &sys.equations()[eq_idx].excluded {
            None => {
                let entry = lambda.entry(eq_idx).or_insert_with(Expr::zero);
                *entry = entry.add(&q);
                Ok(())
            }
            Some(syz) => {
                // res = lambda_inv * sum sign * D_dir(res_part)
                for (pe, dir, sign) in &syz.parts {
                    let mut m = q.mul(&syz.lambda_inv);
                    if *sign < 0 {
                        m = m.neg();
                    }
                    ibp(
                        sys,
                        *pe,
                        &MultiIndex::unit(sys.sess().n(), *dir),
                        m,
                        lambda,
                        w,
                        depth + 1,
                    )?;
                }
                Ok(())
            }
        }
    }
}

/// Rewrites a reduction trace `sum q_i D^{alpha_i}(res(eq_i))` into
/// order-zero multipliers on the minimal equations plus a divergence
/// correction: `sum q_i D^{alpha_i}(res_i) = sum_k lambda_k res_k + Div w`.
pub(crate) fn attribute_trace(
    sys: &DiffSystem,
    steps: Vec<TraceStep>,
) -> Result<(BTreeMap<usize, Expr>, Vec<Expr>)> {
    let mut lambda: BTreeMap<usize, Expr> = BTreeMap::new();
    let mut w = vec![Expr::zero(); sys.sess().n()];
    for (k, alpha, q) in steps {
        ibp(sys, k, &alpha, q, &mut lambda, &mut w, 0)?;
    }
    Ok((lambda, w))
}

/// Extracts the characteristic of a conserved current, returning it
/// together with an adjusted current `f_tilde` (equal to `f` on
/// solutions) satisfying the characteristic identity exactly. Excluded
/// equations are resolved through their recorded syzygies, so their
/// multipliers are attributed to minimal equations.
pub fn extract_characteristic(sys: &DiffSystem, f: &[Expr]) -> Result<(Characteristic, Vec<Expr>)> {
    let div = divergence(sys.sess(), f)?;
    let (residual, steps) = sys.reduce_with_trace(&div)?;
    if !residual.is_zero() {
        return Err(Error::NotConserved(format!(
            "divergence does not vanish on solutions ({} residual terms)",
            residual.terms().len()
        )));
    }
    let (mut lambda, w) = attribute_trace(sys, steps)?;
    let f_tilde: Vec<Expr> = f.iter().zip(&w).map(|(fi, wi)| fi.sub(wi)).collect();
    let chi = Characteristic {
        components: sys
            .minimal_indices()
            .into_iter()
            .map(|k| lambda.remove(&k).unwrap_or_else(Expr::zero))
            .collect(),
    };
    verify_characteristic(sys, &f_tilde, &chi)?;
    Ok((chi, f_tilde))
}

/// A characteristic must be a cosymmetry: the adjoint linearization of
/// the minimal residuals applied to it vanishes on solutions.
pub fn cosymmetry_test(sys: &DiffSystem, chi: &Characteristic) -> Result<bool> {
    let minimal = sys.minimal_indices();
    if chi.components.len() != minimal.len() {
        return Err(Error::ComponentCount {
            expected: minimal.len(),
            got: chi.components.len(),
        });
    }
    let residuals: Vec<Expr> = minimal
        .iter()
        .map(|&k| sys.equations()[k].residual())
        .collect();
    let adj = frechet_adjoint(sys.sess(), &residuals, &chi.components)?;
    for comp in adj {
        if !sys.reduce(&comp)?.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Two conserved currents are equivalent when their difference is a
/// trivial conservation law: the difference must be conserved and its
/// extracted characteristic must vanish on solutions.
pub fn equivalent_conserved_vectors(sys: &DiffSystem, f: &[Expr], g: &[Expr]) -> Result<bool> {
    if f.len() != g.len() {
        return Err(Error::ComponentCount {
            expected: f.len(),
            got: g.len(),
        });
    }
    let d: Vec<Expr> = f.iter().zip(g).map(|(a, b)| a.sub(b)).collect();
    let div = divergence(sys.sess(), &d)?;
    if !sys.reduce(&div)?.is_zero() {
        return Ok(false);
    }
    let (chi, _) = extract_characteristic(sys, &d)?;
    for c in &chi.components {
        if !sys.reduce(c)?.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Resolves a two-dimensional null divergence: given a pair with
/// `D_t alpha + D_x beta = 0` (checked on solutions first, exactly at the
/// end), finds the potential `phi` with
/// `D_x phi = alpha` and `D_t phi = -beta`, both as exact identities.
/// The integration constant is pinned to zero.
pub fn solve_null_divergence_2d(sys: &DiffSystem, alpha: &Expr, beta: &Expr) -> Result<Expr> {
    let sess = sys.sess();
    if sess.n() != 2 {
        return Err(Error::UnsupportedSystem(
            "null-divergence resolution needs exactly two independent variables".into(),
        ));
    }
    let div = total_derivative(sess, alpha, 0)?.add(&total_derivative(sess, beta, 1)?);
    if !sys.reduce(&div)?.is_zero() {
        return Err(Error::NotNullDivergence);
    }
    let dx = MultiIndex::unit(2, 1);
    let mut a = alpha.clone();
    let mut phi = Expr::zero();
    let mut fuel = PEEL_FUEL;
    loop {
        let jets = a.jet_atoms();
        let Some((dep, idx)) = jets.into_iter().next_back() else {
            break;
        };
        if fuel == 0 {
            return Err(Error::Fuel("jet peeling did not terminate".into()));
        }
        fuel -= 1;
        let Some(w_idx) = idx.checked_sub(&dx) else {
            return Err(Error::NoRuleApplies(
                "component depends on a jet with no x-derivative to peel".into(),
            ));
        };
        let y = Atom::Jet { dep, idx };
        let parts = a.as_poly_in(&y)?;
        if parts.keys().any(|&k| k != 0 && k != 1) {
            return Err(Error::NoRuleApplies(
                "component is not linear in its highest jet".into(),
            ));
        }
        let c1 = parts.get(&1).cloned().unwrap_or_else(Expr::zero);
        let w_atom = Atom::Jet { dep, idx: w_idx };
        let piece = partial_antiderivative(sess, &c1, &w_atom)?;
        phi = phi.add(&piece);
        a = a.sub(&total_derivative(sess, &piece, 1)?);
    }
    phi = phi.add(&integrate_x(sess, &a, 1)?);
    // the x-integration misses any part of the potential depending on t
    // alone; it shows up as a leftover in the t-derivative
    let gamma = beta.neg().sub(&total_derivative(sess, &phi, 0)?);
    if !gamma.is_zero() {
        phi = phi.add(&integrate_x(sess, &gamma, 0)?);
    }
    if total_derivative(sess, &phi, 1)? != *alpha || total_derivative(sess, &phi, 0)? != beta.neg()
    {
        return Err(Error::NotNullDivergence);
    }
    Ok(phi)
}
