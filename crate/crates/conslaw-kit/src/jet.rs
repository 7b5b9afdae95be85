//! Jet-space calculus: total derivatives, derivative weights, and total
//! derivatives lifted to coverings (where new dependent variables are
//! replaced by their defining fluxes).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::{derive, Atom, Expr};
use crate::multiindex::MultiIndex;
use crate::session::Session;

/// Per-dependent base weights; the weight of a jet atom u^a_alpha is
/// `rho[a] + |alpha|`, independents weigh 0, and composite factors weigh
/// the maximum over their contents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Weighting {
    pub rho: Vec<u32>,
}

impl Weighting {
    pub fn uniform(num_deps: usize, r: u32) -> Weighting {
        Weighting {
            rho: vec![r; num_deps],
        }
    }

    pub fn weight(&self, e: &Expr) -> u32 {
        let mut w = 0;
        e.for_each_atom(&mut |a| {
            if let Atom::Jet { dep, idx } = a {
                w = w.max(self.rho[*dep] + idx.order());
            }
        });
        w
    }
}

/// Total derivative D_i acting on jet expressions.
pub fn total_derivative(sess: &Session, e: &Expr, dir: usize) -> Result<Expr> {
    derive(sess, e, &mut |a| match a {
        Atom::Indep(j) => Ok(Some(if *j == dir { Expr::one() } else { Expr::zero() })),
        Atom::Jet { dep, idx } => Ok(Some(Expr::jet(*dep, idx.bump(dir)))),
        Atom::Param(_) => Err(Error::Invalid(
            "parameter placeholder in a total derivative".into(),
        )),
        _ => Ok(None),
    })
}

/// D^alpha = product of D_i^{alpha_i}.
pub fn total_derivative_multi(sess: &Session, e: &Expr, alpha: &MultiIndex) -> Result<Expr> {
    let mut acc = e.clone();
    for dir in 0..alpha.len() {
        for _ in 0..alpha.get(dir) {
            acc = total_derivative(sess, &acc, dir)?;
        }
    }
    Ok(acc)
}

/// Defining fluxes of a covering: for each covering dependent `v`,
/// `fluxes[v][i]` is the expression replacing `v_{x_i}`.
#[derive(Clone, Debug, Default)]
pub struct CoveringFluxes {
    pub deps: BTreeMap<usize, Vec<Expr>>,
}

impl CoveringFluxes {
    pub fn covers(&self, dep: usize) -> bool {
        self.deps.contains_key(&dep)
    }
}

/// Total derivative lifted to a covering: first derivatives of covering
/// dependents are replaced by the defining fluxes. Higher jets of a
/// covering dependent must not occur.
pub fn covering_total_derivative(
    sess: &Session,
    e: &Expr,
    dir: usize,
    fluxes: &CoveringFluxes,
) -> Result<Expr> {
    derive(sess, e, &mut |a| match a {
        Atom::Indep(j) => Ok(Some(if *j == dir { Expr::one() } else { Expr::zero() })),
        Atom::Jet { dep, idx } => {
            if let Some(g) = fluxes.deps.get(dep) {
                if idx.is_zero() {
                    Ok(Some(g[dir].clone()))
                } else {
                    Err(Error::Unsupported(format!(
                        "prolonged covering variable {} in a lifted derivative",
                        sess.dep_name(*dep)
                    )))
                }
            } else {
                Ok(Some(Expr::jet(*dep, idx.bump(dir))))
            }
        }
        Atom::Param(_) => Err(Error::Invalid(
            "parameter placeholder in a total derivative".into(),
        )),
        _ => Ok(None),
    })
}
