//! Systems of differential equations in solved form, together with the
//! induced rewriting (reduction modulo the system and its prolongations).
//!
//! Each equation is `u^a_alpha = rhs` with a designated leading jet. A jet
//! atom is reducible when its multi-index dominates some leading index of
//! the same dependent; reduction substitutes the correspondingly prolonged
//! right-hand side, always eliminating the currently largest reducible
//! atom (dependents in registration order, then derivative indices
//! lexicographically with the first independent weighted heaviest).
//!
//! An equation can be marked *excluded*: it remains a rewrite rule, but it
//! is not part of the minimal set that characteristics and cosymmetries
//! are indexed by. The attached [`Syzygy`] records how the excluded
//! residual is generated by derivatives of the minimal ones.

use crate::error::{Error, Result};
use crate::expr::{substitute, Atom, Expr};
use crate::jet::{total_derivative_multi, Weighting};
use crate::multiindex::MultiIndex;
use crate::session::Session;

const REDUCE_FUEL: usize = 50_000;
const INTERREDUCE_ROUNDS: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EqRole {
    Base,
    /// Flux equation of a potential: `pot` is the potential dependent,
    /// `dir` the direction whose flux the equation defines.
    Potential {
        pot: usize,
        dir: usize,
    },
}

/// Differential consequence relation for an excluded equation: its
/// residual L satisfies `L = lambda_inv * sum_i sign_i * D_{dir_i}(res(eq_i))`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Syzygy {
    pub lambda_inv: Expr,
    pub parts: Vec<(usize, usize, i8)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Equation {
    pub lead_dep: usize,
    pub lead_idx: MultiIndex,
    pub rhs: Expr,
    pub role: EqRole,
    pub excluded: Option<Syzygy>,
}

impl Equation {
    pub fn new(lead_dep: usize, lead_idx: MultiIndex, rhs: Expr) -> Equation {
        Equation {
            lead_dep,
            lead_idx,
            rhs,
            role: EqRole::Base,
            excluded: None,
        }
    }

    pub fn lead_atom(&self) -> Atom {
        Atom::Jet {
            dep: self.lead_dep,
            idx: self.lead_idx.clone(),
        }
    }

    pub fn lead_expr(&self) -> Expr {
        Expr::atom(self.lead_atom())
    }

    /// lead - rhs; vanishes on solutions.
    pub fn residual(&self) -> Expr {
        self.lead_expr().sub(&self.rhs)
    }
}

/// One step of a reduction certificate: equation index, the derivative
/// applied to its residual, and the multiplier in front of it.
pub type TraceStep = (usize, MultiIndex, Expr);

#[derive(Clone, Debug)]
pub struct DiffSystem {
    sess: Session,
    eqs: Vec<Equation>,
}

impl DiffSystem {
    pub fn new(sess: Session, eqs: Vec<Equation>) -> Result<DiffSystem> {
        let mut sys = DiffSystem {
            sess,
            eqs: Vec::new(),
        };
        let mut pending = eqs;
        for eq in pending.drain(..) {
            sys.push_equation(eq)?;
        }
        Ok(sys)
    }

    pub fn sess(&self) -> &Session {
        &self.sess
    }

    pub fn sess_mut(&mut self) -> &mut Session {
        &mut self.sess
    }

    pub fn equations(&self) -> &[Equation] {
        &self.eqs
    }

    pub fn minimal_indices(&self) -> Vec<usize> {
        (0..self.eqs.len())
            .filter(|&i| self.eqs[i].excluded.is_none())
            .collect()
    }

    pub fn exclude(&mut self, idx: usize, syz: Syzygy) {
        self.eqs[idx].excluded = Some(syz);
    }

    /// Appends an equation after validating solved form, checking that no
    /// leading jet dominates another on the same dependent, and
    /// inter-reducing all right-hand sides to a fixed point.
    pub fn push_equation(&mut self, eq: Equation) -> Result<usize> {
        let n = self.sess.n();
        if eq.lead_idx.len() != n || eq.lead_dep >= self.sess.num_deps() {
            return Err(Error::Invalid(
                "equation indexed outside the session".into(),
            ));
        }
        if eq.lead_idx.order() == 0 {
            return Err(Error::NotSolvedForm(format!(
                "leading jet of {} has derivative order zero",
                self.sess.dep_name(eq.lead_dep)
            )));
        }
        for other in &self.eqs {
            if other.lead_dep == eq.lead_dep
                && (other.lead_idx.geq(&eq.lead_idx) || eq.lead_idx.geq(&other.lead_idx))
            {
                return Err(Error::NotSolvedForm(format!(
                    "leading jets of {} overlap",
                    self.sess.dep_name(eq.lead_dep)
                )));
            }
        }
        let self_reducible = eq
            .rhs
            .jet_atoms()
            .into_iter()
            .any(|(dep, idx)| dep == eq.lead_dep && idx.geq(&eq.lead_idx));
        if self_reducible {
            return Err(Error::NotSolvedForm(
                "right-hand side contains the leading jet or a prolongation of it".into(),
            ));
        }
        self.eqs.push(eq);
        self.interreduce()?;
        Ok(self.eqs.len() - 1)
    }

    fn interreduce(&mut self) -> Result<()> {
        for _ in 0..INTERREDUCE_ROUNDS {
            let mut changed = false;
            for i in 0..self.eqs.len() {
                let reduced = self.reduce(&self.eqs[i].rhs)?;
                if reduced != self.eqs[i].rhs {
                    self.eqs[i].rhs = reduced;
                    changed = true;
                }
            }
            if !changed {
                return Ok(());
            }
        }
        Err(Error::Fuel(
            "inter-reduction of the system did not stabilize".into(),
        ))
    }

    fn find_rule(&self, dep: usize, idx: &MultiIndex) -> Option<usize> {
        self.eqs
            .iter()
            .enumerate()
            .filter(|(_, eq)| eq.lead_dep == dep && idx.geq(&eq.lead_idx))
            .max_by(|(_, a), (_, b)| a.lead_idx.cmp(&b.lead_idx))
            .map(|(i, _)| i)
    }

    fn max_reducible(&self, e: &Expr) -> Option<(usize, MultiIndex, usize)> {
        e.jet_atoms()
            .into_iter()
            .rev()
            .find_map(|(dep, idx)| self.find_rule(dep, &idx).map(|k| (dep, idx, k)))
    }

    /// Normal form of `e` modulo the system and its prolongations.
    /// Excluded equations participate as rewrite rules.
    pub fn reduce(&self, e: &Expr) -> Result<Expr> {
        let mut cur = e.clone();
        let mut fuel = REDUCE_FUEL;
        while let Some((dep, idx, k)) = self.max_reducible(&cur) {
            if fuel == 0 {
                return Err(Error::Fuel("reduction did not terminate".into()));
            }
            fuel -= 1;
            let eq = &self.eqs[k];
            let delta = idx.checked_sub(&eq.lead_idx).unwrap();
            let repl = total_derivative_multi(&self.sess, &eq.rhs, &delta)?;
            cur = substitute(&self.sess, &cur, &Atom::Jet { dep, idx }, &repl)?;
        }
        Ok(cur)
    }

    /// Reduction with an exact certificate:
    /// `e = residual + sum q_i * D^{alpha_i}(res(eq_i))`.
    /// Requires every eliminated jet to occur only at term level.
    pub fn reduce_with_trace(&self, e: &Expr) -> Result<(Expr, Vec<TraceStep>)> {
        let mut cur = e.clone();
        let mut steps: Vec<TraceStep> = Vec::new();
        let mut fuel = REDUCE_FUEL;
        while let Some((dep, idx, k)) = self.max_reducible(&cur) {
            if fuel == 0 {
                return Err(Error::Fuel("reduction did not terminate".into()));
            }
            fuel -= 1;
            let eq = &self.eqs[k];
            let delta = idx.checked_sub(&eq.lead_idx).unwrap();
            let repl = total_derivative_multi(&self.sess, &eq.rhs, &delta)?;
            let y = Atom::Jet { dep, idx };
            let parts = cur.as_poly_in(&y)?;
            // y^k - R^k = (y - R) * s_k with
            //   s_k =  sum_{j=0..k-1} y^j R^{k-1-j}          (k > 0)
            //   s_k = -sum_{j=k..-1} y^j R^{k-1-j}           (k < 0)
            let ye = Expr::atom(y.clone());
            let mut q = Expr::zero();
            let mut next = Expr::zero();
            for (p, c) in &parts {
                next = next.add(&c.mul(&repl.powi(*p)?));
                let mut s = Expr::zero();
                if *p > 0 {
                    for j in 0..*p {
                        s = s.add(&ye.powi(j)?.mul(&repl.powi(*p - 1 - j)?));
                    }
                } else if *p < 0 {
                    for j in *p..0 {
                        s = s.sub(&ye.powi(j)?.mul(&repl.powi(*p - 1 - j)?));
                    }
                }
                q = q.add(&c.mul(&s));
            }
            // multiplier applies to D^delta(lead - rhs) = y - R
            steps.push((k, delta, q));
            cur = next;
        }
        Ok((cur, steps))
    }

    /// Checks that every potential-flux equation does not raise the
    /// derivative weight: weight(lead) >= weight(rhs).
    pub fn check_weights(&self, w: &Weighting) -> Result<()> {
        for eq in &self.eqs {
            if let EqRole::Potential { .. } = eq.role {
                let lhs = w.rho[eq.lead_dep] + eq.lead_idx.order();
                let rhs = w.weight(&eq.rhs);
                if lhs < rhs {
                    return Err(Error::WeightAdmissibility(format!(
                        "flux equation for {} has weight {} on the left but {} on the right",
                        self.sess.dep_name(eq.lead_dep),
                        lhs,
                        rhs
                    )));
                }
            }
        }
        Ok(())
    }
}
