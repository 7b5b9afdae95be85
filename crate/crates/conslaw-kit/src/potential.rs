//! Potential systems and coverings: introducing potentials from conserved
//! currents, detecting induced syzygies, extending weightings, and deciding
//! whether a conservation law of the extended system is induced by a local
//! one (with an explicit localized witness when it is).

use std::collections::BTreeSet;

use crate::conslaw::{
    attribute_trace, equivalent_conserved_vectors, extract_characteristic,
    solve_null_divergence_2d, verify_characteristic, verify_conserved_vector, Characteristic,
};
use crate::diffsys::{DiffSystem, EqRole, Equation, Syzygy};
use crate::error::{Error, Result};
use crate::expr::{partial_diff, Atom, Expr};
use crate::jet::{covering_total_derivative, total_derivative, CoveringFluxes, Weighting};
use crate::multiindex::MultiIndex;
use crate::parse::print_expr;
use crate::variational::divergence;

/// How the extension was built; some operations are only sound (or only
/// implemented) for particular kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoveringKind {
    /// Two-dimensional potential system: one potential per conserved
    /// current, defined by `v_t = -G`, `v_x = F` for the current `(F, G)`.
    TwoDim,
    /// Abelian covering: potentials defined by `v_i = G^i` with local
    /// fluxes, in any number of independent variables.
    Abelian,
    /// Standard potential system in three independent variables: a
    /// conserved current introduces three potentials with antisymmetric
    /// couplings.
    Standard,
    /// General covering: fluxes may involve the new dependents themselves
    /// (at order zero).
    General,
}

/// A base system together with a potential extension of it. `combined`
/// holds the base equations followed by the defining equations of all
/// potentials; equations made redundant by an induced syzygy are marked
/// excluded there.
#[derive(Clone, Debug)]
pub struct PotentialStructure {
    pub kind: CoveringKind,
    pub base: DiffSystem,
    pub combined: DiffSystem,
    /// All potential dependents, in introduction order.
    pub pot_deps: Vec<usize>,
    /// Potential dependents grouped by introduction step (singletons except
    /// for the standard kind).
    pub blocks: Vec<Vec<usize>>,
    /// Combined-system equation indices of each block's defining equations.
    pub block_eqs: Vec<Vec<usize>>,
    /// Conserved currents of the combined system expressing the
    /// compatibility of each block's defining equations.
    pub compat_cvs: Vec<Vec<Expr>>,
    /// For general coverings, the flux map used to lift total derivatives.
    pub covering: Option<CoveringFluxes>,
}

impl PotentialStructure {
    pub fn is_potential_dep(&self, dep: usize) -> bool {
        self.pot_deps.contains(&dep)
    }

    /// Does the expression involve any potential dependent (at any jet
    /// order, anywhere, including inside function arguments)?
    pub fn contains_potential(&self, e: &Expr) -> bool {
        e.any_atom(&|a| matches!(a, Atom::Jet { dep, .. } if self.pot_deps.contains(dep)))
    }

    /// All jet atoms of potential dependents occurring in the expression.
    pub fn potential_atoms(&self, e: &Expr) -> Vec<Atom> {
        let mut out: BTreeSet<Atom> = BTreeSet::new();
        e.for_each_atom(&mut |a| {
            if let Atom::Jet { dep, .. } = a {
                if self.pot_deps.contains(dep) {
                    out.insert(a.clone());
                }
            }
        });
        out.into_iter().collect()
    }
}

fn pot_eq(dep: usize, dir: usize, rhs: Expr, n: usize) -> Equation {
    let mut eq = Equation::new(dep, MultiIndex::unit(n, dir), rhs);
    eq.role = EqRole::Potential { pot: dep, dir };
    eq
}

/// Looks for an equation made redundant by the compatibility of the given
/// `parts`: forms `W = sum sign * D_dir(res(part))` and checks whether it
/// equals `lambda * res(m)` exactly for some minimal equation `m` not among
/// the parts, with `lambda` free of the lead of `m` and invertible. The
/// first match is excluded and recorded.
fn exclusion_pass(sys: &mut DiffSystem, parts: Vec<(usize, usize, i8)>) -> Result<Option<usize>> {
    let mut w = Expr::zero();
    for &(eq, dir, sign) in &parts {
        let d = total_derivative(sys.sess(), &sys.equations()[eq].residual(), dir)?;
        w = if sign < 0 { w.sub(&d) } else { w.add(&d) };
    }
    if w.is_zero() {
        return Ok(None);
    }
    let part_eqs: BTreeSet<usize> = parts.iter().map(|p| p.0).collect();
    for m in sys.minimal_indices() {
        if part_eqs.contains(&m) {
            continue;
        }
        let lead = sys.equations()[m].lead_atom();
        let lam = partial_diff(sys.sess(), &w, &lead)?;
        if lam.is_zero() || lam.any_atom(&|a| *a == lead) {
            continue;
        }
        if w != lam.mul(&sys.equations()[m].residual()) {
            continue;
        }
        let Ok(lambda_inv) = lam.inverse() else {
            continue;
        };
        sys.exclude(m, Syzygy { lambda_inv, parts });
        return Ok(Some(m));
    }
    Ok(None)
}

/// Builds a two-dimensional potential system over `base`: each named
/// conserved current `(F, G)` (verified, then adjusted so its
/// characteristic identity holds exactly) introduces one potential with
/// `v_t = -G~`, `v_x = F~`. Currents are processed in order over the
/// growing combined system, so later entries may involve earlier
/// potentials. After each step an induced syzygy is searched for and the
/// redundant equation excluded.
pub fn potential_system_2d(
    base: &DiffSystem,
    cvs: &[(String, Vec<Expr>)],
) -> Result<PotentialStructure> {
    if base.sess().n() != 2 {
        return Err(Error::UnsupportedSystem(
            "potential systems of this form need exactly two independent variables".into(),
        ));
    }
    let mut combined = base.clone();
    let mut pot_deps = Vec::new();
    let mut blocks = Vec::new();
    let mut block_eqs = Vec::new();
    let mut compat_cvs = Vec::new();
    for (name, cv) in cvs {
        if cv.len() != 2 {
            return Err(Error::ComponentCount {
                expected: 2,
                got: cv.len(),
            });
        }
        let (_, ft) = extract_characteristic(&combined, cv)?;
        let v = combined.sess_mut().add_dep(name)?;
        let t_eq = combined.push_equation(pot_eq(v, 0, ft[1].neg(), 2))?;
        let x_eq = combined.push_equation(pot_eq(v, 1, ft[0].clone(), 2))?;
        exclusion_pass(&mut combined, vec![(t_eq, 1, 1), (x_eq, 0, -1)])?;
        pot_deps.push(v);
        blocks.push(vec![v]);
        block_eqs.push(vec![t_eq, x_eq]);
        compat_cvs.push(ft);
    }
    Ok(PotentialStructure {
        kind: CoveringKind::TwoDim,
        base: base.clone(),
        combined,
        pot_deps,
        blocks,
        block_eqs,
        compat_cvs,
        covering: None,
    })
}

/// Builds an Abelian covering over `base`: each potential is defined by
/// `v_i = G^i` with fluxes local in the pre-existing variables. The
/// cross-derivative compatibility `D_i G^j - D_j G^i = 0` must hold on
/// solutions for every direction pair; otherwise the reduced residual is
/// reported. In two dimensions this coincides with [`potential_system_2d`]
/// applied to the current `(G^x, -G^t)`.
pub fn abelian_covering(
    base: &DiffSystem,
    pots: &[(String, Vec<Expr>)],
) -> Result<PotentialStructure> {
    let n = base.sess().n();
    let mut combined = base.clone();
    let mut pot_deps = Vec::new();
    let mut blocks = Vec::new();
    let mut block_eqs = Vec::new();
    let mut compat_cvs = Vec::new();
    for (name, g) in pots {
        if g.len() != n {
            return Err(Error::ComponentCount {
                expected: n,
                got: g.len(),
            });
        }
        let next = combined.sess().num_deps();
        for gi in g {
            if gi.jet_atoms().iter().any(|(d, _)| *d >= next) {
                return Err(Error::Invalid(
                    "abelian covering fluxes must be local in the pre-existing variables".into(),
                ));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let r = total_derivative(combined.sess(), &g[j], i)?.sub(&total_derivative(
                    combined.sess(),
                    &g[i],
                    j,
                )?);
                let rr = combined.reduce(&r)?;
                if !rr.is_zero() {
                    return Err(Error::IncompatibleFluxes(print_expr(combined.sess(), &rr)));
                }
            }
        }
        let v = combined.sess_mut().add_dep(name)?;
        let mut eqs = Vec::new();
        for (i, gi) in g.iter().enumerate() {
            eqs.push(combined.push_equation(pot_eq(v, i, gi.clone(), n))?);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                exclusion_pass(&mut combined, vec![(eqs[i], j, 1), (eqs[j], i, -1)])?;
                let mut cv = vec![Expr::zero(); n];
                cv[i] = g[j].clone();
                cv[j] = g[i].neg();
                compat_cvs.push(cv);
            }
        }
        pot_deps.push(v);
        blocks.push(vec![v]);
        block_eqs.push(eqs);
    }
    Ok(PotentialStructure {
        kind: CoveringKind::Abelian,
        base: base.clone(),
        combined,
        pot_deps,
        blocks,
        block_eqs,
        compat_cvs,
        covering: None,
    })
}

/// Builds a general covering over `base`: pseudo-potentials defined by
/// `v_i = G^i` where the fluxes may involve any of the new dependents at
/// order zero (their names are registered first, in order). Compatibility
/// is checked with total derivatives lifted through the flux map; an
/// incompatible pair reports its reduced residual.
pub fn general_covering(
    base: &DiffSystem,
    pots: &[(String, Vec<Expr>)],
) -> Result<PotentialStructure> {
    let n = base.sess().n();
    let first_new = base.sess().num_deps();
    let mut combined = base.clone();
    let mut pot_deps = Vec::new();
    for (name, g) in pots {
        if g.len() != n {
            return Err(Error::ComponentCount {
                expected: n,
                got: g.len(),
            });
        }
        pot_deps.push(combined.sess_mut().add_dep(name)?);
    }
    let mut fluxes = CoveringFluxes::default();
    for (s, (_, g)) in pots.iter().enumerate() {
        for gi in g {
            if gi
                .jet_atoms()
                .iter()
                .any(|(d, idx)| *d >= first_new && idx.order() > 0)
            {
                return Err(Error::Invalid(
                    "covering fluxes may involve the new dependents at order zero only".into(),
                ));
            }
        }
        fluxes.deps.insert(pot_deps[s], g.clone());
    }
    for (_, g) in pots {
        for i in 0..n {
            for j in (i + 1)..n {
                let r = covering_total_derivative(combined.sess(), &g[j], i, &fluxes)?.sub(
                    &covering_total_derivative(combined.sess(), &g[i], j, &fluxes)?,
                );
                let rr = combined.reduce(&r)?;
                if !rr.is_zero() {
                    return Err(Error::IncompatibleFluxes(print_expr(combined.sess(), &rr)));
                }
            }
        }
    }
    let mut blocks = Vec::new();
    let mut block_eqs = Vec::new();
    let mut compat_cvs = Vec::new();
    for (s, (_, g)) in pots.iter().enumerate() {
        let v = pot_deps[s];
        let mut eqs = Vec::new();
        for (i, gi) in g.iter().enumerate() {
            eqs.push(combined.push_equation(pot_eq(v, i, gi.clone(), n))?);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                exclusion_pass(&mut combined, vec![(eqs[i], j, 1), (eqs[j], i, -1)])?;
                let mut cv = vec![Expr::zero(); n];
                cv[i] = g[j].clone();
                cv[j] = g[i].neg();
                compat_cvs.push(cv);
            }
        }
        blocks.push(vec![v]);
        block_eqs.push(eqs);
    }
    Ok(PotentialStructure {
        kind: CoveringKind::General,
        base: base.clone(),
        combined,
        pot_deps,
        blocks,
        block_eqs,
        compat_cvs,
        covering: Some(fluxes),
    })
}

/// Builds a standard potential system in three independent variables: a
/// verified conserved current `(F^0, F^1, F^2)` introduces three potentials
/// coupled antisymmetrically,
/// `F^0 = D_1 v01 + D_2 v02`, `F^1 = -D_0 v01 + D_2 v12`,
/// `F^2 = -D_0 v02 - D_1 v12`,
/// solved for the non-overlapping leads `v01_1`, `v12_2`, `v02_0`.
/// Potential names append the independent-variable letters to `name`.
pub fn standard_potential_system(
    base: &DiffSystem,
    cvs: &[(String, Vec<Expr>)],
) -> Result<PotentialStructure> {
    let n = base.sess().n();
    if n != 3 {
        return Err(Error::UnsupportedSystem(
            "standard potential systems are implemented for exactly three independent variables"
                .into(),
        ));
    }
    let mut combined = base.clone();
    let mut pot_deps = Vec::new();
    let mut blocks = Vec::new();
    let mut block_eqs = Vec::new();
    let mut compat_cvs = Vec::new();
    for (name, cv) in cvs {
        if cv.len() != 3 {
            return Err(Error::ComponentCount {
                expected: 3,
                got: cv.len(),
            });
        }
        verify_conserved_vector(&combined, cv)?;
        let mut vs = Vec::new();
        for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let pname = format!(
                "{}{}{}",
                name,
                combined.sess().indep_name(i),
                combined.sess().indep_name(j)
            );
            vs.push(combined.sess_mut().add_dep(&pname)?);
        }
        let (v01, v02, v12) = (vs[0], vs[1], vs[2]);
        let e0 = combined.push_equation(pot_eq(
            v01,
            1,
            cv[0].sub(&Expr::jet(v02, MultiIndex::unit(3, 2))),
            3,
        ))?;
        let e1 = combined.push_equation(pot_eq(
            v12,
            2,
            cv[1].add(&Expr::jet(v01, MultiIndex::unit(3, 0))),
            3,
        ))?;
        let e2 = combined.push_equation(pot_eq(
            v02,
            0,
            cv[2].neg().sub(&Expr::jet(v12, MultiIndex::unit(3, 1))),
            3,
        ))?;
        exclusion_pass(&mut combined, vec![(e0, 0, -1), (e1, 1, -1), (e2, 2, 1)])?;
        pot_deps.extend_from_slice(&vs);
        blocks.push(vs);
        block_eqs.push(vec![e0, e1, e2]);
        compat_cvs.push(cv.clone());
    }
    Ok(PotentialStructure {
        kind: CoveringKind::Standard,
        base: base.clone(),
        combined,
        pot_deps,
        blocks,
        block_eqs,
        compat_cvs,
        covering: None,
    })
}

/// Reduced cross-derivative residuals of a flux map over `sys`, one per
/// covering dependent and direction pair (i < j), in order. Zero residuals
/// mean the covering is compatible over `sys`.
pub fn covering_residuals(sys: &DiffSystem, fluxes: &CoveringFluxes) -> Result<Vec<Expr>> {
    let n = sys.sess().n();
    let mut out = Vec::new();
    for g in fluxes.deps.values() {
        if g.len() != n {
            return Err(Error::ComponentCount {
                expected: n,
                got: g.len(),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let r = covering_total_derivative(sys.sess(), &g[j], i, fluxes)?
                    .sub(&covering_total_derivative(sys.sess(), &g[i], j, fluxes)?);
                out.push(sys.reduce(&r)?);
            }
        }
    }
    Ok(out)
}

/// Extends a weighting of the base dependents to the potentials: each
/// block's potentials get weight `max(0, max over the block's defining
/// equations of (weight of rhs) - 1)`, iterated to a fixed point, then
/// checked for admissibility on the combined system.
pub fn extend_weighting(st: &PotentialStructure, base: &Weighting) -> Result<Weighting> {
    let total = st.combined.sess().num_deps();
    if base.rho.len() > total {
        return Err(Error::Invalid(format!(
            "weighting has {} entries but the combined system has {} dependents",
            base.rho.len(),
            total
        )));
    }
    let mut rho = base.rho.clone();
    rho.resize(total, 0);
    for _ in 0..4 {
        let mut changed = false;
        let w = Weighting { rho: rho.clone() };
        for (bi, block) in st.blocks.iter().enumerate() {
            let mut need = 0u32;
            for &eq in &st.block_eqs[bi] {
                need = need.max(w.weight(&st.combined.equations()[eq].rhs).saturating_sub(1));
            }
            for &d in block {
                if rho[d] != need {
                    rho[d] = need;
                    changed = true;
                }
            }
        }
        if !changed {
            let w = Weighting { rho };
            st.combined.check_weights(&w)?;
            return Ok(w);
        }
    }
    Err(Error::WeightAdmissibility(
        "potential weights did not stabilize".into(),
    ))
}

/// Outcome of the purity test for a conservation law of the combined
/// system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PurityVerdict {
    /// The characteristic vanishes on solutions: the law is trivial.
    Trivial,
    /// The reduced characteristic still involves potential jets (listed):
    /// the law is a strictly potential one, not induced by any local law.
    PurelyPotential { atoms: Vec<Atom> },
    /// The reduced characteristic is potential-free: the law is induced by
    /// a local conservation law of the base system. If a conserved current
    /// was supplied, `witness` is an equivalent potential-free current.
    Induced { witness: Option<Vec<Expr>> },
}

/// Decides whether a conservation law of the combined system, given by its
/// characteristic, is trivial, strictly potential, or induced by a local
/// law of the base system. For two-dimensional potential systems and
/// Abelian coverings this criterion is exact. For standard potential
/// systems a potential-free reduced characteristic still guarantees
/// inducedness (the converse direction is not used here). General
/// coverings are refused: reducing the characteristic cannot decide purity
/// there.
pub fn purity_test(
    st: &PotentialStructure,
    chi: &Characteristic,
    cv: Option<&[Expr]>,
) -> Result<PurityVerdict> {
    if st.kind == CoveringKind::General {
        return Err(Error::Unsupported(
            "the potential-dependence criterion does not decide purity over a general covering"
                .into(),
        ));
    }
    let reduced: Vec<Expr> = chi
        .components
        .iter()
        .map(|c| st.combined.reduce(c))
        .collect::<Result<_>>()?;
    if reduced.iter().all(Expr::is_zero) {
        return Ok(PurityVerdict::Trivial);
    }
    let mut atoms: BTreeSet<Atom> = BTreeSet::new();
    for c in &reduced {
        for a in st.potential_atoms(c) {
            atoms.insert(a);
        }
    }
    if !atoms.is_empty() {
        return Ok(PurityVerdict::PurelyPotential {
            atoms: atoms.into_iter().collect(),
        });
    }
    let rchi = Characteristic {
        components: reduced,
    };
    let witness = match cv {
        Some(f) => Some(localize_conserved_vector(st, f, &rchi)?),
        None => None,
    };
    Ok(PurityVerdict::Induced { witness })
}

/// Given a conserved current of the combined system whose characteristic
/// is potential-free, produces an equivalent potential-free current of the
/// base system. The reduced current must be affine in the potentials with
/// potential-free coefficients `(alpha_s, beta_s)`; each pair is a null
/// divergence of the base system and is resolved by a potential `phi_s`,
/// which strips the `s`-th potential from the current:
/// `Ft - sum(alpha_s v_s + phi_s rhs_x(s))`,
/// `Fx - sum(beta_s v_s - phi_s rhs_t(s))`.
/// The result is verified conserved on the base and equivalent to the
/// input over the combined system.
pub fn localize_conserved_vector(
    st: &PotentialStructure,
    f: &[Expr],
    chi: &Characteristic,
) -> Result<Vec<Expr>> {
    match st.kind {
        CoveringKind::TwoDim | CoveringKind::Abelian => {}
        _ => {
            return Err(Error::Unsupported(
                "localization is implemented for two-dimensional potential systems and Abelian coverings"
                    .into(),
            ))
        }
    }
    let n = st.combined.sess().n();
    if n != 2 {
        return Err(Error::UnsupportedSystem(
            "localization needs exactly two independent variables".into(),
        ));
    }
    if f.len() != 2 {
        return Err(Error::ComponentCount {
            expected: 2,
            got: f.len(),
        });
    }
    for c in &chi.components {
        if st.contains_potential(c) {
            return Err(Error::Invalid(
                "the characteristic must be potential-free for localization".into(),
            ));
        }
    }
    let sess = st.combined.sess();
    let ft = st.combined.reduce(&f[0])?;
    let fx = st.combined.reduce(&f[1])?;
    let mut out_t = ft.clone();
    let mut out_x = fx.clone();
    for (s, &v) in st.pot_deps.iter().enumerate() {
        let v0 = Atom::jet0(v, n);
        let alpha = partial_diff(sess, &ft, &v0)?;
        let beta = partial_diff(sess, &fx, &v0)?;
        if st.contains_potential(&alpha) || st.contains_potential(&beta) {
            return Err(Error::Unsupported(
                "the conserved current is not affine in the potentials".into(),
            ));
        }
        let ve = Expr::atom(v0);
        out_t = out_t.sub(&alpha.mul(&ve));
        out_x = out_x.sub(&beta.mul(&ve));
        if alpha.is_zero() && beta.is_zero() {
            continue;
        }
        let phi = solve_null_divergence_2d(&st.base, &alpha, &beta)?;
        let tau = st.combined.equations()[st.block_eqs[s][0]].rhs.clone();
        let rho = st.combined.equations()[st.block_eqs[s][1]].rhs.clone();
        out_t = out_t.sub(&phi.mul(&rho));
        out_x = out_x.add(&phi.mul(&tau));
    }
    if st.contains_potential(&out_t) || st.contains_potential(&out_x) {
        return Err(Error::Unsupported(
            "the conserved current is not affine in the potentials".into(),
        ));
    }
    let out = vec![out_t, out_x];
    verify_conserved_vector(&st.base, &out)?;
    if !equivalent_conserved_vectors(&st.combined, f, &out)? {
        return Err(Error::NotConserved(
            "the localized current is not equivalent to the input over the combined system".into(),
        ));
    }
    Ok(out)
}

/// Differentiates a conserved current of the combined system with respect
/// to the potential `pot_deps[s]` (at order zero), component-wise. For
/// two-dimensional potential systems and Abelian coverings whose fluxes do
/// not involve that potential, the result is again conserved, with
/// characteristic the potential-derivative of the given one.
pub fn potential_derivative_cv(
    st: &PotentialStructure,
    f: &[Expr],
    chi: Option<&Characteristic>,
    s: usize,
) -> Result<(Vec<Expr>, Option<Characteristic>)> {
    match st.kind {
        CoveringKind::TwoDim | CoveringKind::Abelian => {}
        _ => {
            return Err(Error::Unsupported(
                "potential derivatives of currents are implemented for two-dimensional potential systems and Abelian coverings"
                    .into(),
            ))
        }
    }
    let sess = st.combined.sess();
    let n = sess.n();
    let v0 = Atom::jet0(st.pot_deps[s], n);
    for bl in &st.block_eqs {
        for &eq in bl {
            if st.combined.equations()[eq].rhs.any_atom(&|a| *a == v0) {
                return Err(Error::Unsupported(
                    "a defining flux involves the differentiation potential; the derivative law is not guaranteed"
                        .into(),
                ));
            }
        }
    }
    let d: Vec<Expr> = f
        .iter()
        .map(|c| partial_diff(sess, c, &v0))
        .collect::<Result<_>>()?;
    verify_conserved_vector(&st.combined, &d)?;
    let dchi = match chi {
        None => None,
        Some(c) => {
            let dc = Characteristic {
                components: c
                    .components
                    .iter()
                    .map(|e| partial_diff(sess, e, &v0))
                    .collect::<Result<_>>()?,
            };
            verify_characteristic(&st.combined, &d, &dc)?;
            Some(dc)
        }
    };
    Ok((d, dchi))
}

/// Reinterprets the two components of a reduced characteristic paired with
/// the defining equations of potential `pot_deps[s]` as a conserved current
/// of the combined system: `(chi at the t-equation, chi at the
/// x-equation)`. Its characteristic is the potential-derivative of the
/// reduced input, which is verified (modulo a characteristic vanishing on
/// solutions).
pub fn char_components_as_cv(
    st: &PotentialStructure,
    chi: &Characteristic,
    s: usize,
) -> Result<(Vec<Expr>, Characteristic)> {
    match st.kind {
        CoveringKind::TwoDim | CoveringKind::Abelian => {}
        _ => {
            return Err(Error::Unsupported(
                "characteristic components form a current only over two-dimensional potential systems and Abelian coverings"
                    .into(),
            ))
        }
    }
    let minimal = st.combined.minimal_indices();
    if chi.components.len() != minimal.len() {
        return Err(Error::ComponentCount {
            expected: minimal.len(),
            got: chi.components.len(),
        });
    }
    let reduced: Vec<Expr> = chi
        .components
        .iter()
        .map(|c| st.combined.reduce(c))
        .collect::<Result<_>>()?;
    let n = st.combined.sess().n();
    let mut cv = Vec::new();
    for dir in 0..n {
        let eq = st.block_eqs[s][dir];
        let pos = minimal
            .iter()
            .position(|&k| k == eq)
            .ok_or_else(|| Error::Invalid(
                "a defining equation of the potential is excluded; its characteristic component is not available"
                    .into(),
            ))?;
        cv.push(reduced[pos].clone());
    }
    verify_conserved_vector(&st.combined, &cv)?;
    let v0 = Atom::jet0(st.pot_deps[s], n);
    let paired = Characteristic {
        components: reduced
            .iter()
            .map(|c| partial_diff(st.combined.sess(), c, &v0))
            .collect::<Result<_>>()?,
    };
    let (extracted, _) = extract_characteristic(&st.combined, &cv)?;
    for (a, b) in extracted.components.iter().zip(&paired.components) {
        if !st.combined.reduce(&a.sub(b))?.is_zero() {
            return Err(Error::NotConserved(
                "the pairing identity fails beyond a characteristic vanishing on solutions".into(),
            ));
        }
    }
    Ok((cv, paired))
}

/// A conservation-law characteristic of the base system extended by
/// multipliers on the defining equations of the covering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedCharacteristic {
    /// Multipliers on each block's defining equations, by direction.
    pub covering: Vec<Vec<Expr>>,
    /// Multipliers on the base equations, in base equation order.
    pub base: Vec<Expr>,
    /// The input current adjusted by integration-by-parts bookkeeping; the
    /// extended identity holds for it exactly.
    pub adjusted: Vec<Expr>,
}

/// Converts a conserved current of the combined system that is affine in
/// the potentials (with potential-free coefficients) into an extended
/// characteristic: `Div(adjusted) = sum c_si res(pot eq s,i) + sum gamma_k
/// res(base eq k)` exactly, where `c_si` is the coefficient of the current
/// in the potential jet of direction `i`.
pub fn linear_cv_to_extended_char(
    st: &PotentialStructure,
    f: &[Expr],
) -> Result<ExtendedCharacteristic> {
    if st.kind == CoveringKind::Standard {
        return Err(Error::Unsupported(
            "extended characteristics are not implemented for standard potential systems".into(),
        ));
    }
    let sess = st.combined.sess();
    let n = sess.n();
    if f.len() != n {
        return Err(Error::ComponentCount {
            expected: n,
            got: f.len(),
        });
    }
    let fr: Vec<Expr> = f
        .iter()
        .map(|c| st.combined.reduce(c))
        .collect::<Result<_>>()?;
    let mut covering = Vec::new();
    let mut rest = fr.clone();
    for &v in &st.pot_deps {
        let v0 = Atom::jet0(v, n);
        let mut comps = Vec::new();
        for (i, ri) in rest.iter_mut().enumerate() {
            let c = partial_diff(sess, &fr[i], &v0)?;
            if st.contains_potential(&c) {
                return Err(Error::Unsupported(
                    "the current is not affine in the potentials".into(),
                ));
            }
            *ri = ri.sub(&c.mul(&Expr::atom(v0.clone())));
            comps.push(c);
        }
        covering.push(comps);
    }
    for r in &rest {
        if st.contains_potential(r) {
            return Err(Error::Unsupported(
                "the current is not affine in the potentials".into(),
            ));
        }
    }
    let mut r = divergence(sess, &fr)?;
    for (s, comps) in covering.iter().enumerate() {
        for (i, c) in comps.iter().enumerate() {
            r = r.sub(&c.mul(&st.combined.equations()[st.block_eqs[s][i]].residual()));
        }
    }
    let (resid, steps) = st.base.reduce_with_trace(&r)?;
    if !resid.is_zero() {
        return Err(Error::NotConserved(
            "the remainder of the extended identity does not vanish by the base equations".into(),
        ));
    }
    let (mut lambda, w) = attribute_trace(&st.base, steps)?;
    let adjusted: Vec<Expr> = fr.iter().zip(&w).map(|(c, wi)| c.sub(wi)).collect();
    let base_comps: Vec<Expr> = (0..st.base.equations().len())
        .map(|k| lambda.remove(&k).unwrap_or_else(Expr::zero))
        .collect();
    let ext = ExtendedCharacteristic {
        covering,
        base: base_comps,
        adjusted,
    };
    verify_extended_characteristic(st, &ext)?;
    Ok(ext)
}

/// Checks the extended characteristic identity exactly:
/// `Div(adjusted) = sum c_si res(pot eq s,i) + sum gamma_k res(base eq k)`.
pub fn verify_extended_characteristic(
    st: &PotentialStructure,
    ext: &ExtendedCharacteristic,
) -> Result<()> {
    if ext.base.len() != st.base.equations().len() {
        return Err(Error::ComponentCount {
            expected: st.base.equations().len(),
            got: ext.base.len(),
        });
    }
    if ext.covering.len() != st.blocks.len() {
        return Err(Error::ComponentCount {
            expected: st.blocks.len(),
            got: ext.covering.len(),
        });
    }
    let mut rhs = Expr::zero();
    for (s, comps) in ext.covering.iter().enumerate() {
        if comps.len() != st.block_eqs[s].len() {
            return Err(Error::ComponentCount {
                expected: st.block_eqs[s].len(),
                got: comps.len(),
            });
        }
        for (i, c) in comps.iter().enumerate() {
            rhs = rhs.add(&c.mul(&st.combined.equations()[st.block_eqs[s][i]].residual()));
        }
    }
    for (k, c) in ext.base.iter().enumerate() {
        rhs = rhs.add(&c.mul(&st.base.equations()[k].residual()));
    }
    let div = divergence(st.combined.sess(), &ext.adjusted)?;
    if div == rhs {
        Ok(())
    } else {
        Err(Error::NotConserved(
            "the extended characteristic identity does not hold exactly".into(),
        ))
    }
}
