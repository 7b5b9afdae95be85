//! Property-based invariants of the expression kernel, the variational
//! operators, system reduction, and the null-divergence resolver.

mod common;

use common::{arb_base_poly, arb_poly, arb_rich, bindings, build, sess_rich, sess_tu};
use proptest::prelude::*;

use conslaw_kit::conslaw::solve_null_divergence_2d;
use conslaw_kit::corpus;
use conslaw_kit::diffsys::DiffSystem;
use conslaw_kit::jet::total_derivative;
use conslaw_kit::multiindex::MultiIndex;
use conslaw_kit::parse::{parse_expr, print_expr};
use conslaw_kit::variational::{
    divergence, euler, euler_all, frechet, frechet_adjoint, higher_euler, homotopy_divergence,
    is_total_divergence,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// The canonical form is a ring: subtraction of equals is zero and
    /// the ring axioms hold as literal equality of representations.
    #[test]
    fn canonical_ring_laws(a in arb_rich(), b in arb_rich(), c in arb_rich()) {
        let s = sess_rich();
        let (ea, eb, ec) = (build(&s, &a), build(&s, &b), build(&s, &c));
        prop_assert!(ea.sub(&ea).is_zero());
        prop_assert_eq!(ea.add(&eb), eb.add(&ea));
        prop_assert_eq!(ea.mul(&eb), eb.mul(&ea));
        prop_assert_eq!(ea.add(&eb).add(&ec), ea.add(&eb.add(&ec)));
        prop_assert_eq!(ea.mul(&eb).mul(&ec), ea.mul(&eb.mul(&ec)));
        prop_assert_eq!(ea.mul(&eb.add(&ec)), ea.mul(&eb).add(&ea.mul(&ec)));
    }

    /// Exact rational evaluation is a ring homomorphism, so the
    /// canonicalization performed by `add`/`mul`/`neg` never changes the
    /// value of an expression.
    #[test]
    fn eval_is_a_ring_homomorphism(
        a in arb_poly(),
        b in arb_poly(),
        vals in proptest::array::uniform8((-9i32..=9, 0u8..=8)),
    ) {
        let s = sess_tu();
        let (ea, eb) = (build(&s, &a), build(&s, &b));
        let bind = bindings(&vals);
        let (va, vb) = (ea.eval_rational(&bind)?, eb.eval_rational(&bind)?);
        prop_assert_eq!(ea.add(&eb).eval_rational(&bind)?, va.clone() + vb.clone());
        prop_assert_eq!(ea.mul(&eb).eval_rational(&bind)?, va.clone() * vb);
        prop_assert_eq!(ea.neg().eval_rational(&bind)?, -va);
    }

    /// Printing and parsing are mutually inverse on canonical forms.
    #[test]
    fn print_parse_round_trip(a in arb_rich()) {
        let s = sess_rich();
        let e = build(&s, &a);
        let printed = print_expr(&s, &e);
        let back = parse_expr(&s, &printed)
            .map_err(|err| TestCaseError::fail(format!("reparse of `{printed}`: {err}")))?;
        prop_assert_eq!(back, e);
    }

    /// Total derivatives in different directions commute.
    #[test]
    fn total_derivatives_commute(a in arb_rich()) {
        let s = sess_rich();
        let e = build(&s, &a);
        let tx = total_derivative(&s, &total_derivative(&s, &e, 1)?, 0)?;
        let xt = total_derivative(&s, &total_derivative(&s, &e, 0)?, 1)?;
        prop_assert_eq!(tx, xt);
    }

    /// Total derivatives satisfy the Leibniz rule.
    #[test]
    fn total_derivative_leibniz(a in arb_rich(), b in arb_rich()) {
        let s = sess_rich();
        let (ea, eb) = (build(&s, &a), build(&s, &b));
        let lhs = total_derivative(&s, &ea.mul(&eb), 1)?;
        let rhs = total_derivative(&s, &ea, 1)?
            .mul(&eb)
            .add(&ea.mul(&total_derivative(&s, &eb, 1)?));
        prop_assert_eq!(lhs, rhs);
    }

    /// The Euler operator annihilates every total divergence.
    #[test]
    fn euler_kills_divergences(a in arb_poly(), b in arb_poly()) {
        let s = sess_tu();
        let f = [build(&s, &a), build(&s, &b)];
        let h = divergence(&s, &f)?;
        for comp in euler_all(&s, &h)? {
            prop_assert!(comp.is_zero(), "Euler residual: {}", print_expr(&s, &comp));
        }
        prop_assert!(is_total_divergence(&s, &h)?);
    }

    /// The homotopy operator is a right inverse of the divergence on
    /// polynomial divergences.
    #[test]
    fn homotopy_inverts_divergence(a in arb_poly(), b in arb_poly()) {
        let s = sess_tu();
        let f = [build(&s, &a), build(&s, &b)];
        let h = divergence(&s, &f)?;
        let g = homotopy_divergence(&s, &h)?;
        prop_assert_eq!(divergence(&s, &g)?, h);
    }

    /// The higher Euler operator at the empty multi-index is the Euler
    /// operator.
    #[test]
    fn higher_euler_at_zero_is_euler(a in arb_poly()) {
        let s = sess_tu();
        let e = build(&s, &a);
        prop_assert_eq!(
            higher_euler(&s, &e, 0, &MultiIndex::zero(2))?,
            euler(&s, &e, 0)?
        );
    }

    /// The Frechet derivative and its adjoint pair up to a total
    /// divergence: `w * L_p(q) - q * L_p^*(w)` is one.
    #[test]
    fn frechet_adjoint_pairing(p in arb_poly(), q in arb_poly(), w in arb_poly()) {
        let s = sess_tu();
        let (ep, eq, ew) = (build(&s, &p), build(&s, &q), build(&s, &w));
        let fr = frechet(&s, std::slice::from_ref(&ep), std::slice::from_ref(&eq))?;
        let adj = frechet_adjoint(&s, &[ep], std::slice::from_ref(&ew))?;
        let pairing = ew.mul(&fr[0]).sub(&eq.mul(&adj[0]));
        prop_assert!(is_total_divergence(&s, &pairing)?);
    }

    /// Reduction modulo a system is idempotent and additive.
    #[test]
    fn reduce_is_idempotent_and_additive(a in arb_poly(), b in arb_poly()) {
        let file = corpus::load("dc-conv").unwrap();
        let sys = file.working();
        let (ea, eb) = (build(sys.sess(), &a), build(sys.sess(), &b));
        let ra = sys.reduce(&ea)?;
        prop_assert_eq!(sys.reduce(&ra)?, ra.clone());
        let rb = sys.reduce(&eb)?;
        prop_assert_eq!(sys.reduce(&ea.add(&eb))?, sys.reduce(&ra.add(&rb))?);
    }

    /// Resolving the null divergence built from a generated potential
    /// recovers a potential with exactly the prescribed derivatives.
    #[test]
    fn null_divergence_round_trip(p in arb_poly()) {
        let s = sess_tu();
        let phi = build(&s, &p);
        let alpha = total_derivative(&s, &phi, 1)?;
        let beta = total_derivative(&s, &phi, 0)?.neg();
        let sys = DiffSystem::new(sess_tu(), Vec::new()).unwrap();
        let got = solve_null_divergence_2d(&sys, &alpha, &beta)?;
        prop_assert_eq!(total_derivative(&s, &got, 1)?, alpha);
        prop_assert_eq!(total_derivative(&s, &got, 0)?, beta.neg());
        // the two potentials differ by a constant
        let diff = got.sub(&phi);
        prop_assert!(total_derivative(&s, &diff, 0)?.is_zero());
        prop_assert!(total_derivative(&s, &diff, 1)?.is_zero());
    }

    /// Jet-free inputs exercise the antiderivative rule table directly.
    #[test]
    fn null_divergence_round_trip_jet_free(p in arb_base_poly()) {
        let s = sess_tu();
        let phi = build(&s, &p);
        let alpha = total_derivative(&s, &phi, 1)?;
        let beta = total_derivative(&s, &phi, 0)?.neg();
        let sys = DiffSystem::new(sess_tu(), Vec::new()).unwrap();
        let got = solve_null_divergence_2d(&sys, &alpha, &beta)?;
        prop_assert_eq!(total_derivative(&s, &got, 1)?, alpha);
        prop_assert_eq!(total_derivative(&s, &got, 0)?, beta.neg());
    }
}
