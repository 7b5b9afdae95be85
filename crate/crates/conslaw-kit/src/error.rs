use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
///
/// Payloads are pre-rendered strings so errors stay independent of the
/// symbol registry they were raised under.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// The input is outside the expression class an operation supports
    /// (e.g. non-polynomial input to the homotopy operator).
    #[error("unsupported expression class: {0}")]
    Unsupported(String),

    /// The input system is outside the supported system class.
    #[error("unsupported system class: {0}")]
    UnsupportedSystem(String),

    #[error("division by zero")]
    DivisionByZero,

    /// `exp(c)` with a nonzero rational constant `c` has no exact
    /// representation in this kernel.
    #[error("exp of a nonzero rational constant is not exactly representable")]
    ExpOfConstant,

    #[error("unbound atom in rational evaluation: {0}")]
    UnboundAtom(String),

    #[error("negative power of zero in rational evaluation")]
    ZeroToNegativePower,

    /// The Euler operator residual of the candidate is nonzero.
    #[error("not a total divergence: Euler residual nonzero in {0}")]
    NotADivergence(String),

    /// The rule table of `integrate_x` / `solve_null_divergence_2d` does
    /// not cover the input. Incompleteness is reported, never papered
    /// over with a wrong answer.
    #[error("no integration rule applies: {0}")]
    NoRuleApplies(String),

    #[error("not a null divergence: D_t(alpha) + D_x(beta) does not vanish on solutions")]
    NotNullDivergence,

    /// The divergence of the candidate conserved vector does not vanish
    /// on solutions of the system.
    #[error("not conserved on the system: divergence reduces to {0}")]
    NotConserved(String),

    /// Covering fluxes whose cross-derivative compatibility residual does
    /// not vanish on solutions. Carries the rendered residual.
    #[error("incompatible covering fluxes: residual {0}")]
    IncompatibleFluxes(String),

    #[error("system is not in solved form: {0}")]
    NotSolvedForm(String),

    #[error("weight admissibility violated: {0}")]
    WeightAdmissibility(String),

    #[error("unknown symbol: {0}")]
    UnknownSymbol(String),

    #[error("arity mismatch for {name}: expected {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("characteristic has {got} components but {expected} are required")]
    ComponentCount { expected: usize, got: usize },

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse {
        line: usize,
        col: usize,
        msg: String,
    },

    /// Rewriting exceeded its fuel bound (cyclic or runaway reduction).
    #[error("rewriting did not terminate within the step limit: {0}")]
    Fuel(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// Process exit code the CLI maps this error to:
    /// 2 for parse/usage errors, 3 for unsupported classes, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::UnknownSymbol(_)
            | Error::Arity { .. }
            | Error::ComponentCount { .. }
            | Error::Invalid(_) => 2,
            Error::Unsupported(_)
            | Error::UnsupportedSystem(_)
            | Error::NoRuleApplies(_)
            | Error::ExpOfConstant
            | Error::Fuel(_) => 3,
            _ => 1,
        }
    }
}
