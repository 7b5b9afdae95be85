use num::BigRational;

use crate::error::{Error, Result};
use crate::expr::Expr;

pub type FuncId = usize;

/// Rewrite rule eliminating one derivative direction of a function symbol:
/// one derivative in argument slot `kill` becomes `coeff` times extra
/// derivatives `add` in the other slots. Example: a heat-kernel symbol
/// `h(t,x)` with rule `h_t -> -h_xx` stores kill=0, coeff=-1, add=[0,2].
/// Applied eagerly whenever a derivative of the symbol is formed, so
/// constrained symbols never appear with a derivative in the killed slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintRule {
    pub kill: usize,
    pub coeff: BigRational,
    pub add: Vec<u32>,
}

/// An opaque function symbol together with its differentiation behaviour.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuncDef {
    pub name: String,
    /// Formal parameter names, one per argument slot.
    pub params: Vec<String>,
    /// Optional first-derivative template per argument slot, written in
    /// terms of `Atom::Param` placeholders. `None` means the derivative
    /// stays opaque (a new symbol with a bumped derivative index).
    pub derivative: Vec<Option<Expr>>,
    pub constraint: Option<ConstraintRule>,
    /// Declared constant: a zero-arity symbol whose derivatives vanish.
    pub constant: bool,
    /// Marks a symbol family whose derivatives of all orders are treated
    /// as functionally independent (no linear specialization assumed).
    pub generic: bool,
}

impl FuncDef {
    pub fn opaque(name: &str, params: &[&str]) -> Self {
        FuncDef {
            name: name.into(),
            params: params.iter().map(|s| s.to_string()).collect(),
            derivative: vec![None; params.len()],
            constraint: None,
            constant: false,
            generic: false,
        }
    }

    pub fn constant(name: &str) -> Self {
        FuncDef {
            name: name.into(),
            params: Vec::new(),
            derivative: Vec::new(),
            constraint: None,
            constant: true,
            generic: false,
        }
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// Symbol registry: independent variables, dependent variables, function
/// symbols. Atoms refer to entries by index, so registration is
/// append-only; extending a session (e.g. adjoining potentials) keeps all
/// previously built expressions valid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Session {
    indep: Vec<String>,
    deps: Vec<String>,
    funcs: Vec<FuncDef>,
}

impl Session {
    pub fn new() -> Self {
        Session::default()
    }

    fn check_fresh(&self, name: &str) -> Result<()> {
        let taken = self.indep.iter().any(|s| s == name)
            || self.deps.iter().any(|s| s == name)
            || self.funcs.iter().any(|f| f.name == name)
            || name == "exp";
        if taken {
            Err(Error::Invalid(format!("symbol `{name}` already declared")))
        } else if name.is_empty() || !name.chars().next().unwrap().is_ascii_alphabetic() {
            Err(Error::Invalid(format!("invalid symbol name `{name}`")))
        } else {
            Ok(())
        }
    }

    pub fn add_indep(&mut self, name: &str) -> Result<usize> {
        self.check_fresh(name)?;
        self.indep.push(name.into());
        Ok(self.indep.len() - 1)
    }

    pub fn add_dep(&mut self, name: &str) -> Result<usize> {
        self.check_fresh(name)?;
        self.deps.push(name.into());
        Ok(self.deps.len() - 1)
    }

    pub fn add_func(&mut self, def: FuncDef) -> Result<FuncId> {
        self.check_fresh(&def.name)?;
        if let Some(rule) = &def.constraint {
            if rule.kill >= def.params.len() || rule.add.len() != def.params.len() {
                return Err(Error::Invalid(format!(
                    "constraint rule of `{}` does not match its arity",
                    def.name
                )));
            }
        }
        if def.derivative.len() != def.params.len() {
            return Err(Error::Invalid(format!(
                "derivative table of `{}` does not match its arity",
                def.name
            )));
        }
        self.funcs.push(def);
        Ok(self.funcs.len() - 1)
    }

    /// Number of independent variables (dimension of the base space).
    pub fn n(&self) -> usize {
        self.indep.len()
    }

    pub fn num_deps(&self) -> usize {
        self.deps.len()
    }

    pub fn indep_name(&self, i: usize) -> &str {
        &self.indep[i]
    }

    pub fn dep_name(&self, a: usize) -> &str {
        &self.deps[a]
    }

    pub fn func(&self, id: FuncId) -> &FuncDef {
        &self.funcs[id]
    }

    pub fn indep_index(&self, name: &str) -> Option<usize> {
        self.indep.iter().position(|s| s == name)
    }

    pub fn dep_index(&self, name: &str) -> Option<usize> {
        self.deps.iter().position(|s| s == name)
    }

    pub fn func_index(&self, name: &str) -> Option<FuncId> {
        self.funcs.iter().position(|f| f.name == name)
    }

    pub fn funcs(&self) -> &[FuncDef] {
        &self.funcs
    }

    /// True if `other` extends `self` (same symbols, possibly more).
    pub fn extends(&self, other: &Session) -> bool {
        other.indep.starts_with(&self.indep)
            && other.deps.starts_with(&self.deps)
            && other.funcs.len() >= self.funcs.len()
            && self.funcs == other.funcs[..self.funcs.len()]
    }
}
