//! Geometric programs over positive variables.
//!
//! Monomials keep `ln c` rather than `c` so that coefficients such as
//! `1.005^850` never have to be materialized.

mod ops;
mod solver;
mod transform;

use std::fmt;

use thiserror::Error;

pub use ops::{elementwise_exp, star_product, verify_property1};
pub use solver::{solve, GpSolution, SolveStatus, SolverOptions};
pub use transform::{log_transform, AffineForm, LogSpaceProgram};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("monomial coefficient must be positive, got {0}")]
    NonPositiveCoefficient(f64),
    #[error("variable {0} is not declared")]
    UnknownVariable(usize),
    #[error("base must exceed 1, got {0}")]
    InvalidBase(f64),
    #[error("posynomial needs at least one term")]
    EmptyPosynomial,
    #[error("problem is infeasible (certificate residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// `c · Π x_i^{a_i}` with `c > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub ln_coeff: f64,
    pub exponents: Vec<(VarId, f64)>,
}

impl Monomial {
    pub fn new(coeff: f64, exponents: Vec<(VarId, f64)>) -> Result<Self, GpError> {
        if !(coeff > 0.0 && coeff.is_finite()) {
            return Err(GpError::NonPositiveCoefficient(coeff));
        }
        Ok(Monomial {
            ln_coeff: coeff.ln(),
            exponents,
        })
    }

    pub fn from_ln(ln_coeff: f64, exponents: Vec<(VarId, f64)>) -> Self {
        Monomial { ln_coeff, exponents }
    }

    pub fn constant(coeff: f64) -> Result<Self, GpError> {
        Monomial::new(coeff, Vec::new())
    }

    /// The monomial `x`.
    pub fn var(id: VarId) -> Self {
        Monomial::from_ln(0.0, vec![(id, 1.0)])
    }

    pub fn coefficient(&self) -> f64 {
        self.ln_coeff.exp()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.ln_eval(x).exp()
    }

    /// `ln` of the monomial value.
    pub fn ln_eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .fold(self.ln_coeff, |acc, &(v, a)| acc + a * x[v.0].ln())
    }

    /// Product of two monomials.
    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut exponents = self.exponents.clone();
        exponents.extend_from_slice(&other.exponents);
        Monomial {
            ln_coeff: self.ln_coeff + other.ln_coeff,
            exponents,
        }
        .simplified()
    }

    /// Reciprocal; a monomial equality `m = 1` is the same as `1/m = 1`.
    pub fn inv(&self) -> Monomial {
        Monomial {
            ln_coeff: -self.ln_coeff,
            exponents: self.exponents.iter().map(|&(v, a)| (v, -a)).collect(),
        }
    }

    pub fn powf(&self, p: f64) -> Monomial {
        Monomial {
            ln_coeff: p * self.ln_coeff,
            exponents: self.exponents.iter().map(|&(v, a)| (v, p * a)).collect(),
        }
    }

    /// Merge repeated variables and drop zero exponents.
    pub fn simplified(mut self) -> Monomial {
        self.exponents.sort_by_key(|&(v, _)| v);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(self.exponents.len());
        for (v, a) in self.exponents {
            match merged.last_mut() {
                Some((last, acc)) if *last == v => *acc += a,
                _ => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        Monomial {
            ln_coeff: self.ln_coeff,
            exponents: merged,
        }
    }

    fn max_var(&self) -> Option<usize> {
        self.exponents.iter().map(|&(v, _)| v.0).max()
    }
}

/// A nonempty sum of monomials.
#[derive(Debug, Clone, PartialEq)]
pub struct Posynomial {
    pub terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn new(terms: Vec<Monomial>) -> Result<Self, GpError> {
        if terms.is_empty() {
            return Err(GpError::EmptyPosynomial);
        }
        Ok(Posynomial { terms })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|m| m.eval(x)).sum()
    }

    /// `ln` of the posynomial value, computed stably.
    pub fn ln_eval(&self, x: &[f64]) -> f64 {
        let logs: Vec<f64> = self.terms.iter().map(|m| m.ln_eval(x)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }
}

impl From<Monomial> for Posynomial {
    fn from(m: Monomial) -> Self {
        Posynomial { terms: vec![m] }
    }
}

/// Minimize a posynomial subject to `monomial = 1` and `posynomial ≤ 1`.
#[derive(Debug, Clone)]
pub struct GpProblem {
    pub base: f64,
    names: Vec<String>,
    pub objective: Posynomial,
    pub equalities: Vec<Monomial>,
    pub inequalities: Vec<Posynomial>,
}

impl GpProblem {
    pub fn new(base: f64) -> Result<Self, GpError> {
        if !(base > 1.0 && base.is_finite()) {
            return Err(GpError::InvalidBase(base));
        }
        Ok(GpProblem {
            base,
            names: Vec::new(),
            objective: Posynomial::from(Monomial::from_ln(0.0, Vec::new())),
            equalities: Vec::new(),
            inequalities: Vec::new(),
        })
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> VarId {
        self.names.push(name.into());
        VarId(self.names.len() - 1)
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.names[v.0]
    }

    pub fn set_objective(&mut self, objective: Posynomial) {
        self.objective = objective;
    }

    pub fn add_equality(&mut self, m: Monomial) {
        self.equalities.push(m.simplified());
    }

    pub fn add_inequality(&mut self, p: Posynomial) {
        self.inequalities.push(Posynomial {
            terms: p.terms.into_iter().map(Monomial::simplified).collect(),
        });
    }

    /// `lo ≤ x ≤ hi` in log_b units, i.e. `b^lo ≤ x̂ ≤ b^hi`.
    pub fn add_log_bounds(&mut self, v: VarId, lo: f64, hi: f64) {
        let ln_b = self.base.ln();
        // b^lo / x ≤ 1 and x / b^hi ≤ 1
        self.add_inequality(Monomial::from_ln(lo * ln_b, vec![(v, -1.0)]).into());
        self.add_inequality(Monomial::from_ln(-hi * ln_b, vec![(v, 1.0)]).into());
    }

    /// Check that every exponent refers to a declared variable.
    pub fn check(&self) -> Result<(), GpError> {
        let n = self.n_vars();
        let monomials = self
            .objective
            .terms
            .iter()
            .chain(&self.equalities)
            .chain(self.inequalities.iter().flat_map(|p| &p.terms));
        for m in monomials {
            if let Some(v) = m.max_var().filter(|&v| v >= n) {
                return Err(GpError::UnknownVariable(v));
            }
            if !m.ln_coeff.is_finite() {
                return Err(GpError::NonPositiveCoefficient(m.coefficient()));
            }
        }
        if self.inequalities.iter().any(|p| p.terms.is_empty()) || self.objective.terms.is_empty() {
            return Err(GpError::EmptyPosynomial);
        }
        Ok(())
    }
}
