//! GP to convex form: `y = log_b x`, every monomial becomes an affine form
//! in natural-log units.

use super::{GpError, GpProblem, Monomial};

/// `constant + Σ coeffs_i · y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineForm {
    fn from_monomial(m: &Monomial, ln_b: f64) -> Self {
        AffineForm {
            coeffs: m.exponents.iter().map(|&(v, a)| (v.0, a * ln_b)).collect(),
            constant: m.ln_coeff,
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().fold(self.constant, |acc, &(i, a)| acc + a * y[i])
    }
}

/// Convex program over `y = log_b x`:
/// minimize `lse(objective)` subject to `equalities = 0` and `lse(inequality) ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpaceProgram {
    pub base: f64,
    pub n_vars: usize,
    pub objective: Vec<AffineForm>,
    pub equalities: Vec<AffineForm>,
    pub inequalities: Vec<Vec<AffineForm>>,
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl LogSpaceProgram {
    pub fn objective_value(&self, y: &[f64]) -> f64 {
        log_sum_exp(self.objective.iter().map(|a| a.eval(y)))
    }

    pub fn max_equality_violation(&self, y: &[f64]) -> f64 {
        self.equalities.iter().map(|a| a.eval(y).abs()).fold(0.0, f64::max)
    }

    pub fn max_inequality_value(&self, y: &[f64]) -> f64 {
        self.inequalities
            .iter()
            .map(|terms| log_sum_exp(terms.iter().map(|a| a.eval(y))))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Map back to the positive orthant.
    pub fn to_positive(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|&v| self.base.powf(v)).collect()
    }

    pub fn from_positive(&self, x: &[f64]) -> Vec<f64> {
        let ln_b = self.base.ln();
        x.iter().map(|&v| v.ln() / ln_b).collect()
    }
}

pub fn log_transform(p: &GpProblem) -> Result<LogSpaceProgram, GpError> {
    p.check()?;
    let ln_b = p.base.ln();
    Ok(LogSpaceProgram {
        base: p.base,
        n_vars: p.n_vars(),
        objective: p
            .objective
            .terms
            .iter()
            .map(|m| AffineForm::from_monomial(m, ln_b))
            .collect(),
        equalities: p
            .equalities
            .iter()
            .map(|m| AffineForm::from_monomial(m, ln_b))
            .collect(),
        inequalities: p
            .inequalities
            .iter()
            .map(|q| q.terms.iter().map(|m| AffineForm::from_monomial(m, ln_b)).collect())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Monomial, Posynomial};

    #[test]
    fn monomial_equality_becomes_affine() {
        let mut p = GpProblem::new(std::f64::consts::E).unwrap();
        let x = p.add_var("x");
        p.add_equality(Monomial::new(2.0, vec![(x, 1.0)]).unwrap());
        let lp = log_transform(&p).unwrap();
        let eq = &lp.equalities[0];
        // ln 2 + y = 0
        assert_eq!(eq.coeffs, vec![(0, 1.0)]);
        let y = -eq.constant / eq.coeffs[0].1;
        assert!((y + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_term_bound_is_affine() {
        let mut p = GpProblem::new(1.005).unwrap();
        let x = p.add_var("x");
        p.add_inequality(Monomial::var(x).into());
        let lp = log_transform(&p).unwrap();
        assert_eq!(lp.inequalities[0].len(), 1);
        assert_eq!(lp.inequalities[0][0].constant, 0.0);
        assert!(lp.max_inequality_value(&[-1.0]) < 0.0);
        assert!(lp.max_inequality_value(&[1.0]) > 0.0);
    }

    #[test]
    fn objective_structure() {
        let mut p = GpProblem::new(2.0).unwrap();
        let x = p.add_var("x");
        p.set_objective(Posynomial::new(vec![Monomial::var(x), Monomial::var(x).inv()]).unwrap());
        let lp = log_transform(&p).unwrap();
        let ln2 = 2f64.ln();
        assert_eq!(lp.objective[0].coeffs, vec![(0, ln2)]);
        assert_eq!(lp.objective[1].coeffs, vec![(0, -ln2)]);
        // x = 2^y round trip
        let back = lp.from_positive(&lp.to_positive(&[3.25]));
        assert!((back[0] - 3.25).abs() < 1e-12);
        assert!((lp.objective_value(&[0.0]) - 2f64.ln()).abs() < 1e-15);
    }
}
