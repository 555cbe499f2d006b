//! Minimal linear feasibility interface.
//!
//! Box bounds, equality rows and `<=` rows over dense coefficient vectors.
//! Backed by the `microlp` simplex solver.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};

/// Coefficients with magnitude below this are dropped from a row.
const ZERO_COEFF: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct FeasibilityLp {
    num_vars: usize,
    bounds: (f64, f64),
    equalities: Vec<(Vec<f64>, f64)>,
    upper: Vec<(Vec<f64>, f64)>,
}

impl FeasibilityLp {
    pub fn new(num_vars: usize, bounds: (f64, f64)) -> Self {
        FeasibilityLp {
            num_vars,
            bounds,
            equalities: Vec::new(),
            upper: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// `coeffs . v == rhs`
    pub fn equal(&mut self, coeffs: Vec<f64>, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars);
        self.equalities.push((coeffs, rhs));
    }

    /// `coeffs . v <= rhs`
    pub fn at_most(&mut self, coeffs: Vec<f64>, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars);
        self.upper.push((coeffs, rhs));
    }

    /// A point satisfying every constraint, or `None` if the solver proves
    /// (or cannot escape) infeasibility.
    pub fn solve(&self) -> Option<Vec<f64>> {
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = (0..self.num_vars)
            .map(|_| problem.add_var(0.0, self.bounds))
            .collect();
        let row = |coeffs: &[f64]| -> Vec<_> {
            vars.iter()
                .zip(coeffs)
                .filter(|(_, c)| c.abs() > ZERO_COEFF)
                .map(|(&v, &c)| (v, c))
                .collect()
        };
        for (coeffs, rhs) in &self.equalities {
            problem.add_constraint(row(coeffs), ComparisonOp::Eq, *rhs);
        }
        for (coeffs, rhs) in &self.upper {
            problem.add_constraint(row(coeffs), ComparisonOp::Le, *rhs);
        }
        match problem.solve() {
            Ok(SolveOutcome::Solution(sol)) => Some(vars.iter().map(|&v| sol[v]).collect()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_point_in_simplex_slice() {
        let mut lp = FeasibilityLp::new(3, (0.0, 1.0));
        lp.equal(vec![1.0, 1.0, 1.0], 1.0);
        lp.at_most(vec![1.0, 0.0, 0.0], 0.1);
        lp.at_most(vec![0.0, 1.0, 0.0], 0.1);
        let v = lp.solve().unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(v[2] >= 0.8 - 1e-12);
    }

    #[test]
    fn reports_infeasible() {
        let mut lp = FeasibilityLp::new(2, (0.0, 1.0));
        lp.equal(vec![1.0, 1.0], 1.0);
        lp.at_most(vec![1.0, 1.0], 0.5);
        assert!(lp.solve().is_none());
    }
}
