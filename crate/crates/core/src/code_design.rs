//! Threshold-maximizing design of check-regular ensembles.
//!
//! For fixed `rho` and `eps0`, the convergence condition
//! `eps0 * lambda(1 - rho(1 - x)) < x` is linear in the `lambda_i`, so
//! "does some `lambda` converge at `eps0`?" is an LP feasibility question.
//! Bisection on `eps0` then finds the largest feasible erasure probability.

use rayon::prelude::*;

use crate::density_evolution::{threshold, ThresholdOptions};
use crate::ensemble::{rate_label, CodePalette, CodeSpec, DegreeDistribution, DEFAULT_D_MAX};
use crate::error::{Error, Result};
use crate::lp::FeasibilityLp;

/// The eight palette rates.
pub const PALETTE_RATES: [(u32, u32); 8] = [
    (1, 5),
    (1, 4),
    (1, 3),
    (2, 5),
    (1, 2),
    (3, 5),
    (2, 3),
    (3, 4),
];

pub const PALETTE_CHECK_DEGREE: u32 = 7;

/// LP values below this are treated as zero.
const COEFF_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    pub target_rate: f64,
    pub d_c: u32,
    pub d_max: u32,
    pub forbid_degree_one: bool,
    /// Lower end of the convergence grid (`eps_thresh`).
    pub x_lo: f64,
    /// Points of the convergence grid over `[x_lo, eps0]`.
    pub x_grid_points: usize,
    /// Strictness margin in `f(eps0, x) <= x - margin`.
    pub margin: f64,
    /// Bisection stops once the feasible/infeasible bracket is this narrow.
    pub bisection_tol: f64,
    /// Allowed gap between bisection value and recomputed threshold.
    pub validation_tol: f64,
}

impl DesignProblem {
    pub fn new(target_rate: f64, d_c: u32) -> Self {
        DesignProblem {
            target_rate,
            d_c,
            d_max: DEFAULT_D_MAX,
            forbid_degree_one: true,
            x_lo: 1e-3,
            x_grid_points: 500,
            margin: 1e-9,
            bisection_tol: 1e-4,
            validation_tol: 5e-3,
        }
    }

    fn min_degree(&self) -> u32 {
        if self.forbid_degree_one {
            2
        } else {
            1
        }
    }

    /// Required `sum lambda_i / i`.
    pub fn inverse_mean_degree(&self) -> f64 {
        1.0 / (self.d_c as f64 * (1.0 - self.target_rate))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_rate > 0.0 && self.target_rate < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target rate {} outside (0,1)",
                self.target_rate
            )));
        }
        if self.d_c < 3 || self.d_max < 2 || self.d_max < self.min_degree() {
            return Err(Error::InvalidParameter(format!(
                "need d_c >= 3 and d_max >= 2 (got d_c={}, d_max={})",
                self.d_c, self.d_max
            )));
        }
        let m = self.inverse_mean_degree();
        let lo = 1.0 / self.d_max as f64;
        let hi = 1.0 / self.min_degree() as f64;
        if m < lo - 1e-12 || m > hi + 1e-12 {
            return Err(Error::InfeasibleDesign(format!(
                "rate {} with d_c={} needs sum lambda_i/i = {m:.6}, attainable range [{lo:.6}, {hi:.6}]",
                self.target_rate, self.d_c
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("R={} dc={}", rate_label(self.target_rate), self.d_c)
    }
}

/// A `lambda` converging at `eps0` under the problem's constraints, or
/// `None` when no such distribution exists.
pub fn feasible_at(problem: &DesignProblem, eps0: f64) -> Result<Option<DegreeDistribution>> {
    problem.validate()?;
    let degrees: Vec<u32> = (problem.min_degree()..=problem.d_max).collect();
    let mut lp = FeasibilityLp::new(degrees.len(), (0.0, 1.0));
    lp.equal(vec![1.0; degrees.len()], 1.0);
    lp.equal(
        degrees.iter().map(|&d| 1.0 / d as f64).collect(),
        problem.inverse_mean_degree(),
    );

    if eps0 > problem.x_lo {
        let n = problem.x_grid_points.max(2);
        for k in 0..n {
            let x = problem.x_lo + (eps0 - problem.x_lo) * k as f64 / (n - 1) as f64;
            let y = 1.0 - (1.0 - x).powi(problem.d_c as i32 - 1);
            let row = degrees
                .iter()
                .map(|&d| eps0 * y.powi(d as i32 - 1))
                .collect();
            lp.at_most(row, x - problem.margin);
        }
    }

    let Some(solution) = lp.solve() else {
        return Ok(None);
    };
    let lambda: Vec<(u32, f64)> = degrees
        .iter()
        .zip(solution)
        .filter(|(_, v)| *v > COEFF_FLOOR)
        .map(|(&d, v)| (d, v.min(1.0)))
        .collect();
    DegreeDistribution::check_regular(lambda, problem.d_c, problem.d_max).map(Some)
}

/// Bisection result before building the [`CodeSpec`].
#[derive(Debug, Clone)]
pub struct Design {
    pub distribution: DegreeDistribution,
    /// Largest feasible `eps0` found by bisection.
    pub bisection_threshold: f64,
    /// `threshold()` of the returned distribution.
    pub threshold: f64,
}

pub fn design(problem: &DesignProblem) -> Result<Design> {
    problem.validate()?;
    let (mut lo, mut hi) = (0.0, 1.0 - problem.target_rate);
    let mut best = None;
    while hi - lo > problem.bisection_tol {
        let mid = 0.5 * (lo + hi);
        match feasible_at(problem, mid)? {
            Some(dist) => {
                lo = mid;
                best = Some(dist);
            }
            None => hi = mid,
        }
    }
    let distribution = best.ok_or_else(|| {
        Error::InfeasibleDesign(format!(
            "{}: no feasible erasure probability",
            problem.label()
        ))
    })?;
    let opts = ThresholdOptions {
        x_lo: problem.x_lo,
        ..ThresholdOptions::default()
    };
    let recomputed = threshold(&distribution, &opts)?;
    if (recomputed - lo).abs() > problem.validation_tol {
        return Err(Error::ThresholdMismatch {
            label: problem.label(),
            bisection: lo,
            recomputed,
        });
    }
    Ok(Design {
        distribution,
        bisection_threshold: lo,
        threshold: recomputed,
    })
}

pub fn optimize(problem: &DesignProblem) -> Result<CodeSpec> {
    let d = design(problem)?;
    let rate = d.distribution.design_rate()?;
    CodeSpec::new(d.distribution, rate, d.threshold, problem.label())
}

/// Design problem for one palette rate: `d_c = 7` when attainable, else the
/// smallest check degree whose rate constraint admits `lambda_1 = 0`.
pub fn palette_problem(num: u32, den: u32) -> DesignProblem {
    let rate = num as f64 / den as f64;
    let mut problem = DesignProblem::new(rate, PALETTE_CHECK_DEGREE);
    while problem.validate().is_err() && problem.d_c < 64 {
        problem.d_c += 1;
    }
    problem
}

pub fn build_default_palette() -> Result<CodePalette> {
    let codes = PALETTE_RATES
        .par_iter()
        .map(|&(n, d)| optimize(&palette_problem(n, d)))
        .collect::<Result<Vec<_>>>()?;
    CodePalette::new(codes)
}
