//! Density evolution on the binary erasure channel.
//!
//! The recursion `eps_l = eps0 * lambda(1 - rho(1 - eps_{l-1}))` predicts the
//! residual erasure probability after `l` decoder iterations. The iteration
//! count at convergence drives the per-bit complexity model
//! `C = l * d_c * (1 - R) / R`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::ensemble::{CodePalette, CodeSpec, DegreeDistribution};
use crate::error::{Error, Result};

/// Decrease smaller than this counts as a stall.
pub const STALL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub eps_thresh: f64,
    pub max_iters: u32,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            eps_thresh: 1e-3,
            max_iters: 1000,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_thresh > 0.0 && self.eps_thresh < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps_thresh {} outside (0,1)",
                self.eps_thresh
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    /// The erasure probability stopped decreasing above `eps_thresh`.
    Stalled,
    /// `max_iters` reached while still decreasing.
    IterationCap,
}

/// Result of a density evolution quantity that only exists on convergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeOutcome<T> {
    Converged(T),
    Stalled,
    IterationCap,
}

impl<T> DeOutcome<T> {
    pub fn converged(self) -> Option<T> {
        match self {
            DeOutcome::Converged(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, DeOutcome::Converged(_))
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> DeOutcome<U> {
        match self {
            DeOutcome::Converged(v) => DeOutcome::Converged(f(v)),
            DeOutcome::Stalled => DeOutcome::Stalled,
            DeOutcome::IterationCap => DeOutcome::IterationCap,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeTrace {
    /// `eps_0, eps_1, ..., eps_l`.
    pub eps_sequence: Vec<f64>,
    pub iterations: u32,
    pub converged: bool,
    pub termination: Termination,
}

/// One step of the recursion: `eps0 * lambda(1 - rho(1 - eps_prev))`.
pub fn de_step(dist: &DegreeDistribution, eps0: f64, eps_prev: f64) -> f64 {
    eps0 * dist.lambda(1.0 - dist.rho(1.0 - eps_prev))
}

pub fn run_de(dist: &DegreeDistribution, eps0: f64, cfg: &DeConfig) -> DeTrace {
    let mut seq = vec![eps0];
    let mut prev = eps0;
    let termination = loop {
        if prev <= cfg.eps_thresh {
            break Termination::Converged;
        }
        if seq.len() > cfg.max_iters as usize {
            break Termination::IterationCap;
        }
        let next = de_step(dist, eps0, prev);
        seq.push(next);
        if next > cfg.eps_thresh && next >= prev - STALL_TOL {
            break Termination::Stalled;
        }
        prev = next;
    };
    DeTrace {
        iterations: (seq.len() - 1) as u32,
        eps_sequence: seq,
        converged: termination == Termination::Converged,
        termination,
    }
}

/// Iteration count `l` to reach `eps_thresh`, without keeping the trace.
pub fn iterations_required(dist: &DegreeDistribution, eps0: f64, cfg: &DeConfig) -> DeOutcome<u32> {
    let mut prev = eps0;
    let mut iters = 0u32;
    loop {
        if prev <= cfg.eps_thresh {
            return DeOutcome::Converged(iters);
        }
        if iters >= cfg.max_iters {
            return DeOutcome::IterationCap;
        }
        let next = de_step(dist, eps0, prev);
        iters += 1;
        if next > cfg.eps_thresh && next >= prev - STALL_TOL {
            return DeOutcome::Stalled;
        }
        prev = next;
    }
}

/// Decoder work per data bit for `iterations` decoder iterations.
pub fn complexity_from_iterations(iterations: u32, d_c: u32, rate: f64) -> f64 {
    iterations as f64 * d_c as f64 * (1.0 - rate) / rate
}

pub fn complexity_per_bit(code: &CodeSpec, eps0: f64, cfg: &DeConfig) -> Result<DeOutcome<f64>> {
    let d_c = code
        .check_degree()
        .ok_or_else(|| Error::NotCheckRegular(code.label().to_string()))?;
    Ok(iterations_required(code.distribution(), eps0, cfg)
        .map(|l| complexity_from_iterations(l, d_c, code.rate())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdOptions {
    /// Lower end of the search interval, normally `eps_thresh`.
    pub x_lo: f64,
    pub grid_points: usize,
    /// Width at which golden-section refinement stops.
    pub refine_tol: f64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions {
            x_lo: DeConfig::default().eps_thresh,
            grid_points: 10_000,
            refine_tol: 1e-6,
        }
    }
}

/// `eps(x) = x / lambda(1 - rho(1 - x))`, or `None` where undefined or `<= x`.
fn eps_of_x(dist: &DegreeDistribution, x: f64) -> Option<f64> {
    let denom = dist.lambda(1.0 - dist.rho(1.0 - x));
    if denom <= 0.0 {
        return None;
    }
    let e = x / denom;
    (e > x).then_some(e)
}

/// Erasure threshold `min { eps(x) : eps(x) > x }` over `[x_lo, 1]`.
///
/// Dense grid scan, then golden-section refinement around the best grid
/// point.
pub fn threshold(dist: &DegreeDistribution, opts: &ThresholdOptions) -> Result<f64> {
    let n = opts.grid_points.max(3);
    let step = (1.0 - opts.x_lo) / (n - 1) as f64;
    let grid = |k: usize| opts.x_lo + step * k as f64;

    let mut best: Option<(usize, f64)> = None;
    let mut any_defined = false;
    for k in 0..n {
        let x = grid(k);
        if dist.lambda(1.0 - dist.rho(1.0 - x)) > 0.0 {
            any_defined = true;
        }
        if let Some(e) = eps_of_x(dist, x) {
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((k, e));
            }
        }
    }
    if !any_defined {
        return Err(Error::ThresholdUndefined);
    }
    let (k, grid_min) = best.ok_or(Error::ThresholdUndefined)?;

    let f = |x: f64| eps_of_x(dist, x).unwrap_or(f64::INFINITY);
    let mut a = grid(k.saturating_sub(1));
    let mut b = grid((k + 1).min(n - 1));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > opts.refine_tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    Ok(grid_min.min(fc).min(fd))
}

/// Erasure threshold found by bisection on `run_de` convergence.
///
/// Slow; used to cross-check [`threshold`].
pub fn threshold_by_bisection(dist: &DegreeDistribution, cfg: &DeConfig, tol: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if run_de(dist, mid, cfg).converged {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Read-through cache of iteration counts per palette code, keyed on `eps0`
/// quantized to `1e-4`. Safe to share between threads.
pub struct IterationCache {
    cfg: DeConfig,
    slots: Vec<Vec<OnceLock<DeOutcome<u32>>>>,
}

pub const CACHE_QUANTUM: f64 = 1e-4;
const CACHE_SLOTS: usize = 10_001;

impl IterationCache {
    pub fn new(palette: &CodePalette, cfg: DeConfig) -> Self {
        let slots = (0..palette.len())
            .map(|_| (0..CACHE_SLOTS).map(|_| OnceLock::new()).collect())
            .collect();
        IterationCache { cfg, slots }
    }

    pub fn config(&self) -> &DeConfig {
        &self.cfg
    }

    pub fn quantize(eps0: f64) -> usize {
        ((eps0.clamp(0.0, 1.0) / CACHE_QUANTUM).round() as usize).min(CACHE_SLOTS - 1)
    }

    /// Iterations for palette code `index` at `eps0` (quantized).
    pub fn iterations(&self, palette: &CodePalette, index: usize, eps0: f64) -> DeOutcome<u32> {
        let q = Self::quantize(eps0);
        *self.slots[index][q].get_or_init(|| {
            iterations_required(
                palette.codes()[index].distribution(),
                q as f64 * CACHE_QUANTUM,
                &self.cfg,
            )
        })
    }

    pub fn complexity(&self, palette: &CodePalette, index: usize, eps0: f64) -> DeOutcome<f64> {
        let code = &palette.codes()[index];
        let d_c = code
            .check_degree()
            .expect("palette codes are check-regular");
        self.iterations(palette, index, eps0)
            .map(|l| complexity_from_iterations(l, d_c, code.rate()))
    }
}
