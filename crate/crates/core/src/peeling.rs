//! Finite-length Tanner-graph erasure (peeling) decoder and random ensemble
//! sampling.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ensemble::DegreeDistribution;
use crate::error::{Error, Result};

/// Sparse parity-check matrix: one sorted set of column indices per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    rows: Vec<Vec<usize>>,
    n: usize,
}

impl ParityCheckMatrix {
    pub fn new(rows: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut clean = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            let set: BTreeSet<usize> = row.into_iter().collect();
            if set.is_empty() {
                return Err(Error::InvalidMatrix(format!("row {i} is empty")));
            }
            if let Some(&c) = set.iter().find(|&&c| c >= n) {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has column {c} >= n={n}"
                )));
            }
            clean.push(set.into_iter().collect());
        }
        Ok(ParityCheckMatrix { rows: clean, n })
    }

    /// The 5x9 example matrix with checks `c0+c1+c2`, `c3+c4+c5`,
    /// `c0+c3+c6`, `c1+c4+c7`, `c2+c5+c8`.
    pub fn example() -> Self {
        Self::new(
            vec![
                vec![0, 1, 2],
                vec![3, 4, 5],
                vec![0, 3, 6],
                vec![1, 4, 7],
                vec![2, 5, 8],
            ],
            9,
        )
        .expect("valid example")
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `n - rows`, assuming full rank.
    pub fn k(&self) -> usize {
        self.n.saturating_sub(self.rows.len())
    }

    pub fn column_weights(&self) -> Vec<usize> {
        let mut w = vec![0; self.n];
        for row in &self.rows {
            for &c in row {
                w[c] += 1;
            }
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Zero,
    One,
    Erased,
}

impl Symbol {
    fn bit(self) -> Option<bool> {
        match self {
            Symbol::Zero => Some(false),
            Symbol::One => Some(true),
            Symbol::Erased => None,
        }
    }

    fn from_bit(b: bool) -> Self {
        if b {
            Symbol::One
        } else {
            Symbol::Zero
        }
    }
}

pub type ReceivedWord = Vec<Symbol>;

/// Order in which checks are visited within a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeelSchedule {
    /// Corrections made during a pass are visible to later checks of that pass.
    #[default]
    Sequential,
    /// All checks in a pass see the word as it was at the start of the pass.
    Flooding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeelResult {
    pub word: ReceivedWord,
    /// Passes over the check nodes that made at least one correction.
    pub passes: usize,
    pub success: bool,
}

pub fn peel(h: &ParityCheckMatrix, word: &[Symbol]) -> Result<PeelResult> {
    peel_with(h, word, PeelSchedule::Sequential, None)
}

/// Peeling with an explicit schedule and, optionally, a custom check order.
pub fn peel_with(
    h: &ParityCheckMatrix,
    word: &[Symbol],
    schedule: PeelSchedule,
    order: Option<&[usize]>,
) -> Result<PeelResult> {
    if word.len() != h.n() {
        return Err(Error::LengthMismatch {
            word: word.len(),
            code: h.n(),
        });
    }
    let default_order: Vec<usize>;
    let order = match order {
        Some(o) => o,
        None => {
            default_order = (0..h.rows().len()).collect();
            &default_order
        }
    };

    let mut current = word.to_vec();
    let mut erased = current.iter().filter(|s| **s == Symbol::Erased).count();
    let mut passes = 0;
    while erased > 0 {
        let snapshot = match schedule {
            PeelSchedule::Flooding => Some(current.clone()),
            PeelSchedule::Sequential => None,
        };
        let mut corrected = 0;
        for &r in order {
            let view = snapshot.as_deref().unwrap_or(&current);
            let mut missing = None;
            let mut count = 0;
            let mut parity = false;
            for &c in &h.rows()[r] {
                match view[c].bit() {
                    Some(b) => parity ^= b,
                    None => {
                        count += 1;
                        missing = Some(c);
                    }
                }
            }
            if count == 1 {
                let c = missing.expect("one erased position");
                if current[c] == Symbol::Erased {
                    current[c] = Symbol::from_bit(parity);
                    corrected += 1;
                }
            }
        }
        if corrected == 0 {
            break;
        }
        erased -= corrected;
        passes += 1;
    }
    Ok(PeelResult {
        word: current,
        passes,
        success: erased == 0,
    })
}

/// Largest-remainder rounding of `total * weights` to integers summing to `total`.
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

const REPAIR_PASSES: usize = 20;

/// Random Tanner graph from the configuration model.
///
/// Node counts per degree follow the node-perspective fractions implied by
/// `lambda` and `rho`. Any edge-count mismatch after rounding is absorbed by
/// shifting single variable nodes one degree up or down. Double edges are
/// re-paired for up to 20 passes; survivors collapse to a single edge.
pub fn sample_graph<R: Rng + ?Sized>(
    dist: &DegreeDistribution,
    n: usize,
    rng: &mut R,
) -> Result<ParityCheckMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "code length must be positive".into(),
        ));
    }
    let lam: Vec<(u32, f64)> = dist.lambda_coeffs().iter().map(|(&d, &v)| (d, v)).collect();
    let var_counts = apportion(
        &lam.iter().map(|&(d, v)| v / d as f64).collect::<Vec<_>>(),
        n,
    );
    let mut var_degrees: Vec<u32> = lam
        .iter()
        .zip(&var_counts)
        .flat_map(|(&(d, _), &c)| std::iter::repeat_n(d, c))
        .collect();
    let edges: usize = var_degrees.iter().map(|&d| d as usize).sum();

    let rho: Vec<(u32, f64)> = dist.rho_coeffs().iter().map(|(&d, &v)| (d, v)).collect();
    let check_weights: Vec<f64> = rho.iter().map(|&(d, v)| v / d as f64).collect();
    let inv_mean: f64 = check_weights.iter().sum();
    let m = (edges as f64 * inv_mean).round() as usize;
    if m == 0 {
        return Err(Error::EdgeImbalance(format!("no check nodes for n={n}")));
    }
    let check_counts = apportion(&check_weights, m);
    let check_degrees: Vec<u32> = rho
        .iter()
        .zip(&check_counts)
        .flat_map(|(&(d, _), &c)| std::iter::repeat_n(d, c))
        .collect();
    let check_edges: usize = check_degrees.iter().map(|&d| d as usize).sum();

    // Move the residual onto the variable side, one edge per node.
    let mut diff = check_edges as i64 - edges as i64;
    if diff.unsigned_abs() as usize > n {
        return Err(Error::EdgeImbalance(format!(
            "{edges} variable edges vs {check_edges} check edges"
        )));
    }
    let mut idx: Vec<usize> = (0..var_degrees.len()).collect();
    if diff < 0 {
        idx.sort_by_key(|&i| std::cmp::Reverse(var_degrees[i]));
        for &i in &idx {
            if diff == 0 {
                break;
            }
            if var_degrees[i] > 2 {
                var_degrees[i] -= 1;
                diff += 1;
            }
        }
    } else {
        idx.sort_by_key(|&i| var_degrees[i]);
        for &i in &idx {
            if diff == 0 {
                break;
            }
            if var_degrees[i] < dist.d_max() {
                var_degrees[i] += 1;
                diff -= 1;
            }
        }
    }
    if diff != 0 {
        return Err(Error::EdgeImbalance(format!(
            "residual of {diff} edges after rebalancing"
        )));
    }

    let var_sockets: Vec<usize> = var_degrees
        .iter()
        .enumerate()
        .flat_map(|(v, &d)| std::iter::repeat_n(v, d as usize))
        .collect();
    let mut check_sockets: Vec<usize> = check_degrees
        .iter()
        .enumerate()
        .flat_map(|(c, &d)| std::iter::repeat_n(c, d as usize))
        .collect();
    check_sockets.shuffle(rng);

    let edge_count = var_sockets.len();
    for _ in 0..REPAIR_PASSES {
        let mut seen = BTreeSet::new();
        let mut dup = Vec::new();
        for e in 0..edge_count {
            if !seen.insert((check_sockets[e], var_sockets[e])) {
                dup.push(e);
            }
        }
        if dup.is_empty() {
            break;
        }
        for e in dup {
            let other = rng.random_range(0..edge_count);
            check_sockets.swap(e, other);
        }
    }

    let mut rows = vec![Vec::new(); m];
    for e in 0..edge_count {
        rows[check_sockets[e]].push(var_sockets[e]);
    }
    ParityCheckMatrix::new(rows, n)
}

/// All-zero codeword with i.i.d. erasures.
pub fn erase_zero_word<R: Rng + ?Sized>(n: usize, eps0: f64, rng: &mut R) -> ReceivedWord {
    (0..n)
        .map(|_| {
            if rng.random_bool(eps0) {
                Symbol::Erased
            } else {
                Symbol::Zero
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeelTrial {
    pub trial: usize,
    pub success: bool,
    pub passes: usize,
}

/// Peeling Monte Carlo on one sampled graph. Trial `t` draws its erasures
/// from stream `t` of the master seed.
pub fn peel_monte_carlo(
    h: &ParityCheckMatrix,
    eps0: f64,
    trials: usize,
    seed: u64,
) -> Vec<PeelTrial> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64 + 1);
            let word = erase_zero_word(h.n(), eps0, &mut rng);
            let r = peel(h, &word).expect("length matches");
            PeelTrial {
                trial: t,
                success: r.success,
                passes: r.passes,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::regular_distribution;
    use proptest::prelude::*;
    use Symbol::*;

    #[test]
    fn example_matrix_recovers_two_erasures() {
        let h = ParityCheckMatrix::example();
        let mut word = vec![Zero; 9];
        word[0] = Erased;
        word[4] = Erased;
        let r = peel(&h, &word).unwrap();
        assert!(r.success);
        assert_eq!(r.word, vec![Zero; 9]);
        // Row 0 (c0+c1+c2) already recovers c0; row 1 recovers c4.
        assert_eq!(r.passes, 1);
    }

    #[test]
    fn example_matrix_nonzero_codeword() {
        let h = ParityCheckMatrix::example();
        // c = 110110000 satisfies all five checks.
        let cw = [One, One, Zero, One, One, Zero, Zero, Zero, Zero];
        let mut word = cw.to_vec();
        word[0] = Erased;
        word[4] = Erased;
        let r = peel(&h, &word).unwrap();
        assert!(r.success);
        assert_eq!(r.word, cw.to_vec());
    }

    #[test]
    fn no_erasures_no_passes() {
        let h = ParityCheckMatrix::example();
        let r = peel(&h, &[Zero; 9]).unwrap();
        assert!(r.success);
        assert_eq!(r.passes, 0);
    }

    #[test]
    fn all_erased_fails() {
        let h = ParityCheckMatrix::example();
        let r = peel(&h, &[Erased; 9]).unwrap();
        assert!(!r.success);
        assert_eq!(r.word, vec![Erased; 9]);
    }

    #[test]
    fn length_mismatch() {
        let h = ParityCheckMatrix::example();
        assert!(matches!(
            peel(&h, &[Zero; 8]),
            Err(Error::LengthMismatch { word: 8, code: 9 })
        ));
    }

    #[test]
    fn invalid_matrices() {
        assert!(ParityCheckMatrix::new(vec![vec![]], 3).is_err());
        assert!(ParityCheckMatrix::new(vec![vec![0, 3]], 3).is_err());
    }

    #[test]
    fn regular_graph_shape() {
        let d = regular_distribution(3, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = sample_graph(&d, 1200, &mut rng).unwrap();
        assert_eq!(h.rows().len(), 600);
        assert!(h.rows().iter().all(|r| r.len() == 6));
        assert!(h.column_weights().iter().all(|&w| w == 3));

        let again = sample_graph(&d, 1200, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(h, again);
    }

    #[test]
    fn irregular_graph_edge_fractions() {
        let d = DegreeDistribution::check_regular([(2, 0.4), (3, 0.3), (8, 0.3)], 7, 200).unwrap();
        let n = 5000;
        let h = sample_graph(&d, n, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let weights = h.column_weights();
        let edges: usize = weights.iter().sum();
        for (&deg, &lam) in d.lambda_coeffs() {
            let e: usize = weights.iter().filter(|&&w| w == deg as usize).sum();
            let frac = e as f64 / edges as f64;
            // Collapsed double edges shift a few nodes between classes.
            assert!((frac - lam).abs() < 0.01, "degree {deg}: {frac} vs {lam}");
        }
    }

    fn random_instance() -> impl Strategy<Value = (ParityCheckMatrix, Vec<bool>, u64)> {
        (8usize..20, any::<u64>()).prop_map(|(n, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = n / 2;
            let rows = (0..m)
                .map(|_| {
                    let w = rng.random_range(2..5);
                    (0..w).map(|_| rng.random_range(0..n)).collect()
                })
                .collect();
            let h = ParityCheckMatrix::new(rows, n).unwrap();
            let pattern = (0..n).map(|_| rng.random_bool(0.35)).collect();
            (h, pattern, seed)
        })
    }

    proptest! {
        #[test]
        fn received_symbols_untouched((h, pattern, _) in random_instance()) {
            let word: Vec<_> = pattern.iter().map(|&e| if e { Erased } else { Zero }).collect();
            let r = peel(&h, &word).unwrap();
            for (a, b) in word.iter().zip(&r.word) {
                if *a != Erased {
                    prop_assert_eq!(a, b);
                }
            }
        }

        #[test]
        fn success_independent_of_symbol_values((h, pattern, seed) in random_instance()) {
            // Success depends only on which positions are erased.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let zero: Vec<_> = pattern.iter().map(|&e| if e { Erased } else { Zero }).collect();
            let base = peel(&h, &zero).unwrap().success;
            let noisy: Vec<_> = pattern
                .iter()
                .map(|&e| if e { Erased } else if rng.random_bool(0.5) { One } else { Zero })
                .collect();
            prop_assert_eq!(peel(&h, &noisy).unwrap().success, base);
        }

        #[test]
        fn success_independent_of_schedule((h, pattern, seed) in random_instance()) {
            let word: Vec<_> = pattern.iter().map(|&e| if e { Erased } else { Zero }).collect();
            let base = peel(&h, &word).unwrap();
            let flood = peel_with(&h, &word, PeelSchedule::Flooding, None).unwrap();
            prop_assert_eq!(flood.success, base.success);
            let mut order: Vec<usize> = (0..h.rows().len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..5 {
                order.shuffle(&mut rng);
                let r = peel_with(&h, &word, PeelSchedule::Sequential, Some(&order)).unwrap();
                prop_assert_eq!(r.success, base.success);
                // The set of recovered positions is the same too.
                let erased_a: Vec<_> = r.word.iter().map(|s| *s == Erased).collect();
                let erased_b: Vec<_> = base.word.iter().map(|s| *s == Erased).collect();
                prop_assert_eq!(erased_a, erased_b);
            }
        }
    }
}
