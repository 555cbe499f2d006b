//! Per-trial rate assignment under a cluster computing budget.
//!
//! Schedulers operate on a [`SchedulingInput`]: for every cluster cell, the
//! decoding complexity of each palette code (or `None` when that code cannot
//! decode the user). Building that table from a snapshot goes through the
//! density-evolution cache; the scheduling rules themselves are pure.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cellular::ClusterSnapshot;
use crate::density_evolution::IterationCache;
use crate::ensemble::CodePalette;
use crate::error::{Error, Result};

/// Default cluster budget per cluster cell.
pub const C_SERVER_PER_CELL: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    Mrs,
    Ejf,
    LocalLimit,
    Scc,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 4] = [
        SchedulerKind::Mrs,
        SchedulerKind::Ejf,
        SchedulerKind::LocalLimit,
        SchedulerKind::Scc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Mrs => "mrs",
            SchedulerKind::Ejf => "ejf",
            SchedulerKind::LocalLimit => "local-limit",
            SchedulerKind::Scc => "scc",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scheduler '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub c_server: f64,
    /// Per-user trigger for Local Limit demotions.
    pub c_loc: f64,
}

impl Budget {
    /// `c_server = 150 N`, `c_loc = c_server / N`.
    pub fn for_cluster(n: usize) -> Self {
        let c_server = C_SERVER_PER_CELL * n as f64;
        Budget {
            c_server,
            c_loc: c_server / n.max(1) as f64,
        }
    }
}

/// Complexity of every palette code for one user, lowest rate first.
/// `None` marks a code that cannot decode the user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserOptions {
    pub complexity: Vec<Option<f64>>,
}

impl UserOptions {
    fn best(&self) -> Option<usize> {
        self.complexity.iter().rposition(Option::is_some)
    }

    fn lower(&self, code: usize) -> Option<usize> {
        self.complexity[..code].iter().rposition(Option::is_some)
    }

    fn cost(&self, code: usize) -> f64 {
        self.complexity[code].expect("assigned code is decodable")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingInput {
    /// Palette rates, strictly increasing.
    pub rates: Vec<f64>,
    /// One entry per cluster cell; `None` is an empty cell.
    pub cells: Vec<Option<UserOptions>>,
}

impl SchedulingInput {
    /// Complexity table for a snapshot. A code is usable when its threshold
    /// exceeds the user's `eps0` and density evolution converges.
    pub fn from_snapshot(
        snapshot: &ClusterSnapshot,
        palette: &CodePalette,
        cache: &IterationCache,
    ) -> Self {
        let cells = snapshot
            .eps0
            .iter()
            .map(|cell| {
                cell.map(|eps0| UserOptions {
                    complexity: palette
                        .codes()
                        .iter()
                        .enumerate()
                        .map(|(i, code)| {
                            if code.threshold() > eps0 {
                                cache.complexity(palette, i, eps0).converged()
                            } else {
                                None
                            }
                        })
                        .collect(),
                })
            })
            .collect();
        SchedulingInput {
            rates: palette.rates(),
            cells,
        }
    }
}

/// Code index per cluster cell, `None` meaning rate 0.
pub type Assignment = Vec<Option<usize>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDecision {
    pub scheduler: SchedulerKind,
    /// Assigned code per cluster cell; `None` is rate 0.
    pub codes: Vec<Option<usize>>,
    pub rates: Vec<f64>,
    /// Complexity per cluster cell, 0 for cells not decoded.
    pub complexities: Vec<f64>,
    /// Cluster-wide computational outage: every rate forced to 0.
    pub outage: bool,
    /// Users dropped by Easiest Job First to fit the budget.
    pub skipped: Vec<usize>,
    pub throughput: f64,
}

impl ScheduleDecision {
    pub fn total_complexity(&self) -> f64 {
        self.complexities.iter().sum()
    }

    /// Whether the budget forced any user off the air.
    pub fn budget_limited(&self) -> bool {
        self.outage || !self.skipped.is_empty()
    }
}

fn total(input: &SchedulingInput, assignment: &Assignment) -> f64 {
    input
        .cells
        .iter()
        .zip(assignment)
        .map(|(cell, code)| match (cell, code) {
            (Some(u), Some(c)) => u.cost(*c),
            _ => 0.0,
        })
        .sum()
}

fn decide(
    scheduler: SchedulerKind,
    input: &SchedulingInput,
    codes: Assignment,
    outage: bool,
    skipped: Vec<usize>,
) -> ScheduleDecision {
    let codes = if outage {
        vec![None; codes.len()]
    } else {
        codes
    };
    let rates: Vec<f64> = codes
        .iter()
        .map(|c| c.map_or(0.0, |c| input.rates[c]))
        .collect();
    let complexities = input
        .cells
        .iter()
        .zip(&codes)
        .map(|(cell, code)| match (cell, code) {
            (Some(u), Some(c)) => u.cost(*c),
            _ => 0.0,
        })
        .collect();
    let throughput = if rates.is_empty() {
        0.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    };
    ScheduleDecision {
        scheduler,
        codes,
        rates,
        complexities,
        outage,
        skipped,
        throughput,
    }
}

/// Highest-rate usable code per cell.
pub fn max_rate_assign(input: &SchedulingInput) -> Assignment {
    input
        .cells
        .iter()
        .map(|cell| cell.as_ref().and_then(UserOptions::best))
        .collect()
}

pub fn schedule_mrs(input: &SchedulingInput, budget: &Budget) -> ScheduleDecision {
    let codes = max_rate_assign(input);
    let outage = total(input, &codes) > budget.c_server;
    decide(SchedulerKind::Mrs, input, codes, outage, Vec::new())
}

pub fn schedule_ejf(input: &SchedulingInput, budget: &Budget) -> ScheduleDecision {
    let mut codes = max_rate_assign(input);
    if total(input, &codes) <= budget.c_server {
        return decide(SchedulerKind::Ejf, input, codes, false, Vec::new());
    }
    let mut jobs: Vec<(f64, usize)> = input
        .cells
        .iter()
        .zip(&codes)
        .enumerate()
        .filter_map(|(i, (cell, code))| Some((cell.as_ref()?.cost((*code)?), i)))
        .collect();
    jobs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    // Admission uses the same summation as the reported total.
    let wanted = std::mem::replace(&mut codes, vec![None; input.cells.len()]);
    let mut skipped = Vec::new();
    for (_, i) in jobs {
        codes[i] = wanted[i];
        if total(input, &codes) > budget.c_server {
            codes[i] = None;
            skipped.push(i);
        }
    }
    skipped.sort_unstable();
    decide(SchedulerKind::Ejf, input, codes, false, skipped)
}

pub fn schedule_local_limit(input: &SchedulingInput, budget: &Budget) -> ScheduleDecision {
    let mut codes = max_rate_assign(input);
    while total(input, &codes) > budget.c_server {
        let mut demoted = false;
        for (cell, code) in input.cells.iter().zip(codes.iter_mut()) {
            let (Some(user), Some(c)) = (cell, *code) else {
                continue;
            };
            if user.cost(c) > budget.c_loc {
                if let Some(lower) = user.lower(c) {
                    *code = Some(lower);
                    demoted = true;
                }
            }
        }
        if !demoted {
            break;
        }
    }
    let outage = total(input, &codes) > budget.c_server;
    decide(SchedulerKind::LocalLimit, input, codes, outage, Vec::new())
}

pub fn schedule_scc(input: &SchedulingInput, budget: &Budget) -> ScheduleDecision {
    let mut codes = max_rate_assign(input);
    while total(input, &codes) > budget.c_server {
        // Costliest user that can still move down; ties go to the lowest cell.
        let pick = input
            .cells
            .iter()
            .zip(&codes)
            .enumerate()
            .filter_map(|(i, (cell, code))| {
                let user = cell.as_ref()?;
                let c = (*code)?;
                let lower = user.lower(c)?;
                Some((user.cost(c), i, lower))
            })
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        match pick {
            Some((_, i, lower)) => codes[i] = Some(lower),
            None => break,
        }
    }
    let outage = total(input, &codes) > budget.c_server;
    decide(SchedulerKind::Scc, input, codes, outage, Vec::new())
}

pub fn schedule(kind: SchedulerKind, input: &SchedulingInput, budget: &Budget) -> ScheduleDecision {
    match kind {
        SchedulerKind::Mrs => schedule_mrs(input, budget),
        SchedulerKind::Ejf => schedule_ejf(input, budget),
        SchedulerKind::LocalLimit => schedule_local_limit(input, budget),
        SchedulerKind::Scc => schedule_scc(input, budget),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density_evolution::DeConfig;
    use proptest::prelude::*;

    fn user(c: &[Option<f64>]) -> Option<UserOptions> {
        Some(UserOptions {
            complexity: c.to_vec(),
        })
    }

    /// Every user sits at rate 1/2, costs as given; no lower rate.
    fn flat(costs: &[f64]) -> SchedulingInput {
        SchedulingInput {
            rates: vec![0.5],
            cells: costs.iter().map(|&c| user(&[Some(c)])).collect(),
        }
    }

    fn budget(c_server: f64, c_loc: f64) -> Budget {
        Budget { c_server, c_loc }
    }

    #[test]
    fn mrs_outage_is_all_or_nothing() {
        let d = schedule_mrs(&flat(&[5.0, 10.0, 20.0]), &budget(25.0, 25.0));
        assert!(d.outage);
        assert_eq!(d.throughput, 0.0);
        assert!(d.rates.iter().all(|&r| r == 0.0));

        let d = schedule_mrs(&flat(&[5.0, 10.0]), &budget(25.0, 25.0));
        assert!(!d.outage);
        assert_eq!(d.rates, vec![0.5, 0.5]);
        assert_eq!(d.total_complexity(), 15.0);
    }

    #[test]
    fn empty_cluster() {
        let input = SchedulingInput {
            rates: vec![0.5],
            cells: vec![None, None, None],
        };
        for kind in SchedulerKind::ALL {
            let d = schedule(kind, &input, &budget(10.0, 10.0));
            assert!(!d.outage);
            assert_eq!(d.throughput, 0.0);
        }
    }

    #[test]
    fn ejf_admits_easiest_first() {
        let d = schedule_ejf(&flat(&[5.0, 10.0, 20.0]), &budget(25.0, 25.0));
        assert_eq!(d.rates, vec![0.5, 0.5, 0.0]);
        assert_eq!(d.skipped, vec![2]);
        assert!((d.throughput - 1.0 / 3.0).abs() < 1e-15);

        let d = schedule_ejf(&flat(&[30.0]), &budget(25.0, 25.0));
        assert_eq!(d.rates, vec![0.0]);
        assert_eq!(d.skipped, vec![0]);
    }

    #[test]
    fn ejf_ties_prefer_lower_cell() {
        let d = schedule_ejf(&flat(&[10.0, 10.0, 10.0]), &budget(25.0, 25.0));
        assert_eq!(d.skipped, vec![2]);
    }

    #[test]
    fn scc_demotes_costliest() {
        let input = SchedulingInput {
            rates: vec![0.25, 0.5],
            cells: vec![
                user(&[None, Some(5.0)]),
                user(&[None, Some(10.0)]),
                user(&[Some(2.0), Some(20.0)]),
            ],
        };
        let d = schedule_scc(&input, &budget(25.0, 25.0));
        assert!(!d.outage);
        assert_eq!(d.rates, vec![0.5, 0.5, 0.25]);
        assert_eq!(d.total_complexity(), 17.0);
        assert!((d.throughput - 1.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn scc_skips_undemotable_max() {
        // Costliest user has nowhere to go; the next one is demoted.
        let input = SchedulingInput {
            rates: vec![0.25, 0.5],
            cells: vec![user(&[None, Some(20.0)]), user(&[Some(1.0), Some(10.0)])],
        };
        let d = schedule_scc(&input, &budget(25.0, 25.0));
        assert_eq!(d.codes, vec![Some(1), Some(0)]);
        assert!(!d.outage);
    }

    #[test]
    fn scc_single_user_outage() {
        let d = schedule_scc(&flat(&[30.0]), &budget(25.0, 25.0));
        assert!(d.outage);
        assert_eq!(d.throughput, 0.0);
    }

    #[test]
    fn local_limit_demotes_over_limit_user() {
        let input = SchedulingInput {
            rates: vec![0.25, 0.5],
            cells: vec![
                user(&[Some(4.0), Some(30.0)]),
                user(&[Some(3.0), Some(5.0)]),
            ],
        };
        let d = schedule_local_limit(&input, &budget(30.0, 25.0));
        assert_eq!(d.codes, vec![Some(0), Some(1)]);
        assert!(!d.outage);
    }

    #[test]
    fn local_limit_exhausted_is_outage() {
        let input = SchedulingInput {
            rates: vec![0.25, 0.5],
            cells: vec![
                user(&[Some(20.0), Some(30.0)]),
                user(&[Some(20.0), Some(30.0)]),
            ],
        };
        let d = schedule_local_limit(&input, &budget(35.0, 10.0));
        assert!(d.outage);
        assert_eq!(d.throughput, 0.0);
    }

    #[test]
    fn local_limit_keeps_lowest_rate_above_limit() {
        let input = SchedulingInput {
            rates: vec![0.25, 0.5],
            cells: vec![
                user(&[Some(15.0), Some(30.0)]),
                user(&[Some(1.0), Some(2.0)]),
            ],
        };
        let d = schedule_local_limit(&input, &budget(20.0, 10.0));
        assert_eq!(d.codes, vec![Some(0), Some(1)]);
        assert!(!d.outage);
    }

    #[test]
    fn undecodable_users_get_rate_zero() {
        let input = SchedulingInput {
            rates: vec![0.25, 0.5],
            cells: vec![user(&[None, None]), user(&[Some(1.0), Some(2.0)]), None],
        };
        for kind in SchedulerKind::ALL {
            let d = schedule(kind, &input, &budget(100.0, 100.0));
            assert_eq!(d.rates, vec![0.0, 0.5, 0.0]);
            assert!((d.throughput - 0.5 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn max_rate_from_palette() {
        let palette = CodePalette::shipped();
        let cache = IterationCache::new(&palette, DeConfig::default());
        let snap = ClusterSnapshot {
            eps0: vec![Some(0.30), Some(0.75), Some(0.0), None],
        };
        let input = SchedulingInput::from_snapshot(&snap, &palette, &cache);
        let codes = max_rate_assign(&input);
        let rate = |c: Option<usize>| c.map_or(0.0, |c| palette.rates()[c]);
        assert!((rate(codes[0]) - 0.6).abs() < 1e-12);
        assert_eq!(codes[1], None);
        assert!((rate(codes[2]) - 0.75).abs() < 1e-12);
        assert_eq!(input.cells[2].as_ref().unwrap().complexity[7], Some(0.0));
        assert_eq!(codes[3], None);
    }

    #[test]
    fn scheduler_names_round_trip() {
        for k in SchedulerKind::ALL {
            assert_eq!(k.name().parse::<SchedulerKind>().unwrap(), k);
        }
        assert!("fifo".parse::<SchedulerKind>().is_err());
    }

    fn arb_input() -> impl Strategy<Value = (SchedulingInput, Budget)> {
        let rates = prop::collection::vec(0.05f64..0.95, 1..5).prop_map(|mut r| {
            r.sort_by(f64::total_cmp);
            r.dedup();
            r
        });
        (rates, 1usize..8, 1.0f64..200.0, 1.0f64..80.0).prop_flat_map(|(rates, n, cs, cl)| {
            let k = rates.len();
            let cell = prop::option::weighted(
                0.85,
                prop::collection::vec(prop::option::weighted(0.8, 0.0f64..100.0), k)
                    .prop_map(|complexity| UserOptions { complexity }),
            );
            prop::collection::vec(cell, n).prop_map(move |cells| {
                (
                    SchedulingInput {
                        rates: rates.clone(),
                        cells,
                    },
                    Budget {
                        c_server: cs,
                        c_loc: cl,
                    },
                )
            })
        })
    }

    proptest! {
        #[test]
        fn complexity_aware_dominates_mrs((input, b) in arb_input()) {
            let mrs = schedule_mrs(&input, &b);
            for kind in [SchedulerKind::Ejf, SchedulerKind::LocalLimit, SchedulerKind::Scc] {
                let d = schedule(kind, &input, &b);
                prop_assert!(d.throughput >= mrs.throughput);
                prop_assert!(d.total_complexity() <= b.c_server);
                if !mrs.outage {
                    prop_assert_eq!(&d.codes, &mrs.codes);
                }
            }
        }

        #[test]
        fn deterministic((input, b) in arb_input()) {
            for kind in SchedulerKind::ALL {
                prop_assert_eq!(schedule(kind, &input, &b), schedule(kind, &input, &b));
            }
        }
    }
}
