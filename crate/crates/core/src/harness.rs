//! Monte Carlo driver for the scheduler comparisons.
//!
//! Every trial draws one user drop from stream `trial` of the master seed,
//! turns it into a cluster snapshot, and hands the same snapshot to every
//! requested scheduler, so scheduler comparisons are paired.

use std::fs::File;
use std::path::Path;
use std::sync::{Arc, Mutex};

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cellular::{
    build_topology, drop_users, snapshot, CalibrationCurve, Topology, DEFAULT_ALPHA,
    DEFAULT_CLUSTER, DEFAULT_GAMMA_DB, DEFAULT_S, DEFAULT_UTILIZATION,
};
use crate::density_evolution::{DeConfig, IterationCache};
use crate::ensemble::CodePalette;
use crate::error::{Error, Result};
use crate::schedulers::{schedule, Budget, SchedulerKind, SchedulingInput};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub alpha: f64,
    pub utilization: f64,
    pub cluster_size: usize,
    pub gamma_db: f64,
    pub s: f64,
    pub trials: usize,
    pub seed: u64,
    pub schedulers: Vec<SchedulerKind>,
    /// Defaults to `150 * cluster_size`.
    pub c_server: Option<f64>,
    /// Defaults to `c_server / cluster_size`.
    pub c_loc: Option<f64>,
    pub de: DeConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            alpha: DEFAULT_ALPHA,
            utilization: DEFAULT_UTILIZATION,
            cluster_size: DEFAULT_CLUSTER,
            gamma_db: DEFAULT_GAMMA_DB,
            s: DEFAULT_S,
            trials: 1000,
            seed: 1,
            schedulers: SchedulerKind::ALL.to_vec(),
            c_server: None,
            c_loc: None,
            de: DeConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn budget(&self) -> Budget {
        let n = self.cluster_size.max(1);
        let c_server = self
            .c_server
            .unwrap_or_else(|| Budget::for_cluster(n).c_server);
        Budget {
            c_server,
            c_loc: self.c_loc.unwrap_or(c_server / n as f64),
        }
    }

    pub fn topology(&self) -> Result<Topology> {
        build_topology(self.cluster_size, self.alpha, self.gamma_db, self.s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.schedulers.is_empty() {
            return Err(Error::InvalidParameter("no scheduler selected".into()));
        }
        let b = self.budget();
        if [b.c_server, b.c_loc]
            .iter()
            .any(|v| v.is_nan() || *v <= 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "budgets must be positive (c_server={}, c_loc={})",
                b.c_server, b.c_loc
            )));
        }
        self.de.validate()?;
        if !(2.0..=5.0).contains(&self.alpha) {
            warn!("alpha = {} outside the swept range [2, 5]", self.alpha);
        }
        if !(0.6..=1.0).contains(&self.utilization) {
            warn!(
                "utilization = {} outside the swept range [0.6, 1]",
                self.utilization
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVar {
    Alpha,
    Utilization,
    ClusterSize,
}

impl SweepVar {
    pub fn apply(self, base: &SimConfig, value: f64) -> Result<SimConfig> {
        let mut cfg = base.clone();
        match self {
            SweepVar::Alpha => cfg.alpha = value,
            SweepVar::Utilization => cfg.utilization = value,
            SweepVar::ClusterSize => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::InvalidParameter(format!("cluster size {value}")));
                }
                cfg.cluster_size = value as usize;
                // Budgets scale with the cluster unless pinned per-user.
                if let Some(cs) = base.c_server {
                    let per_cell = cs / base.cluster_size as f64;
                    cfg.c_server = Some(per_cell * cfg.cluster_size as f64);
                }
            }
        }
        Ok(cfg)
    }
}

/// One trial under one scheduler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub scheduler: SchedulerKind,
    pub throughput: f64,
    /// MRS, Local Limit, SCC: cluster-wide outage. EJF: some user skipped.
    pub outage: bool,
}

/// All trials of one configuration, per scheduler, in trial order.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub config: SimConfig,
    pub throughput: Vec<(SchedulerKind, Vec<f64>)>,
    pub outage: Vec<(SchedulerKind, Vec<bool>)>,
}

/// Mean and standard error (sample std / sqrt(n)); two-pass over a slice.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

impl PointResult {
    pub fn throughputs(&self, kind: SchedulerKind) -> Option<&[f64]> {
        self.throughput
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, v)| v.as_slice())
    }

    pub fn outages(&self, kind: SchedulerKind) -> Option<&[bool]> {
        self.outage
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, v)| v.as_slice())
    }

    /// Mean and standard error of the per-trial difference `a - b`.
    pub fn paired_difference(&self, a: SchedulerKind, b: SchedulerKind) -> Option<(f64, f64)> {
        let ta = self.throughputs(a)?;
        let tb = self.throughputs(b)?;
        let diff: Vec<f64> = ta.iter().zip(tb).map(|(x, y)| x - y).collect();
        Some(mean_stderr(&diff))
    }

    pub fn rows(&self) -> Vec<SweepRow> {
        self.throughput
            .iter()
            .zip(&self.outage)
            .map(|((kind, t), (_, o))| {
                let (mean, se) = mean_stderr(t);
                let outages = o.iter().filter(|&&x| x).count();
                SweepRow {
                    scheduler: *kind,
                    alpha: self.config.alpha,
                    utilization: self.config.utilization,
                    cluster_size: self.config.cluster_size,
                    gamma_db: self.config.gamma_db,
                    s: self.config.s,
                    trials: self.config.trials,
                    seed: self.config.seed,
                    mean_throughput: mean,
                    stderr_throughput: se,
                    outage_prob: outages as f64 / o.len().max(1) as f64,
                }
            })
            .collect()
    }
}

/// One aggregated output row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheduler: SchedulerKind,
    pub alpha: f64,
    pub utilization: f64,
    pub cluster_size: usize,
    pub gamma_db: f64,
    pub s: f64,
    pub trials: usize,
    pub seed: u64,
    pub mean_throughput: f64,
    pub stderr_throughput: f64,
    pub outage_prob: f64,
}

/// Palette, calibration and the shared complexity caches.
pub struct Simulator {
    palette: CodePalette,
    curve: CalibrationCurve,
    caches: Mutex<Vec<Arc<IterationCache>>>,
}

impl Simulator {
    pub fn new(palette: CodePalette, curve: CalibrationCurve) -> Self {
        Simulator {
            palette,
            curve,
            caches: Mutex::new(Vec::new()),
        }
    }

    /// Shipped palette and calibration.
    pub fn shipped() -> Self {
        Self::new(CodePalette::shipped(), CalibrationCurve::shipped())
    }

    pub fn palette(&self) -> &CodePalette {
        &self.palette
    }

    pub fn curve(&self) -> &CalibrationCurve {
        &self.curve
    }

    pub fn cache(&self, de: &DeConfig) -> Arc<IterationCache> {
        let mut caches = self.caches.lock().expect("cache list poisoned");
        if let Some(c) = caches.iter().find(|c| c.config() == de) {
            return Arc::clone(c);
        }
        let c = Arc::new(IterationCache::new(&self.palette, *de));
        caches.push(Arc::clone(&c));
        c
    }

    /// The scheduling problem of trial `trial`.
    pub fn trial_input(
        &self,
        cfg: &SimConfig,
        topo: &Topology,
        cache: &IterationCache,
        trial: usize,
    ) -> Result<SchedulingInput> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(trial as u64);
        let drop = drop_users(topo, cfg.utilization, &mut rng)?;
        let snap = snapshot(topo, &drop, &self.curve)?;
        Ok(SchedulingInput::from_snapshot(&snap, &self.palette, cache))
    }

    pub fn run_trial(
        &self,
        cfg: &SimConfig,
        topo: &Topology,
        trial: usize,
    ) -> Result<Vec<TrialOutcome>> {
        let cache = self.cache(&cfg.de);
        self.trial_with_cache(cfg, topo, &cache, trial)
    }

    fn trial_with_cache(
        &self,
        cfg: &SimConfig,
        topo: &Topology,
        cache: &IterationCache,
        trial: usize,
    ) -> Result<Vec<TrialOutcome>> {
        let input = self.trial_input(cfg, topo, cache, trial)?;
        let budget = cfg.budget();
        Ok(cfg
            .schedulers
            .iter()
            .map(|&kind| {
                let d = schedule(kind, &input, &budget);
                TrialOutcome {
                    scheduler: kind,
                    throughput: d.throughput,
                    outage: d.budget_limited(),
                }
            })
            .collect())
    }

    pub fn run_point(&self, cfg: &SimConfig) -> Result<PointResult> {
        cfg.validate()?;
        let topo = cfg.topology()?;
        let cache = self.cache(&cfg.de);
        let trials = (0..cfg.trials)
            .into_par_iter()
            .map(|t| self.trial_with_cache(cfg, &topo, &cache, t))
            .collect::<Result<Vec<_>>>()?;
        let throughput = cfg
            .schedulers
            .iter()
            .enumerate()
            .map(|(k, &kind)| (kind, trials.iter().map(|t| t[k].throughput).collect()))
            .collect();
        let outage = cfg
            .schedulers
            .iter()
            .enumerate()
            .map(|(k, &kind)| (kind, trials.iter().map(|t| t[k].outage).collect()))
            .collect();
        Ok(PointResult {
            config: cfg.clone(),
            throughput,
            outage,
        })
    }

    pub fn run_sweep(
        &self,
        base: &SimConfig,
        var: SweepVar,
        points: &[f64],
    ) -> Result<Vec<PointResult>> {
        points
            .iter()
            .map(|&p| self.run_point(&var.apply(base, p)?))
            .collect()
    }
}

/// Rows of every point, sorted by scheduler, then swept parameters.
pub fn sweep_rows(results: &[PointResult]) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = results.iter().flat_map(PointResult::rows).collect();
    rows.sort_by(|a, b| {
        a.scheduler
            .cmp(&b.scheduler)
            .then(a.alpha.total_cmp(&b.alpha))
            .then(a.utilization.total_cmp(&b.utilization))
            .then(a.cluster_size.cmp(&b.cluster_size))
            .then(a.gamma_db.total_cmp(&b.gamma_db))
            .then(a.s.total_cmp(&b.s))
    });
    rows
}

pub const CSV_HEADER: [&str; 11] = [
    "scheduler",
    "alpha",
    "utilization",
    "cluster_size",
    "gamma_db",
    "s",
    "trials",
    "seed",
    "mean_throughput",
    "stderr_throughput",
    "outage_prob",
];

pub fn write_rows<W: std::io::Write>(
    rows: &[SweepRow],
    out: W,
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes sorted rows to `path` as CSV with a header row.
pub fn emit_results(results: &[PointResult], path: impl AsRef<Path>) -> Result<()> {
    emit_rows(&sweep_rows(results), path)
}

pub fn emit_rows(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_rows(rows, file).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_results(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    r.deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trials: usize) -> SimConfig {
        SimConfig {
            trials,
            ..SimConfig::default()
        }
    }

    #[test]
    fn budget_defaults() {
        let b = SimConfig::default().budget();
        assert_eq!(b.c_server, 1050.0);
        assert_eq!(b.c_loc, 150.0);
        let b = SimConfig {
            c_server: Some(70.0),
            ..SimConfig::default()
        }
        .budget();
        assert_eq!(b.c_loc, 10.0);
    }

    #[test]
    fn empty_network() {
        let sim = Simulator::shipped();
        let cfg = SimConfig {
            utilization: 0.0,
            ..small(5)
        };
        let topo = cfg.topology().unwrap();
        for t in 0..5 {
            for o in sim.run_trial(&cfg, &topo, t).unwrap() {
                assert_eq!(o.throughput, 0.0);
                assert!(!o.outage);
            }
        }
    }

    #[test]
    fn trials_are_reproducible() {
        let sim = Simulator::shipped();
        let cfg = small(1);
        let topo = cfg.topology().unwrap();
        let a = sim.run_trial(&cfg, &topo, 17).unwrap();
        let b = Simulator::shipped().run_trial(&cfg, &topo, 17).unwrap();
        assert_eq!(a, b);
        let c = sim.run_trial(&cfg, &topo, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_configs() {
        let sim = Simulator::shipped();
        assert!(sim.run_point(&small(0)).is_err());
        assert!(sim
            .run_point(&SimConfig {
                cluster_size: 11,
                ..small(1)
            })
            .is_err());
        assert!(sim
            .run_point(&SimConfig {
                schedulers: vec![],
                ..small(1)
            })
            .is_err());
    }

    #[test]
    fn cluster_sweep_scales_pinned_budget() {
        let base = SimConfig {
            c_server: Some(700.0),
            ..SimConfig::default()
        };
        let cfg = SweepVar::ClusterSize.apply(&base, 4.0).unwrap();
        assert_eq!(cfg.cluster_size, 4);
        assert_eq!(cfg.c_server, Some(400.0));
        assert!(SweepVar::ClusterSize.apply(&base, 2.5).is_err());
    }

    #[test]
    fn stats() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((se - sd / 2.0).abs() < 1e-15);
        assert_eq!(mean_stderr(&[]), (0.0, 0.0));
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn header_only_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        emit_results(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim_end(), CSV_HEADER.join(","));
        assert!(parse_results(&path).unwrap().is_empty());
    }

    #[test]
    fn rows_round_trip_and_sort() {
        let sim = Simulator::shipped();
        let results = sim
            .run_sweep(&small(20), SweepVar::Utilization, &[1.0, 0.6])
            .unwrap();
        let rows = sweep_rows(&results);
        assert_eq!(rows.len(), 8);
        assert!(rows
            .windows(2)
            .all(|w| (w[0].scheduler, w[0].utilization) <= (w[1].scheduler, w[1].utilization)));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        emit_results(&results, &path).unwrap();
        assert_eq!(parse_results(&path).unwrap(), rows);

        let again = dir.path().join("again.csv");
        emit_results(
            &Simulator::shipped()
                .run_sweep(&small(20), SweepVar::Utilization, &[1.0, 0.6])
                .unwrap(),
            &again,
        )
        .unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap()
        );
    }

    #[test]
    fn io_errors_carry_path() {
        let err = emit_results(&[], "/nonexistent-dir/x.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
