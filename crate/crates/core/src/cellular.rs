//! Hex-grid uplink model: base stations, user drops, SINR with fractional
//! power control, and the SINR-to-erasure calibration curve.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRID_COLUMNS: usize = 11;
pub const GRID_ROWS: usize = 10;
pub const NUM_CELLS: usize = GRID_COLUMNS * GRID_ROWS;
pub const MAX_CLUSTER: usize = 10;

pub const DEFAULT_ALPHA: f64 = 3.0;
pub const DEFAULT_GAMMA_DB: f64 = 20.0;
pub const DEFAULT_S: f64 = 0.1;
pub const DEFAULT_CLUSTER: usize = 7;
pub const DEFAULT_UTILIZATION: f64 = 1.0;

pub const MIN_CALIBRATION_SAMPLES: usize = 1000;

const SQRT3: f64 = 1.732_050_807_568_877_2;

pub type Point = [f64; 2];

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// 110 base stations on an offset hex lattice with unit inter-site
/// distance, plus the computing cluster around the central cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    bs_positions: Vec<Point>,
    cluster_ids: Vec<usize>,
    pub alpha: f64,
    pub s: f64,
    /// SNR at unit distance, linear.
    pub gamma_unit: f64,
}

impl Topology {
    pub fn bs_positions(&self) -> &[Point] {
        &self.bs_positions
    }

    pub fn cluster_ids(&self) -> &[usize] {
        &self.cluster_ids
    }

    pub fn center(&self) -> usize {
        self.cluster_ids[0]
    }

    pub fn cluster_size(&self) -> usize {
        self.cluster_ids.len()
    }
}

fn lattice() -> Vec<Point> {
    (0..GRID_ROWS)
        .flat_map(|r| {
            (0..GRID_COLUMNS).map(move |c| {
                let shift = if r % 2 == 1 { 0.5 } else { 0.0 };
                [c as f64 + shift, r as f64 * SQRT3 / 2.0]
            })
        })
        .collect()
}

pub fn build_topology(n: usize, alpha: f64, gamma_db: f64, s: f64) -> Result<Topology> {
    if !(1..=MAX_CLUSTER).contains(&n) {
        return Err(Error::ClusterSize(n));
    }
    if alpha.is_nan() || alpha < 2.0 {
        return Err(Error::InvalidParameter(format!(
            "path-loss exponent {alpha} < 2"
        )));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidParameter(format!(
            "power-control factor {s} outside [0,1]"
        )));
    }
    if !gamma_db.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "unit-distance SNR {gamma_db} dB"
        )));
    }
    let bs = lattice();
    let centroid = {
        let (sx, sy) = bs.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        [sx / bs.len() as f64, sy / bs.len() as f64]
    };
    let center = (0..bs.len())
        .min_by(|&a, &b| {
            dist(bs[a], centroid)
                .total_cmp(&dist(bs[b], centroid))
                .then(a.cmp(&b))
        })
        .expect("non-empty lattice");

    // Rings around the center, counter-clockwise from the +x axis.
    let mut others: Vec<(i64, i64, usize)> = (0..bs.len())
        .filter(|&i| i != center)
        .map(|i| {
            let dx = bs[i][0] - bs[center][0];
            let dy = bs[i][1] - bs[center][1];
            let r = (dx.hypot(dy) * 1e6).round() as i64;
            let mut angle = dy.atan2(dx);
            if angle < -1e-9 {
                angle += std::f64::consts::TAU;
            }
            (r, (angle * 1e6).round() as i64, i)
        })
        .collect();
    others.sort_unstable();
    let mut cluster_ids = vec![center];
    cluster_ids.extend(others.iter().take(n - 1).map(|&(_, _, i)| i));

    Ok(Topology {
        bs_positions: bs,
        cluster_ids,
        alpha,
        s,
        gamma_unit: db_to_linear(gamma_db),
    })
}

/// Whether `p` (relative to its base station) lies in the hexagonal cell.
fn in_cell(p: Point) -> bool {
    let half = 0.5 + 1e-12;
    let u = 0.5 * p[0] + SQRT3 / 2.0 * p[1];
    let v = -0.5 * p[0] + SQRT3 / 2.0 * p[1];
    p[0].abs() <= half && u.abs() <= half && v.abs() <= half
}

fn uniform_in_cell<R: Rng + ?Sized>(center: Point, rng: &mut R) -> Point {
    let ry = 1.0 / SQRT3;
    loop {
        let p = [rng.random_range(-0.5..0.5), rng.random_range(-ry..ry)];
        if in_cell(p) {
            return [center[0] + p[0], center[1] + p[1]];
        }
    }
}

/// Users over the whole network, at most one per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Drop {
    pub users: Vec<Option<Point>>,
    pub utilization: f64,
}

impl Drop {
    pub fn occupied(&self) -> usize {
        self.users.iter().filter(|u| u.is_some()).count()
    }
}

pub fn drop_users<R: Rng + ?Sized>(topo: &Topology, u: f64, rng: &mut R) -> Result<Drop> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidParameter(format!(
            "utilization {u} outside [0,1]"
        )));
    }
    let users = topo
        .bs_positions
        .iter()
        .map(|&bs| rng.random_bool(u).then(|| uniform_in_cell(bs, rng)))
        .collect();
    Ok(Drop {
        users,
        utilization: u,
    })
}

/// Linear SINR at base station `cell`; interference from every other
/// occupied cell of the network.
pub fn sinr(topo: &Topology, drop: &Drop, cell: usize) -> Result<f64> {
    let x_j = drop
        .users
        .get(cell)
        .copied()
        .flatten()
        .ok_or(Error::EmptyCell(cell))?;
    let y_j = topo.bs_positions[cell];
    let a = topo.alpha;
    let numerator = dist(y_j, x_j).powf(a * (topo.s - 1.0));
    let interference: f64 = drop
        .users
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != cell)
        .filter_map(|(i, u)| u.map(|x_i| (i, x_i)))
        .map(|(i, x_i)| {
            let y_i = topo.bs_positions[i];
            dist(y_j, x_i).powf(-a) * dist(y_i, x_i).powf(topo.s * a)
        })
        .sum();
    Ok(numerator / (1.0 / topo.gamma_unit + interference))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mapping {
    /// `clamp(exp(a * sinr_db + b), 0, 1)`.
    #[default]
    Exponential,
    /// Linear interpolation of the stored empirical CCDF.
    Table,
}

/// SINR (dB) to initial erasure probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub a: f64,
    pub b: f64,
    /// SINR range (dB) over which the fit was made.
    pub fit_range_db: (f64, f64),
    pub samples: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub mapping: Mapping,
    /// Empirical CCDF as `(sinr_db, ccdf)`, SINR ascending.
    pub ccdf_table: Vec<(f64, f64)>,
}

const SHIPPED_CALIBRATION: &str = include_str!("../data/calibration.json");

/// CCDF points kept in the calibration file.
const TABLE_POINTS: usize = 201;

impl CalibrationCurve {
    /// Calibration computed with default parameters, checked into
    /// `data/calibration.json`.
    pub fn shipped() -> Self {
        serde_json::from_str(SHIPPED_CALIBRATION).expect("shipped calibration is valid")
    }

    pub fn with_mapping(mut self, mapping: Mapping) -> Self {
        self.mapping = mapping;
        self
    }

    pub fn eps0(&self, sinr_db: f64) -> f64 {
        match self.mapping {
            Mapping::Exponential => self.exponential(sinr_db),
            Mapping::Table => self.interpolate(sinr_db),
        }
    }

    pub fn exponential(&self, sinr_db: f64) -> f64 {
        (self.a * sinr_db + self.b).exp().clamp(0.0, 1.0)
    }

    pub fn interpolate(&self, sinr_db: f64) -> f64 {
        let t = &self.ccdf_table;
        let Some(first) = t.first() else {
            return self.exponential(sinr_db);
        };
        if sinr_db <= first.0 {
            return 1.0;
        }
        let last = t[t.len() - 1];
        if sinr_db >= last.0 {
            return 0.0;
        }
        let k = t.partition_point(|p| p.0 <= sinr_db);
        let (x0, y0) = t[k - 1];
        let (x1, y1) = t[k];
        if x1 <= x0 {
            return y1;
        }
        (y0 + (y1 - y0) * (sinr_db - x0) / (x1 - x0)).clamp(0.0, 1.0)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Cluster-cell SINRs (dB) over `trials` drops. Drop `t` uses stream `t` of
/// the master seed.
pub fn sample_cluster_sinr_db(
    topo: &Topology,
    u: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let drop = drop_users(topo, u, &mut rng)?;
            topo.cluster_ids()
                .iter()
                .filter(|&&c| drop.users[c].is_some())
                .map(|&c| sinr(topo, &drop, c).map(linear_to_db))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Empirical CCDF of `samples` at each sorted sample (Hazen plotting position).
pub fn empirical_ccdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(k, x)| (x, (n - k as f64 - 0.5) / n))
        .collect()
}

/// Fits `ln ccdf = a * sinr_db + b` over the points with `0.01 <= ccdf <= 0.99`.
pub fn fit_exponential(ccdf: &[(f64, f64)]) -> Result<(f64, f64, (f64, f64))> {
    let pts: Vec<(f64, f64)> = ccdf
        .iter()
        .filter(|(_, p)| (0.01..=0.99).contains(p))
        .map(|&(x, p)| (x, p.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: MIN_CALIBRATION_SAMPLES,
            got: ccdf.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("SINR samples are all equal".into()));
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    Ok((a, b, (pts[0].0, pts[pts.len() - 1].0)))
}

pub fn calibrate_from_samples(
    samples: &[f64],
    trials: usize,
    seed: u64,
) -> Result<CalibrationCurve> {
    if samples.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_CALIBRATION_SAMPLES,
            got: samples.len(),
        });
    }
    let ccdf = empirical_ccdf(samples);
    let (a, b, fit_range_db) = fit_exponential(&ccdf)?;
    let last = ccdf.len() - 1;
    let ccdf_table = (0..TABLE_POINTS)
        .map(|k| ccdf[k * last / (TABLE_POINTS - 1)])
        .collect();
    Ok(CalibrationCurve {
        a,
        b,
        fit_range_db,
        samples: samples.len(),
        trials,
        seed,
        mapping: Mapping::Exponential,
        ccdf_table,
    })
}

/// Calibrates the SINR-to-erasure curve from drops on `topo` at utilization `u`.
pub fn calibrate(topo: &Topology, u: f64, trials: usize, seed: u64) -> Result<CalibrationCurve> {
    let samples = sample_cluster_sinr_db(topo, u, trials, seed)?;
    calibrate_from_samples(&samples, trials, seed)
}

pub fn default_topology() -> Topology {
    build_topology(DEFAULT_CLUSTER, DEFAULT_ALPHA, DEFAULT_GAMMA_DB, DEFAULT_S)
        .expect("default parameters are valid")
}

/// Per-cluster-cell erasure probability; `None` marks an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSnapshot {
    pub eps0: Vec<Option<f64>>,
}

impl ClusterSnapshot {
    pub fn occupied(&self) -> usize {
        self.eps0.iter().filter(|e| e.is_some()).count()
    }
}

pub fn snapshot(topo: &Topology, drop: &Drop, curve: &CalibrationCurve) -> Result<ClusterSnapshot> {
    let eps0 = topo
        .cluster_ids()
        .iter()
        .map(|&c| match drop.users[c] {
            None => Ok(None),
            Some(_) => sinr(topo, drop, c).map(|g| Some(curve.eps0(linear_to_db(g)))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterSnapshot { eps0 })
}
