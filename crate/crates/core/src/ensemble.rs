//! Edge-perspective degree distributions, codes and rate palettes.
//!
//! A [`DegreeDistribution`] holds the sparse coefficients of
//! `lambda(x) = sum_i lambda_i x^(i-1)` and `rho(x) = sum_j rho_j x^(j-1)`.
//! Construction validates normalization instead of renormalizing, so an
//! optimizer that drifts off the simplex is reported rather than hidden.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum lambda_i = 1` and `sum rho_j = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Tolerance between a stored rate and the rate implied by the distribution.
pub const RATE_TOL: f64 = 1e-6;

/// Default maximum variable degree.
pub const DEFAULT_D_MAX: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Poly {
    Lambda,
    Rho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DegreeDistribution {
    lambda: BTreeMap<u32, f64>,
    rho: BTreeMap<u32, f64>,
    d_max: u32,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    lambda: Vec<(u32, f64)>,
    rho: Vec<(u32, f64)>,
    d_max: u32,
}

impl TryFrom<RawDistribution> for DegreeDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        DegreeDistribution::new(raw.lambda, raw.rho, raw.d_max)
    }
}

impl From<DegreeDistribution> for RawDistribution {
    fn from(d: DegreeDistribution) -> Self {
        RawDistribution {
            lambda: d.lambda.into_iter().collect(),
            rho: d.rho.into_iter().collect(),
            d_max: d.d_max,
        }
    }
}

fn collect_coeffs(
    name: &str,
    coeffs: impl IntoIterator<Item = (u32, f64)>,
) -> Result<BTreeMap<u32, f64>> {
    let mut map = BTreeMap::new();
    for (degree, value) in coeffs {
        if degree == 0 {
            return Err(Error::InvalidDistribution(format!("{name} has degree 0")));
        }
        if !(0.0..=1.0).contains(&value) || value.is_nan() {
            return Err(Error::InvalidDistribution(format!(
                "{name}_{degree} = {value} outside [0, 1]"
            )));
        }
        if value == 0.0 {
            continue;
        }
        if map.insert(degree, value).is_some() {
            return Err(Error::InvalidDistribution(format!(
                "{name} degree {degree} listed twice"
            )));
        }
    }
    let sum: f64 = map.values().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{name} coefficients sum to {sum}"
        )));
    }
    Ok(map)
}

fn eval(coeffs: &BTreeMap<u32, f64>, x: f64) -> f64 {
    coeffs.iter().map(|(&d, &c)| c * x.powi(d as i32 - 1)).sum()
}

impl DegreeDistribution {
    pub fn new(
        lambda: impl IntoIterator<Item = (u32, f64)>,
        rho: impl IntoIterator<Item = (u32, f64)>,
        d_max: u32,
    ) -> Result<Self> {
        let lambda = collect_coeffs("lambda", lambda)?;
        let rho = collect_coeffs("rho", rho)?;
        if let Some((&top, _)) = lambda.last_key_value() {
            if top > d_max {
                return Err(Error::InvalidDistribution(format!(
                    "variable degree {top} exceeds d_max {d_max}"
                )));
            }
        }
        Ok(DegreeDistribution { lambda, rho, d_max })
    }

    /// Check-regular ensemble with `rho(x) = x^(d_c - 1)`.
    pub fn check_regular(
        lambda: impl IntoIterator<Item = (u32, f64)>,
        d_c: u32,
        d_max: u32,
    ) -> Result<Self> {
        Self::new(lambda, [(d_c, 1.0)], d_max)
    }

    /// The `(d_v, d_c)` regular ensemble.
    pub fn regular(d_v: u32, d_c: u32) -> Result<Self> {
        if d_v < 2 || d_v >= d_c {
            return Err(Error::NonPositiveRate { d_v, d_c });
        }
        Self::new([(d_v, 1.0)], [(d_c, 1.0)], d_v.max(DEFAULT_D_MAX))
    }

    pub fn lambda_coeffs(&self) -> &BTreeMap<u32, f64> {
        &self.lambda
    }

    pub fn rho_coeffs(&self) -> &BTreeMap<u32, f64> {
        &self.rho
    }

    pub fn d_max(&self) -> u32 {
        self.d_max
    }

    /// `Some(d_c)` when exactly one check degree carries all edges.
    pub fn check_degree(&self) -> Option<u32> {
        match self.rho.len() {
            1 => self.rho.keys().next().copied(),
            _ => None,
        }
    }

    pub fn eval_poly(&self, which: Poly, x: f64) -> f64 {
        match which {
            Poly::Lambda => eval(&self.lambda, x),
            Poly::Rho => eval(&self.rho, x),
        }
    }

    pub fn lambda(&self, x: f64) -> f64 {
        eval(&self.lambda, x)
    }

    pub fn rho(&self, x: f64) -> f64 {
        eval(&self.rho, x)
    }

    /// `R = 1 - (sum_j rho_j / j) / (sum_i lambda_i / i)`.
    pub fn design_rate(&self) -> Result<f64> {
        let lambda_int: f64 = self.lambda.iter().map(|(&d, &c)| c / d as f64).sum();
        let rho_int: f64 = self.rho.iter().map(|(&d, &c)| c / d as f64).sum();
        if lambda_int == 0.0 {
            return Err(Error::DegenerateDistribution);
        }
        Ok(1.0 - rho_int / lambda_int)
    }
}

/// Shorthand for [`DegreeDistribution::regular`].
pub fn regular_distribution(d_v: u32, d_c: u32) -> Result<DegreeDistribution> {
    DegreeDistribution::regular(d_v, d_c)
}

/// Formats a rate as a small fraction ("1/2") when one matches, else decimally.
pub fn rate_label(rate: f64) -> String {
    for den in 1..=20u32 {
        let num = (rate * den as f64).round();
        if num >= 1.0 && (num / den as f64 - rate).abs() < 1e-9 {
            return format!("{}/{}", num as u32, den);
        }
    }
    format!("{rate:.6}")
}

/// A designed code: distribution, its rate and its erasure threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSpec {
    distribution: DegreeDistribution,
    rate: f64,
    threshold: f64,
    label: String,
}

impl CodeSpec {
    pub fn new(
        distribution: DegreeDistribution,
        rate: f64,
        threshold: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        let label = label.into();
        let implied = distribution.design_rate()?;
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::InvalidCode(format!(
                "{label}: rate {rate} outside (0,1)"
            )));
        }
        if (implied - rate).abs() > RATE_TOL {
            return Err(Error::InvalidCode(format!(
                "{label}: stated rate {rate} but distribution gives {implied}"
            )));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidCode(format!(
                "{label}: threshold {threshold} outside (0,1)"
            )));
        }
        if threshold > 1.0 - rate {
            return Err(Error::InvalidCode(format!(
                "{label}: threshold {threshold} exceeds capacity bound {}",
                1.0 - rate
            )));
        }
        Ok(CodeSpec {
            distribution,
            rate,
            threshold,
            label,
        })
    }

    pub fn distribution(&self) -> &DegreeDistribution {
        &self.distribution
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn check_degree(&self) -> Option<u32> {
        self.distribution.check_degree()
    }
}

/// Codes sorted by strictly increasing rate (and strictly decreasing threshold).
#[derive(Debug, Clone, PartialEq)]
pub struct CodePalette {
    codes: Vec<CodeSpec>,
}

/// One palette-file record. Field order is part of the file format.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PaletteRecord {
    label: String,
    d_c: u32,
    d_max: u32,
    rate: f64,
    threshold: f64,
    lambda: Vec<(u32, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PaletteFile {
    codes: Vec<PaletteRecord>,
}

const SHIPPED_PALETTE: &str = include_str!("../data/palette.json");

impl CodePalette {
    pub fn new(codes: Vec<CodeSpec>) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::InvalidPalette("palette is empty".into()));
        }
        for pair in codes.windows(2) {
            let (lo, hi) = (&pair[0], &pair[1]);
            if hi.rate() <= lo.rate() {
                return Err(Error::InvalidPalette(format!(
                    "rates not strictly increasing at {} -> {}",
                    lo.label(),
                    hi.label()
                )));
            }
            if hi.threshold() >= lo.threshold() {
                return Err(Error::InvalidPalette(format!(
                    "thresholds not strictly decreasing at {} -> {}",
                    lo.label(),
                    hi.label()
                )));
            }
        }
        Ok(CodePalette { codes })
    }

    /// The eight-code palette checked into `data/palette.json`.
    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_PALETTE).expect("shipped palette is valid")
    }

    pub fn codes(&self) -> &[CodeSpec] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&CodeSpec> {
        self.codes.iter().find(|c| c.label() == label)
    }

    pub fn rates(&self) -> Vec<f64> {
        self.codes.iter().map(CodeSpec::rate).collect()
    }

    pub fn max_rate(&self) -> f64 {
        self.codes.last().map_or(0.0, CodeSpec::rate)
    }

    /// Largest erasure probability any code in the palette can handle.
    pub fn max_threshold(&self) -> f64 {
        self.codes.first().map_or(0.0, CodeSpec::threshold)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PaletteFile {
            codes: self
                .codes
                .iter()
                .map(|c| PaletteRecord {
                    label: c.label().to_string(),
                    d_c: c.check_degree().expect("palette codes are check-regular"),
                    d_max: c.distribution().d_max(),
                    rate: c.rate(),
                    threshold: c.threshold(),
                    lambda: c
                        .distribution()
                        .lambda_coeffs()
                        .iter()
                        .map(|(&d, &v)| (d, v))
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PaletteFile = serde_json::from_str(text)?;
        let codes = file
            .codes
            .into_iter()
            .map(|r| {
                let dist = DegreeDistribution::check_regular(r.lambda, r.d_c, r.d_max)?;
                CodeSpec::new(dist, r.rate, r.threshold, r.label)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(codes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Serde(source) => Error::Json {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
