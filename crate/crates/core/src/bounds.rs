//! Exponential sandwiches for fixation probabilities, their
//! infinite-population limits, and the prisoner's-dilemma tightness
//! classification of the Moran bound.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::branching::solve_q;
use crate::error::{Error, Result};
use crate::game::{DominanceCertificate, GameSpec};

/// Relative tolerance for the equality cases of the tightness classifier.
pub const PD_EQUALITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    /// `(1 - c^i)/(1 - c^N)` with `c = rho` (lower) and `c = theta` (upper).
    WrightFisher,
    /// `(1 - c^i)/(1 - c^N)` with `c = gamma` (lower) and `c = alpha` (upper).
    Moran,
    /// `N -> infinity` limit.
    Limit,
}

impl BoundSource {
    pub fn label(self) -> &'static str {
        match self {
            BoundSource::WrightFisher => "wright_fisher",
            BoundSource::Moran => "moran",
            BoundSource::Limit => "limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    /// Population size; `None` for limits.
    pub n: Option<usize>,
    pub i: usize,
    pub lower: f64,
    pub upper: f64,
    pub source: BoundSource,
}

impl BoundReport {
    /// `lower <= p <= upper` up to a relative rounding slack.
    pub fn contains(&self, p: f64, rel_slack: f64) -> bool {
        self.lower <= p * (1.0 + rel_slack) && p <= self.upper * (1.0 + rel_slack)
    }
}

/// `(1 - c^i) / (1 - c^N)` via `expm1`, accurate for `c` near 1.
pub fn exponential_profile(c: f64, n: usize, i: usize) -> f64 {
    if i == n {
        return 1.0;
    }
    let l = c.ln();
    (i as f64 * l).exp_m1() / (n as f64 * l).exp_m1()
}

fn sandwich(
    cert: &DominanceCertificate,
    n: usize,
    i: usize,
    lower_base: f64,
    upper_base: f64,
    source: BoundSource,
) -> Result<BoundReport> {
    cert.check_n(n)?;
    if i > n {
        return Err(Error::InvalidPopulation { n, i });
    }
    Ok(BoundReport {
        n: Some(n),
        i,
        lower: exponential_profile(lower_base, n, i),
        upper: exponential_profile(upper_base, n, i),
        source,
    })
}

/// Wright-Fisher sandwich with bases `rho` and `theta`.
pub fn wf_fixation_bounds(cert: &DominanceCertificate, n: usize, i: usize) -> Result<BoundReport> {
    sandwich(cert, n, i, cert.rho, cert.theta, BoundSource::WrightFisher)
}

/// Moran sandwich with bases `gamma` and `alpha`.
pub fn moran_fixation_bounds(cert: &DominanceCertificate, n: usize, i: usize) -> Result<BoundReport> {
    sandwich(cert, n, i, cert.gamma, cert.alpha, BoundSource::Moran)
}

/// `lim_N p_N(i) = 1 - q^i` for the Wright-Fisher chain.
pub fn wf_limit(cert: &DominanceCertificate, i: usize) -> Result<f64> {
    let q = solve_q(cert.lambda)?.q;
    Ok(-(i as f64 * q.ln()).exp_m1())
}

/// `lim_N p_N(i) = 1 - lambda^{-i}` for the Moran chain.
pub fn moran_limit(cert: &DominanceCertificate, i: usize) -> f64 {
    -(-(i as f64) * cert.lambda.ln()).exp_m1()
}

/// For which `w` the Moran lower bound `1 - gamma` at `i = 1` coincides with
/// the limit `1 - 1/lambda`, for payoffs ordered `b > d > a > c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "threshold", rename_all = "snake_case")]
pub enum PdTightness {
    /// `ad >= bc` and `c + b - a - d <= 0`: every `w in (0, 1]`.
    AlwaysTight,
    /// `ad > bc` and `c + b - a - d > 0`: exactly `w >= threshold`.
    TightIffWGeq(f64),
    /// `ad = bc` and `c + b - a - d > 0`: only `w = 1`.
    TightOnlyW1,
    /// `ad < bc` and `c + b - a - d >= 0`.
    NeverTight,
    /// `ad < bc` and `c + b - a - d < 0`, which the payoff ordering rules out.
    Infeasible,
}

impl PdTightness {
    pub fn is_tight(&self, w: f64) -> bool {
        match *self {
            PdTightness::AlwaysTight => w > 0.0 && w <= 1.0,
            PdTightness::TightIffWGeq(t) => w >= t && w <= 1.0,
            PdTightness::TightOnlyW1 => w == 1.0,
            PdTightness::NeverTight | PdTightness::Infeasible => false,
        }
    }
}

/// Sign of `x` with `|x| <= tol * scale` treated as zero.
fn tolerant_sign(x: f64, scale: f64) -> i8 {
    if x.abs() <= PD_EQUALITY_TOLERANCE * scale {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

/// Classifies by the signs of `ad - bc` and `c + b - a - d`.
///
/// Equality is decided with a relative tolerance of `1e-12`; payoffs that
/// are equal only up to rounding therefore land in the boundary cases.
pub fn classify_pd_tightness(spec: &GameSpec) -> Result<PdTightness> {
    let GameSpec { a, b, c, d, .. } = *spec;
    if !(b > d && d > a && a > c && c > 0.0) {
        return Err(Error::NotPrisonersDilemma);
    }
    let det = a * d - b * c;
    let s = c + b - a - d;
    let det_sign = tolerant_sign(det, (a * d).max(b * c));
    let s_sign = tolerant_sign(s, (c + b).max(a + d));
    Ok(match (det_sign, s_sign) {
        (0 | 1, -1 | 0) => PdTightness::AlwaysTight,
        (1, 1) => PdTightness::TightIffWGeq(1.0 / (1.0 + det / s)),
        (0, 1) => PdTightness::TightOnlyW1,
        (-1, 0 | 1) => PdTightness::NeverTight,
        _ => PdTightness::Infeasible,
    })
}

/// One row of a bounds table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub i: usize,
    pub lower: f64,
    pub exact: Option<f64>,
    pub upper: f64,
    #[serde(serialize_with = "source_label")]
    pub source: BoundSource,
}

fn source_label<S: serde::Serializer>(s: &BoundSource, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.serialize_str(s.label())
}

impl BoundRow {
    pub fn new(report: &BoundReport, exact: Option<f64>) -> Self {
        Self {
            n: report.n.unwrap_or(0),
            i: report.i,
            lower: report.lower,
            exact,
            upper: report.upper,
            source: report.source,
        }
    }
}

/// Writes `N,i,lower,exact,upper,source`.
pub fn write_bounds_csv<W: Write>(out: W, rows: &[BoundRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InvalidArgument(format!("csv output failed: {e}"));
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
}
