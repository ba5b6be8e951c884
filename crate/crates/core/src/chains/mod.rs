//! Transition kernels on `{0..N}` and the seeded simulation engine.
//!
//! Three kernels share the same game data:
//!
//! * Wright-Fisher: `X' ~ BIN(N, xi_N(i))`.
//! * Moran: one birth-death event per step, with lazy mass.
//! * Embedded Moran: the Moran jump chain, lazy mass removed. Its fixation
//!   probabilities coincide with the Moran chain's.

mod sim;

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{binomial_pmf, log_sum_exp, InversionTable};
use crate::error::{Error, Result};
use crate::game::{GameSpec, PopulationPoint};

pub use sim::{
    empirical_time_cdf, monte_carlo_fixation, monte_carlo_fixation_with, simulate, simulate_thinned,
    write_trajectories_csv, write_trajectory_csv, McEstimate, RngStream, TimeCdfPoint, Trajectory,
};

/// Tail mass dropped on each side of a Wright-Fisher sampling table.
const SAMPLER_TAIL: f64 = 1e-17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChainKind {
    WrightFisher,
    Moran,
    EmbeddedMoran,
}

impl ChainKind {
    /// Step budget after which a run is reported as censored.
    pub fn default_max_steps(self) -> u64 {
        match self {
            ChainKind::WrightFisher => 10_000_000,
            ChainKind::Moran | ChainKind::EmbeddedMoran => 1_000_000_000,
        }
    }
}

/// Row-generating description of a finite absorbing chain.
///
/// Wright-Fisher sampling tables are built lazily per state and cached, so a
/// kernel can be shared by reference across simulation threads.
#[derive(Debug)]
pub struct ChainKernel {
    kind: ChainKind,
    spec: GameSpec,
    n: usize,
    tables: Vec<OnceLock<InversionTable>>,
}

impl Clone for ChainKernel {
    fn clone(&self) -> Self {
        Self::build(self.kind, self.spec, self.n)
    }
}

impl ChainKernel {
    pub fn new(kind: ChainKind, spec: GameSpec, n: usize) -> Result<Self> {
        spec.validate()?;
        PopulationPoint::new(n, 0)?;
        Ok(Self::build(kind, spec, n))
    }

    fn build(kind: ChainKind, spec: GameSpec, n: usize) -> Self {
        let tables = match kind {
            ChainKind::WrightFisher => (0..=n).map(|_| OnceLock::new()).collect(),
            _ => Vec::new(),
        };
        Self { kind, spec, n, tables }
    }

    pub fn wright_fisher(spec: GameSpec, n: usize) -> Result<Self> {
        Self::new(ChainKind::WrightFisher, spec, n)
    }

    pub fn moran(spec: GameSpec, n: usize) -> Result<Self> {
        Self::new(ChainKind::Moran, spec, n)
    }

    pub fn embedded_moran(spec: GameSpec, n: usize) -> Result<Self> {
        Self::new(ChainKind::EmbeddedMoran, spec, n)
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        i == 0 || i == self.n
    }

    /// Dense transition row `P(i, .)` over `{0..N}`.
    pub fn row(&self, i: usize) -> Vec<f64> {
        assert!(i <= self.n, "state {i} outside 0..={}", self.n);
        match self.kind {
            ChainKind::WrightFisher => wf_row(&self.spec, self.n, i),
            ChainKind::Moran => moran_row(&self.spec, self.n, i),
            ChainKind::EmbeddedMoran => embedded_moran_row(&self.spec, self.n, i),
        }
    }

    /// `(P(i, i+1), P(i, i-1))` for the nearest-neighbour kernels.
    pub fn up_down(&self, i: usize) -> Option<(f64, f64)> {
        match self.kind {
            ChainKind::WrightFisher => None,
            ChainKind::Moran => Some(moran_up_down(&self.spec, self.n, i)),
            ChainKind::EmbeddedMoran => Some(embedded_up_down(&self.spec, self.n, i)),
        }
    }

    /// One transition from `i`, consuming exactly one uniform from `rng`.
    pub fn step<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        if self.is_absorbing(i) {
            return i;
        }
        match self.kind {
            ChainKind::WrightFisher => self.wf_table(i).invert(u),
            ChainKind::Moran | ChainKind::EmbeddedMoran => {
                let (up, down) = self.up_down(i).expect("nearest-neighbour kernel");
                if u < up {
                    i + 1
                } else if u < up + down {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    fn wf_table(&self, i: usize) -> &InversionTable {
        self.tables[i].get_or_init(|| InversionTable::from_probs(&wf_row(&self.spec, self.n, i), SAMPLER_TAIL))
    }
}

/// Wright-Fisher row: the `BIN(N, xi_N(i))` pmf, built in log-space.
pub fn wf_row(spec: &GameSpec, n: usize, i: usize) -> Vec<f64> {
    let xi = spec.success_prob(PopulationPoint { n, i });
    binomial_pmf(n, xi)
}

fn moran_up_down(spec: &GameSpec, n: usize, i: usize) -> (f64, f64) {
    if i == 0 || i >= n {
        return (0.0, 0.0);
    }
    let xi = spec.success_prob(PopulationPoint { n, i });
    let nf = n as f64;
    let up = (n - i) as f64 / nf * xi;
    let down = i as f64 / nf * (1.0 - xi);
    (up, down)
}

fn embedded_up_down(spec: &GameSpec, n: usize, i: usize) -> (f64, f64) {
    if i == 0 || i >= n {
        return (0.0, 0.0);
    }
    let (up, down) = moran_up_down(spec, n, i);
    let up_share = up / (up + down);
    (up_share, 1.0 - up_share)
}

/// Moran row: `P(i,i+1) = (N-i)/N xi`, `P(i,i-1) = i/N (1-xi)`, remainder lazy.
pub fn moran_row(spec: &GameSpec, n: usize, i: usize) -> Vec<f64> {
    let mut row = vec![0.0; n + 1];
    if i == 0 || i == n {
        row[i] = 1.0;
        return row;
    }
    let (up, down) = moran_up_down(spec, n, i);
    row[i + 1] = up;
    row[i - 1] = down;
    row[i] = 1.0 - up - down;
    row
}

/// Jump chain of the Moran process: moves up with probability
/// `P(i,i+1) / (P(i,i+1) + P(i,i-1))`, otherwise down.
pub fn embedded_moran_row(spec: &GameSpec, n: usize, i: usize) -> Vec<f64> {
    let mut row = vec![0.0; n + 1];
    if i == 0 || i == n {
        row[i] = 1.0;
        return row;
    }
    let (up, down) = embedded_up_down(spec, n, i);
    row[i + 1] = up;
    row[i - 1] = down;
    row
}

/// First pair `i < j` and level `k` at which `P(X' <= k | i) > P(X' <= k | j)`
/// fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MonotonicityViolation {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MonotonicityReport {
    pub n: usize,
    pub comparisons: usize,
    pub violation: Option<MonotonicityViolation>,
}

impl MonotonicityReport {
    pub fn holds(&self) -> bool {
        self.violation.is_none()
    }
}

/// Enumerates every interior pair `i < j` and every `k in 0..N-1` and checks
/// strict first-order dominance of the Wright-Fisher row of `j` over that of
/// `i`.
///
/// Both tails are accumulated in log-space from the pmf, never as `1 - cdf`,
/// and each comparison is made on whichever tail of row `i` is below one
/// half.
pub fn verify_stochastic_monotonicity(kernel: &ChainKernel) -> Result<MonotonicityReport> {
    if kernel.kind() != ChainKind::WrightFisher {
        return Err(Error::InvalidArgument(
            "stochastic monotonicity is checked on Wright-Fisher kernels".into(),
        ));
    }
    let n = kernel.n();
    let tails: Vec<(Vec<f64>, Vec<f64>)> = (0..=n)
        .map(|i| {
            if (1..n).contains(&i) {
                log_tails(&kernel.row(i))
            } else {
                (Vec::new(), Vec::new())
            }
        })
        .collect();
    let half = 0.5f64.ln();
    let mut comparisons = 0;
    for i in 1..n {
        for j in i + 1..n {
            let (lo_i, hi_i) = &tails[i];
            let (lo_j, hi_j) = &tails[j];
            for k in 0..n {
                comparisons += 1;
                let ok = if lo_i[k] <= half {
                    lo_i[k] > lo_j[k]
                } else {
                    hi_i[k] < hi_j[k]
                };
                if !ok {
                    return Ok(MonotonicityReport {
                        n,
                        comparisons,
                        violation: Some(MonotonicityViolation { i, j, k }),
                    });
                }
            }
        }
    }
    Ok(MonotonicityReport {
        n,
        comparisons,
        violation: None,
    })
}

/// `(ln P(X <= k), ln P(X > k))` for every `k`.
fn log_tails(row: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let logs: Vec<f64> = row.iter().map(|p| p.ln()).collect();
    let len = logs.len();
    let mut lower = vec![f64::NEG_INFINITY; len];
    let mut acc = f64::NEG_INFINITY;
    for k in 0..len {
        acc = log_sum_exp(&[acc, logs[k]]);
        lower[k] = acc;
    }
    let mut upper = vec![f64::NEG_INFINITY; len];
    let mut acc = f64::NEG_INFINITY;
    for k in (0..len).rev() {
        upper[k] = acc;
        acc = log_sum_exp(&[acc, logs[k]]);
    }
    (lower, upper)
}
