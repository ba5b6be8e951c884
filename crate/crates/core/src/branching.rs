//! Poisson Galton-Watson approximation of the Wright-Fisher chain near `0`:
//! extinction probability, extinction-time CDF and its fractional-linear
//! brackets, the maximal inequality for `W_m = max_{t<=m} Z_t`, and the
//! resulting window on `P(T <= m | X_0 = k)`.

use std::io::Write;

use serde::Serialize;

use crate::chains::RngStream;
use crate::dist::sample_poisson;
use crate::error::{Error, Result};
use crate::game::DominanceCertificate;

/// Galton-Watson process with Poisson(`lambda`) offspring, `lambda > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonBP {
    pub lambda: f64,
}

impl PoissonBP {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 1.0 {
            return Err(Error::Subcritical { lambda });
        }
        Ok(Self { lambda })
    }

    /// Offspring generating function `e^{-lambda (1 - s)}`.
    pub fn pgf(&self, s: f64) -> f64 {
        (-self.lambda * (1.0 - s)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtinctionSolution {
    pub q: f64,
    pub lambda_q: f64,
}

/// Interior root of `q = e^{-lambda (1 - q)}`.
///
/// The root lies in `(0, 1/lambda)`: the residual is negative at `0` and
/// positive at `1/lambda` because `ln x < x - 1` for `x > 1`. Bisection runs
/// until the bracket cannot shrink further.
pub fn solve_q(lambda: f64) -> Result<ExtinctionSolution> {
    let bp = PoissonBP::new(lambda)?;
    let residual = |q: f64| q - bp.pgf(q);
    let (mut lo, mut hi) = (0.0f64, 1.0 / lambda);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = if residual(lo).abs() <= residual(hi).abs() {
        lo
    } else {
        hi
    };
    Ok(ExtinctionSolution {
        q,
        lambda_q: lambda * q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FractionalLinearParams {
    pub s1: f64,
    pub s2: f64,
}

impl FractionalLinearParams {
    pub fn new(lambda: f64, q: f64) -> Self {
        let lq = lambda * q;
        Self {
            s1: (4.0 - lq * lq) / lq,
            s2: lambda * (-lambda).exp() / (lq + (-lq).exp() - 1.0),
        }
    }
}

/// `(q s (1 - (lambda q)^m) / (s - (lambda q)^m))^k`.
fn fractional_linear(q: f64, lambda_q: f64, s: f64, k: u32, m: u32) -> f64 {
    let r = lambda_q.powi(m as i32);
    (q * s * (1.0 - r) / (s - r)).powi(k as i32)
}

/// `P(T_0 <= m | Z_0 = k) = (g^{(m)}(0))^k` for the offspring pgf `g`.
pub fn extinction_cdf_exact(lambda: f64, k: u32, m: u32) -> f64 {
    let mut s = 0.0;
    for _ in 0..m {
        s = (-lambda * (1.0 - s)).exp();
    }
    s.powi(k as i32)
}

/// Fractional-linear `(lower, upper)` brackets on the extinction-time CDF.
pub fn extinction_cdf_bounds(lambda: f64, k: u32, m: u32) -> Result<(f64, f64)> {
    let sol = solve_q(lambda)?;
    let fl = FractionalLinearParams::new(lambda, sol.q);
    Ok((
        fractional_linear(sol.q, sol.lambda_q, fl.s1, k, m),
        fractional_linear(sol.q, sol.lambda_q, fl.s2, k, m),
    ))
}

/// `lambda x*`, where `x*` is the positive root of `e^x - 1 = eta x`; this is
/// the largest `theta` with `e^x - 1 <= eta x` on `[0, theta / lambda]`.
pub fn theta_eta(eta: f64, lambda: f64) -> Result<f64> {
    if !eta.is_finite() || eta <= 1.0 {
        return Err(Error::InvalidArgument(format!("eta = {eta} must exceed 1")));
    }
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be positive")));
    }
    // convex, zero at the origin with slope 1 - eta < 0
    let phi = |x: f64| x.exp_m1() - eta * x;
    let mut hi = 1.0;
    while phi(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0f64;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lambda * lo)
}

/// Exponential rate used in the maximal inequality over `m` generations:
/// `theta_eta(eta) eta^{1-m}`, the largest rate for which every step of the
/// `m`-generation exponential-moment recursion stays inside `[0, x*]`.
pub fn exceedance_rate(eta: f64, lambda: f64, m: u32) -> Result<f64> {
    let theta = theta_eta(eta, lambda)?;
    Ok(theta * eta.powi(1 - m.max(1) as i32))
}

/// Exponent `rate lambda^{-m} (k eta^m lambda^m - threshold)`.
fn exceedance_exponent(rate: f64, k: u32, m: u32, threshold: f64, eta: f64, lambda: f64) -> f64 {
    let lm = lambda.powi(m as i32);
    rate / lm * (k as f64 * eta.powi(m as i32) * lm - threshold)
}

/// Upper bound on `P_k(max_{0<=t<=m} Z_t >= J)`.
pub fn max_exceedance_bound(k: u32, m: u32, j: f64, eta: f64, lambda: f64) -> Result<f64> {
    if k == 0 || m == 0 {
        return Err(Error::InvalidArgument("k and m must be at least 1".into()));
    }
    let rate = exceedance_rate(eta, lambda, m)?;
    Ok(exceedance_exponent(rate, k, m, j, eta, lambda).exp())
}

/// The individual terms of the fixation-time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowTerms {
    /// Fractional-linear lower bracket with `s1`.
    pub bp_lower: f64,
    /// Fractional-linear upper bracket with `s2`.
    pub bp_upper: f64,
    /// Exceedance term at threshold `N`.
    pub n_tail: f64,
    /// Accumulated coupling error `m C0 J^{3/2} / N`.
    pub coupling: f64,
    /// Exceedance term at threshold `J`.
    pub j_tail: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeWindow {
    pub lower_raw: f64,
    pub upper_raw: f64,
    pub lower: f64,
    pub upper: f64,
    pub terms: WindowTerms,
}

impl TimeWindow {
    /// Whether the clamped window carries no information.
    pub fn is_vacuous(&self) -> bool {
        self.lower <= 0.0 && self.upper >= 1.0
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Window on `P(T <= m | X_0 = k)` for the Wright-Fisher chain of population
/// `n`, given a coupling constant `c0` and a threshold `1 <= J < n`.
pub fn fixation_time_window(
    k: u32,
    m: u32,
    n: usize,
    j: usize,
    eta: f64,
    c0: f64,
    cert: &DominanceCertificate,
) -> Result<TimeWindow> {
    cert.check_n(n)?;
    if k == 0 || k as usize >= n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..{n}")));
    }
    if j == 0 || j >= n {
        return Err(Error::InvalidArgument(format!("J = {j} must lie in 1..{n}")));
    }
    if !c0.is_finite() || c0 < 0.0 {
        return Err(Error::InvalidArgument(format!("C0 = {c0} must be non-negative")));
    }
    let lambda = cert.lambda;
    let sol = solve_q(lambda)?;
    let fl = FractionalLinearParams::new(lambda, sol.q);
    let rate = exceedance_rate(eta, lambda, m)?;
    let tail = |threshold: f64| exceedance_exponent(rate, k, m, threshold, eta, lambda).exp();
    let terms = WindowTerms {
        bp_lower: fractional_linear(sol.q, sol.lambda_q, fl.s1, k, m),
        bp_upper: fractional_linear(sol.q, sol.lambda_q, fl.s2, k, m),
        n_tail: tail(n as f64),
        coupling: m as f64 * c0 * (j as f64).powf(1.5) / n as f64,
        j_tail: tail(j as f64),
    };
    let upper_raw = terms.bp_upper + terms.n_tail + terms.coupling + terms.j_tail;
    let lower_raw = terms.bp_lower - terms.coupling - terms.j_tail;
    Ok(TimeWindow {
        lower_raw,
        upper_raw,
        lower: lower_raw.clamp(0.0, 1.0),
        upper: upper_raw.clamp(0.0, 1.0),
        terms,
    })
}

/// One branching-process path, recorded at every generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BpTrajectory {
    pub initial: usize,
    pub states: Vec<usize>,
    /// First generation with `Z = 0` or `Z >= stop_at`, if reached.
    pub stopped_at: Option<u64>,
}

impl BpTrajectory {
    pub fn is_extinct(&self) -> bool {
        self.states.last() == Some(&0)
    }

    pub fn steps(&self) -> u64 {
        self.states.len() as u64 - 1
    }

    pub fn max(&self) -> usize {
        self.states.iter().copied().max().unwrap_or(0)
    }
}

/// Simulates `Z_{t+1} = sum_{k <= Z_t} Y_{t,k}` with Poisson(`lambda`)
/// offspring until extinction, until `Z >= stop_at`, or for `max_steps`
/// generations.
pub fn simulate_bp(
    lambda: f64,
    initial: usize,
    max_steps: u64,
    stop_at: Option<usize>,
    stream: RngStream,
) -> Result<BpTrajectory> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} must be non-negative"
        )));
    }
    let mut rng = stream.rng();
    let stop = |z: usize| z == 0 || stop_at.is_some_and(|s| z >= s);
    let mut states = vec![initial];
    let mut z = initial;
    let mut t = 0u64;
    while !stop(z) && t < max_steps {
        z = (0..z).map(|_| sample_poisson(lambda, &mut rng)).sum();
        states.push(z);
        t += 1;
    }
    Ok(BpTrajectory {
        initial,
        states,
        stopped_at: stop(z).then_some(t),
    })
}

/// One row of a fixation-time experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeWindowRow {
    pub m: u64,
    pub lower: f64,
    pub empirical: f64,
    pub upper: f64,
}

/// Writes `m,lower,empirical,upper`.
pub fn write_time_window_csv<W: Write>(out: W, rows: &[TimeWindowRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InvalidArgument(format!("csv output failed: {e}"));
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
}
