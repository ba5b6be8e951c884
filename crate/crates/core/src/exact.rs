//! Exact absorption probabilities: dense linear solves for any kernel, the
//! Moran closed form, one-step martingale checks and parameter sensitivities.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chains::{ChainKernel, ChainKind};
use crate::dist::log_sum_exp;
use crate::error::{Error, Result};
use crate::game::{GameSpec, PopulationPoint};

pub const DEFAULT_SOLVER_CAP: usize = 2000;
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Absorption probabilities at `N` and at `0` for every starting state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixationVector {
    pub n: usize,
    /// `p[i] = P(absorb at N | X_0 = i)`.
    pub p: Vec<f64>,
    /// `extinction[i] = P(absorb at 0 | X_0 = i)`, solved separately so that
    /// values near zero keep their relative precision.
    pub extinction: Vec<f64>,
    /// `max(|(I - Q)p - r|_inf)` over both right-hand sides.
    pub residual: f64,
}

impl FixationVector {
    /// Writes `i,p_lower_bound,p,p_upper_bound`; bound columns stay empty
    /// when `bounds` is `None`.
    pub fn write_csv<W: Write>(&self, out: W, bounds: Option<&[(f64, f64)]>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::InvalidArgument(format!("csv output failed: {e}"));
        w.write_record(["i", "p_lower_bound", "p", "p_upper_bound"])
            .map_err(err)?;
        for (i, p) in self.p.iter().enumerate() {
            let (lo, hi) = match bounds.and_then(|b| b.get(i)) {
                Some((lo, hi)) => (lo.to_string(), hi.to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([i.to_string(), lo, p.to_string(), hi]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

pub fn solve_fixation(kernel: &ChainKernel) -> Result<FixationVector> {
    solve_fixation_capped(kernel, DEFAULT_SOLVER_CAP)
}

/// Solves `(I - Q)p = r` on the interior states by dense LU with partial
/// pivoting, where `Q` is the interior block and `r[i] = P(i, N)`.
pub fn solve_fixation_capped(kernel: &ChainKernel, cap: usize) -> Result<FixationVector> {
    let n = kernel.n();
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    let m = n - 1;
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut rhs = DMatrix::<f64>::zeros(m, 2);
    for i in 1..n {
        let row = kernel.row(i);
        for j in 1..n {
            a[(i - 1, j - 1)] -= row[j];
        }
        rhs[(i - 1, 0)] = row[n];
        rhs[(i - 1, 1)] = row[0];
    }
    let sol = a.clone().lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let residual = (&a * &sol - &rhs).amax();
    if residual > RESIDUAL_TOLERANCE {
        return Err(Error::IllConditioned { residual });
    }
    let column = |c: usize, at_n: f64, at_0: f64| {
        let mut v = Vec::with_capacity(n + 1);
        v.push(at_0);
        v.extend(sol.column(c).iter().map(|x| x.clamp(0.0, 1.0)));
        v.push(at_n);
        v
    };
    Ok(FixationVector {
        n,
        p: column(0, 1.0, 0.0),
        extinction: column(1, 0.0, 1.0),
        residual,
    })
}

/// Moran fixation probability from the gambler's-ruin product formula,
/// with the products of `g/f` accumulated as log-sums.
pub fn moran_closed_form(spec: &GameSpec, n: usize, i: usize) -> Result<f64> {
    PopulationPoint::new(n, i)?;
    Ok(moran_closed_form_vector(spec, n)?[i])
}

/// All of `p_N(0..=N)` for the Moran chain in `O(N)`.
pub fn moran_closed_form_vector(spec: &GameSpec, n: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    PopulationPoint::new(n, 0)?;
    // prefix[i] = ln sum_{j<i} prod_{k=1..j} g/f
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(f64::NEG_INFINITY);
    let mut log_prod = 0.0;
    let mut acc = f64::NEG_INFINITY;
    for j in 0..n {
        if j > 0 {
            log_prod += spec.fitness_ratio(PopulationPoint { n, i: j }).ln();
        }
        acc = log_sum_exp(&[acc, log_prod]);
        prefix.push(acc);
    }
    let total = prefix[n];
    let mut p: Vec<f64> = prefix.iter().map(|l| (l - total).exp()).collect();
    p[n] = 1.0;
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `E(base^X' | i) <= base^i`.
    Sub,
    /// `E(base^X' | i) >= base^i`.
    Super,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub n: usize,
    pub base: f64,
    pub direction: Direction,
    /// Largest relative violation `E(base^X')/base^i - 1` in the forbidden
    /// direction; negative when every state satisfies the inequality.
    pub max_violation: f64,
    pub worst_state: usize,
}

impl MartingaleReport {
    pub fn holds(&self, slack: f64) -> bool {
        self.max_violation <= slack
    }
}

/// Checks the one-step inequality for `base^X` at every interior state.
///
/// Wright-Fisher uses the binomial generating function
/// `E(b^X') = (1 - xi (1 - b))^N`; the nearest-neighbour kernels use
/// `E(b^X')/b^i - 1 = (b - 1)(up - down / b)`.
pub fn check_one_step_martingale(kernel: &ChainKernel, base: f64, direction: Direction) -> Result<MartingaleReport> {
    if !(base > 0.0 && base < 1.0) {
        return Err(Error::InvalidArgument(format!("base {base} outside (0, 1)")));
    }
    let n = kernel.n();
    let spec = kernel.spec();
    let mut worst = (f64::NEG_INFINITY, 0);
    for i in 1..n {
        let excess = match kernel.kind() {
            ChainKind::WrightFisher => {
                let xi = spec.success_prob(PopulationPoint { n, i });
                (n as f64 * (-xi * (1.0 - base)).ln_1p() - i as f64 * base.ln()).exp_m1()
            }
            ChainKind::Moran | ChainKind::EmbeddedMoran => {
                let (up, down) = kernel.up_down(i).expect("nearest-neighbour kernel");
                (base - 1.0) * (up - down / base)
            }
        };
        let violation = match direction {
            Direction::Sub => excess,
            Direction::Super => -excess,
        };
        if violation > worst.0 {
            worst = (violation, i);
        }
    }
    Ok(MartingaleReport {
        n,
        base,
        direction,
        max_violation: worst.0,
        worst_state: worst.1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    A,
    B,
    C,
    D,
    W,
}

impl Parameter {
    pub const ALL: [Parameter; 5] = [Parameter::A, Parameter::B, Parameter::C, Parameter::D, Parameter::W];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::A => "a",
            Parameter::B => "b",
            Parameter::C => "c",
            Parameter::D => "d",
            Parameter::W => "w",
        }
    }

    pub fn get(self, spec: &GameSpec) -> f64 {
        match self {
            Parameter::A => spec.a,
            Parameter::B => spec.b,
            Parameter::C => spec.c,
            Parameter::D => spec.d,
            Parameter::W => spec.w,
        }
    }

    pub fn with(self, spec: &GameSpec, value: f64) -> GameSpec {
        let mut s = *spec;
        match self {
            Parameter::A => s.a = value,
            Parameter::B => s.b = value,
            Parameter::C => s.c = value,
            Parameter::D => s.d = value,
            Parameter::W => s.w = value,
        }
        s
    }
}

/// Default central-difference step: `1e-5 max(1, |param|)`.
pub fn default_step(spec: &GameSpec, param: Parameter) -> f64 {
    1e-5 * param.get(spec).abs().max(1.0)
}

/// `w in (0,1)`, `a > c > 0`, `b > d > 0`.
pub fn in_sensitivity_domain(spec: &GameSpec) -> bool {
    spec.w > 0.0 && spec.w < 1.0 && spec.a > spec.c && spec.c > 0.0 && spec.b > spec.d && spec.d > 0.0
}

/// Central difference of the Wright-Fisher `p_N(i)` in one payoff or in `w`.
///
/// Near `p = 1` the difference is taken on the separately solved extinction
/// probability, which carries the relative precision there.
pub fn parameter_sensitivity(spec: &GameSpec, n: usize, i: usize, param: Parameter, h: Option<f64>) -> Result<f64> {
    PopulationPoint::new(n, i)?;
    let h = h.unwrap_or_else(|| default_step(spec, param));
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    let x = param.get(spec);
    let plus = param.with(spec, x + h);
    let minus = param.with(spec, x - h);
    if !in_sensitivity_domain(spec) || !in_sensitivity_domain(&plus) || !in_sensitivity_domain(&minus) {
        return Err(Error::DomainExit {
            param: param.name(),
            step: h,
        });
    }
    let hi = solve_fixation(&ChainKernel::wright_fisher(plus, n)?)?;
    let lo = solve_fixation(&ChainKernel::wright_fisher(minus, n)?)?;
    let centre = solve_fixation(&ChainKernel::wright_fisher(*spec, n)?)?;
    Ok(if centre.p[i] <= 0.5 {
        (hi.p[i] - lo.p[i]) / (2.0 * h)
    } else {
        -(hi.extinction[i] - lo.extinction[i]) / (2.0 * h)
    })
}
