//! Couplings: maximal couplings of finite laws, the shared-uniform triple
//! coupling that orders three binomial chains, and the step-wise coupling of
//! the Wright-Fisher chain with its Poisson branching approximation.

use std::io::Write;
use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chains::{ChainKernel, RngStream};
use crate::dist::{sample_poisson, InversionTable};
use crate::error::{Error, Result};
use crate::game::{GameSpec, PopulationPoint};

pub use crate::dist::{tv_distance, FiniteDistribution};

/// Tables for drawing from a maximal coupling of `p` and `q`.
///
/// With probability `1 - delta` both coordinates take a common value drawn
/// from `min(p, q)`; otherwise `x ~ (p - q)+` and `y ~ (q - p)+`
/// independently. Every draw consumes one uniform for the branch and one per
/// coordinate sampled.
#[derive(Debug, Clone)]
pub struct MaximalCoupling {
    delta: f64,
    overlap: Option<InversionTable>,
    p_excess: Option<InversionTable>,
    q_excess: Option<InversionTable>,
}

impl MaximalCoupling {
    pub fn new(p: &FiniteDistribution, q: &FiniteDistribution) -> Self {
        Self::with_tail(p, q, 0.0)
    }

    /// As [`MaximalCoupling::new`], trimming table tails of mass below `tail`.
    pub fn with_tail(p: &FiniteDistribution, q: &FiniteDistribution, tail: f64) -> Self {
        let len = p.len().max(q.len());
        let mut overlap = Vec::with_capacity(len);
        let mut p_excess = Vec::with_capacity(len);
        let mut q_excess = Vec::with_capacity(len);
        for k in 0..len {
            let (a, b) = (p.prob(k), q.prob(k));
            overlap.push(a.min(b));
            p_excess.push((a - b).max(0.0));
            q_excess.push((b - a).max(0.0));
        }
        let table = |v: Vec<f64>| {
            let mass: f64 = v.iter().sum();
            (mass > 0.0).then(|| {
                let scaled: Vec<f64> = v.iter().map(|x| x / mass).collect();
                InversionTable::from_probs(&scaled, tail)
            })
        };
        let delta = tv_distance(p, q);
        Self {
            delta,
            overlap: table(overlap),
            p_excess: table(p_excess),
            q_excess: table(q_excess),
        }
    }

    /// `P(x != y)`, equal to the total-variation distance.
    pub fn mismatch_probability(&self) -> f64 {
        self.delta
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.gen();
        match (&self.overlap, &self.p_excess, &self.q_excess) {
            (Some(common), _, _) if u >= self.delta => {
                let z = common.sample(rng);
                (z, z)
            }
            (_, Some(px), Some(qx)) => (px.sample(rng), qx.sample(rng)),
            (Some(common), _, _) => {
                let z = common.sample(rng);
                (z, z)
            }
            _ => unreachable!("distributions carry positive mass"),
        }
    }
}

pub fn maximal_coupling_sample<R: Rng + ?Sized>(
    p: &FiniteDistribution,
    q: &FiniteDistribution,
    rng: &mut R,
) -> (usize, usize) {
    MaximalCoupling::new(p, q).sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TripleState {
    pub x1: usize,
    pub x2: usize,
    pub x3: usize,
}

impl TripleState {
    pub fn is_ordered(&self) -> bool {
        self.x1 <= self.x2 && self.x2 <= self.x3
    }
}

/// Runs three binomial chains off the same `N` uniforms per step:
/// `x1` with success probability `j / (j + gamma (N - j))`, `x2` with the
/// game's `xi_N(j)`, `x3` with `j / (j + alpha (N - j))`. Individual `k` is an
/// A-player next step iff `U_k` falls below the chain's probability, so the
/// ordering of the three states is preserved path-wise.
pub fn monotone_triple_simulate(
    spec: &GameSpec,
    n: usize,
    i: usize,
    steps: usize,
    stream: RngStream,
) -> Result<Vec<TripleState>> {
    let cert = spec.certify_dominance()?;
    cert.check_n(n)?;
    PopulationPoint::new(n, i)?;
    let mut rng = stream.rng();
    let mut state = TripleState { x1: i, x2: i, x3: i };
    let mut path = Vec::with_capacity(steps + 1);
    path.push(state);
    for _ in 0..steps {
        let p1 = cert.weak_success_prob(n, state.x1);
        let p2 = spec.success_prob(PopulationPoint { n, i: state.x2 });
        let p3 = cert.strong_success_prob(n, state.x3);
        let mut next = TripleState { x1: 0, x2: 0, x3: 0 };
        for _ in 0..n {
            let u: f64 = rng.gen();
            next.x1 += (u < p1) as usize;
            next.x2 += (u < p2) as usize;
            next.x3 += (u < p3) as usize;
        }
        state = next;
        path.push(state);
    }
    Ok(path)
}

/// Writes `step,x1,x2,x3`.
pub fn write_triple_csv<W: Write>(out: W, path: &[TripleState]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "x1", "x2", "x3"]).map_err(csv_err)?;
    for (t, s) in path.iter().enumerate() {
        w.serialize((t, s.x1, s.x2, s.x3)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv output failed: {e}"))
}

/// Tail mass dropped from coupling tables.
const COUPLING_TAIL: f64 = 1e-17;

/// Couples `BIN(N, xi_N(i))` with `Poisson(lambda i)` at every state, with
/// the per-state tables built lazily and shared across threads.
#[derive(Debug)]
pub struct WfBpCoupler {
    spec: GameSpec,
    n: usize,
    lambda: f64,
    kernel: ChainKernel,
    cache: Vec<OnceLock<MaximalCoupling>>,
}

/// A coupled Wright-Fisher / branching run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoupledPath {
    pub x: Vec<usize>,
    pub z: Vec<usize>,
    /// First step at which `x` and `z` differ, if any.
    pub tau: Option<u64>,
}

impl WfBpCoupler {
    pub fn new(spec: GameSpec, n: usize) -> Result<Self> {
        let kernel = ChainKernel::wright_fisher(spec, n)?;
        Ok(Self {
            spec,
            n,
            lambda: spec.lambda(),
            kernel,
            cache: (0..=n).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn coupling(&self, i: usize) -> &MaximalCoupling {
        self.cache[i].get_or_init(|| {
            let bin = FiniteDistribution::binomial(self.n, self.spec.success_prob(PopulationPoint { n: self.n, i }));
            let poi = FiniteDistribution::poisson(self.lambda * i as f64);
            MaximalCoupling::with_tail(&bin, &poi, COUPLING_TAIL)
        })
    }

    /// Exact one-step mismatch probability at state `i`.
    pub fn mismatch_probability(&self, i: usize) -> f64 {
        self.coupling(i).mismatch_probability()
    }

    /// `xi/2 + |N xi - lambda i| / sqrt(lambda i)`: binomial-to-Poisson plus
    /// Poisson-to-Poisson distance.
    pub fn mismatch_bound(&self, i: usize) -> f64 {
        let xi = self.spec.success_prob(PopulationPoint { n: self.n, i });
        let li = self.lambda * i as f64;
        xi / 2.0 + (self.n as f64 * xi - li).abs() / li.sqrt()
    }

    /// One draw from the coupling at state `i`.
    pub fn sample_step<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> (usize, usize) {
        self.coupling(i).sample(rng)
    }

    /// Runs the coupled chain from `x = z = k` for `max_steps` steps or until
    /// both components are stopped (`x` absorbed, `z` extinct or at least
    /// `N`). After the first mismatch the components evolve independently.
    pub fn simulate(&self, k: usize, max_steps: u64, stream: RngStream) -> Result<CoupledPath> {
        if k == 0 || k >= self.n {
            return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..{}", self.n)));
        }
        let mut rng = stream.rng();
        let (mut x, mut z) = (k, k);
        let mut path = CoupledPath {
            x: vec![x],
            z: vec![z],
            tau: None,
        };
        let z_stopped = |z: usize| z == 0 || z >= self.n;
        let mut t = 0u64;
        while t < max_steps && !(self.kernel.is_absorbing(x) && z_stopped(z)) {
            t += 1;
            if path.tau.is_none() {
                (x, z) = self.sample_step(x, &mut rng);
                if x != z {
                    path.tau = Some(t);
                }
            } else {
                x = self.kernel.step(x, &mut rng);
                if !z_stopped(z) {
                    z = (0..z).map(|_| sample_poisson(self.lambda, &mut rng)).sum();
                }
            }
            path.x.push(x);
            path.z.push(z);
        }
        Ok(path)
    }
}

pub fn coupled_wf_bp_simulate(
    spec: &GameSpec,
    n: usize,
    k: usize,
    max_steps: u64,
    stream: RngStream,
) -> Result<CoupledPath> {
    WfBpCoupler::new(*spec, n)?.simulate(k, max_steps, stream)
}

/// Divergence step of each of `replicas` coupled runs of at most `m` steps;
/// replica `r` uses stream `r`.
pub fn divergence_times(coupler: &WfBpCoupler, k: usize, m: u64, replicas: u64, seed: u64) -> Result<Vec<Option<u64>>> {
    (0..replicas)
        .into_par_iter()
        .map(|r| coupler.simulate(k, m, RngStream::new(seed, r)).map(|p| p.tau))
        .collect()
}

/// Empirical `P(tau_N <= m)`.
pub fn divergence_probability(coupler: &WfBpCoupler, k: usize, m: u64, replicas: u64, seed: u64) -> Result<f64> {
    let taus = divergence_times(coupler, k, m, replicas, seed)?;
    Ok(taus.iter().filter(|t| t.is_some()).count() as f64 / replicas as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MismatchRow {
    pub i: usize,
    /// Empirical mismatch frequency.
    pub rate: f64,
    /// Exact mismatch probability of the coupling.
    pub tv: f64,
    pub bound: f64,
}

/// Empirical one-step mismatch rate at each `i in 1..=j`; state `i` uses
/// stream `i`.
pub fn mismatch_rate_table(coupler: &WfBpCoupler, j: usize, replicas: u64, seed: u64) -> Result<Vec<MismatchRow>> {
    if j == 0 || j > coupler.n() {
        return Err(Error::InvalidArgument(format!(
            "J = {j} must lie in 1..={}",
            coupler.n()
        )));
    }
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be at least 1".into()));
    }
    Ok((1..=j)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64).rng();
            let misses = (0..replicas)
                .filter(|_| {
                    let (x, z) = coupler.sample_step(i, &mut rng);
                    x != z
                })
                .count();
            MismatchRow {
                i,
                rate: misses as f64 / replicas as f64,
                tv: coupler.mismatch_probability(i),
                bound: coupler.mismatch_bound(i),
            }
        })
        .collect())
}

/// Writes `i,rate,tv,bound`.
pub fn write_mismatch_csv<W: Write>(out: W, rows: &[MismatchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Empirical coupling constant. Not a rigorous bound: it is the largest
/// observed `N P(mismatch | i) / i^{3/2}` over `i <= J`, i.e. a lower
/// estimate of any constant valid for this coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct C0Estimate {
    pub c0: f64,
    pub argmax: usize,
    pub rigorous: bool,
}

pub fn estimate_c0(spec: &GameSpec, n: usize, j: usize, replicas: u64, seed: u64) -> Result<C0Estimate> {
    spec.certify_dominance()?;
    let coupler = WfBpCoupler::new(*spec, n)?;
    let rows = mismatch_rate_table(&coupler, j, replicas, seed)?;
    let (c0, argmax) = rows
        .iter()
        .map(|r| (n as f64 * r.rate / (r.i as f64).powf(1.5), r.i))
        .fold((0.0, 1), |best, cur| if cur.0 > best.0 { cur } else { best });
    Ok(C0Estimate {
        c0,
        argmax,
        rigorous: false,
    })
}
