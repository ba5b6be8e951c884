use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ChainKernel;
use crate::error::{Error, Result};

/// Above this population size trajectories keep every tenth state.
const FULL_RECORD_MAX_N: usize = 1000;
const THINNED_EVERY: usize = 10;

/// A reproducible random stream: `(seed, stream_index)` selects one of 2^64
/// independent ChaCha8 streams under the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// One realised path.
///
/// `states[k]` is the state after `k * thin` steps, except that the final
/// entry is always the state after `steps` steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    pub initial: usize,
    pub states: Vec<usize>,
    pub thin: usize,
    pub absorbed_at: Option<usize>,
    pub steps: u64,
}

impl Trajectory {
    /// `(step, state)` pairs in recording order.
    pub fn points(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        let last = self.states.len().saturating_sub(1);
        self.states.iter().enumerate().map(move |(k, &s)| {
            let step = if k == last { self.steps } else { (k * self.thin) as u64 };
            (step, s)
        })
    }

    pub fn is_censored(&self) -> bool {
        self.absorbed_at.is_none()
    }
}

/// Runs the chain from `initial` until absorption or `max_steps` steps, with
/// the default thinning for the kernel's population size.
pub fn simulate(kernel: &ChainKernel, initial: usize, max_steps: u64, stream: RngStream) -> Result<Trajectory> {
    let thin = if kernel.n() <= FULL_RECORD_MAX_N {
        1
    } else {
        THINNED_EVERY
    };
    simulate_thinned(kernel, initial, max_steps, stream, thin)
}

pub fn simulate_thinned(
    kernel: &ChainKernel,
    initial: usize,
    max_steps: u64,
    stream: RngStream,
    thin: usize,
) -> Result<Trajectory> {
    check_initial(kernel, initial)?;
    if max_steps == 0 || thin == 0 {
        return Err(Error::InvalidArgument("max_steps and thin must be at least 1".into()));
    }
    let mut rng = stream.rng();
    let mut states = vec![initial];
    let mut x = initial;
    let mut t = 0u64;
    while !kernel.is_absorbing(x) && t < max_steps {
        x = kernel.step(x, &mut rng);
        t += 1;
        if t.is_multiple_of(thin as u64) {
            states.push(x);
        }
    }
    if !t.is_multiple_of(thin as u64) {
        states.push(x);
    }
    Ok(Trajectory {
        initial,
        states,
        thin,
        absorbed_at: kernel.is_absorbing(x).then_some(x),
        steps: t,
    })
}

fn check_initial(kernel: &ChainKernel, initial: usize) -> Result<()> {
    if initial > kernel.n() {
        return Err(Error::InvalidPopulation {
            n: kernel.n(),
            i: initial,
        });
    }
    Ok(())
}

/// Absorption state (if reached) and step count, without recording a path.
fn run(kernel: &ChainKernel, initial: usize, max_steps: u64, stream: RngStream) -> (Option<usize>, u64) {
    let mut rng = stream.rng();
    let mut x = initial;
    let mut t = 0u64;
    while !kernel.is_absorbing(x) && t < max_steps {
        x = kernel.step(x, &mut rng);
        t += 1;
    }
    (kernel.is_absorbing(x).then_some(x), t)
}

/// Bernoulli Monte Carlo estimate of a fixation probability.
///
/// When some replicas hit the step budget (`censored > 0`) the estimate is
/// conditioned on the absorbed replicas and `conditioned` is set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub point: f64,
    pub std_error: f64,
    /// Replicas the estimate is based on.
    pub replicas: u64,
    pub ci95: (f64, f64),
    pub censored: u64,
    pub conditioned: bool,
}

impl McEstimate {
    pub fn from_counts(successes: u64, trials: u64, censored: u64) -> Self {
        let point = if trials == 0 {
            f64::NAN
        } else {
            successes as f64 / trials as f64
        };
        let std_error = (point * (1.0 - point) / trials as f64).sqrt();
        Self {
            point,
            std_error,
            replicas: trials,
            ci95: (point - 1.96 * std_error, point + 1.96 * std_error),
            censored,
            conditioned: censored > 0,
        }
    }

    /// Whether `value` lies within `sigmas` standard errors of the estimate.
    pub fn agrees_with(&self, value: f64, sigmas: f64) -> bool {
        (self.point - value).abs() <= sigmas * self.std_error
    }
}

pub fn monte_carlo_fixation(kernel: &ChainKernel, initial: usize, replicas: u64, seed: u64) -> Result<McEstimate> {
    monte_carlo_fixation_with(kernel, initial, replicas, seed, kernel.kind().default_max_steps())
}

/// Replica `r` runs on stream `r`; outcomes are collected in replica order
/// and summed sequentially, so the result does not depend on thread count.
pub fn monte_carlo_fixation_with(
    kernel: &ChainKernel,
    initial: usize,
    replicas: u64,
    seed: u64,
    max_steps: u64,
) -> Result<McEstimate> {
    check_initial(kernel, initial)?;
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be at least 1".into()));
    }
    let outcomes: Vec<Option<usize>> = (0..replicas)
        .into_par_iter()
        .map(|r| run(kernel, initial, max_steps, RngStream::new(seed, r)).0)
        .collect();
    let n = kernel.n();
    let (mut fixed, mut absorbed) = (0u64, 0u64);
    for o in outcomes.into_iter().flatten() {
        absorbed += 1;
        if o == n {
            fixed += 1;
        }
    }
    Ok(McEstimate::from_counts(fixed, absorbed, replicas - absorbed))
}

/// Empirical `P(T <= m)` at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeCdfPoint {
    pub m: u64,
    pub p: f64,
    pub std_error: f64,
}

/// Empirical CDF of the absorption time at each horizon. Every replica runs
/// for at most the largest horizon.
pub fn empirical_time_cdf(
    kernel: &ChainKernel,
    initial: usize,
    replicas: u64,
    seed: u64,
    horizons: &[u64],
) -> Result<Vec<TimeCdfPoint>> {
    check_initial(kernel, initial)?;
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be at least 1".into()));
    }
    if horizons.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("horizons must be sorted ascending".into()));
    }
    let Some(&last) = horizons.last() else {
        return Ok(Vec::new());
    };
    let times: Vec<Option<u64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let (abs, t) = run(kernel, initial, last, RngStream::new(seed, r));
            abs.map(|_| t)
        })
        .collect();
    let total = replicas as f64;
    Ok(horizons
        .iter()
        .map(|&m| {
            let hits = times.iter().filter(|t| matches!(t, Some(t) if *t <= m)).count();
            let p = hits as f64 / total;
            TimeCdfPoint {
                m,
                p,
                std_error: (p * (1.0 - p) / total).sqrt(),
            }
        })
        .collect())
}

/// Writes one trajectory as `step,state` rows.
pub fn write_trajectory_csv<W: Write>(out: W, trajectory: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "state"]).map_err(io_err)?;
    for (step, state) in trajectory.points() {
        w.serialize((step, state)).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Long-format export: `replica,step,state`.
pub fn write_trajectories_csv<W: Write>(out: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replica", "step", "state"]).map_err(io_err)?;
    for (r, tr) in trajectories.iter().enumerate() {
        for (step, state) in tr.points() {
            w.serialize((r, step, state)).map_err(io_err)?;
        }
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn io_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv output failed: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::ChainKind;
    use crate::game::GameSpec;

    fn reference() -> GameSpec {
        GameSpec::new(4.0, 2.0, 3.0, 1.0, 0.3).unwrap()
    }

    #[test]
    fn absorbing_starts() {
        let k = ChainKernel::wright_fisher(reference(), 20).unwrap();
        let t = simulate(&k, 0, 100, RngStream::new(1, 0)).unwrap();
        assert_eq!((t.steps, t.absorbed_at, t.states.clone()), (0, Some(0), vec![0]));
        let t = simulate(&k, 20, 100, RngStream::new(1, 0)).unwrap();
        assert_eq!((t.steps, t.absorbed_at), (0, Some(20)));
        assert!(simulate(&k, 21, 100, RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn deterministic_and_stream_sensitive() {
        for kind in [ChainKind::WrightFisher, ChainKind::Moran, ChainKind::EmbeddedMoran] {
            let k = ChainKernel::new(kind, reference(), 40).unwrap();
            let a = simulate(&k, 3, 1_000_000, RngStream::new(7, 2)).unwrap();
            let b = simulate(&k, 3, 1_000_000, RngStream::new(7, 2)).unwrap();
            assert_eq!(a, b);
            let outcomes: Vec<_> = (0..20)
                .map(|s| simulate(&k, 3, 1_000_000, RngStream::new(7, s)).unwrap().states)
                .collect();
            assert!(outcomes.iter().any(|s| s != &outcomes[0]));
        }
    }

    #[test]
    fn trajectory_invariants() {
        let k = ChainKernel::moran(reference(), 30).unwrap();
        for s in 0..50 {
            let t = simulate(&k, 5, 1_000_000, RngStream::new(3, s)).unwrap();
            let abs = t.absorbed_at.unwrap();
            assert_eq!(*t.states.last().unwrap(), abs);
            assert!(t.states[..t.states.len() - 1].iter().all(|&x| x != 0 && x != 30));
            assert_eq!(t.states.len() as u64, t.steps + 1);
        }
    }

    #[test]
    fn censoring_and_thinning() {
        let k = ChainKernel::moran(reference(), 200).unwrap();
        let t = simulate_thinned(&k, 100, 25, RngStream::new(1, 1), 10).unwrap();
        assert!(t.is_censored());
        assert_eq!(t.steps, 25);
        let pts: Vec<u64> = t.points().map(|p| p.0).collect();
        assert_eq!(pts, vec![0, 10, 20, 25]);

        let t = simulate_thinned(&k, 100, 30, RngStream::new(1, 1), 10).unwrap();
        let pts: Vec<u64> = t.points().map(|p| p.0).collect();
        assert_eq!(pts, vec![0, 10, 20, 30]);

        let big = ChainKernel::wright_fisher(reference(), 1500).unwrap();
        let t = simulate(&big, 1, 10_000_000, RngStream::new(2, 0)).unwrap();
        assert_eq!(t.thin, 10);
    }

    #[test]
    fn censored_estimates_are_flagged() {
        let k = ChainKernel::moran(reference(), 200).unwrap();
        let est = monte_carlo_fixation_with(&k, 100, 50, 9, 5).unwrap();
        assert_eq!(est.censored, 50);
        assert!(est.conditioned);
        assert_eq!(est.replicas, 0);
    }

    #[test]
    fn neutral_mc_matches_martingale() {
        let spec = GameSpec { w: 0.0, ..reference() };
        let k = ChainKernel::wright_fisher(spec, 10).unwrap();
        let est = monte_carlo_fixation(&k, 3, 100_000, 11).unwrap();
        assert!(est.agrees_with(0.3, 3.0), "{est:?}");
        assert_eq!(est.censored, 0);
        assert!((est.ci95.1 - est.point - 1.96 * est.std_error).abs() < 1e-15);
    }

    #[test]
    fn mc_independent_of_thread_count() {
        let k = ChainKernel::wright_fisher(reference(), 50).unwrap();
        let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        let a = pool(1).install(|| monte_carlo_fixation(&k, 2, 2000, 5).unwrap());
        let b = pool(4).install(|| monte_carlo_fixation(&k, 2, 2000, 5).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn time_cdf_edges() {
        let k = ChainKernel::wright_fisher(reference(), 30).unwrap();
        let cdf = empirical_time_cdf(&k, 5, 2000, 1, &[0, 1, 10, 10_000]).unwrap();
        assert_eq!(cdf[0].p, 0.0);
        assert!(cdf.windows(2).all(|w| w[0].p <= w[1].p));
        assert_eq!(cdf[3].p, 1.0);
        assert!(empirical_time_cdf(&k, 5, 10, 1, &[3, 1]).is_err());
    }

    #[test]
    fn csv_export() {
        let k = ChainKernel::moran(reference(), 6).unwrap();
        let t = simulate(&k, 3, 1000, RngStream::new(4, 0)).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,state\n0,3\n"));
        assert_eq!(text.lines().count(), t.states.len() + 1);

        let mut buf = Vec::new();
        write_trajectories_csv(&mut buf, &[t.clone(), t]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("replica,step,state\n0,0,3\n"));
    }
}
