//! Finite probability vectors and the binomial/Poisson pmfs behind every
//! kernel in the crate.
//!
//! Pmfs are built in log-space from the mode outward with the ratio
//! recurrence, then normalized with log-sum-exp. Nothing underflows before
//! exponentiation and no log-gamma evaluation is needed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative mass at which Poisson supports are cut; the remainder is
/// folded into the top state.
pub const POISSON_TRUNCATION: f64 = 1e-15;

/// Log-weights below this (relative to the mode) are treated as zero mass.
const LOG_NEGLIGIBLE: f64 = -745.0;

/// Probability vector on `{0, 1, ..., len-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDistribution {
    probs: Vec<f64>,
}

impl FiniteDistribution {
    /// Validates nonnegativity and unit mass within `1e-12`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidArgument("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn point_mass(at: usize) -> Self {
        let mut probs = vec![0.0; at + 1];
        probs[at] = 1.0;
        Self { probs }
    }

    /// `BIN(n, p)` on `{0..n}`.
    pub fn binomial(n: usize, p: f64) -> Self {
        Self {
            probs: binomial_pmf(n, p),
        }
    }

    /// `Poisson(mean)` truncated where the cumulative mass first reaches
    /// `1 - POISSON_TRUNCATION`; the leftover mass sits on the last state.
    pub fn poisson(mean: f64) -> Self {
        Self {
            probs: poisson_pmf_truncated(mean),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of state `k`; zero outside the stored support.
    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }
}

/// Total variation distance `(1/2) sum |p_n - q_n|` over the union of the
/// supports.
pub fn tv_distance(p: &FiniteDistribution, q: &FiniteDistribution) -> f64 {
    let len = p.len().max(q.len());
    0.5 * (0..len).map(|k| (p.prob(k) - q.prob(k)).abs()).sum::<f64>()
}

/// Binomial pmf on `{0..n}`, normalized to unit mass.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        out[n] = 1.0;
        return out;
    }
    let (lo, logw) = binomial_log_weights(n, p);
    let norm = log_sum_exp(&logw);
    for (k, lw) in logw.iter().enumerate() {
        out[lo + k] = (lw - norm).exp();
    }
    out
}

/// Unnormalized log-weights of `BIN(n, p)` relative to the mode, restricted
/// to the window where they exceed `LOG_NEGLIGIBLE`. Returns the window start.
fn binomial_log_weights(n: usize, p: f64) -> (usize, Vec<f64>) {
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as usize;
    let log_odds = p.ln() - (-p).ln_1p();
    // upward: w_{k+1} / w_k = (n-k)/(k+1) * p/(1-p)
    let mut up = Vec::new();
    let mut lw = 0.0;
    for k in mode..n {
        lw += ((n - k) as f64 / (k + 1) as f64).ln() + log_odds;
        if lw < LOG_NEGLIGIBLE {
            break;
        }
        up.push(lw);
    }
    let mut down = Vec::new();
    let mut lw = 0.0;
    for k in (1..=mode).rev() {
        lw -= ((n - k + 1) as f64 / k as f64).ln() + log_odds;
        if lw < LOG_NEGLIGIBLE {
            break;
        }
        down.push(lw);
    }
    let lo = mode - down.len();
    let mut logw: Vec<f64> = down.into_iter().rev().collect();
    logw.push(0.0);
    logw.extend(up);
    (lo, logw)
}

/// Poisson pmf on `{0..M}` truncated at cumulative mass
/// `1 - POISSON_TRUNCATION`, remainder folded into `M`.
pub fn poisson_pmf_truncated(mean: f64) -> Vec<f64> {
    if mean <= 0.0 {
        return vec![1.0];
    }
    let mode = mean.floor() as usize;
    let log_mean = mean.ln();
    let mut up = Vec::new();
    let mut lw = 0.0;
    let mut k = mode;
    loop {
        lw += log_mean - ((k + 1) as f64).ln();
        if lw < LOG_NEGLIGIBLE {
            break;
        }
        up.push(lw);
        k += 1;
    }
    let mut down = Vec::new();
    let mut lw = 0.0;
    for k in (1..=mode).rev() {
        lw -= log_mean - (k as f64).ln();
        if lw < LOG_NEGLIGIBLE {
            break;
        }
        down.push(lw);
    }
    let lo = mode - down.len();
    let mut logw: Vec<f64> = down.into_iter().rev().collect();
    logw.push(0.0);
    logw.extend(up);
    let norm = log_sum_exp(&logw);

    let mut probs = vec![0.0; lo];
    let mut cum = 0.0;
    for lw in logw {
        let pk = (lw - norm).exp();
        probs.push(pk);
        cum += pk;
        if cum >= 1.0 - POISSON_TRUNCATION {
            break;
        }
    }
    let last = probs.len() - 1;
    probs[last] += (1.0 - cum).max(0.0);
    probs
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Cumulative table over a window `[offset, offset + cdf.len())` used for
/// sampling by inversion: state `offset + k` is returned for the smallest `k`
/// with `u < cdf[k]`.
#[derive(Debug, Clone)]
pub struct InversionTable {
    offset: usize,
    cdf: Vec<f64>,
}

impl InversionTable {
    /// Drops leading and trailing states whose combined tail mass is below
    /// `tail` on each side.
    pub fn from_probs(probs: &[f64], tail: f64) -> Self {
        let mut start = 0;
        let mut acc = 0.0;
        while start + 1 < probs.len() && acc + probs[start] < tail {
            acc += probs[start];
            start += 1;
        }
        let mut end = probs.len();
        let mut acc_hi = 0.0;
        while end - 1 > start && acc_hi + probs[end - 1] < tail {
            acc_hi += probs[end - 1];
            end -= 1;
        }
        let mut cdf = Vec::with_capacity(end - start);
        let mut cum = acc;
        for p in &probs[start..end] {
            cum += p;
            cdf.push(cum);
        }
        Self { offset: start, cdf }
    }

    /// Maps a uniform `u` in `[0, 1)` to a state.
    pub fn invert(&self, u: f64) -> usize {
        let k = self.cdf.partition_point(|&c| c <= u);
        self.offset + k.min(self.cdf.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.invert(rng.gen::<f64>())
    }
}

/// Poisson draw by sequential inversion for small means; larger means fall
/// back to a truncated table. One uniform per draw either way.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    if mean <= 0.0 {
        return 0;
    }
    if mean <= 30.0 {
        let mut k = 0usize;
        let mut pk = (-mean).exp();
        let mut cum = pk;
        while u >= cum {
            k += 1;
            pk *= mean / k as f64;
            cum += pk;
            if pk == 0.0 && cum <= u {
                // rounding left u above the attainable cdf; stop at the tail
                break;
            }
        }
        k
    } else {
        InversionTable::from_probs(&poisson_pmf_truncated(mean), 0.0).invert(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn direct_binomial(n: u64, k: u64, p: f64) -> f64 {
        // product form, fine for small n
        let mut c = 1.0;
        for j in 0..k {
            c *= (n - j) as f64 / (j + 1) as f64;
        }
        c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    }

    #[test]
    fn binomial_matches_product_form() {
        for &(n, p) in &[(10usize, 0.3), (25, 0.77), (40, 0.02), (1, 0.5)] {
            let pmf = binomial_pmf(n, p);
            for (k, v) in pmf.iter().enumerate() {
                let d = direct_binomial(n as u64, k as u64, p);
                assert!((v - d).abs() <= 1e-13 * d.max(1e-300) + 1e-300, "{n} {p} {k}");
            }
        }
    }

    #[test]
    fn binomial_degenerate_and_large() {
        assert_eq!(binomial_pmf(5, 0.0), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(binomial_pmf(3, 1.0), vec![0.0, 0.0, 0.0, 1.0]);
        for n in [500usize, 2000, 10_000] {
            let pmf = binomial_pmf(n, 0.4321);
            let total: f64 = pmf.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
            assert!((mean - n as f64 * 0.4321).abs() < 1e-9 * n as f64);
        }
    }

    #[test]
    fn poisson_truncation() {
        for mean in [0.3, 1.3, 2.0, 17.5, 250.0] {
            let pmf = poisson_pmf_truncated(mean);
            let total: f64 = pmf.iter().sum();
            assert!((total - 1.0).abs() < 1e-14);
            let k = 1usize.min(pmf.len() - 1);
            let mut fact = 1.0;
            for j in 1..=k {
                fact *= j as f64;
            }
            let direct = (-mean).exp() * mean.powi(k as i32) / fact;
            if mean < 100.0 {
                assert!((pmf[k] - direct).abs() < 1e-13 * direct.max(1e-300));
            }
        }
        assert_eq!(poisson_pmf_truncated(0.0), vec![1.0]);
    }

    #[test]
    fn tv_examples() {
        let p = FiniteDistribution::binomial(20, 0.1);
        assert_eq!(tv_distance(&p, &p), 0.0);
        let tv = tv_distance(&p, &FiniteDistribution::poisson(2.0));
        assert!(tv > 0.0 && tv <= 0.05);
        let tv = tv_distance(&FiniteDistribution::poisson(1.3), &FiniteDistribution::poisson(1.5));
        assert!(tv <= 0.2 / 1.3f64.sqrt());
        // disjoint point masses
        assert_eq!(
            tv_distance(&FiniteDistribution::point_mass(0), &FiniteDistribution::point_mass(3)),
            1.0
        );
    }

    #[test]
    fn new_validates() {
        assert!(FiniteDistribution::new(vec![]).is_err());
        assert!(FiniteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(FiniteDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(FiniteDistribution::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn inversion_table_boundaries() {
        let t = InversionTable::from_probs(&[0.2, 0.3, 0.5], 0.0);
        assert_eq!(t.invert(0.0), 0);
        assert_eq!(t.invert(0.1999), 0);
        assert_eq!(t.invert(0.2), 1);
        assert_eq!(t.invert(0.5), 2);
        assert_eq!(t.invert(0.999_999), 2);
        let t = InversionTable::from_probs(&[0.0, 0.0, 1.0, 0.0], 1e-17);
        assert_eq!(t.invert(0.0), 2);
        assert_eq!(t.invert(0.9), 2);
    }

    #[test]
    fn poisson_sampler_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for mean in [1.3, 45.0] {
            let n = 200_000;
            let s: usize = (0..n).map(|_| sample_poisson(mean, &mut rng)).sum();
            let m = s as f64 / n as f64;
            assert!((m - mean).abs() < 4.0 * (mean / n as f64).sqrt(), "{mean} {m}");
        }
    }
}
