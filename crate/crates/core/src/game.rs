//! Two-strategy game data and the closed-form scalars built from it.
//!
//! A [`GameSpec`] holds the payoff matrix
//!
//! ```text
//!        A   B
//!   A    a   b
//!   B    c   d
//! ```
//!
//! and the selection strength `w`. At a population point (N, i), with `i`
//! players of strategy A, the expected payoffs exclude self-interaction and
//! the fitnesses interpolate between neutral drift (`w = 0`) and pure payoff
//! selection (`w = 1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Payoff matrix `(a, b, c, d)` and selection strength `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub w: f64,
}

/// Population size `n` and number `i` of A-players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PopulationPoint {
    pub n: usize,
    pub i: usize,
}

impl PopulationPoint {
    pub fn new(n: usize, i: usize) -> Result<Self> {
        if n < 2 || i > n {
            return Err(Error::InvalidPopulation { n, i });
        }
        Ok(Self { n, i })
    }

    /// `i` is a transient state, `1 <= i <= N-1`.
    pub fn is_interior(&self) -> bool {
        self.i >= 1 && self.i < self.n
    }

    pub fn is_absorbing(&self) -> bool {
        self.i == 0 || self.i == self.n
    }
}

/// Fitness pair at a population point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fitness {
    /// Fitness of an A-player.
    pub f: f64,
    /// Fitness of a B-player.
    pub g: f64,
}

impl GameSpec {
    pub fn new(a: f64, b: f64, c: f64, d: f64, w: f64) -> Result<Self> {
        let spec = Self { a, b, c, d, w };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGame(format!("payoff {name} = {v} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::InvalidGame(format!("w = {} must lie in [0, 1]", self.w)));
        }
        Ok(())
    }

    /// Expected payoffs `(pi_A, pi_B)` against a uniformly drawn opponent,
    /// excluding self-interaction. Defined for every `i`, including the
    /// boundaries where one of the two types is absent.
    pub fn payoffs(&self, p: PopulationPoint) -> (f64, f64) {
        let n = p.n as f64;
        let i = p.i as f64;
        let pi_a = (self.a * (i - 1.0) + self.b * (n - i)) / (n - 1.0);
        let pi_b = (self.c * i + self.d * (n - i - 1.0)) / (n - 1.0);
        (pi_a, pi_b)
    }

    pub fn fitness(&self, p: PopulationPoint) -> Fitness {
        let (pi_a, pi_b) = self.payoffs(p);
        Fitness {
            f: 1.0 - self.w + self.w * pi_a,
            g: 1.0 - self.w + self.w * pi_b,
        }
    }

    /// `f - g` evaluated as `w (pi_A - pi_B)`, which avoids subtracting the
    /// two `1 - w` offsets.
    pub fn fitness_gap(&self, p: PopulationPoint) -> f64 {
        let n = p.n as f64;
        let i = p.i as f64;
        let gap = (self.a * (i - 1.0) + self.b * (n - i) - self.c * i - self.d * (n - i - 1.0)) / (n - 1.0);
        self.w * gap
    }

    /// Ratio `g_N(i) / f_N(i)`.
    pub fn fitness_ratio(&self, p: PopulationPoint) -> f64 {
        let Fitness { f, g } = self.fitness(p);
        g / f
    }

    /// Success probability of each Bernoulli trial in the next generation.
    pub fn success_prob(&self, p: PopulationPoint) -> f64 {
        if p.i == 0 {
            return 0.0;
        }
        if p.i == p.n {
            return 1.0;
        }
        let Fitness { f, g } = self.fitness(p);
        let i = p.i as f64;
        let rest = (p.n - p.i) as f64;
        i * f / (i * f + rest * g)
    }

    /// Local drift `E(X' - X | X = i) = i(N-i)(f-g) / (i f + (N-i) g)`.
    pub fn drift(&self, p: PopulationPoint) -> f64 {
        if p.is_absorbing() {
            return 0.0;
        }
        let Fitness { f, g } = self.fitness(p);
        let i = p.i as f64;
        let rest = (p.n - p.i) as f64;
        i * rest * self.fitness_gap(p) / (i * f + rest * g)
    }

    /// Drift computed from the labeled fitness profile: half the sum of all
    /// pairwise absolute fitness differences over the total fitness, signed
    /// by `f - g`.
    pub fn drift_via_heterozygosity(&self, p: PopulationPoint) -> f64 {
        if p.is_absorbing() {
            return 0.0;
        }
        let Fitness { f, g } = self.fitness(p);
        let profile: Vec<f64> = (1..=p.n).map(|j| if j <= p.i { f } else { g }).collect();
        let total: f64 = profile.iter().sum();
        let sign = if f >= g { 1.0 } else { -1.0 };
        sign * 0.5 * pairwise_abs_difference_sum(&profile) / total
    }

    /// Selection-strength-weighted ratio `(1-w+wb) / (1-w+wd)`: the mean
    /// offspring number of a rare A-player in a large population.
    pub fn lambda(&self) -> f64 {
        (1.0 - self.w + self.w * self.b) / (1.0 - self.w + self.w * self.d)
    }

    /// Checks that A strictly dominates uniformly in N and builds the
    /// analytic constants.
    pub fn certify_dominance(&self) -> Result<DominanceCertificate> {
        self.validate()?;
        if self.w <= 0.0 {
            return Err(Error::DominanceViolated { condition: "w > 0" });
        }
        if self.a <= self.c {
            return Err(Error::DominanceViolated { condition: "a > c" });
        }
        if self.b <= self.d {
            return Err(Error::DominanceViolated { condition: "b > d" });
        }
        let n0 = self
            .n0()
            .ok_or_else(|| Error::InvalidGame(format!("N0 exceeds the scan limit of {N0_SCAN_LIMIT}")))?;

        let w = self.w;
        let candidates = [
            (
                RatioSource::FirstAtN0,
                self.fitness_ratio(PopulationPoint { n: n0, i: 1 }),
            ),
            (
                RatioSource::LastAtN0,
                self.fitness_ratio(PopulationPoint { n: n0, i: n0 - 1 }),
            ),
            (RatioSource::FirstLimit, (1.0 - w + w * self.d) / (1.0 - w + w * self.b)),
            (RatioSource::LastLimit, (1.0 - w + w * self.c) / (1.0 - w + w * self.a)),
        ];
        let (alpha_source, alpha) = candidates
            .iter()
            .copied()
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("four candidates");
        let (gamma_source, gamma) = candidates
            .iter()
            .copied()
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("four candidates");

        Ok(DominanceCertificate {
            n0,
            alpha,
            gamma,
            rho: (-2.0 * (1.0 - gamma)).exp(),
            theta: (-2.0 * (1.0 - alpha) / alpha).exp(),
            lambda: self.lambda(),
            alpha_source,
            gamma_source,
        })
    }

    /// Smallest `N >= 2` with `a(N-1) > cN - d` and `b(N-1) > d(N-2) + c`,
    /// found by scanning upward.
    fn n0(&self) -> Option<usize> {
        let (a, b, c, d) = (self.a, self.b, self.c, self.d);
        (2..=N0_SCAN_LIMIT).find(|&n| {
            let n = n as f64;
            a * (n - 1.0) > c * n - d && b * (n - 1.0) > d * (n - 2.0) + c
        })
    }
}

const N0_SCAN_LIMIT: usize = 10_000_000;

/// Heterozygosity: probability that two distinct individuals drawn at random
/// have different types, `2 i (N-i) / (N (N-1))`.
pub fn heterozygosity(p: PopulationPoint) -> f64 {
    let n = p.n as f64;
    let i = p.i as f64;
    2.0 * i * (n - i) / (n * (n - 1.0))
}

/// `sum_{j,k} |x_k - x_j|` via sorted consecutive gaps:
/// each gap between ranks m and m+1 is crossed by `m (len - m)` ordered pairs
/// in each direction.
fn pairwise_abs_difference_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let len = sorted.len();
    sorted
        .windows(2)
        .enumerate()
        .map(|(m, pair)| {
            let below = (m + 1) as f64;
            (pair[1] - pair[0]) * below * (len as f64 - below)
        })
        .sum::<f64>()
        * 2.0
}

/// Which of the four candidate ratios attains `alpha` or `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatioSource {
    /// `g/f` at `N = N0`, `i = 1`.
    FirstAtN0,
    /// `g/f` at `N = N0`, `i = N0 - 1`.
    LastAtN0,
    /// `lim g_N(1) / f_N(1)`.
    FirstLimit,
    /// `lim g_N(N-1) / f_N(N-1)`.
    LastLimit,
}

/// Uniform bounds `alpha <= g/f <= gamma` for all `N >= n0`, together with
/// the martingale bases and the branching mean they induce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceCertificate {
    pub n0: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// `exp(-2 (1 - gamma))`; `rho^X` is a submartingale.
    pub rho: f64,
    /// `exp(-2 (1 - alpha) / alpha)`; `theta^X` is a supermartingale.
    pub theta: f64,
    pub lambda: f64,
    pub alpha_source: RatioSource,
    pub gamma_source: RatioSource,
}

impl DominanceCertificate {
    pub fn check_n(&self, n: usize) -> Result<()> {
        if n < self.n0 {
            return Err(Error::BelowN0 { n, n0: self.n0 });
        }
        Ok(())
    }

    /// Success probability of the constant-selection chain with ratio
    /// `gamma`: `i / (i + gamma (N - i))`. Bounds `xi_N(i)` from below.
    pub fn weak_success_prob(&self, n: usize, i: usize) -> f64 {
        constant_selection_prob(self.gamma, n, i)
    }

    /// Same with ratio `alpha`; bounds `xi_N(i)` from above.
    pub fn strong_success_prob(&self, n: usize, i: usize) -> f64 {
        constant_selection_prob(self.alpha, n, i)
    }
}

fn constant_selection_prob(ratio: f64, n: usize, i: usize) -> f64 {
    if i == 0 {
        return 0.0;
    }
    if i >= n {
        return 1.0;
    }
    let i = i as f64;
    i / (i + ratio * (n as f64 - i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> GameSpec {
        GameSpec::new(4.0, 2.0, 3.0, 1.0, 0.3).unwrap()
    }

    fn pt(n: usize, i: usize) -> PopulationPoint {
        PopulationPoint::new(n, i).unwrap()
    }

    fn close(x: f64, y: f64, tol: f64) -> bool {
        (x - y).abs() <= tol * y.abs().max(1.0)
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(GameSpec::new(0.0, 1.0, 1.0, 1.0, 0.5).is_err());
        assert!(GameSpec::new(1.0, 1.0, 1.0, 1.0, 1.5).is_err());
        assert!(GameSpec::new(1.0, 1.0, 1.0, 1.0, -0.1).is_err());
        assert!(PopulationPoint::new(1, 0).is_err());
        assert!(PopulationPoint::new(5, 6).is_err());
        assert!(pt(5, 0).is_absorbing() && !pt(5, 0).is_interior());
        assert!(pt(5, 4).is_interior());
    }

    #[test]
    fn payoff_examples() {
        let (pa, pb) = reference().payoffs(pt(100, 1));
        // pi_A = 2*99/99, pi_B = (3 + 98)/99
        assert!(close(pa, 2.0, 1e-15));
        assert!(close(pb, 101.0 / 99.0, 1e-15));

        let s = GameSpec::new(1.7, 2.9, 0.4, 3.3, 0.6).unwrap();
        let (pa, pb) = s.payoffs(pt(2, 1));
        assert!(close(pa, s.b, 1e-15) && close(pb, s.c, 1e-15));

        let ones = GameSpec::new(1.0, 1.0, 1.0, 1.0, 0.8).unwrap();
        for i in 1..9 {
            let (pa, pb) = ones.payoffs(pt(9, i));
            assert!(close(pa, 1.0, 1e-15) && close(pb, 1.0, 1e-15));
        }
    }

    #[test]
    fn fitness_examples() {
        let neutral = GameSpec::new(4.0, 2.0, 3.0, 1.0, 0.0).unwrap();
        let fg = neutral.fitness(pt(17, 5));
        assert_eq!((fg.f, fg.g), (1.0, 1.0));

        let fg = reference().fitness(pt(100, 1));
        assert!(close(fg.f, 1.3, 1e-14));
        assert!(close(fg.g, 0.7 + 0.3 * 101.0 / 99.0, 1e-14));
        assert!((fg.g - 1.00606).abs() < 1e-5);

        let fg = reference().fitness(pt(4, 3));
        assert!(close(fg.f, 1.7, 1e-14));
        assert!(close(fg.g, 1.6, 1e-14));
    }

    #[test]
    fn success_prob_examples() {
        let neutral = GameSpec::new(4.0, 2.0, 3.0, 1.0, 0.0).unwrap();
        assert!(close(neutral.success_prob(pt(10, 3)), 0.3, 1e-15));
        assert_eq!(reference().success_prob(pt(10, 0)), 0.0);
        assert_eq!(reference().success_prob(pt(10, 10)), 1.0);
        let g = 0.7 + 0.3 * 101.0 / 99.0;
        assert!(close(
            reference().success_prob(pt(100, 1)),
            1.3 / (1.3 + 99.0 * g),
            1e-14
        ));
    }

    #[test]
    fn drift_examples() {
        let s = reference();
        assert_eq!(s.drift(pt(10, 0)), 0.0);
        assert_eq!(s.drift(pt(10, 10)), 0.0);
        let neutral = GameSpec { w: 0.0, ..s };
        for i in 0..=10 {
            assert_eq!(neutral.drift(pt(10, i)), 0.0);
        }
        let p = pt(10, 5);
        let via_xi = 10.0 * s.success_prob(p) - 5.0;
        assert!(close(s.drift(p), via_xi, 1e-13));
    }

    #[test]
    fn heterozygosity_identity() {
        assert!(close(heterozygosity(pt(10, 5)), 50.0 / 90.0, 1e-15));
        let neutral = GameSpec { w: 0.0, ..reference() };
        assert_eq!(neutral.drift_via_heterozygosity(pt(10, 5)), 0.0);
        for spec in [reference(), GameSpec::new(2.5, 4.0, 1.0, 0.5, 0.9).unwrap()] {
            for n in 2..=500 {
                for i in 1..n {
                    let p = pt(n, i);
                    let lhs = spec.drift(p);
                    let rhs = spec.drift_via_heterozygosity(p);
                    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs(), "{n} {i} {lhs} {rhs}");
                }
            }
        }
    }

    #[test]
    fn certificate_reference_values() {
        let cert = reference().certify_dominance().unwrap();
        assert_eq!(cert.n0, 4);
        assert!(close(cert.alpha, 10.0 / 13.0, 1e-15));
        assert!(close(cert.gamma, 1.6 / 1.7, 1e-14));
        assert!(close(cert.rho, (-2.0 * (1.0 - 1.6 / 1.7_f64)).exp(), 1e-14));
        assert!((cert.rho - 0.88901).abs() < 1e-5);
        assert!(close(cert.theta, (-0.6_f64).exp(), 1e-14));
        assert!(close(cert.lambda, 1.3, 1e-15));
        assert_eq!(cert.alpha_source, RatioSource::FirstLimit);
        assert_eq!(cert.gamma_source, RatioSource::LastAtN0);
    }

    #[test]
    fn certificate_bounds_hold_by_enumeration() {
        let spec = reference();
        let cert = spec.certify_dominance().unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for n in cert.n0..=2000 {
            // extremes of a ratio of affine functions sit at the ends
            for i in [1, n - 1] {
                let r = spec.fitness_ratio(pt(n, i));
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        for n in cert.n0..=200 {
            for i in 1..n {
                let r = spec.fitness_ratio(pt(n, i));
                assert!(r >= cert.alpha && r <= cert.gamma);
            }
        }
        assert_eq!(hi, cert.gamma);
        // alpha is an infimum approached as N grows
        assert!(lo >= cert.alpha && lo - cert.alpha < 1e-3);
    }

    #[test]
    fn certificate_rejections() {
        let flat = GameSpec::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(flat.certify_dominance(), Err(Error::DominanceViolated { .. })));
        let neutral = GameSpec { w: 0.0, ..reference() };
        assert_eq!(
            neutral.certify_dominance(),
            Err(Error::DominanceViolated { condition: "w > 0" })
        );
        // B strictly dominant: c > a and d > b
        let b_dom = GameSpec::new(1.0, 3.0, 2.0, 4.0, 0.5).unwrap();
        assert_eq!(
            b_dom.certify_dominance(),
            Err(Error::DominanceViolated { condition: "a > c" })
        );
        let mixed = GameSpec::new(3.0, 1.0, 2.0, 4.0, 0.5).unwrap();
        assert_eq!(
            mixed.certify_dominance(),
            Err(Error::DominanceViolated { condition: "b > d" })
        );
    }

    #[test]
    fn prisoners_dilemma_ordering_is_certified() {
        // b > d > a > c: the payoff-based fitness makes A dominant
        let pd = GameSpec::new(2.0, 4.0, 1.0, 3.0, 0.5).unwrap();
        let cert = pd.certify_dominance().unwrap();
        for n in cert.n0..=300 {
            for i in 1..n {
                let r = pd.fitness_ratio(pt(n, i));
                assert!(r >= cert.alpha && r <= cert.gamma && r < 1.0);
            }
        }
    }

    #[test]
    fn success_prob_strictly_increasing_and_drift_positive() {
        let specs = [
            reference(),
            GameSpec::new(2.0, 4.0, 1.0, 3.0, 0.5).unwrap(),
            GameSpec::new(5.0, 1.2, 0.3, 1.0, 1.0).unwrap(),
        ];
        for spec in specs {
            let cert = spec.certify_dominance().unwrap();
            for n in cert.n0..=300 {
                let mut prev = spec.success_prob(pt(n, 0));
                for i in 1..=n {
                    let p = pt(n, i);
                    let xi = spec.success_prob(p);
                    assert!(xi > prev, "{n} {i}");
                    prev = xi;
                    if p.is_interior() {
                        assert!(spec.drift(p) > 0.0);
                        let expected = i as f64 / n as f64 + spec.drift(p) / n as f64;
                        assert!((xi - expected).abs() <= 4.0 * f64::EPSILON * xi);
                        let lo = cert.weak_success_prob(n, i);
                        let hi = cert.strong_success_prob(n, i);
                        assert!(lo <= xi && xi <= hi);
                    }
                }
            }
        }
    }
}
