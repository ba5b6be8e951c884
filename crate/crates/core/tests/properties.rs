//! Randomised invariants across modules.

use fixsim_core::bounds::{classify_pd_tightness, moran_fixation_bounds, wf_fixation_bounds, PdTightness};
use fixsim_core::branching::{extinction_cdf_bounds, fixation_time_window, solve_q};
use fixsim_core::chains::ChainKernel;
use fixsim_core::coupling::{tv_distance, FiniteDistribution};
use fixsim_core::exact::{moran_closed_form_vector, solve_fixation};
use fixsim_core::fit::fit_qn;
use fixsim_core::{GameSpec, PopulationPoint};
use proptest::prelude::*;

/// Games in which A strictly dominates, with `N0` kept small.
fn certified_spec() -> impl Strategy<Value = GameSpec> {
    (0.5..4.0f64, 0.5..4.0f64, 0.1..3.0f64, 0.1..3.0f64, 0.05..0.95f64)
        .prop_map(|(c, d, da, db, w)| GameSpec::new(c + da, d + db, c, d, w).unwrap())
        .prop_filter(
            "N0 too large for the sweep",
            |s| matches!(s.certify_dominance(), Ok(c) if c.n0 <= 40),
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn certificate_bounds_every_ratio(spec in certified_spec(), extra in 0usize..300) {
        let cert = spec.certify_dominance().unwrap();
        let n = cert.n0 + extra;
        for i in 1..n {
            let r = spec.fitness_ratio(PopulationPoint { n, i });
            prop_assert!(r >= cert.alpha * (1.0 - 1e-12) && r <= cert.gamma * (1.0 + 1e-12));
            prop_assert!(cert.alpha > 0.0 && cert.gamma < 1.0);
        }
    }

    #[test]
    fn drift_identities(spec in certified_spec(), n in 2usize..200) {
        let cert = spec.certify_dominance().unwrap();
        let mut prev = 0.0;
        for i in 0..=n {
            let p = PopulationPoint { n, i };
            let (mu, h) = (spec.drift(p), spec.drift_via_heterozygosity(p));
            prop_assert!((mu - h).abs() <= 1e-12 * mu.abs().max(1e-300) + 1e-15, "{} vs {}", mu, h);
            let xi = spec.success_prob(p);
            prop_assert!((xi - (i as f64 / n as f64 + mu / n as f64)).abs() < 1e-14);
            if i > 0 {
                prop_assert!(xi > prev);
            }
            if n >= cert.n0 && 0 < i && i < n {
                prop_assert!(mu > 0.0);
            }
            prev = xi;
        }
    }

    #[test]
    fn exact_solution_shape_and_sandwiches(spec in certified_spec(), extra in 0usize..80) {
        let cert = spec.certify_dominance().unwrap();
        let n = cert.n0.max(2) + extra;
        let wf = solve_fixation(&ChainKernel::wright_fisher(spec, n).unwrap()).unwrap();
        let moran = moran_closed_form_vector(&spec, n).unwrap();
        for i in 1..n {
            prop_assert!(wf.p[i] > i as f64 / n as f64);
            prop_assert!(wf.extinction[i] < wf.extinction[i - 1]);
            prop_assert!(wf_fixation_bounds(&cert, n, i).unwrap().contains(wf.p[i], 1e-12));
            prop_assert!(moran_fixation_bounds(&cert, n, i).unwrap().contains(moran[i], 1e-12));
        }
    }

    #[test]
    fn limit_lies_between_bases(spec in certified_spec()) {
        let cert = spec.certify_dominance().unwrap();
        let q = solve_q(cert.lambda).unwrap().q;
        prop_assert!(cert.theta <= q && q <= cert.rho, "{} {} {}", cert.theta, q, cert.rho);
    }

    #[test]
    fn solve_q_is_a_stable_fixed_point(lambda in 1.0001..20.0f64) {
        let sol = solve_q(lambda).unwrap();
        prop_assert!((sol.q - (-lambda * (1.0 - sol.q)).exp()).abs() <= 1e-12);
        prop_assert!(sol.lambda_q < 1.0 && sol.q > 0.0 && sol.q < 1.0);
    }

    #[test]
    fn extinction_brackets(lambda in 1.01..8.0f64, k in 1u32..6, m in 1u32..40) {
        let mut s: f64 = 0.0;
        for _ in 0..m {
            s = (-lambda * (1.0 - s)).exp();
        }
        let exact = s.powi(k as i32);
        let (lo, hi) = extinction_cdf_bounds(lambda, k, m).unwrap();
        prop_assert!(lo <= exact * (1.0 + 1e-12) && exact <= hi * (1.0 + 1e-12), "{} {} {}", lo, exact, hi);
    }

    #[test]
    fn time_window_is_ordered(spec in certified_spec(), m in 0u32..15, c0 in 0.0..3.0f64, eta in 1.05..3.0f64) {
        let cert = spec.certify_dominance().unwrap();
        let n = 2000.max(cert.n0 + 1);
        let j = (n as f64).powf(0.6).ceil() as usize;
        let w = fixation_time_window(1, m, n, j, eta, c0, &cert).unwrap();
        prop_assert!(w.upper_raw >= w.lower_raw);
        prop_assert!(0.0 <= w.lower && w.lower <= w.upper && w.upper <= 1.0);
    }

    #[test]
    fn fit_recovers_generating_q(q in 0.01..0.99f64, len in 2u32..12) {
        let pairs: Vec<(u32, f64)> = (1..=len).map(|i| (i, 1.0 - q.powi(i as i32))).collect();
        let fit = fit_qn(&pairs).unwrap();
        prop_assert!((fit.q_fit - q).abs() < 1e-8);
    }

    #[test]
    fn tv_is_a_metric_on_samples(
        p in prop::collection::vec(0.0..1.0f64, 1..8),
        q in prop::collection::vec(0.0..1.0f64, 1..8),
        r in prop::collection::vec(0.0..1.0f64, 1..8),
    ) {
        let norm = |v: Vec<f64>| {
            let s: f64 = v.iter().sum::<f64>() + 1e-9;
            FiniteDistribution::new(v.iter().map(|x| (x + 1e-9 / v.len() as f64) / s).collect()).unwrap()
        };
        let (p, q, r) = (norm(p), norm(q), norm(r));
        let (pq, qp) = (tv_distance(&p, &q), tv_distance(&q, &p));
        prop_assert!((pq - qp).abs() < 1e-15);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
        prop_assert!(pq <= tv_distance(&p, &r) + tv_distance(&r, &q) + 1e-12);
        prop_assert!(tv_distance(&p, &p) == 0.0);
    }

    #[test]
    fn prisoners_dilemma_is_never_infeasible(c in 0.1..3.0f64, ac in 0.01..3.0f64, da in 0.01..3.0f64, bd in 0.01..3.0f64) {
        let (a, d) = (c + ac, c + ac + da);
        let spec = GameSpec::new(a, d + bd, c, d, 0.5).unwrap();
        let class = classify_pd_tightness(&spec).unwrap();
        prop_assert!(class != PdTightness::Infeasible);
    }
}
