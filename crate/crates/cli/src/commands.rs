//! The experiment subcommands. Each one resolves its defaults, computes a
//! [`Report`] in memory and leaves writing to the caller.

use fixsim_core::bounds::{classify_pd_tightness, moran_fixation_bounds, moran_limit, wf_fixation_bounds, wf_limit};
use fixsim_core::branching::{fixation_time_window, solve_q};
use fixsim_core::chains::{empirical_time_cdf, monte_carlo_fixation_with, ChainKernel, ChainKind, RngStream};
use fixsim_core::coupling::estimate_c0;
use fixsim_core::coupling::{divergence_times, mismatch_rate_table, monotone_triple_simulate, WfBpCoupler};
use fixsim_core::exact::{moran_closed_form_vector, solve_fixation, DEFAULT_SOLVER_CAP};
use fixsim_core::fit::fit_qn;
use fixsim_core::{Error, GameSpec};
use serde_json::json;

use crate::config::{CoupleMode, ExperimentConfig, KernelChoice, LogQuantity};
use crate::output::{Cell, Report, Table};
use crate::CliError;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_REPLICAS: u64 = 10_000;
const DEFAULT_C0_REPLICAS: u64 = 100_000;
const DEFAULT_ETA: f64 = 1.5;
const TABLE1_SIZES: [usize; 6] = [10, 20, 50, 100, 500, 1000];

/// `ceil(N^0.6)`, the default coupling threshold.
pub fn default_threshold(n: usize) -> usize {
    (n as f64).powf(0.6).ceil() as usize
}

fn seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seed.unwrap_or(DEFAULT_SEED)
}

fn replicas(cfg: &ExperimentConfig) -> u64 {
    cfg.replicas.unwrap_or(DEFAULT_REPLICAS)
}

fn game_json(spec: &GameSpec) -> serde_json::Value {
    json!({"a": spec.a, "b": spec.b, "c": spec.c, "d": spec.d, "w": spec.w})
}

fn non_empty<T: Clone>(name: &str, v: Option<&Vec<T>>, default: Vec<T>) -> Result<Vec<T>, CliError> {
    let v = v.cloned().unwrap_or(default);
    if v.is_empty() {
        return Err(CliError::Config(format!("{name} must not be empty")));
    }
    Ok(v)
}

fn states_for(cfg: &ExperimentConfig, n: usize) -> Result<Vec<usize>, CliError> {
    match &cfg.i {
        Some(is) => {
            if let Some(&i) = is.iter().find(|&&i| i > n) {
                return Err(Error::InvalidPopulation { n, i }.into());
            }
            Ok(is.clone())
        }
        None => Ok((0..=n).collect()),
    }
}

/// Fixation probabilities at the requested states: exact when `N` is within
/// the solver cap, Monte Carlo otherwise. Returns `(p, extinction, source)`.
fn fixation_at(
    spec: GameSpec,
    n: usize,
    states: &[usize],
    cfg: &ExperimentConfig,
) -> Result<(Vec<f64>, Vec<f64>, &'static str), CliError> {
    let kernel = ChainKernel::wright_fisher(spec, n)?;
    if n <= DEFAULT_SOLVER_CAP {
        let fv = solve_fixation(&kernel)?;
        let p = states.iter().map(|&i| fv.p[i]).collect();
        let e = states.iter().map(|&i| fv.extinction[i]).collect();
        return Ok((p, e, "exact"));
    }
    let max_steps = cfg.max_steps.unwrap_or(ChainKind::WrightFisher.default_max_steps());
    let mut p = Vec::with_capacity(states.len());
    for &i in states {
        let est = monte_carlo_fixation_with(&kernel, i, replicas(cfg), seed(cfg), max_steps)?;
        p.push(est.point);
    }
    let e = p.iter().map(|x| 1.0 - x).collect();
    Ok((p, e, "monte_carlo"))
}

pub fn cmd_exact(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = cfg.game.spec()?;
    let ns = non_empty("n", cfg.n.as_ref(), vec![100])?;
    let kind = cfg.kernel.unwrap_or(KernelChoice::WrightFisher);
    let cert = spec.certify_dominance().ok();
    if let Some(c) = &cert {
        for &n in &ns {
            c.check_n(n)?;
        }
    }
    let mut table = if cert.is_some() {
        Table::new(&["N", "i", "lower", "p", "upper"])
    } else {
        Table::new(&["N", "i", "p"])
    };
    let mut worst_residual: f64 = 0.0;
    for &n in &ns {
        let states = states_for(cfg, n)?;
        let fv = solve_fixation(&ChainKernel::new(kind.into(), spec, n)?)?;
        worst_residual = worst_residual.max(fv.residual);
        for &i in &states {
            let row = match &cert {
                Some(c) => {
                    let b = match kind {
                        KernelChoice::WrightFisher => wf_fixation_bounds(c, n, i)?,
                        _ => moran_fixation_bounds(c, n, i)?,
                    };
                    vec![n.into(), i.into(), b.lower.into(), fv.p[i].into(), b.upper.into()]
                }
                None => vec![n.into(), i.into(), fv.p[i].into()],
            };
            table.push(row);
        }
    }
    let config = json!({"game": game_json(&spec), "n": ns, "i": cfg.i, "kernel": kind});
    let mut report = Report::new("exact", config, table);
    report.note("solver", "dense LU");
    report.note("max_residual", format!("{worst_residual:e}"));
    match &cert {
        Some(c) => report.note(
            "certificate",
            format!("N0={} alpha={} gamma={}", c.n0, c.alpha, c.gamma),
        ),
        None => report.note("certificate", "none; bound columns omitted"),
    }
    Ok(report)
}

pub fn cmd_bounds(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = cfg.game.spec()?;
    let cert = spec.certify_dominance()?;
    let ns = non_empty("n", cfg.n.as_ref(), vec![100])?;
    let kind = cfg.kernel.unwrap_or(KernelChoice::WrightFisher);
    let mut table = Table::new(&["N", "i", "lower", "exact", "upper", "source"]);
    let mut limit_states = Vec::new();
    for &n in &ns {
        cert.check_n(n)?;
        let states = states_for(cfg, n)?;
        let exact: Option<Vec<f64>> = match kind {
            KernelChoice::WrightFisher if n <= DEFAULT_SOLVER_CAP => {
                Some(solve_fixation(&ChainKernel::wright_fisher(spec, n)?)?.p)
            }
            KernelChoice::WrightFisher => None,
            _ => Some(moran_closed_form_vector(&spec, n)?),
        };
        for &i in &states {
            let (b, source) = match kind {
                KernelChoice::WrightFisher => (wf_fixation_bounds(&cert, n, i)?, "wright_fisher"),
                _ => (moran_fixation_bounds(&cert, n, i)?, "moran"),
            };
            let p = exact.as_ref().map(|p| p[i]);
            table.push(vec![
                n.into(),
                i.into(),
                b.lower.into(),
                p.into(),
                b.upper.into(),
                source.into(),
            ]);
            if i > 0 && !limit_states.contains(&i) {
                limit_states.push(i);
            }
        }
    }
    limit_states.sort_unstable();
    for i in limit_states {
        let limit = match kind {
            KernelChoice::WrightFisher => wf_limit(&cert, i)?,
            _ => moran_limit(&cert, i),
        };
        table.push(vec![
            Cell::Empty,
            i.into(),
            limit.into(),
            Cell::Empty,
            limit.into(),
            "limit".into(),
        ]);
    }
    let config = json!({"game": game_json(&spec), "n": ns, "i": cfg.i, "kernel": kind});
    let mut report = Report::new("bounds", config, table);
    report.note(
        "certificate",
        format!(
            "N0={} alpha={} gamma={} rho={} theta={} lambda={}",
            cert.n0, cert.alpha, cert.gamma, cert.rho, cert.theta, cert.lambda
        ),
    );
    Ok(report)
}

pub fn cmd_figure1(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let base = cfg.game.spec()?;
    let grid = non_empty(
        "w_grid",
        cfg.w_grid.as_ref(),
        (1..=20).map(|k| k as f64 * 0.05).collect(),
    )?;
    if let Some(w) = grid.iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
        return Err(CliError::Config(format!("w-grid entries must lie in (0, 1], got {w}")));
    }
    let n = cfg.n.as_ref().and_then(|v| v.first().copied()).unwrap_or(100);
    let i = cfg.i.as_ref().and_then(|v| v.first().copied()).unwrap_or(1);
    let (reps, sd) = (replicas(cfg), seed(cfg));
    let max_steps = cfg.max_steps.unwrap_or(ChainKind::WrightFisher.default_max_steps());
    let mut table = Table::new(&["w", "p_inf", "p_exact", "p_mc", "stderr"]);
    for &w in &grid {
        let spec = GameSpec::new(base.a, base.b, base.c, base.d, w)?;
        let cert = spec.certify_dominance()?;
        let p_inf = wf_limit(&cert, i)?;
        let kernel = ChainKernel::wright_fisher(spec, n)?;
        let exact = if n <= DEFAULT_SOLVER_CAP {
            Some(solve_fixation(&kernel)?.p[i])
        } else {
            None
        };
        let mc = monte_carlo_fixation_with(&kernel, i, reps, sd, max_steps)?;
        table.push(vec![
            w.into(),
            p_inf.into(),
            exact.into(),
            mc.point.into(),
            mc.std_error.into(),
        ]);
    }
    let config = json!({
        "game": game_json(&base), "w_grid": grid, "n": n, "i": i,
        "replicas": reps, "seed": sd, "max_steps": max_steps,
    });
    Ok(Report::new("figure1", config, table))
}

pub fn cmd_table1(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = cfg.game.spec()?;
    let ns = non_empty("n", cfg.n.as_ref(), TABLE1_SIZES.to_vec())?;
    let is = non_empty("i", cfg.i.as_ref(), (1..=10).collect())?;
    let q = solve_q(spec.lambda())?.q;
    let mut table = Table::new(&["N", "q_N", "q_N_minus_q", "source", "sse"]);
    for &n in &ns {
        let states: Vec<usize> = is.iter().copied().filter(|&i| i >= 1 && i <= n).collect();
        let (p, _, source) = fixation_at(spec, n, &states, cfg)?;
        let pairs: Vec<(u32, f64)> = states.iter().map(|&i| i as u32).zip(p).collect();
        let fit = fit_qn(&pairs)?;
        table.push(vec![
            n.into(),
            fit.q_fit.into(),
            (fit.q_fit - q).into(),
            source.into(),
            fit.sse.into(),
        ]);
    }
    let config = json!({
        "game": game_json(&spec), "n": ns, "i": is,
        "replicas": replicas(cfg), "seed": seed(cfg), "solver_cap": DEFAULT_SOLVER_CAP,
    });
    let mut report = Report::new("table1", config, table);
    report.note("q", q);
    Ok(report)
}

pub fn cmd_logplot(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = cfg.game.spec()?;
    let ns = non_empty("n", cfg.n.as_ref(), vec![10, 20, 50, 100, 200, 500, 1000])?;
    let is = non_empty("i", cfg.i.as_ref(), (1..=5).collect())?;
    let quantity = cfg.quantity.unwrap_or(LogQuantity::Extinction);
    let mut table = Table::new(&["N", "i", "value"]);
    let mut skipped = Vec::new();
    for &n in &ns {
        let states: Vec<usize> = is.iter().copied().filter(|&i| i >= 1 && i <= n).collect();
        let (p, e, _) = fixation_at(spec, n, &states, cfg)?;
        for (k, &i) in states.iter().enumerate() {
            let x = match quantity {
                LogQuantity::Extinction => e[k],
                LogQuantity::Fixation => p[k],
            };
            if x <= 0.0 {
                skipped.push(format!("(N={n}, i={i})"));
                continue;
            }
            table.push(vec![n.into(), i.into(), (-x.ln() / i as f64).into()]);
        }
    }
    let config = json!({
        "game": game_json(&spec), "n": ns, "i": is, "quantity": quantity,
        "replicas": replicas(cfg), "seed": seed(cfg),
    });
    let mut report = Report::new("logplot", config, table);
    if let Ok(sol) = solve_q(spec.lambda()) {
        report.note("minus_ln_q", -sol.q.ln());
    }
    if !skipped.is_empty() {
        report.warn(format!("skipped rows with zero value: {}", skipped.join(" ")));
    }
    Ok(report)
}

pub fn cmd_fixtime(cfg: &ExperimentConfig, force_estimate: bool) -> Result<Report, CliError> {
    let spec = cfg.game.spec()?;
    let cert = spec.certify_dominance()?;
    let ns = non_empty("n", cfg.n.as_ref(), vec![2000])?;
    let k = cfg.k.unwrap_or(1);
    let horizons = non_empty("horizons", cfg.horizons.as_ref(), (1..=5).collect())?;
    let eta = cfg.eta.unwrap_or(DEFAULT_ETA);
    let (reps, sd) = (replicas(cfg), seed(cfg));
    let c0_reps = cfg.c0_replicas.unwrap_or(DEFAULT_C0_REPLICAS);
    let estimate = force_estimate || cfg.c0.is_none();
    let mut table = Table::new(&[
        "N",
        "m",
        "lower",
        "empirical",
        "upper",
        "stderr",
        "lower_raw",
        "upper_raw",
        "c0",
    ]);
    let mut vacuous = Vec::new();
    let mut thresholds = Vec::new();
    for &n in &ns {
        cert.check_n(n)?;
        let j = cfg.j.unwrap_or_else(|| default_threshold(n));
        thresholds.push(j);
        let c0 = if estimate {
            estimate_c0(&spec, n, j, c0_reps, sd)?.c0
        } else {
            cfg.c0.unwrap_or_default()
        };
        let kernel = ChainKernel::wright_fisher(spec, n)?;
        let cdf = empirical_time_cdf(&kernel, k, reps, sd, &horizons)?;
        for point in cdf {
            let m = u32::try_from(point.m).map_err(|_| CliError::Config(format!("horizon {} too large", point.m)))?;
            let w = fixation_time_window(k as u32, m, n, j, eta, c0, &cert)?;
            if w.is_vacuous() {
                vacuous.push(format!("(N={n}, m={m})"));
            }
            table.push(vec![
                n.into(),
                point.m.into(),
                w.lower.into(),
                point.p.into(),
                w.upper.into(),
                point.std_error.into(),
                w.lower_raw.into(),
                w.upper_raw.into(),
                c0.into(),
            ]);
        }
    }
    let config = json!({
        "game": game_json(&spec), "n": ns, "k": k, "horizons": horizons, "j": thresholds,
        "eta": eta, "c0": cfg.c0, "estimate_c0": estimate, "c0_replicas": c0_reps,
        "replicas": reps, "seed": sd,
    });
    let mut report = Report::new("fixtime", config, table);
    report.note(
        "c0_source",
        if estimate {
            "empirical coupling estimate (non-rigorous)"
        } else {
            "supplied"
        },
    );
    if !vacuous.is_empty() {
        report.warn(format!("window is vacuous after clamping at {}", vacuous.join(" ")));
    }
    Ok(report)
}

pub fn cmd_couple(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = cfg.game.spec()?;
    let mode = cfg.mode.unwrap_or(CoupleMode::Mismatch);
    let sd = seed(cfg);
    match mode {
        CoupleMode::Mismatch => {
            let n = cfg.n.as_ref().and_then(|v| v.first().copied()).unwrap_or(1000);
            let j = cfg.j.unwrap_or_else(|| default_threshold(n));
            let reps = replicas(cfg);
            let coupler = WfBpCoupler::new(spec, n)?;
            let rows = mismatch_rate_table(&coupler, j, reps, sd)?;
            let mut table = Table::new(&["i", "rate", "tv", "bound"]);
            let mut c0: f64 = 0.0;
            for r in &rows {
                c0 = c0.max(n as f64 * r.rate / (r.i as f64).powf(1.5));
                table.push(vec![r.i.into(), r.rate.into(), r.tv.into(), r.bound.into()]);
            }
            let config = json!({
                "game": game_json(&spec), "mode": mode, "n": n, "j": j, "replicas": reps, "seed": sd,
            });
            let mut report = Report::new("couple", config, table);
            report.note("c0_estimate", c0);
            report.note("c0_note", "empirical lower estimate, not a rigorous constant");
            Ok(report)
        }
        CoupleMode::Triple => {
            let n = cfg.n.as_ref().and_then(|v| v.first().copied()).unwrap_or(50);
            let i = cfg.i.as_ref().and_then(|v| v.first().copied()).unwrap_or(10);
            let steps = cfg.steps.unwrap_or(200);
            let path = monotone_triple_simulate(&spec, n, i, steps, RngStream::new(sd, 0))?;
            let mut table = Table::new(&["step", "x1", "x2", "x3"]);
            for (t, s) in path.iter().enumerate() {
                table.push(vec![t.into(), s.x1.into(), s.x2.into(), s.x3.into()]);
            }
            let config = json!({
                "game": game_json(&spec), "mode": mode, "n": n, "i": i, "steps": steps, "seed": sd,
            });
            Ok(Report::new("couple", config, table))
        }
        CoupleMode::Divergence => {
            let ns = non_empty("n", cfg.n.as_ref(), vec![100, 1000, 10_000])?;
            let k = cfg.k.unwrap_or(1);
            let horizons = non_empty("horizons", cfg.horizons.as_ref(), (1..=5).collect())?;
            let last = *horizons.iter().max().expect("non-empty");
            let reps = replicas(cfg);
            let mut table = Table::new(&["N", "m", "p_diverged"]);
            for &n in &ns {
                let coupler = WfBpCoupler::new(spec, n)?;
                let taus = divergence_times(&coupler, k, last, reps, sd)?;
                for &m in &horizons {
                    let hits = taus.iter().filter(|t| matches!(t, Some(t) if *t <= m)).count();
                    table.push(vec![n.into(), m.into(), (hits as f64 / reps as f64).into()]);
                }
            }
            let config = json!({
                "game": game_json(&spec), "mode": mode, "n": ns, "k": k, "horizons": horizons,
                "replicas": reps, "seed": sd,
            });
            Ok(Report::new("couple", config, table))
        }
    }
}

pub fn cmd_certify(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = cfg.game.spec()?;
    let cert = spec.certify_dominance()?;
    let q = solve_q(cert.lambda)?.q;
    let pd = classify_pd_tightness(&spec).ok();
    let mut table = Table::new(&[
        "N0",
        "alpha",
        "gamma",
        "rho",
        "theta",
        "lambda",
        "q",
        "alpha_source",
        "gamma_source",
        "pd_tightness",
    ]);
    table.push(vec![
        cert.n0.into(),
        cert.alpha.into(),
        cert.gamma.into(),
        cert.rho.into(),
        cert.theta.into(),
        cert.lambda.into(),
        q.into(),
        format!("{:?}", cert.alpha_source).into(),
        format!("{:?}", cert.gamma_source).into(),
        pd.map(|p| format!("{p:?}")).into(),
    ]);
    Ok(Report::new("certify", json!({"game": game_json(&spec)}), table))
}

pub fn cmd_fit(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let (pairs, config) = match &cfg.pairs {
        Some(pairs) => (pairs.clone(), json!({"pairs": pairs})),
        None => {
            let spec = cfg.game.spec()?;
            let n = cfg.n.as_ref().and_then(|v| v.first().copied()).unwrap_or(10);
            let is = non_empty("i", cfg.i.as_ref(), (1..=10.min(n)).collect())?;
            let (p, _, source) = fixation_at(spec, n, &is, cfg)?;
            let pairs: Vec<(u32, f64)> = is.iter().map(|&i| i as u32).zip(p).collect();
            (
                pairs,
                json!({"game": game_json(&spec), "n": n, "i": is, "source": source}),
            )
        }
    };
    let fit = fit_qn(&pairs)?;
    let mut table = Table::new(&["q_fit", "sse", "unimodal", "pairs"]);
    table.push(vec![
        fit.q_fit.into(),
        fit.sse.into(),
        fit.unimodal.into(),
        pairs.len().into(),
    ]);
    let mut report = Report::new("fit", config, table);
    if !fit.unimodal {
        report.warn("SSE scan found more than one local minimum; the fit may not be global");
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GameConfig;

    fn value(report: &Report, row: usize, col: &str) -> f64 {
        match &report.table.rows[row][report.table.column(col).unwrap()] {
            Cell::Float(x) => *x,
            Cell::Int(x) => *x as f64,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_neutral_omits_bounds() {
        let cfg = ExperimentConfig {
            game: GameConfig {
                w: Some(0.0),
                ..Default::default()
            },
            n: Some(vec![20]),
            ..Default::default()
        };
        let r = cmd_exact(&cfg).unwrap();
        assert_eq!(r.table.columns, ["N", "i", "p"]);
        for i in 0..=20 {
            assert!((value(&r, i, "p") - i as f64 / 20.0).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_sandwich_rows() {
        let cfg = ExperimentConfig {
            n: Some(vec![100]),
            ..Default::default()
        };
        let r = cmd_exact(&cfg).unwrap();
        for row in 0..=100 {
            let (lo, p, hi) = (value(&r, row, "lower"), value(&r, row, "p"), value(&r, row, "upper"));
            assert!(lo <= p + 1e-12 && p <= hi + 1e-12, "{row}");
        }
    }

    #[test]
    fn exact_below_n0() {
        let cfg = ExperimentConfig {
            n: Some(vec![3]),
            ..Default::default()
        };
        assert!(matches!(
            cmd_exact(&cfg),
            Err(CliError::Core(Error::BelowN0 { n: 3, n0: 4 }))
        ));
    }

    #[test]
    fn fit_from_pairs() {
        let cfg = ExperimentConfig {
            pairs: Some(vec![(1, 0.5), (1, 0.5)]),
            ..Default::default()
        };
        let r = cmd_fit(&cfg).unwrap();
        assert!((value(&r, 0, "q_fit") - 0.5).abs() < 1e-9);
    }

    #[test]
    fn logplot_skips_zero_values() {
        let cfg = ExperimentConfig {
            n: Some(vec![5]),
            i: Some(vec![1, 5]),
            ..Default::default()
        };
        let r = cmd_logplot(&cfg).unwrap();
        assert_eq!(r.table.rows.len(), 1);
        assert_eq!(r.warnings.len(), 1);
        let cfg = ExperimentConfig {
            quantity: Some(LogQuantity::Fixation),
            ..cfg
        };
        assert_eq!(cmd_logplot(&cfg).unwrap().table.rows.len(), 2);
    }

    #[test]
    fn certify_row() {
        let r = cmd_certify(&ExperimentConfig::default()).unwrap();
        assert_eq!(value(&r, 0, "N0"), 4.0);
        assert!((value(&r, 0, "q") - 0.5770).abs() < 1e-4);
    }

    #[test]
    fn threshold_default() {
        assert_eq!(default_threshold(2000), 96);
        assert_eq!(default_threshold(1_000_000), 3982);
    }
}
