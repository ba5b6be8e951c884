//! One-parameter least squares: the `q` for which `1 - q^i` best matches a
//! set of fixation probabilities.

use serde::Serialize;

use crate::error::{Error, Result};

const Q_MIN: f64 = 1e-9;
const Q_MAX: f64 = 1.0 - 1e-9;
const GRID_POINTS: usize = 200;
const BRACKET_WIDTH: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub q_fit: f64,
    pub sse: f64,
    pub inputs: Vec<(u32, f64)>,
    /// Whether the SSE had a single local minimum on the scan grid.
    pub unimodal: bool,
}

pub fn sse(pairs: &[(u32, f64)], q: f64) -> f64 {
    pairs
        .iter()
        .map(|&(i, p)| {
            let r = p - (1.0 - q.powi(i as i32));
            r * r
        })
        .sum()
}

/// Minimises `sum (p_i - (1 - q^i))^2` over `q in (1e-9, 1 - 1e-9)`.
///
/// A uniform scan locates the basin and checks that the SSE has one local
/// minimum; golden-section search then shrinks the bracket around the best
/// grid point to width `1e-10`.
pub fn fit_qn(pairs: &[(u32, f64)]) -> Result<FitResult> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument("fit needs at least two (i, p) pairs".into()));
    }
    if let Some(&(i, p)) = pairs.iter().find(|(i, p)| *i == 0 || !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument(format!(
            "pair ({i}, {p}) needs i >= 1 and p in [0, 1]"
        )));
    }
    if pairs.iter().all(|&(_, p)| p == 0.0 || p == 1.0) {
        return Err(Error::DegenerateInput("every p_i is 0 or 1".into()));
    }
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| Q_MIN + (Q_MAX - Q_MIN) * k as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&q| sse(pairs, q)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .expect("non-empty grid");
    let unimodal = values[..=best].windows(2).all(|w| w[1] <= w[0]) && values[best..].windows(2).all(|w| w[1] >= w[0]);

    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(GRID_POINTS - 1)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (sse(pairs, x1), sse(pairs, x2));
    while hi - lo > BRACKET_WIDTH {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = sse(pairs, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = sse(pairs, x2);
        }
    }
    let q_fit = 0.5 * (lo + hi);
    Ok(FitResult {
        q_fit,
        sse: sse(pairs, q_fit),
        inputs: pairs.to_vec(),
        unimodal,
    })
}
