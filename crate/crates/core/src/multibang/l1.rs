//! The direct l1 penalty `h(v) = alpha * sum_i |v - u_i|` on `[u_1, u_d]`,
//! kept for comparison with the convex envelope. Its conjugate switches
//! between material values at `q = alpha (2i - d)`, independently of the
//! values themselves.

use super::{MultibangConfig, SubgradientValue};

pub fn l1_h_eval(cfg: &MultibangConfig, v: f64) -> f64 {
    if !(v >= cfg.lower() && v <= cfg.upper()) {
        return f64::INFINITY;
    }
    cfg.alpha * cfg.values.iter().map(|u| (v - u).abs()).sum::<f64>()
}

/// Candidate `h_i^*(q) = u_i (q + alpha (d + 1 - 2i)) + alpha sum_{j<i} u_j - alpha sum_{j>i} u_j`
/// with 1-based `i`.
fn hstar_piece(cfg: &MultibangConfig, i: usize, q: f64) -> f64 {
    let d = cfg.d() as f64;
    let u = &cfg.values;
    let before: f64 = u[..i - 1].iter().sum();
    let after: f64 = u[i..].iter().sum();
    u[i - 1] * (q + cfg.alpha * (d + 1.0 - 2.0 * i as f64)) + cfg.alpha * before
        - cfg.alpha * after
}

pub fn l1_hstar_eval(cfg: &MultibangConfig, q: f64) -> f64 {
    (1..=cfg.d())
        .map(|i| hstar_piece(cfg, i, q))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Switching points `alpha (2i - d)`, `i = 1..d-1`.
pub fn l1_subdiff_boundaries(cfg: &MultibangConfig) -> Vec<f64> {
    let d = cfg.d() as f64;
    (1..cfg.d())
        .map(|i| cfg.alpha * (2.0 * i as f64 - d))
        .collect()
}

pub fn l1_subdiff_hstar(cfg: &MultibangConfig, q: f64) -> SubgradientValue {
    let bounds = l1_subdiff_boundaries(cfg);
    if let Some(i) = bounds.iter().position(|&b| b == q) {
        return SubgradientValue::Interval(cfg.values[i], cfg.values[i + 1]);
    }
    let below = bounds.iter().filter(|&&b| b < q).count();
    SubgradientValue::Single(cfg.values[below])
}
