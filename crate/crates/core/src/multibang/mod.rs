//! Pointwise convex analysis of the multi-bang penalty.
//!
//! For ordered material values `u_1 < ... < u_d` and weights `alpha > 0`,
//! `beta >= 0`, the nonconvex penalty
//!
//! ```text
//! g0(v) = alpha/2 v^2 + beta [v not in {u_i}] + indicator_[u_1,u_d](v)
//! ```
//!
//! has as convex envelope the piecewise affine interpolant of
//! `alpha/2 u_i^2` at the material values. Everything the solvers need is
//! expressed through the thresholds `alpha/2 (u_i + u_{i+1})` and the
//! transition bands of the regularized subdifferential.

mod l1;

pub use l1::{l1_h_eval, l1_hstar_eval, l1_subdiff_hstar, l1_subdiff_boundaries};

use crate::error::ConfigError;
use crate::fdgrid::ScalarField;
use serde::{Deserialize, Serialize};

/// Material values and penalty weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultibangConfig {
    pub values: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

/// Relative slack when checking the gap condition, so that the minimal
/// `beta` computed in floating point is accepted.
const GAP_CONDITION_SLACK: f64 = 1e-12;

impl MultibangConfig {
    /// Builds and validates a configuration.
    pub fn new(values: Vec<f64>, alpha: f64, beta: f64) -> Result<Self, ConfigError> {
        let cfg = Self {
            values,
            alpha,
            beta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uses the smallest `beta` for which the envelope is exactly multi-bang,
    /// `beta = alpha * max_gap^2 / 8`.
    pub fn with_minimal_beta(values: Vec<f64>, alpha: f64) -> Result<Self, ConfigError> {
        let beta = minimal_beta(&values, alpha);
        Self::new(values, alpha, beta)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = self.values.len();
        if d < 2 {
            return Err(ConfigError::TooFewValues(d));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::NonFiniteValue);
        }
        for i in 1..d {
            if self.values[i] <= self.values[i - 1] {
                return Err(ConfigError::NotIncreasing { index: i });
            }
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(ConfigError::NonPositiveAlpha(self.alpha));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(ConfigError::NegativeBeta(self.beta));
        }
        let rhs = (2.0 * self.alpha * self.beta).sqrt();
        for i in 1..d {
            let width = self.values[i] - self.values[i - 1];
            let lhs = 0.5 * self.alpha * width;
            if lhs > rhs * (1.0 + GAP_CONDITION_SLACK) {
                return Err(ConfigError::GapCondition {
                    gap: i,
                    width,
                    lhs,
                    rhs,
                });
            }
        }
        Ok(())
    }

    /// Number of materials.
    pub fn d(&self) -> usize {
        self.values.len()
    }

    pub fn lower(&self) -> f64 {
        self.values[0]
    }

    pub fn upper(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Switching points `alpha/2 (u_i + u_{i+1})`, one per gap.
    pub fn thresholds(&self) -> Vec<f64> {
        self.values
            .windows(2)
            .map(|w| 0.5 * self.alpha * (w[0] + w[1]))
            .collect()
    }

    /// The nonconvex pointwise penalty `g0`. Membership in the value set is
    /// tested exactly.
    pub fn g0_eval(&self, v: f64) -> f64 {
        if !(v >= self.lower() && v <= self.upper()) {
            return f64::INFINITY;
        }
        let quad = 0.5 * self.alpha * (v * v);
        if self.values.contains(&v) {
            quad
        } else {
            quad + self.beta
        }
    }

    /// The convex envelope `g_Gamma`: on `[u_i, u_{i+1}]` the chord
    /// `alpha/2 ((u_i + u_{i+1}) v - u_i u_{i+1})`, `+inf` outside `[u_1, u_d]`.
    pub fn envelope_eval(&self, v: f64) -> f64 {
        if !(v >= self.lower() && v <= self.upper()) {
            return f64::INFINITY;
        }
        if self.values.contains(&v) {
            // same expression as g0 so the two agree bitwise at the knots
            return 0.5 * self.alpha * (v * v);
        }
        let i = self.segment_of(v);
        let (a, b) = (self.values[i], self.values[i + 1]);
        0.5 * self.alpha * ((a + b) * v - a * b)
    }

    /// Index `i` of the segment `[u_i, u_{i+1}]` containing `v` (clamped).
    fn segment_of(&self, v: f64) -> usize {
        let d = self.d();
        let pos = self.values.partition_point(|&u| u <= v);
        pos.saturating_sub(1).min(d - 2)
    }

    /// Subdifferential of the conjugate at `p`.
    pub fn subgrad_gstar(&self, p: f64) -> SubgradientValue {
        let thresholds = self.thresholds();
        if let Some(i) = thresholds.iter().position(|&t| t == p) {
            return SubgradientValue::Interval(self.values[i], self.values[i + 1]);
        }
        let below = thresholds.iter().filter(|&&t| t < p).count();
        SubgradientValue::Single(self.values[below])
    }

    /// Transition bands of the regularized map for a given `gamma`.
    pub fn bands(&self, gamma: f64) -> TransitionBands {
        TransitionBands::new(self, gamma)
    }
}

/// `alpha * max_gap^2 / 8`, the smallest `beta` satisfying the gap condition.
pub fn minimal_beta(values: &[f64], alpha: f64) -> f64 {
    let max_gap = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0_f64, f64::max);
    alpha * max_gap * max_gap / 8.0
}

/// Value of a (set-valued) subdifferential at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubgradientValue {
    Single(f64),
    /// Closed interval `[lo, hi]` between two adjacent material values.
    Interval(f64, f64),
}

impl SubgradientValue {
    /// Selection used by post-processing: the smaller endpoint for intervals.
    pub fn smallest(&self) -> f64 {
        match *self {
            SubgradientValue::Single(v) => v,
            SubgradientValue::Interval(lo, _) => lo,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        match *self {
            SubgradientValue::Single(u) => u == v,
            SubgradientValue::Interval(lo, hi) => lo <= v && v <= hi,
        }
    }
}

/// One closed transition band `Q_{i,i+1}` together with its affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionBand {
    /// Left endpoint, `alpha/2 (u_i + u_{i+1}) + gamma u_i`.
    pub lo: f64,
    /// Right endpoint, `alpha/2 (u_i + u_{i+1}) + gamma u_{i+1}`.
    pub hi: f64,
    /// Threshold `alpha/2 (u_i + u_{i+1})`; the band maps `p` to `(p - center)/gamma`.
    pub center: f64,
    pub u_left: f64,
    pub u_right: f64,
}

/// The partition of the real line into singleton bands `Q_i` (open) and
/// transition bands `Q_{i,i+1}` (closed), ordered
/// `Q_1, Q_{1,2}, Q_2, ..., Q_{d-1,d}, Q_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBands {
    gamma: f64,
    values: Vec<f64>,
    bands: Vec<TransitionBand>,
}

impl TransitionBands {
    pub fn new(cfg: &MultibangConfig, gamma: f64) -> Self {
        assert!(gamma > 0.0, "gamma must be positive");
        let bands = cfg
            .values
            .windows(2)
            .map(|w| {
                let center = 0.5 * cfg.alpha * (w[0] + w[1]);
                TransitionBand {
                    lo: center + gamma * w[0],
                    hi: center + gamma * w[1],
                    center,
                    u_left: w[0],
                    u_right: w[1],
                }
            })
            .collect();
        Self {
            gamma,
            values: cfg.values.clone(),
            bands,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition_bands(&self) -> &[TransitionBand] {
        &self.bands
    }

    /// Open singleton band `Q_i` (0-based `i`) as `(lo, hi)`, unbounded ends as infinities.
    pub fn singleton_band(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 {
            f64::NEG_INFINITY
        } else {
            self.bands[i - 1].hi
        };
        let hi = if i == self.bands.len() {
            f64::INFINITY
        } else {
            self.bands[i].lo
        };
        (lo, hi)
    }

    /// Index of the transition band containing `p`, if any.
    pub fn transition_index(&self, p: f64) -> Option<usize> {
        self.bands.iter().position(|b| b.lo <= p && p <= b.hi)
    }

    /// The regularized map `H_gamma` at a point.
    pub fn prox_point(&self, p: f64) -> f64 {
        for (i, b) in self.bands.iter().enumerate() {
            if p < b.lo {
                return self.values[i];
            }
            if p <= b.hi {
                return ((p - b.center) / self.gamma).clamp(b.u_left, b.u_right);
            }
        }
        self.values[self.values.len() - 1]
    }

    /// Newton derivative of `H_gamma`: `1/gamma` on closed transition bands, else 0.
    pub fn prox_newton_deriv(&self, p: f64) -> f64 {
        if self.transition_index(p).is_some() {
            1.0 / self.gamma
        } else {
            0.0
        }
    }

    pub fn is_inactive(&self, p: f64) -> bool {
        self.transition_index(p).is_some()
    }

    /// Distance from `p` to the nearest band endpoint (the kinks of `H_gamma`).
    pub fn distance_to_kink(&self, p: f64) -> f64 {
        self.bands
            .iter()
            .flat_map(|b| [b.lo, b.hi])
            .map(|e| (p - e).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Nodewise `H_gamma(p)`.
    pub fn apply_prox_field(&self, p: &ScalarField) -> ScalarField {
        p.map(|v| self.prox_point(v))
    }

    /// Nodewise 0-1 indicator of the union of transition bands.
    pub fn inactive_indicator_field(&self, p: &ScalarField) -> ScalarField {
        p.map(|v| if self.is_inactive(v) { 1.0 } else { 0.0 })
    }
}
