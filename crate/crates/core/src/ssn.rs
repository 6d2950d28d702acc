//! Semismooth Newton iteration with backtracking and continuation in `gamma`.

use crate::error::{Error, Result};
use crate::fdgrid::{norm, Grid2D, ScalarField};
use crate::multibang::{MultibangConfig, TransitionBands};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// State `y`, adjoint `w` and the regularization parameter they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonIterate {
    pub y: ScalarField,
    pub w: ScalarField,
    pub gamma: f64,
}

impl NewtonIterate {
    pub fn new(y: ScalarField, w: ScalarField, gamma: f64) -> Result<Self> {
        y.same_grid(&w)?;
        if !(gamma > 0.0) {
            return Err(Error::InvalidSetting(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { y, w, gamma })
    }

    pub fn zeros(grid: Grid2D, gamma: f64) -> Self {
        Self::new(ScalarField::zeros(grid), ScalarField::zeros(grid), gamma)
            .expect("valid zero iterate")
    }

    pub fn grid(&self) -> &Grid2D {
        self.y.grid()
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }

    /// `(y, w)` concatenated.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.y.data().to_vec();
        v.extend_from_slice(self.w.data());
        v
    }

    /// `self + sigma * delta` for a stacked `delta`.
    pub fn updated(&self, delta: &[f64], sigma: f64) -> Self {
        let len = self.grid().len();
        assert_eq!(delta.len(), 2 * len, "step length mismatch");
        let mut y = self.y.clone();
        let mut w = self.w.clone();
        for (v, d) in y.data_mut().iter_mut().zip(&delta[..len]) {
            *v += sigma * d;
        }
        for (v, d) in w.data_mut().iter_mut().zip(&delta[len..]) {
            *v += sigma * d;
        }
        Self { y, w, gamma: self.gamma }
    }
}

/// Residual blocks `(r1, r2)` of the reduced optimality system.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub r1: ScalarField,
    pub r2: ScalarField,
}

impl Residual {
    pub fn new(r1: ScalarField, r2: ScalarField) -> Result<Self> {
        r1.same_grid(&r2)?;
        Ok(Self { r1, r2 })
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.r1.data().to_vec();
        v.extend_from_slice(self.r2.data());
        v
    }

    /// Euclidean norm of the stacked residual.
    pub fn norm(&self) -> f64 {
        norm(self.r1.data()).hypot(norm(self.r2.data()))
    }

    pub fn is_finite(&self) -> bool {
        self.r1.is_finite() && self.r2.is_finite()
    }
}

/// Quantities related to the invertibility assumptions of the Newton
/// matrix; logged, never enforced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateDiagnostics {
    pub max_abs_w: f64,
    pub sqrt_gamma: f64,
    /// Fraction of nodes whose prox argument lies within `1e-6 (1 + |p|)`
    /// of a band endpoint.
    pub near_kink_fraction: f64,
}

impl IterateDiagnostics {
    pub fn new(w: &ScalarField, p: &ScalarField, bands: &TransitionBands) -> Self {
        let near = p
            .data()
            .iter()
            .filter(|&&v| bands.distance_to_kink(v) <= 1e-6 * (1.0 + v.abs()))
            .count();
        Self {
            max_abs_w: w.max_abs(),
            sqrt_gamma: bands.gamma().sqrt(),
            near_kink_fraction: near as f64 / p.data().len() as f64,
        }
    }
}

/// What the driver needs from a discretized optimality system.
pub trait SsnProblem {
    fn grid(&self) -> &Grid2D;
    fn config(&self) -> &MultibangConfig;
    fn residual(&self, it: &NewtonIterate) -> Result<Residual>;
    /// Solves `J(it) d = -r` for the stacked step `d = (dy, dw)`.
    fn newton_step(&self, it: &NewtonIterate, r: &Residual) -> Result<Vec<f64>>;
    fn control(&self, it: &NewtonIterate) -> Result<ScalarField>;
    fn diagnostics(&self, it: &NewtonIterate) -> Result<IterateDiagnostics>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationSettings {
    pub gamma0: f64,
    pub gamma_factor: f64,
    pub gamma_min: f64,
    pub max_total_newton: usize,
    pub max_level_newton: usize,
    pub inner_tol_rel: f64,
    /// Absolute inner tolerance; `None` means `1e-11 sqrt(2 n^2)`.
    pub inner_tol_abs: Option<f64>,
    pub min_step: f64,
    pub max_backtracks: usize,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        Self {
            gamma0: 1.0,
            gamma_factor: 0.5,
            gamma_min: 1e-12,
            max_total_newton: 300,
            max_level_newton: 50,
            inner_tol_rel: 1e-10,
            inner_tol_abs: None,
            min_step: 1e-6,
            max_backtracks: 40,
        }
    }
}

impl ContinuationSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSetting(msg));
        if !(self.gamma_factor > 0.0 && self.gamma_factor < 1.0) {
            return bad(format!("gamma_factor {} not in (0, 1)", self.gamma_factor));
        }
        if !(self.gamma0 > 0.0 && self.gamma_min > 0.0 && self.gamma_min <= self.gamma0) {
            return bad(format!(
                "need 0 < gamma_min <= gamma0, got {} and {}",
                self.gamma_min, self.gamma0
            ));
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return bad(format!("min_step {} not in (0, 1]", self.min_step));
        }
        if !(self.inner_tol_rel > 0.0) || self.inner_tol_abs.is_some_and(|t| !(t > 0.0)) {
            return bad("tolerances must be positive".into());
        }
        if self.max_level_newton == 0 {
            return bad("max_level_newton must be positive".into());
        }
        Ok(())
    }

    pub fn absolute_tolerance(&self, grid: &Grid2D) -> f64 {
        self.inner_tol_abs
            .unwrap_or_else(|| 1e-11 * ((2 * grid.len()) as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// All levels down to `gamma_min` converged.
    GammaMin,
    /// The Newton budget ran out, cumulative or per level.
    MaxNewton,
    SingularSystem,
    NonFiniteResidual,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GammaMin => "gamma_min",
            Self::MaxNewton => "max_newton",
            Self::SingularSystem => "singular_system",
            Self::NonFiniteResidual => "non_finite_residual",
        }
    }
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub gamma: f64,
    pub iteration: usize,
    pub residual_before: f64,
    pub residual_after: f64,
    pub step_length: f64,
    pub non_monotone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelOutcome {
    Converged,
    BudgetExhausted,
    /// Stopped by the per-level cap with cumulative budget left.
    LevelCap,
    SingularSystem,
    NonFiniteResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub gamma: f64,
    pub newton_iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub tolerance: f64,
    pub outcome: LevelOutcome,
    pub steps: Vec<StepRecord>,
    pub diagnostics: Option<IterateDiagnostics>,
}

impl LevelRecord {
    /// `|r_{k+1}| / |r_k|` for each step of the level.
    pub fn residual_ratios(&self) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| s.residual_after / s.residual_before)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub settings: ContinuationSettings,
    pub levels: Vec<LevelRecord>,
    pub reason: TerminationReason,
    pub total_newton: usize,
    /// `gamma` of the last converged level.
    pub gamma_final: Option<f64>,
    pub wall_time_secs: f64,
    /// Iterate of the last converged level.
    #[serde(skip)]
    pub final_iterate: Option<NewtonIterate>,
}

impl RunReport {
    pub fn successful_levels(&self) -> usize {
        self.levels
            .iter()
            .filter(|l| l.outcome == LevelOutcome::Converged)
            .count()
    }

    pub fn last_converged_level(&self) -> Option<&LevelRecord> {
        self.levels
            .iter()
            .rev()
            .find(|l| l.outcome == LevelOutcome::Converged)
    }
}

/// Newton direction at `it`, along with the residual it was computed from.
pub fn newton_step<P: SsnProblem + ?Sized>(
    problem: &P,
    it: &NewtonIterate,
) -> Result<(Vec<f64>, Residual)> {
    let r = problem.residual(it)?;
    let d = problem.newton_step(it, &r)?;
    Ok((d, r))
}

#[derive(Debug, Clone)]
pub struct LineSearchResult {
    pub iterate: NewtonIterate,
    pub residual: Residual,
    pub sigma: f64,
    pub monotone: bool,
}

/// Tries `sigma = 1, 1/2, ...` and accepts the first strict decrease of the
/// residual norm. Below `min_step` the step `min_step` is taken regardless.
pub fn line_search<P: SsnProblem + ?Sized>(
    problem: &P,
    it: &NewtonIterate,
    r_norm: f64,
    delta: &[f64],
    settings: &ContinuationSettings,
) -> Result<LineSearchResult> {
    let mut sigma = 1.0;
    for _ in 0..=settings.max_backtracks {
        if sigma < settings.min_step {
            break;
        }
        let trial = it.updated(delta, sigma);
        let r = problem.residual(&trial)?;
        let n = r.norm();
        if n.is_finite() && n < r_norm {
            return Ok(LineSearchResult {
                iterate: trial,
                residual: r,
                sigma,
                monotone: true,
            });
        }
        sigma *= 0.5;
    }
    let trial = it.updated(delta, settings.min_step);
    let r = problem.residual(&trial)?;
    if !r.norm().is_finite() {
        return Err(Error::NonFiniteResidual);
    }
    Ok(LineSearchResult {
        iterate: trial,
        residual: r,
        sigma: settings.min_step,
        monotone: false,
    })
}

/// Newton iteration at the fixed `gamma` of `it0`, limited to `budget`
/// iterations. Solver failures end the level and are reported in the
/// record; other errors propagate.
pub fn solve_fixed_gamma<P: SsnProblem + ?Sized>(
    problem: &P,
    it0: &NewtonIterate,
    settings: &ContinuationSettings,
    budget: usize,
) -> Result<(NewtonIterate, LevelRecord)> {
    let gamma = it0.gamma;
    let mut it = it0.clone();
    let mut r = problem.residual(&it)?;
    let r0 = r.norm();
    let tol = settings
        .absolute_tolerance(problem.grid())
        .max(settings.inner_tol_rel * r0);
    let mut record = LevelRecord {
        gamma,
        newton_iterations: 0,
        initial_residual: r0,
        final_residual: r0,
        tolerance: tol,
        outcome: LevelOutcome::BudgetExhausted,
        steps: Vec::new(),
        diagnostics: None,
    };
    if !r0.is_finite() {
        record.outcome = LevelOutcome::NonFiniteResidual;
        return Ok((it, record));
    }
    loop {
        let r_norm = r.norm();
        record.final_residual = r_norm;
        if r_norm <= tol {
            record.outcome = LevelOutcome::Converged;
            break;
        }
        if record.newton_iterations >= budget {
            record.outcome = LevelOutcome::BudgetExhausted;
            break;
        }
        let delta = match problem.newton_step(&it, &r) {
            Ok(d) => d,
            Err(Error::SingularSystem(msg)) => {
                log::warn!("gamma {gamma:e}: singular Newton system ({msg})");
                record.outcome = LevelOutcome::SingularSystem;
                break;
            }
            Err(e) => return Err(e),
        };
        record.newton_iterations += 1;
        let ls = match line_search(problem, &it, r_norm, &delta, settings) {
            Ok(ls) => ls,
            Err(Error::NonFiniteResidual) => {
                record.outcome = LevelOutcome::NonFiniteResidual;
                break;
            }
            Err(e) => return Err(e),
        };
        let after = ls.residual.norm();
        log::debug!(
            "gamma {gamma:e} it {}: |r| {r_norm:e} -> {after:e}, sigma {}",
            record.newton_iterations,
            ls.sigma
        );
        record.steps.push(StepRecord {
            gamma,
            iteration: record.newton_iterations,
            residual_before: r_norm,
            residual_after: after,
            step_length: ls.sigma,
            non_monotone: !ls.monotone,
        });
        it = ls.iterate;
        r = ls.residual;
    }
    record.diagnostics = problem.diagnostics(&it).ok();
    Ok((it, record))
}

/// Runs the `gamma` continuation from `(y, w) = (0, 0)`.
pub fn continuation<P: SsnProblem + ?Sized>(
    problem: &P,
    settings: &ContinuationSettings,
) -> Result<RunReport> {
    settings.validate()?;
    let start = Instant::now();
    let mut levels = Vec::new();
    let mut total = 0usize;
    let mut last_good: Option<NewtonIterate> = None;
    let mut current = NewtonIterate::zeros(*problem.grid(), settings.gamma0);
    let mut gamma = settings.gamma0;
    let reason = loop {
        if gamma < settings.gamma_min {
            break TerminationReason::GammaMin;
        }
        let remaining = settings.max_total_newton - total;
        let budget = remaining.min(settings.max_level_newton);
        let (it, mut record) = solve_fixed_gamma(problem, &current.with_gamma(gamma), settings, budget)?;
        total += record.newton_iterations;
        if record.outcome == LevelOutcome::BudgetExhausted && budget < remaining {
            record.outcome = LevelOutcome::LevelCap;
        }
        let outcome = record.outcome;
        log::info!(
            "gamma {gamma:e}: {:?} after {} Newton steps, |r| = {:e}",
            outcome,
            record.newton_iterations,
            record.final_residual
        );
        if let Some(d) = &record.diagnostics {
            log::debug!(
                "gamma {gamma:e}: max|w| {:e} vs sqrt(gamma) {:e}, near-kink fraction {:e}",
                d.max_abs_w,
                d.sqrt_gamma,
                d.near_kink_fraction
            );
        }
        levels.push(record);
        match outcome {
            LevelOutcome::Converged => {
                last_good = Some(it.clone());
                current = it;
            }
            LevelOutcome::BudgetExhausted | LevelOutcome::LevelCap => {
                break TerminationReason::MaxNewton;
            }
            LevelOutcome::SingularSystem => break TerminationReason::SingularSystem,
            LevelOutcome::NonFiniteResidual => break TerminationReason::NonFiniteResidual,
        }
        gamma *= settings.gamma_factor;
    };
    let gamma_final = last_good.as_ref().map(|it| it.gamma);
    Ok(RunReport {
        settings: settings.clone(),
        levels,
        reason,
        total_newton: total,
        gamma_final,
        wall_time_secs: start.elapsed().as_secs_f64(),
        final_iterate: last_good,
    })
}
