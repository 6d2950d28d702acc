//! Reference problems, metrics, post-processing and experiment runs.

mod run;

pub use run::{
    default_alphas, oracle_check, run_experiment, sweep, write_metrics_csv, ExperimentConfig,
    ExperimentOutcome, OracleCheckSummary, ProblemKind, ThresholdMode, PAPER_DIFFUSION,
    PAPER_POTENTIAL,
};

use crate::diffusion::DiffusionProblem;
use crate::error::{Error, Result};
use crate::fdgrid::{solve_dirichlet_diffusion, solve_neumann_helmholtz, Grid2D, ScalarField, Smoothing, SmoothingKind};
use crate::multibang::{MultibangConfig, SubgradientValue};
use crate::potential::PotentialProblem;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const POTENTIAL_VALUES: [f64; 4] = [1.0, 1.5, 2.0, 2.5];
pub const DIFFUSION_VALUES: [f64; 5] = [1.5, 1.75, 2.0, 2.25, 2.5];
pub const DIFFUSION_SOURCE: f64 = 10.0;

/// Binary reference coefficient: 2.5 on the annulus `1/4 < |x|^2 < 3/4`
/// with `|x_1| > 1/10`, 1.5 elsewhere.
pub fn reference_value(x1: f64, x2: f64) -> f64 {
    let r2 = x1 * x1 + x2 * x2;
    if r2 > 0.25 && r2 < 0.75 && (x1 > 0.1 || x1 < -0.1) {
        2.5
    } else {
        1.5
    }
}

pub fn reference_coefficient(grid: Grid2D) -> ScalarField {
    ScalarField::from_fn(grid, reference_value)
}

pub fn potential_source(grid: Grid2D) -> ScalarField {
    ScalarField::from_fn(grid, |x1, x2| (PI * x1).sin() * (PI * x2).cos())
}

/// A problem whose target is the state of a known coefficient.
#[derive(Debug, Clone)]
pub struct Reference<P> {
    pub problem: P,
    pub u_r: ScalarField,
    /// Coefficient seen by the state equation (`u_r` or `G u_r`).
    pub coefficient_r: ScalarField,
    pub y_r: ScalarField,
}

/// Potential problem with `f = sin(pi x1) cos(pi x2)` and `z = S(u_r)`.
pub fn build_potential_reference(grid: Grid2D, cfg: MultibangConfig) -> Result<Reference<PotentialProblem>> {
    let f = potential_source(grid);
    let u_r = reference_coefficient(grid);
    let y_r = solve_neumann_helmholtz(&u_r, &f)?;
    let problem = PotentialProblem::new(f, y_r.clone(), cfg)?;
    Ok(Reference {
        problem,
        coefficient_r: u_r.clone(),
        u_r,
        y_r,
    })
}

/// Diffusion problem with `f = 10` and `z` the state for coefficient `G u_r`.
pub fn build_diffusion_reference(
    grid: Grid2D,
    cfg: MultibangConfig,
    smoothing: SmoothingKind,
) -> Result<Reference<DiffusionProblem>> {
    let f = ScalarField::constant(grid, DIFFUSION_SOURCE);
    let u_r = reference_coefficient(grid);
    let gu_r = Smoothing::new(&grid, smoothing).apply(&u_r);
    let y_r = solve_dirichlet_diffusion(&gu_r, &f)?;
    let problem = DiffusionProblem::new(f, y_r.clone(), cfg, smoothing)?;
    Ok(Reference {
        problem,
        u_r,
        coefficient_r: gu_r,
        y_r,
    })
}

/// Relative tracking error and relative material cost reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub e_t: f64,
    pub e_m: f64,
}

pub fn compute_metrics(
    y: &ScalarField,
    y_r: &ScalarField,
    u: &ScalarField,
    u_r: &ScalarField,
) -> Result<Metrics> {
    y.same_grid(y_r)?;
    u.same_grid(u_r)?;
    y.same_grid(u)?;
    let ny = y_r.l2_norm();
    if ny == 0.0 {
        return Err(Error::ZeroReference("reference state"));
    }
    let nu = u_r.l2_norm();
    if nu == 0.0 {
        return Err(Error::ZeroReference("reference coefficient"));
    }
    Ok(Metrics {
        e_t: y.axpy(-1.0, y_r)?.l2_norm() / ny,
        e_m: (nu - u.l2_norm()) / nu,
    })
}

/// Nearest material value per node, ties to the smaller value.
pub fn threshold_postprocess(u: &ScalarField, cfg: &MultibangConfig) -> ScalarField {
    u.map(|v| {
        let mut best = cfg.values[0];
        for &c in &cfg.values[1..] {
            if (v - c).abs() < (v - best).abs() {
                best = c;
            }
        }
        best
    })
}

/// Selection from the unregularized subdifferential at `p`, taking the
/// smaller endpoint on thresholds.
pub fn subdifferential_select(p: &ScalarField, cfg: &MultibangConfig) -> ScalarField {
    p.map(|v| match cfg.subgrad_gstar(v) {
        SubgradientValue::Single(u) => u,
        SubgradientValue::Interval(lo, _) => lo,
    })
}
