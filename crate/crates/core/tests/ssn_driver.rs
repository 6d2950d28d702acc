mod common;

use multimat::experiments::{build_potential_reference, POTENTIAL_VALUES};
use multimat::fdgrid::{Grid2D, ScalarField};
use multimat::multibang::MultibangConfig;
use multimat::ssn::{
    continuation, line_search, newton_step, solve_fixed_gamma, ContinuationSettings,
    IterateDiagnostics, LevelOutcome, NewtonIterate, Residual, SsnProblem, TerminationReason,
};
use multimat::Result;

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    /// `r = atan(y) - b`, `r = w - c`, with exact Newton steps.
    Atan,
    /// Steps point uphill.
    Uphill,
    /// Every iterate other than the start has a NaN residual.
    Poison,
}

struct Toy {
    grid: Grid2D,
    cfg: MultibangConfig,
    b: f64,
    mode: Mode,
}

impl Toy {
    fn new(mode: Mode, b: f64) -> Self {
        Self {
            grid: Grid2D::new(3).unwrap(),
            cfg: MultibangConfig::with_minimal_beta(vec![1.0, 2.0], 1.0).unwrap(),
            b,
            mode,
        }
    }
}

impl SsnProblem for Toy {
    fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn config(&self) -> &MultibangConfig {
        &self.cfg
    }

    fn residual(&self, it: &NewtonIterate) -> Result<Residual> {
        let poisoned = self.mode == Mode::Poison && it.y.max_abs() != 0.0;
        let r1 = it.y.map(|y| if poisoned { f64::NAN } else { y.atan() - self.b });
        let r2 = it.w.map(|w| w - 0.5);
        Residual::new(r1, r2)
    }

    fn newton_step(&self, it: &NewtonIterate, r: &Residual) -> Result<Vec<f64>> {
        let sign = if self.mode == Mode::Uphill { -1.0 } else { 1.0 };
        let mut d: Vec<f64> = it
            .y
            .data()
            .iter()
            .zip(r.r1.data())
            .map(|(y, r)| -sign * r * (1.0 + y * y))
            .collect();
        d.extend(r.r2.data().iter().map(|r| -sign * r));
        Ok(d)
    }

    fn control(&self, it: &NewtonIterate) -> Result<ScalarField> {
        Ok(it.y.clone())
    }

    fn diagnostics(&self, it: &NewtonIterate) -> Result<IterateDiagnostics> {
        Ok(IterateDiagnostics::new(&it.w, &it.y, &self.cfg.bands(it.gamma)))
    }
}

fn settings() -> ContinuationSettings {
    ContinuationSettings {
        inner_tol_abs: Some(1e-12),
        ..ContinuationSettings::default()
    }
}

#[test]
fn quadratic_regime_takes_full_steps() {
    let toy = Toy::new(Mode::Atan, 0.3);
    let it = NewtonIterate::zeros(toy.grid, 1.0);
    let (d, r) = newton_step(&toy, &it).unwrap();
    let ls = line_search(&toy, &it, r.norm(), &d, &settings()).unwrap();
    assert_eq!(ls.sigma, 1.0);
    assert!(ls.monotone);
}

#[test]
fn overshooting_step_is_damped() {
    // Newton on atan from 0 with a large target overshoots
    let toy = Toy::new(Mode::Atan, 0.0);
    let mut shift = vec![3.0; 9];
    shift.extend([0.5; 9]);
    let start = NewtonIterate::zeros(toy.grid, 1.0).updated(&shift, 1.0);
    let (d, r) = newton_step(&toy, &start).unwrap();
    let ls = line_search(&toy, &start, r.norm(), &d, &settings()).unwrap();
    assert!(ls.sigma < 1.0);
    assert!(ls.monotone);
    assert!(ls.residual.norm() < r.norm());
}

#[test]
fn no_decrease_falls_back_to_minimal_step() {
    let toy = Toy::new(Mode::Uphill, 0.3);
    let it = NewtonIterate::zeros(toy.grid, 1.0);
    let (d, r) = newton_step(&toy, &it).unwrap();
    let s = settings();
    let ls = line_search(&toy, &it, r.norm(), &d, &s).unwrap();
    assert_eq!(ls.sigma, s.min_step);
    assert!(!ls.monotone);
}

#[test]
fn non_finite_everywhere_is_an_error() {
    let toy = Toy::new(Mode::Poison, 0.3);
    let it = NewtonIterate::zeros(toy.grid, 1.0);
    let (d, r) = newton_step(&toy, &it).unwrap();
    assert!(matches!(
        line_search(&toy, &it, r.norm(), &d, &settings()),
        Err(multimat::Error::NonFiniteResidual)
    ));
    let report = continuation(&toy, &settings()).unwrap();
    assert_eq!(report.reason, TerminationReason::NonFiniteResidual);
    assert_eq!(report.successful_levels(), 0);
    assert!(report.final_iterate.is_none());
}

#[test]
fn converged_start_needs_no_iterations() {
    let toy = Toy::new(Mode::Atan, 0.0);
    let mut it = NewtonIterate::zeros(toy.grid, 1.0);
    it.w = ScalarField::constant(toy.grid, 0.5);
    let (out, rec) = solve_fixed_gamma(&toy, &it, &settings(), 10).unwrap();
    assert_eq!(rec.newton_iterations, 0);
    assert_eq!(rec.outcome, LevelOutcome::Converged);
    assert_eq!(out, it);
}

#[test]
fn budget_and_level_caps() {
    let toy = Toy::new(Mode::Uphill, 0.3);
    let s = ContinuationSettings {
        max_total_newton: 7,
        ..settings()
    };
    let report = continuation(&toy, &s).unwrap();
    assert_eq!(report.reason, TerminationReason::MaxNewton);
    assert_eq!(report.total_newton, 7);
    assert!(report.gamma_final.is_none());
    assert_eq!(report.levels[0].outcome, LevelOutcome::BudgetExhausted);

    let s = ContinuationSettings {
        max_level_newton: 4,
        ..settings()
    };
    let report = continuation(&toy, &s).unwrap();
    assert_eq!(report.reason, TerminationReason::MaxNewton);
    assert_eq!(report.levels[0].outcome, LevelOutcome::LevelCap);
    assert_eq!(report.total_newton, 4);
    assert!(report.levels[0].steps.iter().all(|s| s.non_monotone));
}

#[test]
fn single_level_when_gamma0_is_gamma_min() {
    let toy = Toy::new(Mode::Atan, 0.3);
    let s = ContinuationSettings {
        gamma0: 1e-3,
        gamma_min: 1e-3,
        ..settings()
    };
    let report = continuation(&toy, &s).unwrap();
    assert_eq!(report.levels.len(), 1);
    assert_eq!(report.reason, TerminationReason::GammaMin);
    assert_eq!(report.gamma_final, Some(1e-3));
}

#[test]
fn potential_continuation_is_monotone_and_deterministic() {
    let g = Grid2D::new(17).unwrap();
    let cfg = MultibangConfig::with_minimal_beta(POTENTIAL_VALUES.to_vec(), 1e-5).unwrap();
    let r = build_potential_reference(g, cfg).unwrap();
    let s = ContinuationSettings::default();
    let a = continuation(&r.problem, &s).unwrap();
    let b = continuation(&r.problem, &s).unwrap();
    assert_eq!(a.reason, TerminationReason::GammaMin);
    assert_eq!(a.levels, b.levels);
    assert_eq!(a.final_iterate, b.final_iterate);
    for level in &a.levels {
        for step in &level.steps {
            assert!(step.non_monotone || step.residual_after < step.residual_before);
        }
    }
    // warm start: each level starts from the previous iterate at the new gamma
    let last = a.final_iterate.as_ref().unwrap();
    let again = r.problem.residual(last).unwrap().norm();
    assert_eq!(again, a.last_converged_level().unwrap().final_residual);
}

#[test]
fn newton_step_solves_linear_system() {
    let g = Grid2D::new(17).unwrap();
    let cfg = MultibangConfig::with_minimal_beta(POTENTIAL_VALUES.to_vec(), 1e-5).unwrap();
    let r = build_potential_reference(g, cfg).unwrap();
    let mut rng = common::rng(3);
    let it = common::random_potential_iterate(&common::potential_fd_problem(17), 0.1, 0.0, &mut rng);
    let res = r.problem.residual(&it).unwrap();
    let d = r.problem.newton_step(&it, &res).unwrap();
    let jd = r.problem.jacobian_apply(&it, &d).unwrap();
    let rs = res.stacked();
    let err: f64 = jd.iter().zip(&rs).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = rs.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(err <= 1e-10 * scale, "{err:e}");
}
