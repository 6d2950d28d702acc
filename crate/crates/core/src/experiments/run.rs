use super::{
    build_diffusion_reference, build_potential_reference, compute_metrics, subdifferential_select,
    threshold_postprocess, Metrics, DIFFUSION_VALUES, POTENTIAL_VALUES,
};
use crate::error::{Error, Result};
use crate::fdgrid::{
    solve_dirichlet_diffusion, solve_neumann_helmholtz, write_csv, write_pgm, Grid2D, ScalarField,
    SmoothingKind,
};
use crate::multibang::MultibangConfig;
use crate::oracle::{LowerHull, ProxOracle};
use crate::ssn::{continuation, ContinuationSettings, NewtonIterate, RunReport, TerminationReason};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Potential,
    Diffusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Nearest material value.
    Nearest,
    /// Selection from the unregularized subdifferential at `p`.
    Subdiff,
    None,
}

/// Published `(alpha, e_T, e_M)` for the potential problem.
pub const PAPER_POTENTIAL: [(f64, f64, f64); 3] = [
    (1e-5, 2.95e-2, 2.89e-1),
    (1e-6, 8.28e-3, 1.82e-1),
    (1e-7, 2.01e-3, 1.10e-1),
];

/// Published `(alpha, e_T, e_M)` for the diffusion problem.
pub const PAPER_DIFFUSION: [(f64, f64, f64); 3] = [
    (1e-1, 4.96e-2, 1.16e-2),
    (1e-2, 1.15e-2, 4.61e-1),
    (1e-6, 5.29e-5, 7.29e-4),
];

pub fn default_alphas(problem: ProblemKind) -> Vec<f64> {
    match problem {
        ProblemKind::Potential => vec![1e-5, 1e-6, 1e-7],
        ProblemKind::Diffusion => vec![1e-1, 1e-2, 1e-3, 1e-6],
    }
}

/// Everything needed to run one experiment; read from TOML.
///
/// ```toml
/// problem = "potential"      # or "diffusion"
/// grid = 128
/// alpha = 1e-6
/// alphas = [1e-5, 1e-6, 1e-7] # sweep only
/// values = [1.0, 1.5, 2.0, 2.5]
/// beta = 1e-7                 # default: alpha * max_gap^2 / 8
/// smoothing = "renormalized"  # or { extend-by = 1.5 }
/// threshold = "nearest"       # "subdiff" | "none"
///
/// [continuation]
/// gamma0 = 1.0
/// gamma_factor = 0.5
/// gamma_min = 1e-12
/// max_total_newton = 300
/// max_level_newton = 50
/// inner_tol_rel = 1e-10
/// inner_tol_abs = 1e-9        # default: 1e-11 * sqrt(2 n^2)
/// min_step = 1e-6
/// max_backtracks = 40
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub grid: usize,
    pub alpha: f64,
    pub alphas: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
    pub beta: Option<f64>,
    pub smoothing: SmoothingKind,
    pub threshold: ThresholdMode,
    pub continuation: ContinuationSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Potential,
            grid: 128,
            alpha: 1e-6,
            alphas: None,
            values: None,
            beta: None,
            smoothing: SmoothingKind::Renormalized,
            threshold: ThresholdMode::Nearest,
            continuation: ContinuationSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_problem(problem: ProblemKind) -> Self {
        Self {
            problem,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone().unwrap_or_else(|| match self.problem {
            ProblemKind::Potential => POTENTIAL_VALUES.to_vec(),
            ProblemKind::Diffusion => DIFFUSION_VALUES.to_vec(),
        })
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.alphas.clone().unwrap_or_else(|| default_alphas(self.problem))
    }

    pub fn multibang(&self) -> Result<MultibangConfig> {
        Ok(match self.beta {
            Some(beta) => MultibangConfig::new(self.values(), self.alpha, beta)?,
            None => MultibangConfig::with_minimal_beta(self.values(), self.alpha)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 17 {
            return Err(Error::InvalidSetting(format!(
                "grid must have at least 17 nodes per axis, got {}",
                self.grid
            )));
        }
        self.multibang()?;
        self.continuation.validate()
    }

    pub fn paper_metrics(&self) -> Option<Metrics> {
        let table: &[(f64, f64, f64)] = match self.problem {
            ProblemKind::Potential => &PAPER_POTENTIAL,
            ProblemKind::Diffusion => &PAPER_DIFFUSION,
        };
        table
            .iter()
            .find(|(a, _, _)| (a - self.alpha).abs() <= 1e-9 * a)
            .map(|&(_, e_t, e_m)| Metrics { e_t, e_m })
    }
}

/// Result of one experiment, including the fields at the final iterate.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub report: RunReport,
    pub metrics: Metrics,
    pub postprocessed_metrics: Option<Metrics>,
    /// Fraction of nodes within `1e-3` of a material value.
    pub multibang_fraction: f64,
    pub u: ScalarField,
    /// Smoothed coefficient (diffusion only).
    pub gu: Option<ScalarField>,
    pub y: ScalarField,
    pub w: ScalarField,
    pub p: ScalarField,
    pub u_post: Option<ScalarField>,
    pub u_r: ScalarField,
    pub y_r: ScalarField,
}

impl ExperimentOutcome {
    /// No level converged, or the solver broke down.
    pub fn aborted(&self) -> bool {
        self.report.gamma_final.is_none()
            || matches!(
                self.report.reason,
                TerminationReason::SingularSystem | TerminationReason::NonFiniteResidual
            )
    }

    pub fn metrics_row(&self) -> String {
        let gamma = self
            .report
            .gamma_final
            .map(|g| format!("{g:e}"))
            .unwrap_or_default();
        format!(
            "{:e},{:e},{:e},{},{},{}",
            self.config.alpha,
            self.metrics.e_t,
            self.metrics.e_m,
            self.report.total_newton,
            gamma,
            self.report.reason
        )
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config: &'a ExperimentConfig,
    beta: f64,
    metrics: Metrics,
    postprocessed_metrics: Option<Metrics>,
    multibang_fraction: f64,
    published_metrics: Option<Metrics>,
    run: &'a RunReport,
}

fn multibang_fraction(u: &ScalarField, values: &[f64]) -> f64 {
    let hits = u
        .data()
        .iter()
        .filter(|&&v| values.iter().any(|c| (v - c).abs() <= 1e-3))
        .count();
    hits as f64 / u.data().len() as f64
}

/// Builds the reference problem, runs the continuation and, if `out` is
/// given, writes `report.json`, `metrics.csv` and the fields.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let grid = Grid2D::new(config.grid)?;
    let cfg = config.multibang()?;
    let settings = &config.continuation;
    let fallback = |g: Grid2D| NewtonIterate::zeros(g, settings.gamma0);

    let outcome = match config.problem {
        ProblemKind::Potential => {
            let r = build_potential_reference(grid, cfg.clone())?;
            let report = continuation(&r.problem, settings)?;
            let it = report.final_iterate.clone().unwrap_or_else(|| fallback(grid));
            let (u, p) = r.problem.recover_control(&it)?;
            let metrics = compute_metrics(&it.y, &r.y_r, &u, &r.u_r)?;
            let u_post = postprocess(config.threshold, &u, &p, &cfg);
            let postprocessed_metrics = match &u_post {
                Some(up) => {
                    let y = solve_neumann_helmholtz(up, r.problem.source())?;
                    Some(compute_metrics(&y, &r.y_r, up, &r.u_r)?)
                }
                None => None,
            };
            ExperimentOutcome {
                config: config.clone(),
                report,
                metrics,
                postprocessed_metrics,
                multibang_fraction: multibang_fraction(&u, &cfg.values),
                u,
                gu: None,
                y: it.y,
                w: it.w,
                p,
                u_post,
                u_r: r.u_r,
                y_r: r.y_r,
            }
        }
        ProblemKind::Diffusion => {
            let r = build_diffusion_reference(grid, cfg.clone(), config.smoothing)?;
            let report = continuation(&r.problem, settings)?;
            let it = report.final_iterate.clone().unwrap_or_else(|| fallback(grid));
            let ctl = r.problem.recover_control(&it)?;
            let metrics = compute_metrics(&it.y, &r.y_r, &ctl.u, &r.u_r)?;
            let u_post = postprocess(config.threshold, &ctl.u, &ctl.p, &cfg);
            let postprocessed_metrics = match &u_post {
                Some(up) => {
                    let coefficient = r.problem.smoothing().apply(up);
                    let y = solve_dirichlet_diffusion(&coefficient, r.problem.source())?;
                    Some(compute_metrics(&y, &r.y_r, up, &r.u_r)?)
                }
                None => None,
            };
            ExperimentOutcome {
                config: config.clone(),
                report,
                metrics,
                postprocessed_metrics,
                multibang_fraction: multibang_fraction(&ctl.u, &cfg.values),
                u: ctl.u,
                gu: Some(ctl.gu),
                y: it.y,
                w: it.w,
                p: ctl.p,
                u_post,
                u_r: r.u_r,
                y_r: r.y_r,
            }
        }
    };
    if let Some(dir) = out {
        write_artifacts(&outcome, cfg.beta, dir)?;
    }
    Ok(outcome)
}

fn postprocess(
    mode: ThresholdMode,
    u: &ScalarField,
    p: &ScalarField,
    cfg: &MultibangConfig,
) -> Option<ScalarField> {
    match mode {
        ThresholdMode::Nearest => Some(threshold_postprocess(u, cfg)),
        ThresholdMode::Subdiff => Some(subdifferential_select(p, cfg)),
        ThresholdMode::None => None,
    }
}

fn write_artifacts(o: &ExperimentOutcome, beta: f64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let report = ReportFile {
        config: &o.config,
        beta,
        metrics: o.metrics,
        postprocessed_metrics: o.postprocessed_metrics,
        multibang_fraction: o.multibang_fraction,
        published_metrics: o.config.paper_metrics(),
        run: &o.report,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join("report.json"), json)?;
    write_metrics_csv(std::slice::from_ref(o), &dir.join("metrics.csv"))?;
    let mut fields: Vec<(&str, &ScalarField)> = vec![
        ("u", &o.u),
        ("y", &o.y),
        ("w", &o.w),
        ("p", &o.p),
        ("u_ref", &o.u_r),
        ("y_ref", &o.y_r),
    ];
    if let Some(gu) = &o.gu {
        fields.push(("gu", gu));
    }
    if let Some(up) = &o.u_post {
        fields.push(("u_post", up));
    }
    for (name, field) in fields {
        write_csv(field, &dir.join(format!("{name}.csv")))?;
        write_pgm(field, &dir.join(format!("{name}.pgm")))?;
    }
    Ok(())
}

pub fn write_metrics_csv(outcomes: &[ExperimentOutcome], path: &Path) -> Result<()> {
    let mut text = String::from("alpha,e_T,e_M,newton_total,gamma_final,reason\n");
    for o in outcomes {
        writeln!(text, "{}", o.metrics_row()).unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}

/// Runs `config` for every `alpha` in `alphas`, in order. Each run writes to
/// `out/alpha_<alpha>/`; the combined table goes to `out/metrics.csv`.
pub fn sweep(config: &ExperimentConfig, alphas: &[f64], out: Option<&Path>) -> Result<Vec<ExperimentOutcome>> {
    let mut outcomes = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let cfg = ExperimentConfig {
            alpha,
            ..config.clone()
        };
        let sub = out.map(|d| d.join(format!("alpha_{alpha:e}")));
        log::info!("{:?} problem, alpha = {alpha:e}", config.problem);
        outcomes.push(run_experiment(&cfg, sub.as_deref())?);
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_metrics_csv(&outcomes, &dir.join("metrics.csv"))?;
    }
    Ok(outcomes)
}

/// Largest deviations of the closed forms from the brute-force oracles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheckSummary {
    pub values: Vec<f64>,
    pub alpha: f64,
    pub samples: usize,
    /// `(gamma, max |prox_point - oracle|)`.
    pub prox: Vec<(f64, f64)>,
    pub envelope: f64,
}

/// Compares `prox_point` and `envelope_eval` against [`ProxOracle`] and
/// [`LowerHull`] on random samples. Half of the prox samples are drawn
/// uniformly, half near the transition bands.
pub fn oracle_check(
    cfg: &MultibangConfig,
    gammas: &[f64],
    samples: usize,
    seed: u64,
) -> OracleCheckSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oracle = ProxOracle::new(cfg);
    let mut prox = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let bands = cfg.bands(gamma);
        let tb = bands.transition_bands();
        let lo = tb[0].lo - 1.0 - cfg.alpha;
        let hi = tb[tb.len() - 1].hi + 1.0 + cfg.alpha;
        let mut worst: f64 = 0.0;
        for s in 0..samples {
            let p = if s % 2 == 0 {
                rng.gen_range(lo..hi)
            } else {
                let b = &tb[rng.gen_range(0..tb.len())];
                let w = b.hi - b.lo;
                rng.gen_range(b.lo - w..b.hi + w)
            };
            worst = worst.max((bands.prox_point(p) - oracle.argmax(gamma, p)).abs());
        }
        prox.push((gamma, worst));
    }
    let hull = LowerHull::of_g0(cfg, 100_000);
    let (a, b) = (cfg.lower(), cfg.upper());
    let envelope = (0..samples)
        .map(|_| {
            let v = rng.gen_range(a..=b);
            (cfg.envelope_eval(v) - hull.eval(v)).abs()
        })
        .fold(0.0, f64::max);
    OracleCheckSummary {
        values: cfg.values.clone(),
        alpha: cfg.alpha,
        samples,
        prox,
        envelope,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let cfg = ExperimentConfig::from_toml(
            "problem = \"diffusion\"\ngrid = 33\nalpha = 1e-3\nsmoothing = { extend-by = 1.5 }\n[continuation]\nmax_total_newton = 20\n",
        )
        .unwrap();
        assert_eq!(cfg.problem, ProblemKind::Diffusion);
        assert_eq!(cfg.smoothing, SmoothingKind::ExtendBy(1.5));
        assert_eq!(cfg.continuation.max_total_newton, 20);
        assert_eq!(cfg.continuation.gamma_min, 1e-12);
        assert_eq!(cfg.values(), DIFFUSION_VALUES.to_vec());
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_toml("gird = 3").is_err());
    }

    #[test]
    fn rejects_small_grid() {
        let cfg = ExperimentConfig {
            grid: 9,
            ..ExperimentConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidSetting(_))));
    }

    #[test]
    fn published_lookup() {
        let mut cfg = ExperimentConfig::for_problem(ProblemKind::Diffusion);
        cfg.alpha = 1e-2;
        assert_eq!(cfg.paper_metrics().unwrap().e_t, 1.15e-2);
        cfg.alpha = 1e-3;
        assert!(cfg.paper_metrics().is_none());
    }
}
