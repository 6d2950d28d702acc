//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use multimat::diffusion::DiffusionProblem;
use multimat::fdgrid::{
    solve_dirichlet_diffusion, solve_neumann_helmholtz, Grid2D, ScalarField, SmoothingKind,
};
use multimat::multibang::MultibangConfig;
use multimat::potential::PotentialProblem;
use multimat::ssn::NewtonIterate;
use multimat::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub const FD_EPS: f64 = 1e-6;

/// L2 error of the Neumann Helmholtz solve for `y = cos(pi x1) cos(pi x2)`,
/// `u = 1`.
pub fn neumann_mms_error(n: usize) -> f64 {
    let g = Grid2D::new(n).unwrap();
    let exact = ScalarField::from_fn(g, |x1, x2| (PI * x1).cos() * (PI * x2).cos());
    let f = exact.map(|v| (2.0 * PI * PI + 1.0) * v);
    let y = solve_neumann_helmholtz(&ScalarField::constant(g, 1.0), &f).unwrap();
    y.axpy(-1.0, &exact).unwrap().l2_norm()
}

/// L2 error of the Dirichlet diffusion solve for
/// `y = sin(pi x1) sin(pi x2)`, `a = 2 + x1 + x2^2 / 2`.
pub fn dirichlet_mms_error(n: usize) -> f64 {
    let g = Grid2D::new(n).unwrap();
    let exact = ScalarField::from_fn(g, |x1, x2| (PI * x1).sin() * (PI * x2).sin());
    let a = ScalarField::from_fn(g, |x1, x2| 2.0 + x1 + 0.5 * x2 * x2);
    let f = ScalarField::from_fn(g, |x1, x2| {
        let (s1, c1) = (PI * x1).sin_cos();
        let (s2, c2) = (PI * x2).sin_cos();
        let av = 2.0 + x1 + 0.5 * x2 * x2;
        2.0 * PI * PI * av * s1 * s2 - PI * c1 * s2 - x2 * PI * s1 * c2
    });
    let y = solve_dirichlet_diffusion(&a, &f).unwrap();
    y.axpy(-1.0, &exact).unwrap().l2_norm()
}

/// Successive error ratios over `ns`.
pub fn ratios(ns: &[usize], err: impl Fn(usize) -> f64) -> Vec<f64> {
    let e: Vec<f64> = ns.iter().map(|&n| err(n)).collect();
    e.windows(2).map(|w| w[0] / w[1]).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|J v - (r(x + eps v) - r(x - eps v)) / (2 eps)| / |J v|`.
pub fn fd_relative_error(
    residual: impl Fn(&NewtonIterate) -> Result<Vec<f64>>,
    jv: &[f64],
    it: &NewtonIterate,
    v: &[f64],
    eps: f64,
) -> f64 {
    let plus = residual(&it.updated(v, eps)).unwrap();
    let minus = residual(&it.updated(v, -eps)).unwrap();
    let diff: Vec<f64> = jv
        .iter()
        .zip(plus.iter().zip(&minus))
        .map(|(j, (p, m))| j - (p - m) / (2.0 * eps))
        .collect();
    norm(&diff) / norm(jv)
}

/// Unit-norm random direction; zero on the boundary if requested.
pub fn random_direction(grid: Grid2D, rng: &mut ChaCha8Rng, zero_boundary: bool) -> Vec<f64> {
    let len = grid.len();
    let mut v: Vec<f64> = (0..2 * len)
        .map(|k| {
            if zero_boundary && grid.is_boundary(k % len) {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

pub fn potential_fd_problem(n: usize) -> PotentialProblem {
    let g = Grid2D::new(n).unwrap();
    let f = ScalarField::from_fn(g, |x1, x2| (PI * x1).sin() * (PI * x2).cos());
    let z = ScalarField::from_fn(g, |x1, x2| 0.2 * x1 - 0.1 * x2 * x2);
    let cfg = MultibangConfig::with_minimal_beta(vec![1.0, 1.5, 2.0, 2.5], 0.1).unwrap();
    PotentialProblem::new(f, z, cfg).unwrap()
}

/// Random iterate with every `p = -y w` at least `margin` from a band
/// endpoint and a good share of nodes inside transition bands.
pub fn random_potential_iterate(
    prob: &PotentialProblem,
    gamma: f64,
    margin: f64,
    rng: &mut ChaCha8Rng,
) -> NewtonIterate {
    let g = *prob.grid();
    let bands = prob.config().bands(gamma);
    let mut y = vec![0.0; g.len()];
    let mut w = vec![0.0; g.len()];
    for k in 0..g.len() {
        loop {
            y[k] = rng.gen_range(0.5..1.5);
            w[k] = rng.gen_range(-0.6..0.2);
            if bands.distance_to_kink(-y[k] * w[k]) > margin {
                break;
            }
        }
    }
    NewtonIterate::new(
        ScalarField::new(g, y).unwrap(),
        ScalarField::new(g, w).unwrap(),
        gamma,
    )
    .unwrap()
}

pub fn diffusion_fd_problem(n: usize, kind: SmoothingKind) -> DiffusionProblem {
    let g = Grid2D::new(n).unwrap();
    let f = ScalarField::constant(g, 10.0);
    let z = ScalarField::from_fn(g, |x1, x2| (1.0 - x1 * x1) * (1.0 - x2 * x2));
    let cfg = MultibangConfig::with_minimal_beta(vec![1.5, 1.75, 2.0, 2.25, 2.5], 0.1).unwrap();
    DiffusionProblem::new(f, z, cfg, kind).unwrap()
}

/// Random iterate vanishing on the boundary with `w` roughly `-c y`, so the
/// prox argument spreads over all bands; redrawn until every node keeps
/// `margin` from the band endpoints.
pub fn random_diffusion_iterate(
    prob: &DiffusionProblem,
    gamma: f64,
    margin: f64,
    rng: &mut ChaCha8Rng,
) -> NewtonIterate {
    let g = *prob.grid();
    let bands = prob.config().bands(gamma);
    loop {
        let c = rng.gen_range(0.05..0.2);
        let bump = |x1: f64, x2: f64| (1.0 - x1 * x1) * (1.0 - x2 * x2);
        let y = ScalarField::from_fn(g, |x1, x2| bump(x1, x2) * rng.gen_range(0.7..1.3));
        let w = ScalarField::from_fn(g, |x1, x2| -c * bump(x1, x2) * rng.gen_range(0.7..1.3));
        let it = NewtonIterate::new(y, w, gamma).unwrap();
        let p = prob.recover_control(&it).unwrap().p;
        let inside = p.data().iter().filter(|&&v| bands.is_inactive(v)).count();
        if inside > 0 && p.data().iter().all(|&v| bands.distance_to_kink(v) > margin) {
            return it;
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
