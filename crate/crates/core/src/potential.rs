//! Potential-coefficient problem: recover `u` in `-Delta y + u y = f`
//! (homogeneous Neumann data) from a target state `z`.
//!
//! With `p = -y w` and `u = H_gamma(p)` the reduced optimality system is
//!
//! ```text
//! r1 = -Delta_h w + u w + y - z = 0
//! r2 = -Delta_h y + u y - f     = 0
//! ```
//!
//! The mirror-closed Laplacian is not a symmetric matrix, but it is
//! self-adjoint in the trapezoid inner product. [`PotentialProblem::newton_system`]
//! therefore returns the Jacobian premultiplied by the trapezoid weights `W`,
//! which is exactly symmetric; Newton steps solve `W J d = -W r`.

use crate::error::Result;
use crate::fdgrid::{
    neumann_apply, neumann_laplacian_weighted, solve_neumann_helmholtz, trapezoid_weights, Grid2D,
    ScalarField, SparseOperator, Factorization,
};
use crate::multibang::MultibangConfig;
use crate::ssn::{IterateDiagnostics, SsnProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use crate::ssn::{NewtonIterate, Residual};

#[derive(Debug, Clone)]
pub struct PotentialProblem {
    grid: Grid2D,
    f: ScalarField,
    z: ScalarField,
    cfg: MultibangConfig,
    laplacian: SparseOperator,
    weights: Vec<f64>,
}

impl PotentialProblem {
    pub fn new(f: ScalarField, z: ScalarField, cfg: MultibangConfig) -> Result<Self> {
        f.same_grid(&z)?;
        cfg.validate()?;
        let grid = *f.grid();
        Ok(Self {
            laplacian: neumann_laplacian_weighted(&grid),
            weights: trapezoid_weights(&grid),
            grid,
            f,
            z,
            cfg,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn source(&self) -> &ScalarField {
        &self.f
    }

    pub fn target(&self) -> &ScalarField {
        &self.z
    }

    pub fn config(&self) -> &MultibangConfig {
        &self.cfg
    }

    /// Trapezoid weights used to symmetrize the Newton matrix.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `p = -y w` and `u = H_gamma(p)`.
    pub fn recover_control(&self, it: &NewtonIterate) -> Result<(ScalarField, ScalarField)> {
        it.y.same_grid(&self.f)?;
        let p = it.y.zip_map(&it.w, |y, w| -y * w)?;
        let u = self.cfg.bands(it.gamma).apply_prox_field(&p);
        Ok((u, p))
    }

    pub fn residual(&self, it: &NewtonIterate) -> Result<Residual> {
        let (u, _) = self.recover_control(it)?;
        let r1 = neumann_apply(Some(&u), &it.w)?
            .axpy(1.0, &it.y)?
            .axpy(-1.0, &self.z)?;
        let r2 = neumann_apply(Some(&u), &it.y)?.axpy(-1.0, &self.f)?;
        Residual::new(r1, r2)
    }

    /// `W J` for unknowns `(dy, dw)` and residual rows `(r1, r2)`:
    ///
    /// ```text
    /// [ W (1 - chi w^2/gamma)        K + W (u - chi y w/gamma) ]
    /// [ K + W (u - chi y w/gamma)    -W chi y^2/gamma          ]
    /// ```
    ///
    /// with `K = W (-Delta_h)` and `chi` the indicator of the transition bands
    /// at `p = -y w`.
    pub fn newton_system(&self, it: &NewtonIterate) -> Result<SparseOperator> {
        let (u, p) = self.recover_control(it)?;
        let bands = self.cfg.bands(it.gamma);
        let (y, w) = (it.y.data(), it.w.data());
        let len = self.grid.len();
        let mut d11 = Vec::with_capacity(len);
        let mut d12 = Vec::with_capacity(len);
        let mut d22 = Vec::with_capacity(len);
        for k in 0..len {
            let dh = bands.prox_newton_deriv(p.data()[k]);
            let wk = self.weights[k];
            d11.push(wk * (1.0 - dh * w[k] * w[k]));
            d12.push(wk * (u.data()[k] - dh * y[k] * w[k]));
            d22.push(-wk * dh * y[k] * y[k]);
        }
        let b = self
            .laplacian
            .lincomb(1.0, &SparseOperator::diagonal(&d12), 1.0);
        SparseOperator::block2x2(
            &SparseOperator::diagonal(&d11),
            &b,
            &b,
            &SparseOperator::diagonal(&d22),
        )
        .assert_symmetric(0.0)
    }

    /// Strong-form Jacobian applied to `(dy, dw)`, stacked.
    pub fn jacobian_apply(&self, it: &NewtonIterate, v: &[f64]) -> Result<Vec<f64>> {
        let mut jv = self.newton_system(it)?.matvec(v);
        let len = self.grid.len();
        for (k, x) in jv.iter_mut().enumerate() {
            *x /= self.weights[k % len];
        }
        Ok(jv)
    }

    /// Solves `W J d = -W r`.
    pub fn newton_step(&self, it: &NewtonIterate, r: &Residual) -> Result<Vec<f64>> {
        let len = self.grid.len();
        let rhs: Vec<f64> = r
            .stacked()
            .iter()
            .enumerate()
            .map(|(k, v)| -self.weights[k % len] * v)
            .collect();
        Factorization::new(&self.newton_system(it)?)?.solve(&rhs)
    }

    /// Solution operator `S(u)` of the state equation.
    pub fn solve_state(&self, u: &ScalarField) -> Result<ScalarField> {
        solve_neumann_helmholtz(u, &self.f)
    }

    /// Compares the adjoint gradient `y w` of `J(u) = 1/2 |S(u) - z|^2`
    /// against central differences along ten random directions.
    ///
    /// Norms and pairings use the trapezoid rule, for which the discrete
    /// adjoint is exact. Returns `|a - b| / max(|a|, |b|)` over the vector of
    /// directional derivatives, or the absolute difference when both are
    /// below `1e-9`.
    pub fn tracking_gradient_check(&self, u: &ScalarField, seed: u64) -> Result<f64> {
        let h2 = self.grid.h() * self.grid.h();
        let weighted = |a: &ScalarField, b: &ScalarField| -> f64 {
            h2 * a
                .data()
                .iter()
                .zip(b.data())
                .zip(&self.weights)
                .map(|((x, y), w)| w * x * y)
                .sum::<f64>()
        };
        let objective = |u: &ScalarField| -> Result<f64> {
            let d = self.solve_state(u)?.axpy(-1.0, &self.z)?;
            Ok(0.5 * weighted(&d, &d))
        };
        let y = self.solve_state(u)?;
        let w = solve_neumann_helmholtz(u, &self.z.axpy(-1.0, &y)?)?;
        let grad = y.zip_map(&w, |a, b| a * b)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = 1e-4 * u.min().abs().max(1e-3);
        let (mut diff2, mut a2, mut b2) = (0.0, 0.0, 0.0);
        for _ in 0..10 {
            let dir = ScalarField::from_fn(self.grid, |_, _| rng.gen_range(-1.0..1.0));
            let a = weighted(&grad, &dir);
            let b = (objective(&u.axpy(eps, &dir)?)? - objective(&u.axpy(-eps, &dir)?)?)
                / (2.0 * eps);
            diff2 += (a - b) * (a - b);
            a2 += a * a;
            b2 += b * b;
        }
        let denom = a2.sqrt().max(b2.sqrt());
        Ok(if denom > 1e-9 {
            diff2.sqrt() / denom
        } else {
            diff2.sqrt()
        })
    }

    pub fn diagnostics(&self, it: &NewtonIterate) -> Result<IterateDiagnostics> {
        let (_, p) = self.recover_control(it)?;
        Ok(IterateDiagnostics::new(&it.w, &p, &self.cfg.bands(it.gamma)))
    }
}

impl SsnProblem for PotentialProblem {
    fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn config(&self) -> &MultibangConfig {
        &self.cfg
    }

    fn residual(&self, it: &NewtonIterate) -> Result<Residual> {
        PotentialProblem::residual(self, it)
    }

    fn newton_step(&self, it: &NewtonIterate, r: &Residual) -> Result<Vec<f64>> {
        PotentialProblem::newton_step(self, it, r)
    }

    fn control(&self, it: &NewtonIterate) -> Result<ScalarField> {
        Ok(self.recover_control(it)?.0)
    }

    fn diagnostics(&self, it: &NewtonIterate) -> Result<IterateDiagnostics> {
        PotentialProblem::diagnostics(self, it)
    }
}
