//! Diffusion-coefficient problem: recover `u` in `-div(G u grad y) = f`
//! (homogeneous Dirichlet data), where `G` is the five-point local average.
//!
//! With `p = -G^* Pi(y, w)` and `u = H_gamma(p)` the reduced system is
//!
//! ```text
//! r1 = A(G u) w + y - z = 0
//! r2 = A(G u) y - f     = 0
//! ```
//!
//! at interior nodes, and `r1 = w`, `r2 = y` on the boundary. `Pi` is the
//! face-based pairing of [`flux_pairing`], the exact adjoint of the
//! coefficient-to-operator map `a -> A(a) v`, so the Jacobian below is the
//! exact derivative of the discrete residual and is symmetric.

use crate::error::{Error, Result};
use crate::fdgrid::{
    assemble_dirichlet_diffusion, coefficient_derivative, dirichlet_apply, flux_pairing,
    pairing_matrix, Factorization, Grid2D, ScalarField, Smoothing, SmoothingKind, SparseOperator,
};
use crate::multibang::MultibangConfig;
use crate::ssn::{IterateDiagnostics, NewtonIterate, Residual, SsnProblem};

#[derive(Debug, Clone)]
pub struct DiffusionProblem {
    grid: Grid2D,
    f: ScalarField,
    z: ScalarField,
    cfg: MultibangConfig,
    smoothing: Smoothing,
    interior: Vec<usize>,
}

/// Control, smoothed coefficient and prox argument at an iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionControl {
    pub u: ScalarField,
    pub gu: ScalarField,
    pub p: ScalarField,
}

impl DiffusionProblem {
    pub fn new(
        f: ScalarField,
        z: ScalarField,
        cfg: MultibangConfig,
        smoothing: SmoothingKind,
    ) -> Result<Self> {
        f.same_grid(&z)?;
        cfg.validate()?;
        if !(cfg.lower() > 0.0) {
            return Err(Error::NonPositiveCoefficient(cfg.lower()));
        }
        let grid = *f.grid();
        let smoothing = Smoothing::new(&grid, smoothing);
        Ok(Self {
            interior: grid.interior(),
            grid,
            f,
            z,
            cfg,
            smoothing,
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

    pub fn smoothing(&self) -> &Smoothing {
        &self.smoothing
    }

    /// `p = -G^* Pi(y, w)`, `u = H_gamma(p)`, `G u`.
    pub fn recover_control(&self, it: &NewtonIterate) -> Result<DiffusionControl> {
        it.y.same_grid(&self.f)?;
        let pairing = flux_pairing(&it.y, &it.w)?;
        let p = self.smoothing.adjoint(&pairing).map(|v| -v);
        let u = self.cfg.bands(it.gamma).apply_prox_field(&p);
        let gu = self.smoothing.apply(&u);
        Ok(DiffusionControl { u, gu, p })
    }

    pub fn residual(&self, it: &NewtonIterate) -> Result<Residual> {
        let ctl = self.recover_control(it)?;
        let mut r1 = dirichlet_apply(&ctl.gu, &it.w)?
            .axpy(1.0, &it.y)?
            .axpy(-1.0, &self.z)?;
        let mut r2 = dirichlet_apply(&ctl.gu, &it.y)?.axpy(-1.0, &self.f)?;
        for k in 0..self.grid.len() {
            if self.grid.is_boundary(k) {
                r1.data_mut()[k] = it.w.data()[k];
                r2.data_mut()[k] = it.y.data()[k];
            }
        }
        Residual::new(r1, r2)
    }

    fn chi_over_gamma(&self, it: &NewtonIterate, p: &ScalarField) -> Vec<f64> {
        let bands = self.cfg.bands(it.gamma);
        p.data().iter().map(|&v| bands.prox_newton_deriv(v)).collect()
    }

    /// `D G^* P_v`: `delta -> (chi/gamma) G^* Pi(v, delta)` on interior `delta`.
    fn inner_factor(&self, v: &ScalarField, dh: &[f64]) -> SparseOperator {
        // scaling first leaves only the rows of nodes in transition bands
        self.smoothing
            .adjoint_matrix()
            .scaled(Some(dh), None)
            .matmul(&pairing_matrix(v))
    }

    /// `C_v G`: `c -> A(G c) v` restricted to interior rows, linear part of `G`.
    fn outer_factor(&self, v: &ScalarField) -> SparseOperator {
        coefficient_derivative(v).matmul(self.smoothing.matrix())
    }

    /// The trilinear term `delta -> A(v1, delta, v3)` on interior unknowns:
    /// `-C_{v3} G diag(chi/gamma) G^* P_{v1} delta`, i.e. minus the
    /// derivative of `A(G H_gamma(-G^* Pi(v1, .))) v3`'s coefficient path,
    /// with `chi` taken at the iterate.
    pub fn trilinear_a(
        &self,
        it: &NewtonIterate,
        v1: &ScalarField,
        v3: &ScalarField,
    ) -> Result<SparseOperator> {
        v1.same_grid(v3)?;
        let ctl = self.recover_control(it)?;
        let dh = self.chi_over_gamma(it, &ctl.p);
        let t = self.outer_factor(v3).matmul(&self.inner_factor(v1, &dh));
        Ok(t.scale(-1.0))
    }

    /// Jacobian on interior unknowns `(dy, dw)`:
    ///
    /// ```text
    /// [ I + A(w,.,w)       A(G u) + A(y,.,w) ]
    /// [ A(G u) + A(w,.,y)  A(y,.,y)          ]
    /// ```
    ///
    /// Boundary unknowns are eliminated. The off-diagonal blocks are
    /// transposes of each other, so the (2,1) block is stored as the
    /// transpose of the (1,2) block and the diagonal blocks are symmetrized.
    pub fn newton_system(&self, it: &NewtonIterate) -> Result<SparseOperator> {
        let ctl = self.recover_control(it)?;
        let dh = self.chi_over_gamma(it, &ctl.p);
        let a = assemble_dirichlet_diffusion(&ctl.gu)?;
        let m = a.nrows();
        let (inner_y, inner_w) = (self.inner_factor(&it.y, &dh), self.inner_factor(&it.w, &dh));
        let (outer_y, outer_w) = (self.outer_factor(&it.y), self.outer_factor(&it.w));
        let sym = |t: SparseOperator| {
            let tt = t.transpose();
            t.lincomb(0.5, &tt, 0.5)
        };
        let t_ww = sym(outer_w.matmul(&inner_w));
        let t_yy = sym(outer_y.matmul(&inner_y));
        let t_yw = outer_w.matmul(&inner_y);
        let b11 = SparseOperator::identity(m).lincomb(1.0, &t_ww, -1.0);
        let b12 = a.lincomb(1.0, &t_yw, -1.0);
        let b21 = b12.transpose();
        let b22 = t_yy.scale(-1.0);
        SparseOperator::block2x2(&b11, &b12, &b21, &b22).assert_symmetric(1e-12)
    }

    /// Jacobian applied to a stacked full-grid direction, with boundary rows
    /// as identity. Matches the derivative of [`Self::residual`] when the
    /// iterate vanishes on the boundary.
    pub fn jacobian_apply(&self, it: &NewtonIterate, v: &[f64]) -> Result<Vec<f64>> {
        let len = self.grid.len();
        let m = self.interior.len();
        let j = self.newton_system(it)?;
        let mut vi = Vec::with_capacity(2 * m);
        for block in 0..2 {
            vi.extend(self.interior.iter().map(|&k| v[block * len + k]));
        }
        let jv = j.matvec(&vi);
        let mut out = v.to_vec();
        for block in 0..2 {
            for (j_idx, &k) in self.interior.iter().enumerate() {
                out[block * len + k] = jv[block * m + j_idx];
            }
        }
        Ok(out)
    }

    /// Solves the interior Newton system; boundary components of the step
    /// cancel the boundary residual.
    pub fn newton_step(&self, it: &NewtonIterate, r: &Residual) -> Result<Vec<f64>> {
        let len = self.grid.len();
        let m = self.interior.len();
        let rs = r.stacked();
        let mut rhs = Vec::with_capacity(2 * m);
        for block in 0..2 {
            rhs.extend(self.interior.iter().map(|&k| -rs[block * len + k]));
        }
        let x = Factorization::new(&self.newton_system(it)?)?.solve(&rhs)?;
        let mut delta: Vec<f64> = rs.iter().map(|v| -v).collect();
        for block in 0..2 {
            for (j, &k) in self.interior.iter().enumerate() {
                delta[block * len + k] = x[block * m + j];
            }
        }
        Ok(delta)
    }

    pub fn diagnostics(&self, it: &NewtonIterate) -> Result<IterateDiagnostics> {
        let ctl = self.recover_control(it)?;
        Ok(IterateDiagnostics::new(&it.w, &ctl.p, &self.cfg.bands(it.gamma)))
    }
}

impl SsnProblem for DiffusionProblem {
    fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn config(&self) -> &MultibangConfig {
        &self.cfg
    }

    fn residual(&self, it: &NewtonIterate) -> Result<Residual> {
        DiffusionProblem::residual(self, it)
    }

    fn newton_step(&self, it: &NewtonIterate, r: &Residual) -> Result<Vec<f64>> {
        DiffusionProblem::newton_step(self, it, r)
    }

    fn control(&self, it: &NewtonIterate) -> Result<ScalarField> {
        Ok(self.recover_control(it)?.u)
    }

    fn diagnostics(&self, it: &NewtonIterate) -> Result<IterateDiagnostics> {
        DiffusionProblem::diagnostics(self, it)
    }
}
