use super::{Factorization, Grid2D, ScalarField, SparseOperator};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const SYMMETRY_TOL: f64 = 1e-12;

/// 1-D trapezoid weight of node `i` on an axis with `n` nodes.
fn axis_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i == n - 1 {
        0.5
    } else {
        1.0
    }
}

/// Tensor trapezoid weights: 1 inside, 1/2 on edges, 1/4 at corners.
///
/// The mirror-closed Neumann Laplacian `L` is self-adjoint with respect to
/// `diag(W)`, so `W L` is a symmetric matrix.
pub fn trapezoid_weights(grid: &Grid2D) -> Vec<f64> {
    let n = grid.n();
    (0..grid.len())
        .map(|k| {
            let (i1, i2) = grid.node(k);
            axis_weight(i1, n) * axis_weight(i2, n)
        })
        .collect()
}

/// `W (-Delta_h)` with mirror ghost points, assembled symmetric.
pub fn neumann_laplacian_weighted(grid: &Grid2D) -> SparseOperator {
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut t = Vec::with_capacity(5 * grid.len());
    for k in 0..grid.len() {
        let (i1, i2) = grid.node(k);
        // x1-faces carry the transverse weight of i2, and vice versa
        let wx = axis_weight(i2, n) * inv_h2;
        let wy = axis_weight(i1, n) * inv_h2;
        for (nb, w) in [
            ((i1 > 0).then(|| k - 1), wx),
            ((i1 + 1 < n).then(|| k + 1), wx),
            ((i2 > 0).then(|| k - n), wy),
            ((i2 + 1 < n).then(|| k + n), wy),
        ] {
            if let Some(l) = nb {
                t.push((k, k, w));
                t.push((k, l, -w));
            }
        }
    }
    SparseOperator::from_triplets(grid.len(), grid.len(), &t)
        .assert_symmetric(SYMMETRY_TOL)
        .expect("Neumann stencil is symmetric")
}

fn check_positive(u: &ScalarField) -> Result<()> {
    let min = u.min();
    if !(min > 0.0) {
        return Err(Error::NonPositiveCoefficient(min));
    }
    Ok(())
}

/// Symmetric form `W (-Delta_h + diag(u))` of the Neumann Helmholtz operator.
/// The strong-form equation `(-Delta_h + u) y = f` reads `A y = W f`.
pub fn assemble_neumann_helmholtz(u: &ScalarField) -> Result<SparseOperator> {
    check_positive(u)?;
    let grid = u.grid();
    let w = trapezoid_weights(grid);
    let mass: Vec<f64> = w.iter().zip(u.data()).map(|(a, b)| a * b).collect();
    neumann_laplacian_weighted(grid)
        .lincomb(1.0, &SparseOperator::diagonal(&mass), 1.0)
        .assert_symmetric(SYMMETRY_TOL)
}

/// Strong form `(-Delta_h + u) y` with the mirror closure; `u = None` gives
/// the bare Laplacian.
pub fn neumann_apply(u: Option<&ScalarField>, y: &ScalarField) -> Result<ScalarField> {
    if let Some(u) = u {
        u.same_grid(y)?;
    }
    let grid = *y.grid();
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let v = y.data();
    let second = |c: f64, lo: Option<f64>, hi: Option<f64>| match (lo, hi) {
        (Some(a), Some(b)) => 2.0 * c - a - b,
        (None, Some(b)) => 2.0 * (c - b),
        (Some(a), None) => 2.0 * (c - a),
        (None, None) => unreachable!("n >= 3"),
    };
    let data = (0..grid.len())
        .map(|k| {
            let (i1, i2) = grid.node(k);
            let dx = second(
                v[k],
                (i1 > 0).then(|| v[k - 1]),
                (i1 + 1 < n).then(|| v[k + 1]),
            );
            let dy = second(
                v[k],
                (i2 > 0).then(|| v[k - n]),
                (i2 + 1 < n).then(|| v[k + n]),
            );
            let mut r = (dx + dy) * inv_h2;
            if let Some(u) = u {
                r += u.data()[k] * v[k];
            }
            r
        })
        .collect();
    ScalarField::new(grid, data)
}

/// Solves `-Delta_h y + u y = f` with homogeneous Neumann data.
pub fn solve_neumann_helmholtz(u: &ScalarField, f: &ScalarField) -> Result<ScalarField> {
    u.same_grid(f)?;
    let a = assemble_neumann_helmholtz(u)?;
    let w = trapezoid_weights(u.grid());
    let rhs: Vec<f64> = w.iter().zip(f.data()).map(|(a, b)| a * b).collect();
    let y = Factorization::new(&a)?.solve(&rhs)?;
    ScalarField::new(*u.grid(), y)
}

/// Horizontal and vertical faces `(k, l)`, each listed once.
fn faces(grid: &Grid2D) -> impl Iterator<Item = (usize, usize)> + '_ {
    let n = grid.n();
    (0..grid.len()).flat_map(move |k| {
        let (i1, i2) = grid.node(k);
        [
            (i1 + 1 < n).then(|| (k, k + 1)),
            (i2 + 1 < n).then(|| (k, k + n)),
        ]
        .into_iter()
        .flatten()
    })
}

/// Map from full node index to interior unknown index.
fn interior_map(grid: &Grid2D) -> Vec<Option<usize>> {
    let mut map = vec![None; grid.len()];
    for (j, k) in grid.interior().into_iter().enumerate() {
        map[k] = Some(j);
    }
    map
}

/// `-div(a grad .)` with arithmetic face averages and homogeneous Dirichlet
/// data, acting on interior unknowns (boundary nodes eliminated).
pub fn assemble_dirichlet_diffusion(a: &ScalarField) -> Result<SparseOperator> {
    check_positive(a)?;
    let grid = a.grid();
    let map = interior_map(grid);
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let av = a.data();
    let mut t = Vec::with_capacity(5 * grid.len());
    for (k, l) in faces(grid) {
        let c = 0.5 * (av[k] + av[l]) * inv_h2;
        match (map[k], map[l]) {
            (Some(i), Some(j)) => {
                t.extend([(i, i, c), (j, j, c), (i, j, -c), (j, i, -c)]);
            }
            (Some(i), None) => t.push((i, i, c)),
            (None, Some(j)) => t.push((j, j, c)),
            (None, None) => {}
        }
    }
    let m = grid.interior().len();
    SparseOperator::from_triplets(m, m, &t).assert_symmetric(SYMMETRY_TOL)
}

/// `-div(a grad y)` at interior nodes (boundary values of `y` are used as
/// given); boundary entries of the result are zero.
pub fn dirichlet_apply(a: &ScalarField, y: &ScalarField) -> Result<ScalarField> {
    a.same_grid(y)?;
    let grid = *a.grid();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let (av, yv) = (a.data(), y.data());
    let mut out = vec![0.0; grid.len()];
    for (k, l) in faces(&grid) {
        let flux = 0.5 * (av[k] + av[l]) * (yv[k] - yv[l]) * inv_h2;
        out[k] += flux;
        out[l] -= flux;
    }
    for (k, v) in out.iter_mut().enumerate() {
        if grid.is_boundary(k) {
            *v = 0.0;
        }
    }
    ScalarField::new(grid, out)
}

/// Solves `-div(a grad y) = f`, `y = 0` on the boundary.
pub fn solve_dirichlet_diffusion(a: &ScalarField, f: &ScalarField) -> Result<ScalarField> {
    a.same_grid(f)?;
    let grid = *a.grid();
    let op = assemble_dirichlet_diffusion(a)?;
    let interior = grid.interior();
    let rhs: Vec<f64> = interior.iter().map(|&k| f.data()[k]).collect();
    let x = Factorization::new(&op)?.solve(&rhs)?;
    let mut y = vec![0.0; grid.len()];
    for (j, &k) in interior.iter().enumerate() {
        y[k] = x[j];
    }
    ScalarField::new(grid, y)
}

/// Nodal pairing `Pi(y, w)_k = 1/(2h^2) sum_{faces (k,l)} (y_k - y_l)(w_k - w_l)`,
/// the discrete `grad y . grad w` that is adjoint to the coefficient of the
/// diffusion operator: `<A(a) y, w> = <a, Pi(y, w)>` whenever `y`, `w` vanish
/// on the boundary.
pub fn flux_pairing(y: &ScalarField, w: &ScalarField) -> Result<ScalarField> {
    y.same_grid(w)?;
    let grid = *y.grid();
    let scale = 0.5 / (grid.h() * grid.h());
    let (yv, wv) = (y.data(), w.data());
    let mut out = vec![0.0; grid.len()];
    for (k, l) in faces(&grid) {
        let prod = scale * (yv[k] - yv[l]) * (wv[k] - wv[l]);
        out[k] += prod;
        out[l] += prod;
    }
    ScalarField::new(grid, out)
}

/// Matrix of `delta -> Pi(v, delta)` for `delta` supported on interior nodes
/// (`n^2 x n_interior`).
pub fn pairing_matrix(v: &ScalarField) -> SparseOperator {
    let grid = *v.grid();
    let map = interior_map(&grid);
    let scale = 0.5 / (grid.h() * grid.h());
    let vv = v.data();
    let mut t = Vec::with_capacity(8 * grid.len());
    for (k, l) in faces(&grid) {
        let dv = scale * (vv[k] - vv[l]);
        // Pi_k and Pi_l both gain dv * (delta_k - delta_l)
        for node in [k, l] {
            if let Some(j) = map[k] {
                t.push((node, j, dv));
            }
            if let Some(j) = map[l] {
                t.push((node, j, -dv));
            }
        }
    }
    SparseOperator::from_triplets(grid.len(), grid.interior().len(), &t)
}

/// Matrix of `c -> (A(c) v)` restricted to interior rows (`n_interior x n^2`),
/// i.e. the derivative of the diffusion operator with respect to its
/// coefficient. Equals the transpose of [`pairing_matrix`].
pub fn coefficient_derivative(v: &ScalarField) -> SparseOperator {
    let grid = *v.grid();
    let map = interior_map(&grid);
    let scale = 0.5 / (grid.h() * grid.h());
    let vv = v.data();
    let mut t = Vec::with_capacity(8 * grid.len());
    for (k, l) in faces(&grid) {
        let dv = scale * (vv[k] - vv[l]);
        // face coefficient (c_k + c_l)/2 multiplies +dv in row k, -dv in row l
        if let Some(i) = map[k] {
            t.push((i, k, dv));
            t.push((i, l, dv));
        }
        if let Some(i) = map[l] {
            t.push((i, k, -dv));
            t.push((i, l, -dv));
        }
    }
    SparseOperator::from_triplets(grid.interior().len(), grid.len(), &t)
}

/// Nodal gradient: centered differences inside, second-order one-sided
/// differences on the boundary.
pub fn gradient_centered(f: &ScalarField) -> (ScalarField, ScalarField) {
    let grid = *f.grid();
    let n = grid.n();
    let inv_2h = 0.5 / grid.h();
    let v = f.data();
    let diff = |k: usize, i: usize, stride: usize| {
        if i == 0 {
            (-3.0 * v[k] + 4.0 * v[k + stride] - v[k + 2 * stride]) * inv_2h
        } else if i == n - 1 {
            (3.0 * v[k] - 4.0 * v[k - stride] + v[k - 2 * stride]) * inv_2h
        } else {
            (v[k + stride] - v[k - stride]) * inv_2h
        }
    };
    let mut g1 = vec![0.0; grid.len()];
    let mut g2 = vec![0.0; grid.len()];
    for k in 0..grid.len() {
        let (i1, i2) = grid.node(k);
        g1[k] = diff(k, i1, 1);
        g2[k] = diff(k, i2, n);
    }
    (
        ScalarField::new(grid, g1).expect("same grid"),
        ScalarField::new(grid, g2).expect("same grid"),
    )
}

/// Closure of the five-point average at the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothingKind {
    /// Average over the in-domain part of the stencil, weights renormalized.
    Renormalized,
    /// Fixed weights 1/5; missing neighbours take the given value.
    ExtendBy(f64),
}

/// Five-point local averaging `G` (affine for [`SmoothingKind::ExtendBy`])
/// and its adjoint `G^*`, the transpose of the linear part.
#[derive(Debug, Clone)]
pub struct Smoothing {
    kind: SmoothingKind,
    matrix: SparseOperator,
    adjoint: SparseOperator,
    offset: Vec<f64>,
}

impl Smoothing {
    pub fn new(grid: &Grid2D, kind: SmoothingKind) -> Self {
        let mut t = Vec::with_capacity(5 * grid.len());
        let mut offset = vec![0.0; grid.len()];
        for k in 0..grid.len() {
            let nbs: Vec<usize> = grid.neighbours(k).collect();
            match kind {
                SmoothingKind::Renormalized => {
                    let w = 1.0 / (nbs.len() + 1) as f64;
                    t.push((k, k, w));
                    t.extend(nbs.iter().map(|&l| (k, l, w)));
                }
                SmoothingKind::ExtendBy(value) => {
                    t.push((k, k, 0.2));
                    t.extend(nbs.iter().map(|&l| (k, l, 0.2)));
                    offset[k] = 0.2 * (4 - nbs.len()) as f64 * value;
                }
            }
        }
        let matrix = SparseOperator::from_triplets(grid.len(), grid.len(), &t);
        let adjoint = matrix.transpose();
        Self {
            kind,
            matrix,
            adjoint,
            offset,
        }
    }

    pub fn kind(&self) -> SmoothingKind {
        self.kind
    }

    /// The linear part of `G`.
    pub fn matrix(&self) -> &SparseOperator {
        &self.matrix
    }

    pub fn adjoint_matrix(&self) -> &SparseOperator {
        &self.adjoint
    }

    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        let mut v = self.matrix.matvec(u.data());
        for (vi, oi) in v.iter_mut().zip(&self.offset) {
            *vi += oi;
        }
        ScalarField::new(*u.grid(), v).expect("same grid")
    }

    pub fn adjoint(&self, v: &ScalarField) -> ScalarField {
        ScalarField::new(*v.grid(), self.adjoint.matvec(v.data())).expect("same grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: Grid2D, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField::from_fn(grid, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn zero_boundary(mut f: ScalarField) -> ScalarField {
        let grid = *f.grid();
        for (k, v) in f.data_mut().iter_mut().enumerate() {
            if grid.is_boundary(k) {
                *v = 0.0;
            }
        }
        f
    }

    #[test]
    fn trapezoid_weights_integrate_area() {
        let g = Grid2D::new(9).unwrap();
        let total: f64 = trapezoid_weights(&g).iter().sum::<f64>() * g.h() * g.h();
        assert!((total - 4.0).abs() < 1e-14);
    }

    #[test]
    fn neumann_constants() {
        let g = Grid2D::new(17).unwrap();
        let one = ScalarField::constant(g, 1.0);
        let y = solve_neumann_helmholtz(&one, &one).unwrap();
        assert!(y.data().iter().all(|v| (v - 1.0).abs() < 1e-13));
        let r = neumann_apply(None, &one).unwrap();
        assert!(r.max_abs() == 0.0);
    }

    #[test]
    fn neumann_symmetric_form_matches_strong_form() {
        let g = Grid2D::new(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = ScalarField::from_fn(g, |_, _| rng.gen_range(1.0..2.0));
        let y = random_field(g, &mut rng);
        let a = assemble_neumann_helmholtz(&u).unwrap();
        let strong = neumann_apply(Some(&u), &y).unwrap();
        let w = trapezoid_weights(&g);
        let weak = a.matvec(y.data());
        for k in 0..g.len() {
            assert!((weak[k] - w[k] * strong.data()[k]).abs() < 1e-10 * (1.0 + weak[k].abs()));
        }
    }

    #[test]
    fn elliptic_operators_symmetric_and_positive() {
        let g = Grid2D::new(12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = ScalarField::from_fn(g, |_, _| rng.gen_range(0.5..3.0));
        for a in [
            assemble_neumann_helmholtz(&u).unwrap(),
            assemble_dirichlet_diffusion(&u).unwrap(),
        ] {
            assert!(a.claims_symmetry());
            assert_eq!(a.max_asymmetry(), 0.0);
            for _ in 0..20 {
                let x: Vec<f64> = (0..a.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let ax = a.matvec(&x);
                let rq: f64 = x.iter().zip(&ax).map(|(p, q)| p * q).sum();
                assert!(rq > 0.0);
            }
        }
    }

    #[test]
    fn nonpositive_coefficient_rejected() {
        let g = Grid2D::new(5).unwrap();
        let mut u = ScalarField::constant(g, 1.0);
        u.data_mut()[3] = 0.0;
        assert!(matches!(assemble_neumann_helmholtz(&u), Err(Error::NonPositiveCoefficient(_))));
        assert!(matches!(assemble_dirichlet_diffusion(&u), Err(Error::NonPositiveCoefficient(_))));
    }

    #[test]
    fn dirichlet_scales_linearly() {
        let g = Grid2D::new(10).unwrap();
        let one = assemble_dirichlet_diffusion(&ScalarField::constant(g, 1.0)).unwrap();
        let three = assemble_dirichlet_diffusion(&ScalarField::constant(g, 3.0)).unwrap();
        let scaled = one.scaled(Some(&vec![3.0; one.nrows()]), None);
        assert_eq!(scaled.to_dense(), three.to_dense());
    }

    #[test]
    fn dirichlet_exact_on_biquadratic() {
        // the 5-point stencil is exact on polynomials of degree 2 per variable
        let g = Grid2D::new(33).unwrap();
        let exact = ScalarField::from_fn(g, |x1, x2| (1.0 - x1 * x1) * (1.0 - x2 * x2));
        let f = ScalarField::from_fn(g, |x1, x2| 2.0 * (2.0 - x1 * x1 - x2 * x2));
        let y = solve_dirichlet_diffusion(&ScalarField::constant(g, 1.0), &f).unwrap();
        assert!(y.axpy(-1.0, &exact).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn dirichlet_apply_matches_assembly() {
        let g = Grid2D::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ScalarField::from_fn(g, |_, _| rng.gen_range(1.0..2.0));
        let y = zero_boundary(random_field(g, &mut rng));
        let op = assemble_dirichlet_diffusion(&a).unwrap();
        let interior = g.interior();
        let yi: Vec<f64> = interior.iter().map(|&k| y.data()[k]).collect();
        let ay = op.matvec(&yi);
        let full = dirichlet_apply(&a, &y).unwrap();
        for (j, &k) in interior.iter().enumerate() {
            assert!((ay[j] - full.data()[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn pairing_is_adjoint_of_coefficient_map() {
        let g = Grid2D::new(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = zero_boundary(random_field(g, &mut rng));
        let w = zero_boundary(random_field(g, &mut rng));
        let c = ScalarField::from_fn(g, |_, _| rng.gen_range(1.0..2.0));
        let lhs = dirichlet_apply(&c, &y).unwrap().l2_inner(&w).unwrap();
        let rhs = c.l2_inner(&flux_pairing(&y, &w).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());

        let p = pairing_matrix(&y);
        let d = coefficient_derivative(&y);
        assert_eq!(p.transpose(), d);

        let interior = g.interior();
        let wi: Vec<f64> = interior.iter().map(|&k| w.data()[k]).collect();
        let pw = p.matvec(&wi);
        let direct = flux_pairing(&y, &w).unwrap();
        for k in 0..g.len() {
            assert!((pw[k] - direct.data()[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_exactness() {
        let g = Grid2D::new(11).unwrap();
        let (g1, g2) = gradient_centered(&ScalarField::from_fn(g, |x1, _| x1));
        assert!(g1.data().iter().all(|v| (v - 1.0).abs() < 1e-13));
        assert!(g2.max_abs() < 1e-13);
        let (g1, _) = gradient_centered(&ScalarField::from_fn(g, |x1, _| x1 * x1));
        for k in 0..g.len() {
            let (x1, _) = g.point(k);
            assert!((g1.data()[k] - 2.0 * x1).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_second_order() {
        let err = |n: usize| {
            let g = Grid2D::new(n).unwrap();
            let (g1, _) = gradient_centered(&ScalarField::from_fn(g, |x1, _| (PI * x1).sin()));
            let exact = ScalarField::from_fn(g, |x1, _| PI * (PI * x1).cos());
            g1.axpy(-1.0, &exact).unwrap().l2_norm()
        };
        let ratio = err(64) / err(128);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn smoothing_properties() {
        let g = Grid2D::new(7).unwrap();
        let s = Smoothing::new(&g, SmoothingKind::Renormalized);
        let c = ScalarField::constant(g, 2.25);
        assert!(s.apply(&c).data().iter().all(|&v| v == 2.25 || (v - 2.25).abs() < 1e-15));
        for i in 0..g.len() {
            let sum: f64 = s.matrix().row(i).map(|(_, v)| v).sum();
            assert!((sum - 1.0).abs() < 1e-15);
            assert!(s.matrix().row(i).all(|(_, v)| v >= 0.0));
        }
        let mut spike = ScalarField::zeros(g);
        let k = g.index(3, 3);
        spike.data_mut()[k] = 1.0;
        let out = s.apply(&spike);
        for l in [k, k - 1, k + 1, k - 7, k + 7] {
            assert!((out.data()[l] - 0.2).abs() < 1e-15);
        }
        assert!((out.data().iter().sum::<f64>() - 1.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [SmoothingKind::Renormalized, SmoothingKind::ExtendBy(1.5)] {
            let s = Smoothing::new(&g, kind);
            let u = ScalarField::from_fn(g, |_, _| rng.gen_range(1.5..2.5));
            let v = random_field(g, &mut rng);
            let gu = s.apply(&u);
            assert!(gu.min() >= 1.5 - 1e-15 && gu.max() <= 2.5 + 1e-15);
            // adjointness of the linear part
            let lin = ScalarField::new(g, s.matrix().matvec(u.data())).unwrap();
            let lhs = lin.l2_inner(&v).unwrap();
            let rhs = u.l2_inner(&s.adjoint(&v)).unwrap();
            assert!((lhs - rhs).abs() <= 1e-14 * lhs.abs().max(1.0));
        }
    }
}
