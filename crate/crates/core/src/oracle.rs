//! Brute-force reference computations.
//!
//! None of these routines use the closed-form bands or envelope formulas:
//! the envelope is rebuilt as the lower convex hull of sampled `g0` values,
//! and maximizers are located by scanning plus refinement, relying only on
//! concavity of the objective. They are slow and exist to certify the
//! closed forms (unit tests, the acceptance suite and `oracle-check`).

use crate::multibang::MultibangConfig;

/// Piecewise linear lower convex hull of a sampled function.
#[derive(Debug, Clone)]
pub struct LowerHull {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl LowerHull {
    /// Hull of finitely many points; `points` need not be sorted.
    pub fn from_points(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        points.dedup_by(|b, a| a.0 == b.0);
        let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for p in points {
            while hull.len() >= 2 {
                let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
                if cross <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        let (xs, ys) = hull.into_iter().unzip();
        Self { xs, ys }
    }

    /// Hull of `g0` sampled at `samples` equispaced points of `[u_1, u_d]`
    /// together with the material values themselves.
    pub fn of_g0(cfg: &MultibangConfig, samples: usize) -> Self {
        let (a, b) = (cfg.lower(), cfg.upper());
        let mut pts: Vec<(f64, f64)> = (0..samples)
            .map(|k| {
                let v = a + (b - a) * k as f64 / (samples - 1) as f64;
                (v, cfg.g0_eval(v))
            })
            .collect();
        pts.extend(cfg.values.iter().map(|&u| (u, cfg.g0_eval(u))));
        Self::from_points(pts)
    }

    pub fn vertices(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn lower(&self) -> f64 {
        self.xs[0]
    }

    pub fn upper(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    fn segment(&self, v: f64) -> usize {
        let k = self.xs.partition_point(|&x| x <= v);
        k.saturating_sub(1).min(self.xs.len() - 2)
    }

    pub fn eval(&self, v: f64) -> f64 {
        if !(v >= self.lower() && v <= self.upper()) {
            return f64::INFINITY;
        }
        let j = self.segment(v);
        let (x0, x1, y0, y1) = (self.xs[j], self.xs[j + 1], self.ys[j], self.ys[j + 1]);
        let t = (v - x0) / (x1 - x0);
        y0 + t * (y1 - y0)
    }

    /// Slope of the hull immediately to the right of `v`.
    pub fn slope_right(&self, v: f64) -> f64 {
        let j = self.segment(v);
        (self.ys[j + 1] - self.ys[j]) / (self.xs[j + 1] - self.xs[j])
    }

    /// The set of maximizers of `p v - hull(v)`, as `(min, max)`.
    pub fn argmax_linear(&self, p: f64) -> (f64, f64) {
        let vals: Vec<f64> = self.vertices().map(|(x, y)| p * x - y).collect();
        let best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-12 * (1.0 + best.abs());
        let hits: Vec<f64> = self
            .xs
            .iter()
            .zip(&vals)
            .filter(|(_, &f)| f >= best - tol)
            .map(|(&x, _)| x)
            .collect();
        (hits[0], hits[hits.len() - 1])
    }
}

const COARSE_POINTS: usize = 10_001;
const REFINEMENTS: usize = 64;

/// Maximizer of `p u - g_Gamma(u) - gamma/2 u^2` over `[u_1, u_d]`, with the
/// envelope replaced by the sampled hull of `g0`.
#[derive(Debug, Clone)]
pub struct ProxOracle {
    hull: LowerHull,
    grid: Vec<f64>,
    grid_env: Vec<f64>,
}

impl ProxOracle {
    pub fn new(cfg: &MultibangConfig) -> Self {
        let hull = LowerHull::of_g0(cfg, 100_000);
        let (a, b) = (hull.lower(), hull.upper());
        let grid: Vec<f64> = (0..COARSE_POINTS)
            .map(|k| a + (b - a) * k as f64 / (COARSE_POINTS - 1) as f64)
            .collect();
        let grid_env = grid.iter().map(|&u| hull.eval(u)).collect();
        Self {
            hull,
            grid,
            grid_env,
        }
    }

    pub fn hull(&self) -> &LowerHull {
        &self.hull
    }

    pub fn argmax(&self, gamma: f64, p: f64) -> f64 {
        let phi = |k: usize| {
            let u = self.grid[k];
            p * u - self.grid_env[k] - 0.5 * gamma * u * u
        };
        // coarse scan: on a concave sequence the forward differences change
        // sign once, so the first non-increase is found by bisection
        let last = self.grid.len() - 1;
        let (mut lo, mut hi) = (0usize, last);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if phi(mid + 1) - phi(mid) > 0.0 {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let k = lo;
        let (dom_lo, dom_hi) = (self.hull.lower(), self.hull.upper());
        let mut a = self.grid[k.saturating_sub(2)];
        let mut b = self.grid[(k + 2).min(last)];

        // refinement: bisection on the sign of the right derivative
        let ascending = |u: f64| u < dom_hi && p - self.hull.slope_right(u) - gamma * u > 0.0;
        if !ascending(a) {
            if !ascending(dom_lo) {
                return dom_lo;
            }
            a = dom_lo;
        }
        if ascending(b) {
            b = dom_hi;
        }
        for _ in 0..REFINEMENTS {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if ascending(m) {
                a = m;
            } else {
                b = m;
            }
        }
        b
    }
}

/// Maximizes a concave function on `[lo, hi]`: scan at `points` equispaced
/// nodes, then golden-section refinement around the best node.
/// Returns `(argmax, max)`.
pub fn maximize_concave<F: Fn(f64) -> f64>(lo: f64, hi: f64, points: usize, f: F) -> (f64, f64) {
    let h = (hi - lo) / (points - 1) as f64;
    let node = |k: usize| if k == points - 1 { hi } else { lo + h * k as f64 };
    let (mut best_k, mut best) = (0, f64::NEG_INFINITY);
    for k in 0..points {
        let v = f(node(k));
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let mut a = node(best_k.saturating_sub(1));
    let mut b = node((best_k + 1).min(points - 1));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= 4.0 * f64::EPSILON * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let mut arg = 0.5 * (a + b);
    let mut val = f(arg);
    if best > val {
        arg = node(best_k);
        val = best;
    }
    (arg, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_parabola_with_bump() {
        let cfg = MultibangConfig::with_minimal_beta(vec![1.0, 2.0], 1.0).unwrap();
        let hull = LowerHull::of_g0(&cfg, 1001);
        let v: Vec<_> = hull.vertices().collect();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0], (1.0, 0.5));
        assert_eq!(v[1], (2.0, 2.0));
        assert!((hull.slope_right(1.3) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn maximize_concave_finds_interior_kink() {
        let (arg, val) = maximize_concave(-1.0, 1.0, 101, |x| -(x - 0.123_456_7).abs());
        assert!((arg - 0.123_456_7).abs() < 1e-12);
        assert!(val.abs() < 1e-12);
    }

    #[test]
    fn prox_oracle_handles_endpoints() {
        let cfg = MultibangConfig::with_minimal_beta(vec![1.0, 2.0], 1.0).unwrap();
        let oracle = ProxOracle::new(&cfg);
        assert_eq!(oracle.argmax(1.0, -100.0), 1.0);
        assert_eq!(oracle.argmax(1.0, 100.0), 2.0);
    }
}
