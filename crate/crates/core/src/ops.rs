//! Discrete building blocks: implicit diffusion, the exact heat semigroup of
//! the second-difference operator, and age quadrature.

use std::f64::consts::PI;

use crate::field::Field;
use crate::grid::Grid;

/// Factored `I + dt K L_h`, with `L_h` the Dirichlet second difference
/// `(2 u_j - u_{j-1} - u_{j+1}) / dx^2`.
///
/// The matrix is symmetric, strictly diagonally dominant and constant along
/// its diagonals, so the Thomas elimination is factored once and reused.
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    off: f64,
    first_pivot: f64,
    upper: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl DiffusionOperator {
    pub fn new(nx: usize, dx: f64, diffusivity: f64, dt: f64) -> Self {
        let r = dt * diffusivity / (dx * dx);
        let diag = 1.0 + 2.0 * r;
        let off = -r;
        let mut upper = vec![0.0; nx];
        let mut inv_pivot = vec![0.0; nx];
        let mut pivot = diag;
        for j in 0..nx {
            if j > 0 {
                pivot = diag - off * upper[j - 1];
            }
            inv_pivot[j] = 1.0 / pivot;
            upper[j] = off / pivot;
        }
        Self {
            off,
            first_pivot: diag,
            upper,
            inv_pivot,
        }
    }

    pub fn for_grid(grid: &Grid, diffusivity: f64) -> Self {
        Self::new(grid.nx, grid.dx(), diffusivity, grid.dt())
    }

    pub fn is_identity(&self) -> bool {
        self.off == 0.0 && self.first_pivot == 1.0
    }

    /// Overwrites `u` with `(I + dt K L_h)^{-1} u`.
    pub fn solve_in_place(&self, u: &mut [f64]) {
        let n = u.len();
        debug_assert_eq!(n, self.upper.len());
        if n == 0 || self.is_identity() {
            return;
        }
        u[0] *= self.inv_pivot[0];
        for j in 1..n {
            u[j] = (u[j] - self.off * u[j - 1]) * self.inv_pivot[j];
        }
        for j in (0..n - 1).rev() {
            u[j] -= self.upper[j] * u[j + 1];
        }
    }
}

/// One backward-Euler diffusion step on a spatial profile.
pub fn diffusion_step(profile: &[f64], diffusivity: f64, dt: f64) -> Vec<f64> {
    let dx = 1.0 / (profile.len() + 1) as f64;
    let op = DiffusionOperator::new(profile.len(), dx, diffusivity, dt);
    let mut out = profile.to_vec();
    op.solve_in_place(&mut out);
    out
}

/// Eigenvalue of `L_h` for the mode `sin(k pi x)`, `k = 1..=nx`.
pub fn laplacian_eigenvalue(k: usize, dx: f64) -> f64 {
    let s = (k as f64 * PI * dx / 2.0).sin();
    4.0 / (dx * dx) * s * s
}

/// Exact `exp(-t K L_h) u`, evaluated in the discrete sine basis.
///
/// This is the continuous-time semigroup of the spatially discrete operator;
/// it shares no code with the backward-Euler factorization above.
pub fn heat_semigroup(profile: &[f64], diffusivity: f64, t: f64) -> Vec<f64> {
    let n = profile.len();
    let dx = 1.0 / (n + 1) as f64;
    let mut out = vec![0.0; n];
    for k in 1..=n {
        let mode = |j: usize| (k as f64 * PI * (j + 1) as f64 * dx).sin();
        let coef: f64 = profile.iter().enumerate().map(|(j, v)| v * mode(j)).sum::<f64>() * 2.0 * dx;
        let decay = (-t * diffusivity * laplacian_eigenvalue(k, dx)).exp() * coef;
        if decay == 0.0 {
            continue;
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o += decay * mode(j);
        }
    }
    out
}

/// Composite trapezoid weights on `na + 1` equispaced nodes.
pub fn trapezoid_weights(na: usize, da: f64) -> Vec<f64> {
    let mut w = vec![da; na + 1];
    w[0] = 0.5 * da;
    w[na] = 0.5 * da;
    w
}

/// `int_0^A weight(a) u(x, a) da` at every spatial node.
pub fn age_integral(field: &Field, weight: &[f64], grid: &Grid) -> Vec<f64> {
    assert_eq!(weight.len(), field.rows(), "weight must be sampled on the age grid");
    let w = trapezoid_weights(grid.na, grid.da());
    let mut out = vec![0.0; field.nx()];
    for (i, (wi, li)) in w.iter().zip(weight).enumerate() {
        let c = wi * li;
        if c == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(field.row(i)) {
            *o += c * v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        let scale = b.iter().fold(1e-300_f64, |m, v| m.max(v.abs()));
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
    }

    #[test]
    fn zero_profile_stays_zero() {
        assert!(diffusion_step(&[0.0; 7], 0.3, 0.1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn solve_inverts_the_tridiagonal_matrix() {
        let (k, dt) = (0.7, 0.05);
        let u = [0.3, -1.0, 2.0, 0.5, 0.0, 1.25];
        let v = diffusion_step(&u, k, dt);
        let dx = 1.0 / 7.0;
        let r = dt * k / (dx * dx);
        for j in 0..u.len() {
            let left = if j > 0 { v[j - 1] } else { 0.0 };
            let right = if j + 1 < u.len() { v[j + 1] } else { 0.0 };
            let back = (1.0 + 2.0 * r) * v[j] - r * (left + right);
            assert!((back - u[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenmode_is_scaled_by_resolvent() {
        let nx = 15;
        let dx = 1.0 / (nx + 1) as f64;
        let (k_diff, dt) = (0.4, 0.02);
        for mode in [1usize, 3, 7] {
            let u: Vec<f64> = (0..nx)
                .map(|j| (mode as f64 * PI * (j + 1) as f64 * dx).sin())
                .collect();
            let s = (mode as f64 * PI * dx / 2.0).sin();
            let factor = 1.0 / (1.0 + k_diff * dt * (4.0 / (dx * dx)) * s * s);
            let expect: Vec<f64> = u.iter().map(|v| v * factor).collect();
            assert!(close(&diffusion_step(&u, k_diff, dt), &expect, 1e-13));
        }
    }

    #[test]
    fn reflection_symmetry() {
        let u = [0.1, 0.5, 2.0, 0.5, 0.1];
        let v = diffusion_step(&u, 1.0, 0.01);
        for j in 0..u.len() {
            assert!((v[j] - v[u.len() - 1 - j]).abs() < 1e-15);
        }
    }

    #[test]
    fn semigroup_matches_eigen_decay() {
        let nx = 12;
        let dx = 1.0 / 13.0;
        let u: Vec<f64> = (0..nx).map(|j| (2.0 * PI * (j + 1) as f64 * dx).sin()).collect();
        let lam = laplacian_eigenvalue(2, dx);
        let out = heat_semigroup(&u, 0.3, 0.2);
        let expect: Vec<f64> = u.iter().map(|v| v * (-0.3 * 0.2 * lam).exp()).collect();
        assert!(close(&out, &expect, 1e-12));
        assert!(close(&heat_semigroup(&u, 0.3, 0.0), &u, 1e-12));
    }

    #[test]
    fn trapezoid_integrates_constants_and_bounds_quadratics() {
        let g = Grid::new(3, 16, 1.0, 0.25).unwrap();
        let ones = Field::from_fn(&g, |_, _| 1.0);
        let w1 = vec![1.0; g.na + 1];
        assert!(age_integral(&ones, &w1, &g).iter().all(|v| (v - 1.0).abs() < 1e-14));

        // (2a + 1)(a - 3): exact integral on [0,1] is 2/3 - 5/2 - 3 = -29/6,
        // second derivative 4, trapezoid error <= A^2/(12 Na^2) * 4.
        let lin = Field::from_fn(&g, |_, a| a - 3.0);
        let weight: Vec<f64> = (0..=g.na).map(|i| 2.0 * g.age(i) + 1.0).collect();
        let bound = 4.0 / (12.0 * (g.na * g.na) as f64);
        for v in age_integral(&lin, &weight, &g) {
            assert!((v + 29.0 / 6.0).abs() <= bound + 1e-14);
        }
        assert!(age_integral(&Field::zeros(&g), &weight, &g).iter().all(|&v| v == 0.0));
    }
}
