//! Matrix-free Krylov solvers for symmetric positive definite operators.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KrylovMethod {
    /// Conjugate gradients: minimizes the energy norm of the error. The
    /// Euclidean residual can oscillate.
    ConjugateGradient,
    /// Conjugate residuals: minimizes the residual in the `M^-1` norm
    /// (Euclidean when unpreconditioned) over the Krylov space, so that
    /// history is nonincreasing.
    #[default]
    ConjugateResidual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual in the norm the method works with: `|r|_{M^-1}`
    /// under a preconditioner `M`, Euclidean otherwise. Starts with the
    /// initial residual.
    pub residuals: Vec<f64>,
    /// Euclidean `|r_k| / |b|`; this is what the tolerance applies to.
    pub euclidean: Vec<f64>,
    pub converged: bool,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(a, b)| *a += s * b);
}

/// Action of `M^-1`.
pub type Preconditioner<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;

/// Solves `A x = b` from the initial guess `x0` (zero when `None`), with an
/// optional SPD preconditioner given as the action of `M^-1`. Stops when the
/// Euclidean relative residual drops to `tol`; returns the best iterate seen
/// when `max_iters` runs out.
pub fn solve<F>(
    method: KrylovMethod,
    mut apply: F,
    precond: Option<Preconditioner<'_>>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> Result<KrylovResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(KrylovResult {
            x: vec![0.0; n],
            iterations: 0,
            residuals: vec![0.0],
            euclidean: vec![0.0],
            converged: true,
        });
    }
    let minv = |v: &[f64]| match precond {
        Some(m) => m(v),
        None => v.to_vec(),
    };
    let b_m = dot(b, &minv(b)).sqrt();

    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let mut r = b.to_vec();
    if x.iter().any(|&v| v != 0.0) {
        let ax = apply(&x)?;
        axpy(&mut r, -1.0, &ax);
    }
    let mut z = minv(&r);
    let mut euclidean = vec![dot(&r, &r).sqrt() / b_norm];
    let mut residuals = vec![dot(&r, &z).max(0.0).sqrt() / b_m];
    let mut best = (euclidean[0], x.clone());
    if euclidean[0] <= tol {
        return Ok(KrylovResult {
            x,
            iterations: 0,
            residuals,
            euclidean,
            converged: true,
        });
    }

    let mut p = z.clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut record = |r: &[f64], z: &[f64], x: &[f64], residuals: &mut Vec<f64>, euclidean: &mut Vec<f64>| {
        let e = dot(r, r).sqrt() / b_norm;
        euclidean.push(e);
        residuals.push(dot(r, z).max(0.0).sqrt() / b_m);
        if e < best.0 {
            best = (e, x.to_vec());
        }
        e <= tol
    };
    match method {
        KrylovMethod::ConjugateGradient => {
            let mut rz = dot(&r, &z);
            while iterations < max_iters {
                let ap = apply(&p)?;
                let pap = dot(&p, &ap);
                if pap <= 0.0 || rz <= 0.0 {
                    break;
                }
                let alpha = rz / pap;
                axpy(&mut x, alpha, &p);
                axpy(&mut r, -alpha, &ap);
                z = minv(&r);
                iterations += 1;
                if record(&r, &z, &x, &mut residuals, &mut euclidean) {
                    converged = true;
                    break;
                }
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
            }
        }
        KrylovMethod::ConjugateResidual => {
            let mut az = apply(&z)?;
            let mut ap = az.clone();
            let mut zaz = dot(&z, &az);
            while iterations < max_iters {
                let q = minv(&ap);
                let apq = dot(&ap, &q);
                if apq <= 0.0 || zaz <= 0.0 {
                    break;
                }
                let alpha = zaz / apq;
                axpy(&mut x, alpha, &p);
                axpy(&mut r, -alpha, &ap);
                axpy(&mut z, -alpha, &q);
                iterations += 1;
                if record(&r, &z, &x, &mut residuals, &mut euclidean) {
                    converged = true;
                    break;
                }
                az = apply(&z)?;
                let zaz_new = dot(&z, &az);
                let beta = zaz_new / zaz;
                zaz = zaz_new;
                p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
                ap.iter_mut().zip(&az).for_each(|(v, a)| *v = a + beta * *v);
            }
        }
    }
    if !converged {
        x = best.1;
    }
    Ok(KrylovResult {
        x,
        iterations,
        residuals,
        euclidean,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Vec<Vec<f64>> {
        // Tridiagonal plus a rank-one bump: SPD with spread-out spectrum.
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 2.0 + i as f64 * 0.3;
            if i + 1 < n {
                a[i][i + 1] = -0.9;
                a[i + 1][i] = -0.9;
            }
        }
        for i in 0..n {
            for j in 0..n {
                a[i][j] += 0.05 * ((i + 1) * (j + 1)) as f64 / n as f64;
            }
        }
        a
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|row| dot(row, x)).collect()
    }

    #[test]
    fn both_methods_solve_spd_systems() {
        let a = spd(30);
        let b: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        for method in [KrylovMethod::ConjugateGradient, KrylovMethod::ConjugateResidual] {
            let res = solve(method, |x| Ok(matvec(&a, x)), None, &b, None, 1e-12, 200).unwrap();
            assert!(res.converged, "{method:?}");
            let r: Vec<f64> = matvec(&a, &res.x).iter().zip(&b).map(|(u, v)| u - v).collect();
            assert!(dot(&r, &r).sqrt() < 1e-10);
        }
    }

    #[test]
    fn conjugate_residual_history_is_monotone() {
        let a = spd(40);
        let b: Vec<f64> = (0..40).map(|i| ((i * i) as f64).cos()).collect();
        let res = solve(
            KrylovMethod::ConjugateResidual,
            |x| Ok(matvec(&a, x)),
            None,
            &b,
            None,
            1e-13,
            200,
        )
        .unwrap();
        assert!(res.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn preconditioned_residual_is_monotone_and_converges() {
        let a = spd(40);
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sqrt()).collect();
        let jacobi = |v: &[f64]| -> Vec<f64> { v.iter().enumerate().map(|(i, x)| x / a[i][i]).collect() };
        for method in [KrylovMethod::ConjugateGradient, KrylovMethod::ConjugateResidual] {
            let res = solve(method, |x| Ok(matvec(&a, x)), Some(&jacobi), &b, None, 1e-12, 200).unwrap();
            assert!(res.converged);
            let r: Vec<f64> = matvec(&a, &res.x).iter().zip(&b).map(|(u, v)| u - v).collect();
            assert!(dot(&r, &r).sqrt() <= 1e-12 * dot(&b, &b).sqrt());
            if method == KrylovMethod::ConjugateResidual {
                assert!(res.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            }
        }
    }

    #[test]
    fn zero_rhs_takes_no_iterations() {
        let res = solve(
            KrylovMethod::default(),
            |x| Ok(x.to_vec()),
            None,
            &[0.0; 5],
            None,
            1e-8,
            10,
        )
        .unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_warm_start_takes_no_iterations() {
        let a = spd(10);
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b = matvec(&a, &x);
        let res = solve(
            KrylovMethod::default(),
            |v| Ok(matvec(&a, v)),
            None,
            &b,
            Some(&x),
            1e-10,
            10,
        )
        .unwrap();
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let a = spd(30);
        let b = vec![1.0; 30];
        let res = solve(KrylovMethod::default(), |x| Ok(matvec(&a, x)), None, &b, None, 1e-14, 3).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 3);
    }
}
