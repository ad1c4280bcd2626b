use super::SparseSymMatrix;
use crate::error::{Error, Result};

/// Default relative residual target for Poisson solves.
pub const DEFAULT_PCG_TOL: f64 = 1e-11;

/// Jacobi-preconditioned conjugate gradients for SPD `a`.
///
/// Stops once `‖b − A x‖₂ ≤ tol ‖b‖₂`, checking the recomputed true residual
/// before accepting convergence.
pub fn pcg_solve(a: &SparseSymMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    pcg_solve_from(a, b, None, tol, max_iter)
}

/// As [`pcg_solve`], starting from `x0` when given.
pub fn pcg_solve_from(
    a: &SparseSymMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::InvalidArgument(format!(
            "right-hand side has length {}, matrix is {n}x{n}",
            b.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = true_residual(a, b, &x);
    let target = tol * bnorm;
    let mut rnorm = norm(&r);
    if rnorm <= target {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for _ in 0..max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::InvalidArgument(
                "matrix is not positive definite along a search direction".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = norm(&r);
        if rnorm <= target {
            r = true_residual(a, b, &x);
            rnorm = norm(&r);
            if rnorm <= target {
                return Ok(x);
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        solver: "pcg",
        iterations: max_iter,
        residual: rnorm / bnorm,
    })
}

fn true_residual(a: &SparseSymMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = a.mul_vec(x);
    b.iter().zip(&ax).map(|(b, ax)| b - ax).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solves_immediately() {
        let a = SparseSymMatrix::identity(4);
        let b = [1.0, -2.0, 3.0, 0.5];
        let x = pcg_solve(&a, &b, 1e-12, 1).unwrap();
        assert_eq!(x, b.to_vec());
    }

    #[test]
    fn diagonal_system() {
        let a = SparseSymMatrix::from_diagonal(&[1.0, 2.0, 4.0]);
        let x = pcg_solve(&a, &[1.0, 2.0, 4.0], 1e-12, 10).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = SparseSymMatrix::from_diagonal(&[3.0, 5.0]);
        assert_eq!(pcg_solve(&a, &[0.0, 0.0], 1e-12, 5).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn reports_budget_exhaustion() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = SparseSymMatrix::from_triplets(n, &t).unwrap();
        let b = vec![1.0; n];
        match pcg_solve(&a, &b, 1e-14, 3) {
            Err(Error::NonConvergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        let x = pcg_solve(&a, &b, 1e-12, 200).unwrap();
        let r = true_residual(&a, &b, &x);
        assert!(norm(&r) <= 1e-12 * norm(&b));
    }
}
