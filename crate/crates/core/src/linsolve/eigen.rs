//! Lowest eigenpairs of a symmetric pencil `A x = ε B x` with `B` SPD.
//!
//! The pencil is shifted to `(A + sB, B)` so that `A + sB` is SPD; its
//! Cholesky factor then serves as the preconditioner of a block LOBPCG
//! iteration (shift-invert flavoured). Small problems go straight to a dense
//! solve.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SkylineCholesky, SparseSymMatrix};
use crate::error::{Error, Result};

/// Default residual target `‖Ax − εBx‖₂ / ‖x‖_B`.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct EigenResult {
    /// Ascending eigenvalues of the unshifted pencil.
    pub values: Vec<f64>,
    /// B-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    pub residual_norms: Vec<f64>,
    /// Shift applied internally; informational only.
    pub shift: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    pub seed: u64,
    pub max_iter: usize,
    /// Extra block columns beyond the requested count; keeps clusters that
    /// straddle the cut inside the search space.
    pub guard: Option<usize>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            max_iter: 400,
            guard: None,
        }
    }
}

pub fn lowest_eigenpairs(
    a: &SparseSymMatrix,
    b: &SparseSymMatrix,
    count: usize,
    tol: f64,
    shift_hint: f64,
) -> Result<EigenResult> {
    lowest_eigenpairs_with(a, b, count, tol, shift_hint, &EigenOptions::default(), None)
}

/// Like [`lowest_eigenpairs`] with explicit options and optional starting
/// vectors (e.g. eigenvectors of a nearby pencil).
pub fn lowest_eigenpairs_with(
    a: &SparseSymMatrix,
    b: &SparseSymMatrix,
    count: usize,
    tol: f64,
    shift_hint: f64,
    opts: &EigenOptions,
    warm_start: Option<&[Vec<f64>]>,
) -> Result<EigenResult> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::InvalidArgument("pencil dimension mismatch".into()));
    }
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "requested {count} eigenpairs of a pencil of dimension {n}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }

    let (shift, chol) = shifted_factor(a, b, shift_hint)?;
    let guard = opts.guard.unwrap_or_else(|| (count / 4).max(4));
    let p = (count + guard).min(n);

    let mut result = if 2 * p >= n {
        dense_lowest(a, b, count)?
    } else {
        let shifted = a.add_scaled(b, shift)?;
        let mut r = lobpcg(&shifted, b, &chol, count, p, tol, opts, warm_start)?;
        for v in &mut r.values {
            *v -= shift;
        }
        r
    };
    result.shift = shift;

    let residuals: Vec<f64> = result
        .values
        .iter()
        .zip(&result.vectors)
        .map(|(&val, x)| residual_norm(a, b, val, x))
        .collect();
    result.residual_norms = residuals;
    if result.residual_norms.iter().any(|&r| !(r <= tol)) {
        return Err(Error::EigenNonConvergence {
            iterations: result.iterations,
            residuals: result.residual_norms,
        });
    }
    Ok(result)
}

/// `s = max(0, −lower) + 1` with `lower` a Gershgorin bound on the smallest
/// eigenvalue of the pencil, raised to `shift_hint` and doubled until the
/// factorization succeeds.
fn shifted_factor(
    a: &SparseSymMatrix,
    b: &SparseSymMatrix,
    shift_hint: f64,
) -> Result<(f64, SkylineCholesky)> {
    let ga = a.gershgorin_lower();
    let lower = if ga < 0.0 {
        ga / b.gershgorin_upper()
    } else {
        0.0
    };
    let mut shift = (f64::max(0.0, -lower) + 1.0).max(shift_hint);
    for _ in 0..64 {
        match SkylineCholesky::factor(&a.add_scaled(b, shift)?) {
            Ok(chol) => return Ok((shift, chol)),
            Err(_) => shift *= 2.0,
        }
    }
    Err(Error::InvalidArgument(
        "could not find a shift making the pencil positive definite".into(),
    ))
}

fn residual_norm(a: &SparseSymMatrix, b: &SparseSymMatrix, value: f64, x: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let bx = b.mul_vec(x);
    let xbx: f64 = x.iter().zip(&bx).map(|(u, v)| u * v).sum();
    let r: f64 = ax
        .iter()
        .zip(&bx)
        .map(|(p, q)| (p - value * q).powi(2))
        .sum();
    r.sqrt() / xbx.sqrt()
}

/// Dense generalized solve through the Cholesky factor of `B`.
pub fn dense_generalized(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let order = ascending(&eig.eigenvalues.as_slice().to_vec());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    let x = linv.transpose() * y;
    Ok((values, x))
}

fn dense_lowest(a: &SparseSymMatrix, b: &SparseSymMatrix, count: usize) -> Result<EigenResult> {
    let (values, x) = dense_generalized(&a.to_dense(), &b.to_dense())?;
    Ok(EigenResult {
        values: values[..count].to_vec(),
        vectors: (0..count).map(|c| x.column(c).iter().copied().collect()).collect(),
        residual_norms: Vec::new(),
        shift: 0.0,
        iterations: 0,
    })
}

fn ascending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    order
}

/// B-orthonormalizes the columns of `s` by eigen-decomposition of the
/// scaled Gram matrix, dropping numerically dependent directions.
fn svqb(s: &DMatrix<f64>, bs: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = s.ncols();
    let n = s.nrows();
    if k == 0 {
        return (DMatrix::zeros(n, 0), DMatrix::zeros(n, 0));
    }
    let gram = s.transpose() * bs;
    let gram = (&gram + gram.transpose()) * 0.5;
    let d: Vec<f64> = (0..k)
        .map(|i| {
            let g = gram[(i, i)];
            if g > 0.0 {
                1.0 / g.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let scaled = DMatrix::from_fn(k, k, |i, j| d[i] * gram[(i, j)] * d[j]);
    let eig = SymmetricEigen::new(scaled);
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..k)
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * max && eig.eigenvalues[i] > 0.0)
        .collect();
    let transform = DMatrix::from_fn(k, keep.len(), |r, c| {
        let i = keep[c];
        d[r] * eig.eigenvectors[(r, i)] / eig.eigenvalues[i].sqrt()
    });
    (s * &transform, bs * &transform)
}

/// Removes the B-projection of `w` onto the B-orthonormal block `x`.
fn b_orthogonalize(w: &mut DMatrix<f64>, x: &DMatrix<f64>, bx: &DMatrix<f64>) {
    for _ in 0..2 {
        let coeffs = bx.transpose() * &*w;
        *w -= x * coeffs;
    }
}

fn hcat(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = parts[0].nrows();
    let k: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(n, k);
    let mut c0 = 0;
    for p in parts {
        out.columns_mut(c0, p.ncols()).copy_from(*p);
        c0 += p.ncols();
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn lobpcg(
    a: &SparseSymMatrix,
    b: &SparseSymMatrix,
    precond: &SkylineCholesky,
    count: usize,
    p: usize,
    tol: f64,
    opts: &EigenOptions,
    warm_start: Option<&[Vec<f64>]>,
) -> Result<EigenResult> {
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x0 = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.0..1.0));
    if let Some(warm) = warm_start {
        for (c, v) in warm.iter().take(p).enumerate() {
            if v.len() == n {
                x0.column_mut(c).copy_from_slice(v);
            }
        }
    }
    let (mut x, _) = svqb(&x0, &b.mul_block(&x0));
    if x.ncols() < p {
        let extra = DMatrix::from_fn(n, p - x.ncols(), |_, _| rng.gen_range(-1.0..1.0));
        let cat = hcat(&[&x, &extra]);
        x = svqb(&cat, &b.mul_block(&cat)).0;
    }
    let (values, coeffs) = rayleigh_ritz(&x, &a.mul_block(&x), p);
    x = &x * coeffs;
    let mut theta = values;
    let mut dir: Option<DMatrix<f64>> = None;
    let mut iterations = 0;

    loop {
        let ax = a.mul_block(&x);
        let bx = b.mul_block(&x);
        let mut r = ax.clone();
        for c in 0..p {
            let t = theta[c];
            let mut col = r.column_mut(c);
            col.axpy(-t, &bx.column(c), 1.0);
        }
        let norms: Vec<f64> = (0..p).map(|c| r.column(c).norm()).collect();
        if norms[..count].iter().all(|&v| v <= 0.5 * tol) || iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let active: Vec<usize> = (0..p).filter(|&c| norms[c] > 0.1 * tol).collect();
        let mut w = DMatrix::zeros(n, active.len());
        for (k, &c) in active.iter().enumerate() {
            let mut col: Vec<f64> = r.column(c).iter().copied().collect();
            precond.solve_in_place(&mut col);
            w.column_mut(k).copy_from_slice(&col);
        }
        b_orthogonalize(&mut w, &x, &bx);
        let mut s = match dir.take() {
            Some(mut d) => {
                b_orthogonalize(&mut d, &x, &bx);
                hcat(&[&w, &d])
            }
            None => w,
        };
        let (mut q, _) = svqb(&s, &b.mul_block(&s));
        // second pass restores orthogonality lost to cancellation
        b_orthogonalize(&mut q, &x, &bx);
        s = q;
        let (q, _) = svqb(&s, &b.mul_block(&s));
        if q.ncols() == 0 {
            break;
        }

        let z = hcat(&[&x, &q]);
        let az = hcat(&[&ax, &a.mul_block(&q)]);
        let (values, coeffs) = rayleigh_ritz(&z, &az, p);
        let cq = coeffs.rows(p, q.ncols()).into_owned();
        x = &z * &coeffs;
        dir = Some(&q * cq);
        theta = values;
    }

    // final Rayleigh–Ritz on a freshly orthonormalized block
    let (xq, _) = svqb(&x, &b.mul_block(&x));
    let (values, coeffs) = rayleigh_ritz(&xq, &a.mul_block(&xq), xq.ncols().min(p));
    let x = xq * coeffs;
    Ok(EigenResult {
        values: values.iter().take(count).copied().collect(),
        vectors: (0..count.min(x.ncols()))
            .map(|c| x.column(c).iter().copied().collect())
            .collect(),
        residual_norms: Vec::new(),
        shift: 0.0,
        iterations,
    })
}

/// Ritz values (ascending, first `keep`) and coefficient vectors for a
/// B-orthonormal basis `z` with `az = A z`.
fn rayleigh_ritz(z: &DMatrix<f64>, az: &DMatrix<f64>, keep: usize) -> (Vec<f64>, DMatrix<f64>) {
    let h = z.transpose() * az;
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = ascending(&vals);
    let keep = keep.min(order.len());
    let coeffs = DMatrix::from_fn(z.ncols(), keep, |r, c| eig.eigenvectors[(r, order[c])]);
    (order[..keep].iter().map(|&i| vals[i]).collect(), coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_pencil() {
        let a = SparseSymMatrix::from_diagonal(&[2.0, 5.0, 9.0]);
        let b = SparseSymMatrix::identity(3);
        let res = lowest_eigenpairs(&a, &b, 2, 1e-10, 0.0).unwrap();
        assert!((res.values[0] - 2.0).abs() < 1e-12);
        assert!((res.values[1] - 5.0).abs() < 1e-12);
        assert!((res.vectors[0][0].abs() - 1.0).abs() < 1e-12);
        assert!((res.vectors[1][1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_too_many_pairs() {
        let a = SparseSymMatrix::identity(3);
        assert!(matches!(
            lowest_eigenpairs(&a, &a, 4, 1e-9, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(lowest_eigenpairs(&a, &a, 0, 1e-9, 0.0).is_err());
    }

    fn laplacian_1d(n: usize) -> SparseSymMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseSymMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn lobpcg_matches_closed_form_1d_laplacian() {
        let n = 200;
        let a = laplacian_1d(n);
        let b = SparseSymMatrix::identity(n);
        let res = lowest_eigenpairs(&a, &b, 6, 1e-10, 0.0).unwrap();
        for (k, v) in res.values.iter().enumerate() {
            let theta = (k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64;
            let exact = 2.0 - 2.0 * theta.cos();
            assert!((v - exact).abs() < 1e-10, "{k}: {v} vs {exact}");
        }
    }

    #[test]
    fn indefinite_operator_gets_shifted() {
        let n = 120;
        let a = laplacian_1d(n).add_scaled(&SparseSymMatrix::identity(n), -3.0).unwrap();
        let b = SparseSymMatrix::identity(n);
        let res = lowest_eigenpairs(&a, &b, 3, 1e-10, 0.0).unwrap();
        assert!(res.shift > 1.0);
        for (k, v) in res.values.iter().enumerate() {
            let theta = (k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64;
            assert!((v - (-1.0 - 2.0 * theta.cos())).abs() < 1e-10);
        }
        let with_hint = lowest_eigenpairs(&a, &b, 3, 1e-10, 50.0).unwrap();
        assert_eq!(with_hint.shift, 50.0);
        for (x, y) in res.values.iter().zip(&with_hint.values) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
