use super::SparseSymMatrix;
use crate::error::{Error, Result};

/// Profile (skyline) Cholesky factor `A = L Lᵀ` of an SPD sparse matrix.
///
/// Row `i` of `L` is stored densely from its first nonzero column up to the
/// diagonal; fill stays inside that envelope.
#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &SparseSymMatrix) -> Result<Self> {
        let n = a.dim();
        let mut first = vec![0usize; n];
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            let (cols, _) = a.row_range(i);
            first[i] = cols.first().copied().unwrap_or(i).min(i);
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            let (cols, vals) = a.row_range(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    data[start[i] + j - first[i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = data[start[i] + j - fi];
                let ri = start[i] + k0 - fi;
                let rj = start[j] + k0 - fj;
                for k in 0..(j - k0) {
                    s -= data[ri + k] * data[rj + k];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::InvalidArgument(format!(
                            "matrix not positive definite (pivot {s:e} at row {i})"
                        )));
                    }
                    data[start[i] + j - fi] = s.sqrt();
                } else {
                    data[start[i] + j - fi] = s / data[start[j + 1] - 1];
                }
            }
        }
        Ok(Self { first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let mut s = x[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                s -= l * x[fi + k];
            }
            x[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                x[fi + k] -= l * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        t.push((0, n - 1, 0.3));
        t.push((n - 1, 0, 0.3));
        let a = SparseSymMatrix::from_triplets(n, &t).unwrap();
        let chol = SkylineCholesky::factor(&a).unwrap();
        let xs: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut b = a.mul_vec(&xs);
        chol.solve_in_place(&mut b);
        for i in 0..n {
            assert!((b[i] - xs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn detects_indefinite_matrix() {
        let a = SparseSymMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(SkylineCholesky::factor(&a).is_err());
    }
}
