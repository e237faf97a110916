//! Small dense linear algebra kernels: symmetric eigendecomposition, Householder
//! least squares and singular values. Matrices are row-major slices.

use crate::error::{Error, Result};
use crate::real::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("rows of unequal length".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenpairs of a symmetric matrix, sorted by nonincreasing eigenvalue.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// Row `k` holds the unit eigenvector for `values[k]`.
    pub vectors: Matrix<T>,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition. Only the symmetric part of `a` is used.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> Result<SymmetricEigen<T>> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::Shape(format!("eigen of a {}x{} matrix", a.rows, a.cols)));
    }
    let mut m = a.clone();
    for i in 0..n {
        for j in 0..i {
            let v = (m[(i, j)] + m[(j, i)]) * T::lit(0.5);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let mut v = Matrix::identity(n);
    let total: T = m.data.iter().map(|&x| x * x).sum();
    let tol = T::epsilon() * T::epsilon() * total;

    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..i {
                off = off + m[(i, j)] * m[(i, j)];
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = m[(r, p)];
                    let arq = m[(r, q)];
                    m[(r, p)] = c * arp - s * arq;
                    m[(r, q)] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = m[(p, r)];
                    let aqr = m[(q, r)];
                    m[(p, r)] = c * apr - s * aqr;
                    m[(q, r)] = s * apr + c * aqr;
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[(j, j)]
            .partial_cmp(&m[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&k| m[(k, k)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (row, &k) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(row, r)] = v[(r, k)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Least-squares solution of `A X = B` for every column of `B`.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    /// `cols(A) x cols(B)` solution.
    pub solution: Matrix<T>,
    /// Residual 2-norm per right-hand side.
    pub residual_norms: Vec<T>,
    /// Upper-triangular factor of `A`.
    pub r: Matrix<T>,
}

/// Householder QR least squares; `A` must have at least as many rows as columns.
pub fn least_squares<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<LeastSquares<T>> {
    let (rows, cols) = (a.rows, a.cols);
    if rows < cols {
        return Err(Error::UnderDetermined {
            samples: rows,
            terms: cols,
        });
    }
    if b.rows != rows {
        return Err(Error::Shape(format!(
            "{} equations but {} right-hand-side rows",
            rows, b.rows
        )));
    }
    let k = b.cols;
    let mut qa = a.clone();
    let mut qb = b.clone();
    let mut v = vec![T::zero(); rows];

    for j in 0..cols {
        let norm = (j..rows).map(|i| qa[(i, j)] * qa[(i, j)]).sum::<T>().sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if qa[(j, j)] > T::zero() { -norm } else { norm };
        for i in j..rows {
            v[i] = qa[(i, j)];
        }
        v[j] = v[j] - alpha;
        let vv: T = (j..rows).map(|i| v[i] * v[i]).sum();
        if vv == T::zero() {
            continue;
        }
        let scale = T::lit(2.0) / vv;
        qa[(j, j)] = alpha;
        for i in j + 1..rows {
            qa[(i, j)] = T::zero();
        }
        for c in j + 1..cols {
            let dot: T = (j..rows).map(|i| v[i] * qa[(i, c)]).sum();
            let f = dot * scale;
            for i in j..rows {
                qa[(i, c)] = qa[(i, c)] - f * v[i];
            }
        }
        for c in 0..k {
            let dot: T = (j..rows).map(|i| v[i] * qb[(i, c)]).sum();
            let f = dot * scale;
            for i in j..rows {
                qb[(i, c)] = qb[(i, c)] - f * v[i];
            }
        }
    }

    let mut r = Matrix::zeros(cols, cols);
    for i in 0..cols {
        for j in i..cols {
            r[(i, j)] = qa[(i, j)];
        }
    }
    let mut solution = Matrix::zeros(cols, k);
    for c in 0..k {
        for i in (0..cols).rev() {
            let mut acc = qb[(i, c)];
            for j in i + 1..cols {
                acc = acc - r[(i, j)] * solution[(j, c)];
            }
            if r[(i, i)] == T::zero() {
                return Err(Error::Shape(format!("design matrix is rank deficient at column {i}")));
            }
            solution[(i, c)] = acc / r[(i, i)];
        }
    }
    let residual_norms = (0..k)
        .map(|c| (cols..rows).map(|i| qb[(i, c)] * qb[(i, c)]).sum::<T>().sqrt())
        .collect();
    Ok(LeastSquares {
        solution,
        residual_norms,
        r,
    })
}

/// Singular values, nonincreasing, by one-sided Jacobi rotations.
pub fn singular_values<T: Real>(a: &Matrix<T>) -> Vec<T> {
    let mut u = if a.rows >= a.cols { a.clone() } else { a.transpose() };
    let (rows, cols) = (u.rows, u.cols);
    let tol = T::epsilon();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = T::zero();
                for i in 0..rows {
                    alpha = alpha + u[(i, p)] * u[(i, p)];
                    beta = beta + u[(i, q)] * u[(i, q)];
                    gamma = gamma + u[(i, p)] * u[(i, q)];
                }
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = if zeta == T::zero() {
                    T::one()
                } else {
                    zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = (0..cols)
        .map(|j| (0..rows).map(|i| u[(i, j)] * u[(i, j)]).sum::<T>().sqrt())
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// 2-norm condition number; infinite for a singular matrix.
pub fn condition_number<T: Real>(a: &Matrix<T>) -> T {
    let sv = singular_values(a);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > T::zero() => hi / lo,
        _ => T::infinity(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen_of_diagonal_is_sorted() {
        let mut a = Matrix::<f64>::zeros(3, 3);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 3.0;
        a[(2, 2)] = 2.0;
        let e = symmetric_eigen(&a).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors.row(0)[1].abs(), 1.0);
    }

    #[test]
    fn eigen_matches_nalgebra() {
        let n = 7;
        let mut a = Matrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = ((i * 31 + j * 17) % 13) as f64 / 7.0 - 0.8;
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let e = symmetric_eigen(&a).unwrap();
        let oracle = nalgebra::DMatrix::from_row_slice(n, n, &a.data).symmetric_eigen();
        let mut ov: Vec<f64> = oracle.eigenvalues.iter().copied().collect();
        ov.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (x, y) in e.values.iter().zip(&ov) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
        for k in 0..n {
            let v = e.vectors.row(k);
            for i in 0..n {
                let av: f64 = (0..n).map(|j| a[(i, j)] * v[j]).sum();
                assert_relative_eq!(av, e.values[k] * v[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn least_squares_exact_system() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0], vec![0.0, 1.0]]).unwrap();
        let x = [0.5, -1.5];
        let b: Vec<Vec<f64>> = (0..3).map(|i| vec![a[(i, 0)] * x[0] + a[(i, 1)] * x[1]]).collect();
        let ls = least_squares(&a, &Matrix::from_rows(&b).unwrap()).unwrap();
        assert_relative_eq!(ls.solution[(0, 0)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(ls.solution[(1, 0)], -1.5, epsilon = 1e-14);
        assert!(ls.residual_norms[0] < 1e-14);
    }

    #[test]
    fn least_squares_rejects_wide_system() {
        let a = Matrix::<f64>::zeros(2, 3);
        let b = Matrix::<f64>::zeros(2, 1);
        assert!(matches!(
            least_squares(&a, &b),
            Err(Error::UnderDetermined { samples: 2, terms: 3 })
        ));
    }

    #[test]
    fn singular_values_match_nalgebra() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..4).map(|j| ((i * 7 + j * 5) % 11) as f64 - 4.0).collect())
            .collect();
        let a = Matrix::from_rows(&rows).unwrap();
        let sv = singular_values(&a);
        let oracle = nalgebra::DMatrix::from_row_slice(6, 4, &a.data).singular_values();
        let mut ov: Vec<f64> = oracle.iter().copied().collect();
        ov.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (x, y) in sv.iter().zip(&ov) {
            assert_relative_eq!(x, y, epsilon = 1e-11);
        }
        assert_relative_eq!(condition_number(&a), ov[0] / ov[3], epsilon = 1e-10);
    }
}
