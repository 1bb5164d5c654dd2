use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix. Shape is fixed at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Wraps row-major storage; `data.len()` must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. An empty list yields a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + Clone + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * x` for a column vector `x`.
    pub fn mat_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok(self.row_iter().map(|r| super::dot(r, x)).collect())
    }

    /// `self^T * self`.
    pub fn gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.cols, self.cols);
        for r in self.row_iter() {
            for i in 0..self.cols {
                let ri = r[i];
                if ri == 0.0 {
                    continue;
                }
                for j in i..self.cols {
                    g.data[i * self.cols + j] += ri * r[j];
                }
            }
        }
        for i in 0..self.cols {
            for j in 0..i {
                g.data[i * self.cols + j] = g.data[j * self.cols + i];
            }
        }
        g
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest `|a_ij - a_ji|`; `+inf` for non-square input.
    pub fn max_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues, descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: Matrix,
}

impl SymEig {
    /// `V diag(values) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        reconstruct_with(&self.vectors, &self.values)
    }
}

fn reconstruct_with(vectors: &Matrix, diag: &[f64]) -> Matrix {
    let n = vectors.rows();
    let mut out = Matrix::zeros(n, n);
    for (k, &lam) in diag.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = vectors[(i, k)] * lam;
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += vik * vectors[(j, k)];
            }
        }
    }
    out
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// `tol` is relative: the input must be symmetric to within `tol * max(1, ||A||_F)`
/// and rotations continue until the off-diagonal Frobenius norm drops below
/// `tol * ||A||_F`.
pub fn sym_eig(a: &Matrix, tol: f64) -> Result<SymEig> {
    if a.rows() != a.cols() {
        return Err(Error::ShapeMismatch(format!(
            "sym_eig needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    let n = a.rows();
    let scale = a.frobenius_norm();
    let asym = a.max_asymmetry();
    if asym > tol * scale.max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }

    // symmetrise exactly so rounding in the input does not bias the rotations
    let mut m = a.clone();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let mut v = Matrix::identity(n);
    let threshold = tol * scale;

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(y, y)].total_cmp(&m[(x, x)]));
    let values = order.iter().map(|&k| m[(k, k)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, dst)] = v[(i, src)];
        }
    }
    Ok(SymEig { values, vectors })
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix.
///
/// Eigenvalues with `|λ| <= rank_tol * max|λ|` are treated as zero.
pub fn pinv(a: &Matrix, rank_tol: f64) -> Result<Matrix> {
    let eig = sym_eig(a, 1e-13)?;
    let max_abs = eig.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let cutoff = rank_tol * max_abs;
    let inv: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| {
            if max_abs > 0.0 && l.abs() > cutoff {
                1.0 / l
            } else {
                0.0
            }
        })
        .collect();
    Ok(reconstruct_with(&eig.vectors, &inv))
}

/// Solves `(X^T X + λ I) W = X^T Y` by Cholesky factorisation.
///
/// `λ = +inf` returns the zero matrix (the limit of the ridge solution).
pub fn ridge_solve(x: &Matrix, y: &Matrix, lambda: f64) -> Result<Matrix> {
    if x.rows() != y.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: y.rows(),
        });
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "ridge lambda must be >= 0, got {lambda}"
        )));
    }
    let p = x.cols();
    if lambda.is_infinite() {
        return Ok(Matrix::zeros(p, y.cols()));
    }
    let mut g = x.gram();
    for i in 0..p {
        g[(i, i)] += lambda;
    }
    let rhs = x.transpose().matmul(y)?;
    let l = cholesky(&g)?;

    let mut w = Matrix::zeros(p, y.cols());
    for c in 0..y.cols() {
        // forward: L z = b
        let mut z = vec![0.0; p];
        for i in 0..p {
            let mut s = rhs[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * z[k];
            }
            z[i] = s / l[(i, i)];
        }
        // backward: L^T w = z
        for i in (0..p).rev() {
            let mut s = z[i];
            for k in (i + 1)..p {
                s -= l[(k, i)] * w[(k, c)];
            }
            w[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(w)
}

fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let max_diag = (0..n).fold(0.0_f64, |acc, i| acc.max(a[(i, i)].abs()));
    let floor = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(Error::SingularSystem);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_mat_close(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn eig_identity() {
        let e = sym_eig(&Matrix::identity(3), 1e-12).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn eig_diagonal_axis_aligned() {
        let e = sym_eig(&Matrix::from_diag(&[1.0, 3.0]), 1e-12).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_two_by_two() {
        // characteristic polynomial (2-λ)^2 - 1 = 0 → λ ∈ {3, 1}
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eig(&a, 1e-14).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-13);
        assert!((e.values[1] - 1.0).abs() < 1e-13);
        assert_mat_close(&e.reconstruct(), &a, 1e-10 * a.frobenius_norm());
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&a, 1e-12), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn pinv_examples() {
        let d = pinv(&Matrix::from_diag(&[2.0, 0.0]), 1e-12).unwrap();
        assert_mat_close(&d, &Matrix::from_diag(&[0.5, 0.0]), 1e-15);

        let i = pinv(&Matrix::identity(4), 1e-12).unwrap();
        assert_mat_close(&i, &Matrix::identity(4), 1e-14);

        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let expected =
            Matrix::from_rows(&[[2.0 / 3.0, -1.0 / 3.0], [-1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        assert_mat_close(&pinv(&a, 1e-12).unwrap(), &expected, 1e-13);
    }

    #[test]
    fn pinv_of_zero_is_zero() {
        let z = pinv(&Matrix::zeros(3, 3), 1e-12).unwrap();
        assert_eq!(z, Matrix::zeros(3, 3));
    }

    #[test]
    fn ridge_examples() {
        let i2 = Matrix::identity(2);
        assert_mat_close(&ridge_solve(&i2, &i2, 0.0).unwrap(), &i2, 1e-15);
        assert_mat_close(&ridge_solve(&i2, &i2, 1.0).unwrap(), &i2.scaled(0.5), 1e-15);
        assert_mat_close(
            &ridge_solve(&i2.scaled(2.0), &i2, 0.0).unwrap(),
            &i2.scaled(0.5),
            1e-15,
        );
    }

    #[test]
    fn ridge_singular_at_zero_lambda() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0]]).unwrap();
        let y = Matrix::identity(2);
        assert!(matches!(
            ridge_solve(&x, &y, 0.0),
            Err(Error::SingularSystem)
        ));
        assert!(ridge_solve(&x, &y, 0.1).is_ok());
    }

    #[test]
    fn ridge_infinite_lambda_is_zero() {
        let x = Matrix::identity(3);
        let w = ridge_solve(&x, &x, f64::INFINITY).unwrap();
        assert_eq!(w, Matrix::zeros(3, 3));
    }

    #[test]
    fn ridge_rejects_negative_lambda() {
        let x = Matrix::identity(2);
        assert!(ridge_solve(&x, &x, -1.0).is_err());
    }
}
