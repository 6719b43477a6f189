//! Small dense row-major matrices: products, LU solves and a Jacobi SVD for
//! pseudo-inverses. Sized for 3×n observation matrices, not for speed.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix is singular")]
    Singular,
    #[error("rank deficient: rank {rank}, need {needed}")]
    RankDeficient { rank: usize, needed: usize },
}

#[derive(Debug, Clone, PartialEq)]
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

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
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

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = rhs.row(k);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix, LinalgError> {
        if self.shape() != rhs.shape() {
            return Err(LinalgError::DimensionMismatch {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Sum of squared entries.
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn frobenius(&self) -> f64 {
        libm::sqrt(self.frobenius_sq())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Solves `self · X = rhs` for square `self` by LU with partial pivoting.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix, LinalgError> {
        let n = self.rows;
        if self.cols != n || rhs.rows != n {
            return Err(LinalgError::DimensionMismatch {
                left: self.shape(),
                right: rhs.shape(),
            });
        }
        let mut a = self.clone();
        let mut b = rhs.clone();
        let scale = a.data.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        if scale == 0.0 {
            return Err(LinalgError::Singular);
        }
        for col in 0..n {
            let (pivot, pmag) =
                (col..n)
                    .map(|r| (r, libm::fabs(a[(r, col)])))
                    .fold(
                        (col, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pmag <= scale * f64::EPSILON * n as f64 {
                return Err(LinalgError::Singular);
            }
            if pivot != col {
                a.swap_rows(pivot, col);
                b.swap_rows(pivot, col);
            }
            let d = a[(col, col)];
            for r in col + 1..n {
                let f = a[(r, col)] / d;
                if f == 0.0 {
                    continue;
                }
                for c in col..n {
                    let v = a[(col, c)];
                    a[(r, c)] -= f * v;
                }
                for c in 0..b.cols {
                    let v = b[(col, c)];
                    b[(r, c)] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let d = a[(col, col)];
            for c in 0..b.cols {
                let mut acc = b[(col, c)];
                for k in col + 1..n {
                    acc -= a[(col, k)] * b[(k, c)];
                }
                b[(col, c)] = acc / d;
            }
        }
        Ok(b)
    }

    pub fn inverse(&self) -> Result<Matrix, LinalgError> {
        self.solve(&Matrix::identity(self.rows))
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let wide = self.rows <= self.cols;
        let tall = if wide { self.transpose() } else { self.clone() };
        let svd = JacobiSvd::of_tall(&tall);
        let mut s = svd.sigma;
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Numerical rank, with the conventional `max(m, n)·ε·σ_max` cutoff.
    pub fn rank(&self) -> usize {
        let s = self.singular_values();
        let tol = rank_tolerance(self.rows, self.cols, s.first().copied().unwrap_or(0.0));
        s.iter().filter(|v| **v > tol).count()
    }

    /// Moore–Penrose pseudo-inverse through a one-sided Jacobi SVD. Reports
    /// rank deficiency instead of truncating small singular values.
    pub fn pseudo_inverse(&self) -> Result<Matrix, LinalgError> {
        let needed = self.rows.min(self.cols);
        if self.rows <= self.cols {
            // A = (Aᵀ)ᵀ, and pinv(A) = pinv(Aᵀ)ᵀ.
            Ok(JacobiSvd::of_tall(&self.transpose())
                .pseudo_inverse(needed)?
                .transpose())
        } else {
            JacobiSvd::of_tall(self).pseudo_inverse(needed)
        }
    }
}

fn rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// One-sided Jacobi on the columns of a tall matrix `X` (p×q, p ≥ q):
/// `X V = B` with mutually orthogonal columns, so `X = U Σ Vᵀ` with
/// `σ_j = ‖b_j‖` and `U = B Σ⁻¹`.
struct JacobiSvd {
    rows: usize,
    cols: usize,
    b: Matrix,
    v: Matrix,
    sigma: Vec<f64>,
}

impl JacobiSvd {
    fn of_tall(x: &Matrix) -> Self {
        let (p, q) = x.shape();
        let mut b = x.clone();
        let mut v = Matrix::identity(q);
        for _sweep in 0..60 {
            let mut rotated = false;
            for i in 0..q {
                for j in i + 1..q {
                    let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                    for r in 0..p {
                        let bi = b[(r, i)];
                        let bj = b[(r, j)];
                        alpha += bi * bi;
                        beta += bj * bj;
                        gamma += bi * bj;
                    }
                    if gamma == 0.0 || libm::fabs(gamma) <= f64::EPSILON * libm::sqrt(alpha * beta)
                    {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = libm::copysign(1.0, zeta)
                        / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                    let c = 1.0 / libm::sqrt(1.0 + t * t);
                    let s = c * t;
                    for r in 0..p {
                        let bi = b[(r, i)];
                        let bj = b[(r, j)];
                        b[(r, i)] = c * bi - s * bj;
                        b[(r, j)] = s * bi + c * bj;
                    }
                    for r in 0..q {
                        let vi = v[(r, i)];
                        let vj = v[(r, j)];
                        v[(r, i)] = c * vi - s * vj;
                        v[(r, j)] = s * vi + c * vj;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let sigma = (0..q)
            .map(|c| libm::sqrt((0..p).map(|r| b[(r, c)] * b[(r, c)]).sum::<f64>()))
            .collect();
        Self {
            rows: p,
            cols: q,
            b,
            v,
            sigma,
        }
    }

    /// `X⁺ = V Σ⁻² Bᵀ` (q×p).
    fn pseudo_inverse(&self, needed: usize) -> Result<Matrix, LinalgError> {
        let smax = self.sigma.iter().fold(0.0f64, |m, s| m.max(*s));
        let tol = rank_tolerance(self.rows, self.cols, smax);
        let rank = self.sigma.iter().filter(|s| **s > tol).count();
        if rank < needed || smax == 0.0 {
            return Err(LinalgError::RankDeficient { rank, needed });
        }
        let mut out = Matrix::zeros(self.cols, self.rows);
        for k in 0..self.cols {
            let inv_sq = 1.0 / (self.sigma[k] * self.sigma[k]);
            for i in 0..self.cols {
                let f = self.v[(i, k)] * inv_sq;
                if f == 0.0 {
                    continue;
                }
                for j in 0..self.rows {
                    out[(i, j)] += f * self.b[(j, k)];
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn approx(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.shape() == b.shape() && a.sub(b).unwrap().frobenius() <= tol
    }

    #[test]
    fn solve_matches_known_inverse() {
        let a = Matrix::from_row_major(3, 3, vec![4.0, 7.0, 2.0, 3.0, 6.0, 1.0, 2.0, 5.0, 3.0]);
        let inv = a.inverse().unwrap();
        assert!(approx(
            &a.matmul(&inv).unwrap(),
            &Matrix::identity(3),
            1e-12
        ));
    }

    #[test]
    fn singular_is_reported() {
        let a = Matrix::from_row_major(3, 3, vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(a.inverse(), Err(LinalgError::Singular));
        assert_eq!(Matrix::zeros(3, 3).inverse(), Err(LinalgError::Singular));
    }

    #[test]
    fn pinv_satisfies_penrose_conditions() {
        let a = Matrix::from_fn(3, 7, |r, c| libm::sin((r * 7 + c) as f64 * 1.3) + r as f64);
        let p = a.pseudo_inverse().unwrap();
        assert_eq!(p.shape(), (7, 3));
        let apa = a.matmul(&p).unwrap().matmul(&a).unwrap();
        assert!(approx(&apa, &a, 1e-10));
        let pap = p.matmul(&a).unwrap().matmul(&p).unwrap();
        assert!(approx(&pap, &p, 1e-10));
        // Full row rank: A A⁺ = I.
        assert!(approx(&a.matmul(&p).unwrap(), &Matrix::identity(3), 1e-10));
        let tall = a.transpose();
        let pt = tall.pseudo_inverse().unwrap();
        assert!(approx(&pt, &p.transpose(), 1e-10));
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let a = Matrix::from_row_major(
            3,
            4,
            vec![1.0, 2.0, 3.0, 4.0, 2.0, 4.0, 6.0, 8.0, 0.0, 1.0, 0.0, 1.0],
        );
        assert_eq!(a.rank(), 2);
        assert_eq!(
            a.pseudo_inverse(),
            Err(LinalgError::RankDeficient { rank: 2, needed: 3 })
        );
    }
}
