//! Dense linear algebra for the small symmetric matrices used throughout
//! (covariances and Gram matrices, dimension rarely above 8).
//!
//! Eigenvalues come from cyclic Jacobi rotations, which are exact enough at
//! these sizes that positivity decisions can use a 1e-12 tolerance.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    /// Diagonal matrix from the given entries.
    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Matrix::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Block-diagonal assembly of square blocks.
    pub fn block_diag(blocks: &[Matrix]) -> Self {
        let n: usize = blocks.iter().map(|b| b.rows).sum();
        let mut m = Matrix::zeros(n, n);
        let mut off = 0;
        for b in blocks {
            assert_eq!(b.rows, b.cols);
            for i in 0..b.rows {
                for j in 0..b.cols {
                    m[(off + i, off + j)] = b[(i, j)];
                }
            }
            off += b.rows;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
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

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let mut m = self.clone();
        for v in &mut m.data {
            *v *= s;
        }
        m
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut m = self.clone();
        for (v, w) in m.data.iter_mut().zip(&other.data) {
            *v += w;
        }
        m
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition of a symmetric matrix: `a = v * diag(values) * v^T`,
/// eigenvectors in the columns of `v`, eigenvalues ascending.
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn sym_eigen(a: &Matrix) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.rows(), got: a.cols() });
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale: f64 = m.data.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
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
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap());
    let values: Vec<f64> = idx.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = v[(row, i)];
        }
    }
    Ok(SymEigen { values, vectors })
}

pub fn min_eigenvalue(a: &Matrix) -> Result<f64> {
    Ok(*sym_eigen(a)?.values.first().ok_or(Error::EmptySample)?)
}

pub fn max_eigenvalue(a: &Matrix) -> Result<f64> {
    Ok(*sym_eigen(a)?.values.last().ok_or(Error::EmptySample)?)
}

/// Apply `f` to the spectrum of a symmetric matrix.
fn sym_map(a: &Matrix, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    let eig = sym_eigen(a)?;
    let n = a.rows();
    let mut out = Matrix::zeros(n, n);
    for k in 0..n {
        let fv = f(eig.values[k]);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += fv * eig.vectors[(i, k)] * eig.vectors[(j, k)];
            }
        }
    }
    Ok(out)
}

fn require_spd(a: &Matrix, floor: f64) -> Result<()> {
    let min = min_eigenvalue(a)?;
    if min <= floor {
        return Err(Error::NotSpd(min));
    }
    Ok(())
}

/// Symmetric square root of an SPD matrix (eigenvalue floor 1e-10).
pub fn sym_sqrt(a: &Matrix) -> Result<Matrix> {
    require_spd(a, 1e-10)?;
    sym_map(a, f64::sqrt)
}

/// Symmetric inverse square root of an SPD matrix (eigenvalue floor 1e-10).
pub fn sym_inv_sqrt(a: &Matrix) -> Result<Matrix> {
    require_spd(a, 1e-10)?;
    sym_map(a, |v| 1.0 / v.sqrt())
}

/// Inverse of an SPD matrix via the eigendecomposition.
pub fn sym_inverse(a: &Matrix) -> Result<Matrix> {
    require_spd(a, 1e-12)?;
    sym_map(a, |v| 1.0 / v)
}

/// Determinant of a symmetric matrix (product of eigenvalues).
pub fn sym_det(a: &Matrix) -> Result<f64> {
    Ok(sym_eigen(a)?.values.iter().product())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn eigen_2x2() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let e = sym_eigen(&a).unwrap();
        close(e.values[0], 1.0, 1e-12);
        close(e.values[1], 3.0, 1e-12);
    }

    #[test]
    fn sqrt_round_trip() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]]);
        let r = sym_sqrt(&a).unwrap();
        let back = r.matmul(&r);
        for i in 0..3 {
            for j in 0..3 {
                close(back[(i, j)], a[(i, j)], 1e-10);
            }
        }
    }

    #[test]
    fn inv_sqrt_whitens() {
        let a = Matrix::from_rows(&[vec![2.0, 0.7], vec![0.7, 1.5]]);
        let w = sym_inv_sqrt(&a).unwrap();
        let id = w.matmul(&a).matmul(&w);
        for i in 0..2 {
            for j in 0..2 {
                close(id[(i, j)], if i == j { 1.0 } else { 0.0 }, 1e-10);
            }
        }
    }

    #[test]
    fn rejects_non_spd() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(sym_sqrt(&a), Err(Error::NotSpd(_))));
    }
}
