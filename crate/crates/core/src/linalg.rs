//! Small dense matrices, a cyclic Jacobi eigensolver for complex Hermitian
//! matrices, and a pivoted Cholesky factorization for PSD covariances.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{validation, Error, Result};

/// Row-major dense square-or-rectangular real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * factor).collect() }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &RMatrix) -> RMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = RMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Max elementwise |A - B|.
    pub fn max_abs_diff(&self, other: &RMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn to_complex(&self) -> CMatrix {
        assert_eq!(self.rows, self.cols, "to_complex expects a square matrix");
        CMatrix::from_fn(self.rows, |i, j| Complex64::new(self[(i, j)], 0.0))
    }
}

impl serde::Serialize for RMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.rows()))?;
        for i in 0..self.rows() {
            seq.serialize_element(self.row(i))?;
        }
        seq.end()
    }
}

impl Index<(usize, usize)> for RMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Row-major dense square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn from_vec(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return validation(format!("expected {} entries for a {dim}x{dim} matrix, got {}", dim * dim, data.len()));
        }
        Ok(Self { dim, data })
    }

    /// |psi><psi|
    pub fn outer(psi: &[Complex64]) -> Self {
        Self::from_fn(psi.len(), |i, j| psi[i] * psi[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest |A_ij - conj(A_ji)|.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-13;

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// unitary whose columns are the matching eigenvectors.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(matrix: &CMatrix) -> Result<Vec<f64>> {
    jacobi(matrix, false).map(|e| e.values)
}

pub fn hermitian_eigen(matrix: &CMatrix) -> Result<HermitianEigen> {
    jacobi(matrix, true)
}

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi with complex rotations. Each rotation first removes the
/// phase of the pivot, then applies the classic real rotation.
fn jacobi(matrix: &CMatrix, want_vectors: bool) -> Result<HermitianEigen> {
    let n = matrix.dim();
    let scale = matrix.frobenius_norm();
    if matrix.hermiticity_defect() > 1e-10 * scale.max(1.0) {
        return validation(format!(
            "matrix is not Hermitian (defect {:.3e})",
            matrix.hermiticity_defect()
        ));
    }
    let mut a = matrix.clone();
    // Symmetrize exactly so rounding in the input cannot stall convergence.
    for i in 0..n {
        a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)].conj());
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
    let mut v = if want_vectors { CMatrix::identity(n) } else { CMatrix::zeros(0) };
    let target = JACOBI_REL_TOL * scale;

    let mut converged = n < 2 || scale == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let abs = apq.norm();
                if abs == 0.0 {
                    continue;
                }
                let phase = apq / abs;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * abs);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    0.0
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let pc = phase.conj();
                // columns: A <- A U
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - akq * pc * s;
                    a[(k, q)] = akp * s + akq * pc * c;
                }
                // rows: A <- U^H A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c - aqk * phase * s;
                    a[(q, k)] = apk * s + aqk * phase * c;
                }
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
                if want_vectors {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = vkp * c - vkq * pc * s;
                        v[(k, q)] = vkp * s + vkq * pc * c;
                    }
                }
            }
        }
        converged = off_diagonal_norm(&a) <= target;
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps (off-diagonal {:.3e})",
            off_diagonal_norm(&a)
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = if want_vectors {
        CMatrix::from_fn(n, |row, col| v[(row, order[col])])
    } else {
        CMatrix::zeros(0)
    };
    Ok(HermitianEigen { values, vectors })
}

/// Output of [`pivoted_cholesky`]: `factor * factor^T` reproduces the input
/// up to the truncation tolerance.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    /// n x rank lower-trapezoidal factor (in the original row order).
    pub factor: RMatrix,
    /// Pivot order used while factoring.
    pub pivots: Vec<usize>,
    pub rank: usize,
}

/// Diagonal-pivoted Cholesky of a symmetric PSD matrix. Stops once the
/// largest remaining diagonal falls below `rel_tol * max_diag`.
pub fn pivoted_cholesky(matrix: &RMatrix, rel_tol: f64) -> Result<PivotedCholesky> {
    let n = matrix.rows();
    if matrix.cols() != n {
        return validation("pivoted Cholesky needs a square matrix");
    }
    let scale = matrix.max_abs();
    for i in 0..n {
        for j in 0..i {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return validation("pivoted Cholesky needs a symmetric matrix");
            }
        }
    }
    let mut diag: Vec<f64> = (0..n).map(|i| matrix[(i, i)]).collect();
    let max_diag = diag.iter().cloned().fold(0.0, f64::max);
    let floor = rel_tol * max_diag;
    if diag.iter().any(|&d| d < -floor.max(1e-300)) {
        return Err(Error::Model("covariance has a negative diagonal entry".into()));
    }

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut pivots = Vec::new();
    let mut used = vec![false; n];
    while columns.len() < n {
        let (piv, &dmax) = diag
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one unused pivot");
        if dmax <= floor || dmax <= 0.0 {
            break;
        }
        let root = dmax.sqrt();
        let mut col = vec![0.0; n];
        col[piv] = root;
        for i in 0..n {
            if used[i] || i == piv {
                continue;
            }
            let mut v = matrix[(i, piv)];
            for prev in &columns {
                v -= prev[i] * prev[piv];
            }
            col[i] = v / root;
        }
        used[piv] = true;
        for i in 0..n {
            if !used[i] {
                diag[i] -= col[i] * col[i];
            }
        }
        pivots.push(piv);
        columns.push(col);
    }

    let rank = columns.len();
    let factor = RMatrix::from_fn(n, rank, |i, k| columns[k][i]);
    Ok(PivotedCholesky { factor, pivots, rank })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = CMatrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = c(rng.gen_range(-1.0..1.0), 0.0);
            for j in (i + 1)..n {
                let v = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        m
    }

    #[test]
    fn identity_eigenvalues_are_one() {
        let vals = hermitian_eigenvalues(&CMatrix::identity(5)).unwrap();
        assert!(vals.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn diagonal_sorted() {
        let m = CMatrix::from_fn(3, |i, j| if i == j { c([3.0, 1.0, 2.0][i], 0.0) } else { c(0.0, 0.0) });
        assert_eq!(hermitian_eigenvalues(&m).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn random_hermitian_reconstructs() {
        for seed in 0..5 {
            let a = random_hermitian(8, seed);
            let eig = hermitian_eigen(&a).unwrap();
            let sum: f64 = eig.values.iter().sum();
            assert!((sum - a.trace().re).abs() < 1e-11);
            for (k, lambda) in eig.values.iter().enumerate() {
                for i in 0..8 {
                    let av: Complex64 = (0..8).map(|j| a[(i, j)] * eig.vectors[(j, k)]).sum();
                    assert!((av - eig.vectors[(i, k)] * lambda).norm() < 1e-10);
                }
            }
            let vhv = eig.vectors.adjoint().matmul(&eig.vectors);
            assert!(vhv.max_abs_diff(&CMatrix::identity(8)) < 1e-12);
        }
    }

    #[test]
    fn pauli_y_has_plus_minus_one() {
        let m = CMatrix::from_vec(2, vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]).unwrap();
        let vals = hermitian_eigenvalues(&m).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = CMatrix::from_vec(2, vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(matches!(hermitian_eigenvalues(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn cholesky_of_diagonal_is_elementwise_sqrt() {
        let d = [4.0, 9.0, 0.25];
        let m = RMatrix::from_fn(3, 3, |i, j| if i == j { d[i] } else { 0.0 });
        let chol = pivoted_cholesky(&m, 1e-12).unwrap();
        assert_eq!(chol.rank, 3);
        for k in 0..3 {
            let piv = chol.pivots[k];
            for i in 0..3 {
                let expected = if i == piv { d[piv].sqrt() } else { 0.0 };
                assert_eq!(chol.factor[(i, k)], expected);
            }
        }
    }

    #[test]
    fn cholesky_detects_rank() {
        let v = [1.0, 2.0, -1.0, 0.5];
        let m = RMatrix::from_fn(4, 4, |i, j| v[i] * v[j]);
        let chol = pivoted_cholesky(&m, 1e-12).unwrap();
        assert_eq!(chol.rank, 1);
        let rec = chol.factor.matmul(&chol.factor.transpose());
        assert!(rec.max_abs_diff(&m) < 1e-14);
    }
}
