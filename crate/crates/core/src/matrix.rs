//! Dense row-major `f64` matrices and the handful of linear-algebra kernels
//! the rest of the crate is built on.
//!
//! Summation order in every product is fixed (`i`, then `k`, then `j`), so
//! results are bitwise reproducible for identical inputs.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Default relative tolerance for spectral norms.
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Default iteration cap for power iteration.
pub const SPECTRAL_MAX_ITERS: usize = 10_000;
/// Default off-diagonal tolerance for the Jacobi eigensolver.
pub const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    /// Builds a matrix from row-major data. Fails if the length is not
    /// `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::shape(
                    "from_rows",
                    format!("{c} columns"),
                    format!("{} columns in row {i}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn column(values: &[f64]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col_vec(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self * other`. Panics on a dimension mismatch; use [`matmul`] for a
    /// checked product.
    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Matrix::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ * other` without materializing the transpose.
    pub fn tmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.rows, other.rows,
            "tmul: ({}x{})ᵀ * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let m = self.cols;
        let n = other.cols;
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..self.rows {
                let a = self.data[k * m + i];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * otherᵀ`.
    pub fn mul_t(&self, other: &Matrix) -> Matrix {
        self.mul(&other.transpose())
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "elementwise op shape mismatch");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (s, &o) in self.data.iter_mut().zip(&other.data) {
            *s += alpha * o;
        }
    }

    pub fn add_identity(&self, s: f64) -> Matrix {
        let mut m = self.clone();
        let n = self.rows.min(self.cols);
        for i in 0..n {
            m.data[i * self.cols + i] += s;
        }
        m
    }

    /// Frobenius inner product `Σ a_ij b_ij`.
    pub fn frob_dot(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "frob_dot shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Largest absolute entry of `self - selfᵀ`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    /// Spectral norm as `sqrt(λ_max(AᵀA))` from the Jacobi eigensolver.
    ///
    /// Unlike [`spectral_norm`] this does not slow down when the top singular
    /// values cluster, which is the normal state of near-identity layers.
    pub fn norm2(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let gram = self.tmul(self);
        match sym_eig(&gram, JACOBI_TOL) {
            Ok(eig) => eig[eig.len() - 1].max(0.0).sqrt(),
            Err(_) => spectral_norm(self, SPECTRAL_TOL, SPECTRAL_MAX_ITERS)
                .unwrap_or_else(|e| match e {
                    Error::NoConvergence { estimate, .. } => estimate,
                    _ => f64::NAN,
                }),
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Checked matrix product.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            format!("lhs cols == rhs rows ({})", a.cols),
            format!("{}x{} * {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    Ok(a.mul(b))
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    a.sum_sq().sqrt()
}

fn vec_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sym_matvec(s: &Matrix, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = s.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// Largest singular value of `a` by power iteration on `AᵀA`.
///
/// Starts from the normalized all-ones vector and stops once the eigen
/// residual `‖AᵀA v − λ v‖ ≤ tol·λ`. The zero matrix returns 0 immediately.
pub fn spectral_norm(a: &Matrix, tol: f64, max_iters: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("spectral_norm: tol must be > 0, got {tol}")));
    }
    if a.is_zero() {
        return Ok(0.0);
    }
    let gram = a.tmul(a);
    let n = gram.rows;
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    sym_matvec(&gram, &v, &mut w);
    // All-ones can be annihilated (e.g. rows summing to zero); switch to a
    // fixed irregular start vector.
    if vec_norm(&w) <= 1e-300_f64.max(1e-14 * gram.max_abs()) {
        for (i, x) in v.iter_mut().enumerate() {
            *x = 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract();
        }
        let nv = vec_norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
    }
    let mut lambda = 0.0;
    for _ in 0..max_iters {
        sym_matvec(&gram, &v, &mut w);
        lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let resid = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if resid <= tol * lambda {
            return Ok(lambda.max(0.0).sqrt());
        }
        let nw = vec_norm(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    Err(Error::NoConvergence {
        op: "spectral_norm",
        iterations: max_iters,
        estimate: lambda.max(0.0).sqrt(),
        vector: v,
    })
}

/// All eigenvalues of a symmetric matrix in ascending order, by cyclic
/// Jacobi rotations until the off-diagonal Frobenius norm is at most
/// `tol·‖S‖_F`.
pub fn sym_eig(s: &Matrix, tol: f64) -> Result<Vec<f64>> {
    if !s.is_square() {
        return Err(Error::shape("sym_eig", "square matrix", format!("{}x{}", s.rows, s.cols)));
    }
    let scale = s.max_abs();
    if s.asymmetry() > tol.max(1e-12) * scale.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "sym_eig: matrix is not symmetric (max |S - Sᵀ| = {:e})",
            s.asymmetry()
        )));
    }
    let n = s.rows;
    let mut a = s.clone();
    let total = frobenius_norm(&a);
    if total == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let off = |a: &Matrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[(i, j)] * a[(i, j)];
                }
            }
        }
        acc.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > tol * total {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                op: "sym_eig",
                iterations: sweeps,
                estimate: off(&a),
                vector: (0..n).map(|i| a[(i, i)]).collect(),
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                // A <- Jᵀ A J, touching rows/cols p and q only.
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
        sweeps += 1;
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

pub fn sym_eig_min(s: &Matrix, tol: f64) -> Result<f64> {
    Ok(sym_eig(s, tol)?[0])
}

/// Spectral norm of a symmetric matrix: the largest eigenvalue magnitude.
pub fn sym_spectral_norm(s: &Matrix) -> Result<f64> {
    let eig = sym_eig(s, JACOBI_TOL)?;
    Ok(eig[0].abs().max(eig[eig.len() - 1].abs()))
}

/// `sqrt(λ_min(AᵀA))`, floored at zero.
pub fn min_singular(a: &Matrix, tol: f64) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::shape("min_singular", "square matrix", format!("{}x{}", a.rows, a.cols)));
    }
    Ok(sym_eig_min(&a.tmul(a), tol)?.max(0.0).sqrt())
}

/// `S^k` by repeated squaring; `S^0 = I`.
pub fn sym_matrix_power(s: &Matrix, k: u32) -> Result<Matrix> {
    if !s.is_square() {
        return Err(Error::shape("sym_matrix_power", "square matrix", format!("{}x{}", s.rows, s.cols)));
    }
    let mut result: Option<Matrix> = None;
    let mut base = s.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r.mul(&base),
            });
        }
        e >>= 1;
        if e > 0 {
            base = base.mul(&base);
        }
    }
    Ok(result.unwrap_or_else(|| Matrix::identity(s.rows)))
}

/// I.i.d. `N(mean, std²)` entries drawn in row-major order.
pub fn gaussian_matrix(rows: usize, cols: usize, mean: f64, std: f64, rng: &mut RngState) -> Result<Matrix> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::InvalidInput(format!("gaussian_matrix: std must be finite and >= 0, got {std}")));
    }
    let data = (0..rows * cols).map(|_| mean + std * rng.next_normal()).collect();
    Ok(Matrix { rows, cols, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let swap = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(matmul(&a, &swap).unwrap(), m(&[&[2.0, 1.0], &[4.0, 3.0]]));

        let mut rng = RngState::new(3);
        let b = gaussian_matrix(3, 3, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(matmul(&Matrix::identity(3), &b).unwrap(), b);
        assert!(matmul(&b, &Matrix::zeros(3, 3)).unwrap().is_zero());
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn transposed_products_agree() {
        let mut rng = RngState::new(9);
        let a = gaussian_matrix(4, 3, 0.0, 1.0, &mut rng).unwrap();
        let b = gaussian_matrix(4, 5, 0.0, 1.0, &mut rng).unwrap();
        let c = gaussian_matrix(3, 5, 0.0, 1.0, &mut rng).unwrap();
        assert!(a.tmul(&b).sub(&a.transpose().mul(&b)).max_abs() < 1e-14);
        assert!(b.mul_t(&c).sub(&b.mul(&c.transpose())).max_abs() < 1e-14);
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&Matrix::identity(4)), 2.0);
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 2)), 0.0);
        assert_eq!(frobenius_norm(&m(&[&[3.0, 4.0]])), 5.0);
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&Matrix::identity(5), 1e-10, 100).unwrap() - 1.0).abs() < 1e-12);
        assert!((spectral_norm(&Matrix::diag(&[3.0, 1.0]), 1e-10, 1000).unwrap() - 3.0).abs() < 1e-9);
        assert_eq!(spectral_norm(&Matrix::zeros(3, 3), 1e-10, 10).unwrap(), 0.0);
        // Rows sum to zero, so the all-ones start is annihilated.
        let a = m(&[&[1.0, -1.0], &[1.0, -1.0]]);
        assert!((spectral_norm(&a, 1e-10, 1000).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_rejects_bad_tol() {
        assert!(spectral_norm(&Matrix::identity(2), 0.0, 10).is_err());
    }

    #[test]
    fn spectral_norm_reports_nonconvergence() {
        let a = Matrix::diag(&[1.0, 0.999_999]);
        let b = a.add(&m(&[&[0.0, 1e-3], &[0.0, 0.0]]));
        match spectral_norm(&b, 1e-15, 3) {
            Err(Error::NoConvergence { iterations, vector, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(vector.len(), 2);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn spectral_norm_matches_jacobi_on_random() {
        let mut rng = RngState::new(42);
        for _ in 0..20 {
            let a = gaussian_matrix(5, 5, 0.0, 1.0, &mut rng).unwrap();
            let s = spectral_norm(&a, 1e-10, 10_000).unwrap();
            let eig = sym_eig(&a.tmul(&a), 1e-15).unwrap();
            let top = eig[4].sqrt();
            assert!((s - top).abs() <= 1e-9 * top, "{s} vs {top}");
            assert!(s <= frobenius_norm(&a) * (1.0 + 1e-10));
        }
    }

    #[test]
    fn eig_examples() {
        assert_eq!(sym_eig_min(&Matrix::identity(4), 1e-14).unwrap(), 1.0);
        assert_eq!(sym_eig_min(&Matrix::diag(&[2.0, 5.0, -1.0]), 1e-14).unwrap(), -1.0);
        let mut rng = RngState::new(5);
        let a = gaussian_matrix(6, 6, 0.0, 1.0, &mut rng).unwrap();
        assert!(sym_eig_min(&a.tmul(&a), 1e-14).unwrap() >= -1e-12);
    }

    #[test]
    fn eig_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let eig = sym_eig(&m(&[&[2.0, 1.0], &[1.0, 2.0]]), 1e-15).unwrap();
        assert!((eig[0] - 1.0).abs() < 1e-14 && (eig[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let err = sym_eig_min(&m(&[&[1.0, 2.0], &[0.0, 1.0]]), 1e-12).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn min_singular_examples() {
        assert!((min_singular(&Matrix::identity(3), 1e-14).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(min_singular(&m(&[&[1.0, 1.0], &[1.0, 1.0]]), 1e-14).unwrap(), 0.0);
        assert!((min_singular(&Matrix::diag(&[0.5, 2.0]), 1e-14).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn power_examples() {
        let s = m(&[&[2.0, 1.0], &[1.0, 3.0]]);
        assert_eq!(sym_matrix_power(&s, 0).unwrap(), Matrix::identity(2));
        assert_eq!(sym_matrix_power(&s, 1).unwrap(), s);
        assert_eq!(sym_matrix_power(&Matrix::identity(3), 7).unwrap(), Matrix::identity(3));
        assert_eq!(sym_matrix_power(&Matrix::diag(&[2.0]), 10).unwrap(), Matrix::diag(&[1024.0]));
        let cube = s.mul(&s).mul(&s);
        assert!(sym_matrix_power(&s, 3).unwrap().sub(&cube).max_abs() < 1e-12);
    }

    #[test]
    fn gaussian_examples() {
        let mut rng = RngState::new(1);
        let c = gaussian_matrix(2, 3, 1.5, 0.0, &mut rng).unwrap();
        assert_eq!(c, Matrix::filled(2, 3, 1.5));

        let a = gaussian_matrix(4, 4, 0.0, 1.0, &mut RngState::new(77)).unwrap();
        let b = gaussian_matrix(4, 4, 0.0, 1.0, &mut RngState::new(77)).unwrap();
        assert_eq!(a, b);

        assert!(gaussian_matrix(1, 1, 0.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let n = 100_000;
        let (mean, std) = (0.5, 2.0);
        let g = gaussian_matrix(n, 1, mean, std, &mut RngState::new(2024)).unwrap();
        let xs = g.as_slice();
        let m1 = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - m1).powi(2)).sum::<f64>() / (n - 1) as f64;
        // standard errors: std/sqrt(n) for the mean, std²·sqrt(2/(n-1)) for the variance
        let se_mean = std / (n as f64).sqrt();
        let se_var = std * std * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((m1 - mean).abs() < 3.0 * se_mean, "mean {m1}");
        assert!((var - std * std).abs() < 3.0 * se_var, "var {var}");
    }
}
