//! Dense real matrices and a symmetric eigensolver.
//!
//! Everything the crate diagonalises is real symmetric: the driver, catalyst
//! and problem terms are real in both the computational and the Dicke basis.
//! The solver is the classic two-stage scheme (Householder tridiagonalisation
//! followed by implicit QL with Wilkinson-style shifts), run on transposed
//! storage so the hot loops walk contiguous memory.

use std::ops::{Index, IndexMut};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: T, other: &Matrix<T>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * b;
        }
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| alpha * x).collect(),
        }
    }

    /// `alpha * a + beta * b + gamma * c`, all the same shape.
    pub fn combine3(alpha: T, a: &Self, beta: T, b: &Self, gamma: T, c: &Self) -> Self {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols));
        assert_eq!((a.rows, a.cols), (c.rows, c.cols));
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .zip(&c.data)
            .map(|((&x, &y), &z)| alpha * x + beta * y + gamma * z)
            .collect();
        Self {
            rows: a.rows,
            cols: a.cols,
            data,
        }
    }

    pub fn matmul(&self, rhs: &Matrix<T>) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    /// `self * rhs^T`, i.e. dot products of rows.
    pub fn matmul_transposed(&self, rhs: &Matrix<T>) -> Self {
        assert_eq!(self.cols, rhs.cols, "matmul_transposed shape mismatch");
        Self::from_fn(self.rows, rhs.rows, |i, j| dot(self.row(i), rhs.row(j)))
    }

    /// `rows * self * rows^T`, the change of basis onto the row vectors of `rows`.
    pub fn conjugate_by_rows(&self, rows: &Matrix<T>) -> Self {
        rows.matmul(self).matmul_transposed(rows)
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    pub fn mul_complex_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| {
                let mut re = T::zero();
                let mut im = T::zero();
                for (&a, z) in self.row(r).iter().zip(v) {
                    re = re + a * z.re;
                    im = im + a * z.im;
                }
                Complex::new(re, im)
            })
            .collect()
    }

    /// `self^T v` without forming the transpose.
    pub fn transpose_mul_complex_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.cols];
        for (r, z) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                o.re = o.re + a * z.re;
                o.im = o.im + a * z.im;
            }
        }
        out
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &Matrix<T>) -> Self {
        let rows = self.rows * rhs.rows;
        let cols = self.cols * rhs.cols;
        Self::from_fn(rows, cols, |r, c| {
            self[(r / rhs.rows, c / rhs.cols)] * rhs[(r % rhs.rows, c % rhs.cols)]
        })
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn max_asymmetry(&self) -> T {
        assert!(self.is_square());
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Values widened to f64, row-major.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.to_f64_lossy()).collect()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `|<a|z>|^2` for a real `a` and complex `z`.
#[inline]
pub fn overlap_sq<T: Real>(a: &[T], z: &[Complex<T>]) -> T {
    let mut re = T::zero();
    let mut im = T::zero();
    for (&x, w) in a.iter().zip(z) {
        re = re + x * w.re;
        im = im + x * w.im;
    }
    re * re + im * im
}

pub fn norm_sq<T: Real>(z: &[Complex<T>]) -> T {
    z.iter().map(|w| w.norm_sqr()).sum()
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// Row `a` holds the normalised eigenvector of `values[a]`.
    pub vectors: Option<Matrix<T>>,
}

impl<T: Real> SymmetricEigen<T> {
    /// Eigenvalues and eigenvectors.
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        decompose(a, true)
    }

    /// Eigenvalues only; skips the accumulation of transformations.
    pub fn values_only(a: &Matrix<T>) -> Result<Vec<T>> {
        decompose(a, false).map(|e| e.values)
    }

    pub fn vector(&self, a: usize) -> &[T] {
        self.vectors
            .as_ref()
            .expect("decomposition computed without eigenvectors")
            .row(a)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

const MAX_QL_SWEEPS: usize = 64;

fn decompose<T: Real>(a: &Matrix<T>, want_vectors: bool) -> Result<SymmetricEigen<T>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: a.cols(),
        });
    }
    let n = a.rows();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Vec::new(),
            vectors: want_vectors.then(|| Matrix::zeros(0, 0)),
        });
    }
    if a.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite matrix entry".into()));
    }
    // `u` holds V^T: logical element V[r][c] lives at u[c * n + r]. The
    // input is symmetric so the initial copy needs no transpose.
    let mut u = a.as_slice().to_vec();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    householder_tridiagonal(&mut u, &mut d, &mut e, n, want_vectors);
    implicit_ql(&mut u, &mut d, &mut e, n, want_vectors)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let values: Vec<T> = order.iter().map(|&i| d[i]).collect();
    let vectors = if want_vectors {
        let mut data = Vec::with_capacity(n * n);
        for &i in &order {
            data.extend_from_slice(&u[i * n..(i + 1) * n]);
        }
        Some(Matrix::from_row_major(n, n, data)?)
    } else {
        None
    };
    Ok(SymmetricEigen { values, vectors })
}

fn householder_tridiagonal<T: Real>(
    u: &mut [T],
    d: &mut [T],
    e: &mut [T],
    n: usize,
    accumulate: bool,
) {
    let zero = T::zero();
    let one = T::one();
    let two = one + one;
    macro_rules! v {
        ($r:expr, $c:expr) => {
            u[($c) * n + ($r)]
        };
    }

    for j in 0..n {
        d[j] = v!(n - 1, j);
    }

    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for dk in d.iter().take(i) {
            scale = scale + dk.abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v!(i - 1, j);
                v!(i, j) = zero;
                v!(j, i) = zero;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk = *dk / scale;
                h = h + *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }

            for j in 0..i {
                f = d[j];
                v!(j, i) = f;
                g = e[j] + v!(j, j) * f;
                // Column j of V below the diagonal is contiguous in `u`.
                let col = &u[j * n..j * n + i];
                for k in (j + 1)..i {
                    g = g + col[k] * d[k];
                    e[k] = e[k] + col[k] * f;
                }
                e[j] = g;
            }
            f = zero;
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let col = &mut u[j * n..j * n + i];
                for k in j..i {
                    col[k] = col[k] - (f * e[k] + g * d[k]);
                }
                d[j] = v!(i - 1, j);
                v!(i, j) = zero;
            }
        }
        d[i] = h;
    }

    if !accumulate {
        for j in 0..n {
            d[j] = v!(j, j);
        }
        e[0] = zero;
        return;
    }

    for i in 0..n - 1 {
        v!(n - 1, i) = v!(i, i);
        v!(i, i) = one;
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v!(k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for k in 0..=i {
                    g = g + v!(k, i + 1) * v!(k, j);
                }
                for k in 0..=i {
                    v!(k, j) = v!(k, j) - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v!(k, i + 1) = zero;
        }
    }
    for j in 0..n {
        d[j] = v!(n - 1, j);
        v!(n - 1, j) = zero;
    }
    v!(n - 1, n - 1) = one;
    e[0] = zero;
    let _ = two;
}

fn implicit_ql<T: Real>(
    u: &mut [T],
    d: &mut [T],
    e: &mut [T],
    n: usize,
    accumulate: bool,
) -> Result<()> {
    let zero = T::zero();
    let one = T::one();
    let two = one + one;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;

    let mut f = zero;
    let mut tst1 = zero;
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(Error::Eigensolver { s: f64::NAN });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if accumulate {
                        // Columns i and i+1 of V are rows i and i+1 of `u`.
                        let (lo, hi) = u.split_at_mut((i + 1) * n);
                        let vi = &mut lo[i * n..];
                        let vi1 = &mut hi[..n];
                        for (a, b) in vi.iter_mut().zip(vi1.iter_mut()) {
                            let hk = *b;
                            *b = s * *a + c * hk;
                            *a = c * *a - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = zero;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &Matrix<f64>, eig: &SymmetricEigen<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..eig.dim() {
            let v = eig.vector(k);
            let av = a.mul_vec(v);
            for (x, y) in av.iter().zip(v) {
                worst = worst.max((x - eig.values[k] * y).abs());
            }
        }
        worst
    }

    fn pseudo_random_symmetric(n: usize, seed: u64) -> Matrix<f64> {
        // Small LCG keeps the test free of RNG crates.
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x = next();
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        m
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = Matrix::from_row_major(2, 2, vec![1.0f64, 2.0, 2.0, -2.0]).unwrap();
        let eig = SymmetricEigen::new(&a).unwrap();
        // eigenvalues of [[1,2],[2,-2]]: (-1 ± 5)/2
        assert!((eig.values[0] + 3.0).abs() < 1e-14);
        assert!((eig.values[1] - 2.0).abs() < 1e-14);
        assert!(residual(&a, &eig) < 1e-13);
    }

    #[test]
    fn random_matrices_reconstruct() {
        for (n, seed) in [(1, 1), (3, 2), (17, 3), (64, 4)] {
            let a = pseudo_random_symmetric(n, seed);
            let eig = SymmetricEigen::new(&a).unwrap();
            assert!(residual(&a, &eig) < 1e-12, "n = {n}");
            let vals = SymmetricEigen::values_only(&a).unwrap();
            for (x, y) in vals.iter().zip(&eig.values) {
                assert!((x - y).abs() < 1e-12);
            }
            let trace: f64 = eig.values.iter().sum();
            assert!((trace - a.trace()).abs() < 1e-11);
            let vecs = eig.vectors.as_ref().unwrap();
            let gram = vecs.matmul_transposed(vecs);
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn degenerate_spectrum() {
        let a = Matrix::<f64>::identity(5).scaled(3.0);
        let vals = SymmetricEigen::values_only(&a).unwrap();
        assert!(vals.iter().all(|v| (v - 3.0).abs() < 1e-14));
    }

    #[test]
    fn single_precision() {
        let a = Matrix::<f32>::from_row_major(3, 3, vec![2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0])
            .unwrap();
        let vals = SymmetricEigen::values_only(&a).unwrap();
        let s2 = 2f32.sqrt();
        let want = [2.0 - s2, 2.0, 2.0 + s2];
        for (x, y) in vals.iter().zip(want) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn kron_and_conjugation() {
        let x = Matrix::<f64>::from_row_major(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let i2 = Matrix::identity(2);
        let xi = x.kron(&i2);
        assert_eq!(xi[(0, 2)], 1.0);
        assert_eq!(xi[(1, 3)], 1.0);
        assert_eq!(xi[(0, 1)], 0.0);
        let eig = SymmetricEigen::new(&xi).unwrap();
        let d = xi.conjugate_by_rows(eig.vectors.as_ref().unwrap());
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { eig.values[i] } else { 0.0 };
                assert!((d[(i, j)] - want).abs() < 1e-14);
            }
        }
    }
}
