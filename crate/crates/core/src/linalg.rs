//! Small dense linear algebra for desk-scale control problems.
//!
//! Matrices here are at most a few dozen rows. Everything is written for
//! accuracy over speed: singular values come from one-sided Jacobi sweeps and
//! eigenvalues from a balanced Hessenberg QR iteration.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::real::Real;

/// Shared rank tolerance for SVD-based rank decisions.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("QR iteration did not converge")]
    NoConvergence,
    #[error("ragged row data: row {row} has {got} entries, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
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
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_slice(rows: usize, cols: usize, values: &[T]) -> Self {
        assert_eq!(values.len(), rows * cols, "from_row_slice length");
        Self { rows, cols, data: values.to_vec() }
    }

    /// Builds a matrix from nested rows. An empty outer list gives a 0×0 matrix.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(LinalgError::Ragged { row: i, got: r.len(), expected: cols });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn column_vector(values: &[T]) -> Self {
        Self::from_row_slice(values.len(), 1, values)
    }

    pub fn diag(values: &[T]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "mul_vec dimension");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    /// Largest absolute entry.
    pub fn norm_max(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `[self other]`.
    pub fn hstack(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.rows != other.rows {
            return Err(LinalgError::Dimension(format!(
                "hstack rows {} vs {}",
                self.rows, other.rows
            )));
        }
        Ok(Self::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                other[(i, j - self.cols)]
            }
        }))
    }

    /// `[self; other]`.
    pub fn vstack(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.cols {
            return Err(LinalgError::Dimension(format!(
                "vstack cols {} vs {}",
                self.cols, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { rows: self.rows + other.rows, cols: self.cols, data })
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self::from_fn(self.rows * other.rows, self.cols * other.cols, |i, j| {
            self[(i / other.rows, j / other.cols)] * other[(i % other.rows, j % other.cols)]
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Dimension(format!(
                "matmul {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::identity(self.rows);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<T> {
        if self.rows == 0 || self.cols == 0 {
            return Vec::new();
        }
        let work = if self.rows >= self.cols { self.clone() } else { self.transpose() };
        jacobi_singular_values(work)
    }

    /// Numerical rank: singular values above `tol · max(σ_max, 1)`.
    pub fn rank(&self, tol: T) -> usize {
        let sv = self.singular_values();
        let Some(&top) = sv.first() else { return 0 };
        let thresh = tol * top.max(T::one());
        sv.iter().filter(|&&s| s > thresh).count()
    }

    /// Solves `self · x = b` by LU with partial pivoting.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        if !self.is_square() || b.len() != self.rows {
            return Err(LinalgError::Dimension("solve needs square system".into()));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut x = b.to_vec();
        let scale = self.norm_max().max(T::min_positive_value());
        for col in 0..n {
            let (piv, pmax) = (col..n)
                .map(|r| (r, a[(r, col)].abs()))
                .fold((col, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= T::epsilon() * scale * T::from_usize_lossy(n) {
                return Err(LinalgError::Singular);
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(piv * n + j, col * n + j);
                }
                x.swap(piv, col);
            }
            for r in col + 1..n {
                let f = a[(r, col)] / a[(col, col)];
                if f == T::zero() {
                    continue;
                }
                for j in col..n {
                    let v = a[(col, j)];
                    a[(r, j)] -= f * v;
                }
                let xc = x[col];
                x[r] -= f * xc;
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= a[(i, j)] * x[j];
            }
            x[i] = acc / a[(i, i)];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Self, LinalgError> {
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        for j in 0..n {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            let col = self.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }

    /// Least-squares solution of `self · x ≈ b` via Householder QR.
    /// Requires `rows ≥ cols` and full column rank.
    pub fn lstsq(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let (m, n) = (self.rows, self.cols);
        if m < n || b.len() != m {
            return Err(LinalgError::Dimension(format!("lstsq {m}x{n} with rhs {}", b.len())));
        }
        let mut a = self.clone();
        let mut y = b.to_vec();
        let scale = self.norm_max().max(T::min_positive_value());
        for k in 0..n {
            let norm = (k..m).fold(T::zero(), |acc, i| acc + a[(i, k)] * a[(i, k)]).sqrt();
            if norm <= T::epsilon() * scale * T::from_usize_lossy(m) {
                return Err(LinalgError::Singular);
            }
            let alpha = if a[(k, k)] > T::zero() { -norm } else { norm };
            let mut v: Vec<T> = (k..m).map(|i| a[(i, k)]).collect();
            v[0] -= alpha;
            let vnorm2 = v.iter().fold(T::zero(), |acc, &x| acc + x * x);
            if vnorm2 == T::zero() {
                continue;
            }
            let two = T::lit(2.0);
            for j in k..n {
                let dot = (k..m).fold(T::zero(), |acc, i| acc + v[i - k] * a[(i, j)]);
                let f = two * dot / vnorm2;
                for i in k..m {
                    a[(i, j)] -= f * v[i - k];
                }
            }
            let dot = (k..m).fold(T::zero(), |acc, i| acc + v[i - k] * y[i]);
            let f = two * dot / vnorm2;
            for i in k..m {
                y[i] -= f * v[i - k];
            }
        }
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= a[(i, j)] * x[j];
            }
            x[i] = acc / a[(i, i)];
        }
        Ok(x)
    }

    /// Eigenvalues of a square matrix, sorted by (real, imaginary) part.
    /// Diagonal similarity `D⁻¹ A D` (powers of two) equalizing row and
    /// column norms; returns the balanced matrix and the diagonal of `D`.
    pub fn balanced(&self) -> (Self, Vec<T>) {
        assert!(self.is_square(), "balancing needs a square matrix");
        let mut h = Hess { n: self.rows, a: self.data.clone() };
        let d = h.balance();
        (Self { rows: self.rows, cols: self.cols, data: h.a }, d)
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex<T>>, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::Dimension("eigenvalues of non-square matrix".into()));
        }
        let n = self.rows;
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut a = Hess { n, a: self.data.clone() };
        a.balance();
        a.reduce();
        let mut eig = a.hqr()?;
        eig.sort_by(|x, y| {
            x.re.partial_cmp(&y.re)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(x.im.partial_cmp(&y.im).unwrap_or(std::cmp::Ordering::Equal))
        });
        Ok(eig)
    }
}

impl<T: Real> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        self.matmul(rhs).expect("matrix product dimensions")
    }
}

impl<T: Real> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "matrix sum dimensions");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "matrix difference dimensions");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: Real> Neg for &Matrix<T> {
    type Output = Matrix<T>;
    fn neg(self) -> Matrix<T> {
        self.map(|v| -v)
    }
}

impl<T: Real> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

impl<T: Real> fmt::Display for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let cells: Vec<String> = self.row(i).iter().map(|v| format!("{v:>12.6}")).collect();
            writeln!(f, "[{}]", cells.join(" "))?;
        }
        Ok(())
    }
}

impl<T: Real + Serialize> Serialize for Matrix<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for Matrix<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<T>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(D::Error::custom)
    }
}

fn jacobi_singular_values<T: Real>(mut a: Matrix<T>) -> Vec<T> {
    let (m, n) = (a.rows, a.cols);
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..m {
                    let (ap, aq) = (a[(i, p)], a[(i, q)]);
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (ap, aq) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, q)] = s * ap + c * aq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = (0..n)
        .map(|j| (0..m).fold(T::zero(), |acc, i| acc + a[(i, j)] * a[(i, j)]).sqrt())
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Singular values of the complex matrix `re + i·im`, descending.
///
/// Uses the real embedding `[[re, -im], [im, re]]`, whose singular values are
/// those of the complex matrix, each repeated twice.
pub fn complex_singular_values<T: Real>(re: &Matrix<T>, im: &Matrix<T>) -> Vec<T> {
    assert_eq!((re.rows, re.cols), (im.rows, im.cols));
    let (m, n) = (re.rows, re.cols);
    let emb = Matrix::from_fn(2 * m, 2 * n, |i, j| {
        let (bi, bj) = (i / m, j / n);
        let (ii, jj) = (i % m, j % n);
        match (bi, bj) {
            (0, 0) | (1, 1) => re[(ii, jj)],
            (0, 1) => -im[(ii, jj)],
            _ => im[(ii, jj)],
        }
    });
    emb.singular_values().into_iter().step_by(2).collect()
}

/// Dimension of the controllable subspace, i.e. the numerical rank of
/// `[B, AB, …, A^{n-1}B]`.
///
/// The pair is balanced first. The Krylov space is then grown with an orthonormal basis (Gram–Schmidt with
/// reorthogonalization), keeping a new direction only when its residual
/// exceeds `tol` relative to `‖A‖_F` (or `‖B‖_F` for the columns of `B`).
/// Working on the raw power columns instead loses all accuracy once the
/// powers of `A` differ in size by more than `1/tol`.
pub fn controllability_rank<T: Real>(a: &Matrix<T>, b: &Matrix<T>, tol: T) -> usize {
    let n = a.nrows();
    // rank is invariant under the balancing similarity (A, B) -> (D⁻¹AD, D⁻¹B)
    let (a, d) = a.balanced();
    let b = Matrix::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] / d[i]);
    let mut basis: Vec<Vec<T>> = Vec::new();
    let absorb = |basis: &mut Vec<Vec<T>>, mut v: Vec<T>, threshold: T| -> bool {
        for _ in 0..2 {
            for q in basis.iter() {
                let d = q.iter().zip(&v).fold(T::zero(), |acc, (x, y)| acc + *x * *y);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= d * *qi;
                }
            }
        }
        let norm = v.iter().fold(T::zero(), |acc, x| acc + *x * *x).sqrt();
        if norm > threshold && basis.len() < n {
            basis.push(v.into_iter().map(|x| x / norm).collect());
            true
        } else {
            false
        }
    };
    let tb = tol * b.norm_fro().max(T::one());
    let mut frontier = Vec::new();
    for j in 0..b.ncols() {
        if absorb(&mut basis, b.column(j), tb) {
            frontier.push(basis.len() - 1);
        }
    }
    let ta = tol * a.norm_fro().max(T::one());
    while !frontier.is_empty() && basis.len() < n {
        let mut next = Vec::new();
        for idx in frontier {
            let v = a.mul_vec(&basis[idx]);
            if absorb(&mut basis, v, ta) {
                next.push(basis.len() - 1);
            }
        }
        frontier = next;
    }
    basis.len()
}

pub fn controllability_matrix<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let n = a.nrows();
    let mut blocks = b.clone();
    let mut cur = b.clone();
    for _ in 1..n {
        cur = a * &cur;
        blocks = blocks.hstack(&cur).expect("controllability blocks share rows");
    }
    blocks
}

/// Upper Hessenberg workspace for the eigenvalue routines (1-based helpers).
struct Hess<T> {
    n: usize,
    a: Vec<T>,
}

impl<T: Real> Hess<T> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.a[(i - 1) * self.n + (j - 1)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: T) {
        self.a[(i - 1) * self.n + (j - 1)] = v;
    }

    fn swap(&mut self, (i1, j1): (usize, usize), (i2, j2): (usize, usize)) {
        self.a.swap((i1 - 1) * self.n + (j1 - 1), (i2 - 1) * self.n + (j2 - 1));
    }

    /// Diagonal similarity by powers of two so rows and columns have comparable norms.
    fn balance(&mut self) -> Vec<T> {
        let n = self.n;
        let mut scale = vec![T::one(); n];
        let radix = T::lit(2.0);
        let sqrdx = radix * radix;
        let mut done = false;
        while !done {
            done = true;
            for i in 1..=n {
                let (mut r, mut c) = (T::zero(), T::zero());
                for j in 1..=n {
                    if j != i {
                        c += self.at(j, i).abs();
                        r += self.at(i, j).abs();
                    }
                }
                if c != T::zero() && r != T::zero() {
                    let mut g = r / radix;
                    let mut f = T::one();
                    let s = c + r;
                    while c < g {
                        f *= radix;
                        c *= sqrdx;
                    }
                    g = r * radix;
                    while c > g {
                        f /= radix;
                        c /= sqrdx;
                    }
                    if (c + r) / f < T::lit(0.95) * s {
                        done = false;
                        scale[i - 1] *= f;
                        let g = T::one() / f;
                        for j in 1..=n {
                            let v = self.at(i, j) * g;
                            self.set(i, j, v);
                        }
                        for j in 1..=n {
                            let v = self.at(j, i) * f;
                            self.set(j, i, v);
                        }
                    }
                }
            }
        }
        scale
    }

    /// Reduction to upper Hessenberg form by stabilized elementary similarity.
    fn reduce(&mut self) {
        let n = self.n;
        for m in 2..n {
            let mut x = T::zero();
            let mut i = m;
            for j in m..=n {
                if self.at(j, m - 1).abs() > x.abs() {
                    x = self.at(j, m - 1);
                    i = j;
                }
            }
            if i != m {
                for j in m - 1..=n {
                    self.swap((i, j), (m, j));
                }
                for j in 1..=n {
                    self.swap((j, i), (j, m));
                }
            }
            if x != T::zero() {
                for i in m + 1..=n {
                    let mut y = self.at(i, m - 1);
                    if y != T::zero() {
                        y /= x;
                        self.set(i, m - 1, y);
                        for j in m..=n {
                            let v = self.at(i, j) - y * self.at(m, j);
                            self.set(i, j, v);
                        }
                        for j in 1..=n {
                            let v = self.at(j, m) + y * self.at(j, i);
                            self.set(j, m, v);
                        }
                    }
                }
            }
        }
        for i in 1..=n {
            for j in 1..=n {
                if i > j + 1 {
                    self.set(i, j, T::zero());
                }
            }
        }
    }

    /// Francis double-shift QR on the Hessenberg matrix.
    fn hqr(&mut self) -> Result<Vec<Complex<T>>, LinalgError> {
        let n = self.n;
        let mut wr = vec![T::zero(); n + 1];
        let mut wi = vec![T::zero(); n + 1];
        let mut anorm = T::zero();
        for i in 1..=n {
            for j in i.saturating_sub(1).max(1)..=n {
                anorm += self.at(i, j).abs();
            }
        }
        let half = T::lit(0.5);
        let mut nn = n as isize;
        let mut t = T::zero();
        let (mut p, mut q, mut r);
        let (mut x, mut y, mut z, mut w);
        while nn >= 1 {
            let mut its = 0;
            loop {
                let nu = nn as usize;
                let mut l = nu;
                while l >= 2 {
                    let mut s = self.at(l - 1, l - 1).abs() + self.at(l, l).abs();
                    if s == T::zero() {
                        s = anorm;
                    }
                    if self.at(l, l - 1).abs() + s == s {
                        self.set(l, l - 1, T::zero());
                        break;
                    }
                    l -= 1;
                }
                x = self.at(nu, nu);
                if l == nu {
                    wr[nu] = x + t;
                    wi[nu] = T::zero();
                    nn -= 1;
                } else {
                    y = self.at(nu - 1, nu - 1);
                    w = self.at(nu, nu - 1) * self.at(nu - 1, nu);
                    if l == nu - 1 {
                        p = half * (y - x);
                        q = p * p + w;
                        z = q.abs().sqrt();
                        x += t;
                        if q >= T::zero() {
                            z = p + if p >= T::zero() { z.abs() } else { -z.abs() };
                            wr[nu - 1] = x + z;
                            wr[nu] = x + z;
                            if z != T::zero() {
                                wr[nu] = x - w / z;
                            }
                            wi[nu - 1] = T::zero();
                            wi[nu] = T::zero();
                        } else {
                            wr[nu - 1] = x + p;
                            wr[nu] = x + p;
                            wi[nu - 1] = -z;
                            wi[nu] = z;
                        }
                        nn -= 2;
                    } else {
                        if its == 60 {
                            return Err(LinalgError::NoConvergence);
                        }
                        if its % 10 == 0 && its > 0 {
                            t += x;
                            for i in 1..=nu {
                                let v = self.at(i, i) - x;
                                self.set(i, i, v);
                            }
                            let s = self.at(nu, nu - 1).abs() + self.at(nu - 1, nu - 2).abs();
                            x = T::lit(0.75) * s;
                            y = x;
                            w = T::lit(-0.4375) * s * s;
                        }
                        its += 1;
                        let mut m = nu - 2;
                        loop {
                            z = self.at(m, m);
                            r = x - z;
                            let s = y - z;
                            p = (r * s - w) / self.at(m + 1, m) + self.at(m, m + 1);
                            q = self.at(m + 1, m + 1) - z - r - s;
                            r = self.at(m + 2, m + 1);
                            let s = p.abs() + q.abs() + r.abs();
                            p /= s;
                            q /= s;
                            r /= s;
                            if m == l {
                                break;
                            }
                            let u = self.at(m, m - 1).abs() * (q.abs() + r.abs());
                            let v = p.abs()
                                * (self.at(m - 1, m - 1).abs() + z.abs() + self.at(m + 1, m + 1).abs());
                            if u + v == v {
                                break;
                            }
                            m -= 1;
                        }
                        for i in m + 2..=nu {
                            self.set(i, i - 2, T::zero());
                            if i != m + 2 {
                                self.set(i, i - 3, T::zero());
                            }
                        }
                        let mut k = m;
                        while k < nu {
                            if k != m {
                                p = self.at(k, k - 1);
                                q = self.at(k + 1, k - 1);
                                r = T::zero();
                                if k != nu - 1 {
                                    r = self.at(k + 2, k - 1);
                                }
                                x = p.abs() + q.abs() + r.abs();
                                if x != T::zero() {
                                    p /= x;
                                    q /= x;
                                    r /= x;
                                }
                            }
                            let mag = (p * p + q * q + r * r).sqrt();
                            let s = if p >= T::zero() { mag } else { -mag };
                            if s != T::zero() {
                                if k == m {
                                    if l != m {
                                        let v = -self.at(k, k - 1);
                                        self.set(k, k - 1, v);
                                    }
                                } else {
                                    self.set(k, k - 1, -s * x);
                                }
                                p += s;
                                x = p / s;
                                y = q / s;
                                z = r / s;
                                q /= p;
                                r /= p;
                                for j in k..=nu {
                                    p = self.at(k, j) + q * self.at(k + 1, j);
                                    if k != nu - 1 {
                                        p += r * self.at(k + 2, j);
                                        let v = self.at(k + 2, j) - p * z;
                                        self.set(k + 2, j, v);
                                    }
                                    let v = self.at(k + 1, j) - p * y;
                                    self.set(k + 1, j, v);
                                    let v = self.at(k, j) - p * x;
                                    self.set(k, j, v);
                                }
                                let mmin = nu.min(k + 3);
                                for i in l..=mmin {
                                    p = x * self.at(i, k) + y * self.at(i, k + 1);
                                    if k != nu - 1 {
                                        p += z * self.at(i, k + 2);
                                        let v = self.at(i, k + 2) - p * r;
                                        self.set(i, k + 2, v);
                                    }
                                    let v = self.at(i, k + 1) - p * q;
                                    self.set(i, k + 1, v);
                                    let v = self.at(i, k) - p;
                                    self.set(i, k, v);
                                }
                            }
                            k += 1;
                        }
                    }
                }
                if (l as isize) >= nn - 1 {
                    break;
                }
            }
        }
        Ok((1..=n).map(|i| Complex::new(wr[i], wi[i])).collect())
    }
}
