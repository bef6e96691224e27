//! Small dense linear algebra: a row-major matrix, Householder least squares
//! and a Cholesky solver for symmetric positive definite systems.
//!
//! The systems in this crate are tiny (at most a few dozen unknowns), so
//! everything is a straightforward `O(n^3)` loop over a `Vec`.

use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
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

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "matrix-vector shape mismatch");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `AᵀA`, accumulated row by row.
    pub fn gram(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            for (i, &ri) in row.iter().enumerate() {
                if ri == T::zero() {
                    continue;
                }
                for (j, &rj) in row.iter().enumerate().skip(i) {
                    out.data[i * self.cols + j] = out.data[i * self.cols + j] + ri * rj;
                }
            }
        }
        for i in 0..self.cols {
            for j in 0..i {
                out.data[i * self.cols + j] = out.data[j * self.cols + i];
            }
        }
        out
    }

    /// `Aᵀx`.
    pub fn tr_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows, "matrix-vector shape mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o = *o + a * xr;
            }
        }
        out
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Minimises `‖A·x − b‖₂` with Householder QR.
///
/// Returns `None` when `A` has fewer rows than columns or is numerically rank
/// deficient (a diagonal entry of `R` below `rank_tol` times the largest one).
pub fn least_squares<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Option<Vec<T>> {
    let (m, n) = (a.rows, a.cols);
    if m < n || b.len() != m || n == 0 {
        return None;
    }
    let mut r = a.clone();
    let mut rhs = b.to_vec();

    for k in 0..n {
        let norm = (k..m)
            .map(|i| r[(i, k)] * r[(i, k)])
            .fold(T::zero(), |acc, v| acc + v)
            .sqrt();
        if norm == T::zero() {
            return None;
        }
        let alpha = if r[(k, k)] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |acc, &x| acc + x * x);
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::lit(2.0);
        for j in k..n {
            let s = (k..m).fold(T::zero(), |acc, i| acc + v[i - k] * r[(i, j)]);
            let f = two * s / vnorm2;
            for i in k..m {
                r[(i, j)] = r[(i, j)] - f * v[i - k];
            }
        }
        let s = (k..m).fold(T::zero(), |acc, i| acc + v[i - k] * rhs[i]);
        let f = two * s / vnorm2;
        for i in k..m {
            rhs[i] = rhs[i] - f * v[i - k];
        }
    }

    let max_diag = (0..n).map(|k| r[(k, k)].abs()).fold(T::zero(), T::max);
    let rank_tol = max_diag * T::epsilon() * T::from_usize_lossy(m.max(n));
    if max_diag == T::zero() || (0..n).any(|k| r[(k, k)].abs() <= rank_tol) {
        return None;
    }

    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        let s = ((k + 1)..n).fold(rhs[k], |acc, j| acc - r[(k, j)] * x[j]);
        x[k] = s / r[(k, k)];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Solves `A·x = b` for symmetric positive definite `A` by Cholesky
/// factorisation. `None` if the factorisation breaks down.
pub fn cholesky_solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Option<Vec<T>> {
    let n = a.rows;
    if a.cols != n || b.len() != n {
        return None;
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let s = (0..i).fold(b[i], |acc, k| acc - l[(i, k)] * y[k]);
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let s = ((i + 1)..n).fold(y[i], |acc, k| acc - l[(k, i)] * x[k]);
        x[i] = s / l[(i, i)];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}
