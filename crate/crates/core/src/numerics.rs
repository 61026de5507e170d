//! Small dense real-matrix kernel.
//!
//! Every matrix in the model is tiny (a handful of assets and banks), so the
//! routines here favour clarity over blocking or vectorisation: partial-pivot
//! Gaussian elimination, normal-equation least squares and a couple of norm
//! helpers.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a system is declared singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Ridge added to the normal equations when they are singular.
pub const LEAST_SQUARES_RIDGE: f64 = 1e-12;

/// Dense row-major matrix of finite reals.
///
/// Empty dimensions are allowed so that a trivial null-space basis
/// (`n x 0`) can be represented without a special case.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

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
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    /// Builds a matrix from row slices; all rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    pub fn column(v: &[f64]) -> Result<Self> {
        Matrix::new(v.len(), 1, v.to_vec())
    }

    /// Inverse of [`Matrix::vectorize`]: fills a `rows x cols` matrix from a
    /// column-stacked vector.
    pub fn from_column_major(rows: usize, cols: usize, v: &[f64]) -> Result<Self> {
        if v.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot reshape {} entries into {rows}x{cols}",
                v.len()
            )));
        }
        let mut m = Matrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = v[j * rows + i];
            }
        }
        if m.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("reshaped vector".into()));
        }
        Ok(m)
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Rows of the matrix as owned vectors (handy for serialisation).
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Column-stacking vectorisation, `vec(A)`.
    pub fn vectorize(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self[(i, j)]);
            }
        }
        out
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
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
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
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `x' A`, i.e. `A' x`.
    pub fn tmatvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.rows != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "cannot left-multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += xi * a;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Maximum absolute row sum (the induced infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn try_add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "shapes {:?} and {:?} differ",
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
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Largest entrywise difference; `f64::INFINITY` if shapes differ.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.try_sub(other)
            .map(|d| d.max_abs())
            .unwrap_or(f64::INFINITY)
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

impl Add for &Matrix {
    type Output = Matrix;

    fn add(self, rhs: &Matrix) -> Matrix {
        self.try_add(rhs).expect("matrix shapes must agree")
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        self.try_sub(rhs).expect("matrix shapes must agree")
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs).expect("inner dimensions must agree")
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for x in self.row(i) {
                write!(f, "{x:>12.6} ")?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `a x = rhs` by Gaussian elimination with partial pivoting.
///
/// A column is rejected as singular when its best pivot falls below
/// [`PIVOT_TOLERANCE`] times the largest magnitude of that column in `a`.
/// One step of iterative refinement is applied to the result.
pub fn solve_linear(a: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "solve_linear needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if rhs.rows != a.rows {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has {} rows, matrix has {}",
            rhs.rows, a.rows
        )));
    }
    let lu = LuFactors::factor(a)?;
    let mut x = lu.solve(rhs);
    // refinement: x += A^{-1}(rhs - A x)
    let residual = rhs - &(a * &x);
    let correction = lu.solve(&residual);
    x = &x + &correction;
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("solution of linear system".into()));
    }
    Ok(x)
}

pub fn solve_vector(a: &Matrix, rhs: &[f64]) -> Result<Vec<f64>> {
    Ok(solve_linear(a, &Matrix::column(rhs)?)?.data)
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    solve_linear(a, &Matrix::identity(a.rows))
}

struct LuFactors {
    n: usize,
    lu: Matrix,
    perm: Vec<usize>,
}

impl LuFactors {
    fn factor(a: &Matrix) -> Result<Self> {
        let n = a.rows;
        let col_scale: Vec<f64> = (0..n)
            .map(|j| (0..n).fold(0.0_f64, |m, i| m.max(a[(i, j)].abs())))
            .collect();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if col_scale[k] == 0.0 || pivot < PIVOT_TOLERANCE * col_scale[k] {
                return Err(Error::SingularMatrix { column: k, pivot });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(LuFactors { n, lu, perm })
    }

    fn solve(&self, rhs: &Matrix) -> Matrix {
        let n = self.n;
        let m = rhs.cols;
        let mut x = Matrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            for j in 0..m {
                x[(i, j)] = rhs[(p, j)];
            }
        }
        for j in 0..m {
            for i in 0..n {
                let mut s = x[(i, j)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, j)];
                for k in i + 1..n {
                    s -= self.lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s / self.lu[(i, i)];
            }
        }
        x
    }
}

/// Maximum absolute row sum of a nonnegative square matrix, an upper bound
/// for its spectral radius.
pub fn spectral_radius_upper_bound(s: &Matrix) -> Result<f64> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "spectral radius needs a square matrix, got {}x{}",
            s.rows, s.cols
        )));
    }
    for i in 0..s.rows {
        for j in 0..s.cols {
            if s[(i, j)] < 0.0 {
                return Err(Error::NegativeEntry {
                    row: i,
                    col: j,
                    value: s[(i, j)],
                });
            }
        }
    }
    Ok(s.norm_inf())
}

/// Upper bound on the spectral radius of an arbitrary square matrix from
/// `rho(S) <= ||S^m||^(1/m)`, evaluated for `m = 1, 2, 4, ..., 2^squarings`.
///
/// Every term is a valid bound, so the minimum is one too; it tightens
/// towards the true spectral radius as `m` grows.
pub fn spectral_radius_certificate(s: &Matrix, squarings: u32) -> Result<f64> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "spectral radius needs a square matrix, got {}x{}",
            s.rows, s.cols
        )));
    }
    let n0 = s.norm_inf();
    if n0 == 0.0 {
        return Ok(0.0);
    }
    // S^m = exp(log_scale) * p with ||p|| = 1
    let mut p = s.scale(1.0 / n0);
    let mut log_scale = n0.ln();
    let mut m = 1.0_f64;
    let mut best = n0;
    for _ in 0..squarings {
        let sq = &p * &p;
        let nrm = sq.norm_inf();
        if nrm == 0.0 {
            return Ok(0.0);
        }
        log_scale = 2.0 * log_scale + nrm.ln();
        m *= 2.0;
        p = sq.scale(1.0 / nrm);
        best = best.min((log_scale / m).exp());
    }
    Ok(best)
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    a.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Kronecker product: block `(i, j)` equals `a[i, j] * b`.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Least-squares solution of `a x ~ rhs` through the normal equations,
/// retrying with a small ridge when `a' a` is singular.
pub fn least_squares(a: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    if rhs.rows != a.rows || rhs.cols != 1 {
        return Err(Error::DimensionMismatch(format!(
            "least squares needs a {}x1 right-hand side, got {}x{}",
            a.rows, rhs.rows, rhs.cols
        )));
    }
    if a.cols == 0 {
        return Ok(Matrix::zeros(0, 1));
    }
    let at = a.transpose();
    let ata = &at * a;
    let atb = &at * rhs;
    match solve_linear(&ata, &atb) {
        Ok(x) => Ok(x),
        Err(Error::SingularMatrix { .. }) => {
            let mut ridged = ata.clone();
            for i in 0..ridged.rows {
                ridged[(i, i)] += LEAST_SQUARES_RIDGE;
            }
            solve_linear(&ridged, &atb)
        }
        Err(e) => Err(e),
    }
}

/// Numerical rank by Gaussian elimination with complete pivoting; entries
/// below `tol * max|a|` are treated as zero.
pub fn rank(a: &Matrix, tol: f64) -> usize {
    let mut m = a.clone();
    let scale = m.max_abs();
    if scale == 0.0 {
        return 0;
    }
    let (rows, cols) = m.shape();
    let mut r = 0;
    let mut active_cols: Vec<usize> = (0..cols).collect();
    while r < rows && !active_cols.is_empty() {
        let mut best = (r, 0usize, 0.0);
        for i in r..rows {
            for (c_idx, &j) in active_cols.iter().enumerate() {
                let v = m[(i, j)].abs();
                if v > best.2 {
                    best = (i, c_idx, v);
                }
            }
        }
        if best.2 <= tol * scale {
            break;
        }
        let (pi, c_idx, _) = best;
        let pj = active_cols.swap_remove(c_idx);
        for j in 0..cols {
            m.data.swap(r * cols + j, pi * cols + j);
        }
        let d = m[(r, pj)];
        for i in r + 1..rows {
            let f = m[(i, pj)] / d;
            if f != 0.0 {
                for j in 0..cols {
                    let u = m[(r, j)];
                    m[(i, j)] -= f * u;
                }
            }
        }
        r += 1;
    }
    r
}
