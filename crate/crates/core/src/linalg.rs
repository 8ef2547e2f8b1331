//! Small dense matrices and eigenvalues of nonsymmetric real matrices.
//!
//! Eigenvalues are computed by balancing, reduction to upper Hessenberg form
//! with stabilized elementary similarity transforms, and the Francis
//! double-shift QR iteration with exceptional shifts.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest dimension accepted by [`eigenvalues`].
pub const MAX_DIMENSION: usize = 64;

/// QR sweeps allowed per eigenvalue before giving up.
const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigenError {
    #[error("matrix must be square, got {rows}×{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension {0} exceeds the supported maximum of {MAX_DIMENSION}")]
    TooLarge(usize),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("QR iteration did not converge for the eigenvalue at position {0}")]
    NoConvergence(usize),
}

/// Row-major dense matrix. Serializes as a list of rows.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
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

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Submatrix on the given rows/columns (same index set for both).
    pub fn principal_submatrix(&self, keep: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(keep.len(), keep.len());
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                m[(a, b)] = self[(i, j)];
            }
        }
        m
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, String> {
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err("matrix rows have different lengths".into());
        }
        Ok(Matrix::from_rows(&rows))
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

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries((0..self.rows).map(|i| self.row(i))).finish()
    }
}

/// All eigenvalues of a square real matrix, complex pairs adjacent with the
/// positive imaginary part first. Order is otherwise unspecified.
pub fn eigenvalues(matrix: &Matrix) -> Result<Vec<Complex64>, EigenError> {
    if !matrix.is_square() {
        return Err(EigenError::NotSquare {
            rows: matrix.rows,
            cols: matrix.cols,
        });
    }
    let n = matrix.rows;
    if n > MAX_DIMENSION {
        return Err(EigenError::TooLarge(n));
    }
    if matrix.data.iter().any(|v| !v.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = matrix.clone();
    balance(&mut a);
    reduce_to_hessenberg(&mut a);
    hessenberg_qr(&mut a)
}

/// Diagonal similarity scaling by powers of two so that row and column norms
/// are comparable.
fn balance(a: &mut Matrix) {
    const RADIX: f64 = 2.0;
    let n = a.rows;
    let radix_sq = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= radix_sq;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= radix_sq;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= g;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

/// Gaussian elimination with pivoting to upper Hessenberg form; entries below
/// the subdiagonal are zeroed.
fn reduce_to_hessenberg(a: &mut Matrix) {
    let n = a.rows;
    for m in 1..n.saturating_sub(1) {
        let mut pivot: f64 = 0.0;
        let mut pivot_row = m;
        for j in m..n {
            if a[(j, m - 1)].abs() > pivot.abs() {
                pivot = a[(j, m - 1)];
                pivot_row = j;
            }
        }
        if pivot_row != m {
            for j in (m - 1)..n {
                let tmp = a[(pivot_row, j)];
                a[(pivot_row, j)] = a[(m, j)];
                a[(m, j)] = tmp;
            }
            for j in 0..n {
                let tmp = a[(j, pivot_row)];
                a[(j, pivot_row)] = a[(j, m)];
                a[(j, m)] = tmp;
            }
        }
        if pivot != 0.0 {
            for i in (m + 1)..n {
                let mut y = a[(i, m - 1)];
                if y != 0.0 {
                    y /= pivot;
                    a[(i, m - 1)] = 0.0;
                    for j in m..n {
                        a[(i, j)] -= y * a[(m, j)];
                    }
                    for j in 0..n {
                        a[(j, m)] += y * a[(j, i)];
                    }
                }
            }
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (destroyed).
fn hessenberg_qr(h: &mut Matrix) -> Result<Vec<Complex64>, EigenError> {
    let n = h.rows;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    // 1-based accessors keep the index arithmetic close to the classic form.
    macro_rules! a {
        ($i:expr, $j:expr) => {
            h[($i - 1, $j - 1)]
        };
    }

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a!(i, j).abs();
        }
    }

    let mut nn = n;
    let mut shift_total = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    let (mut x, mut y, mut z, mut w): (f64, f64, f64, f64);
    while nn >= 1 {
        let mut its = 0;
        loop {
            // Look for a single small subdiagonal element.
            let mut l = nn;
            while l >= 2 {
                let mut s = a!(l - 1, l - 1).abs() + a!(l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a!(l, l - 1).abs() + s == s {
                    a!(l, l - 1) = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a!(nn, nn);
            if l == nn {
                out[nn - 1] = Complex64::new(x + shift_total, 0.0);
                nn -= 1;
                break;
            }
            y = a!(nn - 1, nn - 1);
            w = a!(nn, nn - 1) * a!(nn - 1, nn);
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                z = q.abs().sqrt();
                x += shift_total;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    let mut lo = x + z;
                    let hi = x + z;
                    if z != 0.0 {
                        lo = x - w / z;
                    }
                    out[nn - 2] = Complex64::new(hi, 0.0);
                    out[nn - 1] = Complex64::new(lo, 0.0);
                } else {
                    out[nn - 2] = Complex64::new(x + p, z);
                    out[nn - 1] = Complex64::new(x + p, -z);
                }
                nn -= 2;
                break;
            }
            if its == MAX_SWEEPS_PER_EIGENVALUE {
                return Err(EigenError::NoConvergence(nn - 1));
            }
            if its == 10 || its == 20 || its == 40 {
                // Exceptional shift.
                shift_total += x;
                for i in 1..=nn {
                    a!(i, i) -= x;
                }
                let s = a!(nn, nn - 1).abs() + a!(nn - 1, nn - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            // Look for two consecutive small subdiagonal elements.
            let mut m = nn - 2;
            loop {
                z = a!(m, m);
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a!(m + 1, m) + a!(m, m + 1);
                q = a!(m + 1, m + 1) - z - r - s;
                r = a!(m + 2, m + 1);
                let scale = p.abs() + q.abs() + r.abs();
                p /= scale;
                q /= scale;
                r /= scale;
                if m == l {
                    break;
                }
                let u = a!(m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (a!(m - 1, m - 1).abs() + z.abs() + a!(m + 1, m + 1).abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                a!(i, i - 2) = 0.0;
                if i != m + 2 {
                    a!(i, i - 3) = 0.0;
                }
            }
            // Double QR step on rows l..nn and columns m..nn.
            let mut k = m;
            while k < nn {
                if k != m {
                    p = a!(k, k - 1);
                    q = a!(k + 1, k - 1);
                    r = if k != nn - 1 { a!(k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a!(k, k - 1) = -a!(k, k - 1);
                        }
                    } else {
                        a!(k, k - 1) = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        p = a!(k, j) + q * a!(k + 1, j);
                        if k != nn - 1 {
                            p += r * a!(k + 2, j);
                            a!(k + 2, j) -= p * z;
                        }
                        a!(k + 1, j) -= p * y;
                        a!(k, j) -= p * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in l..=mmin {
                        p = x * a!(i, k) + y * a!(i, k + 1);
                        if k != nn - 1 {
                            p += z * a!(i, k + 2);
                            a!(i, k + 2) -= p * r;
                        }
                        a!(i, k + 1) -= p * q;
                        a!(i, k) -= p;
                    }
                }
                k += 1;
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok(out)
}
