//! Small dense complex matrices and Hermitian positive-definite factorization.
//!
//! Every matrix in this crate is at most a few dozen rows, so a row-major
//! `Vec<Complex64>` with a hand-written Cholesky is all that is needed.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::Error;

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..rhs.cols {
                    out[(r, c)] += a * rhs[(k, c)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `self^H * self`, exploiting Hermitian symmetry of the result.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = Complex64::new(0.0, 0.0);
                for r in 0..self.rows {
                    s += self[(r, i)].conj() * self[(r, j)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s.conj();
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, rhs: &CMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// Adds `d[i]` to each diagonal entry in place.
    pub fn add_diag(&mut self, d: &[f64]) {
        assert!(self.is_square() && d.len() == self.rows);
        for (i, &x) in d.iter().enumerate() {
            self[(i, i)].re += x;
        }
    }

    /// Principal submatrix on the given index set (in the given order).
    pub fn principal(&self, idx: &[usize]) -> Self {
        Self::from_fn(idx.len(), idx.len(), |r, c| self[(idx[r], idx[c])])
    }

    /// Largest entrywise modulus of `self - rhs`.
    pub fn max_abs_diff(&self, rhs: &CMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L L^H`.
///
/// Only the lower triangle of the input is read; the caller is responsible
/// for passing a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<Complex64>,
}

impl Cholesky {
    pub fn new(a: &CMatrix) -> Result<Self, Error> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "cholesky needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut l = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = Complex64::new(djj, 0.0);
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> Complex64 {
        self.l[r * self.n + c]
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        // L y = b
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i).re;
        }
        // L^H x = y
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.at(k, i).conj() * b[k];
            }
            b[i] = s / self.at(i, i).re;
        }
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &CMatrix) -> CMatrix {
        assert_eq!(b.rows(), self.n);
        let mut out = CMatrix::zeros(b.rows(), b.cols());
        for c in 0..b.cols() {
            let x = self.solve(&b.column(c));
            for (r, v) in x.into_iter().enumerate() {
                out[(r, c)] = v;
            }
        }
        out
    }

    pub fn inverse(&self) -> CMatrix {
        let mut inv = self.solve_matrix(&CMatrix::identity(self.n));
        // Symmetrize away rounding so callers can rely on exact Hermitian structure.
        for i in 0..self.n {
            inv[(i, i)].im = 0.0;
            for j in (i + 1)..self.n {
                let m = (inv[(i, j)] + inv[(j, i)].conj()) * 0.5;
                inv[(i, j)] = m;
                inv[(j, i)] = m.conj();
            }
        }
        inv
    }

    /// Diagonal of `A^{-1}`, via `[A^{-1}]_ii = || L^{-1} e_i ||^2`.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for (i, o) in out.iter_mut().enumerate() {
            y.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            // forward substitution for L y = e_i; y[k] = 0 for k < i
            y[i] = Complex64::new(1.0 / self.at(i, i).re, 0.0);
            for r in (i + 1)..n {
                let mut s = Complex64::new(0.0, 0.0);
                for k in i..r {
                    s -= self.at(r, k) * y[k];
                }
                y[r] = s / self.at(r, r).re;
            }
            *o = y[i..].iter().map(|v| v.norm_sqr()).sum();
        }
        out
    }

    /// Natural-log determinant of `A`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.at(i, i).re.ln()).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn hpd3() -> CMatrix {
        CMatrix::from_row_major(
            3,
            3,
            vec![
                c(4.0, 0.0),
                c(1.0, -1.0),
                c(0.5, 0.2),
                c(1.0, 1.0),
                c(3.0, 0.0),
                c(-0.3, 0.4),
                c(0.5, -0.2),
                c(-0.3, -0.4),
                c(2.0, 0.0),
            ],
        )
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = hpd3();
        let ch = Cholesky::new(&a).unwrap();
        let l = CMatrix::from_row_major(3, 3, ch.l.clone());
        let back = l.matmul(&l.adjoint());
        assert!(back.max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn inverse_and_diag_agree() {
        let a = hpd3();
        let ch = Cholesky::new(&a).unwrap();
        let inv = ch.inverse();
        let prod = a.matmul(&inv);
        assert!(prod.max_abs_diff(&CMatrix::identity(3)) < 1e-14);
        for (i, d) in ch.inverse_diagonal().into_iter().enumerate() {
            assert!((d - inv[(i, i)].re).abs() < 1e-15);
        }
    }

    #[test]
    fn log_det_2x2() {
        let a = CMatrix::from_row_major(2, 2, vec![c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(3.0, 0.0)]);
        let ch = Cholesky::new(&a).unwrap();
        assert!((ch.log_det() - 5.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite() {
        let a = CMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(
            Cholesky::new(&a),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn gram_matches_adjoint_product() {
        let h = CMatrix::from_fn(4, 3, |r, cc| c(r as f64 - cc as f64 * 0.5, (r * cc) as f64 * 0.1));
        assert!(h.gram().max_abs_diff(&h.adjoint().matmul(&h)) < 1e-14);
    }
}
