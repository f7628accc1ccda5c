//! Dense row-major `f64` matrices and the handful of kernels the autodiff
//! graph needs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let cols = data.len();
        Matrix::from_vec(1, cols, data)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `c = beta * c + a · b` (or `a · bᵀ` when `b_transposed`, or `aᵀ · b` when
/// `a_transposed`). Shapes are the logical shapes after transposition.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    a: &Matrix,
    a_transposed: bool,
    b: &Matrix,
    b_transposed: bool,
    c: &mut Matrix,
    beta: f64,
) {
    let (m, k) = if a_transposed {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let (kb, n) = if b_transposed {
        (b.cols, b.rows)
    } else {
        (b.rows, b.cols)
    };
    assert_eq!(k, kb, "gemm inner dimension mismatch");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale_assign(beta);
        return;
    }
    if m <= SMALL_ROWS {
        small_gemm(a, a_transposed, b, b_transposed, c, beta, k);
        return;
    }
    let (rsa, csa) = if a_transposed {
        (1, a.cols as isize)
    } else {
        (a.cols as isize, 1)
    };
    let (rsb, csb) = if b_transposed {
        (1, b.cols as isize)
    } else {
        (b.cols as isize, 1)
    };
    // SAFETY: strides and extents above describe exactly the buffers of
    // `a`, `b` and `c`, whose lengths were checked by construction.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

/// Row counts up to this bypass the packing kernel: for vector-matrix
/// products packing the right operand costs more than the product itself.
const SMALL_ROWS: usize = 4;

fn small_gemm(a: &Matrix, a_transposed: bool, b: &Matrix, b_transposed: bool, c: &mut Matrix, beta: f64, k: usize) {
    let mut arow = vec![0.0; k];
    for i in 0..c.rows {
        if a_transposed {
            for (p, v) in arow.iter_mut().enumerate() {
                *v = a.data[p * a.cols + i];
            }
        } else {
            arow.copy_from_slice(a.row(i));
        }
        let crow = c.row_mut(i);
        if beta == 0.0 {
            crow.iter_mut().for_each(|x| *x = 0.0);
        } else if beta != 1.0 {
            crow.iter_mut().for_each(|x| *x *= beta);
        }
        if b_transposed {
            for (j, out) in crow.iter_mut().enumerate() {
                *out += arow.iter().zip(b.row(j)).map(|(x, y)| x * y).sum::<f64>();
            }
        } else {
            for (p, &av) in arow.iter().enumerate() {
                for (out, bv) in crow.iter_mut().zip(b.row(p)) {
                    *out += av * bv;
                }
            }
        }
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut c = Matrix::zeros(a.rows, b.cols);
    gemm(a, false, b, false, &mut c, 0.0);
    c
}

pub fn matmul_bt(a: &Matrix, b: &Matrix) -> Matrix {
    let mut c = Matrix::zeros(a.rows, b.rows);
    gemm(a, false, b, true, &mut c, 0.0);
    c
}

/// Numerically stable log-softmax of a slice.
pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    xs.iter().map(|x| x - lse).collect()
}

pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut s = 0.0;
                for k in 0..a.cols {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    #[test]
    fn gemm_variants_agree_with_naive_product() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let b = Matrix::from_vec(3, 2, vec![0.1, 0.2, 0.3, -0.4, 2.0, 1.0]);
        assert_eq!(matmul(&a, &b), naive(&a, &b));
        let bt = b.transpose();
        assert_eq!(matmul_bt(&a, &bt), naive(&a, &b));
        let mut c = Matrix::zeros(3, 3);
        gemm(&a, true, &a, false, &mut c, 0.0);
        assert_eq!(c, naive(&a.transpose(), &a));
    }

    #[test]
    fn both_kernels_match_naive_for_every_layout() {
        let fill = |r: usize, c: usize, seed: f64| {
            Matrix::from_vec(r, c, (0..r * c).map(|i| ((i as f64 + seed) * 0.37).sin()).collect())
        };
        for m in [1, 3, 4, 5, 9] {
            let a = fill(m, 7, 1.0);
            let b = fill(7, 6, 2.0);
            let expected = naive(&a, &b);
            for (at, bt) in [(false, false), (false, true), (true, false), (true, true)] {
                let av = if at { a.transpose() } else { a.clone() };
                let bv = if bt { b.transpose() } else { b.clone() };
                let mut c = Matrix::filled(m, 6, 1.0);
                gemm(&av, at, &bv, bt, &mut c, 0.5);
                for (x, y) in c.data.iter().zip(&expected.data) {
                    assert!((x - (y + 0.5)).abs() < 1e-12, "m={m} at={at} bt={bt}");
                }
            }
        }
    }

    #[test]
    fn log_softmax_normalizes() {
        let l = log_softmax(&[1.0, 2.0, 3.0]);
        let total: f64 = l.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
