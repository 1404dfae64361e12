use alloc::vec;
use alloc::vec::Vec;

use crate::error::contract;
use crate::Result;

/// Row-major matrix of activations. Rows are batch items (or sequence
/// positions), columns are features.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(contract!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            ));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    /// Column-wise concatenation of equally tall matrices.
    pub fn hcat(parts: &[&Mat]) -> Result<Mat> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(contract!("hcat of {} and {} rows", rows, bad.rows));
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            let dst = out.row_mut(r);
            for m in parts {
                dst[off..off + m.cols].copy_from_slice(m.row(r));
                off += m.cols;
            }
        }
        Ok(out)
    }

    /// Inverse of [`Mat::hcat`]: splits columns into blocks of the given widths.
    pub fn hsplit(&self, widths: &[usize]) -> Vec<Mat> {
        debug_assert_eq!(widths.iter().sum::<usize>(), self.cols);
        let mut out: Vec<Mat> = widths.iter().map(|&w| Mat::zeros(self.rows, w)).collect();
        for r in 0..self.rows {
            let src = self.row(r);
            let mut off = 0;
            for (m, &w) in out.iter_mut().zip(widths) {
                m.row_mut(r).copy_from_slice(&src[off..off + w]);
                off += w;
            }
        }
        out
    }
}

/// `c = op(a) * op(b) (+ c if accumulate)`, where `op` optionally transposes.
/// `a` is stored `m x k` (or `k x m` when `ta`), `b` is `k x n` (or `n x k`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above describe exactly the `m*k`, `k*n` and `m*n`
    // buffers whose lengths are asserted at the top.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, &mut c, false);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, &mut c, false);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, &mut c, false);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
        gemm(2, 2, 2, &a, false, &b, true, &mut c, true);
        assert_eq!(c, [34.0, 46.0, 78.0, 106.0]);
    }

    #[test]
    fn hcat_roundtrip() {
        let a = Mat::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let b = Mat::from_vec(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = Mat::hcat(&[&a, &b]).unwrap();
        assert_eq!(c.data, vec![1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let parts = c.hsplit(&[1, 2]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
