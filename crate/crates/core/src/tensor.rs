//! Dense row-major tensors plus the few matrix kernels the networks need.

use crate::error::{AqlError, Result};
use crate::scalar::Scalar;

/// A dense tensor with row-major flat storage.
///
/// Finiteness is part of the type's contract: constructors reject NaN and
/// infinite entries so numeric blowups surface at their source.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(AqlError::Usage(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(AqlError::Numeric(format!(
                "non-finite entry in tensor of shape {:?}",
                shape
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![F::zero(); numel],
        }
    }

    pub fn filled(shape: Vec<usize>, value: F) -> Result<Self> {
        let numel = shape.iter().product();
        Self::from_vec(shape, vec![value; numel])
    }

    pub fn scalar(value: F) -> Result<Self> {
        Self::from_vec(vec![1], vec![value])
    }

    /// A `rows x cols` matrix from a flat row-major buffer.
    pub fn matrix(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        Self::from_vec(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Number of rows when interpreted as a matrix ([n] counts as n rows of width 1).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    /// Width of the last dimension.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, r: usize) -> &[F] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn scalar_value(&self) -> F {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub(crate) fn into_data(self) -> Vec<F> {
        self.data
    }
}

/// `c += a @ b` for row-major `a: [m,k]`, `b: [k,n]`, `c: [m,n]`.
///
/// The k-inner loop runs as an axpy over output rows, which the compiler
/// vectorizes; per-row results are independent of the batch size, so batched
/// and single-row evaluation agree bit for bit.
pub fn matmul_acc<F: Scalar>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == F::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// `c += a^T @ b` for `a: [k,m]`, `b: [k,n]`, `c: [m,n]`.
pub fn matmul_tn_acc<F: Scalar>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            if av == F::zero() {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// `c += a @ b^T` for `a: [m,k]`, `b: [n,k]`, `c: [m,n]`.
pub fn matmul_nt_acc<F: Scalar>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (j, cv) in c_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc = acc + av * bv;
            }
            *cv = *cv + acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_shape_and_finiteness() {
        assert!(Tensor::from_vec(vec![2, 2], vec![1.0f64; 3]).is_err());
        assert!(Tensor::from_vec(vec![2], vec![1.0f64, f64::NAN]).is_err());
        assert!(Tensor::from_vec(vec![2], vec![1.0f64, f64::INFINITY]).is_err());
        let t = Tensor::from_vec(vec![2, 3], vec![0.0f64; 6]).unwrap();
        assert_eq!(t.rows(), 2);
        assert_eq!(t.cols(), 3);
    }

    #[test]
    fn matmul_against_nested_loops() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let mut c = [0.0f64; 4];
        matmul_acc(&a, &b, &mut c, 2, 3, 2);
        let mut want = [0.0f64; 4];
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..3 {
                    want[i * 2 + j] += a[i * 3 + p] * b[p * 2 + j];
                }
            }
        }
        assert_eq!(c, want);
    }

    #[test]
    fn transposed_variants_agree_with_plain() {
        let a = [1.0f64, -2.0, 0.5, 3.0, 4.0, -1.0]; // 2x3 or 3x2 depending on view
        let b = [2.0f64, 1.0, 0.0, -1.0, 1.5, 2.5]; // 3x2 or 2x3

        // a^T @ b with a viewed as [3,2]: equals plain matmul of transposed copy.
        let mut c1 = [0.0f64; 2 * 2];
        matmul_tn_acc(&a, &b, &mut c1, 2, 3, 2);
        let at = [a[0], a[2], a[4], a[1], a[3], a[5]]; // [2,3]
        let mut c2 = [0.0f64; 4];
        matmul_acc(&at, &b, &mut c2, 2, 3, 2);
        assert_eq!(c1, c2);

        // a @ b^T with b viewed as [2,3].
        let mut c3 = [0.0f64; 2 * 2];
        matmul_nt_acc(&a, &b, &mut c3, 2, 3, 2);
        let bt = [b[0], b[3], b[1], b[4], b[2], b[5]]; // [3,2]
        let mut c4 = [0.0f64; 4];
        matmul_acc(&a, &bt, &mut c4, 2, 3, 2);
        assert_eq!(c3, c4);
    }

    #[test]
    fn works_for_f32_too() {
        let a = [1.0f32, 2.0];
        let b = [3.0f32, 4.0];
        let mut c = [0.0f32; 1];
        matmul_acc(&a, &b, &mut c, 1, 2, 1);
        assert_eq!(c[0], 11.0);
    }
}
