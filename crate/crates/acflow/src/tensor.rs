//! Dense row-major arrays of reals, plus the small amount of linear algebra
//! the flow transforms need (matrix products, pivoted LU).

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major array. Rank 0 (shape `[]`) is a scalar; empty axes are
/// allowed so masked selections can be zero-length.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F: Real = f64> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                details: format!("shape {shape:?} wants {numel} entries, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(v: F) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn vector(data: Vec<F>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        Self::from_vec(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![F::zero(); numel] }
    }

    pub fn full(shape: &[usize], v: F) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![v; numel] }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = F::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> Result<F> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Shape {
                op: "scalar_value",
                details: format!("tensor of shape {:?} is not a scalar", self.shape),
            })
        }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn at2(&self, i: usize, j: usize) -> F {
        self.data[i * self.shape[1] + j]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise map into a fresh tensor.
    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combine; shapes must match exactly.
    pub fn zip(&self, other: &Self, op: &'static str, f: impl Fn(F, F) -> F) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape {
                op,
                details: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    pub fn scale_in_place(&mut self, c: F) {
        for v in self.data.iter_mut() {
            *v *= c;
        }
    }

    pub fn sum(&self) -> F {
        self.data.iter().copied().sum()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn from_f64_slice(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| F::cast(v)).collect())
    }
}

/// `a [m,k] * b [k,n] -> [m,n]`, or `a [m,k] * b [k] -> [m]`.
pub fn matmul<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    match (a.rank(), b.rank()) {
        (2, 2) => {
            let (m, k) = (a.shape[0], a.shape[1]);
            let (k2, n) = (b.shape[0], b.shape[1]);
            if k != k2 {
                return Err(Error::Shape {
                    op: "matmul",
                    details: format!("{:?} x {:?}", a.shape, b.shape),
                });
            }
            let mut out = vec![F::zero(); m * n];
            for i in 0..m {
                let arow = &a.data[i * k..(i + 1) * k];
                let orow = &mut out[i * n..(i + 1) * n];
                for (p, &av) in arow.iter().enumerate() {
                    let brow = &b.data[p * n..(p + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                        *o = av.mul_add(bv, *o);
                    }
                }
            }
            Tensor::from_vec(vec![m, n], out)
        }
        (2, 1) => {
            let (m, k) = (a.shape[0], a.shape[1]);
            if k != b.shape[0] {
                return Err(Error::Shape {
                    op: "matmul",
                    details: format!("{:?} x {:?}", a.shape, b.shape),
                });
            }
            let mut out = vec![F::zero(); m];
            for i in 0..m {
                let arow = &a.data[i * k..(i + 1) * k];
                let mut acc = F::zero();
                for (&av, &bv) in arow.iter().zip(b.data.iter()) {
                    acc = av.mul_add(bv, acc);
                }
                out[i] = acc;
            }
            Ok(Tensor::vector(out))
        }
        _ => Err(Error::Shape {
            op: "matmul",
            details: format!("unsupported ranks {:?} x {:?}", a.shape, b.shape),
        }),
    }
}

/// `a^T * b` where `a` is [m,k]: accepts b [m,n] -> [k,n] or b [m] -> [k].
pub fn matmul_tn<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (m, k) = (a.shape[0], a.shape[1]);
    match b.rank() {
        1 => {
            if b.shape[0] != m {
                return Err(Error::Shape {
                    op: "matmul_tn",
                    details: format!("{:?}^T x {:?}", a.shape, b.shape),
                });
            }
            let mut out = vec![F::zero(); k];
            for i in 0..m {
                let arow = &a.data[i * k..(i + 1) * k];
                let bi = b.data[i];
                for (o, &av) in out.iter_mut().zip(arow.iter()) {
                    *o = av.mul_add(bi, *o);
                }
            }
            Ok(Tensor::vector(out))
        }
        2 => {
            let n = b.shape[1];
            if b.shape[0] != m {
                return Err(Error::Shape {
                    op: "matmul_tn",
                    details: format!("{:?}^T x {:?}", a.shape, b.shape),
                });
            }
            let mut out = vec![F::zero(); k * n];
            for i in 0..m {
                let arow = &a.data[i * k..(i + 1) * k];
                let brow = &b.data[i * n..(i + 1) * n];
                for (p, &av) in arow.iter().enumerate() {
                    let orow = &mut out[p * n..(p + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                        *o = av.mul_add(bv, *o);
                    }
                }
            }
            Tensor::from_vec(vec![k, n], out)
        }
        _ => Err(Error::Shape {
            op: "matmul_tn",
            details: format!("unsupported ranks {:?} x {:?}", a.shape, b.shape),
        }),
    }
}

/// `a * b^T` for rank-2 `b` [n,k] with `a` [m,k] -> [m,n]; or outer product
/// of two vectors `a` [m], `b` [n] -> [m,n].
pub fn matmul_nt<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    match (a.rank(), b.rank()) {
        (1, 1) => {
            let (m, n) = (a.shape[0], b.shape[0]);
            let mut out = vec![F::zero(); m * n];
            for i in 0..m {
                let ai = a.data[i];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(b.data.iter()) {
                    *o = ai * bv;
                }
            }
            Tensor::from_vec(vec![m, n], out)
        }
        (2, 2) => {
            let (m, k) = (a.shape[0], a.shape[1]);
            let (n, k2) = (b.shape[0], b.shape[1]);
            if k != k2 {
                return Err(Error::Shape {
                    op: "matmul_nt",
                    details: format!("{:?} x {:?}^T", a.shape, b.shape),
                });
            }
            let mut out = vec![F::zero(); m * n];
            for i in 0..m {
                let arow = &a.data[i * k..(i + 1) * k];
                for j in 0..n {
                    let brow = &b.data[j * k..(j + 1) * k];
                    let mut acc = F::zero();
                    for (&av, &bv) in arow.iter().zip(brow.iter()) {
                        acc = av.mul_add(bv, acc);
                    }
                    out[i * n + j] = acc;
                }
            }
            Tensor::from_vec(vec![m, n], out)
        }
        _ => Err(Error::Shape {
            op: "matmul_nt",
            details: format!("unsupported ranks {:?} x {:?}", a.shape, b.shape),
        }),
    }
}

/// Pivoted LU factorization of a square matrix, with the diagnostics the
/// conditional linear transform's error contract needs.
pub struct Lu<F: Real> {
    lu: Vec<F>,
    pivots: Vec<usize>,
    n: usize,
}

/// |det| below this is treated as singular.
pub const DET_ABS_FLOOR: f64 = 1e-30;
/// 1-norm condition estimate above this is treated as numerically unusable.
pub const COND_LIMIT: f64 = 1e12;

impl<F: Real> Lu<F> {
    pub fn factor(a: &Tensor<F>) -> Result<Self> {
        if a.rank() != 2 || a.shape[0] != a.shape[1] {
            return Err(Error::Shape {
                op: "lu",
                details: format!("expected square matrix, got {:?}", a.shape),
            });
        }
        let n = a.shape[0];
        let mut lu = a.data.clone();
        let mut pivots = vec![0usize; n];
        for col in 0..n {
            let mut pivot = col;
            let mut best = lu[col * n + col].abs();
            for row in (col + 1)..n {
                let v = lu[row * n + col].abs();
                if v > best {
                    best = v;
                    pivot = row;
                }
            }
            pivots[col] = pivot;
            if pivot != col {
                for j in 0..n {
                    lu.swap(col * n + j, pivot * n + j);
                }
            }
            let diag = lu[col * n + col];
            if diag == F::zero() {
                return Err(Error::Numerical {
                    transform: None,
                    details: format!("singular matrix (zero pivot at column {col})"),
                });
            }
            for row in (col + 1)..n {
                let factor = lu[row * n + col] / diag;
                lu[row * n + col] = factor;
                for j in (col + 1)..n {
                    let upd = lu[col * n + j];
                    lu[row * n + j] = (-factor).mul_add(upd, lu[row * n + j]);
                }
            }
        }
        Ok(Lu { lu, pivots, n })
    }

    /// log |det A|.
    pub fn log_abs_det(&self) -> F {
        let n = self.n;
        (0..n).map(|i| self.lu[i * n + i].abs().ln()).sum()
    }

    /// Solve `A x = b` in place on a copy of `b`.
    pub fn solve(&self, b: &[F]) -> Result<Vec<F>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::Shape {
                op: "lu_solve",
                details: format!("matrix is {n}x{n}, rhs has length {}", b.len()),
            });
        }
        let mut x = b.to_vec();
        for i in 0..n {
            x.swap(i, self.pivots[i]);
        }
        // forward: L y = P b (unit lower)
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc = (-self.lu[i * n + j]).mul_add(x[j], acc);
            }
            x[i] = acc;
        }
        // backward: U x = y
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc = (-self.lu[i * n + j]).mul_add(x[j], acc);
            }
            x[i] = acc / self.lu[i * n + i];
        }
        Ok(x)
    }

    /// Dense inverse, column by column.
    pub fn inverse(&self) -> Result<Tensor<F>> {
        let n = self.n;
        let mut inv = vec![F::zero(); n * n];
        let mut e = vec![F::zero(); n];
        for col in 0..n {
            e[col] = F::one();
            let x = self.solve(&e)?;
            e[col] = F::zero();
            for row in 0..n {
                inv[row * n + col] = x[row];
            }
        }
        Tensor::from_vec(vec![n, n], inv)
    }
}

/// 1-norm (max absolute column sum) of a square matrix.
pub fn one_norm<F: Real>(a: &Tensor<F>) -> F {
    let n = a.shape()[1];
    let mut best = F::zero();
    for col in 0..n {
        let mut acc = F::zero();
        for row in 0..a.shape()[0] {
            acc += a.at2(row, col).abs();
        }
        if acc > best {
            best = acc;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_matvec() {
        let i2: Tensor = Tensor::eye(2);
        let v = Tensor::vector(vec![3.0, 4.0]);
        let out = matmul(&i2, &v).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);
    }

    #[test]
    fn matmul_shapes_rejected() {
        let a: Tensor = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        assert!(matmul(&a, &b).is_err());
    }

    #[test]
    fn matmul_2x2_hand_case() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Tensor::matrix(2, 3, vec![1.0, -2.0, 0.5, 3.0, 1.5, -1.0]).unwrap();
        let v = Tensor::vector(vec![2.0, -1.0]);
        let atv = matmul_tn(&a, &v).unwrap();
        // a^T v computed by hand
        assert_eq!(atv.data(), &[1.0 * 2.0 - 3.0, -2.0 * 2.0 - 1.5, 0.5 * 2.0 + 1.0]);

        let b = Tensor::matrix(2, 3, vec![1.0, 0.0, 1.0, 0.0, 2.0, -1.0]).unwrap();
        let abt = matmul_nt(&a, &b).unwrap();
        assert_eq!(abt.shape(), &[2, 2]);
        assert_eq!(abt.at2(0, 0), 1.0 + 0.5);
        assert_eq!(abt.at2(1, 1), 2.0 * 1.5 + 1.0);
    }

    #[test]
    fn lu_solves_and_dets() {
        let a: Tensor = Tensor::matrix(2, 2, vec![2.0, 0.0, 0.0, 3.0]).unwrap();
        let lu = Lu::factor(&a).unwrap();
        assert!((lu.log_abs_det() - 6.0f64.ln()).abs() < 1e-14);
        let x = lu.solve(&[4.0, 9.0]).unwrap();
        assert_eq!(x, vec![2.0, 3.0]);

        // needs pivoting
        let a: Tensor = Tensor::matrix(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let lu = Lu::factor(&a).unwrap();
        assert!(lu.log_abs_det().abs() < 1e-14);
        let x = lu.solve(&[5.0, 7.0]).unwrap();
        assert_eq!(x, vec![7.0, 5.0]);
    }

    #[test]
    fn lu_inverse_times_matrix_is_identity() {
        let a: Tensor =
            Tensor::matrix(3, 3, vec![4.0, 1.0, 0.0, 1.0, 3.0, -1.0, 0.0, -1.0, 2.0]).unwrap();
        let inv = Lu::factor(&a).unwrap().inverse().unwrap();
        let prod = matmul(&a, &inv).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod.at2(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix_reported() {
        let a: Tensor = Tensor::matrix(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(Lu::factor(&a).is_err());
    }

    #[test]
    fn empty_tensor_ok() {
        let t: Tensor = Tensor::vector(vec![]);
        assert_eq!(t.numel(), 0);
        assert_eq!(t.sum(), 0.0);
    }
}
