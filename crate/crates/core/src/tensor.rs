//! Dense row-major tensors over `f32`/`f64`.
//!
//! `Tensor<T>` is the storage type for images, feature maps, weight
//! matrices, and SPD matrices. Matrix products are routed through
//! `matrixmultiply`, everything else is plain loops over the contiguous
//! buffer. Training runs in `f32`; gradient checks run the same code in
//! `f64` through the [`Scalar`] abstraction.

use crate::error::{CoreError, Result};
use num_traits::Float;
use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Element type of a [`Tensor`]: `f32` or `f64`.
pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + DivAssign + Debug + Send + Sync + 'static
{
    /// Type tag recorded in checkpoints and reports.
    const DTYPE: &'static str;

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C <- alpha * A * B + beta * C` for arbitrary strides.
    ///
    /// # Safety
    /// Pointers must reference buffers valid for the given dimensions and
    /// strides; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";

    fn from_f64(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Dense n-dimensional array, row-major, contiguous.
///
/// Invariant: every dimension is at least 1 and the buffer length equals the
/// product of the dimensions. Construction rejects anything else.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let n = checked_len(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = checked_len(shape)?;
        if n != data.len() {
            return Err(CoreError::Dimension(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// d x d identity matrix.
    pub fn identity(d: usize) -> Self {
        let mut t = Self::zeros(&[d, d]);
        for i in 0..d {
            t.data[i * d + i] = T::one();
        }
        t
    }

    /// Diagonal matrix from a vector of diagonal entries.
    pub fn from_diag(diag: &[T]) -> Self {
        let d = diag.len();
        let mut t = Self::zeros(&[d, d]);
        for i in 0..d {
            t.data[i * d + i] = diag[i];
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Reinterprets the buffer under a new shape of identical length.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = checked_len(shape)?;
        if n != self.data.len() {
            return Err(CoreError::Dimension(format!(
                "cannot reshape {:?} ({} elems) to {:?} ({} elems)",
                self.shape,
                self.data.len(),
                shape,
                n
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Rows of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.rank(), 2, "rows() on rank-{} tensor", self.rank());
        self.shape[0]
    }

    /// Columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        assert_eq!(self.rank(), 2, "cols() on rank-{} tensor", self.rank());
        self.shape[1]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j] = v;
    }

    /// Rank-2 transpose.
    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut out = Self::zeros(&[c, r]);
        for i in 0..r {
            for j in 0..c {
                out.data[j * r + i] = self.data[i * c + j];
            }
        }
        out
    }

    /// `self * other` for rank-2 tensors.
    pub fn matmul(&self, other: &Self) -> Self {
        matmul_ex(self, false, other, false)
    }

    /// `self^T * other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Self) -> Self {
        matmul_ex(self, true, other, false)
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Self) -> Self {
        matmul_ex(self, false, other, true)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(CoreError::Dimension(format!(
                "add: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(CoreError::Dimension(format!(
                "sub: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// `self += s * other`; shapes must already agree.
    pub fn axpy(&mut self, s: T, other: &Self) {
        assert_eq!(self.shape, other.shape, "axpy shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// Frobenius norm, accumulated in f64.
    pub fn frob_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&x| {
                let v = x.as_f64();
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Sum of diagonal entries of a square rank-2 tensor.
    pub fn trace(&self) -> T {
        let (r, c) = (self.rows(), self.cols());
        assert_eq!(r, c, "trace of non-square matrix");
        let mut t = T::zero();
        for i in 0..r {
            t += self.data[i * c + i];
        }
        t
    }

    /// Errs on any NaN or infinity; `ctx` names the producing operation.
    pub fn check_finite(&self, ctx: &str) -> Result<()> {
        for (i, &x) in self.data.iter().enumerate() {
            if !x.is_finite() {
                return Err(CoreError::Numeric(format!(
                    "{ctx}: non-finite value {:?} at flat index {i} (shape {:?})",
                    x, self.shape
                )));
            }
        }
        Ok(())
    }

    /// Element-wise precision cast.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.as_f64())).collect(),
        }
    }
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(CoreError::Dimension("empty shape".into()));
    }
    let mut n: usize = 1;
    for &d in shape {
        if d == 0 {
            return Err(CoreError::Dimension(format!("zero-sized dim in {shape:?}")));
        }
        n = n.checked_mul(d).ok_or_else(|| {
            CoreError::Dimension(format!("shape {shape:?} overflows usize"))
        })?;
    }
    Ok(n)
}

/// General matrix product with optional transposes, `op(a) * op(b)`.
pub fn matmul_ex<T: Scalar>(a: &Tensor<T>, ta: bool, b: &Tensor<T>, tb: bool) -> Tensor<T> {
    let (am, ak) = if ta {
        (a.cols(), a.rows())
    } else {
        (a.rows(), a.cols())
    };
    let (bk, bn) = if tb {
        (b.cols(), b.rows())
    } else {
        (b.rows(), b.cols())
    };
    assert_eq!(
        ak, bk,
        "matmul: inner dims {ak} vs {bk} (a {:?} ta={ta}, b {:?} tb={tb})",
        a.shape, b.shape
    );
    let mut c = Tensor::zeros(&[am, bn]);
    gemm_into(T::one(), a, ta, b, tb, T::zero(), &mut c);
    c
}

/// `c <- alpha * op(a) * op(b) + beta * c`.
pub fn gemm_into<T: Scalar>(
    alpha: T,
    a: &Tensor<T>,
    ta: bool,
    b: &Tensor<T>,
    tb: bool,
    beta: T,
    c: &mut Tensor<T>,
) {
    let (am, ak) = if ta {
        (a.cols(), a.rows())
    } else {
        (a.rows(), a.cols())
    };
    let (bk, bn) = if tb {
        (b.cols(), b.rows())
    } else {
        (b.rows(), b.cols())
    };
    assert_eq!(ak, bk, "gemm: inner dims {ak} vs {bk}");
    assert_eq!(c.rows(), am, "gemm: output rows");
    assert_eq!(c.cols(), bn, "gemm: output cols");
    let (rsa, csa) = if ta {
        (1isize, a.cols() as isize)
    } else {
        (a.cols() as isize, 1isize)
    };
    let (rsb, csb) = if tb {
        (1isize, b.cols() as isize)
    } else {
        (b.cols() as isize, 1isize)
    };
    let n = c.cols() as isize;
    unsafe {
        T::gemm(
            am,
            ak,
            bn,
            alpha,
            a.data().as_ptr(),
            rsa,
            csa,
            b.data().as_ptr(),
            rsb,
            csb,
            beta,
            c.data_mut().as_mut_ptr(),
            n,
            1,
        );
    }
}

/// Symmetric part `(x + x^T) / 2` of a square matrix.
pub fn sym_part<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 2 || x.shape()[0] != x.shape()[1] {
        return Err(CoreError::Dimension(format!(
            "sym_part needs a square matrix, got {:?}",
            x.shape()
        )));
    }
    let d = x.shape()[0];
    let half = T::from_f64(0.5);
    let mut out = Tensor::zeros(&[d, d]);
    for i in 0..d {
        for j in 0..d {
            out.set(i, j, (x.get(i, j) + x.get(j, i)) * half);
        }
    }
    Ok(out)
}

/// Frobenius inner product `<a, b> = sum_ij a_ij * b_ij`.
pub fn frobenius_inner<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    if a.shape() != b.shape() {
        return Err(CoreError::Dimension(format!(
            "frobenius_inner: shape {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut acc = T::zero();
    for (&x, &y) in a.data().iter().zip(b.data()) {
        acc += x * y;
    }
    Ok(acc)
}
