//! Dense row-major matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Floating-point element type. Implemented for `f32` (the working
/// precision) and `f64` (used by gradient checks).
pub trait Real:
    Copy
    + Default
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
    /// Little-endian IEEE bytes widened to 8 bytes (f32 occupies the first 4).
    fn to_bits_u64(self) -> u64;
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn exp(self) -> Self {
        libm::expf(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        libm::tanhf(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrtf(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
    #[inline]
    fn to_bits_u64(self) -> u64 {
        self.to_bits() as u64
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        libm::tanh(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    #[inline]
    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }
}

/// Logistic function, evaluated without overflow for either sign.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

/// Euclidean norm with a 64-bit accumulator.
pub fn norm<T: Real>(v: &[T]) -> f64 {
    libm::sqrt(v.iter().map(|x| x.to_f64() * x.to_f64()).sum::<f64>())
}

/// Dot product with a 64-bit accumulator.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.to_f64() * y.to_f64()).sum()
}

/// A `rows x cols` matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::ZERO; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = T::ONE;
        }
        t
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row_vector(data: Vec<T>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    /// Stacks equally long rows into a matrix.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape {
                    op: "from_rows",
                    left: (1, cols),
                    right: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Matrix product; each output element is accumulated in 64 bits.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut acc = vec![0.0f64; m];
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let a_row = &self.data[i * k..(i + 1) * k];
            for (p, &a) in a_row.iter().enumerate() {
                let a = a.to_f64();
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (slot, &b) in acc.iter_mut().zip(b_row) {
                    *slot += a * b.to_f64();
                }
            }
            out.extend(acc.iter().map(|&v| T::from_f64(v)));
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `self^T * other`, without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::Shape {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (k, n, m) = (self.rows, self.cols, other.cols);
        let mut acc = vec![0.0f64; n * m];
        for p in 0..k {
            let a_row = &self.data[p * n..(p + 1) * n];
            let b_row = &other.data[p * m..(p + 1) * m];
            for (i, &a) in a_row.iter().enumerate() {
                let a = a.to_f64();
                if a == 0.0 {
                    continue;
                }
                let slot = &mut acc[i * m..(i + 1) * m];
                for (s, &b) in slot.iter_mut().zip(b_row) {
                    *s += a * b.to_f64();
                }
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: acc.into_iter().map(T::from_f64).collect(),
        })
    }

    /// `self * other^T`, without materializing the transpose.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::Shape {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, m) = (self.rows, other.rows);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let a = self.row(i);
            for j in 0..m {
                out.push(T::from_f64(dot(a, other.row(j))));
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Self {
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

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| f(a)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|a| a * s)
    }

    /// `alpha * self + beta`, elementwise.
    pub fn affine(&self, alpha: T, beta: T) -> Self {
        self.map(|a| alpha * a + beta)
    }

    pub fn sigmoid(&self) -> Self {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Self {
        self.map(|a| a.tanh())
    }

    /// Adds the `1 x cols` row `bias` to every row.
    pub fn add_row(&self, bias: &Self) -> Result<Self> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(Error::Shape {
                op: "add_row",
                left: self.shape(),
                right: bias.shape(),
            });
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for (o, &b) in out.row_mut(r).iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Sums over rows, giving a `1 x cols` row.
    pub fn sum_rows(&self) -> Self {
        let mut acc = vec![0.0f64; self.cols];
        for r in 0..self.rows {
            for (a, &v) in acc.iter_mut().zip(self.row(r)) {
                *a += v.to_f64();
            }
        }
        Self::row_vector(acc.into_iter().map(T::from_f64).collect())
    }

    /// Euclidean norm of each row, as a `rows x 1` column.
    pub fn row_norms(&self) -> Self {
        Self {
            rows: self.rows,
            cols: 1,
            data: (0..self.rows)
                .map(|r| T::from_f64(norm(self.row(r))))
                .collect(),
        }
    }

    /// Picks rows of `self` by index.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(ids.len() * self.cols);
        for &id in ids {
            if id >= self.rows {
                return Err(Error::Index {
                    what: "row",
                    index: id,
                    bound: self.rows,
                });
            }
            data.extend_from_slice(self.row(id));
        }
        Ok(Self {
            rows: ids.len(),
            cols: self.cols,
            data,
        })
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| libm::fabs(a.to_f64() - b.to_f64()))
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random(rng: &mut SeededRng, r: usize, c: usize) -> Tensor<f64> {
        let data = (0..r * c).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        Tensor::from_vec(r, c, data).unwrap()
    }

    #[test]
    fn identity_times_b_is_b() {
        let b = Tensor::from_vec(2, 3, vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(Tensor::identity(2).matmul(&b).unwrap(), b);
    }

    #[test]
    fn small_product_by_hand() {
        let a = Tensor::from_vec(2, 2, vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(2, 1, vec![1.0f32, 1.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = SeededRng::new(11);
        let a = random(&mut rng, 5, 4);
        let b = random(&mut rng, 4, 3);
        let got = a.matmul(&b).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += a.get(i, k) * b.get(k, j);
                }
                assert!((got.get(i, j) - s).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn transposed_products_agree() {
        let mut rng = SeededRng::new(5);
        let a = random(&mut rng, 4, 3);
        let b = random(&mut rng, 4, 2);
        let c = random(&mut rng, 5, 3);
        let direct = a.transpose().matmul(&b).unwrap();
        assert!(a.t_matmul(&b).unwrap().max_abs_diff(&direct).unwrap() < 1e-12);
        let direct = a.matmul(&c.transpose()).unwrap();
        assert!(a.matmul_t(&c).unwrap().max_abs_diff(&direct).unwrap() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let a = Tensor::<f32>::zeros(2, 3);
        let b = Tensor::<f32>::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::Shape { .. })));
        assert!(matches!(
            a.add(&Tensor::zeros(3, 2)),
            Err(Error::Shape { .. })
        ));
        assert!(Tensor::<f32>::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn elementwise_basics() {
        assert_eq!(sigmoid(0.0f32), 0.5);
        assert_eq!(0.0f32.tanh(), 0.0);
        let x = Tensor::from_vec(1, 3, vec![1.0f32, -2.0, 3.5]).unwrap();
        assert_eq!(x.add(&Tensor::zeros(1, 3)).unwrap(), x);
        assert!(sigmoid(-1000.0f32).is_finite());
        assert!(sigmoid(1000.0f32) == 1.0);
    }
}
