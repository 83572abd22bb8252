//! Dense row-major tensors.
//!
//! Storage is `f32` throughout the pipeline; the same code is generic over
//! [`Scalar`] so that gradient verification can rerun the full forward and
//! backward passes in `f64`.

use crate::error::{Error, Result};
use num_traits::Float;
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Element type for all numeric kernels. Implemented for `f32` and `f64`.
pub trait Scalar: Float + Sum + Debug + Display + Send + Sync + Copy + 'static {
    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;

    /// Hardware-specific matmul kernels. Return `false` to fall back to the
    /// portable generic implementation; `f32` overrides these with AVX2+FMA
    /// paths when the CPU supports them.
    #[allow(unused_variables)]
    fn matmul_acc_fast(a: &[Self], b: &[Self], m: usize, k: usize, n: usize, out: &mut [Self]) -> bool {
        false
    }

    #[allow(unused_variables)]
    fn matmul_a_bt_fast(a: &[Self], b: &[Self], m: usize, k: usize, n: usize, out: &mut [Self]) -> bool {
        false
    }
}

#[cfg(target_arch = "x86_64")]
fn have_avx2_fma() -> bool {
    use std::sync::OnceLock;
    static FLAG: OnceLock<bool> = OnceLock::new();
    *FLAG.get_or_init(|| {
        std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
    })
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn into_f64(self) -> f64 {
        self as f64
    }

    #[cfg(target_arch = "x86_64")]
    fn matmul_acc_fast(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) -> bool {
        if !have_avx2_fma() {
            return false;
        }
        unsafe { simd_x86::matmul_acc_f32(a, b, m, k, n, out) };
        true
    }

    #[cfg(target_arch = "x86_64")]
    fn matmul_a_bt_fast(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) -> bool {
        if !have_avx2_fma() {
            return false;
        }
        unsafe { simd_x86::matmul_a_bt_f32(a, b, m, k, n, out) };
        true
    }
}

/// AVX2+FMA kernels. Only reachable after a runtime feature check; the
/// pointer arithmetic stays within the slice bounds asserted by the callers.
#[cfg(target_arch = "x86_64")]
mod simd_x86 {
    #[cfg(target_arch = "x86_64")]
    use std::arch::x86_64::*;

    #[inline]
    unsafe fn hsum256(v: __m256) -> f32 {
        let lo = _mm256_castps256_ps128(v);
        let hi = _mm256_extractf128_ps(v, 1);
        let s = _mm_add_ps(lo, hi);
        let s = _mm_add_ps(s, _mm_movehl_ps(s, s));
        let s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 0b01));
        _mm_cvtss_f32(s)
    }

    /// out[m x n] += a[m x k] * b[k x n], row-major.
    #[target_feature(enable = "avx2", enable = "fma")]
    pub unsafe fn matmul_acc_f32(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
        debug_assert_eq!(a.len(), m * k);
        debug_assert_eq!(b.len(), k * n);
        debug_assert_eq!(out.len(), m * n);
        let bp = b.as_ptr();
        for i in 0..m {
            let a_row = a.as_ptr().add(i * k);
            let out_row = out.as_mut_ptr().add(i * n);
            let mut kk = 0;
            // four rank-1 updates per pass so each load/store of the output
            // row amortizes over four fused multiply-adds
            while kk + 4 <= k {
                let a0 = _mm256_set1_ps(*a_row.add(kk));
                let a1 = _mm256_set1_ps(*a_row.add(kk + 1));
                let a2 = _mm256_set1_ps(*a_row.add(kk + 2));
                let a3 = _mm256_set1_ps(*a_row.add(kk + 3));
                let b0 = bp.add(kk * n);
                let b1 = bp.add((kk + 1) * n);
                let b2 = bp.add((kk + 2) * n);
                let b3 = bp.add((kk + 3) * n);
                let mut j = 0;
                while j + 8 <= n {
                    let mut o = _mm256_loadu_ps(out_row.add(j));
                    o = _mm256_fmadd_ps(a0, _mm256_loadu_ps(b0.add(j)), o);
                    o = _mm256_fmadd_ps(a1, _mm256_loadu_ps(b1.add(j)), o);
                    o = _mm256_fmadd_ps(a2, _mm256_loadu_ps(b2.add(j)), o);
                    o = _mm256_fmadd_ps(a3, _mm256_loadu_ps(b3.add(j)), o);
                    _mm256_storeu_ps(out_row.add(j), o);
                    j += 8;
                }
                while j < n {
                    let acc = *out_row.add(j)
                        + *a_row.add(kk) * *b0.add(j)
                        + *a_row.add(kk + 1) * *b1.add(j)
                        + *a_row.add(kk + 2) * *b2.add(j)
                        + *a_row.add(kk + 3) * *b3.add(j);
                    *out_row.add(j) = acc;
                    j += 1;
                }
                kk += 4;
            }
            while kk < k {
                let av = *a_row.add(kk);
                if av != 0.0 {
                    let a0 = _mm256_set1_ps(av);
                    let b0 = bp.add(kk * n);
                    let mut j = 0;
                    while j + 8 <= n {
                        let o = _mm256_loadu_ps(out_row.add(j));
                        _mm256_storeu_ps(out_row.add(j), _mm256_fmadd_ps(a0, _mm256_loadu_ps(b0.add(j)), o));
                        j += 8;
                    }
                    while j < n {
                        *out_row.add(j) += av * *b0.add(j);
                        j += 1;
                    }
                }
                kk += 1;
            }
        }
    }

    /// out[m x n] += a[m x k] * b^T where b is stored [n x k]: dot products
    /// over contiguous rows, four output columns per pass for FMA pipelining.
    #[target_feature(enable = "avx2", enable = "fma")]
    pub unsafe fn matmul_a_bt_f32(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
        debug_assert_eq!(a.len(), m * k);
        debug_assert_eq!(b.len(), n * k);
        debug_assert_eq!(out.len(), m * n);
        let bp = b.as_ptr();
        for i in 0..m {
            let a_row = a.as_ptr().add(i * k);
            let out_row = out.as_mut_ptr().add(i * n);
            let mut j = 0;
            while j + 4 <= n {
                let b0 = bp.add(j * k);
                let b1 = bp.add((j + 1) * k);
                let b2 = bp.add((j + 2) * k);
                let b3 = bp.add((j + 3) * k);
                let mut acc0 = _mm256_setzero_ps();
                let mut acc1 = _mm256_setzero_ps();
                let mut acc2 = _mm256_setzero_ps();
                let mut acc3 = _mm256_setzero_ps();
                let mut c = 0;
                while c + 8 <= k {
                    let av = _mm256_loadu_ps(a_row.add(c));
                    acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0.add(c)), acc0);
                    acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1.add(c)), acc1);
                    acc2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2.add(c)), acc2);
                    acc3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3.add(c)), acc3);
                    c += 8;
                }
                let mut s0 = hsum256(acc0);
                let mut s1 = hsum256(acc1);
                let mut s2 = hsum256(acc2);
                let mut s3 = hsum256(acc3);
                while c < k {
                    let av = *a_row.add(c);
                    s0 += av * *b0.add(c);
                    s1 += av * *b1.add(c);
                    s2 += av * *b2.add(c);
                    s3 += av * *b3.add(c);
                    c += 1;
                }
                *out_row.add(j) += s0;
                *out_row.add(j + 1) += s1;
                *out_row.add(j + 2) += s2;
                *out_row.add(j + 3) += s3;
                j += 4;
            }
            while j < n {
                let b0 = bp.add(j * k);
                let mut acc = _mm256_setzero_ps();
                let mut c = 0;
                while c + 8 <= k {
                    acc = _mm256_fmadd_ps(
                        _mm256_loadu_ps(a_row.add(c)),
                        _mm256_loadu_ps(b0.add(c)),
                        acc,
                    );
                    c += 8;
                }
                let mut s = hsum256(acc);
                while c < k {
                    s += *a_row.add(c) * *b0.add(c);
                    c += 1;
                }
                *out_row.add(j) += s;
                j += 1;
            }
        }
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn into_f64(self) -> f64 {
        self
    }
}

/// Dense row-major tensor of rank 1..=8.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

/// The tensor type images, residuals and feature maps live in.
pub type ImageTensor = Tensor<f32>;

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn filled(dims: &[usize], value: T) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if expect != data.len() {
            return Err(Error::Dimension(format!(
                "dims {:?} imply {} elements, got {}",
                dims,
                expect,
                data.len()
            )));
        }
        if dims.is_empty() || dims.len() > 8 {
            return Err(Error::Dimension(format!(
                "rank must be in 1..=8, got {}",
                dims.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!("zero-sized axis in {dims:?}")));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
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

    /// Reinterpret with new dims of the same total length.
    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if expect != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {} elements to {:?}",
                self.data.len(),
                dims
            )));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.into_f64())).collect(),
        }
    }

    /// Flat index of a multi-axis coordinate.
    pub fn offset(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dims.len());
        let mut idx = 0;
        for (c, d) in coords.iter().zip(&self.dims) {
            debug_assert!(c < d);
            idx = idx * d + c;
        }
        idx
    }

    pub fn at(&self, coords: &[usize]) -> T {
        self.data[self.offset(coords)]
    }

    pub fn set(&mut self, coords: &[usize], value: T) {
        let i = self.offset(coords);
        self.data[i] = value;
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| v.into_f64()).sum::<f64>() / self.data.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data
            .iter()
            .map(|v| {
                let d = v.into_f64() - m;
                d * d
            })
            .sum::<f64>()
            / self.data.len() as f64
    }

    pub fn min(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

/// `sum_i a_i * b_i` accumulated in f64.
pub fn dot_f64<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.into_f64() * y.into_f64())
        .sum()
}

/// out[m x n] += a[m x k] * b[k x n], row-major.
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if T::matmul_acc_fast(a, b, m, k, n, out) {
        return;
    }
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (kk, &a_ik) in a_row.iter().enumerate() {
            if a_ik == T::zero() {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + a_ik * bv;
            }
        }
    }
}

/// out[m x n] += a^T[m x k] * b[k x n] where a is stored as [k x m].
///
/// `a` is transposed into a scratch buffer first so the multiply can run the
/// same cache-friendly row-major loops as [`matmul_acc`]; the copy is cheap
/// next to the O(mkn) multiply.
pub fn matmul_at_b_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let mut at = vec![T::zero(); m * k];
    for kk in 0..k {
        let a_row = &a[kk * m..(kk + 1) * m];
        for (i, &v) in a_row.iter().enumerate() {
            at[i * k + kk] = v;
        }
    }
    matmul_acc(&at, b, m, k, n, out);
}

const DOT_LANES: usize = 8;

/// Lane-split dot product the compiler can vectorize: each lane carries an
/// independent partial sum, so the float additions need no reordering.
#[inline]
fn dot_lanes<T: Scalar>(a: &[T], b: &[T], acc: &mut [T; DOT_LANES]) {
    let chunks = a.len() / DOT_LANES;
    for c in 0..chunks {
        let av = &a[c * DOT_LANES..(c + 1) * DOT_LANES];
        let bv = &b[c * DOT_LANES..(c + 1) * DOT_LANES];
        for l in 0..DOT_LANES {
            acc[l] = acc[l] + av[l] * bv[l];
        }
    }
    for i in chunks * DOT_LANES..a.len() {
        acc[0] = acc[0] + a[i] * b[i];
    }
}

#[inline]
fn sum_lanes<T: Scalar>(acc: &[T; DOT_LANES]) -> T {
    let mut s = T::zero();
    for &v in acc.iter() {
        s = s + v;
    }
    s
}

/// out[m x n] += a[m x k] * b^T[k x n] where b is stored as [n x k].
///
/// Columns are processed four at a time so a shared `a` row feeds four
/// independent accumulator chains, keeping the FMA pipeline full.
pub fn matmul_a_bt_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    if T::matmul_a_bt_fast(a, b, m, k, n, out) {
        return;
    }
    let zero = [T::zero(); DOT_LANES];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        let mut j = 0;
        while j + 4 <= n {
            let b0 = &b[j * k..(j + 1) * k];
            let b1 = &b[(j + 1) * k..(j + 2) * k];
            let b2 = &b[(j + 2) * k..(j + 3) * k];
            let b3 = &b[(j + 3) * k..(j + 4) * k];
            let (mut a0, mut a1, mut a2, mut a3) = (zero, zero, zero, zero);
            let chunks = k / DOT_LANES;
            for c in 0..chunks {
                let av = &a_row[c * DOT_LANES..(c + 1) * DOT_LANES];
                let (s0, s1, s2, s3) = (
                    &b0[c * DOT_LANES..(c + 1) * DOT_LANES],
                    &b1[c * DOT_LANES..(c + 1) * DOT_LANES],
                    &b2[c * DOT_LANES..(c + 1) * DOT_LANES],
                    &b3[c * DOT_LANES..(c + 1) * DOT_LANES],
                );
                for l in 0..DOT_LANES {
                    a0[l] = a0[l] + av[l] * s0[l];
                    a1[l] = a1[l] + av[l] * s1[l];
                    a2[l] = a2[l] + av[l] * s2[l];
                    a3[l] = a3[l] + av[l] * s3[l];
                }
            }
            for idx in chunks * DOT_LANES..k {
                a0[0] = a0[0] + a_row[idx] * b0[idx];
                a1[0] = a1[0] + a_row[idx] * b1[idx];
                a2[0] = a2[0] + a_row[idx] * b2[idx];
                a3[0] = a3[0] + a_row[idx] * b3[idx];
            }
            out_row[j] = out_row[j] + sum_lanes(&a0);
            out_row[j + 1] = out_row[j + 1] + sum_lanes(&a1);
            out_row[j + 2] = out_row[j + 2] + sum_lanes(&a2);
            out_row[j + 3] = out_row[j + 3] + sum_lanes(&a3);
            j += 4;
        }
        while j < n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = zero;
            dot_lanes(a_row, b_row, &mut acc);
            out_row[j] = out_row[j] + sum_lanes(&acc);
            j += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn rank_bounds() {
        assert!(Tensor::<f32>::from_vec(&[], vec![]).is_err());
        assert!(Tensor::<f32>::from_vec(&[1; 9], vec![0.0]).is_err());
    }

    #[test]
    fn offset_row_major() {
        let t = Tensor::<f32>::from_vec(&[2, 3], (0..6).map(|i| i as f32).collect()).unwrap();
        assert_eq!(t.at(&[1, 2]), 5.0);
        assert_eq!(t.at(&[0, 1]), 1.0);
    }

    #[test]
    fn matmul_small() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0f32, 2.0, 3.0, 4.0];
        let b = [5.0f32, 6.0, 7.0, 8.0];
        let mut out = [0.0f32; 4];
        matmul_acc(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_transposed_variants_agree() {
        let a = [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0f32, 0.0, 2.0, 1.0, 0.0, 3.0]; // 3x2
        let mut expect = [0.0f32; 4];
        matmul_acc(&a, &b, 2, 3, 2, &mut expect);

        // a stored transposed: 3x2 holding a^T
        let at = [1.0f32, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut got = [0.0f32; 4];
        matmul_at_b_acc(&at, &b, 2, 3, 2, &mut got);
        assert_eq!(got, expect);

        // b stored transposed: 2x3 holding b^T
        let bt = [1.0f32, 2.0, 0.0, 0.0, 1.0, 3.0];
        let mut got2 = [0.0f32; 4];
        matmul_a_bt_acc(&a, &bt, 2, 3, 2, &mut got2);
        assert_eq!(got2, expect);
    }
}
