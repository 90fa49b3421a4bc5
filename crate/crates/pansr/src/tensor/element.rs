//! Scalar element abstraction: the whole tensor stack is generic over `f32`
//! (training default) and `f64` (verification mode). Both instantiations run
//! the same code; only the storage width and the gemm kernel differ.

use std::cell::RefCell;

use crate::tensor::tape::TapeState;

/// Floating-point element of a [`crate::tensor::Tensor`].
///
/// Implemented for `f32` and `f64` only. Beyond arithmetic this carries the
/// per-type gemm dispatch and the thread-local gradient-tape slot (one tape
/// per element type, since tapes store typed tensors).
pub trait Element:
    Copy
    + Send
    + Sync
    + PartialOrd
    + std::fmt::Debug
    + std::fmt::Display
    + num_traits::Float
    + std::ops::AddAssign
    + std::ops::MulAssign
    + 'static
{
    /// Short name used in error messages and checkpoint headers.
    const NAME: &'static str;
    /// Bytes per scalar in the serialized little-endian form.
    const BYTE_WIDTH: usize;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// C = alpha * A(m x k) * B(k x n) + beta * C, row-major contiguous.
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]);

    /// C = A^T * B with A stored row-major as (k x m). Overwrites C.
    fn gemm_tn(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]);

    /// C += A * B^T with B stored row-major as (n x k). Accumulates into C.
    fn gemm_nt(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]);

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// Access this element type's thread-local tape slot.
    fn with_tape<R>(f: impl FnOnce(&RefCell<TapeState<Self>>) -> R) -> R;
}

impl Element for f32 {
    const NAME: &'static str = "f32";
    const BYTE_WIDTH: usize = 4;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        debug_assert_eq!(a.len(), m * k);
        debug_assert_eq!(b.len(), k * n);
        debug_assert_eq!(c.len(), m * n);
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha,
                a.as_ptr(), k as isize, 1,
                b.as_ptr(), n as isize, 1,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    fn gemm_tn(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]) {
        debug_assert_eq!(a.len(), k * m);
        debug_assert_eq!(b.len(), k * n);
        debug_assert_eq!(c.len(), m * n);
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, 1.0,
                a.as_ptr(), 1, m as isize,
                b.as_ptr(), n as isize, 1,
                0.0,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    fn gemm_nt(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]) {
        debug_assert_eq!(a.len(), m * k);
        debug_assert_eq!(b.len(), n * k);
        debug_assert_eq!(c.len(), m * n);
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, 1.0,
                a.as_ptr(), k as isize, 1,
                b.as_ptr(), 1, k as isize,
                1.0,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    #[inline]
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    #[inline]
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }

    fn with_tape<R>(f: impl FnOnce(&RefCell<TapeState<Self>>) -> R) -> R {
        thread_local! {
            static TAPE_F32: RefCell<TapeState<f32>> = RefCell::new(TapeState::new());
        }
        TAPE_F32.with(f)
    }
}

impl Element for f64 {
    const NAME: &'static str = "f64";
    const BYTE_WIDTH: usize = 8;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        debug_assert_eq!(a.len(), m * k);
        debug_assert_eq!(b.len(), k * n);
        debug_assert_eq!(c.len(), m * n);
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha,
                a.as_ptr(), k as isize, 1,
                b.as_ptr(), n as isize, 1,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    fn gemm_tn(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]) {
        debug_assert_eq!(a.len(), k * m);
        debug_assert_eq!(b.len(), k * n);
        debug_assert_eq!(c.len(), m * n);
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0,
                a.as_ptr(), 1, m as isize,
                b.as_ptr(), n as isize, 1,
                0.0,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    fn gemm_nt(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]) {
        debug_assert_eq!(a.len(), m * k);
        debug_assert_eq!(b.len(), n * k);
        debug_assert_eq!(c.len(), m * n);
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0,
                a.as_ptr(), k as isize, 1,
                b.as_ptr(), 1, k as isize,
                1.0,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }

    #[inline]
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    #[inline]
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes([
            bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
        ])
    }

    fn with_tape<R>(f: impl FnOnce(&RefCell<TapeState<Self>>) -> R) -> R {
        thread_local! {
            static TAPE_F64: RefCell<TapeState<f64>> = RefCell::new(TapeState::new());
        }
        TAPE_F64.with(f)
    }
}

/// Fast finiteness scan. `x * 0.0` is zero for finite x and NaN for NaN/inf,
/// so a folded sum of `x * 0` is zero iff every element is finite. Eight
/// accumulators keep the loop vectorizable without reassociation concerns.
pub fn all_finite<E: Element>(data: &[E]) -> bool {
    let zero = E::zero();
    let mut acc = [zero; 8];
    let chunks = data.chunks_exact(8);
    let rem = chunks.remainder();
    for ch in chunks {
        for i in 0..8 {
            acc[i] += ch[i] * zero;
        }
    }
    let mut total = zero;
    for a in acc {
        total += a;
    }
    for &x in rem {
        total += x * zero;
    }
    total == zero
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_2x2() {
        // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = [1.0f32, 2.0, 3.0, 4.0];
        let b = [5.0f32, 6.0, 7.0, 8.0];
        let mut c = [0.0f32; 4];
        f32::gemm(2, 2, 2, 1.0, &a, &b, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn gemm_f64_rectangular_matches_naive() {
        // Oracle: plain triple loop.
        let (m, k, n) = (3usize, 4usize, 5usize);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64) * 0.37 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64) * -0.11 + 0.5).collect();
        let mut want = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..k {
                    s += a[i * k + l] * b[l * n + j];
                }
                want[i * n + j] = s;
            }
        }
        let mut c = vec![0.0f64; m * n];
        f64::gemm(m, k, n, 1.0, &a, &b, 0.0, &mut c);
        for (got, want) in c.iter().zip(&want) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn finite_scan_flags_nan_and_inf() {
        let ok = [0.0f32, 1.5, -3.0, 1e30, -1e-30, 2.0, 3.0, 4.0, 5.0];
        assert!(all_finite(&ok));
        let mut bad = ok;
        bad[3] = f32::NAN;
        assert!(!all_finite(&bad));
        let mut inf = ok;
        inf[8] = f32::INFINITY;
        assert!(!all_finite(&inf));
        assert!(all_finite::<f64>(&[]));
    }
}
