//! Dense row-major matrices and the few kernels the encoder needs.
//!
//! The model only ever multiplies a handful of rows (one window) against a
//! weight matrix, so the kernels stream each weight row once and keep the
//! activations in cache. Summation order is fixed, so results are bitwise
//! reproducible across runs and across the SIMD dispatch paths.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

pub trait Scalar:
    Float + Default + Debug + Send + Sync + 'static + AddAssign + SubAssign + MulAssign + Sum
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn dot(a: &[Self], b: &[Self]) -> Self;
    /// Four dot products against one shared `w`, each summed exactly as `dot`.
    fn dot4(x: [&[Self]; 4], w: &[Self]) -> [Self; 4];
    /// `y += alpha · x`
    fn axpy(alpha: Self, x: &[Self], y: &mut [Self]);
}

const LANES: usize = 16;

#[inline(always)]
fn dot_generic<S: Float>(a: &[S], b: &[S]) -> S {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [S::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for i in 0..width {
            acc[i] = acc[i] + acc[i + width];
        }
    }
    let mut sum = acc[0];
    for (x, y) in ra.iter().zip(rb) {
        sum = sum + *x * *y;
    }
    sum
}

// Same lane layout and reduction as `dot_generic`, so each result is
// bitwise equal to it; sharing the `w` loads is what makes it faster.
#[inline(always)]
fn lane_fma<S: Float>(acc: &mut [S; LANES], x: &[S], w: &[S; LANES]) {
    let x: &[S; LANES] = x.try_into().expect("chunk of LANES");
    for i in 0..LANES {
        acc[i] = acc[i] + x[i] * w[i];
    }
}

#[inline(always)]
fn reduce_lanes<S: Float>(mut acc: [S; LANES], x: &[S], w: &[S]) -> S {
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for i in 0..width {
            acc[i] = acc[i] + acc[i + width];
        }
    }
    let mut sum = acc[0];
    for (a, b) in x.iter().zip(w) {
        sum = sum + *a * *b;
    }
    sum
}

// Same lane layout and reduction as `dot_generic`, so each result is
// bitwise equal to it; sharing the `w` loads is what makes it faster.
#[inline(always)]
fn dot4_generic<S: Float>(x: [&[S]; 4], w: &[S]) -> [S; 4] {
    let n = w.len();
    let [x0, x1, x2, x3] = x.map(|r| &r[..n]);
    let full = n - n % LANES;
    let (mut a0, mut a1, mut a2, mut a3) = ([S::zero(); LANES], [S::zero(); LANES], [S::zero(); LANES], [S::zero(); LANES]);
    let chunks = w[..full]
        .chunks_exact(LANES)
        .zip(x0[..full].chunks_exact(LANES))
        .zip(x1[..full].chunks_exact(LANES))
        .zip(x2[..full].chunks_exact(LANES))
        .zip(x3[..full].chunks_exact(LANES));
    for ((((wc, c0), c1), c2), c3) in chunks {
        let wc: &[S; LANES] = wc.try_into().expect("chunk of LANES");
        lane_fma(&mut a0, c0, wc);
        lane_fma(&mut a1, c1, wc);
        lane_fma(&mut a2, c2, wc);
        lane_fma(&mut a3, c3, wc);
    }
    let tail = &w[full..];
    [
        reduce_lanes(a0, &x0[full..], tail),
        reduce_lanes(a1, &x1[full..], tail),
        reduce_lanes(a2, &x2[full..], tail),
        reduce_lanes(a3, &x3[full..], tail),
    ]
}

#[inline(always)]
fn axpy_generic<S: Float>(alpha: S, x: &[S], y: &mut [S]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}

#[cfg(target_arch = "x86_64")]
mod avx {
    use std::arch::x86_64::*;

    // `_mm256_loadu_ps` and `read_unaligned` go through a checked copy when
    // debug assertions are on, spilling every load; a raw deref does not.
    #[inline(always)]
    unsafe fn ld(p: *const f32) -> __m256 {
        std::mem::transmute::<[f32; 8], __m256>(*(p as *const [f32; 8]))
    }

    // A 16-lane accumulator held as two 8-lane halves, reduced in the same
    // tree order as `dot_generic`.
    #[inline(always)]
    unsafe fn reduce16(lo: __m256, hi: __m256, x: &[f32], w: &[f32]) -> f32 {
        let s8 = _mm256_add_ps(lo, hi);
        let s4 = _mm_add_ps(_mm256_castps256_ps128(s8), _mm256_extractf128_ps::<1>(s8));
        let s2 = _mm_add_ps(s4, _mm_movehl_ps(s4, s4));
        let s1 = _mm_add_ss(s2, _mm_shuffle_ps::<0b01>(s2, s2));
        let mut sum = _mm_cvtss_f32(s1);
        for (a, b) in x.iter().zip(w) {
            sum += *a * *b;
        }
        sum
    }

    #[target_feature(enable = "avx")]
    pub unsafe fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
        let n = a.len().min(b.len());
        let full = n - n % 16;
        let (pa, pb) = (a.as_ptr(), b.as_ptr());
        let (mut lo, mut hi) = (_mm256_setzero_ps(), _mm256_setzero_ps());
        let mut c = 0;
        while c < full {
            lo = _mm256_add_ps(lo, _mm256_mul_ps(ld(pa.add(c)), ld(pb.add(c))));
            hi = _mm256_add_ps(hi, _mm256_mul_ps(ld(pa.add(c + 8)), ld(pb.add(c + 8))));
            c += 16;
        }
        reduce16(lo, hi, &a[full..n], &b[full..n])
    }

    #[target_feature(enable = "avx")]
    pub unsafe fn dot4_f32(x: [&[f32]; 4], w: &[f32]) -> [f32; 4] {
        let n = w.len();
        assert!(x.iter().all(|r| r.len() >= n), "row shorter than w");
        let full = n - n % 16;
        let pw = w.as_ptr();
        let [p0, p1, p2, p3] = x.map(|r| r.as_ptr());
        // eight named accumulators so they stay in registers
        let (mut l0, mut h0, mut l1, mut h1) = (_mm256_setzero_ps(), _mm256_setzero_ps(), _mm256_setzero_ps(), _mm256_setzero_ps());
        let (mut l2, mut h2, mut l3, mut h3) = (_mm256_setzero_ps(), _mm256_setzero_ps(), _mm256_setzero_ps(), _mm256_setzero_ps());
        let mut c = 0;
        while c < full {
            let (wl, wh) = (ld(pw.add(c)), ld(pw.add(c + 8)));
            l0 = _mm256_add_ps(l0, _mm256_mul_ps(ld(p0.add(c)), wl));
            h0 = _mm256_add_ps(h0, _mm256_mul_ps(ld(p0.add(c + 8)), wh));
            l1 = _mm256_add_ps(l1, _mm256_mul_ps(ld(p1.add(c)), wl));
            h1 = _mm256_add_ps(h1, _mm256_mul_ps(ld(p1.add(c + 8)), wh));
            l2 = _mm256_add_ps(l2, _mm256_mul_ps(ld(p2.add(c)), wl));
            h2 = _mm256_add_ps(h2, _mm256_mul_ps(ld(p2.add(c + 8)), wh));
            l3 = _mm256_add_ps(l3, _mm256_mul_ps(ld(p3.add(c)), wl));
            h3 = _mm256_add_ps(h3, _mm256_mul_ps(ld(p3.add(c + 8)), wh));
            c += 16;
        }
        let tail = &w[full..];
        [
            reduce16(l0, h0, &x[0][full..n], tail),
            reduce16(l1, h1, &x[1][full..n], tail),
            reduce16(l2, h2, &x[2][full..n], tail),
            reduce16(l3, h3, &x[3][full..n], tail),
        ]
    }

    #[target_feature(enable = "avx")]
    pub unsafe fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
        super::dot_generic(a, b)
    }

    #[target_feature(enable = "avx")]
    pub unsafe fn dot4_f64(x: [&[f64]; 4], w: &[f64]) -> [f64; 4] {
        super::dot4_generic(x, w)
    }

    #[target_feature(enable = "avx")]
    pub unsafe fn axpy_f32(alpha: f32, x: &[f32], y: &mut [f32]) {
        super::axpy_generic(alpha, x, y)
    }

    #[target_feature(enable = "avx")]
    pub unsafe fn axpy_f64(alpha: f64, x: &[f64], y: &mut [f64]) {
        super::axpy_generic(alpha, x, y)
    }
}

#[cfg(target_arch = "x86_64")]
fn has_avx() -> bool {
    std::arch::is_x86_feature_detected!("avx")
}

macro_rules! impl_scalar {
    ($t:ty, $dot:ident, $dot4:ident, $axpy:ident) => {
        impl Scalar for $t {
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }

            fn dot(a: &[Self], b: &[Self]) -> Self {
                #[cfg(target_arch = "x86_64")]
                if has_avx() {
                    // SAFETY: the CPU supports AVX, checked above.
                    return unsafe { avx::$dot(a, b) };
                }
                dot_generic(a, b)
            }

            fn dot4(x: [&[Self]; 4], w: &[Self]) -> [Self; 4] {
                #[cfg(target_arch = "x86_64")]
                if has_avx() {
                    // SAFETY: the CPU supports AVX, checked above.
                    return unsafe { avx::$dot4(x, w) };
                }
                dot4_generic(x, w)
            }

            fn axpy(alpha: Self, x: &[Self], y: &mut [Self]) {
                #[cfg(target_arch = "x86_64")]
                if has_avx() {
                    // SAFETY: the CPU supports AVX, checked above.
                    return unsafe { avx::$axpy(alpha, x, y) };
                }
                axpy_generic(alpha, x, y)
            }
        }
    };
}

impl_scalar!(f32, dot_f32, dot4_f32, axpy_f32);
impl_scalar!(f64, dot_f64, dot4_f64, axpy_f64);

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Mat<S> {
        Mat {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Mat<S> {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn row_vector(data: Vec<S>) -> Mat<S> {
        Mat {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn identity(n: usize) -> Mat<S> {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Mat<S> {
        Mat::zeros(self.rows, self.cols)
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = S::zero());
    }

    pub fn add_assign(&mut self, other: &Mat<S>) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: S) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<T: Scalar>(&self) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| T::from_f64(v.as_f64())).collect(),
        }
    }

    /// Columns `[start, start + width)` as a new matrix.
    pub fn columns(&self, start: usize, width: usize) -> Mat<S> {
        let mut out = Mat::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }

    pub fn transpose(&self) -> Mat<S> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

const W_TILE: usize = 16;

/// `x · wᵀ (+ bias)` for `x: [m×k]`, `w: [n×k]`.
pub fn matmul_nt<S: Scalar>(x: &Mat<S>, w: &Mat<S>, bias: Option<&Mat<S>>) -> Mat<S> {
    assert_eq!(x.cols, w.cols, "inner dimension");
    let mut out = Mat::zeros(x.rows, w.rows);
    let blocked = x.rows - x.rows % 4;
    let bias_at = |o: usize| bias.map(|b| b.data[o]).unwrap_or_else(S::zero);
    // A tile of weight rows is reused from L2 by every 4-row block of `x`,
    // while the block itself stays in L1.
    for tile in (0..w.rows).step_by(W_TILE) {
        let tile = tile..(tile + W_TILE).min(w.rows);
        for r in (0..blocked).step_by(4) {
            let xs = [x.row(r), x.row(r + 1), x.row(r + 2), x.row(r + 3)];
            for o in tile.clone() {
                let d = S::dot4(xs, w.row(o));
                for (i, v) in d.into_iter().enumerate() {
                    out.data[(r + i) * w.rows + o] = v + bias_at(o);
                }
            }
        }
        for r in blocked..x.rows {
            for o in tile.clone() {
                out.data[r * w.rows + o] = S::dot(x.row(r), w.row(o)) + bias_at(o);
            }
        }
    }
    out
}

/// `acc += a · b` for `a: [m×n]`, `b: [n×k]`.
pub fn matmul_nn_acc<S: Scalar>(a: &Mat<S>, b: &Mat<S>, acc: &mut Mat<S>) {
    assert_eq!(a.cols, b.rows, "inner dimension");
    assert_eq!((acc.rows, acc.cols), (a.rows, b.cols), "output shape");
    for o in 0..b.rows {
        let br = b.row(o);
        for r in 0..a.rows {
            let alpha = a.data[r * a.cols + o];
            if alpha != S::zero() {
                S::axpy(alpha, br, acc.row_mut(r));
            }
        }
    }
}

/// `a · b` for `a: [m×n]`, `b: [n×k]`.
pub fn matmul_nn<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    let mut out = Mat::zeros(a.rows, b.cols);
    matmul_nn_acc(a, b, &mut out);
    out
}

/// `acc += aᵀ · b` for `a: [m×n]`, `b: [m×k]`, `acc: [n×k]`.
pub fn matmul_tn_acc<S: Scalar>(a: &Mat<S>, b: &Mat<S>, acc: &mut Mat<S>) {
    assert_eq!(a.rows, b.rows, "shared dimension");
    assert_eq!((acc.rows, acc.cols), (a.cols, b.cols), "output shape");
    for o in 0..a.cols {
        let dst = acc.row_mut(o);
        for r in 0..a.rows {
            let alpha = a.data[r * a.cols + o];
            if alpha != S::zero() {
                S::axpy(alpha, b.row(r), dst);
            }
        }
    }
}

/// Column sums accumulated into a `1×n` row vector.
pub fn col_sum_acc<S: Scalar>(a: &Mat<S>, acc: &mut Mat<S>) {
    for r in 0..a.rows {
        for (d, v) in acc.data.iter_mut().zip(a.row(r)) {
            *d += *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn dot_matches_naive() {
        for n in [0, 1, 15, 16, 17, 100] {
            let a: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
            assert!((f64::dot(&a, &b) - naive_dot(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn dispatch_paths_agree_bitwise() {
        let a: Vec<f32> = (0..203).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..203).map(|i| (i as f32 * 0.11).cos()).collect();
        assert_eq!(f32::dot(&a, &b).to_bits(), dot_generic(&a, &b).to_bits());
    }

    #[test]
    fn blocked_dots_equal_single_dots_bitwise() {
        for n in [0, 3, 16, 45, 203] {
            let rows: Vec<Vec<f32>> = (0..4).map(|r| (0..n).map(|i| ((i * 7 + r) as f32 * 0.13).sin()).collect()).collect();
            let w: Vec<f32> = (0..n).map(|i| (i as f32 * 0.29).cos()).collect();
            let x = [&rows[0][..], &rows[1][..], &rows[2][..], &rows[3][..]];
            for (r, v) in f32::dot4(x, &w).iter().enumerate() {
                assert_eq!(v.to_bits(), f32::dot(&rows[r], &w).to_bits());
            }
            assert_eq!(dot4_generic(x, &w).map(f32::to_bits), f32::dot4(x, &w).map(f32::to_bits));
        }
    }

    #[test]
    fn products_agree() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let w = Mat::from_vec(2, 3, vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5]);
        let y = matmul_nt(&a, &w, Some(&Mat::row_vector(vec![1.0, 0.0])));
        assert_eq!(y.data, vec![-1.0, 3.0, -1.0, 7.5]);
        let wt = w.transpose();
        assert_eq!(matmul_nn(&a, &wt).data, vec![-2.0, 3.0, -2.0, 7.5]);
        let mut acc = Mat::zeros(3, 3);
        matmul_tn_acc(&a, &a, &mut acc);
        assert_eq!(acc.data, matmul_nn(&a.transpose(), &a).data);
    }
}
