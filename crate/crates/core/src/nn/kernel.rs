//! Dense-layer inner loops.
//!
//! Every dot product uses four interleaved accumulators combined as
//! `(a0 + a1) + (a2 + a3) + tail`, and every accumulation into an output
//! element runs over rows in index order, so a batch of `n` rows produces
//! exactly the bits of `n` single-row calls. On x86-64 an AVX2 version
//! using separate multiply and add instructions is selected at runtime;
//! it performs the same operations in the same order as the portable one.

/// Layer kernels written once against the helper set in scope.
macro_rules! kernels {
    ($(#[$feature:meta])?) => {
        /// `z[s][j] = b[j] + w[j] . a[s]` for `n` rows.
        $(#[$feature])?
        pub(super) fn affine(w: &[f64], b: &[f64], a: &[f64], n: usize, z: &mut [f64]) {
            let fan_out = b.len();
            let fan_in = w.len() / fan_out;
            let input = |s: usize| &a[s * fan_in..(s + 1) * fan_in];
            let row = |j: usize| &w[j * fan_in..(j + 1) * fan_in];
            if n >= 4 {
                for j in 0..fan_out {
                    let mut s = 0;
                    while s + 4 <= n {
                        let d = dot4([row(j); 4], [input(s), input(s + 1), input(s + 2), input(s + 3)]);
                        for q in 0..4 {
                            z[(s + q) * fan_out + j] = b[j] + d[q];
                        }
                        s += 4;
                    }
                    for s in s..n {
                        z[s * fan_out + j] = b[j] + dot(row(j), input(s));
                    }
                }
            } else {
                for s in 0..n {
                    let x = input(s);
                    let mut j = 0;
                    while j + 4 <= fan_out {
                        let d = dot4([row(j), row(j + 1), row(j + 2), row(j + 3)], [x; 4]);
                        for q in 0..4 {
                            z[s * fan_out + j + q] = b[j + q] + d[q];
                        }
                        j += 4;
                    }
                    for j in j..fan_out {
                        z[s * fan_out + j] = b[j] + dot(row(j), x);
                    }
                }
            }
        }

        /// `gw[j] += delta[s][j] * a[s]` and `gb[j] += delta[s][j]`, rows in
        /// order, skipping zero coefficients.
        $(#[$feature])?
        pub(super) fn outer_accumulate(gw: &mut [f64], gb: &mut [f64], delta: &[f64], a: &[f64], n: usize) {
            let fan_out = gb.len();
            let fan_in = gw.len() / fan_out;
            let input = |s: usize| &a[s * fan_in..(s + 1) * fan_in];
            let mut live: Vec<usize> = Vec::with_capacity(n);
            for (j, gbj) in gb.iter_mut().enumerate() {
                live.clear();
                for s in 0..n {
                    let dj = delta[s * fan_out + j];
                    if dj != 0.0 {
                        live.push(s);
                    }
                    *gbj += dj;
                }
                let grow = &mut gw[j * fan_in..(j + 1) * fan_in];
                let coef = |s: usize| delta[s * fan_out + j];
                let mut groups = live.chunks_exact(4);
                for g in &mut groups {
                    axpy4(
                        [coef(g[0]), coef(g[1]), coef(g[2]), coef(g[3])],
                        [input(g[0]), input(g[1]), input(g[2]), input(g[3])],
                        grow,
                    );
                }
                for &s in groups.remainder() {
                    axpy(coef(s), input(s), grow);
                }
            }
        }

        /// `prev[s] += delta[s][j] * w[j]` over output units `j` in order,
        /// skipping zero coefficients.
        $(#[$feature])?
        pub(super) fn back_project(w: &[f64], delta: &[f64], n: usize, fan_out: usize, prev: &mut [f64]) {
            let fan_in = w.len() / fan_out;
            let row = |j: usize| &w[j * fan_in..(j + 1) * fan_in];
            let mut live: Vec<usize> = Vec::with_capacity(fan_out);
            for s in 0..n {
                let ds = &delta[s * fan_out..(s + 1) * fan_out];
                live.clear();
                live.extend((0..fan_out).filter(|&j| ds[j] != 0.0));
                let target = &mut prev[s * fan_in..(s + 1) * fan_in];
                let mut groups = live.chunks_exact(4);
                for g in &mut groups {
                    axpy4(
                        [ds[g[0]], ds[g[1]], ds[g[2]], ds[g[3]]],
                        [row(g[0]), row(g[1]), row(g[2]), row(g[3])],
                        target,
                    );
                }
                for &j in groups.remainder() {
                    axpy(ds[j], row(j), target);
                }
            }
        }
    };
}

mod portable {
    #[inline(always)]
    pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
        let mut acc = [0.0f64; 4];
        let ca = a.chunks_exact(4);
        let cb = b.chunks_exact(4);
        let (ra, rb) = (ca.remainder(), cb.remainder());
        for (x, y) in ca.zip(cb) {
            acc[0] += x[0] * y[0];
            acc[1] += x[1] * y[1];
            acc[2] += x[2] * y[2];
            acc[3] += x[3] * y[3];
        }
        let mut tail = 0.0;
        for (x, y) in ra.iter().zip(rb) {
            tail += x * y;
        }
        (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
    }

    #[inline(always)]
    fn dot4(x: [&[f64]; 4], y: [&[f64]; 4]) -> [f64; 4] {
        [dot(x[0], y[0]), dot(x[1], y[1]), dot(x[2], y[2]), dot(x[3], y[3])]
    }

    #[inline(always)]
    fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += alpha * xi;
        }
    }

    /// Four [`axpy`] calls into the same `y`, applied in order.
    #[inline(always)]
    fn axpy4(alpha: [f64; 4], x: [&[f64]; 4], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut v = *yi;
            for q in 0..4 {
                v += alpha[q] * x[q][i];
            }
            *yi = v;
        }
    }

    kernels!();
}

#[cfg(target_arch = "x86_64")]
mod avx2 {
    use std::arch::x86_64::*;

    #[inline]
    #[target_feature(enable = "avx2")]
    fn finish(acc: __m256d, tail: f64) -> f64 {
        let mut a = [0.0; 4];
        // SAFETY: `a` holds four doubles.
        unsafe { _mm256_storeu_pd(a.as_mut_ptr(), acc) };
        (a[0] + a[1]) + (a[2] + a[3]) + tail
    }

    #[inline]
    #[target_feature(enable = "avx2")]
    fn dot(a: &[f64], b: &[f64]) -> f64 {
        let len = a.len().min(b.len());
        let whole = len - len % 4;
        let mut acc = _mm256_setzero_pd();
        let mut i = 0;
        while i < whole {
            // SAFETY: i + 4 <= whole <= len of both slices.
            let (x, y) = unsafe { (_mm256_loadu_pd(a.as_ptr().add(i)), _mm256_loadu_pd(b.as_ptr().add(i))) };
            acc = _mm256_add_pd(acc, _mm256_mul_pd(x, y));
            i += 4;
        }
        let mut tail = 0.0;
        for t in whole..len {
            tail += a[t] * b[t];
        }
        finish(acc, tail)
    }

    #[inline]
    #[target_feature(enable = "avx2")]
    fn dot4(x: [&[f64]; 4], y: [&[f64]; 4]) -> [f64; 4] {
        let len = (0..4).map(|q| x[q].len().min(y[q].len())).min().unwrap_or(0);
        let whole = len - len % 4;
        let mut acc = [_mm256_setzero_pd(); 4];
        let mut i = 0;
        while i < whole {
            for q in 0..4 {
                // SAFETY: i + 4 <= whole <= len of every slice.
                let (xv, yv) =
                    unsafe { (_mm256_loadu_pd(x[q].as_ptr().add(i)), _mm256_loadu_pd(y[q].as_ptr().add(i))) };
                acc[q] = _mm256_add_pd(acc[q], _mm256_mul_pd(xv, yv));
            }
            i += 4;
        }
        let mut out = [0.0; 4];
        for q in 0..4 {
            let mut tail = 0.0;
            for t in whole..len {
                tail += x[q][t] * y[q][t];
            }
            out[q] = finish(acc[q], tail);
        }
        out
    }

    #[inline]
    #[target_feature(enable = "avx2")]
    fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
        let len = x.len().min(y.len());
        let whole = len - len % 4;
        let a = _mm256_set1_pd(alpha);
        let mut i = 0;
        while i < whole {
            // SAFETY: i + 4 <= whole <= len of both slices.
            unsafe {
                let p = y.as_mut_ptr().add(i);
                let v = _mm256_add_pd(_mm256_loadu_pd(p), _mm256_mul_pd(a, _mm256_loadu_pd(x.as_ptr().add(i))));
                _mm256_storeu_pd(p, v);
            }
            i += 4;
        }
        for t in whole..len {
            y[t] += alpha * x[t];
        }
    }

    #[inline]
    #[target_feature(enable = "avx2")]
    fn axpy4(alpha: [f64; 4], x: [&[f64]; 4], y: &mut [f64]) {
        let len = (0..4).map(|q| x[q].len()).min().unwrap_or(0).min(y.len());
        let whole = len - len % 4;
        let a = alpha.map(|v| _mm256_set1_pd(v));
        let mut i = 0;
        while i < whole {
            // SAFETY: i + 4 <= whole <= len of every slice.
            unsafe {
                let p = y.as_mut_ptr().add(i);
                let mut v = _mm256_loadu_pd(p);
                for q in 0..4 {
                    v = _mm256_add_pd(v, _mm256_mul_pd(a[q], _mm256_loadu_pd(x[q].as_ptr().add(i))));
                }
                _mm256_storeu_pd(p, v);
            }
            i += 4;
        }
        for t in whole..len {
            let mut v = y[t];
            for q in 0..4 {
                v += alpha[q] * x[q][t];
            }
            y[t] = v;
        }
    }

    kernels!(#[target_feature(enable = "avx2")]);
}

macro_rules! dispatch {
    ($(fn $name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            #[inline]
            pub(crate) fn $name($($arg: $ty),*) {
                #[cfg(target_arch = "x86_64")]
                if std::arch::is_x86_feature_detected!("avx2") {
                    // SAFETY: the CPU supports AVX2, checked just above.
                    return unsafe { avx2::$name($($arg),*) };
                }
                portable::$name($($arg),*)
            }
        )*
    };
}

dispatch! {
    fn affine(w: &[f64], b: &[f64], a: &[f64], n: usize, z: &mut [f64]);
    fn outer_accumulate(gw: &mut [f64], gb: &mut [f64], delta: &[f64], a: &[f64], n: usize);
    fn back_project(w: &[f64], delta: &[f64], n: usize, fan_out: usize, prev: &mut [f64]);
}

#[cfg(test)]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    portable::dot(a, b)
}
