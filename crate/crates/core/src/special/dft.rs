//! Plain O(N^2) discrete Fourier transform.
//!
//! The transform sizes in this crate are boundary sample counts (tens to a
//! few hundred points), so the quadratic cost is irrelevant and the direct
//! sum is both simple and accurate. Twiddle angles are computed from the
//! integer product (k * n) mod N, so every angle lies in [0, 2 pi) and no
//! accuracy is lost to large-angle reduction.

use num_complex::Complex64;

/// Forward transform X_k = sum_n x_n e^{-2 pi i k n / N} (no normalization).
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    transform(x, -1.0, 1.0)
}

/// Inverse transform x_n = (1/N) sum_k X_k e^{+2 pi i k n / N}.
pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    let scale = if x.is_empty() { 1.0 } else { 1.0 / x.len() as f64 };
    transform(x, 1.0, scale)
}

fn transform(x: &[Complex64], sign: f64, scale: f64) -> Vec<Complex64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, value) in x.iter().enumerate() {
            let phase_index = (k * idx) % n;
            let angle = sign * 2.0 * std::f64::consts::PI * phase_index as f64 / n as f64;
            let (s, c) = angle.sin_cos();
            acc += value * Complex64::new(c, s);
        }
        out.push(acc * scale);
    }
    out
}
