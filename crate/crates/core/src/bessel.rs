//! Exponentially scaled modified Bessel functions of integer order.

use std::f64::consts::PI;

/// `e^{-s} I_n(s)` for `n = 0..=nmax`.
///
/// Backward recurrence normalized by `e^{-s}(I_0 + 2 sum_{n>0} I_n) = 1` for
/// moderate `s`; the large-argument expansion once `s` dominates `nmax^2`.
pub fn scaled_i(nmax: usize, s: f64) -> Vec<f64> {
    assert!(s >= 0.0);
    let mut out = vec![0.0; nmax + 1];
    if s == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let n2 = (nmax * nmax) as f64;
    if s >= 1e4_f64.max(40.0 * (n2 + 1.0)) {
        for (n, slot) in out.iter_mut().enumerate() {
            *slot = asymptotic(n, s);
        }
        return out;
    }
    let start = nmax + 30 + (80.0 * s.max(1.0)).sqrt().ceil() as usize;
    let (mut hi, mut cur) = (0.0f64, 1e-280f64);
    let mut norm = 0.0;
    for n in (1..=start).rev() {
        // cur = b_n, hi = b_{n+1}
        if n <= nmax {
            out[n] = cur;
        }
        norm += 2.0 * cur;
        let lo = hi + (2.0 * n as f64 / s) * cur;
        hi = cur;
        cur = lo;
        if cur.abs() > 1e250 {
            let r = 1e-250;
            cur *= r;
            hi *= r;
            norm *= r;
            for v in out.iter_mut() {
                *v *= r;
            }
        }
    }
    out[0] = cur;
    norm += cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

fn asymptotic(n: usize, s: f64) -> f64 {
    let mu = 4.0 * (n * n) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let t = -term * (mu - ((2 * k - 1) * (2 * k - 1)) as f64) / (k as f64 * 8.0 * s);
        if t.abs() > term.abs() {
            break;
        }
        term = t;
        sum += t;
        if t.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * s).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn by_integral(n: usize, s: f64) -> f64 {
        // (1/pi) int_0^pi e^{s(cos t - 1)} cos(n t) dt, trapezoid is spectrally accurate
        let m = 4000;
        let h = PI / m as f64;
        let mut acc = 0.0;
        for i in 0..=m {
            let t = i as f64 * h;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            acc += w * (s * (t.cos() - 1.0)).exp() * (n as f64 * t).cos();
        }
        acc * h / PI
    }

    #[test]
    fn recurrence_matches_integral_representation() {
        for &s in &[0.01, 0.7, 3.0, 25.0, 400.0, 3000.0] {
            let v = scaled_i(12, s);
            for n in 0..=12 {
                let r = by_integral(n, s);
                assert!((v[n] - r).abs() < 1e-13 + 1e-11 * r, "n={n} s={s}: {} vs {r}", v[n]);
            }
        }
    }

    #[test]
    fn branches_agree_at_the_switch() {
        let s = 1e4;
        let a = scaled_i(3, s * 0.999);
        for n in 0..=3 {
            let b = asymptotic(n, s * 0.999);
            assert!((a[n] - b).abs() < 1e-13 * b);
        }
    }
}
