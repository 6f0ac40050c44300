//! Quadrature helpers.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Nodes and weights of a composite rule on [a, b].
pub fn mapped(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    rule.0.iter().zip(&rule.1).map(move |(&x, &w)| (c + h * x, h * w))
}

/// Tensor Gauss rule over the cube `[lo, lo + side]^d`.
pub fn cube_rule(f: &mut impl FnMut(&[f64]) -> f64, lo: &[f64], side: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let d = lo.len();
    let n = rule.0.len();
    let mut idx = vec![0usize; d];
    let mut k = vec![0.0; d];
    let mut acc = 0.0;
    let h = 0.5 * side;
    loop {
        let mut w = 1.0;
        for j in 0..d {
            k[j] = lo[j] + h * (1.0 + rule.0[idx[j]]);
            w *= h * rule.1[idx[j]];
        }
        acc += w * f(&k);
        let mut j = 0;
        loop {
            if j == d {
                return acc;
            }
            idx[j] += 1;
            if idx[j] < n {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Adaptive integral over a cube, refining by bisection in every axis.
pub fn adaptive_cube(
    f: &mut impl FnMut(&[f64]) -> f64,
    lo: &[f64],
    side: f64,
    tol: f64,
    depth: usize,
    rule: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let coarse = cube_rule(f, lo, side, rule);
    let fine = split_sum(f, lo, side, |f, sub, s| cube_rule(f, sub, s, rule));
    if (fine - coarse).abs() <= tol || depth == 0 {
        return fine;
    }
    let parts = 1usize << lo.len();
    split_sum(f, lo, side, |f, sub, s| adaptive_cube(f, sub, s, tol / parts as f64, depth - 1, rule))
}

fn split_sum<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    lo: &[f64],
    side: f64,
    mut each: impl FnMut(&mut F, &[f64], f64) -> f64,
) -> f64 {
    let d = lo.len();
    let h = 0.5 * side;
    let mut sub = vec![0.0; d];
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        for j in 0..d {
            sub[j] = lo[j] + if (corner >> j) & 1 == 1 { h } else { 0.0 };
        }
        acc += each(f, &sub, h);
    }
    acc
}

/// Integral over `[0, side]^d` of a function with an integrable point
/// singularity at the origin.
///
/// The cube is split into its `2^d` half-size subcubes; the ones away from the
/// origin are integrated adaptively and the corner subcube is handled by
/// recursion until `corner(side)` signals that its remaining contribution is
/// known in closed form.
pub fn corner_singular(
    f: &mut impl FnMut(&[f64]) -> f64,
    d: usize,
    side: f64,
    tol: f64,
    corner: &mut impl FnMut(f64) -> Option<f64>,
    rule: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let mut total = 0.0;
    let mut s = side;
    let mut sub = vec![0.0; d];
    for _ in 0..200 {
        if let Some(rest) = corner(s) {
            return total + rest;
        }
        let h = 0.5 * s;
        for c in 1..(1usize << d) {
            for j in 0..d {
                sub[j] = if (c >> j) & 1 == 1 { h } else { 0.0 };
            }
            total += adaptive_cube(f, &sub, h, tol, 6, rule);
        }
        s = h;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let r = gauss_legendre(8);
        let s: f64 = mapped(&r, 0.0, 2.0).map(|(x, w)| w * x.powi(15)).sum();
        assert!((s - 2f64.powi(16) / 16.0).abs() < 1e-10);
        assert!((r.1.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_corner_matches_scaling_identity() {
        // homogeneous degree -2 in d = 3: J(s) = s J(1)
        let rule = gauss_legendre(6);
        let mut f = |k: &[f64]| 1.0 / k.iter().map(|v| v * v).sum::<f64>();
        let mut stop = |s: f64| if s < 1e-9 { Some(0.0) } else { None };
        let j1 = corner_singular(&mut f, 3, 1.0, 1e-11, &mut stop, &rule);
        let jh = corner_singular(&mut f, 3, 0.5, 1e-11, &mut stop, &rule);
        assert!((jh - 0.5 * j1).abs() < 1e-8 * j1);
    }
}
