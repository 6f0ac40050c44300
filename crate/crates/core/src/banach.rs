//! Weighted convolution algebra, Neumann inversion and reduction of
//! `H = h + z D * h * H` to an impulse equation `F * H = delta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::lattice::{euclid, LatticeFunction};
use crate::spectral::{kernel_symmetric, transform_symmetric};

pub use crate::lattice::convolve_truncated;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormParams {
    pub zeta: f64,
}

impl WeightedNormParams {
    pub fn new(zeta: f64) -> Result<Self> {
        if !(zeta > 0.0) || !zeta.is_finite() {
            return Err(Error::InvalidParameter(format!("zeta = {zeta} must be positive")));
        }
        Ok(WeightedNormParams { zeta })
    }

    fn mass_weight(&self) -> f64 {
        2f64.powf(self.zeta + 1.0)
    }
}

/// max{ 2^{zeta+1} sum |v|, sup |x|^zeta |v(x)| }.
pub fn weighted_norm(v: &LatticeFunction, params: &WeightedNormParams) -> f64 {
    (params.mass_weight() * v.abs_sum()).max(sup_weighted(v, params.zeta))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NeumannCertificate {
    /// ||h - delta||_zeta.
    pub contraction: f64,
    pub terms_used: usize,
    /// ||h * h^{-1} - delta||_zeta on the half-radius box.
    pub residual: f64,
    /// 2^{zeta+1} times the absolute mass dropped by truncation.
    pub truncation_loss: f64,
    pub truncation_radius: usize,
}

/// Default truncation radius: four times the support radius.
pub fn default_radius(h: &LatticeFunction) -> usize {
    4 * h.radius().max(1)
}

/// h^{-1} = sum_{n <= n*} (delta - h)^{*n}, truncated to the box of `radius`.
///
/// The contraction is measured in the weighted norm.
pub fn neumann_inverse(
    h: &LatticeFunction,
    params: &WeightedNormParams,
    tol: f64,
    max_terms: usize,
    radius: usize,
) -> Result<(LatticeFunction, NeumannCertificate)> {
    let f = LatticeFunction::delta(h.d()).sub(h);
    neumann_series(h, weighted_norm(&f, params), params, tol, max_terms, radius)
}

/// As [`neumann_inverse`], but certified by the plain l1 norm of `delta - h`.
///
/// This converges whenever `sum |delta - h| < 1`, without the weighted bound.
pub fn neumann_inverse_l1(
    h: &LatticeFunction,
    params: &WeightedNormParams,
    tol: f64,
    max_terms: usize,
    radius: usize,
) -> Result<(LatticeFunction, NeumannCertificate)> {
    let f = LatticeFunction::delta(h.d()).sub(h);
    neumann_series(h, f.abs_sum(), params, tol, max_terms, radius)
}

fn neumann_series(
    h: &LatticeFunction,
    c: f64,
    params: &WeightedNormParams,
    tol: f64,
    max_terms: usize,
    radius: usize,
) -> Result<(LatticeFunction, NeumannCertificate)> {
    let delta = LatticeFunction::delta(h.d());
    let f = delta.sub(h);
    if !(c < 1.0) {
        return Err(Error::ContractivityFailure { norm: c });
    }
    let mut n_star = 0;
    while c.powi(n_star as i32 + 1) / (1.0 - c) >= tol {
        n_star += 1;
        if n_star > max_terms {
            return Err(Error::MaxTermsExceeded(max_terms));
        }
    }
    let mut sum = delta.with_radius(radius);
    let mut power = delta.clone();
    let mut loss = 0.0;
    for _ in 0..n_star {
        let (next, l) = convolve_truncated(&power, &f, radius);
        loss += l;
        power = next;
        sum = sum.add(&power);
    }
    let (prod, _) = convolve_truncated(h, &sum, radius);
    let half = (radius / 2).min(prod.radius());
    let residual = weighted_norm(&prod.sub(&delta).with_radius(half), params);
    let cert = NeumannCertificate {
        contraction: c,
        terms_used: n_star + 1,
        residual,
        truncation_loss: params.mass_weight() * loss,
        truncation_radius: radius,
    };
    Ok((sum, cert))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReductionResult {
    pub phi: LatticeFunction,
    pub f: LatticeFunction,
    pub z: f64,
    /// |Phi(0)|.
    pub beta0_est: f64,
    /// sup_{x != 0} |Phi(x)| |x|^zeta.
    pub beta1_est: f64,
    pub certificate: NeumannCertificate,
}

/// Phi = delta - h^{-1} and F = delta - z D - Phi.
pub fn reduce_inhomogeneous(
    h: &LatticeFunction,
    z: f64,
    kernel: &Kernel,
    params: &WeightedNormParams,
    tol: f64,
    radius: usize,
) -> Result<ReductionResult> {
    let (hinv, cert) = neumann_inverse(h, params, tol, 10_000, radius)?;
    Ok(reduce_from_inverse(&hinv, cert, z, kernel, params))
}

/// The reduction from an already computed h^{-1}.
pub fn reduce_from_inverse(
    hinv: &LatticeFunction,
    cert: NeumannCertificate,
    z: f64,
    kernel: &Kernel,
    params: &WeightedNormParams,
) -> ReductionResult {
    let d = hinv.d();
    let delta = LatticeFunction::delta(d);
    let phi = delta.sub(hinv);
    let f = delta.linear_combination(1.0, kernel.values(), -z).sub(&phi);
    let beta0_est = phi.get(&vec![0; d]).abs();
    let beta1_est = sup_weighted(&phi, params.zeta);
    ReductionResult { phi, f, z, beta0_est, beta1_est, certificate: cert }
}

fn sup_weighted(v: &LatticeFunction, zeta: f64) -> f64 {
    let mut sup: f64 = 0.0;
    if v.is_symmetric() {
        v.for_each_orbit(|a, _, val| {
            let r2: f64 = a.iter().map(|&c| (c * c) as f64).sum();
            if r2 > 0.0 {
                sup = sup.max(r2.powf(zeta / 2.0) * val.abs());
            }
        });
    } else {
        v.for_each_site(|x, val| {
            let r = euclid(x);
            if r > 0.0 {
                sup = sup.max(r.powf(zeta) * val.abs());
            }
        });
    }
    sup
}

/// sup over the half box of |(F * H)(x) - delta_{0,x}| with H-hat = h-hat / (1 - z D-hat h-hat) on an N grid.
pub fn reduction_residual(red: &ReductionResult, h: &LatticeFunction, kernel: &Kernel, n: usize) -> Result<f64> {
    let hh = transform_symmetric(h, n)?;
    let dh = kernel_symmetric(kernel, n)?;
    let z = red.z;
    let mut min = f64::INFINITY;
    let mut at = vec![];
    let idx = hh.index();
    let mut a = idx.first();
    for (hv, dv) in hh.values.iter().zip(&dh.values) {
        let den = 1.0 - z * dv * hv;
        if den < min {
            min = den;
            at = a.clone();
        }
        idx.next(&mut a);
    }
    if !(min > 0.0) {
        return Err(Error::NonpositiveSpectrum { min, at });
    }
    let big_h = hh.zip_map(&dh, |hv, dv| hv / (1.0 - z * dv * hv));
    let half = red.f.radius() / 2;
    let need = red.f.radius() + half;
    if need > n / 2 {
        return Err(Error::InvalidParameter(format!("grid N = {n} too small for a box of radius {need}")));
    }
    let hx = big_h.inverse_box(need);
    let (prod, _) = convolve_truncated(&red.f, &hx, half);
    Ok(prod.sub(&LatticeFunction::delta(h.d())).sup_abs())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailEstimate {
    /// ||sum_{n <= n_max} g_n||_zeta.
    pub measured: f64,
    /// ||g_1||_zeta / (1 - ||f||_zeta)^2.
    pub bound: f64,
    /// Bound on the terms beyond n_max.
    pub remainder: f64,
    pub f_norm: f64,
    pub g1_norm: f64,
    pub terms: usize,
    pub truncation_loss: f64,
}

/// ||Phi - Phi(0) delta||_zeta through g_{n+1} = g_n * f + f^{*n}(0) g_1, with f = delta - h.
pub fn improved_tail_estimate(h: &LatticeFunction, params: &WeightedNormParams, n_max: usize, radius: usize) -> Result<TailEstimate> {
    let d = h.d();
    let origin = vec![0i64; d];
    let delta = LatticeFunction::delta(d);
    let f = delta.sub(h);
    let fc = weighted_norm(&f, params);
    if !(fc < 1.0) {
        return Err(Error::ContractivityFailure { norm: fc });
    }
    let g1 = f.sub(&delta.scale(f.get(&origin))).with_radius(radius);
    let g1n = weighted_norm(&g1, params);
    let mut g = g1.clone();
    let mut fpow = f.with_radius(radius);
    let mut total = g1.clone();
    let mut loss = 0.0;
    for _ in 1..n_max {
        let (gf, l1) = convolve_truncated(&g, &f, radius);
        let mut next = gf.linear_combination(1.0, &g1, fpow.get(&origin));
        if next.is_symmetric() {
            next.set_orbit(&vec![0; d], 0.0);
        } else {
            next.set(&origin, 0.0);
        }
        let (fp, l2) = convolve_truncated(&fpow, &f, radius);
        loss += l1 + l2;
        fpow = fp;
        g = next;
        total = total.add(&g);
    }
    let measured = weighted_norm(&total, params);
    let bound = g1n / (1.0 - fc).powi(2);
    let n = n_max as f64;
    // sum_{k > n} k c^{k-1} = c^n (n + 1 - n c) / (1 - c)^2
    let remainder = g1n * fc.powf(n) * (n + 1.0 - n * fc) / (1.0 - fc).powi(2);
    Ok(TailEstimate {
        measured,
        bound,
        remainder,
        f_norm: fc,
        g1_norm: g1n,
        terms: n_max,
        truncation_loss: params.mass_weight() * loss,
    })
}

/// tau = t(0), z = p tau, h = t / tau.
pub fn normalize_one_point(t: &LatticeFunction, p: f64) -> Result<(f64, LatticeFunction)> {
    let tau = t.get(&vec![0; t.d()]);
    if tau == 0.0 || !tau.is_finite() {
        return Err(Error::ZeroOnePoint);
    }
    Ok((p * tau, t.scale(1.0 / tau)))
}

/// h = (1 - beta0) delta + beta1 <<x>>^{-(d+theta)} on 0 < |x|_inf <= radius.
pub fn synthetic_h(beta0: f64, beta1: f64, theta: f64, radius: usize, d: usize) -> LatticeFunction {
    let p = d as f64 + theta;
    LatticeFunction::from_orbits(d, radius, |a| {
        if a.iter().all(|&c| c == 0) {
            1.0 - beta0
        } else {
            let r = a.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt().max(1.0);
            beta1 * r.powf(-p)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel, Profile};

    fn unit(d: usize, j: usize, s: i64) -> LatticeFunction {
        let mut v = LatticeFunction::zeros(d, 1, false);
        let mut x = vec![0; d];
        x[j] = s;
        v.set(&x, 1.0);
        v
    }

    #[test]
    fn norm_of_point_masses() {
        let p = WeightedNormParams::new(5.0).unwrap();
        assert_eq!(weighted_norm(&LatticeFunction::delta(3), &p), 64.0);
        assert_eq!(weighted_norm(&unit(3, 0, 1), &p), 64.0);
        let (sq, _) = convolve_truncated(&unit(3, 0, 1), &unit(3, 0, 1), 2);
        assert!(weighted_norm(&sq, &p) <= 64.0 * 64.0);
        let (back, _) = convolve_truncated(&unit(3, 0, 1), &unit(3, 0, -1), 2);
        assert!(back.sub(&LatticeFunction::delta(3)).sup_abs() < 1e-15);
    }

    #[test]
    fn scalar_inverse() {
        let p = WeightedNormParams::new(2.0).unwrap();
        let h = LatticeFunction::delta(3).scale(0.9);
        let (hinv, cert) = neumann_inverse(&h, &p, 1e-14, 1000, 4).unwrap();
        assert!((hinv.get(&[0, 0, 0]) - 1.0 / 0.9).abs() < 1e-13);
        assert!(cert.residual < 1e-12);
        let (hinv, cert) = neumann_inverse(&LatticeFunction::delta(3), &p, 1e-14, 10, 4).unwrap();
        assert_eq!(cert.terms_used, 1);
        assert!(hinv.sub(&LatticeFunction::delta(3)).sup_abs() == 0.0);
    }

    #[test]
    fn l1_certified_inverse() {
        let p = WeightedNormParams::new(7.0).unwrap();
        let h = LatticeFunction::delta(3).scale(0.9);
        assert!(matches!(neumann_inverse(&h, &p, 1e-14, 1000, 4), Err(Error::ContractivityFailure { .. })));
        let (hinv, cert) = neumann_inverse_l1(&h, &p, 1e-14, 1000, 4).unwrap();
        assert!((hinv.get(&[0, 0, 0]) - 1.0 / 0.9).abs() < 1e-13);
        assert!((cert.contraction - 0.1).abs() < 1e-15);
    }

    #[test]
    fn contractivity_and_term_limits() {
        let p = WeightedNormParams::new(2.0).unwrap();
        let h = LatticeFunction::delta(3).scale(0.5);
        assert!(matches!(neumann_inverse(&h, &p, 1e-12, 100, 4), Err(Error::ContractivityFailure { .. })));
        let h = LatticeFunction::delta(3).scale(0.88);
        assert!(matches!(neumann_inverse(&h, &p, 1e-14, 3, 4), Err(Error::MaxTermsExceeded(3))));
    }

    #[test]
    fn scalar_reduction() {
        let p = WeightedNormParams::new(2.0).unwrap();
        let k = build_kernel(&Profile::uniform(3), 1, 3).unwrap();
        let h = LatticeFunction::delta(3).scale(0.9);
        let red = reduce_inhomogeneous(&h, 1.0, &k, &p, 1e-14, 4).unwrap();
        assert!((red.phi.get(&[0, 0, 0]) + 1.0 / 9.0).abs() < 1e-13);
        let res = reduction_residual(&red, &h, &k, 16).unwrap();
        assert!(res < 1e-12, "{res}");
    }

    #[test]
    fn trivial_tail() {
        let p = WeightedNormParams::new(0.5).unwrap();
        let t = improved_tail_estimate(&LatticeFunction::delta(3).scale(0.8), &p, 20, 4).unwrap();
        assert_eq!(t.measured, 0.0);
    }

    #[test]
    fn one_point_normalization() {
        let (z, h) = normalize_one_point(&LatticeFunction::delta(3), 1.0).unwrap();
        assert_eq!(z, 1.0);
        assert_eq!(h.get(&[0, 0, 0]), 1.0);
        let (z, h) = normalize_one_point(&LatticeFunction::delta(3).scale(2.0), 0.5).unwrap();
        assert_eq!(z, 1.0);
        assert_eq!(h.get(&[0, 0, 0]), 1.0);
        let t = LatticeFunction::from_orbits(3, 1, |a| match a {
            [0, 0, 0] => 2.0,
            [0, 0, 1] => 0.1,
            _ => 0.0,
        });
        let (z, h) = normalize_one_point(&t, 1.0).unwrap();
        assert_eq!(z, 2.0);
        assert!((h.get(&[0, -1, 0]) - 0.05).abs() < 1e-17);
        assert!(matches!(normalize_one_point(&LatticeFunction::zeros(3, 1, true), 1.0), Err(Error::ZeroOnePoint)));
    }
}
