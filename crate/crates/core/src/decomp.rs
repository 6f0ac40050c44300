//! Leading-order decomposition of F_z = delta - z D - Pi_z and the bootstrap function.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{critical_so_green_decomposed, green_decomposed_with, remainder_grid, GreenConfig, GreenResult};
use crate::kernel::{build_kernel, Kernel, Profile};
use crate::lattice::{euclid, LatticeFunction, MultisetIndex};
use crate::spectral::{freq, kernel_symmetric, transform_symmetric, SymmetricGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PiFamily {
    Zero,
    Synthetic { beta0: f64, beta1: f64, rho: f64, tail_radius: usize },
}

impl PiFamily {
    /// The family with beta0 = beta1 = beta.
    pub fn beta(beta: f64, rho: f64, tail_radius: usize) -> Self {
        PiFamily::Synthetic { beta0: beta, beta1: beta, rho, tail_radius }
    }

    pub fn function(&self, d: usize) -> Result<LatticeFunction> {
        match *self {
            PiFamily::Zero => Ok(LatticeFunction::zeros(d, 0, true)),
            PiFamily::Synthetic { beta0, beta1, rho, tail_radius } => synthetic_pi(beta0, beta1, rho, tail_radius, d),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kernel: Kernel,
    pub z: f64,
    pub pi: PiFamily,
    pub epsilon: f64,
}

/// Pi(x) = -beta0 delta_{0,x} - beta1 <<x>>^{-(d+2+rho)} on 0 < |x|_inf <= radius.
pub fn synthetic_pi(beta0: f64, beta1: f64, rho: f64, radius: usize, d: usize) -> Result<LatticeFunction> {
    if radius < 1 {
        return Err(Error::InvalidParameter("tail radius must be at least 1".into()));
    }
    if !(beta0 >= 0.0 && beta1 >= 0.0) {
        return Err(Error::InvalidParameter("beta0 and beta1 must be nonnegative".into()));
    }
    let p = d as f64 + 2.0 + rho;
    Ok(LatticeFunction::from_orbits(d, radius, |a| {
        if a.iter().all(|&c| c == 0) {
            -beta0
        } else {
            let r = a.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt().max(1.0);
            -beta1 * r.powf(-p)
        }
    }))
}

/// Measured (beta0, beta1) envelope constants of a Pi.
pub fn pi_envelope(pi: &LatticeFunction, rho: f64) -> (f64, f64) {
    let d = pi.d();
    let p = d as f64 + 2.0 + rho;
    let mut b1: f64 = 0.0;
    pi.for_each_orbit(|a, _, v| {
        if a.iter().any(|&c| c != 0) {
            let r = a.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt().max(1.0);
            b1 = b1.max(v.abs() * r.powf(p));
        }
    });
    (pi.get(&vec![0; d]).abs(), b1)
}

/// F = delta - z D - Pi, together with F-hat(0).
pub fn build_f(model: &ModelSpec) -> Result<(LatticeFunction, f64)> {
    let d = model.kernel.d;
    let pi = model.pi.function(d)?;
    let f = LatticeFunction::delta(d)
        .linear_combination(1.0, model.kernel.values(), -model.z)
        .sub(&pi);
    let f0 = f.sum();
    Ok((f, f0))
}

/// Check 1 <= z <= 1 - Pi-hat(0).
pub fn validate_model(model: &ModelSpec) -> Result<()> {
    let pi0 = model.pi.function(model.kernel.d)?.sum();
    let zc = 1.0 - pi0;
    if model.z < 1.0 || model.z > zc * (1.0 + 1e-12) {
        return Err(Error::InvalidModel(format!("z = {} outside [1, {zc}]", model.z)));
    }
    Ok(())
}

/// lambda = 1/(F-hat(0) - sigma^{-2} sum |x|^2 F), mu = 1 - lambda F-hat(0).
pub fn lambda_mu(f: &LatticeFunction, kernel: &Kernel) -> Result<(f64, f64)> {
    let f0 = f.sum();
    let den = f0 - f.second_moment() / kernel.sigma2;
    if !den.is_finite() || den.abs() < 1e-300 {
        return Err(Error::SingularSystem);
    }
    let lambda = 1.0 / den;
    Ok((lambda, 1.0 - lambda * f0))
}

/// Zeroth and second moments of E relative to the given scales; errors when either exceeds 1e-10.
///
/// The scales are the absolute moments of the terms E was assembled from.
pub fn check_moments(e: &LatticeFunction, za: f64, sa: f64) -> Result<(f64, f64)> {
    let (z, s) = (e.sum(), e.second_moment());
    let rz = if za > 0.0 { z.abs() / za } else { 0.0 };
    let rs = if sa > 0.0 { s.abs() / sa } else { 0.0 };
    if rz > 1e-10 || rs > 1e-10 {
        return Err(Error::MomentsNotCancelled { zeroth: rz, second: rs });
    }
    Ok((rz, rs))
}

/// E = (delta - mu A_kernel) - lambda F, with its relative moment residuals.
pub fn build_e(f: &LatticeFunction, a_kernel: &Kernel, lambda: f64, mu: f64) -> Result<(LatticeFunction, (f64, f64))> {
    let a = LatticeFunction::delta(f.d()).linear_combination(1.0, a_kernel.values(), -mu);
    let e = a.linear_combination(1.0, f, -lambda);
    let za = a.abs_sum() + lambda.abs() * f.abs_sum();
    let sa = a.abs_second_moment() + lambda.abs() * f.abs_second_moment();
    let res = check_moments(&e, za, sa)?;
    Ok((e, res))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Decomposition {
    pub lambda: f64,
    pub mu: f64,
    pub e: LatticeFunction,
    pub nd: Option<usize>,
    pub moment_residuals: (f64, f64),
    pub f_hat0: f64,
}

pub fn decompose(model: &ModelSpec) -> Result<Decomposition> {
    validate_model(model)?;
    let (f, f0) = build_f(model)?;
    let (lambda, mu) = lambda_mu(&f, &model.kernel)?;
    let (e, res) = build_e(&f, &model.kernel, lambda, mu)?;
    let nd = match model.pi {
        PiFamily::Synthetic { rho, .. } => nd_exponent(rho, model.kernel.d).ok(),
        PiFamily::Zero => None,
    };
    Ok(Decomposition { lambda, mu, e, nd, moment_residuals: res, f_hat0: f0 })
}

/// sup over k != 0 of |E-hat(k)| / |k|^{2 + s}, on grids N and 2N.
pub fn e_envelope(e: &LatticeFunction, s: f64, n: usize) -> Result<(f64, f64)> {
    let mut out = [0.0; 2];
    for (i, nn) in [n, 2 * n].into_iter().enumerate() {
        let g = transform_symmetric(e, nn)?;
        let mut sup: f64 = 0.0;
        g.for_each(|a, _, v| {
            if a.iter().any(|&m| m != 0) {
                let k2: f64 = a.iter().map(|&m| freq(m, nn).powi(2)).sum();
                sup = sup.max(v.abs() / k2.powf(1.0 + s / 2.0));
            }
        });
        out[i] = sup;
    }
    Ok((out[0], out[1]))
}

/// n_d = d - 2 if rho <= 1 + max((d-8)/2, 0), else d - 1.
pub fn nd_exponent(rho: f64, d: usize) -> Result<usize> {
    if d < 3 {
        return Err(Error::DimensionTooLow(d));
    }
    let floor = ((d as f64 - 8.0) / 2.0).max(0.0);
    if !(rho > floor) || !rho.is_finite() {
        return Err(Error::RhoOutOfRange(rho));
    }
    Ok(if rho <= 1.0 + floor { d - 2 } else { d - 1 })
}

/// F-hat on an N-grid as the transform of delta - Pi minus z D-hat.
pub fn model_fhat(model: &ModelSpec, n: usize) -> Result<SymmetricGrid> {
    let d = model.kernel.d;
    let rest = LatticeFunction::delta(d).sub(&model.pi.function(d)?);
    let a = transform_symmetric(&rest, n)?;
    let dh = kernel_symmetric(&model.kernel, n)?;
    Ok(a.zip_map(&dh, |av, dv| av - model.z * dv))
}

/// G_z of a model by the reference-subtracted evaluation.
pub fn model_green(model: &ModelSpec, config: &GreenConfig, points: &[Vec<i64>]) -> Result<GreenResult> {
    let (f, f0) = build_f(model)?;
    green_decomposed_with(model.kernel.d, f0, -f.second_moment(), config, points, |n| model_fhat(model, n))
}

/// f_z = G_z - lambda S_mu from the grid of E-hat / (A_mu-hat F-hat).
pub fn remainder_f(model: &ModelSpec, config: &GreenConfig, points: &[Vec<i64>]) -> Result<GreenResult> {
    config.validate()?;
    let dec = decompose(model)?;
    let (_, f0) = build_f(model)?;
    let (lambda, mu) = (dec.lambda, dec.mu);
    let critical = f0.abs() <= 1e-13;
    let (vals, errs) = remainder_grid(&config.ns, points, |n| {
        let fh = model_fhat(model, n)?;
        let dh = kernel_symmetric(&model.kernel, n)?;
        let mut out = fh.clone();
        let idx = fh.index();
        let mut a = idx.first();
        for (slot, (&fv, &dv)) in out.values.iter_mut().zip(fh.values.iter().zip(&dh.values)) {
            let at_zero = a.iter().all(|&m| m == 0);
            *slot = if at_zero {
                if critical {
                    f64::NAN
                } else {
                    0.0
                }
            } else {
                let am = 1.0 - mu * dv;
                (am - lambda * fv) / (am * fv)
            };
            idx.next(&mut a);
        }
        Ok(out)
    })?;
    Ok(GreenResult {
        points: points.to_vec(),
        values: vals,
        estimated_error: errs,
        method: format!("remainder(lambda={lambda:.12}, mu={mu:.12})"),
    })
}

/// z_c = 1 - Pi-hat(0) and the residual |F-hat_{z_c}(0)|.
pub fn tune_critical_z(kernel: &Kernel, pi: &PiFamily) -> Result<(f64, f64)> {
    let zc = 1.0 - pi.function(kernel.d)?.sum();
    let model = ModelSpec { kernel: kernel.clone(), z: zc, pi: pi.clone(), epsilon: 0.1 };
    let (_, f0) = build_f(&model)?;
    Ok((zc, f0.abs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Green,
    Linear,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BootstrapValue {
    pub b: f64,
    pub branch: Branch,
    pub green_term: f64,
    pub linear_term: f64,
    pub argsup: Vec<i64>,
}

/// b(z) = max{ sup_{x != 0} G(x) |x|^{d-2} / (K_S L^{-2+eps}), 3(z - 1) }.
pub fn bootstrap_b(g: &GreenResult, z: f64, l: usize, epsilon: f64, ks: f64) -> BootstrapValue {
    let d = g.d();
    let scale = ks * (l as f64).powf(-2.0 + epsilon);
    let mut best = (f64::NEG_INFINITY, vec![0; d]);
    for (x, v) in g.points.iter().zip(&g.values) {
        let r = euclid(x);
        if r == 0.0 {
            continue;
        }
        let t = v * r.powi(d as i32 - 2) / scale;
        if t > best.0 {
            best = (t, x.clone());
        }
    }
    let lin = 3.0 * (z - 1.0);
    let (b, branch) = if best.0 >= lin { (best.0, Branch::Green) } else { (lin, Branch::Linear) };
    BootstrapValue { b, branch, green_term: best.0, linear_term: lin, argsup: best.1 }
}

/// Orbit representatives of the box `|x|_inf <= radius`, origin excluded.
pub fn box_representatives(d: usize, radius: usize) -> Vec<Vec<i64>> {
    MultisetIndex::new(radius + 1, d)
        .all()
        .into_iter()
        .filter(|a| a.iter().any(|&c| c != 0))
        .map(|a| a.into_iter().map(|c| c as i64).collect())
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KsReport {
    pub ks: f64,
    pub epsilon: f64,
    /// (L, sup over the box for that L, arg-sup).
    pub per_l: Vec<(usize, f64, Vec<i64>)>,
}

/// K_S = max over L of sup_{x != 0, |x|_inf <= box_factor L} (S_1 - delta) L^{2-eps} |x|^{d-2}.
pub fn ks_constant(
    profile: &Profile,
    d: usize,
    epsilon: f64,
    ls: &[usize],
    box_factor: usize,
    config: &GreenConfig,
) -> Result<KsReport> {
    let mut per_l = Vec::with_capacity(ls.len());
    for &l in ls {
        let kernel = build_kernel(profile, l, d)?;
        let pts = box_representatives(d, box_factor * l);
        let s = critical_so_green_decomposed(&kernel, config, &pts)?;
        let mut best = (f64::NEG_INFINITY, vec![]);
        for (x, v) in pts.iter().zip(&s.s1.values) {
            let t = v * (l as f64).powf(2.0 - epsilon) * euclid(x).powi(d as i32 - 2);
            if t > best.0 {
                best = (t, x.clone());
            }
        }
        per_l.push((l, best.0, best.1));
    }
    let ks = per_l.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(KsReport { ks, epsilon, per_l })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub zs: Vec<f64>,
    pub values: Vec<BootstrapValue>,
    pub ks: f64,
    pub z_c: f64,
    /// (z, b) pairs with b in (2, 3].
    pub forbidden_violations: Vec<(f64, f64)>,
}

impl BootstrapReport {
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "z,b,branch,argmax_x")?;
        for (z, v) in self.zs.iter().zip(&self.values) {
            let x: Vec<String> = v.argsup.iter().map(|c| c.to_string()).collect();
            let br = match v.branch {
                Branch::Green => "green",
                Branch::Linear => "linear",
            };
            writeln!(w, "{z:.12},{:.12},{br},{}", v.b, x.join(" "))?;
        }
        Ok(())
    }
}

/// Bootstrap function over a grid of z for a fixed kernel and Pi family.
pub fn bootstrap_scan(
    kernel: &Kernel,
    pi: &PiFamily,
    epsilon: f64,
    zs: &[f64],
    box_radius: usize,
    config: &GreenConfig,
    ks: f64,
) -> Result<BootstrapReport> {
    let (zc, _) = tune_critical_z(kernel, pi)?;
    let pts = box_representatives(kernel.d, box_radius);
    let mut values = Vec::with_capacity(zs.len());
    let mut violations = Vec::new();
    for &z in zs {
        let model = ModelSpec { kernel: kernel.clone(), z, pi: pi.clone(), epsilon };
        validate_model(&model)?;
        let g = model_green(&model, config, &pts)?;
        let v = bootstrap_b(&g, z, kernel.l, epsilon, ks);
        if v.b > 2.0 && v.b <= 3.0 {
            violations.push((z, v.b));
        }
        values.push(v);
    }
    Ok(BootstrapReport { zs: zs.to_vec(), values, ks, z_c: zc, forbidden_violations: violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel, Profile};

    fn model(d: usize, l: usize, z: f64, pi: PiFamily) -> ModelSpec {
        ModelSpec { kernel: build_kernel(&Profile::uniform(d), l, d).unwrap(), z, pi, epsilon: 0.1 }
    }

    #[test]
    fn unperturbed_walk() {
        let m = model(3, 2, 1.0, PiFamily::Zero);
        let (f, f0) = build_f(&m).unwrap();
        assert!(f0.abs() < 1e-15);
        let (l, mu) = lambda_mu(&f, &m.kernel).unwrap();
        assert!((l - 1.0).abs() < 1e-14 && (mu - 1.0).abs() < 1e-14);
        let (e, _) = build_e(&f, &m.kernel, l, mu).unwrap();
        assert!(e.sup_abs() < 1e-15);
    }

    #[test]
    fn delta_perturbation() {
        let c = 0.1;
        for z in [1.0, 1.05] {
            let pi = PiFamily::Synthetic { beta0: c, beta1: 0.0, rho: 2.0, tail_radius: 1 };
            let m = model(3, 2, z, pi);
            let (f, f0) = build_f(&m).unwrap();
            assert!((f0 - (1.0 + c - z)).abs() < 1e-14);
            let (l, mu) = lambda_mu(&f, &m.kernel).unwrap();
            assert!((l - 1.0 / (1.0 + c)).abs() < 1e-14);
            assert!((mu - z / (1.0 + c)).abs() < 1e-14);
        }
    }

    #[test]
    fn synthetic_values() {
        let p = synthetic_pi(0.0, 0.01, 2.0, 3, 5).unwrap();
        assert!((p.get(&[1, 0, 0, 0, 0]) + 0.01).abs() < 1e-17);
        let (b0, b1) = pi_envelope(&synthetic_pi(0.02, 0.005, 2.0, 3, 5).unwrap(), 2.0);
        assert!((b0 - 0.02).abs() < 1e-17 && (b1 - 0.005).abs() < 1e-15);
    }

    #[test]
    fn critical_point() {
        let k = build_kernel(&Profile::uniform(5), 2, 5).unwrap();
        let (zc, _) = tune_critical_z(&k, &PiFamily::Zero).unwrap();
        assert_eq!(zc, 1.0);
        let pi = PiFamily::Synthetic { beta0: 0.05, beta1: 0.0, rho: 2.0, tail_radius: 1 };
        assert!((tune_critical_z(&k, &pi).unwrap().0 - 1.05).abs() < 1e-15);
        let pi = PiFamily::Synthetic { beta0: 0.02, beta1: 0.005, rho: 2.0, tail_radius: 3 };
        let (zc, res) = tune_critical_z(&k, &pi).unwrap();
        let direct = 1.0 - synthetic_pi(0.02, 0.005, 2.0, 3, 5).unwrap().sum();
        assert!((zc - direct).abs() < 1e-15 && res < 1e-14);
    }

    #[test]
    fn split_transform_matches_direct() {
        let m = model(5, 2, 1.05, PiFamily::beta(0.01, 2.0, 2));
        let (f, _) = build_f(&m).unwrap();
        let gc = GreenConfig::for_dimension(5).with_ns(&[8, 16]);
        let pts = box_representatives(5, 3);
        let a = model_green(&m, &gc, &pts).unwrap();
        let b = crate::green::green_decomposed(&f, &gc, &pts).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-13, "{x} vs {y}");
        }
    }

    #[test]
    fn nd_table() {
        assert_eq!(nd_exponent(2.0, 5).unwrap(), 4);
        assert_eq!(nd_exponent(1.0, 7).unwrap(), 5);
        assert_eq!(nd_exponent(1.0, 9).unwrap(), 7);
        assert_eq!(nd_exponent(0.5, 5).unwrap(), 3);
        assert!(matches!(nd_exponent(0.4, 9), Err(Error::RhoOutOfRange(_))));
    }

    #[test]
    fn bootstrap_linear_branch() {
        let g = GreenResult { points: vec![vec![1, 0, 0]], values: vec![0.0], estimated_error: vec![0.0], method: String::new() };
        let v = bootstrap_b(&g, 1.4, 4, 0.1, 1.0);
        assert!(v.b >= 1.2 - 1e-12 && v.branch == Branch::Linear);
    }

    #[test]
    fn z_outside_bounds_is_rejected() {
        let m = model(3, 2, 1.2, PiFamily::Zero);
        assert!(matches!(decompose(&m), Err(Error::InvalidModel(_))));
    }
}
