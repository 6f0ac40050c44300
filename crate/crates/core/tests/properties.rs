use proptest::prelude::*;

use spreadout::banach::{convolve_truncated, neumann_inverse, weighted_norm, WeightedNormParams};
use spreadout::decomp::{build_e, build_f, lambda_mu, tune_critical_z, ModelSpec, PiFamily};
use spreadout::fitting::power_fit;
use spreadout::kernel::{build_kernel, Profile};
use spreadout::lattice::LatticeFunction;
use spreadout::spectral::transform_symmetric;

/// Dense function on the box of radius `r` in dimension `d` from a flat value list.
fn dense(d: usize, r: usize, vals: &[f64]) -> LatticeFunction {
    let mut i = 0;
    LatticeFunction::from_sites(d, r, |_| {
        let v = vals[i % vals.len()];
        i += 1;
        v
    })
}

fn sparse_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![3 => Just(0.0), 2 => -1.0..1.0f64], 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn convolution_commutes(d in 1usize..=3, a in sparse_values(), b in sparse_values()) {
        let u = dense(d, 1, &a);
        let v = dense(d, 2, &b);
        let (uv, l1) = convolve_truncated(&u, &v, 3);
        let (vu, l2) = convolve_truncated(&v, &u, 3);
        prop_assert!(uv.sub(&vu).sup_abs() <= 1e-14);
        prop_assert!(l1.abs() <= 1e-12 && l2.abs() <= 1e-12);
        let (ud, _) = convolve_truncated(&u, &LatticeFunction::delta(d), 1);
        prop_assert!(ud.sub(&u).sup_abs() == 0.0);
    }

    #[test]
    fn norm_is_submultiplicative(d in 1usize..=3, zeta in 0.5..8.0f64, a in sparse_values(), b in sparse_values()) {
        let p = WeightedNormParams::new(zeta).unwrap();
        let u = dense(d, 2, &a);
        let v = dense(d, 2, &b);
        let (uv, _) = convolve_truncated(&u, &v, 4);
        prop_assert!(weighted_norm(&uv, &p) <= weighted_norm(&u, &p) * weighted_norm(&v, &p) * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn neumann_bound_holds(d in 1usize..=3, zeta in 1.0..4.0f64, c in 0.05..0.6f64, a in sparse_values()) {
        let p = WeightedNormParams::new(zeta).unwrap();
        let g = LatticeFunction::from_orbits(d, 1, |o| a[o.iter().sum::<usize>() % a.len()]);
        let n = weighted_norm(&g, &p);
        prop_assume!(n > 0.0);
        let h = LatticeFunction::delta(d).sub(&g.scale(c / n));
        let (hinv, cert) = neumann_inverse(&h, &p, 1e-12, 10_000, 8).unwrap();
        let lhs = weighted_norm(&hinv.sub(&LatticeFunction::delta(d)), &p);
        prop_assert!(lhs <= cert.contraction / (1.0 - cert.contraction) * (1.0 + 1e-10));
        prop_assert!(cert.residual <= 1e-10 + cert.truncation_loss);
    }

    #[test]
    fn error_moments_cancel(d in 3usize..=5, l in 1usize..=4, beta in 0.0..0.05f64, t in 0.0..1.0f64, tent in any::<bool>()) {
        let profile = if tent { Profile::tent(d) } else { Profile::uniform(d) };
        let kernel = build_kernel(&profile, l, d).unwrap();
        let pi = PiFamily::beta(beta, 2.0, 2);
        let (zc, _) = tune_critical_z(&kernel, &pi).unwrap();
        let model = ModelSpec { kernel: kernel.clone(), z: 1.0 + t * (zc - 1.0), pi, epsilon: 0.1 };
        let (f, _) = build_f(&model).unwrap();
        let (lambda, mu) = lambda_mu(&f, &kernel).unwrap();
        let (e, (r0, r2)) = build_e(&f, &kernel, lambda, mu).unwrap();
        prop_assert!(r0 <= 1e-10 && r2 <= 1e-10);
        prop_assert!(e.sum().abs() <= 1e-12 * (1.0 + f.abs_sum()));
    }

    #[test]
    fn kernels_are_normalized(d in 1usize..=4, l in 1usize..=6) {
        let k = build_kernel(&Profile::uniform(d), l, d).unwrap();
        let lf = l as f64;
        prop_assert!((k.values().sum() - 1.0).abs() < 1e-13);
        prop_assert!((k.sigma2 - d as f64 * lf * (lf + 1.0) / 3.0).abs() < 1e-10 * k.sigma2);
        prop_assert!((k.values().second_moment() - k.sigma2).abs() < 1e-10 * k.sigma2);
    }

    #[test]
    fn symmetric_transform_round_trip(d in 1usize..=3, r in 1usize..=3, a in sparse_values()) {
        let f = LatticeFunction::from_orbits(d, r, |o| a[o.iter().map(|c| c * 7 + 1).sum::<usize>() % a.len()]);
        let g = transform_symmetric(&f, 2 * r + 2).unwrap();
        let back = g.inverse_box(r);
        prop_assert!(back.sub(&f).sup_abs() <= 1e-12 * (1.0 + f.sup_abs()));
    }

    #[test]
    fn power_fit_recovers_exact_laws(p in 0.5..6.0f64, amp in 1e-3..1e3f64, lo in 1.0..10.0f64) {
        let r: Vec<f64> = (0..8).map(|i| lo * 1.3f64.powi(i)).collect();
        let v: Vec<f64> = r.iter().map(|x| amp * x.powf(-p)).collect();
        let fit = power_fit(&r, &v, None).unwrap();
        prop_assert!((fit.exponent - p).abs() < 1e-9);
        prop_assert!((fit.amplitude / amp - 1.0).abs() < 1e-9);
    }
}
