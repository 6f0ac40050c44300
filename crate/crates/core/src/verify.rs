//! The acceptance suite: each criterion computes its measurement and
//! compares it with a target at a fixed tolerance.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::banach::{improved_tail_estimate, neumann_inverse, reduce_inhomogeneous, reduction_residual, synthetic_h, weighted_norm, WeightedNormParams};
use crate::decomp::{bootstrap_scan, decompose, ks_constant, model_green, nd_exponent, remainder_f, tune_critical_z, ModelSpec, PiFamily};
use crate::error::Result;
use crate::fitting::{a_d_constant, corrected_amplitude_fit, power_fit};
use crate::green::{axis_points, critical_so_green_decomposed, green_from_spectrum, series_green, GreenConfig, SeriesWalk, Tail};
use crate::kernel::{build_kernel, Kernel, Profile};
use crate::lattice::LatticeFunction;
use crate::spectral::{default_n, infrared_margin_kernel, norm_scaling_fit};

pub const CRITERIA: usize = 13;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Reduced grids and loosened tolerances.
    pub fast: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub measured: f64,
    pub target: String,
    pub tolerance: String,
    pub pass: bool,
    pub runtime_s: f64,
    pub runtime_limit_s: f64,
    pub fast: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<4} {:<28} measured={:<13.6e} target={} tol={} time={:.1}s/{:.0}s{} | {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.target,
            self.tolerance,
            self.runtime_s,
            self.runtime_limit_s,
            if self.fast { " [fast]" } else { "" },
            self.detail
        )
    }
}

struct Outcome {
    measured: f64,
    target: String,
    tolerance: String,
    pass: bool,
    detail: String,
}

fn name_and_limit(id: usize) -> (&'static str, f64) {
    match id {
        1 => ("nn-amplitude", 60.0),
        2 => ("spread-out-amplitude", 300.0),
        3 => ("delta-extraction", 300.0),
        4 => ("moment-cancellation", 10.0),
        5 => ("infrared-margins", 120.0),
        6 => ("norm-scaling", 120.0),
        7 => ("neumann-inversion", 30.0),
        8 => ("tail-improvement", 30.0),
        9 => ("reduction", 60.0),
        10 => ("remainder-decay", 600.0),
        11 => ("critical-amplitude", 600.0),
        12 => ("bootstrap-scan", 900.0),
        13 => ("nd-table", 1.0),
        _ => ("unknown", 0.0),
    }
}

/// Run one criterion; errors are reported as failures.
pub fn run_criterion(id: usize, cfg: &VerifyConfig) -> CriterionResult {
    let (name, limit) = name_and_limit(id);
    let start = Instant::now();
    let out = match id {
        1 => c01(cfg),
        2 => c02(cfg),
        3 => c03(cfg),
        4 => c04(cfg),
        5 => c05(cfg),
        6 => c06(cfg),
        7 => c07(cfg),
        8 => c08(cfg),
        9 => c09(cfg),
        10 => c10(cfg),
        11 => c11(cfg),
        12 => c12(cfg),
        13 => c13(cfg),
        _ => Err(crate::Error::InvalidParameter(format!("no criterion {id}"))),
    };
    let runtime = start.elapsed().as_secs_f64();
    let out = out.unwrap_or_else(|e| Outcome {
        measured: f64::NAN,
        target: "-".into(),
        tolerance: "-".into(),
        pass: false,
        detail: format!("error: {e}"),
    });
    let in_time = cfg.fast || runtime <= limit;
    let detail = if in_time { out.detail } else { format!("{}; runtime over limit", out.detail) };
    CriterionResult {
        id,
        name: name.into(),
        measured: out.measured,
        target: out.target,
        tolerance: out.tolerance,
        pass: out.pass && in_time,
        runtime_s: runtime,
        runtime_limit_s: limit,
        fast: cfg.fast,
        detail,
    }
}

pub fn run_all(cfg: &VerifyConfig) -> Vec<CriterionResult> {
    (1..=CRITERIA).map(|id| run_criterion(id, cfg)).collect()
}

fn radii(points: &[Vec<i64>]) -> Vec<f64> {
    points.iter().map(|x| x[0] as f64).collect()
}

fn uniform(d: usize, l: usize) -> Result<Kernel> {
    build_kernel(&Profile::uniform(d), l, d)
}

fn c01(cfg: &VerifyConfig) -> Result<Outcome> {
    let (ns, tol, n_max) = if cfg.fast { (vec![128, 256], 0.04, 500) } else { (vec![128, 256], 0.02, 2000) };
    let nn = Kernel::nearest_neighbour(3);
    let f = LatticeFunction::delta(3).sub(nn.values());
    let pts = axis_points(3, 10, 30);
    let r = radii(&pts);
    let g = green_from_spectrum(&f, &GreenConfig::for_dimension(3).with_ns(&ns), &pts)?;
    let fit = corrected_amplitude_fit(&r, &g.values, 1.0, 2.0)?;
    let target = 3.0 / (2.0 * PI);
    let dev = (fit.amplitude / target - 1.0).abs();
    let s = series_green(SeriesWalk::NearestNeighbour(3), 1.0, &pts, n_max, Tail::LocalClt)?;
    let mut agree = true;
    let mut worst: f64 = 0.0;
    for i in 0..pts.len() {
        let diff = (g.values[i] - s.values[i]).abs();
        agree &= diff <= g.estimated_error[i] + s.estimated_error[i];
        worst = worst.max(diff / s.values[i]);
    }
    Ok(Outcome {
        measured: fit.amplitude,
        target: format!("{target:.6}"),
        tolerance: format!("{tol}"),
        pass: dev <= tol && agree,
        detail: format!(
            "rel dev {dev:.2e}; series cross-check max rel diff {worst:.2e} {}",
            if agree { "within error bars" } else { "OUTSIDE error bars" }
        ),
    })
}

fn so_setup(cfg: &VerifyConfig) -> (Vec<usize>, Vec<usize>) {
    if cfg.fast {
        (vec![4], vec![32, 64])
    } else {
        (vec![4, 8], vec![64, 128])
    }
}

fn c02(cfg: &VerifyConfig) -> Result<Outcome> {
    let (ls, ns) = so_setup(cfg);
    let tol = if cfg.fast { 0.10 } else { 0.05 };
    let a5 = a_d_constant(5)?;
    let mut worst = (0.0f64, f64::NAN);
    let mut parts = vec![];
    for l in ls {
        let k = uniform(5, l)?;
        let pts = axis_points(5, 2 * l as i64, 6 * l as i64);
        let s = critical_so_green_decomposed(&k, &GreenConfig::for_dimension(5).with_ns(&ns), &pts)?;
        let v: Vec<f64> = s.s1.values.iter().map(|v| v * k.sigma2).collect();
        let fit = corrected_amplitude_fit(&radii(&pts), &v, 3.0, 2.0)?;
        let dev = (fit.amplitude / a5 - 1.0).abs();
        if dev >= worst.0 {
            worst = (dev, fit.amplitude);
        }
        parts.push(format!("L={l}: {:.6}", fit.amplitude));
    }
    Ok(Outcome {
        measured: worst.1,
        target: format!("{a5:.6}"),
        tolerance: format!("{tol}"),
        pass: worst.0 <= tol,
        detail: format!("{}; N={}", parts.join(", "), ns.last().unwrap()),
    })
}

fn c03(cfg: &VerifyConfig) -> Result<Outcome> {
    let (ls, ns5) = so_setup(cfg);
    let ns3 = if cfg.fast { vec![64, 128] } else { vec![128, 256] };
    let margin = if cfg.fast { 0.25 } else { 0.5 };
    let mut min_excess = f64::INFINITY;
    let mut measured = f64::NAN;
    let mut parts = vec![];
    for (d, ns) in [(3usize, &ns3), (5, &ns5)] {
        for &l in &ls {
            let k = uniform(d, l)?;
            let pts = axis_points(d, 2 * l as i64, 6 * l as i64);
            let s = critical_so_green_decomposed(&k, &GreenConfig::for_dimension(d).with_ns(ns), &pts)?;
            let abs: Vec<f64> = s.phi.values.iter().map(|v| v.abs()).collect();
            let fit = power_fit(&radii(&pts), &abs, None)?;
            let need = (d - 2) as f64 + margin;
            if fit.exponent - need < min_excess {
                min_excess = fit.exponent - need;
                measured = fit.exponent;
            }
            parts.push(format!("d={d} L={l}: {:.3} (need {need})", fit.exponent));
        }
    }
    Ok(Outcome {
        measured,
        target: format!(">= d-2+{margin}"),
        tolerance: "-".into(),
        pass: min_excess >= 0.0,
        detail: parts.join(", "),
    })
}

fn c04(cfg: &VerifyConfig) -> Result<Outcome> {
    let count = if cfg.fast { 5 } else { 20 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x04);
    let mut worst: f64 = 0.0;
    let mut mu_ok = true;
    for _ in 0..count {
        let d = if rng.gen_bool(0.5) { 3 } else { 5 };
        let l = rng.gen_range(1..=6);
        let pi = PiFamily::Synthetic {
            beta0: rng.gen_range(0.0..=0.05),
            beta1: rng.gen_range(0.0..=0.05),
            rho: rng.gen_range(0.5..3.0),
            tail_radius: rng.gen_range(1..=4),
        };
        let kernel = uniform(d, l)?;
        let (zc, _) = tune_critical_z(&kernel, &pi)?;
        let z = 1.0 + rng.gen::<f64>() * (zc - 1.0);
        let dec = decompose(&ModelSpec { kernel, z, pi, epsilon: 0.1 })?;
        worst = worst.max(dec.moment_residuals.0).max(dec.moment_residuals.1);
        mu_ok &= (0.5..=1.0 + 1e-12).contains(&dec.mu);
    }
    Ok(Outcome {
        measured: worst,
        target: "< 1e-10".into(),
        tolerance: "relative".into(),
        pass: worst < 1e-10 && mu_ok,
        detail: format!("{count} models; mu in [1/2, 1]: {mu_ok}"),
    })
}

fn c05(_cfg: &VerifyConfig) -> Result<Outcome> {
    let mut min_margin = f64::INFINITY;
    let mut worst_spread: f64 = 0.0;
    let mut parts = vec![];
    for d in [3usize, 5] {
        for mu in [0.5, 0.75, 1.0] {
            let mut ms = vec![];
            for l in [4usize, 8, 16] {
                let n = default_n(d).max(8 * l);
                ms.push(infrared_margin_kernel(&uniform(d, l)?, mu, n)?.margin);
            }
            let hi = ms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = ms.iter().cloned().fold(f64::INFINITY, f64::min);
            min_margin = min_margin.min(lo);
            worst_spread = worst_spread.max((hi - lo) / hi);
            parts.push(format!("d={d} mu={mu}: {lo:.4}..{hi:.4}"));
        }
    }
    Ok(Outcome {
        measured: min_margin,
        target: "> 0".into(),
        tolerance: "spread <= 0.2".into(),
        pass: min_margin > 0.0 && worst_spread <= 0.2,
        detail: format!("worst spread {worst_spread:.3}; {}", parts.join(", ")),
    })
}

fn c06(cfg: &VerifyConfig) -> Result<Outcome> {
    let (ls, n, tol) = if cfg.fast { (vec![4, 8, 16], 128, 0.25) } else { (vec![4, 8, 16, 32], 256, 0.15) };
    let p = Profile::uniform(3);
    let mut worst: f64 = 0.0;
    let mut parts = vec![];
    for (alpha, q) in [([0u32, 0, 0], 2.0), ([1, 0, 0], 2.0), ([2, 0, 0], 4.0)] {
        let r = norm_scaling_fit(&p, &alpha, q, &ls, n)?;
        let target = alpha.iter().sum::<u32>() as f64 - 3.0 / q;
        worst = worst.max((r.exponent - target).abs());
        parts.push(format!("alpha={alpha:?} q={q}: {:.4} vs {target:.4}", r.exponent));
    }
    Ok(Outcome {
        measured: worst,
        target: "|alpha| - d/q".into(),
        tolerance: format!("{tol}"),
        pass: worst <= tol,
        detail: parts.join(", "),
    })
}

fn c07(cfg: &VerifyConfig) -> Result<Outcome> {
    let count = if cfg.fast { 5 } else { 20 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x07);
    let params = WeightedNormParams::new(7.0)?;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_res: f64 = 0.0;
    let mut bound_ok = true;
    for _ in 0..count {
        let raw = LatticeFunction::from_orbits(3, 2, |_| rng.gen_range(-1.0..1.0));
        let c = rng.gen_range(0.05..=0.3);
        let f = raw.scale(c / weighted_norm(&raw, &params));
        let h = LatticeFunction::delta(3).sub(&f);
        let (hinv, cert) = neumann_inverse(&h, &params, 1e-12, 10_000, 8)?;
        worst_res = worst_res.max(cert.residual);
        worst_excess = worst_excess.max(cert.residual - (1e-8 + cert.truncation_loss));
        let dev = weighted_norm(&hinv.sub(&LatticeFunction::delta(3)), &params);
        bound_ok &= dev <= cert.contraction / (1.0 - cert.contraction);
    }
    Ok(Outcome {
        measured: worst_res,
        target: "< 1e-8 + loss".into(),
        tolerance: "-".into(),
        pass: worst_excess < 0.0 && bound_ok,
        detail: format!("{count} draws; Neumann bound holds: {bound_ok}"),
    })
}

fn c08(_cfg: &VerifyConfig) -> Result<Outcome> {
    let params = WeightedNormParams::new(0.25)?;
    let mut m = vec![];
    for b1 in [0.01, 0.005, 0.0025] {
        let t = improved_tail_estimate(&synthetic_h(0.2, b1, 4.0, 2, 3), &params, 60, 8)?;
        m.push(t.measured);
    }
    let r1 = m[0] / m[1];
    let r2 = m[1] / m[2];
    let worst = (r1 / 2.0 - 1.0).abs().max((r2 / 2.0 - 1.0).abs());
    Ok(Outcome {
        measured: worst,
        target: "ratio 2".into(),
        tolerance: "0.1".into(),
        pass: worst <= 0.1,
        detail: format!("ratios {r1:.4}, {r2:.4}; norms {:.4e} {:.4e} {:.4e}", m[0], m[1], m[2]),
    })
}

fn c09(_cfg: &VerifyConfig) -> Result<Outcome> {
    let params = WeightedNormParams::new(1.0)?;
    let h = synthetic_h(0.05, 0.01, 4.0, 1, 5);
    let k = uniform(5, 2)?;
    let red = reduce_inhomogeneous(&h, 0.9, &k, &params, 1e-13, 4)?;
    let res = reduction_residual(&red, &h, &k, 32)?;
    Ok(Outcome {
        measured: res,
        target: "< 1e-6".into(),
        tolerance: "-".into(),
        pass: res < 1e-6,
        detail: format!("contraction {:.3}, {} terms", red.certificate.contraction, red.certificate.terms_used),
    })
}

struct RemainderSetup {
    l: usize,
    ns: Vec<usize>,
    window: (i64, i64),
}

fn remainder_setup(cfg: &VerifyConfig) -> RemainderSetup {
    if cfg.fast {
        RemainderSetup { l: 4, ns: vec![32, 64], window: (4, 20) }
    } else {
        RemainderSetup { l: 8, ns: vec![64, 128], window: (8, 40) }
    }
}

const PI_TAIL_RADIUS: usize = 3;

fn critical_model(kernel: &Kernel, beta: f64) -> Result<ModelSpec> {
    let pi = PiFamily::beta(beta, 2.0, PI_TAIL_RADIUS);
    let (zc, _) = tune_critical_z(kernel, &pi)?;
    Ok(ModelSpec { kernel: kernel.clone(), z: zc, pi, epsilon: 0.1 })
}

fn c10(cfg: &VerifyConfig) -> Result<Outcome> {
    let s = remainder_setup(cfg);
    let (slack, ratio_tol) = if cfg.fast { (0.6, 0.3) } else { (0.3, 0.15) };
    let kernel = uniform(5, s.l)?;
    let pts = axis_points(5, s.window.0, s.window.1);
    let gc = GreenConfig::for_dimension(5).with_ns(&s.ns);
    let f1 = remainder_f(&critical_model(&kernel, 0.02)?, &gc, &pts)?;
    let f2 = remainder_f(&critical_model(&kernel, 0.01)?, &gc, &pts)?;
    let abs: Vec<f64> = f1.values.iter().map(|v| v.abs()).collect();
    let fit = power_fit(&radii(&pts), &abs, None)?;
    let nd = nd_exponent(2.0, 5)? as f64;
    // least-squares ratio f(beta) / f(beta/2) over the window
    let num: f64 = f1.values.iter().zip(&f2.values).map(|(a, b)| a * b).sum();
    let den: f64 = f2.values.iter().map(|b| b * b).sum();
    let ratio = num / den;
    let decay_ok = fit.exponent >= nd - slack;
    let linear_ok = (ratio / 2.0 - 1.0).abs() <= ratio_tol;
    Ok(Outcome {
        measured: fit.exponent,
        target: format!(">= {}", nd - slack),
        tolerance: format!("ratio 2 +- {ratio_tol}"),
        pass: decay_ok && linear_ok,
        detail: format!(
            "decay {}; beta ratio {ratio:.4} {}",
            if decay_ok { "ok" } else { "too slow" },
            if linear_ok { "ok" } else { "not linear" }
        ),
    })
}

fn c11(cfg: &VerifyConfig) -> Result<Outcome> {
    let s = remainder_setup(cfg);
    let tol = if cfg.fast { 0.14 } else { 0.07 };
    let kernel = uniform(5, s.l)?;
    let model = critical_model(&kernel, 0.02)?;
    let dec = decompose(&model)?;
    let l = s.l as i64;
    let pts = axis_points(5, 2 * l, 6 * l);
    let g = model_green(&model, &GreenConfig::for_dimension(5).with_ns(&s.ns), &pts)?;
    let fit = corrected_amplitude_fit(&radii(&pts), &g.values, 3.0, 2.0)?;
    let expected = dec.lambda * a_d_constant(5)? / kernel.sigma2;
    let dev = (fit.amplitude / expected - 1.0).abs();
    Ok(Outcome {
        measured: fit.amplitude,
        target: format!("{expected:.6e}"),
        tolerance: format!("{tol}"),
        pass: dev <= tol,
        detail: format!("rel dev {dev:.3e}; lambda={:.6}, mu={:.3e}, z_c={:.6}", dec.lambda, dec.mu, model.z),
    })
}

fn c12(cfg: &VerifyConfig) -> Result<Outcome> {
    let (l, ls, ns, nz) = if cfg.fast { (4, vec![4], vec![32, 64], 8) } else { (8, vec![4, 8], vec![64, 128], 20) };
    let gc = GreenConfig::for_dimension(5).with_ns(&ns);
    let ks = ks_constant(&Profile::uniform(5), 5, 0.1, &ls, 4, &gc)?;
    let kernel = uniform(5, l)?;
    let pi = PiFamily::beta(0.02, 2.0, PI_TAIL_RADIUS);
    let (zc, _) = tune_critical_z(&kernel, &pi)?;
    let zs: Vec<f64> = (0..nz).map(|i| 1.0 + (zc - 1.0) * i as f64 / (nz - 1) as f64).collect();
    let rep = bootstrap_scan(&kernel, &pi, 0.1, &zs, 4 * l, &gc, ks.ks)?;
    let b1 = rep.values[0].b;
    let bmax = rep.values.iter().map(|v| v.b).fold(f64::NEG_INFINITY, f64::max);
    Ok(Outcome {
        measured: bmax,
        target: "no b in (2,3]; b(1) <= 1".into(),
        tolerance: "-".into(),
        pass: rep.forbidden_violations.is_empty() && b1 <= 1.0,
        detail: format!("K_S={:.4}, b(1)={b1:.4}, max b={bmax:.4}, {} violations", ks.ks, rep.forbidden_violations.len()),
    })
}

fn c13(_cfg: &VerifyConfig) -> Result<Outcome> {
    let cases = [(5usize, 2.0, 4usize), (7, 1.0, 5), (9, 1.0, 7)];
    let mut ok = true;
    let mut parts = vec![];
    for (d, rho, want) in cases {
        let got = nd_exponent(rho, d)?;
        ok &= got == want;
        parts.push(format!("(d={d}, rho={rho}) -> {got}"));
    }
    Ok(Outcome {
        measured: if ok { 0.0 } else { 1.0 },
        target: "exact".into(),
        tolerance: "0".into(),
        pass: ok,
        detail: parts.join(", "),
    })
}
