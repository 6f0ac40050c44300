use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use spreadout::banach::{
    default_radius, improved_tail_estimate, neumann_inverse, neumann_inverse_l1, reduce_from_inverse, reduction_residual, synthetic_h,
    weighted_norm, WeightedNormParams,
};
use spreadout::decomp::{
    bootstrap_scan, decompose, e_envelope, ks_constant, remainder_f, tune_critical_z, validate_model, ModelSpec, PiFamily,
};
use spreadout::error::Error;
use spreadout::fitting::{a_d_constant, power_fit_points};
use spreadout::green::{green_decomposed, green_from_spectrum, series_green, GreenConfig, GreenResult, SeriesWalk, Tail};
use spreadout::kernel::{build_kernel, envelope_constant, support_size, write_cache, Kernel, Profile, ProfileKind, ProfileTable};
use spreadout::lattice::{euclid, LatticeFunction};
use spreadout::spectral::{default_n, kernel_symmetric};
use spreadout::verify::{run_criterion, CriterionResult, VerifyConfig, CRITERIA};

use crate::config::{parse_points, parse_zgrid, RunConfig};
use crate::output::RunDir;

/// Rejected input, reported with exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

macro_rules! usage {
    ($($t:tt)*) => { return Err(Usage(format!($($t)*)).into()) };
}

/// Outcome of a subcommand: where it wrote and whether every check passed.
pub struct Outcome {
    pub dir: std::path::PathBuf,
    pub ok: bool,
}

fn profile(cfg: &RunConfig, d: usize) -> Result<Profile> {
    let kind = ProfileKind::parse(cfg.profile.as_deref().unwrap_or("uniform"))?;
    Ok(match kind {
        ProfileKind::UniformBox => Profile::uniform(d),
        ProfileKind::ProductTent => Profile::tent(d),
        ProfileKind::UserTable => {
            let Some(path) = &cfg.table else { usage!("profile 'table' needs --table <file.json>") };
            let text = std::fs::read_to_string(path).with_context(|| format!("reading table {}", path.display()))?;
            let table: ProfileTable = serde_json::from_str(&text).map_err(|e| Usage(format!("bad table {}: {e}", path.display())))?;
            Profile::from_table(d, table)
        }
    })
}

fn first_l(cfg: &RunConfig) -> Result<usize> {
    match cfg.l.as_deref() {
        Some([l, ..]) => Ok(*l),
        _ => usage!("no L given"),
    }
}

/// Grid pair sized so the finest grid resolves both the kernel and the farthest point.
fn default_ns(d: usize, l: usize, xmax: usize) -> Vec<usize> {
    let n = default_n(d).max(8 * l).max((2 * xmax + 2).next_power_of_two());
    vec![n / 2, n]
}

fn xmax(points: &[Vec<i64>]) -> usize {
    points.iter().flatten().map(|c| c.unsigned_abs() as usize).max().unwrap_or(0)
}

fn green_config(d: usize, ns: &[usize]) -> Result<GreenConfig> {
    let gc = GreenConfig::for_dimension(d).with_ns(ns);
    gc.validate()?;
    Ok(gc)
}

fn write_lattice_csv(w: &mut impl Write, f: &LatticeFunction) -> std::io::Result<()> {
    let d = f.d();
    let cols: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    writeln!(w, "{},value", cols.join(","))?;
    let mut rows = Vec::new();
    f.for_each_orbit(|a, _, v| rows.push((a.to_vec(), v)));
    for (a, v) in rows {
        let x: Vec<String> = a.iter().map(|c| c.to_string()).collect();
        writeln!(w, "{},{v:.17e}", x.join(","))?;
    }
    Ok(())
}

fn write_green(dir: &mut RunDir, stem: &str, g: &GreenResult) -> Result<()> {
    dir.write_with(&format!("{stem}.csv"), |w| g.write_csv(w))?;
    dir.write_with(&format!("{stem}.dat"), |w| g.write_dat(w))?;
    Ok(())
}

pub fn kernel(cfg: &mut RunConfig, out: &Path) -> Result<Outcome> {
    let d = *cfg.d.get_or_insert(3);
    cfg.profile.get_or_insert_with(|| "uniform".into());
    let ls = cfg.l.get_or_insert_with(|| vec![8]).clone();
    let profile = profile(cfg, d)?;
    let kernels: Vec<Kernel> = ls.iter().map(|&l| build_kernel(&profile, l, d)).collect::<Result<_, _>>()?;

    #[derive(Serialize)]
    struct Row {
        l: usize,
        sigma2: f64,
        normalization: f64,
        support: f64,
        envelope_a2: f64,
        moments: Vec<(Vec<u32>, f64)>,
        dhat_min: f64,
        dhat_min_at: Vec<usize>,
        dhat_max: f64,
        grid: usize,
    }
    let mut rows = Vec::new();
    for k in &kernels {
        let mut alphas = vec![vec![0u32; d], unit(d, 2), unit(d, 4)];
        if d >= 2 {
            let mut a = unit(d, 2);
            a[1] = 2;
            alphas.push(a);
        }
        let n = default_n(d).max(4 * k.l);
        let g = kernel_symmetric(k, n)?;
        let (mut lo, mut hi, mut at) = (f64::INFINITY, f64::NEG_INFINITY, vec![]);
        g.for_each(|a, _, v| {
            if v < lo {
                lo = v;
                at = a.to_vec();
            }
            hi = hi.max(v);
        });
        rows.push(Row {
            l: k.l,
            sigma2: k.sigma2,
            normalization: k.total,
            support: support_size(k),
            envelope_a2: envelope_constant(k, 2.0)?,
            moments: alphas.iter().map(|a| (a.clone(), k.moment(a))).collect(),
            dhat_min: lo,
            dhat_min_at: at,
            dhat_max: hi,
            grid: n,
        });
    }

    let mut dir = RunDir::create(out, "kernel", cfg)?;
    dir.write_with("kernel.csv", |w| {
        writeln!(w, "L,sigma2,normalization,support,envelope_a2,dhat_min,dhat_max")?;
        for r in &rows {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{},{:.17e},{:.17e},{:.17e}",
                r.l, r.sigma2, r.normalization, r.support, r.envelope_a2, r.dhat_min, r.dhat_max
            )?;
        }
        Ok(())
    })?;
    dir.write_with("axis.dat", |w| {
        writeln!(w, "# L x D(x e1)")?;
        for k in &kernels {
            for x in 0..=k.l as i64 {
                let mut p = vec![0; d];
                p[0] = x;
                writeln!(w, "{} {x} {:.17e}", k.l, k.get(&p))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    if profile.kind != ProfileKind::UserTable {
        let cache = dir.path.join("cache");
        for k in &kernels {
            write_cache(k, profile.kind, &cache)?;
        }
    }
    dir.write_json("report.json", &json!({ "d": d, "profile": profile.kind.name(), "kernels": rows }))?;
    for r in &rows {
        println!("L={} sigma2={} normalization={} dhat_min={:.6}", r.l, r.sigma2, r.normalization, r.dhat_min);
    }
    Ok(Outcome { dir: dir.finish(cfg)?, ok: true })
}

fn unit(d: usize, p: u32) -> Vec<u32> {
    let mut a = vec![0; d];
    a[0] = p;
    a
}

pub fn green(cfg: &mut RunConfig, out: &Path) -> Result<Outcome> {
    let d = *cfg.d.get_or_insert(3);
    let nn = *cfg.nn.get_or_insert(false);
    let mu = *cfg.mu.get_or_insert(1.0);
    let method = cfg.method.get_or_insert_with(|| "decomposed".into()).clone();
    let pts = parse_points(cfg.points.get_or_insert_with(|| "axis:1..30".into()), d).map_err(|e| Usage(e.to_string()))?;
    if !(mu > 0.0 && mu <= 1.0) {
        usage!("mu = {mu} must lie in (0, 1]");
    }
    let kernel = if nn {
        cfg.l = None;
        cfg.profile = None;
        Kernel::nearest_neighbour(d)
    } else {
        cfg.profile.get_or_insert_with(|| "uniform".into());
        cfg.l.get_or_insert_with(|| vec![4]);
        build_kernel(&profile(cfg, d)?, first_l(cfg)?, d)?
    };
    let ns = cfg.ns.get_or_insert_with(|| default_ns(d, kernel.l, xmax(&pts))).clone();
    let f = LatticeFunction::delta(d).linear_combination(1.0, kernel.values(), -mu);
    let g = match method.as_str() {
        "decomposed" => green_decomposed(&f, &green_config(d, &ns)?, &pts)?,
        "spectrum" => green_from_spectrum(&f, &green_config(d, &ns)?, &pts)?,
        "series" => {
            let walk = if nn { SeriesWalk::NearestNeighbour(d) } else { SeriesWalk::Kernel(&kernel) };
            let tail = if mu == 1.0 { Tail::LocalClt } else { Tail::Geometric };
            series_green(walk, mu, &pts, 2000, tail)?
        }
        m => usage!("unknown method {m:?}; use decomposed, spectrum or series"),
    };
    let mut dir = RunDir::create(out, "green", cfg)?;
    write_green(&mut dir, "green", &g)?;
    let a_d = if d >= 3 { Some(a_d_constant(d)? / kernel.sigma2) } else { None };
    let last = g.points.iter().zip(&g.values).max_by(|a, b| euclid(a.0).total_cmp(&euclid(b.0)));
    let tail_scaled = last.map(|(x, v)| v * euclid(x).powi(d as i32 - 2));
    dir.write_json(
        "report.json",
        &json!({
            "method": g.method,
            "points": g.points.len(),
            "max_estimated_error": g.estimated_error.iter().cloned().fold(0.0, f64::max),
            "farthest_scaled": tail_scaled,
            "asymptotic_amplitude": a_d,
        }),
    )?;
    println!("{} values via {}", g.values.len(), g.method);
    if let (Some(t), Some(a)) = (tail_scaled, a_d) {
        println!("G |x|^(d-2) at farthest point {t:.6}, asymptotic {a:.6}");
    }
    Ok(Outcome { dir: dir.finish(cfg)?, ok: true })
}

fn pi_family(cfg: &mut RunConfig) -> PiFamily {
    let beta = cfg.beta;
    let b0 = *cfg.beta0.get_or_insert(beta.unwrap_or(0.02));
    let b1 = *cfg.beta1.get_or_insert(beta.unwrap_or(0.02));
    let rho = *cfg.rho.get_or_insert(2.0);
    let tail_radius = *cfg.tail_radius.get_or_insert(3);
    PiFamily::Synthetic { beta0: b0, beta1: b1, rho, tail_radius }
}

fn model_kernel(cfg: &mut RunConfig, d_default: usize, l_default: usize) -> Result<Kernel> {
    let d = *cfg.d.get_or_insert(d_default);
    cfg.profile.get_or_insert_with(|| "uniform".into());
    cfg.l.get_or_insert_with(|| vec![l_default]);
    Ok(build_kernel(&profile(cfg, d)?, first_l(cfg)?, d)?)
}

pub fn decomp(cfg: &mut RunConfig, out: &Path) -> Result<Outcome> {
    let kernel = model_kernel(cfg, 5, 8)?;
    let d = kernel.d;
    let pi = pi_family(cfg);
    let epsilon = *cfg.epsilon.get_or_insert(0.1);
    let (zc, _) = tune_critical_z(&kernel, &pi)?;
    let z = *cfg.z.get_or_insert(zc);
    let l = kernel.l as i64;
    let pts = parse_points(cfg.points.get_or_insert_with(|| format!("axis:{}..{}", l, 5 * l)), d).map_err(|e| Usage(e.to_string()))?;
    let ns = cfg.ns.get_or_insert_with(|| default_ns(d, kernel.l, xmax(&pts))).clone();
    let model = ModelSpec { kernel, z, pi, epsilon };
    validate_model(&model)?;
    let dec = decompose(&model)?;
    let rho = match model.pi {
        PiFamily::Synthetic { rho, .. } => rho,
        PiFamily::Zero => 2.0,
    };
    let env = e_envelope(&dec.e, rho.min(2.0), 32)?;
    let f = remainder_f(&model, &green_config(d, &ns)?, &pts)?;
    let fit = {
        let (x, v): (Vec<Vec<i64>>, Vec<f64>) =
            f.points.iter().zip(&f.values).filter(|(x, v)| euclid(x) > 0.0 && v.abs() > 0.0).map(|(x, v)| (x.clone(), v.abs())).unzip();
        power_fit_points(&x, &v, None).ok()
    };
    let mut dir = RunDir::create(out, "decomp", cfg)?;
    write_green(&mut dir, "remainder", &f)?;
    dir.write_with("e.csv", |w| write_lattice_csv(w, &dec.e))?;
    dir.write_json(
        "report.json",
        &json!({
            "z": z,
            "z_c": zc,
            "lambda": dec.lambda,
            "mu": dec.mu,
            "f_hat0": dec.f_hat0,
            "n_d": dec.nd,
            "moment_residuals": dec.moment_residuals,
            "e_envelope": env,
            "remainder_fit": fit,
        }),
    )?;
    println!("z={z} z_c={zc} lambda={:.12} mu={:.12} n_d={:?}", dec.lambda, dec.mu, dec.nd);
    if let Some(fit) = &fit {
        println!("remainder decay exponent {:.4}", fit.exponent);
    }
    Ok(Outcome { dir: dir.finish(cfg)?, ok: true })
}

pub fn deconv(cfg: &mut RunConfig, out: &Path) -> Result<Outcome> {
    let d = *cfg.d.get_or_insert(3);
    let b0 = *cfg.beta0.get_or_insert(cfg.beta.unwrap_or(0.1));
    let b1 = *cfg.beta1.get_or_insert(cfg.beta.unwrap_or(0.0));
    let theta = *cfg.theta.get_or_insert(4.0);
    let tail_radius = *cfg.tail_radius.get_or_insert(2);
    let zeta = *cfg.zeta.get_or_insert(7.0);
    let tol = *cfg.tol.get_or_insert(1e-12);
    let z = *cfg.z.get_or_insert(1.0);
    if !(0.0..1.0).contains(&b0) || b1 < 0.0 {
        usage!("need 0 <= beta0 < 1 and beta1 >= 0");
    }
    let h = synthetic_h(b0, b1, theta, tail_radius, d);
    let radius = *cfg.radius.get_or_insert(default_radius(&h));
    let params = WeightedNormParams::new(zeta)?;
    let (hinv, cert, fallback) = match neumann_inverse(&h, &params, tol, 10_000, radius) {
        Ok((hinv, cert)) => (hinv, cert, None),
        Err(Error::ContractivityFailure { norm }) => {
            let (hinv, cert) = neumann_inverse_l1(&h, &params, tol, 10_000, radius)?;
            (hinv, cert, Some(norm))
        }
        Err(e) => return Err(e.into()),
    };
    cfg.profile.get_or_insert_with(|| "uniform".into());
    cfg.l.get_or_insert_with(|| vec![2]);
    let kernel = build_kernel(&profile(cfg, d)?, first_l(cfg)?, d)?;
    let red = reduce_from_inverse(&hinv, cert, z, &kernel, &params);
    let n = (2 * (radius + radius / 2) + 2).next_power_of_two().max(16);
    let residual = reduction_residual(&red, &h, &kernel, n)?;
    let tail = if fallback.is_none() && b1 > 0.0 { Some(improved_tail_estimate(&h, &params, 60, radius)?) } else { None };
    let origin = vec![0; d];
    let phi0 = red.phi.get(&origin);

    let mut dir = RunDir::create(out, "deconv", cfg)?;
    dir.write_with("phi.csv", |w| write_lattice_csv(w, &red.phi))?;
    dir.write_with("hinv.csv", |w| write_lattice_csv(w, &hinv))?;
    dir.write_json(
        "report.json",
        &json!({
            "phi0": phi0,
            "phi_norm": weighted_norm(&red.phi, &params),
            "phi_tail_norm": weighted_norm(&red.phi.sub(&LatticeFunction::delta(d).scale(phi0)), &params),
            "beta0_est": red.beta0_est,
            "beta1_est": red.beta1_est,
            "certificate": red.certificate,
            "l1_fallback": fallback.is_some(),
            "zeta_contraction": fallback,
            "reduction_residual": residual,
            "reduction_grid": n,
            "tail_estimate": tail,
        }),
    )?;
    if let Some(c) = fallback {
        println!("zeta-norm contraction {c:.4} >= 1; used the l1-certified series");
    }
    println!("Phi(0) = {phi0:.15} ({} terms), reduction residual {residual:.3e}", red.certificate.terms_used);
    Ok(Outcome { dir: dir.finish(cfg)?, ok: true })
}

pub fn bootstrap(cfg: &mut RunConfig, out: &Path) -> Result<Outcome> {
    let kernel = model_kernel(cfg, 5, 8)?;
    let (d, l) = (kernel.d, kernel.l);
    let pi = pi_family(cfg);
    let epsilon = *cfg.epsilon.get_or_insert(0.1);
    let box_radius = *cfg.box_radius.get_or_insert(4 * l);
    let ks_l = cfg.ks_l.get_or_insert_with(|| if l >= 8 { vec![l / 2, l] } else { vec![l] }).clone();
    let ns = cfg.ns.get_or_insert_with(|| default_ns(d, l, box_radius)).clone();
    let (zc, _) = tune_critical_z(&kernel, &pi)?;
    let zs = parse_zgrid(cfg.zgrid.get_or_insert_with(|| "1:zc:20".into()), zc).map_err(|e| Usage(e.to_string()))?;
    if zs[0] < 1.0 || *zs.last().unwrap() > zc * (1.0 + 1e-12) {
        usage!("z grid must lie in [1, z_c = {zc}]");
    }
    let gc = green_config(d, &ns)?;
    let ks = ks_constant(&profile(cfg, d)?, d, epsilon, &ks_l, 4, &gc)?;
    let rep = bootstrap_scan(&kernel, &pi, epsilon, &zs, box_radius, &gc, ks.ks)?;
    let mut dir = RunDir::create(out, "bootstrap", cfg)?;
    dir.write_with("bootstrap.csv", |w| rep.write_csv(w))?;
    dir.write_with("bootstrap.dat", |w| {
        writeln!(w, "# z b")?;
        for (z, v) in rep.zs.iter().zip(&rep.values) {
            writeln!(w, "{z:.12} {:.12}", v.b)?;
        }
        Ok(())
    })?;
    dir.write_json("report.json", &json!({ "ks": ks, "scan": rep }))?;
    println!("K_S={:.6} z_c={zc:.12} b(1)={:.6} violations={}", ks.ks, rep.values[0].b, rep.forbidden_violations.len());
    Ok(Outcome { dir: dir.finish(cfg)?, ok: rep.forbidden_violations.is_empty() })
}

pub fn verify_all(cfg: &mut RunConfig, out: &Path) -> Result<Outcome> {
    let fast = *cfg.fast.get_or_insert(false);
    let seed = *cfg.seed.get_or_insert(0);
    let ids = cfg.only.get_or_insert_with(|| (1..=CRITERIA).collect()).clone();
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > CRITERIA) {
        bail!(Usage(format!("criterion {bad} does not exist (1..={CRITERIA})")));
    }
    let vc = VerifyConfig { fast, seed };
    let mut dir = RunDir::create(out, "verify-all", cfg)?;
    let mut results: Vec<CriterionResult> = Vec::new();
    for &id in &ids {
        let r = run_criterion(id, &vc);
        println!("{}", r.line());
        results.push(r);
    }
    dir.write_with("summary.csv", |w| {
        writeln!(w, "id,name,pass,measured,target,tolerance,fast")?;
        for r in &results {
            writeln!(w, "{},{},{},{:.6e},\"{}\",\"{}\",{}", r.id, r.name, r.pass, r.measured, r.target, r.tolerance, r.fast)?;
        }
        Ok(())
    })?;
    dir.write_json("report.json", &results)?;
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    Ok(Outcome { dir: dir.finish(cfg)?, ok: failed == 0 })
}
