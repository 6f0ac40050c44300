//! Green functions split into a nearest-neighbour reference part and a
//! remainder whose Fourier transform is bounded at k = 0.
//!
//! For a symmetric F with `s = -sum |x|^2 F(x)` and `F-hat(0) = m`, put
//! `nu = s / (s + m)` and `c = 1 / (s + m)`. Then `c / A-hat_nu` with
//! `A = delta - nu D_nn` matches `1 / F-hat` to second order at k = 0, so
//! `G = c C_nu + R` where R-hat is bounded and plain grid sums converge fast.

use serde::{Deserialize, Serialize};

use crate::decomp::check_moments;
use crate::error::{Error, Result};
use crate::green::heat::nn_green;
use crate::green::{min_off_zero, symmetric_f, GreenConfig, GreenResult};
use crate::kernel::Kernel;
use crate::lattice::LatticeFunction;
use crate::spectral::{freq, kernel_symmetric, transform_symmetric, SymmetricGrid};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SoDecomposition {
    /// S_1 = delta + sigma^{-2} C_1 + phi.
    pub s1: GreenResult,
    pub c1: GreenResult,
    pub phi: GreenResult,
    pub sigma2: f64,
}

/// Replace the k = 0 value by the multiplicity-weighted mean over the first shell.
fn fill_zero_mode(g: &mut SymmetricGrid) {
    let mut acc = 0.0;
    let mut w = 0.0;
    g.for_each(|a, mult, v| {
        if a[a.len() - 1] == 1 {
            acc += mult * v;
            w += mult;
        }
    });
    g.values[0] = acc / w;
}

/// Inverse transform of a bounded spectral function on the two finest grids.
///
/// `build(n)` returns the grid values with the zero mode left unset; the
/// finest grid gives the value and the grid-doubling difference the error.
pub fn remainder_grid(
    ns: &[usize],
    points: &[Vec<i64>],
    mut build: impl FnMut(usize) -> Result<SymmetricGrid>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let fine = *ns.last().unwrap();
    let coarse = if ns.len() >= 2 { ns[ns.len() - 2] } else { fine / 2 };
    let mut out = Vec::with_capacity(2);
    for n in [coarse, fine] {
        let mut g = build(n)?;
        if !g.values[0].is_finite() {
            fill_zero_mode(&mut g);
        }
        out.push(g.inverse_at(points));
    }
    let errs = out[1].iter().zip(&out[0]).map(|(a, b)| (a - b).abs()).collect();
    Ok((out.pop().unwrap(), errs))
}

fn nn_symbol(d: usize, n: usize) -> Vec<f64> {
    (0..=n / 2).map(|m| freq(m, n).cos() / d as f64).collect()
}

/// Reference-subtracted evaluation of `int e^{-ik.x} / F-hat(k)`.
pub fn green_decomposed(f: &LatticeFunction, config: &GreenConfig, points: &[Vec<i64>]) -> Result<GreenResult> {
    config.validate()?;
    let f = symmetric_f(f)?;
    green_decomposed_with(f.d(), f.sum(), -f.second_moment(), config, points, |n| transform_symmetric(&f, n))
}

/// As [`green_decomposed`], with F-hat supplied per grid size.
///
/// `m = F-hat(0)` and `s = -sum |x|^2 F(x)` must describe the same F.
pub fn green_decomposed_with(
    d: usize,
    m: f64,
    s: f64,
    config: &GreenConfig,
    points: &[Vec<i64>],
    mut fhat: impl FnMut(usize) -> Result<SymmetricGrid>,
) -> Result<GreenResult> {
    config.validate()?;
    if !(s > 0.0) {
        return Err(Error::InvalidParameter("F needs a negative second moment".into()));
    }
    let critical = m.abs() <= 1e-13 * s;
    if m < 0.0 && !critical {
        return Err(Error::NonpositiveSpectrum { min: m, at: vec![0; d] });
    }
    if critical && d <= 2 {
        return Err(Error::DivergentIntegral(d));
    }
    let m = if critical { 0.0 } else { m };
    let nu = s / (s + m);
    let c = 1.0 / (s + m);
    let (r, r_err) = remainder_grid(&config.ns, points, |n| {
        let fh = fhat(n)?;
        let (min, at) = min_off_zero(&fh);
        if !(min > 0.0) {
            return Err(Error::NonpositiveSpectrum { min, at });
        }
        let cs = nn_symbol(d, n);
        Ok(fh.map_indexed(|a, v| {
            if a.iter().all(|&q| q == 0) {
                return if critical { f64::NAN } else { 0.0 };
            }
            let ah = 1.0 - nu * a.iter().map(|&q| cs[q]).sum::<f64>();
            1.0 / v - c / ah
        }))
    })?;
    let (cv, cv_err) = nn_green(d, nu, points)?;
    let values = r.iter().zip(&cv).map(|(r, cv)| c * cv + r).collect();
    let estimated_error = r_err.iter().zip(&cv_err).map(|(a, b)| a + c * b).collect();
    Ok(GreenResult {
        points: points.to_vec(),
        values,
        estimated_error,
        method: format!("decomposed(nu={nu:.12}, N={})", config.ns.last().unwrap()),
    })
}

/// S_1 for a spread-out kernel as delta + sigma^{-2} C_1 + phi.
pub fn critical_so_green_decomposed(kernel: &Kernel, config: &GreenConfig, points: &[Vec<i64>]) -> Result<SoDecomposition> {
    config.validate()?;
    let d = kernel.d;
    if d <= 2 {
        return Err(Error::DivergentIntegral(d));
    }
    let s2 = kernel.sigma2;
    let delta = LatticeFunction::delta(d);
    let a = delta.sub(Kernel::nearest_neighbour(d).values());
    let f = delta.sub(kernel.values());
    check_moments(
        &a.linear_combination(1.0, &f, -1.0 / s2),
        a.abs_sum() + f.abs_sum() / s2,
        a.abs_second_moment() + f.abs_second_moment() / s2,
    )?;
    let (phi, phi_err) = remainder_grid(&config.ns, points, |n| {
        let dh = kernel_symmetric(kernel, n)?;
        let cs = nn_symbol(d, n);
        Ok(dh.map_indexed(|m, dv| {
            if m.iter().all(|&q| q == 0) {
                return f64::NAN;
            }
            let ah = 1.0 - m.iter().map(|&q| cs[q]).sum::<f64>();
            let fh = 1.0 - dv;
            let eh = ah - fh / s2;
            dv * eh / (ah * fh) - fh / (s2 * ah)
        }))
    })?;
    let (c1, c1_err) = nn_green(d, 1.0, points)?;
    let s1: Vec<f64> = points
        .iter()
        .zip(c1.iter().zip(&phi))
        .map(|(x, (c, p))| if x.iter().all(|&q| q == 0) { 1.0 } else { 0.0 } + c / s2 + p)
        .collect();
    let s1_err = phi_err.iter().zip(&c1_err).map(|(p, c)| p + c / s2).collect();
    let tag = format!("decomposed(N={})", config.ns.last().unwrap());
    Ok(SoDecomposition {
        s1: GreenResult { points: points.to_vec(), values: s1, estimated_error: s1_err, method: tag.clone() },
        c1: GreenResult { points: points.to_vec(), values: c1, estimated_error: c1_err, method: "heat-kernel".into() },
        phi: GreenResult { points: points.to_vec(), values: phi, estimated_error: phi_err, method: tag },
        sigma2: s2,
    })
}
