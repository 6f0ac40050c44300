//! Lattice Green functions: `G(x) = int e^{-ik.x} / F-hat(k) dk/(2pi)^d`.

mod decomposed;
pub mod heat;
mod series;

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{euclid, LatticeFunction};
use crate::quad::{corner_singular, gauss_legendre};
use crate::spectral::{default_n, transform_symmetric, SymmetricGrid};

pub use decomposed::{critical_so_green_decomposed, green_decomposed, green_decomposed_with, remainder_grid, SoDecomposition};
pub use series::{series_green, SeriesWalk, Tail};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroMode {
    /// Drop the k = 0 cell and add its integral under the quadratic model.
    ExcludeCellCorrection,
    /// Keep the k = 0 term as is; only valid when F-hat(0) > 0.
    SubcriticalPlain,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenConfig {
    pub ns: Vec<usize>,
    pub zero_mode: ZeroMode,
    pub extrapolate: bool,
    pub correction_tol: f64,
}

impl GreenConfig {
    pub fn for_dimension(d: usize) -> Self {
        let n = default_n(d);
        GreenConfig {
            ns: vec![n / 2, n],
            zero_mode: ZeroMode::ExcludeCellCorrection,
            extrapolate: true,
            correction_tol: 1e-8,
        }
    }

    pub fn with_ns(mut self, ns: &[usize]) -> Self {
        self.ns = ns.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() {
            return Err(Error::InvalidParameter("grid list is empty".into()));
        }
        if self.ns.iter().any(|&n| n < 4 || n % 2 != 0) || self.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("grid sizes must be increasing even integers >= 4".into()));
        }
        if !(self.correction_tol > 0.0) {
            return Err(Error::InvalidParameter("correction_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenResult {
    pub points: Vec<Vec<i64>>,
    pub values: Vec<f64>,
    pub estimated_error: Vec<f64>,
    pub method: String,
}

impl GreenResult {
    pub fn d(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn value_at(&self, x: &[i64]) -> Option<f64> {
        self.points.iter().position(|p| p == x).map(|i| self.values[i])
    }

    /// CSV with columns x1..xd, value, est_error, abs_x, scaled.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let d = self.d();
        let head: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},value,est_error,abs_x,scaled", head.join(","))?;
        for ((x, v), e) in self.points.iter().zip(&self.values).zip(&self.estimated_error) {
            let r = euclid(x);
            let coords: Vec<String> = x.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{},{:.17e},{:.6e},{:.17e},{:.17e}", coords.join(","), v, e, r, v * r.powi(d as i32 - 2))?;
        }
        Ok(())
    }

    /// Whitespace-separated `|x| value*|x|^{d-2} est_error` columns.
    pub fn write_dat(&self, w: &mut impl Write) -> std::io::Result<()> {
        let d = self.d();
        writeln!(w, "# abs_x scaled est_error_scaled")?;
        for ((x, v), e) in self.points.iter().zip(&self.values).zip(&self.estimated_error) {
            let r = euclid(x);
            let s = r.powi(d as i32 - 2);
            writeln!(w, "{:.10e} {:.10e} {:.3e}", r, v * s, e * s)?;
        }
        Ok(())
    }
}

/// Points `(t, 0, ..., 0)` for `t` in `lo..=hi`.
pub fn axis_points(d: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    (lo..=hi)
        .map(|t| {
            let mut x = vec![0; d];
            x[0] = t;
            x
        })
        .collect()
}

/// Integral of `prod_j cos(k_j x_j) / (a + c2 |k|^2) dk/(2pi)^d` over the
/// zero cell `[-pi/N, pi/N]^d`.
pub fn cell_correction(d: usize, n: usize, a: f64, c2: f64, x: &[i64], tol: f64) -> f64 {
    let half = PI / n as f64;
    let rule = gauss_legendre(6);
    let xs: Vec<f64> = x.iter().map(|&c| c as f64).collect();
    let xnorm = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let jd = unit_corner_integral(d);
    let norm = 2f64.powi(d as i32) / (2.0 * PI).powi(d as i32);
    let scale = if a > 0.0 { half.powi(d as i32) / (a + c2 * half * half) } else { jd * half.powi(d as i32 - 2) / c2 };
    let abs_tol = tol * scale / 64.0;
    let mut f = |k: &[f64]| {
        let k2: f64 = k.iter().map(|v| v * v).sum();
        let c: f64 = k.iter().zip(&xs).map(|(kj, xj)| (kj * xj).cos()).product();
        c / (a + c2 * k2)
    };
    let mut corner = |s: f64| {
        let flat = s * xnorm <= 1e-4;
        if a == 0.0 {
            return (flat || s < 1e-12 * half).then(|| jd * s.powi(d as i32 - 2) / c2);
        }
        let vol = s.powi(d as i32);
        if vol / a < 1e-3 * abs_tol || (flat && c2 * s * s * d as f64 <= 1e-4 * a) {
            return Some(vol / a * (1.0 - c2 * s * s * d as f64 / (3.0 * a)));
        }
        None
    };
    norm * corner_singular(&mut f, d, half, abs_tol, &mut corner, &rule)
}

/// `int_{[0,1]^d} |u|^{-2} du`, from the self-similarity of the integrand.
fn unit_corner_integral(d: usize) -> f64 {
    assert!(d > 2);
    let rule = gauss_legendre(8);
    let mut f = |k: &[f64]| 1.0 / k.iter().map(|v| v * v).sum::<f64>();
    let mut done = |s: f64| if s < 1.0 { Some(0.0) } else { None };
    let outer = corner_singular(&mut f, d, 1.0, 1e-13, &mut done, &rule);
    outer / (1.0 - 2f64.powi(2 - d as i32))
}

/// Richardson extrapolation across grid levels, one value per point.
///
/// With three or more levels the order is fitted from the last three on the
/// point with the strongest signal; otherwise `default_order` is used.
fn richardson(ns: &[usize], levels: &[Vec<f64>], default_order: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let k = levels.len();
    let last = &levels[k - 1];
    if k == 1 {
        return (last.clone(), vec![0.0; last.len()], f64::NAN);
    }
    let prev = &levels[k - 2];
    let r = ns[k - 1] as f64 / ns[k - 2] as f64;
    let mut order = default_order;
    if k >= 3 {
        let pp = &levels[k - 3];
        let r0 = ns[k - 2] as f64 / ns[k - 3] as f64;
        let mut best = 0;
        for i in 0..last.len() {
            if (prev[i] - pp[i]).abs() > (prev[best] - pp[best]).abs() {
                best = i;
            }
        }
        let (a, b) = (prev[best] - pp[best], last[best] - prev[best]);
        if a != 0.0 && b != 0.0 && a.signum() == b.signum() && (r - r0).abs() < 1e-12 {
            let p = (a / b).abs().ln() / r.ln();
            if (0.5..=12.0).contains(&p) {
                order = p;
            }
        }
    }
    if !order.is_finite() {
        let errs = last.iter().zip(prev).map(|(a, b)| (a - b).abs()).collect();
        return (last.clone(), errs, order);
    }
    let f = 1.0 / (r.powf(order) - 1.0);
    let vals = last.iter().zip(prev).map(|(a, b)| a + (a - b) * f).collect();
    let errs = last.iter().zip(prev).map(|(a, b)| ((a - b) * f).abs()).collect();
    (vals, errs, order)
}

pub(crate) fn symmetric_f(f: &LatticeFunction) -> Result<LatticeFunction> {
    f.to_symmetric(0.0)
}

/// Smallest value of a spectral function away from k = 0.
pub(crate) fn min_off_zero(g: &SymmetricGrid) -> (f64, Vec<usize>) {
    let mut best = (f64::INFINITY, vec![]);
    g.for_each(|a, _, v| {
        if a.iter().any(|&m| m != 0) && v < best.0 {
            best = (v, a.to_vec());
        }
    });
    best
}

/// Direct evaluation of the Fourier integral of 1/F-hat on torus grids.
pub fn green_from_spectrum(f: &LatticeFunction, config: &GreenConfig, points: &[Vec<i64>]) -> Result<GreenResult> {
    config.validate()?;
    let f = symmetric_f(f)?;
    let d = f.d();
    let f0 = f.sum();
    let s_f = -f.second_moment();
    let c2 = s_f / (2.0 * d as f64);
    let critical = f0.abs() <= 1e-13 * (1.0 + s_f.abs());
    if critical && d <= 2 {
        return Err(Error::DivergentIntegral(d));
    }
    if f0 < 0.0 && !critical {
        return Err(Error::NonpositiveSpectrum { min: f0, at: vec![0; d] });
    }
    let exclude = config.zero_mode == ZeroMode::ExcludeCellCorrection;
    if !exclude && critical {
        return Err(Error::NonpositiveSpectrum { min: f0, at: vec![0; d] });
    }
    if exclude && !(c2 > 0.0) {
        return Err(Error::InvalidParameter("F has no positive quadratic coefficient at k = 0".into()));
    }
    let a = if critical { 0.0 } else { f0 };
    let mut levels = Vec::with_capacity(config.ns.len());
    for &n in &config.ns {
        let fh = transform_symmetric(&f, n)?;
        let (min, at) = min_off_zero(&fh);
        if !(min > 0.0) {
            return Err(Error::NonpositiveSpectrum { min, at });
        }
        let g = fh.map_indexed(|m, v| {
            if m.iter().all(|&c| c == 0) {
                if exclude {
                    0.0
                } else {
                    1.0 / v
                }
            } else {
                1.0 / v
            }
        });
        let mut vals = g.inverse_at(points);
        if exclude {
            for (v, x) in vals.iter_mut().zip(points) {
                *v += cell_correction(d, n, a, c2, x, config.correction_tol);
            }
        }
        levels.push(vals);
    }
    let spectral_order = if exclude && critical { (d - 2) as f64 } else { f64::INFINITY };
    let (values, estimated_error, order) = if config.extrapolate {
        richardson(&config.ns, &levels, spectral_order)
    } else {
        richardson(&config.ns, &levels, f64::INFINITY)
    };
    let method = if config.extrapolate && order.is_finite() {
        format!("spectral-direct richardson(order={order:.3})")
    } else {
        "spectral-direct".to_string()
    };
    Ok(GreenResult { points: points.to_vec(), values, estimated_error, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;

    #[test]
    fn delta_inverts_to_delta() {
        let cfg = GreenConfig::for_dimension(3).with_ns(&[8, 16]);
        let cfg = GreenConfig { zero_mode: ZeroMode::SubcriticalPlain, ..cfg };
        let pts = vec![vec![0, 0, 0], vec![1, 0, 0], vec![2, 1, 0]];
        let r = green_from_spectrum(&LatticeFunction::delta(3), &cfg, &pts).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-14);
        assert!(r.values[1].abs() < 1e-14 && r.values[2].abs() < 1e-14);
    }

    #[test]
    fn corner_constant_d3() {
        // int_{[0,1]^3} |u|^-2 by brute force midpoint on a fine grid away from 0
        let j = unit_corner_integral(3);
        assert!(j > 1.0 && j < 2.0);
        let rule = gauss_legendre(10);
        let mut f = |k: &[f64]| 1.0 / k.iter().map(|v| v * v).sum::<f64>();
        let mut stop = |s: f64| if s < 1e-7 { Some(j * s) } else { None };
        let direct = corner_singular(&mut f, 3, 1.0, 1e-12, &mut stop, &rule);
        assert!((direct - j).abs() < 1e-10);
    }

    #[test]
    fn cell_correction_leading_quadratic_term() {
        // the cos factor lowers the cell integral by |x|^2/(2 d c2 N^d) to leading order
        let (d, n, c2) = (3usize, 64usize, 0.5);
        let i0 = cell_correction(d, n, 0.0, c2, &[0, 0, 0], 1e-10);
        let ix = cell_correction(d, n, 0.0, c2, &[2, 1, 0], 1e-10);
        let pred = 5.0 / (2.0 * d as f64 * c2 * (n as f64).powi(3));
        assert!(((i0 - ix) / pred - 1.0).abs() < 1e-2);
    }

    #[test]
    fn nearest_neighbour_return_value() {
        let nn = Kernel::nearest_neighbour(3);
        let f = LatticeFunction::delta(3).sub(nn.values());
        let cfg = GreenConfig::for_dimension(3).with_ns(&[64, 128, 256]);
        let r = green_from_spectrum(&f, &cfg, &[vec![0, 0, 0]]).unwrap();
        let (c, _) = heat::nn_green(3, 1.0, &[vec![0, 0, 0]]).unwrap();
        assert!((r.values[0] - c[0]).abs() < 1e-4, "{} vs {}", r.values[0], c[0]);
        assert!((r.values[0] - 1.5164).abs() < 1e-4);
    }
}
