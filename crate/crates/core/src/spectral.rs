//! Fourier transforms of finitely supported lattice functions on torus grids.
//!
//! Two representations are provided. [`TorusGrid`] holds complex values on
//! the full `N^d` grid. [`SymmetricGrid`] holds one real value per orbit of
//! the half grid `m in 0..=N/2`, which is all that a hypercubic-symmetric
//! function needs and is what the Green evaluators work with.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting;
use crate::kernel::{axis_symbol, build_kernel, Kernel, Profile};
use crate::lattice::{canonical, LatticeFunction, MultisetIndex, Neumaier, Storage, MAX_D};
use crate::symtensor::{contract, Demand};

/// Default points per axis for dimension `d`.
pub fn default_n(d: usize) -> usize {
    match d {
        0..=3 => 256,
        4 => 64,
        5 => 32,
        _ => 16,
    }
}

fn warn_coarse(n: usize, radius: usize) {
    if n < 2 * radius + 2 {
        log::warn!("grid too coarse: N = {n} < 2R + 2 = {}", 2 * radius + 2);
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!("grid size N = {n} must be even and positive")));
    }
    Ok(())
}

/// Real values of a symmetric spectral function on the half grid.
#[derive(Clone, Debug)]
pub struct SymmetricGrid {
    pub d: usize,
    pub n: usize,
    /// One value per sorted multiset of half-grid indices, by colex rank.
    pub values: Vec<f64>,
}

impl SymmetricGrid {
    pub fn index(&self) -> MultisetIndex {
        MultisetIndex::new(self.n / 2 + 1, self.d)
    }

    /// Build from a function of the sorted half-grid indices.
    pub fn from_fn(d: usize, n: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let idx = MultisetIndex::new(n / 2 + 1, d);
        let mut values = Vec::with_capacity(idx.count());
        let mut a = idx.first();
        loop {
            values.push(f(&a));
            if !idx.next(&mut a) {
                break;
            }
        }
        SymmetricGrid { d, n, values }
    }

    /// Elementwise map with access to the indices.
    pub fn map_indexed(&self, mut f: impl FnMut(&[usize], f64) -> f64) -> Self {
        let idx = self.index();
        let mut a = idx.first();
        let mut values = Vec::with_capacity(self.values.len());
        for &v in &self.values {
            values.push(f(&a, v));
            idx.next(&mut a);
        }
        SymmetricGrid { d: self.d, n: self.n, values }
    }

    /// Visit (sorted indices, number of full-grid points represented, value).
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.d == other.d && self.n == other.n);
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        SymmetricGrid { d: self.d, n: self.n, values }
    }

    pub fn for_each(&self, mut f: impl FnMut(&[usize], f64, f64)) {
        let idx = self.index();
        let mut a = idx.first();
        for &v in &self.values {
            f(&a, multiplicity(&a, self.n), v);
            idx.next(&mut a);
        }
    }

    pub fn at(&self, m: &[usize]) -> f64 {
        let mut s = m.to_vec();
        s.sort_unstable();
        self.values[self.index().rank(&s)]
    }

    /// Expand to the full complex grid.
    pub fn to_torus(&self) -> TorusGrid {
        let n = self.n;
        let total = n.pow(self.d as u32);
        let idx = self.index();
        let mut values = vec![Complex64::new(0.0, 0.0); total];
        let mut m = vec![0usize; self.d];
        for (lin, slot) in values.iter_mut().enumerate() {
            let mut t = lin;
            for j in (0..self.d).rev() {
                let i = t % n;
                t /= n;
                let s = i as i64 - (n as i64 / 2 - 1);
                m[j] = s.unsigned_abs() as usize;
            }
            let mut s = m.clone();
            s.sort_unstable();
            *slot = Complex64::new(self.values[idx.rank(&s)], 0.0);
        }
        TorusGrid { d: self.d, n, values }
    }

    /// `(1/N^d) sum_k g(k) cos(k.x)` at the given sites.
    pub fn inverse_at(&self, points: &[Vec<i64>]) -> Vec<f64> {
        if points.is_empty() {
            return vec![];
        }
        let reps: Vec<Vec<usize>> = points.iter().map(|x| canonical(x)).collect();
        let n_out = reps.iter().map(|a| a[self.d - 1]).max().unwrap() + 1;
        if n_out > self.n / 2 + 1 {
            log::warn!("points beyond N/2 are aliased on an N = {} grid", self.n);
        }
        let k = self.inverse_matrix(n_out);
        let full = MultisetIndex::new(n_out, self.d);
        if 4 * reps.len() >= full.count() {
            let all = contract(self.d, self.n / 2 + 1, &self.values, n_out, &k, Demand::All);
            return reps.iter().map(|a| all[full.rank(a)]).collect();
        }
        contract(self.d, self.n / 2 + 1, &self.values, n_out, &k, Demand::List(&reps))
    }

    /// Inverse transform on every orbit of the box of sup-radius `radius`.
    pub fn inverse_box(&self, radius: usize) -> LatticeFunction {
        let n_out = radius + 1;
        let vals = contract(self.d, self.n / 2 + 1, &self.values, n_out, &self.inverse_matrix(n_out), Demand::All);
        let mut it = vals.into_iter();
        LatticeFunction::from_orbits(self.d, radius, |_| it.next().unwrap())
    }

    fn inverse_matrix(&self, n_out: usize) -> Vec<f64> {
        let h = self.n / 2 + 1;
        let nf = self.n as f64;
        let mut k = vec![0.0; n_out * h];
        for x in 0..n_out {
            for m in 0..h {
                let w = if m == 0 || m == self.n / 2 { 1.0 } else { 2.0 };
                k[x * h + m] = w * (2.0 * PI * (m * x % self.n) as f64 / nf).cos() / nf;
            }
        }
        k
    }
}

/// Number of full-grid points whose sorted absolute indices equal `a`.
pub fn multiplicity(a: &[usize], n: usize) -> f64 {
    let mut signs = 1.0;
    for &m in a {
        if m != 0 && m != n / 2 {
            signs *= 2.0;
        }
    }
    let d = a.len();
    let mut perms: f64 = (1..=d).map(|v| v as f64).product();
    let mut i = 0;
    while i < d {
        let mut j = i;
        while j < d && a[j] == a[i] {
            j += 1;
        }
        perms /= (1..=(j - i)).map(|v| v as f64).product::<f64>();
        i = j;
    }
    signs * perms
}

/// Angular frequency of half-grid index `m`.
#[inline]
pub fn freq(m: usize, n: usize) -> f64 {
    2.0 * PI * m as f64 / n as f64
}

/// Transform of a symmetric lattice function onto the half grid.
pub fn transform_symmetric(f: &LatticeFunction, n: usize) -> Result<SymmetricGrid> {
    check_n(n)?;
    let Storage::Symmetric(vals) = f.storage() else {
        return Err(Error::InvalidParameter("symmetric transform needs orbit storage".into()));
    };
    let (d, r) = (f.d(), f.radius());
    warn_coarse(n, r);
    let idx = MultisetIndex::new(r + 1, d);
    let mut input = Vec::with_capacity(vals.len());
    let mut a = idx.first();
    for &v in vals {
        let w: f64 = a.iter().map(|&c| if c == 0 { 1.0 } else { 2.0 }).product();
        input.push(v * w);
        idx.next(&mut a);
    }
    let h = n / 2 + 1;
    let mut k = vec![0.0; h * (r + 1)];
    for m in 0..h {
        for x in 0..=r {
            k[m * (r + 1) + x] = (2.0 * PI * ((m * x) % n) as f64 / n as f64).cos();
        }
    }
    let values = contract(d, r + 1, &input, h, &k, Demand::All);
    Ok(SymmetricGrid { d, n, values })
}

/// D-hat on the half grid, using the product or nearest-neighbour structure.
pub fn kernel_symmetric(kernel: &Kernel, n: usize) -> Result<SymmetricGrid> {
    check_n(n)?;
    let h = n / 2 + 1;
    if kernel.is_nearest_neighbour() {
        let c: Vec<f64> = (0..h).map(|m| freq(m, n).cos()).collect();
        let d = kernel.d as f64;
        return Ok(SymmetricGrid::from_fn(kernel.d, n, |a| a.iter().map(|&m| c[m]).sum::<f64>() / d));
    }
    match kernel.factor() {
        Some(u) => {
            warn_coarse(n, kernel.l);
            let phi: Vec<f64> = (0..h).map(|m| axis_symbol(u, kernel.l, freq(m, n))).collect();
            Ok(SymmetricGrid::from_fn(kernel.d, n, |a| a.iter().map(|&m| phi[m]).product()))
        }
        None => transform_symmetric(kernel.values(), n),
    }
}

/// Complex values on the full grid, axis index `i` holding `m = i - N/2 + 1`.
#[derive(Clone, Debug)]
pub struct TorusGrid {
    pub d: usize,
    pub n: usize,
    pub values: Vec<Complex64>,
}

impl TorusGrid {
    pub fn m_of(&self, i: usize) -> i64 {
        i as i64 - (self.n as i64 / 2 - 1)
    }

    /// Value at signed grid indices `m`.
    pub fn at(&self, m: &[i64]) -> Complex64 {
        let n = self.n as i64;
        let lin = m.iter().fold(0usize, |acc, &c| {
            let i = (c.rem_euclid(n) + n / 2 - 1).rem_euclid(n);
            acc * self.n + i as usize
        });
        self.values[lin]
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }
}

/// Contract one axis of a row-major tensor with an `n_new x n_old` matrix.
fn contract_axis(data: &[Complex64], shape: &[usize], axis: usize, mat: &[Complex64], n_new: usize) -> Vec<Complex64> {
    let n_old = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![Complex64::new(0.0, 0.0); outer * n_new * inner];
    for o in 0..outer {
        for p in 0..n_new {
            let dst = &mut out[(o * n_new + p) * inner..][..inner];
            for q in 0..n_old {
                let c = mat[p * n_old + q];
                if c == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let src = &data[(o * n_old + q) * inner..][..inner];
                for (dv, sv) in dst.iter_mut().zip(src) {
                    *dv += c * sv;
                }
            }
        }
    }
    out
}

/// `sum_x f(x) e^{i k.x}` on the full N^d grid.
pub fn transform(f: &LatticeFunction, n: usize) -> Result<TorusGrid> {
    derivative_transform(f, &vec![0; f.d()], n)
}

/// Transform of `x -> (i x)^alpha f(x)`, i.e. the alpha-derivative of f-hat.
pub fn derivative_transform(f: &LatticeFunction, alpha: &[u32], n: usize) -> Result<TorusGrid> {
    check_n(n)?;
    let (d, r) = (f.d(), f.radius());
    if alpha.len() != d {
        return Err(Error::InvalidParameter("multi-index length differs from d".into()));
    }
    warn_coarse(n, r);
    let side = 2 * r + 1;
    let mut data = vec![Complex64::new(0.0, 0.0); side.pow(d as u32)];
    f.for_each_site(|x, v| {
        let w: f64 = x.iter().zip(alpha).map(|(&c, &a)| (c as f64).powi(a as i32)).product();
        let lin = x.iter().fold(0usize, |acc, &c| acc * side + (c + r as i64) as usize);
        data[lin] = Complex64::new(v * w, 0.0);
    });
    let mut mat = vec![Complex64::new(0.0, 0.0); n * side];
    for i in 0..n {
        let k = 2.0 * PI * (i as f64 - (n as f64 / 2.0 - 1.0)) / n as f64;
        for t in 0..side {
            mat[i * side + t] = Complex64::from_polar(1.0, k * (t as f64 - r as f64));
        }
    }
    let mut shape = vec![side; d];
    for axis in 0..d {
        data = contract_axis(&data, &shape, axis, &mat, n);
        shape[axis] = n;
    }
    let order: u32 = alpha.iter().sum();
    let phase = Complex64::new(0.0, 1.0).powu(order);
    for v in data.iter_mut() {
        *v *= phase;
    }
    Ok(TorusGrid { d, n, values: data })
}

/// Derivative transform of a product kernel, assembled from axis factors.
pub fn kernel_derivative_transform(kernel: &Kernel, alpha: &[u32], n: usize) -> Result<TorusGrid> {
    check_n(n)?;
    let Some(u) = kernel.factor() else {
        return derivative_transform(kernel.values(), alpha, n);
    };
    warn_coarse(n, kernel.l);
    let l = kernel.l as i64;
    let axis: Vec<Vec<Complex64>> = alpha
        .iter()
        .map(|&a| {
            (0..n)
                .map(|i| {
                    let k = 2.0 * PI * (i as f64 - (n as f64 / 2.0 - 1.0)) / n as f64;
                    let mut s = Complex64::new(0.0, 0.0);
                    for t in -l..=l {
                        let w = u[(t + l) as usize] * (t as f64).powi(a as i32);
                        s += Complex64::from_polar(w, k * t as f64);
                    }
                    s * Complex64::new(0.0, 1.0).powu(a)
                })
                .collect()
        })
        .collect();
    let d = kernel.d;
    let total = n.pow(d as u32);
    let mut values = Vec::with_capacity(total);
    for lin in 0..total {
        let mut t = lin;
        let mut v = Complex64::new(1.0, 0.0);
        for j in (0..d).rev() {
            v *= axis[j][t % n];
            t /= n;
        }
        values.push(v);
    }
    Ok(TorusGrid { d, n, values })
}

/// Midpoint-rule L^q(T^d) norm with measure dk/(2pi)^d; `q = inf` gives the max.
pub fn lq_norm(g: &TorusGrid, q: f64) -> Result<f64> {
    lq_from(g.values.iter().map(|v| (v.norm(), 1.0)), g.n.pow(g.d as u32) as f64, q)
}

pub fn lq_norm_symmetric(g: &SymmetricGrid, q: f64) -> Result<f64> {
    let mut pairs = Vec::with_capacity(g.values.len());
    g.for_each(|_, mult, v| pairs.push((v.abs(), mult)));
    lq_from(pairs.into_iter(), g.n.pow(g.d as u32) as f64, q)
}

fn lq_from(it: impl Iterator<Item = (f64, f64)>, count: f64, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidParameter(format!("q = {q} must be at least 1")));
    }
    if q.is_infinite() {
        return Ok(it.fold(0.0, |m, (a, _)| m.max(a)));
    }
    let mut acc = Neumaier::default();
    for (a, w) in it {
        acc.add(w * a.powf(q));
    }
    Ok((acc.sum() / count).powf(1.0 / q))
}

/// Result of an infrared-bound scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfraredReport {
    pub margin: f64,
    pub argmin_k: Vec<f64>,
    pub n: usize,
    pub mu: Option<f64>,
}

/// `min_{k != 0} (f(k) - f(0)) / min(L^2 |k|^2, 1)` over a symmetric grid.
pub fn infrared_margin_grid(g: &SymmetricGrid, l: usize) -> InfraredReport {
    let f0 = g.values[0];
    let l2 = (l * l) as f64;
    let mut best = (f64::INFINITY, vec![0usize; g.d]);
    g.for_each(|a, _, v| {
        if a.iter().all(|&m| m == 0) {
            return;
        }
        let k2: f64 = a.iter().map(|&m| freq(m, g.n).powi(2)).sum();
        let r = (v - f0) / (l2 * k2).min(1.0);
        if r < best.0 {
            best = (r, a.to_vec());
        }
    });
    InfraredReport { margin: best.0, argmin_k: best.1.iter().map(|&m| freq(m, g.n)).collect(), n: g.n, mu: None }
}

/// Infrared margin of a symmetric lattice function (typically A_mu or F_z).
pub fn infrared_margin(f: &LatticeFunction, l: usize, n: usize) -> Result<InfraredReport> {
    let f = f.to_symmetric(0.0)?;
    Ok(infrared_margin_grid(&transform_symmetric(&f, n)?, l))
}

/// Infrared margin of A_mu = delta - mu D, computed from D-hat directly.
pub fn infrared_margin_kernel(kernel: &Kernel, mu: f64, n: usize) -> Result<InfraredReport> {
    let dh = kernel_symmetric(kernel, n)?;
    let a = SymmetricGrid { d: dh.d, n, values: dh.values.iter().map(|v| 1.0 - mu * v).collect() };
    let mut r = infrared_margin_grid(&a, kernel.l);
    r.mu = Some(mu);
    Ok(r)
}

/// Fitted exponent of L -> ||D-hat_alpha||_q together with the norms.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormScaling {
    pub exponent: f64,
    pub ls: Vec<usize>,
    pub norms: Vec<f64>,
    pub n: usize,
}

pub fn norm_scaling_fit(profile: &Profile, alpha: &[u32], q: f64, ls: &[usize], n: usize) -> Result<NormScaling> {
    if ls.len() < 3 {
        return Err(Error::InvalidParameter("need at least three values of L".into()));
    }
    let d = profile.d;
    if d > MAX_D {
        return Err(Error::InvalidParameter("dimension too large".into()));
    }
    let mut norms = Vec::with_capacity(ls.len());
    for &l in ls {
        let k = build_kernel(profile, l, d)?;
        let g = kernel_derivative_transform(&k, alpha, n)?;
        norms.push(lq_norm(&g, q)?);
    }
    let x: Vec<f64> = ls.iter().map(|&l| (l as f64).ln()).collect();
    let y: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let (slope, _) = fitting::linear_fit(&x, &y, None)?;
    Ok(NormScaling { exponent: slope, ls: ls.to_vec(), norms, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_kernel;

    #[test]
    fn delta_transforms_to_one() {
        let g = transform(&LatticeFunction::delta(3), 8).unwrap();
        assert!(g.values.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let s = transform_symmetric(&LatticeFunction::delta(3), 8).unwrap();
        assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn box_kernel_at_pi() {
        let k = build_kernel(&Profile::uniform(3), 1, 3).unwrap();
        let g = transform(k.values(), 8).unwrap();
        assert!((g.at(&[4, 0, 0]).re + 1.0 / 3.0).abs() < 1e-15);
        let s = kernel_symmetric(&k, 8).unwrap();
        assert!((s.at(&[4, 0, 0]) + 1.0 / 3.0).abs() < 1e-15);
        let t = transform_symmetric(k.values(), 8).unwrap();
        for (a, b) in t.values.iter().zip(&s.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn second_derivative_at_origin() {
        let k = build_kernel(&Profile::uniform(3), 2, 3).unwrap();
        let g = derivative_transform(k.values(), &[2, 0, 0], 8).unwrap();
        assert!((g.at(&[0, 0, 0]).re + k.sigma2 / 3.0).abs() < 1e-13);
        let h = kernel_derivative_transform(&k, &[2, 0, 0], 8).unwrap();
        for (a, b) in g.values.iter().zip(&h.values) {
            assert!((a - b).norm() < 1e-13);
        }
        let o = derivative_transform(k.values(), &[1, 0, 0], 8).unwrap();
        assert!(o.at(&[0, 0, 0]).norm() < 1e-15);
        assert!(o.max_imag() < 1e-14);
        assert!((o.at(&[1, 2, 0]) + o.at(&[-1, 2, 0])).norm() < 1e-14);
    }

    #[test]
    fn cosine_norm() {
        let f = LatticeFunction::from_sites(1, 1, |x| if x[0] != 0 { 1.0 } else { 0.0 });
        let g = transform(&f, 8).unwrap();
        assert!((lq_norm(&g, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        let s = transform_symmetric(&f.to_symmetric(0.0).unwrap(), 8).unwrap();
        assert!((lq_norm_symmetric(&s, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn symmetric_grid_round_trip() {
        let f = LatticeFunction::from_orbits(3, 3, |a| 1.0 / (1.0 + a.iter().sum::<usize>() as f64));
        let g = transform_symmetric(&f, 10).unwrap();
        let back = g.inverse_box(3);
        f.for_each_orbit(|a, _, v| {
            let x: Vec<i64> = a.iter().map(|&c| c as i64).collect();
            assert!((back.get(&x) - v).abs() < 1e-13);
        });
        let pts = vec![vec![3, -1, 0], vec![0, 0, 0]];
        let v = g.inverse_at(&pts);
        assert!((v[0] - f.get(&[3, -1, 0])).abs() < 1e-13);
        let dense = transform(&f, 10).unwrap();
        let ex = g.to_torus();
        for (a, b) in dense.values.iter().zip(&ex.values) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn nearest_neighbour_margin_beats_cosine_bound() {
        let k = Kernel::nearest_neighbour(3);
        let r = infrared_margin_kernel(&k, 1.0, 64).unwrap();
        assert!(r.margin >= 2.0 / (3.0 * PI * PI));
        let a = LatticeFunction::delta(3).sub(&k.values().clone());
        let r2 = infrared_margin(&a, 1, 64).unwrap();
        assert!((r.margin - r2.margin).abs() < 1e-13);
    }
}
