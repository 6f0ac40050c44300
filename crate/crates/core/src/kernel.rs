//! Spread-out step distributions D(x) = v(x/L) / sum_y v(y/L).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{orbit_size, LatticeFunction, MAX_D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    UniformBox,
    ProductTent,
    UserTable,
}

impl ProfileKind {
    fn code(self) -> u8 {
        match self {
            ProfileKind::UniformBox => 1,
            ProfileKind::ProductTent => 2,
            ProfileKind::UserTable => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::UniformBox => "uniform-box",
            ProfileKind::ProductTent => "product-tent",
            ProfileKind::UserTable => "user-table",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform-box" | "box" => Ok(ProfileKind::UniformBox),
            "tent" | "product-tent" => Ok(ProfileKind::ProductTent),
            "table" | "user-table" => Ok(ProfileKind::UserTable),
            _ => Err(Error::InvalidParameter(format!("unknown profile kind '{s}'"))),
        }
    }
}

/// Samples of v on the regular grid `-1 + 2i/(t-1)`, `i = 0..t`, in each axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub points_per_axis: usize,
    pub values: Vec<f64>,
}

/// A symmetric density on [-1, 1]^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub kind: ProfileKind,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<ProfileTable>,
}

/// One-dimensional factor of the built-in product profiles.
fn axis_density(kind: ProfileKind, t: f64) -> f64 {
    let a = t.abs();
    if a > 1.0 {
        return 0.0;
    }
    match kind {
        ProfileKind::UniformBox => 0.5,
        ProfileKind::ProductTent => (2.0 / 3.0) * (1.0 - 0.5 * a),
        ProfileKind::UserTable => unreachable!(),
    }
}

impl Profile {
    pub fn uniform(d: usize) -> Self {
        Profile { kind: ProfileKind::UniformBox, d, table: None }
    }

    pub fn tent(d: usize) -> Self {
        Profile { kind: ProfileKind::ProductTent, d, table: None }
    }

    pub fn from_table(d: usize, table: ProfileTable) -> Self {
        Profile { kind: ProfileKind::UserTable, d, table: Some(table) }
    }

    /// Evaluate v at a point of R^d.
    pub fn eval(&self, u: &[f64]) -> f64 {
        if u.iter().any(|c| c.abs() > 1.0) {
            return 0.0;
        }
        match self.kind {
            ProfileKind::UserTable => self.table.as_ref().map_or(0.0, |t| interpolate(t, u)),
            k => u.iter().map(|&c| axis_density(k, c)).product(),
        }
    }

    /// Check nonnegativity and hyperoctahedral symmetry of a user table.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > MAX_D {
            return Err(Error::InvalidParameter(format!("dimension {} outside 1..={MAX_D}", self.d)));
        }
        if self.kind != ProfileKind::UserTable {
            return Ok(());
        }
        let t = self.table.as_ref().ok_or_else(|| Error::InvalidParameter("user-table profile without table".into()))?;
        if t.points_per_axis < 2 || t.values.len() != t.points_per_axis.pow(self.d as u32) {
            return Err(Error::InvalidParameter("table size does not match points_per_axis^d".into()));
        }
        if t.values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("table values must be finite and nonnegative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let d = self.d;
        for _ in 0..1000 {
            let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let mut perm: Vec<usize> = (0..d).collect();
            for i in (1..d).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let w: Vec<f64> =
                perm.iter().map(|&p| if rng.gen_bool(0.5) { -u[p] } else { u[p] }).collect();
            let (a, b) = (self.eval(&u), self.eval(&w));
            if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                return Err(Error::AsymmetricProfile(format!("v({u:?}) = {a} but v({w:?}) = {b}")));
            }
        }
        Ok(())
    }
}

fn interpolate(t: &ProfileTable, u: &[f64]) -> f64 {
    let n = t.points_per_axis;
    let d = u.len();
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for j in 0..d {
        let s = (u[j] + 1.0) * 0.5 * (n - 1) as f64;
        let i = (s.floor() as usize).min(n - 2);
        base[j] = i;
        frac[j] = s - i as f64;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut lin = 0;
        for j in 0..d {
            let bit = (corner >> j) & 1;
            w *= if bit == 1 { frac[j] } else { 1.0 - frac[j] };
            lin = lin * n + base[j] + bit;
        }
        if w != 0.0 {
            acc += w * t.values[lin];
        }
    }
    acc
}

/// A normalized symmetric step distribution on Z^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub label: String,
    pub d: usize,
    pub l: usize,
    pub sigma2: f64,
    pub total: f64,
    values: LatticeFunction,
    /// Normalized one-dimensional factor on `-L..=L` for product kernels.
    factor: Option<Vec<f64>>,
    nearest_neighbour: bool,
}

pub fn build_kernel(profile: &Profile, l: usize, d: usize) -> Result<Kernel> {
    if l < 1 {
        return Err(Error::InvalidParameter("L must be at least 1".into()));
    }
    if profile.d != d {
        return Err(Error::InvalidParameter(format!("profile dimension {} differs from d = {d}", profile.d)));
    }
    profile.validate()?;
    let lf = l as f64;
    let label = profile.kind.name();
    if profile.kind == ProfileKind::UserTable {
        let raw = LatticeFunction::from_orbits(d, l, |a| {
            let u: Vec<f64> = a.iter().map(|&c| c as f64 / lf).collect();
            profile.eval(&u)
        });
        let mass = raw.sum();
        if !(mass > 0.0) {
            return Err(Error::DegenerateProfile);
        }
        return Ok(Kernel::from_values(label, l, raw.scale(1.0 / mass), None));
    }
    let raw: Vec<f64> = (-(l as i64)..=l as i64).map(|t| axis_density(profile.kind, t as f64 / lf)).collect();
    let mass: f64 = raw.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateProfile);
    }
    let u: Vec<f64> = raw.iter().map(|v| v / mass).collect();
    let values = LatticeFunction::from_orbits(d, l, |a| a.iter().map(|&c| u[l + c]).product());
    Ok(Kernel::from_values(label, l, values, Some(u)))
}

impl Kernel {
    fn from_values(label: &str, l: usize, values: LatticeFunction, factor: Option<Vec<f64>>) -> Kernel {
        let d = values.d();
        let (total, sigma2) = match &factor {
            Some(u) => {
                let s2: f64 = u.iter().enumerate().map(|(i, w)| w * ((i as f64 - l as f64).powi(2))).sum();
                let t: f64 = u.iter().sum();
                (t.powi(d as i32), d as f64 * s2 * t.powi(d as i32 - 1))
            }
            None => (values.sum(), values.second_moment()),
        };
        Kernel { label: label.into(), d, l, sigma2, total, values, factor, nearest_neighbour: false }
    }

    /// The nearest-neighbour step distribution, 1/(2d) on each unit vector.
    pub fn nearest_neighbour(d: usize) -> Kernel {
        let values = LatticeFunction::from_orbits(d, 1, |a| {
            if a[..d - 1].iter().all(|&c| c == 0) && a[d - 1] == 1 {
                1.0 / (2 * d) as f64
            } else {
                0.0
            }
        });
        let mut k = Kernel::from_values("nearest-neighbour", 1, values, None);
        k.nearest_neighbour = true;
        k.total = 1.0;
        k.sigma2 = 1.0;
        k
    }

    pub fn is_nearest_neighbour(&self) -> bool {
        self.nearest_neighbour
    }

    pub fn values(&self) -> &LatticeFunction {
        &self.values
    }

    pub fn get(&self, x: &[i64]) -> f64 {
        self.values.get(x)
    }

    /// Normalized axis factor for product kernels, indexed by `t + L`.
    pub fn factor(&self) -> Option<&[f64]> {
        self.factor.as_deref()
    }

    /// Sum of x^alpha D(x); zero for any odd exponent.
    pub fn moment(&self, alpha: &[u32]) -> f64 {
        assert_eq!(alpha.len(), self.d);
        if alpha.iter().any(|a| a % 2 == 1) {
            return 0.0;
        }
        match &self.factor {
            Some(u) => alpha
                .iter()
                .map(|&a| u.iter().enumerate().map(|(i, w)| w * (i as f64 - self.l as f64).powi(a as i32)).sum::<f64>())
                .product(),
            None => self.values.moment(alpha),
        }
    }

    /// D-hat(k) = sum_x D(x) cos(k.x).
    pub fn symbol(&self, k: &[f64]) -> f64 {
        if self.nearest_neighbour {
            return k.iter().map(|c| c.cos()).sum::<f64>() / self.d as f64;
        }
        match &self.factor {
            Some(u) => k.iter().map(|&kj| axis_symbol(u, self.l, kj)).product(),
            None => {
                let mut s = 0.0;
                self.values.for_each_site(|x, v| {
                    if v != 0.0 {
                        s += v * x.iter().zip(k).map(|(&c, &kj)| (c as f64 * kj).cos()).product::<f64>();
                    }
                });
                s
            }
        }
    }
}

pub(crate) fn axis_symbol(u: &[f64], l: usize, k: f64) -> f64 {
    u[l] + (1..=l).map(|t| 2.0 * u[l + t] * (k * t as f64).cos()).sum::<f64>()
}

/// Variance and requested moments of a kernel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Moments {
    pub sigma2: f64,
    pub moments: Vec<(Vec<u32>, f64)>,
}

pub fn moments(kernel: &Kernel, alphas: &[Vec<u32>]) -> Moments {
    Moments { sigma2: kernel.sigma2, moments: alphas.iter().map(|a| (a.clone(), kernel.moment(a))).collect() }
}

/// sup_x D(x) <<x>>^(d+a) / L^a with <<x>> = max(|x|, 1).
pub fn envelope_constant(kernel: &Kernel, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter("envelope exponent must be positive".into()));
    }
    let d = kernel.d as f64;
    let mut sup: f64 = 0.0;
    kernel.values.for_each_orbit(|rep, _, v| {
        let r = rep.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt().max(1.0);
        sup = sup.max(v * r.powf(d + a));
    });
    Ok(sup / (kernel.l as f64).powf(a))
}

/// Number of lattice sites carrying mass.
pub fn support_size(kernel: &Kernel) -> f64 {
    let mut n = 0.0;
    kernel.values.for_each_orbit(|a, _, v| {
        if v > 0.0 {
            n += orbit_size(a);
        }
    });
    n
}

const CACHE_MAGIC: &[u8; 4] = b"SOKC";
const CACHE_VERSION: u32 = 1;

/// Cache file for a built-in kernel, keyed by (kind, d, L).
pub fn cache_path(dir: &Path, kind: ProfileKind, d: usize, l: usize) -> PathBuf {
    dir.join(format!("{}-d{d}-L{l}.v{CACHE_VERSION}.bin", kind.name()))
}

pub fn write_cache(kernel: &Kernel, kind: ProfileKind, dir: &Path) -> Result<PathBuf> {
    let path = cache_path(dir, kind, kernel.d, kernel.l);
    let vals = kernel.values.orbit_values().expect("kernels use orbit storage");
    let mut buf = Vec::with_capacity(24 + 8 * vals.len());
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.push(kind.code());
    buf.extend_from_slice(&(kernel.d as u32).to_le_bytes());
    buf.extend_from_slice(&(kernel.l as u32).to_le_bytes());
    buf.extend_from_slice(&(vals.len() as u64).to_le_bytes());
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::create_dir_all(dir)?;
    std::fs::File::create(&path)?.write_all(&buf)?;
    Ok(path)
}

/// Load a cached kernel; `None` when absent or written by another version.
pub fn read_cache(dir: &Path, kind: ProfileKind, d: usize, l: usize) -> Result<Option<Kernel>> {
    let path = cache_path(dir, kind, d, l);
    let mut buf = Vec::new();
    match std::fs::File::open(&path) {
        Ok(mut f) => f.read_to_end(&mut buf)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let bad = || Error::InvalidParameter(format!("corrupt kernel cache {}", path.display()));
    if buf.len() < 25 || &buf[..4] != CACHE_MAGIC {
        return Err(bad());
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    if u32_at(4) != CACHE_VERSION {
        return Ok(None);
    }
    if buf[8] != kind.code() || u32_at(9) as usize != d || u32_at(13) as usize != l {
        return Err(bad());
    }
    let n = u64::from_le_bytes(buf[17..25].try_into().unwrap()) as usize;
    if buf.len() != 25 + 8 * n {
        return Err(bad());
    }
    let vals: Vec<f64> =
        (0..n).map(|i| f64::from_le_bytes(buf[25 + 8 * i..33 + 8 * i].try_into().unwrap())).collect();
    let mut it = vals.into_iter();
    let values = LatticeFunction::from_orbits(d, l, |_| it.next().unwrap_or(0.0));
    let factor = match kind {
        ProfileKind::UserTable => None,
        _ => {
            let axis: Vec<f64> = (0..=l)
                .map(|t| {
                    let mut x = vec![0i64; d];
                    x[0] = t as i64;
                    values.get(&x)
                })
                .collect();
            let scale = axis[0].powf(1.0 / d as f64) / axis[0];
            Some((0..=2 * l).map(|i| axis[i.abs_diff(l)] * scale).collect())
        }
    };
    Ok(Some(Kernel::from_values(kind.name(), l, values, factor)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_box_small_cases() {
        let k = build_kernel(&Profile::uniform(2), 1, 2).unwrap();
        assert!((k.get(&[1, -1]) - 1.0 / 9.0).abs() < 1e-15);
        assert!((k.sigma2 - 4.0 / 3.0).abs() < 1e-14);
        let k = build_kernel(&Profile::uniform(3), 1, 3).unwrap();
        assert!((k.get(&[0, 1, -1]) - 1.0 / 27.0).abs() < 1e-15);
        assert!((k.sigma2 - 2.0).abs() < 1e-14);
        assert_eq!(support_size(&k), 27.0);
    }

    #[test]
    fn tent_is_positive_on_the_boundary() {
        let k = build_kernel(&Profile::tent(3), 8, 3).unwrap();
        assert!((k.total - 1.0).abs() < 1e-12);
        let (c, e) = (k.get(&[0, 0, 0]), k.get(&[8, 0, 0]));
        assert!(c > e && e > 0.0);
        assert_eq!(k.get(&[9, 0, 0]), 0.0);
    }

    #[test]
    fn factor_moments_match_site_sums() {
        let k = build_kernel(&Profile::tent(3), 3, 3).unwrap();
        assert!((k.sigma2 - k.values().second_moment()).abs() < 1e-12);
        assert!((k.moment(&[2, 2, 0]) - k.values().moment(&[2, 2, 0])).abs() < 1e-12);
        assert_eq!(k.moment(&[1, 0, 0]), 0.0);
        let kk = [0.3, -1.1, 2.0];
        let direct: f64 = {
            let mut s = 0.0;
            k.values().for_each_site(|x, v| {
                s += v * x.iter().zip(&kk).map(|(&c, &q)| (c as f64 * q).cos()).product::<f64>()
            });
            s
        };
        assert!((k.symbol(&kk) - direct).abs() < 1e-14);
    }

    #[test]
    fn envelope_of_small_box() {
        let k = build_kernel(&Profile::uniform(2), 1, 2).unwrap();
        let e = envelope_constant(&k, 1.0).unwrap();
        assert!((e - 2f64.sqrt().powi(3) / 9.0).abs() < 1e-15);
    }

    #[test]
    fn user_table_symmetry_is_checked() {
        let t = ProfileTable { points_per_axis: 3, values: vec![1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0] };
        let k = build_kernel(&Profile::from_table(2, t), 4, 2).unwrap();
        assert!((k.total - 1.0).abs() < 1e-12);
        let bad = ProfileTable { points_per_axis: 3, values: vec![1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 3.0] };
        assert!(matches!(build_kernel(&Profile::from_table(2, bad), 4, 2), Err(Error::AsymmetricProfile(_))));
        let zero = ProfileTable { points_per_axis: 3, values: vec![0.0; 9] };
        assert!(matches!(build_kernel(&Profile::from_table(2, zero), 4, 2), Err(Error::DegenerateProfile)));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let k = build_kernel(&Profile::tent(3), 5, 3).unwrap();
        write_cache(&k, ProfileKind::ProductTent, dir.path()).unwrap();
        let back = read_cache(dir.path(), ProfileKind::ProductTent, 3, 5).unwrap().unwrap();
        assert_eq!(back.values(), k.values());
        assert!((back.sigma2 - k.sigma2).abs() < 1e-12);
        assert!(read_cache(dir.path(), ProfileKind::ProductTent, 3, 6).unwrap().is_none());
    }
}
