//! Finitely supported functions on Z^d.
//!
//! Hypercubic-symmetric functions are stored once per orbit. An orbit is
//! identified with the sorted multiset of absolute coordinates, and multisets
//! are ranked in colex order so that storage is a flat `Vec<f64>`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension supported by lattice storage.
pub const MAX_D: usize = 8;

/// Binomial coefficients C(n, k) for k <= MAX_D.
#[derive(Clone, Debug)]
pub struct Binomial {
    rows: Vec<[u64; MAX_D + 1]>,
}

impl Binomial {
    pub fn new(nmax: usize) -> Self {
        let mut rows = vec![[0u64; MAX_D + 1]; nmax + 1];
        for n in 0..=nmax {
            rows[n][0] = 1;
            for k in 1..=MAX_D.min(n) {
                rows[n][k] = rows[n - 1][k - 1] + if k <= n - 1 { rows[n - 1][k] } else { 0 };
            }
        }
        Binomial { rows }
    }

    #[inline]
    pub fn c(&self, n: usize, k: usize) -> usize {
        if k > n {
            0
        } else {
            self.rows[n][k] as usize
        }
    }
}

/// Index of size-`r` multisets over the alphabet `0..n`.
#[derive(Clone, Debug)]
pub struct MultisetIndex {
    pub n: usize,
    pub r: usize,
    binom: Binomial,
}

impl MultisetIndex {
    pub fn new(n: usize, r: usize) -> Self {
        assert!(r <= MAX_D);
        MultisetIndex { n, r, binom: Binomial::new(n + r + 1) }
    }

    /// Number of multisets, C(n + r - 1, r).
    pub fn count(&self) -> usize {
        if self.r == 0 {
            1
        } else {
            self.binom.c(self.n + self.r - 1, self.r)
        }
    }

    /// Colex rank of a sorted (nondecreasing) multiset.
    #[inline]
    pub fn rank(&self, a: &[usize]) -> usize {
        let mut s = 0;
        for (i, &v) in a.iter().enumerate() {
            s += self.binom.c(v + i, i + 1);
        }
        s
    }

    /// Number of multisets whose largest element is below `v`.
    #[inline]
    pub fn prefix_below(&self, v: usize) -> usize {
        if self.r == 0 {
            return 1;
        }
        self.binom.c(v + self.r - 1, self.r)
    }

    pub fn first(&self) -> Vec<usize> {
        vec![0; self.r]
    }

    /// Advance to the next multiset in colex order; false when exhausted.
    pub fn next(&self, a: &mut [usize]) -> bool {
        let r = a.len();
        for i in 0..r {
            let can = if i + 1 < r { a[i] < a[i + 1] } else { a[i] + 1 < self.n };
            if can {
                a[i] += 1;
                for slot in a.iter_mut().take(i) {
                    *slot = 0;
                }
                return true;
            }
        }
        false
    }

    /// All multisets in rank order.
    pub fn all(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.count());
        if self.n == 0 && self.r > 0 {
            return out;
        }
        let mut a = self.first();
        loop {
            out.push(a.clone());
            if !self.next(&mut a) {
                break;
            }
        }
        out
    }
}

/// Sorted absolute coordinates of `x`.
pub fn canonical(x: &[i64]) -> Vec<usize> {
    let mut a: Vec<usize> = x.iter().map(|v| v.unsigned_abs() as usize).collect();
    a.sort_unstable();
    a
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Number of lattice sites in the orbit of a sorted representative.
pub fn orbit_size(a: &[usize]) -> f64 {
    let d = a.len();
    let nonzero = a.iter().filter(|&&v| v != 0).count();
    let mut denom = 1.0;
    let mut i = 0;
    while i < d {
        let mut j = i;
        while j < d && a[j] == a[i] {
            j += 1;
        }
        denom *= factorial(j - i);
        i = j;
    }
    (1u64 << nonzero) as f64 * factorial(d) / denom
}

/// Every site in the orbit of a sorted representative.
pub fn orbit_members(a: &[usize]) -> Vec<Vec<i64>> {
    let mut perm: Vec<usize> = a.to_vec();
    perm.sort_unstable();
    let mut out = Vec::new();
    loop {
        let nz: Vec<usize> = (0..perm.len()).filter(|&i| perm[i] != 0).collect();
        for mask in 0u32..(1u32 << nz.len()) {
            let mut x: Vec<i64> = perm.iter().map(|&v| v as i64).collect();
            for (b, &i) in nz.iter().enumerate() {
                if mask & (1 << b) != 0 {
                    x[i] = -x[i];
                }
            }
            out.push(x);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    out
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

pub fn euclid(x: &[i64]) -> f64 {
    x.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt()
}

pub fn sup_norm(x: &[i64]) -> usize {
    x.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0)
}

/// Storage layout of a [`LatticeFunction`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Storage {
    /// One value per hypercubic orbit, indexed by multiset rank over `0..=radius`.
    Symmetric(Vec<f64>),
    /// Row-major values on the box `[-radius, radius]^d`.
    Dense(Vec<f64>),
}

/// A function on Z^d supported in the box of sup-radius `radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeFunction {
    d: usize,
    radius: usize,
    storage: Storage,
}

impl LatticeFunction {
    pub fn zeros(d: usize, radius: usize, symmetric: bool) -> Self {
        assert!((1..=MAX_D).contains(&d));
        let storage = if symmetric {
            Storage::Symmetric(vec![0.0; MultisetIndex::new(radius + 1, d).count()])
        } else {
            Storage::Dense(vec![0.0; (2 * radius + 1).pow(d as u32)])
        };
        LatticeFunction { d, radius, storage }
    }

    pub fn delta(d: usize) -> Self {
        let mut f = Self::zeros(d, 0, true);
        f.set_orbit(&vec![0; d], 1.0);
        f
    }

    /// Symmetric function given by a closure on sorted representatives.
    pub fn from_orbits(d: usize, radius: usize, mut value: impl FnMut(&[usize]) -> f64) -> Self {
        let idx = MultisetIndex::new(radius + 1, d);
        let mut vals = Vec::with_capacity(idx.count());
        let mut a = idx.first();
        loop {
            vals.push(value(&a));
            if !idx.next(&mut a) {
                break;
            }
        }
        LatticeFunction { d, radius, storage: Storage::Symmetric(vals) }
    }

    /// Dense function given by a closure on sites.
    pub fn from_sites(d: usize, radius: usize, mut value: impl FnMut(&[i64]) -> f64) -> Self {
        let mut f = Self::zeros(d, radius, false);
        let side = 2 * radius + 1;
        let total = side.pow(d as u32);
        let mut x = vec![0i64; d];
        if let Storage::Dense(v) = &mut f.storage {
            for (lin, slot) in v.iter_mut().enumerate().take(total) {
                decode(lin, side, radius, &mut x);
                *slot = value(&x);
            }
        }
        f
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self.storage, Storage::Symmetric(_))
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    /// Orbit values of a symmetric function, by multiset rank.
    pub fn orbit_values(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Symmetric(v) => Some(v),
            Storage::Dense(_) => None,
        }
    }

    fn index(&self) -> MultisetIndex {
        MultisetIndex::new(self.radius + 1, self.d)
    }

    pub fn get(&self, x: &[i64]) -> f64 {
        assert_eq!(x.len(), self.d);
        if sup_norm(x) > self.radius {
            return 0.0;
        }
        match &self.storage {
            Storage::Symmetric(v) => v[self.index().rank(&canonical(x))],
            Storage::Dense(v) => v[encode(x, 2 * self.radius + 1, self.radius)],
        }
    }

    /// Set the value on the whole orbit of `a` (symmetric storage only).
    pub fn set_orbit(&mut self, a: &[usize], value: f64) {
        let mut s = a.to_vec();
        s.sort_unstable();
        let r = self.index().rank(&s);
        match &mut self.storage {
            Storage::Symmetric(v) => v[r] = value,
            Storage::Dense(_) => panic!("set_orbit on dense storage"),
        }
    }

    /// Set the value at a single site (dense storage only).
    pub fn set(&mut self, x: &[i64], value: f64) {
        let (side, r) = (2 * self.radius + 1, self.radius);
        match &mut self.storage {
            Storage::Dense(v) => v[encode(x, side, r)] = value,
            Storage::Symmetric(_) => panic!("set on symmetric storage"),
        }
    }

    /// Visit (representative, orbit size, value) for every orbit.
    pub fn for_each_orbit(&self, mut f: impl FnMut(&[usize], f64, f64)) {
        let Storage::Symmetric(v) = &self.storage else {
            panic!("for_each_orbit on dense storage");
        };
        let idx = self.index();
        let mut a = idx.first();
        let mut r = 0;
        loop {
            f(&a, orbit_size(&a), v[r]);
            r += 1;
            if !idx.next(&mut a) {
                break;
            }
        }
    }

    /// Visit every site in the support box with its value.
    pub fn for_each_site(&self, mut f: impl FnMut(&[i64], f64)) {
        match &self.storage {
            Storage::Symmetric(_) => self.for_each_orbit(|a, _, val| {
                for x in orbit_members(a) {
                    f(&x, val);
                }
            }),
            Storage::Dense(v) => {
                let side = 2 * self.radius + 1;
                let mut x = vec![0i64; self.d];
                for (lin, &val) in v.iter().enumerate() {
                    decode(lin, side, self.radius, &mut x);
                    f(&x, val);
                }
            }
        }
    }

    /// Nonzero sites with values.
    pub fn support(&self) -> Vec<(Vec<i64>, f64)> {
        let mut out = Vec::new();
        self.for_each_site(|x, v| {
            if v != 0.0 {
                out.push((x.to_vec(), v));
            }
        });
        out
    }

    /// Sum over all sites of `w(x) f(x)` where `w` depends only on the orbit.
    fn weighted_sum(&self, w: impl Fn(&[i64]) -> f64) -> f64 {
        let mut acc = Neumaier::default();
        match &self.storage {
            Storage::Symmetric(_) => self.for_each_orbit(|a, m, v| {
                let x: Vec<i64> = a.iter().map(|&c| c as i64).collect();
                acc.add(m * v * w(&x));
            }),
            Storage::Dense(_) => self.for_each_site(|x, v| acc.add(v * w(x))),
        }
        acc.sum()
    }

    pub fn sum(&self) -> f64 {
        self.weighted_sum(|_| 1.0)
    }

    pub fn abs_sum(&self) -> f64 {
        self.map(f64::abs).sum()
    }

    /// Sum of |x|^2 f(x).
    pub fn second_moment(&self) -> f64 {
        self.weighted_sum(|x| x.iter().map(|&c| (c * c) as f64).sum())
    }

    pub fn abs_second_moment(&self) -> f64 {
        self.map(f64::abs).second_moment()
    }

    /// Sum of x^alpha f(x); odd exponents vanish for symmetric storage.
    pub fn moment(&self, alpha: &[u32]) -> f64 {
        assert_eq!(alpha.len(), self.d);
        if self.is_symmetric() && alpha.iter().any(|a| a % 2 == 1) {
            return 0.0;
        }
        let mut acc = Neumaier::default();
        self.for_each_site(|x, v| {
            let p: f64 = x.iter().zip(alpha).map(|(&c, &a)| (c as f64).powi(a as i32)).product();
            acc.add(p * v);
        });
        acc.sum()
    }

    pub fn sup_abs(&self) -> f64 {
        match &self.storage {
            Storage::Symmetric(v) | Storage::Dense(v) => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let storage = match &self.storage {
            Storage::Symmetric(v) => Storage::Symmetric(v.iter().map(|&x| f(x)).collect()),
            Storage::Dense(v) => Storage::Dense(v.iter().map(|&x| f(x)).collect()),
        };
        LatticeFunction { d: self.d, radius: self.radius, storage }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    /// Dense copy on the same box.
    pub fn to_dense(&self) -> Self {
        if !self.is_symmetric() {
            return self.clone();
        }
        let mut out = Self::zeros(self.d, self.radius, false);
        self.for_each_site(|x, v| out.set(x, v));
        out
    }

    /// Copy with a different support radius; values outside are dropped.
    pub fn with_radius(&self, radius: usize) -> Self {
        match &self.storage {
            Storage::Symmetric(_) => LatticeFunction::from_orbits(self.d, radius, |a| {
                if a[self.d - 1] > self.radius {
                    0.0
                } else {
                    let x: Vec<i64> = a.iter().map(|&c| c as i64).collect();
                    self.get(&x)
                }
            }),
            Storage::Dense(_) => LatticeFunction::from_sites(self.d, radius, |x| self.get(x)),
        }
    }

    /// `a * self + b * other`, on the larger of the two boxes.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.d, other.d);
        let r = self.radius.max(other.radius);
        if self.is_symmetric() && other.is_symmetric() {
            let (u, v) = (self.with_radius(r), other.with_radius(r));
            let (Storage::Symmetric(x), Storage::Symmetric(y)) = (&u.storage, &v.storage) else {
                unreachable!()
            };
            let vals = x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
            LatticeFunction { d: self.d, radius: r, storage: Storage::Symmetric(vals) }
        } else {
            LatticeFunction::from_sites(self.d, r, |x| a * self.get(x) + b * other.get(x))
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.linear_combination(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.linear_combination(1.0, other, -1.0)
    }

    /// Whether a dense function is invariant under the hyperoctahedral group.
    pub fn check_symmetric(&self, tol: f64) -> bool {
        let mut ok = true;
        self.for_each_site(|x, v| {
            let a: Vec<i64> = canonical(x).iter().map(|&c| c as i64).collect();
            if (self.get(&a) - v).abs() > tol {
                ok = false;
            }
        });
        ok
    }

    /// Symmetric storage of a function known to be symmetric.
    pub fn to_symmetric(&self, tol: f64) -> Result<Self> {
        if self.is_symmetric() {
            return Ok(self.clone());
        }
        if !self.check_symmetric(tol) {
            return Err(Error::InvalidParameter("function is not hypercubic symmetric".into()));
        }
        Ok(LatticeFunction::from_orbits(self.d, self.radius, |a| {
            let x: Vec<i64> = a.iter().map(|&c| c as i64).collect();
            self.get(&x)
        }))
    }
}

fn encode(x: &[i64], side: usize, radius: usize) -> usize {
    x.iter().fold(0usize, |acc, &c| acc * side + (c + radius as i64) as usize)
}

fn decode(mut lin: usize, side: usize, radius: usize, x: &mut [i64]) {
    for slot in x.iter_mut().rev() {
        *slot = (lin % side) as i64 - radius as i64;
        lin /= side;
    }
}

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    s: f64,
    c: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    pub fn sum(&self) -> f64 {
        self.s + self.c
    }
}

/// Truncated convolution: `(u * v)` restricted to the box of `radius`.
///
/// Returns the result together with the absolute mass that fell outside.
pub fn convolve_truncated(u: &LatticeFunction, v: &LatticeFunction, radius: usize) -> (LatticeFunction, f64) {
    assert_eq!(u.d, v.d);
    let d = u.d;
    let r = radius.min(u.radius + v.radius);
    let total_abs = u.abs_sum() * v.abs_sum();
    if u.is_symmetric() && v.is_symmetric() {
        let (small, big) = if support_len(u) <= support_len(v) { (u, v) } else { (v, u) };
        let supp = small.support();
        let big_idx = big.index();
        let Storage::Symmetric(bv) = &big.storage else { unreachable!() };
        let mut inside_abs = Neumaier::default();
        let mut y = vec![0i64; d];
        let mut key = vec![0usize; d];
        let out = LatticeFunction::from_orbits(d, r, |a| {
            let mut s = Neumaier::default();
            let mut sa = 0.0;
            for (z, w) in &supp {
                let mut inside = true;
                for j in 0..d {
                    y[j] = a[j] as i64 - z[j];
                    let m = y[j].unsigned_abs() as usize;
                    if m > big.radius {
                        inside = false;
                        break;
                    }
                    key[j] = m;
                }
                if !inside {
                    continue;
                }
                key.sort_unstable();
                let b = bv[big_idx.rank(&key)];
                s.add(w * b);
                sa += (w * b).abs();
            }
            inside_abs.add(sa * orbit_size(a));
            s.sum()
        });
        let loss = (total_abs - inside_abs.sum()).max(0.0);
        (out, loss)
    } else {
        let su = u.support();
        let sv = v.support();
        let mut out = LatticeFunction::zeros(d, r, false);
        let side = 2 * r + 1;
        let mut inside_abs = Neumaier::default();
        let Storage::Dense(ov) = &mut out.storage else { unreachable!() };
        let mut x = vec![0i64; d];
        for (y, a) in &su {
            for (z, b) in &sv {
                let mut ok = true;
                for j in 0..d {
                    x[j] = y[j] + z[j];
                    if x[j].unsigned_abs() as usize > r {
                        ok = false;
                    }
                }
                if ok {
                    ov[encode(&x, side, r)] += a * b;
                    inside_abs.add((a * b).abs());
                }
            }
        }
        let loss = (total_abs - inside_abs.sum()).max(0.0);
        (out, loss)
    }
}

fn support_len(f: &LatticeFunction) -> usize {
    (2 * f.radius + 1).pow(f.d as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_enumerate_in_order() {
        let idx = MultisetIndex::new(5, 3);
        let all = idx.all();
        assert_eq!(all.len(), idx.count());
        assert_eq!(all.len(), 35);
        for (r, a) in all.iter().enumerate() {
            assert_eq!(idx.rank(a), r);
        }
    }

    #[test]
    fn prefix_counts_match_largest_element() {
        let idx = MultisetIndex::new(7, 3);
        for (r, a) in idx.all().iter().enumerate() {
            assert!(idx.prefix_below(a[2]) <= r && r < idx.prefix_below(a[2] + 1));
        }
    }

    #[test]
    fn orbit_sizes_cover_the_box() {
        let idx = MultisetIndex::new(4, 3);
        let total: f64 = idx.all().iter().map(|a| orbit_size(a)).sum();
        assert_eq!(total, 7f64.powi(3));
        for a in idx.all() {
            assert_eq!(orbit_members(&a).len() as f64, orbit_size(&a));
        }
    }

    #[test]
    fn dense_and_symmetric_convolutions_agree() {
        let u = LatticeFunction::from_orbits(2, 2, |a| 1.0 / (1.0 + (a[0] + 2 * a[1]) as f64));
        let v = LatticeFunction::from_orbits(2, 1, |a| if a[1] == 0 { 0.5 } else { 0.1 });
        let (s, ls) = convolve_truncated(&u, &v, 2);
        let (dn, ld) = convolve_truncated(&u.to_dense(), &v.to_dense(), 2);
        for x in [[0, 0], [1, 0], [2, 1], [-2, 2], [1, -1]] {
            assert!((s.get(&x) - dn.get(&x)).abs() < 1e-14);
        }
        assert!((ls - ld).abs() < 1e-12);
        assert!(ls > 0.0);
    }

    #[test]
    fn moments_of_delta() {
        let d = LatticeFunction::delta(3);
        assert_eq!(d.sum(), 1.0);
        assert_eq!(d.second_moment(), 0.0);
        assert_eq!(d.get(&[0, 0, 0]), 1.0);
        assert_eq!(d.get(&[1, 0, 0]), 0.0);
    }
}
