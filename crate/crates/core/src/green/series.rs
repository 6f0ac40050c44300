//! Walk-counting oracle: S_mu(x) = sum_n mu^n D^{*n}(x).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::green::GreenResult;
use crate::kernel::Kernel;
use crate::lattice::{canonical, convolve_truncated, LatticeFunction};

pub enum SeriesWalk<'a> {
    NearestNeighbour(usize),
    Kernel(&'a Kernel),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tail {
    /// Rigorous bound mu^{n+1}/(1-mu) sup_x P_n(x); requires mu < 1.
    Geometric,
    /// Local central limit approximation of P_n for n > n_max.
    LocalClt,
}

pub fn series_green(walk: SeriesWalk, mu: f64, points: &[Vec<i64>], n_max: usize, tail: Tail) -> Result<GreenResult> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidParameter(format!("mu = {mu} outside [0, 1]")));
    }
    if tail == Tail::Geometric && mu >= 1.0 {
        return Err(Error::TailUnbounded("geometric tail needs mu < 1".into()));
    }
    let d = match &walk {
        SeriesWalk::NearestNeighbour(d) => *d,
        SeriesWalk::Kernel(k) => k.d,
    };
    if tail == Tail::LocalClt && mu == 1.0 && d <= 2 {
        return Err(Error::TailUnbounded(format!("walk is recurrent in d = {d}")));
    }
    let (probs, sup_last): (Vec<Vec<f64>>, f64) = match &walk {
        SeriesWalk::NearestNeighbour(d) => nn_probabilities(*d, points, n_max),
        SeriesWalk::Kernel(k) => match k.factor() {
            Some(u) => product_probabilities(u, k.l, points, n_max),
            None => generic_probabilities(k, points, n_max)?,
        },
    };
    let (sigma2, periodic) = match &walk {
        SeriesWalk::NearestNeighbour(_) => (1.0, true),
        SeriesWalk::Kernel(k) => (k.sigma2, k.is_nearest_neighbour() || k.get(&vec![0; d]) == 0.0),
    };
    let mut values = Vec::with_capacity(points.len());
    let mut errors = Vec::with_capacity(points.len());
    for (x, p) in points.iter().zip(&probs) {
        let mut s = 0.0;
        let mut w = 1.0;
        for &pn in p {
            s += w * pn;
            w *= mu;
        }
        match tail {
            Tail::Geometric => {
                values.push(s);
                errors.push(mu.powi(n_max as i32 + 1) / (1.0 - mu) * sup_last);
            }
            Tail::LocalClt => {
                let r2: f64 = x.iter().map(|&c| (c * c) as f64).sum();
                let parity = x.iter().map(|c| c.unsigned_abs()).sum::<u64>() as usize % 2;
                let clt = |n: usize| -> f64 {
                    if periodic && n % 2 != parity {
                        return 0.0;
                    }
                    let nf = n as f64;
                    let c = (d as f64 / (2.0 * PI * nf * sigma2)).powf(d as f64 / 2.0);
                    (if periodic { 2.0 } else { 1.0 }) * c * (-(d as f64) * r2 / (2.0 * nf * sigma2)).exp()
                };
                let last = (0..=n_max).rev().find(|&n| clt(n) > 0.0).unwrap_or(n_max);
                let rel = if p[last] > 0.0 { (p[last] - clt(last)).abs() / p[last] } else { 1.0 };
                let t = clt_tail(&clt, mu, n_max, d, periodic);
                values.push(s + t);
                errors.push(2.0 * rel * t + 1e-15 * s);
            }
        }
    }
    let method = match tail {
        Tail::Geometric => format!("series(n_max={n_max}, geometric tail)"),
        Tail::LocalClt => format!("series(n_max={n_max}, local-clt tail)"),
    };
    Ok(GreenResult { points: points.to_vec(), values, estimated_error: errors, method })
}

fn clt_tail(clt: &impl Fn(usize) -> f64, mu: f64, n_max: usize, d: usize, periodic: bool) -> f64 {
    let stop = 200 * (n_max + 1);
    let mut s = 0.0;
    let mut w = mu.powi(n_max as i32 + 1);
    for n in n_max + 1..=stop {
        s += w * clt(n);
        w *= mu;
        if w < 1e-300 {
            return s;
        }
    }
    if mu < 1.0 {
        return s;
    }
    // remaining sum of the slowly varying envelope, one term in two for periodic walks
    let h = d as f64 / 2.0;
    let c = clt(stop).max(clt(stop + 1)) * (stop as f64).powf(h);
    let integral = c * (stop as f64).powf(1.0 - h) / (h - 1.0);
    s + if periodic { integral / 2.0 } else { integral }
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut lf = vec![0.0; n + 1];
    for k in 1..=n {
        lf[k] = lf[k - 1] + (k as f64).ln();
    }
    lf
}

/// Simple-walk probability p_m(y) in one dimension.
fn one_dim(lf: &[f64], m: usize, y: usize) -> f64 {
    if y > m || (m + y) % 2 == 1 {
        return 0.0;
    }
    let k = (m + y) / 2;
    (lf[m] - lf[k] - lf[m - k] - m as f64 * std::f64::consts::LN_2).exp()
}

/// P_n(x) for n = 0..=n_max, splitting the steps between coordinates binomially.
fn nn_probabilities(d: usize, points: &[Vec<i64>], n_max: usize) -> (Vec<Vec<f64>>, f64) {
    let lf = log_factorials(n_max);
    let eval = |x: &[i64]| -> Vec<f64> {
        let a = canonical(x);
        let mut q: Vec<f64> = (0..=n_max).map(|n| one_dim(&lf, n, a[0])).collect();
        for j in 2..=d {
            let pj: Vec<f64> = (0..=n_max).map(|m| one_dim(&lf, m, a[j - 1])).collect();
            let (lp, lq) = ((1.0 / j as f64).ln(), ((j - 1) as f64 / j as f64).ln());
            let mut next = vec![0.0; n_max + 1];
            for (n, slot) in next.iter_mut().enumerate() {
                let mut s = 0.0;
                for m in (a[j - 1]..=n).step_by(2) {
                    if q[n - m] == 0.0 {
                        continue;
                    }
                    let b = (lf[n] - lf[m] - lf[n - m] + m as f64 * lp + (n - m) as f64 * lq).exp();
                    s += b * pj[m] * q[n - m];
                }
                *slot = s;
            }
            q = next;
        }
        q
    };
    let probs: Vec<Vec<f64>> = points.iter().map(|x| eval(x)).collect();
    let even = n_max - n_max % 2;
    let sup = eval(&vec![0; d])[even];
    (probs, sup)
}

/// Product kernels: P_n(x) = prod_j u^{*n}(x_j).
fn product_probabilities(u: &[f64], l: usize, points: &[Vec<i64>], n_max: usize) -> (Vec<Vec<f64>>, f64) {
    let d = points.first().map_or(1, |p| p.len());
    let reps: Vec<Vec<usize>> = points.iter().map(|x| canonical(x)).collect();
    let mut probs = vec![Vec::with_capacity(n_max + 1); points.len()];
    let mut cur = vec![1.0];
    let mut sup = 1.0;
    for n in 0..=n_max {
        let r = n * l;
        let at = |t: usize| if t <= r { cur[r + t] } else { 0.0 };
        for (p, a) in probs.iter_mut().zip(&reps) {
            p.push(a.iter().map(|&t| at(t)).product());
        }
        sup = cur.iter().cloned().fold(0.0, f64::max).powi(d as i32);
        if n < n_max {
            let mut next = vec![0.0; 2 * (r + l) + 1];
            for (i, &c) in cur.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                for (k, &w) in u.iter().enumerate() {
                    next[i + k] += c * w;
                }
            }
            cur = next;
        }
    }
    (probs, sup)
}

/// General symmetric kernels by repeated exact convolution on a growing box.
fn generic_probabilities(k: &Kernel, points: &[Vec<i64>], n_max: usize) -> Result<(Vec<Vec<f64>>, f64)> {
    let d = k.d;
    let orbits = crate::lattice::MultisetIndex::new(n_max * k.l + 1, d).count();
    if orbits > 5_000_000 {
        return Err(Error::InvalidParameter(format!("series box with {orbits} orbits is too large")));
    }
    let mut cur = LatticeFunction::delta(d);
    let mut probs = vec![Vec::with_capacity(n_max + 1); points.len()];
    for n in 0..=n_max {
        for (p, x) in probs.iter_mut().zip(points) {
            p.push(cur.get(x));
        }
        if n < n_max {
            cur = convolve_truncated(&cur, k.values(), (n + 1) * k.l).0;
        }
    }
    Ok((probs, cur.sup_abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel, Profile};

    #[test]
    fn zero_mu_is_delta() {
        let pts = vec![vec![0, 0, 0], vec![1, 0, 0]];
        let r = series_green(SeriesWalk::NearestNeighbour(3), 0.0, &pts, 10, Tail::Geometric).unwrap();
        assert_eq!(r.values, vec![1.0, 0.0]);
    }

    #[test]
    fn neighbour_at_half() {
        let pts = vec![vec![1, 0, 0]];
        let r = series_green(SeriesWalk::NearestNeighbour(3), 0.5, &pts, 40, Tail::Geometric).unwrap();
        assert!(r.estimated_error[0] < 1e-12);
        assert!(r.values[0] > 0.5 / 6.0);
        let k = Kernel::nearest_neighbour(3);
        let g = series_green(SeriesWalk::Kernel(&k), 0.5, &pts, 40, Tail::Geometric).unwrap();
        assert!((g.values[0] - r.values[0]).abs() < 1e-15);
    }

    #[test]
    fn geometric_tail_rejects_critical() {
        let r = series_green(SeriesWalk::NearestNeighbour(3), 1.0, &[vec![0, 0, 0]], 10, Tail::Geometric);
        assert!(matches!(r, Err(Error::TailUnbounded(_))));
    }

    #[test]
    fn product_and_generic_paths_agree() {
        let k = build_kernel(&Profile::uniform(2), 1, 2).unwrap();
        let pts = vec![vec![0, 0], vec![2, 1], vec![3, 3]];
        let a = product_probabilities(k.factor().unwrap(), 1, &pts, 12).0;
        let b = generic_probabilities(&k, &pts, 12).unwrap().0;
        for (p, q) in a.iter().zip(&b) {
            for (x, y) in p.iter().zip(q) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }
}
