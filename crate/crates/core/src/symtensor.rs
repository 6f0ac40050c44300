//! Separable contraction of fully symmetric d-tensors.
//!
//! Computes
//!
//! ```text
//! out(X) = sum_{m in [0, n_in)^d} input(sort(m)) * prod_j K[x_j][m_j]
//! ```
//!
//! for sorted outputs `X` over `[0, n_out)`, one axis at a time. Intermediate
//! tensors are indexed by a sorted multiset of contracted output indices and a
//! sorted multiset of remaining input indices, so work and memory scale with
//! the number of orbits rather than with `n^d`.

use rayon::prelude::*;

use crate::lattice::MultisetIndex;

/// Which outputs to produce.
pub enum Demand<'a> {
    /// Every sorted multiset over `[0, n_out)`, returned in rank order.
    All,
    /// The given sorted multisets, returned in the given order.
    List(&'a [Vec<usize>]),
}

struct Level {
    /// For each needed multiset of this size: its largest element.
    last: Vec<u32>,
    /// For each needed multiset: position of the set without its largest element in the previous level.
    parent: Vec<u32>,
}

/// Levels for every multiset; colex rank gives the parent directly.
fn all_levels(d: usize, n_out: usize) -> Vec<Level> {
    let mut out = vec![Level { last: vec![], parent: vec![] }];
    for j in 1..=d {
        let idx = MultisetIndex::new(n_out, j);
        let prev = MultisetIndex::new(n_out, j - 1);
        let mut last = Vec::with_capacity(idx.count());
        let mut parent = Vec::with_capacity(idx.count());
        let mut a = idx.first();
        loop {
            last.push(a[j - 1] as u32);
            parent.push(prev.rank(&a[..j - 1]) as u32);
            if !idx.next(&mut a) {
                break;
            }
        }
        out.push(Level { last, parent });
    }
    out
}

fn list_levels(d: usize, n_out: usize, list: &[Vec<usize>]) -> (Vec<Level>, Vec<usize>) {
    let mut sets: Vec<Vec<usize>> = list.to_vec();
    sets.sort();
    sets.dedup();
    for x in &sets {
        assert_eq!(x.len(), d);
        assert!(x.windows(2).all(|w| w[0] <= w[1]), "demand must be sorted");
        assert!(x.iter().all(|&v| v < n_out));
    }
    let order: Vec<usize> = list.iter().map(|x| sets.binary_search(x).unwrap()).collect();
    let mut out: Vec<Level> = Vec::with_capacity(d + 1);
    for j in (1..=d).rev() {
        let mut prev: Vec<Vec<usize>> = sets.iter().map(|x| x[..j - 1].to_vec()).collect();
        prev.sort();
        prev.dedup();
        let parent = sets.iter().map(|x| prev.binary_search(&x[..j - 1].to_vec()).unwrap() as u32).collect();
        let last = sets.iter().map(|x| x[j - 1] as u32).collect();
        out.push(Level { last, parent });
        sets = prev;
    }
    out.push(Level { last: vec![], parent: vec![] });
    out.reverse();
    (out, order)
}

/// Contract a symmetric tensor; `kernel` is `n_out x n_in`, row-major.
pub fn contract(d: usize, n_in: usize, input: &[f64], n_out: usize, kernel: &[f64], demand: Demand) -> Vec<f64> {
    assert_eq!(kernel.len(), n_out * n_in);
    let full = MultisetIndex::new(n_in, d);
    assert_eq!(input.len(), full.count());
    let (lv, order) = match demand {
        Demand::All => (all_levels(d, n_out), None),
        Demand::List(list) => {
            let (lv, order) = list_levels(d, n_out, list);
            (lv, Some(order))
        }
    };
    let mut kt = vec![0.0; n_in * n_out];
    for v in 0..n_out {
        for m in 0..n_in {
            kt[m * n_out + v] = kernel[v * n_in + m];
        }
    }
    // rows indexed by remaining-input multiset; columns by level-(j-1) sets
    let mut cur: Vec<f64> = input.to_vec();
    let mut cur_cols = 1usize;
    for j in 1..=d {
        let level = &lv[j];
        let cols = level.last.len();
        let rem = MultisetIndex::new(n_in, d - j);
        let up = MultisetIndex::new(n_in, d - j + 1);
        let rows = rem.count();
        let mut next = vec![0.0; rows * cols];
        let rem_sets = rem.all();
        let src = &cur;
        next.par_chunks_mut(cols).zip(rem_sets.par_iter()).for_each(|(out, mset)| {
            let mut buf = Vec::with_capacity(d);
            for m in 0..n_in {
                buf.clear();
                buf.extend_from_slice(mset);
                let pos = buf.partition_point(|&v| v <= m);
                buf.insert(pos, m);
                let row = &src[up.rank(&buf) * cur_cols..][..cur_cols];
                let km = &kt[m * n_out..][..n_out];
                for ((o, &v), &p) in out.iter_mut().zip(&level.last).zip(&level.parent) {
                    *o += km[v as usize] * row[p as usize];
                }
            }
        });
        cur = next;
        cur_cols = cols;
    }
    match order {
        Some(order) => order.iter().map(|&i| cur[i]).collect(),
        None => cur,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(d: usize, n_in: usize, input: &[f64], n_out: usize, k: &[f64], x: &[usize]) -> f64 {
        let idx = MultisetIndex::new(n_in, d);
        let mut s = 0.0;
        let total = n_in.pow(d as u32);
        for lin in 0..total {
            let mut m = vec![0; d];
            let mut t = lin;
            for slot in m.iter_mut() {
                *slot = t % n_in;
                t /= n_in;
            }
            let w: f64 = (0..d).map(|j| k[x[j] * n_in + m[j]]).product();
            let mut s_m = m.clone();
            s_m.sort_unstable();
            s += w * input[idx.rank(&s_m)];
        }
        let _ = n_out;
        s
    }

    #[test]
    fn matches_brute_force() {
        for d in 1..=4 {
            let (n_in, n_out) = (5, 4);
            let idx = MultisetIndex::new(n_in, d);
            let input: Vec<f64> = (0..idx.count()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
            let k: Vec<f64> = (0..n_out * n_in).map(|i| ((i as f64) * 0.37).sin()).collect();
            let all = contract(d, n_in, &input, n_out, &k, Demand::All);
            let outs = MultisetIndex::new(n_out, d).all();
            for (x, v) in outs.iter().zip(&all) {
                let b = brute(d, n_in, &input, n_out, &k, x);
                assert!((b - v).abs() < 1e-10 * (1.0 + b.abs()), "d={d} x={x:?}");
            }
            let pick = vec![outs[outs.len() - 1].clone(), outs[0].clone()];
            let some = contract(d, n_in, &input, n_out, &k, Demand::List(&pick));
            assert!((some[0] - all[all.len() - 1]).abs() < 1e-12);
            assert!((some[1] - all[0]).abs() < 1e-12);
        }
    }
}
