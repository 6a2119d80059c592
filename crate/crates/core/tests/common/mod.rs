//! Oracles and generators shared by the integration suites. Nothing here
//! calls into the code paths it is used to check.

#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wcf_core::transport::SimplexVector;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_simplex(rng: &mut ChaCha8Rng, len: usize) -> SimplexVector {
    SimplexVector::new((0..len).map(|_| rng.gen::<f64>() + 1e-3).collect()).unwrap()
}

/// Random sparse preference: at least one positive entry.
pub fn random_sparse_simplex(rng: &mut ChaCha8Rng, len: usize) -> SimplexVector {
    loop {
        let w: Vec<f64> = (0..len)
            .map(|_| if rng.gen_bool(0.5) { rng.gen::<f64>() } else { 0.0 })
            .collect();
        if w.iter().any(|x| *x > 0.0) {
            return SimplexVector::new(w).unwrap();
        }
    }
}

pub fn random_costs(rng: &mut ChaCha8Rng, n: usize, s: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, s, |_, _| rng.gen::<f64>())
}

fn lse(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Lower bound on `W_gamma(p, q) = min <T,M> - gamma h(T)`: the entropic dual
/// objective `<f,p> + <g,q> - gamma sum exp((f_i + g_j - M_ij)/gamma) + gamma`
/// maximized over alternating exact block updates.
pub fn entropic_dual_lower_bound(p: &[f64], q: &[f64], m: &DMatrix<f64>, gamma: f64, sweeps: usize) -> f64 {
    let (n, s) = m.shape();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; s];
    let mut best = f64::NEG_INFINITY;
    for _ in 0..sweeps {
        for i in 0..n {
            f[i] = if p[i] > 0.0 {
                gamma * (p[i].ln() - lse((0..s).map(|j| (g[j] - m[(i, j)]) / gamma)))
            } else {
                f64::NEG_INFINITY
            };
        }
        for j in 0..s {
            g[j] = if q[j] > 0.0 {
                gamma * (q[j].ln() - lse((0..n).map(|i| (f[i] - m[(i, j)]) / gamma)))
            } else {
                f64::NEG_INFINITY
            };
        }
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..s {
                let e = (f[i] + g[j] - m[(i, j)]) / gamma;
                if e > f64::NEG_INFINITY {
                    mass += e.exp();
                }
            }
        }
        let lin: f64 = p.iter().zip(&f).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * y).sum::<f64>()
            + q.iter().zip(&g).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * y).sum::<f64>();
        best = best.max(lin - gamma * mass + gamma);
    }
    best
}

/// Every point of the simplex in `len` dimensions whose coordinates are
/// multiples of `1/steps`.
pub fn simplex_grid(len: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(len: usize, left: usize, steps: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if prefix.len() == len - 1 {
            prefix.push(left);
            out.push(prefix.iter().map(|k| *k as f64 / steps as f64).collect());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(len, left - k, steps, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(len, steps, steps, &mut Vec::new(), &mut out);
    out
}

/// Brute-force metrics straight from their textbook definitions, using exact
/// rational bookkeeping where possible.
pub mod brute {
    use super::*;

    pub fn ap(ranking: &[u64], positives: &BTreeSet<u64>) -> f64 {
        let mut sum = 0.0;
        for r in 1..=ranking.len() {
            if positives.contains(&ranking[r - 1]) {
                let hits_in_prefix = ranking[..r].iter().filter(|i| positives.contains(i)).count();
                sum += hits_in_prefix as f64 / r as f64;
            }
        }
        sum / positives.len() as f64
    }

    pub fn ndcg(ranking: &[u64], positives: &BTreeSet<u64>, scope: usize) -> f64 {
        let dcg = |list: &[bool]| -> f64 {
            list.iter()
                .take(scope)
                .enumerate()
                .map(|(i, rel)| if *rel { 1.0 / ((i + 2) as f64).log2() } else { 0.0 })
                .sum()
        };
        let actual: Vec<bool> = ranking.iter().map(|i| positives.contains(i)).collect();
        let mut ideal = actual.clone();
        ideal.sort_by(|a, b| b.cmp(a));
        dcg(&actual) / dcg(&ideal)
    }

    pub fn recall(ranking: &[u64], positives: &BTreeSet<u64>, scope: usize) -> f64 {
        let top: BTreeSet<u64> = ranking.iter().take(scope).copied().collect();
        top.intersection(positives).count() as f64 / positives.len() as f64
    }

    pub fn permutations(items: &[u64]) -> Vec<Vec<u64>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut tail in permutations(&rest) {
                tail.insert(0, head);
                out.push(tail);
            }
        }
        out
    }
}

/// Value of the feasible plan `diag(p / K1) K` (its column sums are the
/// filtering estimate), which upper-bounds `W_gamma(p, column sums)`.
/// Returns the plan's column sums alongside.
pub fn filtering_plan_value(p: &[f64], m: &DMatrix<f64>, gamma: f64) -> (f64, Vec<f64>) {
    let (n, s) = m.shape();
    let mut cols = vec![0.0; s];
    let mut value = 0.0;
    for i in 0..n {
        let row: Vec<f64> = (0..s).map(|j| (-m[(i, j)] / gamma).exp()).collect();
        let z: f64 = row.iter().sum();
        for j in 0..s {
            let t = p[i] * row[j] / z;
            cols[j] += t;
            if t > 0.0 {
                value += t * m[(i, j)] + gamma * t * (t.ln() - 1.0);
            }
        }
    }
    // h(T) = -sum t (log t - 1) - 1 for a unit-mass plan
    (value + gamma, cols)
}

/// Plain-scaling variant of [`entropic_dual_lower_bound`] for well-scaled
/// kernels; stops as soon as the bound reaches `target`.
pub fn dual_bound_until(p: &[f64], q: &[f64], m: &DMatrix<f64>, gamma: f64, target: f64, max_sweeps: usize) -> f64 {
    let (n, s) = m.shape();
    let k = m.map(|c| (-c / gamma).exp());
    let mut u = vec![1.0; n];
    let mut v: Vec<f64> = q.iter().map(|x| if *x > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..max_sweeps {
        for i in 0..n {
            let kv: f64 = (0..s).map(|j| k[(i, j)] * v[j]).sum();
            u[i] = if p[i] > 0.0 { p[i] / kv } else { 0.0 };
        }
        for j in 0..s {
            let ku: f64 = (0..n).map(|i| k[(i, j)] * u[i]).sum();
            v[j] = if q[j] > 0.0 { q[j] / ku } else { 0.0 };
        }
        let mut bound = gamma;
        for i in 0..n {
            if p[i] > 0.0 {
                bound += gamma * p[i] * u[i].ln();
            }
            for j in 0..s {
                bound -= gamma * u[i] * k[(i, j)] * v[j];
            }
        }
        for j in 0..s {
            if q[j] > 0.0 {
                bound += gamma * q[j] * v[j].ln();
            }
        }
        best = best.max(bound);
        if best >= target {
            break;
        }
    }
    best
}

/// `H*_p(g) = gamma (h(p) + <p, log K e^{g/gamma}>)`, by log-sum-exp.
pub fn conjugate_oracle(p: &[f64], g: &[f64], m: &DMatrix<f64>, gamma: f64) -> f64 {
    let (n, s) = m.shape();
    let mut total = 0.0;
    for i in 0..n {
        if p[i] > 0.0 {
            total += p[i] * (lse((0..s).map(|j| (g[j] - m[(i, j)]) / gamma)) - p[i].ln());
        }
    }
    gamma * total
}

/// Minimizes a convex function of `dims` variables by repeatedly scanning a
/// grid and zooming in on its best point.
pub fn zoom_grid_min(dims: usize, radius: f64, points: usize, rounds: usize, f: impl Fn(&[f64]) -> f64) -> (f64, Vec<f64>) {
    let mut center = vec![0.0; dims];
    let mut half = radius;
    let mut best = (f(&center), center.clone());
    for _ in 0..rounds {
        let step = 2.0 * half / (points - 1) as f64;
        let mut idx = vec![0usize; dims];
        loop {
            let x: Vec<f64> = (0..dims).map(|d| center[d] - half + idx[d] as f64 * step).collect();
            let v = f(&x);
            if v < best.0 {
                best = (v, x);
            }
            let mut d = 0;
            while d < dims {
                idx[d] += 1;
                if idx[d] < points {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == dims {
                break;
            }
        }
        center = best.1.clone();
        half = 2.0 * step;
    }
    best
}
