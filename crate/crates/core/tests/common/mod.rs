//! Reference implementations used as test oracles. They are written from the
//! definitions and share no code with the library.
#![allow(dead_code)]

use privqcd::{Channel, Pmf, SignalModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Σ p log(p/q) with 0 log 0 = 0 and +∞ on support mismatch.
pub fn kl_ref(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            s += a * (a / b).ln();
        }
    }
    s.max(0.0)
}

/// `T p` for `T` given as rows.
pub fn apply_ref(rows: &[Vec<f64>], p: &[f64]) -> Vec<f64> {
    rows.iter().map(|r| r.iter().zip(p).map(|(a, b)| a * b).sum()).collect()
}

pub fn objective_ref(rows: &[Vec<f64>], f: &[f64], g: &[Vec<f64>], prior: &[f64]) -> f64 {
    let tf = apply_ref(rows, f);
    g.iter()
        .zip(prior)
        .map(|(gi, p)| p * kl_ref(&apply_ref(rows, gi), &tf))
        .sum()
}

pub fn model_parts(m: &SignalModel) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    (
        m.pre().probs().to_vec(),
        m.post().iter().map(|p| p.probs().to_vec()).collect(),
        m.prior().probs().to_vec(),
    )
}

pub fn objective_of(ch: &Channel, m: &SignalModel) -> f64 {
    let (f, g, p) = model_parts(m);
    objective_ref(&ch.rows(), &f, &g, &p)
}

/// Uniform point of the simplex from normalized exponentials.
pub fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn random_channel_rows<R: Rng>(rng: &mut R, out: usize, inp: usize) -> Vec<Vec<f64>> {
    let cols: Vec<Vec<f64>> = (0..inp).map(|_| random_simplex(rng, out)).collect();
    (0..out).map(|y| cols.iter().map(|c| c[y]).collect()).collect()
}

pub fn pmf(v: &[f64]) -> Pmf {
    Pmf::new(v.to_vec()).unwrap()
}

/// All 2x2 column-stochastic channels on a grid of `steps` intervals.
pub fn grid_2x2(steps: usize) -> Vec<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for a in 0..=steps {
        for b in 0..=steps {
            let (a, b) = (a as f64 / steps as f64, b as f64 / steps as f64);
            out.push(vec![vec![a, b], vec![1.0 - a, 1.0 - b]]);
        }
    }
    out
}

/// Number of distinct images (L1 tolerance `tol`, greedy grouping).
pub fn distinct_images(images: &[Vec<f64>], tol: f64) -> Vec<usize> {
    let mut reps: Vec<usize> = Vec::new();
    let mut label = Vec::with_capacity(images.len());
    for (i, a) in images.iter().enumerate() {
        let found = reps.iter().position(|&r| {
            images[r].iter().zip(a).map(|(x, y)| (x - y).abs()).sum::<f64>() <= tol
        });
        match found {
            Some(k) => label.push(k),
            None => {
                label.push(reps.len());
                reps.push(i);
            }
        }
    }
    label
}

/// `Σ_c φ(c) KL(T_c g_i || T_c g_j)` over explicit channel rows.
pub fn mixture_kl_ref(channels: &[Vec<Vec<f64>>], phi: &[f64], g: &[Vec<f64>], i: usize, j: usize) -> f64 {
    channels
        .iter()
        .zip(phi)
        .filter(|(_, &w)| w > 0.0)
        .map(|(c, w)| w * kl_ref(&apply_ref(c, &g[i]), &apply_ref(c, &g[j])))
        .sum()
}

/// Points of the probability simplex in `n` coordinates with denominator `d`.
pub fn simplex_grid(n: usize, d: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, d: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / d as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(n, left - k, d, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, d, d, &mut Vec::new(), &mut out);
    out
}
