//! Continuous relaxation of the maximal-leakage design, solved with an
//! augmented Lagrangian outer loop and projected gradient ascent inside.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{solve_partition_subproblem, DesignResult, ExactOptions, SolverStats};
use crate::model::{expected_kl_objective, random_pmf, stream_rng, Channel, SignalModel};
use crate::privacy::{max_blocks, Partition};

const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothParams {
    /// arctan sharpness.
    pub k: f64,
    /// L1 smoothing constant.
    pub tau: f64,
    pub rho0: f64,
    pub rho_growth: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// First trial step of each backtracking search.
    pub initial_step: f64,
    /// Inner loop stops once a step improves the Lagrangian by less than this.
    pub tolerance: f64,
    /// Output alphabet; `None` means `|Y| = |X|`.
    pub out_size: Option<usize>,
}

impl Default for SmoothParams {
    fn default() -> Self {
        SmoothParams {
            k: 1000.0,
            tau: 1e-6,
            rho0: 1.0,
            rho_growth: 10.0,
            outer_iters: 8,
            inner_iters: 500,
            initial_step: 0.1,
            tolerance: 1e-12,
            out_size: None,
        }
    }
}

impl SmoothParams {
    fn validate(&self) -> Result<()> {
        let ok = self.k > 0.0
            && self.tau > 0.0
            && self.rho0 > 0.0
            && self.rho_growth > 1.0
            && self.initial_step > 0.0
            && self.tolerance >= 0.0;
        if !ok {
            return Err(Error::InvalidArgument(
                "smooth parameters need k, tau, rho0, initial_step > 0 and rho_growth > 1".into(),
            ));
        }
        Ok(())
    }
}

fn images(model: &SignalModel, out: usize, t: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let inp = model.alphabet_size();
    let apply = |p: &[f64]| -> Vec<f64> {
        (0..out).map(|y| (0..inp).map(|x| t[y * inp + x] * p[x]).sum()).collect()
    };
    let a = model.post().iter().map(|g| apply(g.probs())).collect();
    (a, apply(model.pre().probs()))
}

/// Expected KL objective of the row-major matrix `t` (floored logs) and its
/// gradient `Σ_i p_i [g_i(x)(log(a_iy/b_y) + 1) - a_iy f(x)/b_y]`.
pub fn objective_and_gradient(model: &SignalModel, out: usize, t: &[f64]) -> (f64, Vec<f64>) {
    let inp = model.alphabet_size();
    let (a, b) = images(model, out, t);
    let f = model.pre().probs();
    let mut value = 0.0;
    let mut grad = vec![0.0; out * inp];
    for ((ai, g), &p) in a.iter().zip(model.post()).zip(model.prior().probs()) {
        if p == 0.0 {
            continue;
        }
        for y in 0..out {
            let (ay, by) = (ai[y].max(LOG_FLOOR), b[y].max(LOG_FLOOR));
            let log_ratio = (ay / by).ln();
            value += p * ai[y] * log_ratio;
            let ratio = ay / by;
            for x in 0..inp {
                grad[y * inp + x] += p * (g.probs()[x] * (log_ratio + 1.0) - ratio * f[x]);
            }
        }
    }
    (value, grad)
}

fn arctan_gate(k: f64, l: f64) -> (f64, f64) {
    (0.5 + (k * l).atan() / PI, k / (PI * (1.0 + k * k * l * l)))
}

/// Smoothed count of distinct images and its gradient.
pub fn smoothed_count_and_gradient(model: &SignalModel, out: usize, t: &[f64], k: f64, tau: f64) -> (f64, Vec<f64>) {
    let inp = model.alphabet_size();
    let (a, _) = images(model, out, t);
    let g: Vec<&[f64]> = model.post().iter().map(|p| p.probs()).collect();
    let mut value = 1.0;
    let mut grad = vec![0.0; out * inp];
    for i in 1..a.len() {
        // gates[j] = (h(ℓ_ij), h'(ℓ_ij), ∂ℓ_ij/∂(T g_i - T g_j)_y)
        let gates: Vec<(f64, f64, Vec<f64>)> = (0..i)
            .map(|j| {
                let mut l = 0.0;
                let dl: Vec<f64> = (0..out)
                    .map(|y| {
                        let d = a[i][y] - a[j][y];
                        let r = (d * d + tau * tau).sqrt();
                        l += r - tau;
                        d / r
                    })
                    .collect();
                let (h, dh) = arctan_gate(k, l);
                (h, dh, dl)
            })
            .collect();
        let term: f64 = gates.iter().map(|g| g.0).product();
        value += term;
        for (j, (h, dh, dl)) in gates.iter().enumerate() {
            let coef = term / h * dh;
            for y in 0..out {
                let c = coef * dl[y];
                if c != 0.0 {
                    for x in 0..inp {
                        grad[y * inp + x] += c * (g[i][x] - g[j][x]);
                    }
                }
            }
        }
    }
    (value, grad)
}

/// `1 + Σ_{i>=2} Π_{j<i} (1/2 + arctan(k ℓ(T g_i, T g_j)) / π)` with the
/// τ-smoothed L1 distance `ℓ = Σ_y sqrt(Δ_y² + τ²) - τ`.
pub fn smoothed_distinct_count(t: &Channel, model: &SignalModel, k: f64, tau: f64) -> Result<f64> {
    if t.in_size() != model.alphabet_size() {
        return Err(Error::DimensionMismatch("channel and model alphabets differ".into()));
    }
    if !(k > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidArgument("k and tau must be positive".into()));
    }
    Ok(smoothed_count_and_gradient(model, t.out_size(), t.entries(), k, tau).0)
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        acc += uj;
        let t = (acc - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn project_columns(out: usize, inp: usize, t: &mut [f64]) {
    for x in 0..inp {
        let col: Vec<f64> = (0..out).map(|y| t[y * inp + x]).collect();
        for (y, v) in project_to_simplex(&col).into_iter().enumerate() {
            t[y * inp + x] = v;
        }
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub restart: usize,
    pub outer: usize,
    pub objective: f64,
    pub smoothed_count: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuglagOutput {
    pub result: DesignResult,
    pub trace: Vec<TraceRow>,
}

struct Lagrangian<'a> {
    model: &'a SignalModel,
    out: usize,
    params: &'a SmoothParams,
    m: f64,
    lambda: f64,
    rho: f64,
}

impl Lagrangian<'_> {
    fn value(&self, t: &[f64]) -> f64 {
        let (j, _) = objective_and_gradient(self.model, self.out, t);
        let (s, _) = smoothed_count_and_gradient(self.model, self.out, t, self.params.k, self.params.tau);
        let shifted = (self.lambda + self.rho * (s - self.m)).max(0.0);
        j - (shifted * shifted - self.lambda * self.lambda) / (2.0 * self.rho)
    }

    fn gradient(&self, t: &[f64]) -> Vec<f64> {
        let (_, gj) = objective_and_gradient(self.model, self.out, t);
        let (s, gs) = smoothed_count_and_gradient(self.model, self.out, t, self.params.k, self.params.tau);
        let shifted = (self.lambda + self.rho * (s - self.m)).max(0.0);
        gj.iter().zip(&gs).map(|(a, b)| a - shifted * b).collect()
    }
}

fn initial_channel(model: &SignalModel, out: usize, restart: usize, seed: u64) -> Vec<f64> {
    let inp = model.alphabet_size();
    let mut t = vec![0.0; out * inp];
    if restart == 0 {
        for x in 0..inp {
            t[x.min(out - 1) * inp + x] = 1.0;
        }
    } else {
        let mut rng = stream_rng(seed, restart as u64);
        for x in 0..inp {
            for (y, p) in random_pmf(&mut rng, out).probs().iter().enumerate() {
                t[y * inp + x] = *p;
            }
        }
    }
    t
}

fn run_restart(
    model: &SignalModel,
    out: usize,
    m: usize,
    params: &SmoothParams,
    restart: usize,
    seed: u64,
) -> (Vec<f64>, Vec<TraceRow>) {
    let inp = model.alphabet_size();
    let mut t = initial_channel(model, out, restart, seed);
    let mut lag = Lagrangian { model, out, params, m: m as f64, lambda: 0.0, rho: params.rho0 };
    let mut trace = Vec::with_capacity(params.outer_iters);
    for outer in 0..params.outer_iters {
        let mut current = lag.value(&t);
        for _ in 0..params.inner_iters {
            let grad = lag.gradient(&t);
            let mut step = params.initial_step;
            let mut accepted = None;
            for _ in 0..50 {
                let mut cand: Vec<f64> = t.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
                project_columns(out, inp, &mut cand);
                let v = lag.value(&cand);
                if v > current {
                    accepted = Some((cand, v));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((cand, v)) => {
                    let gain = v - current;
                    t = cand;
                    current = v;
                    if gain < params.tolerance {
                        break;
                    }
                }
                None => break,
            }
        }
        let (obj, _) = objective_and_gradient(model, out, &t);
        let (s, _) = smoothed_count_and_gradient(model, out, &t, params.k, params.tau);
        let c = s - m as f64;
        trace.push(TraceRow { restart, outer, objective: obj, smoothed_count: s, violation: c.max(0.0) });
        lag.lambda = (lag.lambda + lag.rho * c).max(0.0);
        lag.rho *= params.rho_growth;
    }
    (t, trace)
}

/// Groups images closer than `threshold` in L1, then merges the closest
/// groups (single linkage) until at most `m` remain.
fn merge_groups(images: &[Vec<f64>], threshold: f64, m: usize) -> Partition {
    let n = images.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = images[i].iter().zip(&images[j]).map(|(a, b)| (a - b).abs()).sum();
            pairs.push((d, i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut groups = n;
    for (d, i, j) in pairs {
        if d > threshold && groups <= m {
            break;
        }
        let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
            groups -= 1;
        }
    }
    let labels: Vec<usize> = (0..n).map(|i| root(&mut parent, i)).collect();
    Partition::from_labels(&labels)
}

struct Rounded {
    channel: Channel,
    value: f64,
    partition: Partition,
    families: u64,
}

/// Merge-rounds a continuous iterate, then polishes it with the exact
/// subproblem for the rounded grouping. Falls back to the iterate itself
/// when the polish is refused by a size guard.
fn round(model: &SignalModel, out: usize, m: usize, params: &SmoothParams, t: &[f64]) -> Result<Rounded> {
    let (imgs, _) = images(model, out, t);
    let part = merge_groups(&imgs, 10.0 * params.tau, m);
    let opts = ExactOptions { out_size: Some(out), ..ExactOptions::default() };
    match solve_partition_subproblem(model, &part, &opts) {
        Ok(r) => Ok(Rounded { channel: r.channel, value: r.value, partition: part, families: r.solver_stats.vertices }),
        Err(Error::Refused(_)) => {
            let channel = Channel::from_computed(out, model.alphabet_size(), t.to_vec());
            let induced = Partition::induced_by_channel(model, &channel)?;
            if induced.num_blocks() > m {
                return Err(Error::NoFeasibleRounding {
                    blocks: induced.num_blocks(),
                    max_blocks: m,
                    best_infeasible: Box::new(channel),
                });
            }
            let value = expected_kl_objective(&channel, model)?;
            Ok(Rounded { channel, value, partition: induced, families: 0 })
        }
        Err(e) => Err(e),
    }
}

/// Best rounded channel over `restarts` runs (identity start, then
/// Dirichlet starts), plus the convergence trace of every run.
pub fn auglag_design_ml(
    model: &SignalModel,
    epsilon: f64,
    params: &SmoothParams,
    restarts: usize,
    seed: u64,
) -> Result<AuglagOutput> {
    let start = Instant::now();
    params.validate()?;
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("leakage budget {epsilon} must be >= 0")));
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("at least one restart is required".into()));
    }
    let out = params.out_size.unwrap_or(model.alphabet_size());
    if out == 0 || out > model.alphabet_size() {
        return Err(Error::InvalidArgument(format!("output alphabet {out} out of range")));
    }
    let m = max_blocks(epsilon).min(model.num_post());

    let runs: Vec<(Result<Rounded>, Vec<TraceRow>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let (t, trace) = run_restart(model, out, m, params, r, seed);
            (round(model, out, m, params, &t), trace)
        })
        .collect();

    let mut best: Option<Rounded> = None;
    let mut last_err = None;
    let mut trace = Vec::new();
    let mut families = 0;
    for (res, tr) in runs {
        trace.extend(tr);
        match res {
            Ok(r) => {
                families += r.families;
                if best.as_ref().is_none_or(|b| r.value > b.value) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let best = match (best, last_err) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("restarts >= 1"),
    };
    let induced = Partition::induced_by_channel(model, &best.channel)?;
    if induced.num_blocks() > m {
        return Err(Error::NoFeasibleRounding {
            blocks: induced.num_blocks(),
            max_blocks: m,
            best_infeasible: Box::new(best.channel),
        });
    }
    Ok(AuglagOutput {
        result: DesignResult {
            channel: best.channel,
            value: best.value,
            partition: best.partition,
            solver_stats: SolverStats {
                method: "auglag".into(),
                partitions: restarts as u64,
                vertices: families,
                truncated: false,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            },
        },
        trace,
    })
}
