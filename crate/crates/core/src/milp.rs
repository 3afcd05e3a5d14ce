//! Sequential-hypothesis-testing privacy under the restricted sanitization
//! model: a mixture over a finite channel set, designed by a mixed-integer
//! linear program solved with branch and bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{simplex_solve, LinearProgram, LpStatus, Relation};
use crate::model::{expected_kl_objective, Channel, Pmf, SignalModel};
use crate::privacy::{mixture_k_metrics, pairwise_kl, validate_sets};

/// Stand-in for an infinite divergence in constraint and objective rows.
pub const KL_CLAMP: f64 = 1e6;
pub const DEFAULT_NODE_LIMIT: usize = 100_000;
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Largest `out^in` accepted by [`deterministic_channel_set`].
pub const MAX_CHANNEL_SET: usize = 10_000;
const METRIC_TOL: f64 = 1e-7;

/// Channels drawn i.i.d. with weights `φ`; the index of the drawn channel is
/// released with the symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMixture {
    channels: Vec<Channel>,
    weights: Pmf,
}

impl ChannelMixture {
    pub fn new(channels: Vec<Channel>, weights: Pmf) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty channel set".into()))?;
        if weights.alphabet_size() != channels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} channels",
                weights.alphabet_size(),
                channels.len()
            )));
        }
        if channels
            .iter()
            .any(|c| c.in_size() != first.in_size() || c.out_size() != first.out_size())
        {
            return Err(Error::DimensionMismatch("channels in a mixture must share their sizes".into()));
        }
        Ok(ChannelMixture { channels, weights })
    }

    pub fn single(channel: Channel) -> Self {
        ChannelMixture { channels: vec![channel], weights: Pmf::uniform(1) }
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn weights(&self) -> &Pmf {
        &self.weights
    }

    /// `Σ_c φ(c) E[KL(T_c g_I || T_c f)]`.
    pub fn objective(&self, model: &SignalModel) -> Result<f64> {
        let mut total = 0.0;
        for (w, c) in self.weights.probs().iter().zip(&self.channels) {
            if *w > 0.0 {
                total += w * expected_kl_objective(c, model)?;
            }
        }
        Ok(total)
    }
}

/// Every deterministic channel from `in_size` to `out_size` symbols, ordered
/// lexicographically by `(y(0), y(1), ..)`.
pub fn deterministic_channel_set(in_size: usize, out_size: usize) -> Result<Vec<Channel>> {
    if in_size == 0 || out_size == 0 || out_size > in_size {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= out_size <= in_size, got in = {in_size}, out = {out_size}"
        )));
    }
    let count = (out_size as f64).powi(in_size as i32);
    if count > MAX_CHANNEL_SET as f64 {
        return Err(Error::Refused(format!(
            "{count} deterministic channels exceed the guard of {MAX_CHANNEL_SET}"
        )));
    }
    let mut map = vec![0usize; in_size];
    let mut out = Vec::with_capacity(count as usize);
    loop {
        out.push(Channel::deterministic(out_size, &map)?);
        // odometer, last input symbol fastest
        let mut k = in_size;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            map[k] += 1;
            if map[k] < out_size {
                break;
            }
            map[k] = 0;
        }
    }
}

/// One sensor's model and candidate channel set.
#[derive(Debug, Clone, Copy)]
pub struct SensorChannels<'a> {
    pub model: &'a SignalModel,
    pub channels: &'a [Channel],
}

/// The mixed-integer program for the private set `I1` and public set `I2`.
///
/// Variables, in order: `φ_k(c)` for every sensor and channel, `ξ(i)` for
/// `i ∈ I1`, then `δ(j, i)` for every ordered pair of `I1` (binary).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MilpProblem {
    pub lp: LinearProgram,
    pub big_m: f64,
    pub private: Vec<usize>,
    pub public: Vec<usize>,
    pub eps1: f64,
    pub eps2: f64,
    /// First φ variable of each sensor, plus the total φ count at the end.
    pub phi_offsets: Vec<usize>,
    pub xi_offset: usize,
    pub delta_offset: usize,
    pub names: Vec<String>,
}

impl MilpProblem {
    pub fn num_sensors(&self) -> usize {
        self.phi_offsets.len() - 1
    }

    pub fn num_binaries(&self) -> usize {
        self.private.len() * self.private.len()
    }

    /// Variable index of `δ(j, i)` for positions `a = pos(i)`, `b = pos(j)` in `I1`.
    pub fn delta_index(&self, a: usize, b: usize) -> usize {
        self.delta_offset + a * self.private.len() + b
    }

    pub fn binaries(&self) -> std::ops::Range<usize> {
        self.delta_offset..self.delta_offset + self.num_binaries()
    }

    /// Human-readable LP-format export.
    pub fn to_lp_format(&self) -> String {
        let term_list = |coeffs: &[f64]| -> String {
            let mut s = String::new();
            for (v, &a) in coeffs.iter().enumerate() {
                if a != 0.0 {
                    let sign = if a < 0.0 { "-" } else if s.is_empty() { "" } else { "+" };
                    let _ = write!(s, "{}{sign} {} {}", if s.is_empty() { "" } else { " " }, a.abs(), self.names[v]);
                }
            }
            if s.is_empty() {
                s.push('0');
            }
            s
        };
        let mut out = String::from("Maximize\n obj: ");
        out += &term_list(&self.lp.objective);
        out += "\nSubject To\n";
        for (r, c) in self.lp.constraints.iter().enumerate() {
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            let _ = writeln!(out, " c{r}: {} {rel} {}", term_list(&c.coeffs), c.rhs);
        }
        out += "Bounds\n";
        for v in self.binaries() {
            let _ = writeln!(out, " 0 <= {} <= 1", self.names[v]);
        }
        out += "Binaries\n";
        for v in self.binaries() {
            let _ = writeln!(out, " {}", self.names[v]);
        }
        out += "End\n";
        out
    }
}

fn finite_or_clamp(v: f64) -> f64 {
    if v.is_finite() { v.min(KL_CLAMP) } else { KL_CLAMP }
}

/// Builds the MILP. Every sensor carries its own normalization
/// `Σ_c φ_k(c) = 1`; pairwise constraint families skip `j = i`.
pub fn build_milp_sht(
    sensors: &[SensorChannels<'_>],
    private: &[usize],
    public: &[usize],
    eps1: f64,
    eps2: f64,
) -> Result<MilpProblem> {
    let first = sensors
        .first()
        .ok_or_else(|| Error::InvalidArgument("no sensors".into()))?;
    let num_post = first.model.num_post();
    validate_sets(private, public, num_post)?;
    if !(eps1 >= 0.0 && eps1.is_finite() && eps2 > 0.0 && eps2.is_finite()) {
        return Err(Error::InvalidArgument(format!("need eps1 >= 0 and eps2 > 0, got {eps1}, {eps2}")));
    }
    for s in sensors {
        if s.model.num_post() != num_post {
            return Err(Error::DimensionMismatch("sensors disagree on |G|".into()));
        }
        if s.channels.is_empty() {
            return Err(Error::InvalidArgument("empty channel set".into()));
        }
        if s.channels.iter().any(|c| c.in_size() != s.model.alphabet_size()) {
            return Err(Error::DimensionMismatch("channel input size differs from the model alphabet".into()));
        }
    }

    // Per sensor and channel: objective coefficient and the pairwise KL table.
    let tables: Vec<Vec<(f64, Vec<Vec<f64>>)>> = sensors
        .iter()
        .map(|s| {
            s.channels
                .par_iter()
                .map(|c| {
                    let obj = finite_or_clamp(expected_kl_objective(c, s.model)?);
                    let kl = pairwise_kl(&s.model.images(c)?)
                        .into_iter()
                        .map(|r| r.into_iter().map(finite_or_clamp).collect())
                        .collect();
                    Ok((obj, kl))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let n1 = private.len();
    let mut phi_offsets = vec![0usize];
    for s in sensors {
        phi_offsets.push(phi_offsets.last().unwrap() + s.channels.len());
    }
    let num_phi = *phi_offsets.last().unwrap();
    let xi_offset = num_phi;
    let delta_offset = xi_offset + n1;
    let num_vars = delta_offset + n1 * n1;

    let mut names = Vec::with_capacity(num_vars);
    for (k, s) in sensors.iter().enumerate() {
        for c in 0..s.channels.len() {
            names.push(format!("phi_{k}_{c}"));
        }
    }
    for &i in private {
        names.push(format!("xi_{i}"));
    }
    for &i in private {
        for &j in private {
            names.push(format!("delta_{j}_{i}"));
        }
    }

    // M bounds every mixture divergence: Σ_k max_c max_{i,j ∈ I1} KL.
    let big_m: f64 = tables
        .iter()
        .map(|per_c| {
            per_c
                .iter()
                .flat_map(|(_, kl)| private.iter().flat_map(move |&i| private.iter().map(move |&j| kl[i][j])))
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        .max(1.0);

    let mixture_row = |i: usize, j: usize| -> Vec<f64> {
        let mut row = vec![0.0; num_vars];
        for (k, per_c) in tables.iter().enumerate() {
            for (c, (_, kl)) in per_c.iter().enumerate() {
                row[phi_offsets[k] + c] = kl[i][j];
            }
        }
        row
    };

    let mut lp = LinearProgram::new(num_vars);
    for (k, per_c) in tables.iter().enumerate() {
        for (c, (obj, _)) in per_c.iter().enumerate() {
            lp.objective[phi_offsets[k] + c] = *obj;
        }
    }
    for k in 0..sensors.len() {
        let mut row = vec![0.0; num_vars];
        for v in &mut row[phi_offsets[k]..phi_offsets[k + 1]] {
            *v = 1.0;
        }
        lp.add(row, Relation::Eq, 1.0);
    }
    for &i in public {
        for j in (0..num_post).filter(|&j| j != i && (private.contains(&j) || public.contains(&j))) {
            lp.add(mixture_row(i, j), Relation::Ge, eps2);
        }
    }
    for (a, &i) in private.iter().enumerate() {
        let mut row = vec![0.0; num_vars];
        row[xi_offset + a] = 1.0;
        lp.add(row, Relation::Le, eps1);

        let mut row = vec![0.0; num_vars];
        for b in 0..n1 {
            row[delta_offset + a * n1 + b] = 1.0;
        }
        lp.add(row, Relation::Eq, 1.0);

        let mut row = vec![0.0; num_vars];
        row[delta_offset + a * n1 + a] = 1.0;
        lp.add(row, Relation::Le, 0.0);

        for (b, &j) in private.iter().enumerate() {
            if j == i {
                continue;
            }
            // ξ(i) <= mixKL(i, j)
            let mut row = mixture_row(i, j);
            row[xi_offset + a] = -1.0;
            lp.add(row.clone(), Relation::Ge, 0.0);
            // mixKL(i, j) <= ξ(i) + M (1 - δ(j, i))
            row[delta_offset + a * n1 + b] = big_m;
            lp.add(row, Relation::Le, big_m);
        }
    }
    for d in delta_offset..num_vars {
        let mut row = vec![0.0; num_vars];
        row[d] = 1.0;
        lp.add(row, Relation::Le, 1.0);
    }

    Ok(MilpProblem {
        lp,
        big_m,
        private: private.to_vec(),
        public: public.to_vec(),
        eps1,
        eps2,
        phi_offsets,
        xi_offset,
        delta_offset,
        names,
    })
}

/// Optimal mixture(s) with the MILP certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    /// One weight vector per sensor.
    pub phi: Vec<Pmf>,
    pub value: f64,
    pub xi: Vec<f64>,
    pub delta: Vec<f64>,
    pub nodes: u64,
    /// Mixture metrics recomputed from `phi`.
    pub k1: f64,
    pub k2: f64,
}

impl MilpSolution {
    pub fn mixtures(&self, sensors: &[SensorChannels<'_>]) -> Result<Vec<ChannelMixture>> {
        sensors
            .iter()
            .zip(&self.phi)
            .map(|(s, w)| ChannelMixture::new(s.channels.to_vec(), w.clone()))
            .collect()
    }
}

#[derive(Debug)]
struct Node {
    bound: f64,
    order: u64,
    fixings: Vec<(usize, bool)>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // Max-heap: highest bound first, then oldest node.
    fn cmp(&self, o: &Self) -> Ordering {
        self.bound.total_cmp(&o.bound).then(o.order.cmp(&self.order))
    }
}

/// Best-bound branch and bound over the binary `δ` variables, branching on
/// the most fractional one (lowest index on ties). The returned weights are
/// re-checked with [`mixture_k_metrics`].
pub fn branch_and_bound(
    milp: &MilpProblem,
    sensors: &[SensorChannels<'_>],
    node_limit: usize,
) -> Result<MilpSolution> {
    if sensors.len() != milp.num_sensors() {
        return Err(Error::DimensionMismatch("sensor count differs from the MILP".into()));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::INFINITY, order: 0, fixings: Vec::new() });
    let mut counter = 1u64;
    let mut nodes = 0u64;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;

    while let Some(node) = heap.pop() {
        if incumbent.as_ref().is_some_and(|(v, _)| node.bound <= *v + 1e-12) {
            continue;
        }
        if nodes as usize >= node_limit {
            return Err(Error::NodeLimit { limit: node_limit, incumbent: incumbent.map(|(v, _)| v) });
        }
        nodes += 1;
        let mut lp = milp.lp.clone();
        for &(v, up) in &node.fixings {
            let mut row = vec![0.0; lp.num_vars()];
            row[v] = 1.0;
            lp.add(row, Relation::Eq, if up { 1.0 } else { 0.0 });
        }
        let sol = simplex_solve(&lp)?;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(Error::Numerical("MILP relaxation is unbounded".into())),
            LpStatus::Optimal => {}
        }
        if incumbent.as_ref().is_some_and(|(v, _)| sol.objective <= *v + 1e-12) {
            continue;
        }
        let branch = milp
            .binaries()
            .map(|v| (v, (sol.x[v] - sol.x[v].round()).abs()))
            .filter(|&(_, frac)| frac > INTEGRALITY_TOL)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match branch {
            None => incumbent = Some((sol.objective, sol.x)),
            Some((v, _)) => {
                for up in [false, true] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((v, up));
                    heap.push(Node { bound: sol.objective, order: counter, fixings });
                    counter += 1;
                }
            }
        }
    }

    let (value, x) = incumbent.ok_or_else(|| {
        Error::Infeasible(format!(
            "no mixture satisfies K1 <= {} and K2 >= {}",
            milp.eps1, milp.eps2
        ))
    })?;
    let phi: Vec<Pmf> = (0..milp.num_sensors())
        .map(|k| {
            let w = &x[milp.phi_offsets[k]..milp.phi_offsets[k + 1]];
            let s: f64 = w.iter().map(|v| v.max(0.0)).sum();
            Pmf::from_computed(w.iter().map(|v| v.max(0.0) / s).collect())
        })
        .collect();
    let mixtures: Vec<ChannelMixture> = sensors
        .iter()
        .zip(&phi)
        .map(|(s, w)| ChannelMixture::new(s.channels.to_vec(), w.clone()))
        .collect::<Result<_>>()?;
    let pairs: Vec<(&SignalModel, &ChannelMixture)> = sensors.iter().map(|s| s.model).zip(&mixtures).collect();
    let (k1, k2) = mixture_k_metrics(&pairs, &milp.private, &milp.public)?;
    if k1 > milp.eps1 + METRIC_TOL || k2 < milp.eps2 - METRIC_TOL {
        return Err(Error::Numerical(format!(
            "MILP solution fails the metric check: K1 = {k1} (budget {}), K2 = {k2} (target {})",
            milp.eps1, milp.eps2
        )));
    }
    Ok(MilpSolution {
        phi,
        value,
        xi: x[milp.xi_offset..milp.delta_offset].to_vec(),
        delta: x[milp.delta_offset..].iter().map(|v| v.round()).collect(),
        nodes,
        k1,
        k2,
    })
}

/// Builds and solves the single-sensor design.
pub fn design_sht_milp(
    model: &SignalModel,
    channels: &[Channel],
    private: &[usize],
    public: &[usize],
    eps1: f64,
    eps2: f64,
) -> Result<(ChannelMixture, MilpSolution)> {
    let sensors = [SensorChannels { model, channels }];
    let milp = build_milp_sht(&sensors, private, public, eps1, eps2)?;
    let sol = branch_and_bound(&milp, &sensors, DEFAULT_NODE_LIMIT)?;
    let mix = ChannelMixture::new(channels.to_vec(), sol.phi[0].clone())?;
    Ok((mix, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_instance;

    #[test]
    fn channel_set_sizes_and_order() {
        assert_eq!(deterministic_channel_set(2, 2).unwrap().len(), 4);
        assert_eq!(deterministic_channel_set(4, 4).unwrap().len(), 256);
        assert_eq!(deterministic_channel_set(3, 2).unwrap().len(), 8);
        let set = deterministic_channel_set(2, 2).unwrap();
        assert_eq!(set[1], Channel::deterministic(2, &[0, 1]).unwrap());
        assert!(matches!(deterministic_channel_set(7, 7), Err(Error::Refused(_))));
    }

    #[test]
    fn four_binaries_for_two_private() {
        let m = random_instance(3, 3, 5).unwrap();
        let set = deterministic_channel_set(3, 3).unwrap();
        let s = [SensorChannels { model: &m, channels: &set }];
        let milp = build_milp_sht(&s, &[0, 1], &[2], 0.1, 0.01).unwrap();
        assert_eq!(milp.num_binaries(), 4);
        assert!(milp.lp.constraints.iter().all(|c| c.coeffs.iter().all(|a| a.is_finite())));
        assert!(build_milp_sht(&s, &[0], &[2], 0.1, 0.01).is_err());
        let text = milp.to_lp_format();
        assert!(text.contains("delta_1_0") && text.starts_with("Maximize"));
    }

    #[test]
    fn single_channel_is_the_unique_point() {
        let m = random_instance(3, 3, 2).unwrap();
        let set = vec![Channel::identity(3)];
        let (mix, sol) = design_sht_milp(&m, &set, &[0, 1], &[2], 10.0, 1e-6).unwrap();
        assert_eq!(mix.weights().probs(), &[1.0]);
        assert!((sol.value - m.unsanitized_objective()).abs() < 1e-9);
    }

    #[test]
    fn unreachable_eps2_is_infeasible() {
        let m = random_instance(3, 3, 2).unwrap();
        let set = deterministic_channel_set(3, 2).unwrap();
        let r = design_sht_milp(&m, &set, &[0, 1], &[2], 10.0, 1e3);
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }
}
