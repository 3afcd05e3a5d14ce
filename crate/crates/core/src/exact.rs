//! Exact maximal-leakage channel design.
//!
//! For a fixed partition of the post-change indices the feasible channels form
//! the polytope
//!
//! ```text
//! P = { T >= 0 : columns of T sum to 1, T (g_i - g_i') = 0 for i, i' in one block }
//! ```
//!
//! and the expected-KL objective is convex in `T`, so its maximum over `P` is
//! attained at a vertex. The merge constraints act on each row of `T`
//! separately: every row lies in the cone `C = { r >= 0 : r·(g_i - g_i') = 0 }`
//! and the rows add up to the all-ones vector. A point of `P` is a vertex
//! exactly when the linear spans of the faces of `C` carrying its nonzero rows
//! are independent; the rows are then the unique decomposition of the
//! all-ones vector over those spans. Vertices are enumerated as such face
//! families, which stays small even for 7x7 channels where enumerating
//! simplex bases would not.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{nullspace, solve_in_span, OrthoBasis};
use crate::model::{expected_kl_objective, Channel, DecentralizedModel, SignalModel};
use crate::partitions::{enumerate_partitions, MAX_ENUMERATION_N};
use crate::privacy::{max_blocks, Partition};

/// Default cap on enumerated vertex families per subproblem.
pub const DEFAULT_VERTEX_CAP: usize = 1_000_000;

/// Largest `|Y|·|X|` the enumerator accepts.
pub const MAX_CHANNEL_ENTRIES: usize = 64;

/// Largest input alphabet: faces are found by scanning all `2^|X|` supports.
pub const MAX_INPUT_ALPHABET: usize = 12;

const FEASIBILITY_TOL: f64 = 1e-9;

/// Channels satisfying a partition's merge constraints.
#[derive(Debug, Clone)]
pub struct MergePolytope {
    in_size: usize,
    out_size: usize,
    pair_constraints: Vec<(usize, usize)>,
    /// `g_i - g_i'` for each constrained pair.
    differences: Vec<Vec<f64>>,
}

impl MergePolytope {
    /// Each block contributes the pairs (first member, other member).
    pub fn new(model: &SignalModel, part: &Partition, out_size: usize) -> Result<Self> {
        if part.len() != model.num_post() {
            return Err(Error::DimensionMismatch(format!(
                "partition of {} indices for {} post-change pmfs",
                part.len(),
                model.num_post()
            )));
        }
        let mut pairs = Vec::new();
        let mut diffs = Vec::new();
        for block in part.blocks() {
            for &other in &block[1..] {
                pairs.push((block[0], other));
                let (a, b) = (model.post()[block[0]].probs(), model.post()[other].probs());
                diffs.push(a.iter().zip(b).map(|(x, y)| x - y).collect());
            }
        }
        Self::build(model.alphabet_size(), out_size, pairs, diffs)
    }

    /// Only column-stochasticity: the product of `|X|` simplices.
    pub fn unconstrained(in_size: usize, out_size: usize) -> Result<Self> {
        Self::build(in_size, out_size, Vec::new(), Vec::new())
    }

    fn build(
        in_size: usize,
        out_size: usize,
        pair_constraints: Vec<(usize, usize)>,
        differences: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if out_size == 0 || out_size > in_size {
            return Err(Error::InvalidArgument(format!(
                "output alphabet {out_size} must be in 1..={in_size}"
            )));
        }
        if in_size * out_size > MAX_CHANNEL_ENTRIES {
            return Err(Error::Refused(format!(
                "{out_size}x{in_size} channel exceeds the {MAX_CHANNEL_ENTRIES}-entry guard"
            )));
        }
        if in_size > MAX_INPUT_ALPHABET {
            return Err(Error::Refused(format!(
                "input alphabet {in_size} exceeds the guard of {MAX_INPUT_ALPHABET}"
            )));
        }
        Ok(MergePolytope { in_size, out_size, pair_constraints, differences })
    }

    pub fn in_size(&self) -> usize {
        self.in_size
    }

    pub fn out_size(&self) -> usize {
        self.out_size
    }

    pub fn pair_constraints(&self) -> &[(usize, usize)] {
        &self.pair_constraints
    }

    /// Equality system `A vec(T) = b` over the row-major entries of `T`
    /// (column sums, then `|Y|` rows per merged pair).
    pub fn equality_system(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.in_size * self.out_size;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for x in 0..self.in_size {
            let mut r = vec![0.0; n];
            for y in 0..self.out_size {
                r[y * self.in_size + x] = 1.0;
            }
            rows.push(r);
            rhs.push(1.0);
        }
        for d in &self.differences {
            for y in 0..self.out_size {
                let mut r = vec![0.0; n];
                r[y * self.in_size..(y + 1) * self.in_size].copy_from_slice(d);
                rows.push(r);
                rhs.push(0.0);
            }
        }
        (rows, rhs)
    }

    /// Whether `t` satisfies the merge constraints within `tol`.
    pub fn contains(&self, t: &Channel, tol: f64) -> bool {
        t.in_size() == self.in_size
            && t.out_size() == self.out_size
            && self.differences.iter().all(|d| {
                (0..self.out_size).all(|y| {
                    t.row(y).iter().zip(d).map(|(a, b)| a * b).sum::<f64>().abs() <= tol
                })
            })
    }

    fn row_faces(&self) -> Vec<Face> {
        let n = self.in_size;
        let full = (1u32 << n) - 1;
        let span_of = |mask: u32| -> Vec<Vec<f64>> {
            let idx: Vec<usize> = (0..n).filter(|x| mask >> x & 1 == 1).collect();
            let rows: Vec<Vec<f64>> = self
                .differences
                .iter()
                .map(|d| idx.iter().map(|&x| d[x]).collect())
                .collect();
            nullspace(&rows, idx.len())
                .into_iter()
                .map(|v| {
                    let mut lifted = vec![0.0; n];
                    for (k, &x) in idx.iter().enumerate() {
                        lifted[x] = v[k];
                    }
                    lifted
                })
                .collect()
        };

        // Extreme rays have a one-dimensional span that is sign-definite on
        // the whole support.
        let mut ray_masks = Vec::new();
        for mask in 1..=full {
            let span = span_of(mask);
            if span.len() != 1 {
                continue;
            }
            let v = &span[0];
            let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let on: Vec<f64> = (0..n).filter(|x| mask >> x & 1 == 1).map(|x| v[x] / scale).collect();
            if on.iter().all(|&x| x > 1e-12) || on.iter().all(|&x| x < -1e-12) {
                ray_masks.push(mask);
            }
        }
        // Face supports are the unions of ray supports.
        let mut reachable = vec![false; full as usize + 1];
        reachable[0] = true;
        for &r in &ray_masks {
            for m in 0..=full {
                if reachable[m as usize] {
                    reachable[(m | r) as usize] = true;
                }
            }
        }
        let mut faces: Vec<Face> = (1..=full)
            .filter(|&m| reachable[m as usize])
            .map(|mask| Face { mask, span: span_of(mask) })
            .collect();
        // Grouping faces by their smallest element lets the search prune a
        // branch as soon as an element can no longer be covered.
        faces.sort_by_key(|f| (f.mask.trailing_zeros(), f.mask));
        faces
    }

    /// Visits every vertex family; stops after `cap` families.
    fn for_each_family(&self, cap: usize, mut visit: impl FnMut(&[Vec<f64>])) -> FamilyWalk {
        let faces = self.row_faces();
        let full = (1u32 << self.in_size) - 1;
        let mut suffix_union = vec![0u32; faces.len() + 1];
        for k in (0..faces.len()).rev() {
            suffix_union[k] = suffix_union[k + 1] | faces[k].mask;
        }
        let mut search = FamilySearch {
            faces: &faces,
            suffix_union: &suffix_union,
            full,
            max_rows: self.out_size,
            ones: vec![1.0; self.in_size],
            chosen: Vec::new(),
            found: 0,
            cap,
            truncated: false,
        };
        search.descend(0, 0, &OrthoBasis::default(), &mut visit);
        FamilyWalk { families: search.found, truncated: search.truncated }
    }
}

#[derive(Debug, Clone)]
struct Face {
    mask: u32,
    span: Vec<Vec<f64>>,
}

struct FamilyWalk {
    families: usize,
    truncated: bool,
}

struct FamilySearch<'a> {
    faces: &'a [Face],
    suffix_union: &'a [u32],
    full: u32,
    max_rows: usize,
    ones: Vec<f64>,
    chosen: Vec<usize>,
    found: usize,
    cap: usize,
    truncated: bool,
}

impl FamilySearch<'_> {
    fn descend(&mut self, start: usize, covered: u32, basis: &OrthoBasis, visit: &mut impl FnMut(&[Vec<f64>])) {
        for k in start..self.faces.len() {
            if self.truncated {
                return;
            }
            // Some element outside `covered` is in no remaining face.
            if (self.full & !covered) & !self.suffix_union[k] != 0 {
                return;
            }
            let face = &self.faces[k];
            let mut next = basis.clone();
            if !face.span.iter().all(|v| next.try_push(v, FEASIBILITY_TOL)) {
                continue;
            }
            self.chosen.push(k);
            let cov = covered | face.mask;
            if cov == self.full {
                if let Some(rows) = self.decompose() {
                    if self.found == self.cap {
                        self.truncated = true;
                        self.chosen.pop();
                        return;
                    }
                    self.found += 1;
                    visit(&rows);
                }
            }
            if self.chosen.len() < self.max_rows {
                self.descend(k + 1, cov, &next, visit);
            }
            self.chosen.pop();
        }
    }

    /// Rows of the vertex carried by the chosen faces, if the all-ones vector
    /// splits into parts strictly positive on each face's support.
    fn decompose(&self) -> Option<Vec<Vec<f64>>> {
        let columns: Vec<Vec<f64>> = self
            .chosen
            .iter()
            .flat_map(|&k| self.faces[k].span.iter().cloned())
            .collect();
        let (coef, resid) = solve_in_span(&columns, &self.ones)?;
        if resid > FEASIBILITY_TOL {
            return None;
        }
        let n = self.ones.len();
        let mut offset = 0;
        let mut rows = Vec::with_capacity(self.chosen.len());
        for &k in &self.chosen {
            let face = &self.faces[k];
            let mut row = vec![0.0; n];
            for v in &face.span {
                for x in 0..n {
                    row[x] += coef[offset] * v[x];
                }
                offset += 1;
            }
            for (x, r) in row.iter_mut().enumerate() {
                if face.mask >> x & 1 == 1 {
                    if *r <= FEASIBILITY_TOL {
                        return None;
                    }
                } else {
                    *r = 0.0;
                }
            }
            rows.push(row);
        }
        Some(rows)
    }
}

/// Channel with the family's rows in ascending lexicographic order, zero rows
/// first: the lexicographically smallest arrangement of the vertex.
fn canonical_channel(rows: &[Vec<f64>], out_size: usize, in_size: usize) -> Channel {
    let mut all: Vec<Vec<f64>> = vec![vec![0.0; in_size]; out_size - rows.len()];
    all.extend(rows.iter().cloned());
    all.sort_by(|a, b| lex_cmp(a, b));
    Channel::from_computed(out_size, in_size, all.into_iter().flatten().collect())
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Result of [`vertex_enumerate`].
#[derive(Debug, Clone)]
pub struct VertexEnumeration {
    pub vertices: Vec<Channel>,
    /// Set when the cap stopped the enumeration early.
    pub truncated: bool,
}

/// Every vertex of the polytope, including all row arrangements, up to `cap`
/// vertices. Distinct families have distinct support patterns, so no two
/// emitted vertices coincide.
pub fn vertex_enumerate(poly: &MergePolytope, cap: usize) -> Result<VertexEnumeration> {
    let (out, inp) = (poly.out_size, poly.in_size);
    let mut vertices = Vec::new();
    let mut truncated = false;
    let walk = poly.for_each_family(usize::MAX, |rows| {
        if truncated {
            return;
        }
        for_each_arrangement(rows.len(), out, |slots| {
            if vertices.len() == cap {
                truncated = true;
                return false;
            }
            let mut entries = vec![0.0; out * inp];
            for (r, &slot) in rows.iter().zip(slots) {
                entries[slot * inp..(slot + 1) * inp].copy_from_slice(r);
            }
            vertices.push(Channel::from_computed(out, inp, entries));
            true
        });
    });
    if walk.families == 0 {
        return Err(Error::Infeasible("merge polytope has no vertex".into()));
    }
    Ok(VertexEnumeration { vertices, truncated })
}

/// Calls `f` with each injective placement of `k` rows into `n` slots, in
/// lexicographic order, until `f` returns false.
fn for_each_arrangement(k: usize, n: usize, mut f: impl FnMut(&[usize]) -> bool) {
    fn rec(k: usize, n: usize, cur: &mut Vec<usize>, used: &mut [bool], f: &mut impl FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for s in 0..n {
            if !used[s] {
                used[s] = true;
                cur.push(s);
                let go = rec(k, n, cur, used, f);
                cur.pop();
                used[s] = false;
                if !go {
                    return false;
                }
            }
        }
        true
    }
    rec(k, n, &mut Vec::with_capacity(k), &mut vec![false; n], &mut f);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub method: String,
    pub partitions: u64,
    /// Vertex families (vertices up to row order) evaluated.
    pub vertices: u64,
    /// True when a cap cut the search short; the result is then approximate.
    pub truncated: bool,
    pub wall_ms: f64,
}

/// A designed channel with its objective value and merge structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub channel: Channel,
    /// `expected_kl_objective(channel, model)`, nats.
    pub value: f64,
    pub partition: Partition,
    pub solver_stats: SolverStats,
}

#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    /// Output alphabet size; `None` means `|Y| = |X|`.
    pub out_size: Option<usize>,
    pub vertex_cap: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions { out_size: None, vertex_cap: DEFAULT_VERTEX_CAP }
    }
}

struct Subproblem {
    channel: Channel,
    value: f64,
    families: usize,
    truncated: bool,
}

fn better(value: f64, channel: &Channel, best: &Option<(f64, Channel)>) -> bool {
    match best {
        None => true,
        Some((bv, bc)) => value > *bv || (value == *bv && lex_cmp(channel.entries(), bc.entries()).is_lt()),
    }
}

fn solve_subproblem(model: &SignalModel, part: &Partition, opts: &ExactOptions) -> Result<Subproblem> {
    let out = opts.out_size.unwrap_or(model.alphabet_size());
    let poly = MergePolytope::new(model, part, out)?;
    let mut best: Option<(f64, Channel)> = None;
    let mut err = None;
    let walk = poly.for_each_family(opts.vertex_cap, |rows| {
        let ch = canonical_channel(rows, out, poly.in_size);
        match expected_kl_objective(&ch, model) {
            Ok(v) => {
                if better(v, &ch, &best) {
                    best = Some((v, ch));
                }
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let (value, channel) =
        best.ok_or_else(|| Error::Infeasible("merge polytope has no vertex".into()))?;
    Ok(Subproblem { channel, value, families: walk.families, truncated: walk.truncated })
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Best vertex of the partition's merge polytope. Ties go to the
/// lexicographically smallest channel.
pub fn solve_partition_subproblem(model: &SignalModel, part: &Partition, opts: &ExactOptions) -> Result<DesignResult> {
    let start = Instant::now();
    let sub = solve_subproblem(model, part, opts)?;
    Ok(DesignResult {
        channel: sub.channel,
        value: sub.value,
        partition: part.clone(),
        solver_stats: SolverStats {
            method: "exact-subproblem".into(),
            partitions: 1,
            vertices: sub.families as u64,
            truncated: sub.truncated,
            wall_ms: elapsed_ms(start),
        },
    })
}

fn guarded_partitions(num_post: usize, epsilon: f64) -> Result<Vec<Partition>> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("leakage budget {epsilon} must be >= 0")));
    }
    if num_post > MAX_ENUMERATION_N {
        return Err(Error::Refused(format!(
            "{num_post} post-change pmfs exceed the exact solver's guard of {MAX_ENUMERATION_N}; \
             use the augmented Lagrangian design instead"
        )));
    }
    Ok(enumerate_partitions(num_post, max_blocks(epsilon))?.collect())
}

/// Globally optimal channel for the leakage budget `epsilon` (bits): the best
/// subproblem over every partition with at most `floor(2^epsilon)` blocks.
/// Among equal values the earliest partition in enumeration order wins.
pub fn exact_design_ml(model: &SignalModel, epsilon: f64, opts: &ExactOptions) -> Result<DesignResult> {
    let start = Instant::now();
    let parts = guarded_partitions(model.num_post(), epsilon)?;
    let subs: Vec<Result<Subproblem>> = parts.par_iter().map(|p| solve_subproblem(model, p, opts)).collect();
    let mut best: Option<(usize, Subproblem)> = None;
    let (mut families, mut truncated) = (0u64, false);
    for (idx, sub) in subs.into_iter().enumerate() {
        let sub = sub?;
        families += sub.families as u64;
        truncated |= sub.truncated;
        if best.as_ref().is_none_or(|(_, b)| sub.value > b.value) {
            best = Some((idx, sub));
        }
    }
    let (idx, sub) = best.expect("at least one partition");
    Ok(DesignResult {
        channel: sub.channel,
        value: sub.value,
        partition: parts[idx].clone(),
        solver_stats: SolverStats {
            method: "exact".into(),
            partitions: parts.len() as u64,
            vertices: families,
            truncated,
            wall_ms: elapsed_ms(start),
        },
    })
}

/// Output of the Local Exact method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecentralizedDesign {
    /// Per-sensor channels, all respecting `partition`.
    pub sensors: Vec<DesignResult>,
    pub partition: Partition,
    /// Sum of the per-sensor objective values.
    pub value: f64,
    pub solver_stats: SolverStats,
}

/// Local Exact: for each partition solve every sensor's subproblem on its
/// own, then keep the partition with the largest summed value. Sensors with
/// identical models share one solve.
pub fn local_exact_decentralized(
    dmodel: &DecentralizedModel,
    epsilon: f64,
    opts: &ExactOptions,
) -> Result<DecentralizedDesign> {
    let start = Instant::now();
    let parts = guarded_partitions(dmodel.num_post(), epsilon)?;
    // representative[k] = first sensor with the same model as sensor k
    let sensors = dmodel.sensors();
    let representative: Vec<usize> = (0..sensors.len())
        .map(|k| (0..=k).find(|&r| sensors[r] == sensors[k]).unwrap())
        .collect();
    let distinct: Vec<usize> = (0..sensors.len()).filter(|&k| representative[k] == k).collect();

    let per_partition: Vec<Result<Vec<Subproblem>>> = parts
        .par_iter()
        .map(|p| distinct.iter().map(|&k| solve_subproblem(&sensors[k], p, opts)).collect())
        .collect();

    let mut best: Option<(usize, f64, Vec<Subproblem>)> = None;
    let (mut families, mut truncated) = (0u64, false);
    for (idx, subs) in per_partition.into_iter().enumerate() {
        let subs = subs?;
        families += subs.iter().map(|s| s.families as u64).sum::<u64>();
        truncated |= subs.iter().any(|s| s.truncated);
        let total: f64 = representative
            .iter()
            .map(|r| subs[distinct.iter().position(|d| d == r).unwrap()].value)
            .sum();
        if best.as_ref().is_none_or(|(_, v, _)| total > *v) {
            best = Some((idx, total, subs));
        }
    }
    let (idx, value, subs) = best.expect("at least one partition");
    let wall_ms = elapsed_ms(start);
    let sensor_results = representative
        .iter()
        .map(|r| {
            let s = &subs[distinct.iter().position(|d| d == r).unwrap()];
            DesignResult {
                channel: s.channel.clone(),
                value: s.value,
                partition: parts[idx].clone(),
                solver_stats: SolverStats {
                    method: "local-exact-sensor".into(),
                    partitions: 1,
                    vertices: s.families as u64,
                    truncated: s.truncated,
                    wall_ms,
                },
            }
        })
        .collect();
    Ok(DecentralizedDesign {
        sensors: sensor_results,
        partition: parts[idx].clone(),
        value,
        solver_stats: SolverStats {
            method: "local-exact".into(),
            partitions: parts.len() as u64,
            vertices: families,
            truncated,
            wall_ms,
        },
    })
}
