//! Privacy metrics: maximal leakage through the post-change summary `J`, by
//! brute force over short observation windows, and the sequential
//! hypothesis-testing metrics K1/K2 (plain and under channel mixtures).
//!
//! Leakage is reported in bits, divergences in nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::ChannelMixture;
use crate::model::{kl_raw, l1, Channel, Pmf, SignalModel};

/// Two sanitized post-change laws are the same hypothesis when their L1
/// distance is at most this.
pub const IMAGE_GROUPING_TOL: f64 = 1e-9;

/// Largest number of output sequences the window brute force will visit.
pub const MAX_WINDOW_SEQUENCES: usize = 1_000_000;

/// Deterministic `P(J | I)`: post-change index `i` belongs to block `block_of[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    block_of: Vec<usize>,
    num_blocks: usize,
}

impl Partition {
    /// Validates that labels `0..B` are all used.
    pub fn new(block_of: Vec<usize>) -> Result<Self> {
        if block_of.is_empty() {
            return Err(Error::InvalidArgument("partition of an empty set".into()));
        }
        let num_blocks = block_of.iter().max().map_or(0, |m| m + 1);
        let mut used = vec![false; num_blocks];
        for &b in &block_of {
            used[b] = true;
        }
        if let Some(b) = used.iter().position(|u| !u) {
            return Err(Error::InvalidArgument(format!("block label {b} is unused")));
        }
        Ok(Partition { block_of, num_blocks })
    }

    /// Relabels arbitrary labels into restricted-growth form.
    pub fn from_labels<T: PartialEq>(labels: &[T]) -> Self {
        let mut reps: Vec<&T> = Vec::new();
        let block_of = labels
            .iter()
            .map(|l| match reps.iter().position(|r| *r == l) {
                Some(b) => b,
                None => {
                    reps.push(l);
                    reps.len() - 1
                }
            })
            .collect();
        Partition { block_of, num_blocks: reps.len() }
    }

    pub(crate) fn from_rgs_unchecked(block_of: Vec<usize>, num_blocks: usize) -> Self {
        Partition { block_of, num_blocks }
    }

    pub fn singletons(n: usize) -> Self {
        Partition { block_of: (0..n).collect(), num_blocks: n }
    }

    pub fn single_block(n: usize) -> Self {
        Partition { block_of: vec![0; n], num_blocks: 1 }
    }

    /// Groups `images` whose L1 distance to a block's first member is within `tol`.
    pub fn induced_by_images(images: &[Pmf], tol: f64) -> Self {
        let mut reps: Vec<usize> = Vec::new();
        let block_of = (0..images.len())
            .map(|i| match reps.iter().position(|&r| images[r].l1_distance(&images[i]) <= tol) {
                Some(b) => b,
                None => {
                    reps.push(i);
                    reps.len() - 1
                }
            })
            .collect();
        Partition { block_of, num_blocks: reps.len() }
    }

    /// The partition of `G` induced by a channel's images.
    pub fn induced_by_channel(model: &SignalModel, t: &Channel) -> Result<Self> {
        Ok(Self::induced_by_images(&model.images(t)?, IMAGE_GROUPING_TOL))
    }

    pub fn block_of(&self) -> &[usize] {
        &self.block_of
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn len(&self) -> usize {
        self.block_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block_of.is_empty()
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_blocks];
        for (i, &b) in self.block_of.iter().enumerate() {
            out[b].push(i);
        }
        out
    }

    /// Whether every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.len() == coarser.len()
            && self.blocks().iter().all(|blk| {
                blk.iter().all(|&i| coarser.block_of[i] == coarser.block_of[blk[0]])
            })
    }
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Partition::new(v)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.block_of
    }
}

/// Privacy requirement for a channel design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum PrivacyBudget {
    /// Maximal leakage budget in bits.
    MaxLeakage { epsilon: f64 },
    /// Privacy budget `eps1` for the private set, distinguishability `eps2`
    /// for the public set, both in nats.
    SeqHt { eps1: f64, eps2: f64 },
}

impl PrivacyBudget {
    pub fn max_leakage(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("leakage budget {epsilon} must be >= 0")));
        }
        Ok(PrivacyBudget::MaxLeakage { epsilon })
    }

    pub fn seq_ht(eps1: f64, eps2: f64) -> Result<Self> {
        if !(eps1 >= 0.0) || !eps1.is_finite() {
            return Err(Error::InvalidArgument(format!("eps1 = {eps1} must be >= 0")));
        }
        if !(eps2 > 0.0) || !eps2.is_finite() {
            return Err(Error::InvalidArgument(format!("eps2 = {eps2} must be > 0")));
        }
        Ok(PrivacyBudget::SeqHt { eps1, eps2 })
    }
}

/// `m = floor(2^epsilon)`, the number of blocks a leakage budget allows.
/// A 1e-9 slack absorbs round-off so that `epsilon = log2(m)` yields `m`.
pub fn max_blocks(epsilon: f64) -> usize {
    (epsilon.exp2() + 1e-9).floor().max(1.0) as usize
}

/// `L_max(I -> J)` in bits for a deterministic `P(J | I)`: `log2(#blocks)`.
pub fn max_leakage_via_partition(part: &Partition) -> f64 {
    (part.num_blocks() as f64).log2()
}

/// Exact `L_max(I -> Y^window)` in bits:
/// `log2 Σ_{y_1..y_w} max_{i: p(i)>0} Π_t (T g_i)(y_t)`.
pub fn max_leakage_window_bruteforce(model: &SignalModel, t: &Channel, window_len: usize) -> Result<f64> {
    if window_len == 0 {
        return Err(Error::InvalidArgument("window_len must be at least 1".into()));
    }
    let out = t.out_size();
    let count = (out as f64).powi(window_len as i32);
    if count > MAX_WINDOW_SEQUENCES as f64 {
        return Err(Error::Refused(format!(
            "{out}^{window_len} = {count:.3e} output sequences exceeds {MAX_WINDOW_SEQUENCES}"
        )));
    }
    let images: Vec<Vec<f64>> = model
        .images(t)?
        .into_iter()
        .zip(model.prior().probs())
        .filter(|(_, w)| **w > 0.0)
        .map(|(p, _)| p.probs().to_vec())
        .collect();
    let mut seq = vec![0usize; window_len];
    let mut total = 0.0;
    loop {
        let best = images
            .iter()
            .map(|img| seq.iter().map(|&y| img[y]).product::<f64>())
            .fold(0.0, f64::max);
        total += best;
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == window_len {
                return Ok(total.log2());
            }
            seq[pos] += 1;
            if seq[pos] < out {
                break;
            }
            seq[pos] = 0;
            pos += 1;
        }
    }
}

fn check_indices(name: &str, set: &[usize], n: usize) -> Result<()> {
    for (a, &i) in set.iter().enumerate() {
        if i >= n {
            return Err(Error::InvalidArgument(format!("{name} index {i} out of range for {n} hypotheses")));
        }
        if set[..a].contains(&i) {
            return Err(Error::InvalidArgument(format!("{name} index {i} repeated")));
        }
    }
    Ok(())
}

/// Checks a private/public split of the post-change indices.
pub fn validate_sets(private: &[usize], public: &[usize], num_post: usize) -> Result<()> {
    check_indices("private", private, num_post)?;
    check_indices("public", public, num_post)?;
    if private.len() <= 1 {
        return Err(Error::InvalidArgument("the private set needs more than one index".into()));
    }
    if public.is_empty() {
        return Err(Error::InvalidArgument("the public set is empty".into()));
    }
    if let Some(i) = private.iter().find(|i| public.contains(i)) {
        return Err(Error::InvalidArgument(format!("index {i} is both private and public")));
    }
    Ok(())
}

/// `table[i][j] = KL(h_i || h_j)`.
pub fn pairwise_kl(images: &[Pmf]) -> Vec<Vec<f64>> {
    images
        .iter()
        .map(|a| images.iter().map(|b| kl_raw(a.probs(), b.probs())).collect())
        .collect()
}

fn k1_from_table(table: &[Vec<f64>], private: &[usize]) -> f64 {
    private
        .iter()
        .map(|&i| {
            private
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| table[i][j])
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn k2_from_table(table: &[Vec<f64>], private: &[usize], public: &[usize]) -> f64 {
    public
        .iter()
        .flat_map(|&i| {
            private
                .iter()
                .chain(public)
                .filter(move |&&j| j != i)
                .map(move |&j| table[i][j])
        })
        .fold(f64::INFINITY, f64::min)
}

/// `K1 = max_{i ∈ I1} min_{j ∈ I1, j ≠ i} KL(h_i || h_j)`.
pub fn k1_metric(images: &[Pmf], private: &[usize]) -> Result<f64> {
    check_indices("private", private, images.len())?;
    if private.len() <= 1 {
        return Err(Error::InvalidArgument("K1 needs a private set with more than one index".into()));
    }
    Ok(k1_from_table(&pairwise_kl(images), private))
}

/// `K2 = min_{i ∈ I2} min_{j ∈ I1 ∪ I2, j ≠ i} KL(h_i || h_j)`.
pub fn k2_metric(images: &[Pmf], private: &[usize], public: &[usize]) -> Result<f64> {
    check_indices("private", private, images.len())?;
    check_indices("public", public, images.len())?;
    if public.is_empty() {
        return Err(Error::InvalidArgument("K2 needs a nonempty public set".into()));
    }
    Ok(k2_from_table(&pairwise_kl(images), private, public))
}

/// Pairwise divergences under channel mixtures, summed over sensors:
/// `Σ_k Σ_c φ_k(c) KL(T_{k,c} g_{k,i} || T_{k,c} g_{k,j})`. Zero-weight
/// channels contribute nothing even when their divergence is infinite.
pub fn mixture_pairwise_kl(sensors: &[(&SignalModel, &ChannelMixture)]) -> Result<Vec<Vec<f64>>> {
    let first = sensors
        .first()
        .ok_or_else(|| Error::InvalidArgument("no sensors".into()))?;
    let n = first.0.num_post();
    let mut table = vec![vec![0.0; n]; n];
    for (model, mix) in sensors {
        if model.num_post() != n {
            return Err(Error::DimensionMismatch("sensors disagree on |G|".into()));
        }
        for (w, ch) in mix.weights().probs().iter().zip(mix.channels()) {
            if *w == 0.0 {
                continue;
            }
            let pair = pairwise_kl(&model.images(ch)?);
            for i in 0..n {
                for j in 0..n {
                    table[i][j] += w * pair[i][j];
                }
            }
        }
    }
    Ok(table)
}

/// `(K1, K2)` with each pairwise divergence replaced by its mixture value.
pub fn mixture_k_metrics(
    sensors: &[(&SignalModel, &ChannelMixture)],
    private: &[usize],
    public: &[usize],
) -> Result<(f64, f64)> {
    let table = mixture_pairwise_kl(sensors)?;
    validate_sets(private, public, table.len())?;
    Ok((k1_from_table(&table, private), k2_from_table(&table, private, public)))
}

/// L1 distance helper re-exported for image comparisons.
pub fn image_distance(a: &Pmf, b: &Pmf) -> f64 {
    l1(a.probs(), b.probs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pmf(v: &[f64]) -> Pmf {
        Pmf::new(v.to_vec()).unwrap()
    }

    #[test]
    fn leakage_via_partition() {
        assert_eq!(max_leakage_via_partition(&Partition::single_block(5)), 0.0);
        let three = Partition::new(vec![0, 1, 2, 1, 0]).unwrap();
        assert!((max_leakage_via_partition(&three) - 3f64.log2()).abs() < 1e-15);
        let all = Partition::singletons(5);
        assert!((max_leakage_via_partition(&all) - 2.321928).abs() < 1e-6);
    }

    #[test]
    fn max_blocks_is_robust_at_integer_powers() {
        for m in 1..=12usize {
            assert_eq!(max_blocks((m as f64).log2()), m);
        }
        assert_eq!(max_blocks(0.0), 1);
        assert_eq!(max_blocks(1.5), 2);
    }

    #[test]
    fn partition_validation_and_canonical_labels() {
        assert!(Partition::new(vec![0, 2]).is_err());
        let p = Partition::from_labels(&['b', 'a', 'b', 'c']);
        assert_eq!(p.block_of(), &[0, 1, 0, 2]);
        assert_eq!(p.blocks(), vec![vec![0, 2], vec![1], vec![3]]);
        assert!(Partition::singletons(4).refines(&p));
        assert!(p.refines(&Partition::single_block(4)));
        assert!(!Partition::single_block(4).refines(&p));
    }

    #[test]
    fn induced_partition_groups_equal_images() {
        let imgs = vec![pmf(&[0.5, 0.5]), pmf(&[0.2, 0.8]), pmf(&[0.5, 0.5]), pmf(&[0.2, 0.8])];
        assert_eq!(Partition::induced_by_images(&imgs, 1e-9).block_of(), &[0, 1, 0, 1]);
    }

    #[test]
    fn window_leakage_examples() {
        let m = SignalModel::new(
            pmf(&[0.5, 0.5]),
            vec![pmf(&[1.0, 0.0]), pmf(&[0.0, 1.0])],
            Pmf::uniform(2),
        )
        .unwrap();
        let v = max_leakage_window_bruteforce(&m, &Channel::identity(2), 1).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert_eq!(max_leakage_window_bruteforce(&m, &Channel::constant(2, 2, 0), 4).unwrap(), 0.0);
        let t = Channel::from_rows(vec![vec![0.9, 0.2], vec![0.1, 0.8]]).unwrap();
        // Sequences 11, 12, 21, 22 contribute max terms 0.81, 0.16, 0.16, 0.64.
        let v2 = max_leakage_window_bruteforce(&m, &t, 2).unwrap();
        assert!((v2 - 1.77f64.log2()).abs() < 1e-12);
        assert!(max_leakage_window_bruteforce(&m, &t, 0).is_err());
        assert!(matches!(max_leakage_window_bruteforce(&m, &t, 21), Err(Error::Refused(_))));
    }

    #[test]
    fn k_metric_examples() {
        let same = vec![pmf(&[0.3, 0.7]); 3];
        assert_eq!(k1_metric(&same, &[0, 1, 2]).unwrap(), 0.0);
        let imgs = vec![pmf(&[0.5, 0.5]), pmf(&[0.25, 0.75])];
        let k1 = k1_metric(&imgs, &[0, 1]).unwrap();
        assert!((k1 - 0.143841).abs() < 1e-6);
        assert!(k1_metric(&imgs, &[0]).is_err());

        let three = vec![pmf(&[0.5, 0.5]), pmf(&[0.25, 0.75]), pmf(&[0.5, 0.5])];
        assert_eq!(k2_metric(&three, &[0, 1], &[2]).unwrap(), 0.0);
        let k2 = k2_metric(&imgs, &[0], &[1]).unwrap();
        assert!((k2 - 0.130812).abs() < 1e-6);
        assert!(k2_metric(&imgs, &[0, 1], &[]).is_err());
    }
}
