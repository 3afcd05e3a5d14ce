//! Set partitions of the post-change indices, as restricted growth strings.

use crate::error::{Error, Result};
use crate::privacy::Partition;

/// Largest `n` accepted by [`stirling2`] (S(21, k) still fits, but the guard
/// keeps every value far from overflow).
pub const MAX_STIRLING_N: usize = 20;

/// Largest ground set [`enumerate_partitions`] will walk.
pub const MAX_ENUMERATION_N: usize = 12;

/// Stirling number of the second kind, `S(n, k)`.
pub fn stirling2(n: usize, k: usize) -> Result<u64> {
    if n > MAX_STIRLING_N {
        return Err(Error::Refused(format!("stirling2 guard: n = {n} > {MAX_STIRLING_N}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("stirling2 needs k <= n, got k = {k}, n = {n}")));
    }
    // row[j] = S(i, j), built up with S(i, j) = j S(i-1, j) + S(i-1, j-1)
    let mut row = vec![0u64; n + 1];
    row[0] = 1;
    for i in 1..=n {
        for j in (1..=i).rev() {
            row[j] = j as u64 * row[j] + row[j - 1];
        }
        row[0] = 0;
    }
    Ok(row[k])
}

/// Number of partitions of `n` items into at most `m` blocks.
pub fn partition_count(n: usize, m: usize) -> Result<u64> {
    (1..=m.min(n)).map(|b| stirling2(n, b)).sum()
}

/// Iterator over every partition of `{0..n}` with at most `m` blocks, in
/// lexicographic order of restricted growth strings.
#[derive(Debug, Clone)]
pub struct PartitionIter {
    current: Option<Vec<usize>>,
    max_blocks: usize,
}

impl Iterator for PartitionIter {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        let rgs = self.current.take()?;
        let num_blocks = rgs.iter().max().map_or(0, |m| m + 1);
        let out = Partition::from_rgs_unchecked(rgs.clone(), num_blocks);
        self.current = advance(rgs, self.max_blocks);
        Some(out)
    }
}

fn advance(mut rgs: Vec<usize>, max_blocks: usize) -> Option<Vec<usize>> {
    let n = rgs.len();
    for i in (1..n).rev() {
        let prefix_max = rgs[..i].iter().copied().max().unwrap_or(0);
        if rgs[i] <= prefix_max && rgs[i] + 1 < max_blocks {
            rgs[i] += 1;
            for v in rgs[i + 1..].iter_mut() {
                *v = 0;
            }
            return Some(rgs);
        }
    }
    None
}

/// Enumerates partitions of `{0..n}` into at most `m` nonempty blocks
/// (`m > n` is treated as `m = n`).
pub fn enumerate_partitions(n: usize, m: usize) -> Result<PartitionIter> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("need n >= 1 and m >= 1, got n = {n}, m = {m}")));
    }
    if n > MAX_ENUMERATION_N {
        let estimate = partition_count(n.min(MAX_STIRLING_N), m)
            .map(|c| c.to_string())
            .unwrap_or_else(|_| "more than 10^13".into());
        return Err(Error::Refused(format!(
            "{n} post-change pmfs exceed the enumeration guard of {MAX_ENUMERATION_N} \
             ({estimate} partitions); use the smooth solver instead"
        )));
    }
    Ok(PartitionIter { current: Some(vec![0; n]), max_blocks: m.min(n) })
}
