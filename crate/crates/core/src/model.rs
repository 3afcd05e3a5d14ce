//! Finite-alphabet probability primitives: pmfs, channels, divergences and
//! the i.i.d. change-point signal model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::ChannelMixture;

/// Normalization tolerance for pmfs and channel columns.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Minimum pairwise L1 distance between randomly generated pmfs.
const MIN_RANDOM_SEPARATION: f64 = 1e-6;

/// Seedable generator used everywhere: ChaCha with 8 rounds, one stream per
/// independent consumer (trial, restart, ...).
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A probability mass function on `{0, .., len-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf(Vec<f64>);

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidPmf("empty alphabet".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidPmf(format!("entry {p} is not a nonnegative number")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidPmf(format!("entries sum to {sum}, not 1")));
        }
        Ok(Pmf(probs))
    }

    /// Clamps tiny negative round-off to zero. The caller guarantees the
    /// vector is a pmf up to floating-point error.
    pub(crate) fn from_computed(mut probs: Vec<f64>) -> Self {
        for p in probs.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        Pmf(probs)
    }

    pub fn uniform(n: usize) -> Self {
        Pmf(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        Pmf(v)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn alphabet_size(&self) -> usize {
        self.0.len()
    }

    pub fn l1_distance(&self, other: &Pmf) -> f64 {
        l1(&self.0, &other.0)
    }
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Pmf::new(v)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for Pmf {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Column-stochastic matrix `T[y][x] = P(Y = y | X = x)` with `|Y| <= |X|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Channel {
    out_size: usize,
    in_size: usize,
    /// Row-major, `out_size * in_size`.
    entries: Vec<f64>,
}

impl Channel {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let out_size = rows.len();
        let in_size = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != in_size) {
            return Err(Error::InvalidChannel("ragged rows".into()));
        }
        Self::from_row_major(out_size, in_size, rows.into_iter().flatten().collect())
    }

    pub fn from_row_major(out_size: usize, in_size: usize, entries: Vec<f64>) -> Result<Self> {
        if out_size == 0 || in_size == 0 {
            return Err(Error::InvalidChannel("empty channel".into()));
        }
        if entries.len() != out_size * in_size {
            return Err(Error::InvalidChannel(format!(
                "{} entries for a {out_size}x{in_size} channel",
                entries.len()
            )));
        }
        if out_size > in_size {
            return Err(Error::InvalidChannel(format!(
                "output alphabet {out_size} larger than input alphabet {in_size}"
            )));
        }
        if let Some(e) = entries.iter().find(|e| !e.is_finite() || **e < 0.0) {
            return Err(Error::InvalidChannel(format!("entry {e} is not a nonnegative number")));
        }
        let ch = Channel { out_size, in_size, entries };
        for x in 0..in_size {
            let s: f64 = (0..out_size).map(|y| ch.entry(y, x)).sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidChannel(format!("column {x} sums to {s}")));
            }
        }
        Ok(ch)
    }

    /// Builds a channel from solver output: clamps round-off negatives and
    /// renormalizes each column.
    pub(crate) fn from_computed(out_size: usize, in_size: usize, mut entries: Vec<f64>) -> Self {
        for e in entries.iter_mut() {
            if *e < 0.0 {
                *e = 0.0;
            }
        }
        for x in 0..in_size {
            let s: f64 = (0..out_size).map(|y| entries[y * in_size + x]).sum();
            if s > 0.0 {
                for y in 0..out_size {
                    entries[y * in_size + x] /= s;
                }
            }
        }
        Channel { out_size, in_size, entries }
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Channel { out_size: n, in_size: n, entries }
    }

    /// Every input goes to output symbol `to`.
    pub fn constant(out_size: usize, in_size: usize, to: usize) -> Self {
        let mut entries = vec![0.0; out_size * in_size];
        for x in 0..in_size {
            entries[to * in_size + x] = 1.0;
        }
        Channel { out_size, in_size, entries }
    }

    /// Deterministic channel sending `x` to `map[x]`.
    pub fn deterministic(out_size: usize, map: &[usize]) -> Result<Self> {
        let in_size = map.len();
        if map.iter().any(|&y| y >= out_size) {
            return Err(Error::InvalidChannel("map target out of range".into()));
        }
        let mut entries = vec![0.0; out_size * in_size];
        for (x, &y) in map.iter().enumerate() {
            entries[y * in_size + x] = 1.0;
        }
        Channel::from_row_major(out_size, in_size, entries)
    }

    pub fn out_size(&self) -> usize {
        self.out_size
    }

    pub fn in_size(&self) -> usize {
        self.in_size
    }

    #[inline]
    pub fn entry(&self, y: usize, x: usize) -> f64 {
        self.entries[y * self.in_size + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.entries[y * self.in_size..(y + 1) * self.in_size]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.out_size).map(|y| self.row(y).to_vec()).collect()
    }

    /// Reorders output symbols: row `y` of the result is row `perm[y]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let entries = perm.iter().flat_map(|&y| self.row(y).iter().copied()).collect();
        Channel { out_size: self.out_size, in_size: self.in_size, entries }
    }

    pub(crate) fn apply_raw(&self, p: &[f64]) -> Vec<f64> {
        (0..self.out_size)
            .map(|y| self.row(y).iter().zip(p).map(|(t, q)| t * q).sum())
            .collect()
    }

    pub fn apply(&self, p: &Pmf) -> Result<Pmf> {
        apply_channel(self, p)
    }
}

impl TryFrom<Vec<Vec<f64>>> for Channel {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Channel::from_rows(rows)
    }
}

impl From<Channel> for Vec<Vec<f64>> {
    fn from(c: Channel) -> Self {
        c.rows()
    }
}

/// `KL(p || q)` in nats. Returns `f64::INFINITY` when some `p(x) > 0` has `q(x) = 0`.
pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    if p.alphabet_size() != q.alphabet_size() {
        return Err(Error::DimensionMismatch(format!(
            "kl_divergence between alphabets {} and {}",
            p.alphabet_size(),
            q.alphabet_size()
        )));
    }
    Ok(kl_raw(p.probs(), q.probs()))
}

pub(crate) fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            acc += a * (a / b).ln();
        }
    }
    // Rounding can leave a tiny negative sum for nearly equal arguments.
    acc.max(0.0)
}

pub fn apply_channel(t: &Channel, p: &Pmf) -> Result<Pmf> {
    if t.in_size() != p.alphabet_size() {
        return Err(Error::DimensionMismatch(format!(
            "channel takes {} symbols, pmf has {}",
            t.in_size(),
            p.alphabet_size()
        )));
    }
    Ok(Pmf::from_computed(t.apply_raw(p.probs())))
}

/// `Σ_i p_I(i) · KL(T g_i || T f)`.
pub fn expected_kl_objective(t: &Channel, model: &SignalModel) -> Result<f64> {
    if t.in_size() != model.alphabet_size() {
        return Err(Error::DimensionMismatch(format!(
            "channel takes {} symbols, model alphabet is {}",
            t.in_size(),
            model.alphabet_size()
        )));
    }
    let pre = t.apply_raw(model.pre.probs());
    let mut total = 0.0;
    for (g, w) in model.post.iter().zip(model.prior.probs()) {
        if *w == 0.0 {
            continue;
        }
        total += w * kl_raw(&t.apply_raw(g.probs()), &pre);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChangePoint {
    #[default]
    Never,
    /// First post-change time index (times start at 1; 0 and 1 both mean
    /// the whole path is post-change).
    At(u64),
}

/// Pre-change pmf `f`, candidate post-change pmfs `G` and a prior over `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalModel {
    pub(crate) pre: Pmf,
    pub(crate) post: Vec<Pmf>,
    pub(crate) prior: Pmf,
    pub(crate) change_point: ChangePoint,
}

impl SignalModel {
    pub fn new(pre: Pmf, post: Vec<Pmf>, prior: Pmf) -> Result<Self> {
        let n = pre.alphabet_size();
        if post.is_empty() {
            return Err(Error::InvalidModel("no post-change distributions".into()));
        }
        if let Some(g) = post.iter().find(|g| g.alphabet_size() != n) {
            return Err(Error::InvalidModel(format!(
                "post-change pmf on {} symbols, pre-change on {n}",
                g.alphabet_size()
            )));
        }
        if prior.alphabet_size() != post.len() {
            return Err(Error::InvalidModel(format!(
                "prior has {} entries for {} post-change pmfs",
                prior.alphabet_size(),
                post.len()
            )));
        }
        if let Some(i) = post.iter().position(|g| g.l1_distance(&pre) <= 1e-9) {
            return Err(Error::InvalidModel(format!("post-change pmf {i} equals the pre-change pmf")));
        }
        Ok(SignalModel { pre, post, prior, change_point: ChangePoint::Never })
    }

    pub fn with_change_point(mut self, nu: ChangePoint) -> Self {
        self.change_point = nu;
        self
    }

    pub fn pre(&self) -> &Pmf {
        &self.pre
    }

    pub fn post(&self) -> &[Pmf] {
        &self.post
    }

    pub fn prior(&self) -> &Pmf {
        &self.prior
    }

    pub fn change_point(&self) -> ChangePoint {
        self.change_point
    }

    pub fn alphabet_size(&self) -> usize {
        self.pre.alphabet_size()
    }

    pub fn num_post(&self) -> usize {
        self.post.len()
    }

    /// Sanitized post-change laws `T g_i`, indexed like `G`.
    pub fn images(&self, t: &Channel) -> Result<Vec<Pmf>> {
        self.post.iter().map(|g| apply_channel(t, g)).collect()
    }

    /// `E[KL(g_I || f)]`, the objective with no sanitization.
    pub fn unsanitized_objective(&self) -> f64 {
        expected_kl_objective(&Channel::identity(self.alphabet_size()), self)
            .expect("identity matches the alphabet")
    }
}

/// `K` sensors observing independent signals with a common change index.
#[derive(Debug, Clone, PartialEq)]
pub struct DecentralizedModel {
    pub(crate) sensors: Vec<SignalModel>,
}

impl DecentralizedModel {
    pub fn new(sensors: Vec<SignalModel>) -> Result<Self> {
        let first = sensors
            .first()
            .ok_or_else(|| Error::InvalidModel("no sensors".into()))?;
        for (k, s) in sensors.iter().enumerate().skip(1) {
            if s.num_post() != first.num_post() {
                return Err(Error::InvalidModel(format!(
                    "sensor {k} has {} post-change pmfs, sensor 0 has {}",
                    s.num_post(),
                    first.num_post()
                )));
            }
            if s.prior.l1_distance(&first.prior) > SIMPLEX_TOL {
                return Err(Error::InvalidModel(format!("sensor {k} has a different prior")));
            }
        }
        Ok(DecentralizedModel { sensors })
    }

    pub fn sensors(&self) -> &[SignalModel] {
        &self.sensors
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn num_post(&self) -> usize {
        self.sensors[0].num_post()
    }

    pub fn prior(&self) -> &Pmf {
        &self.sensors[0].prior
    }
}

/// Uniform draw from the probability simplex (normalized exponential variates).
pub fn random_pmf<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Pmf {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    Pmf::from_computed(draws.into_iter().map(|d| d / total).collect())
}

fn random_family<R: Rng + ?Sized>(rng: &mut R, alphabet_size: usize, count: usize) -> Vec<Pmf> {
    loop {
        let family: Vec<Pmf> = (0..count).map(|_| random_pmf(rng, alphabet_size)).collect();
        let separated = family.iter().enumerate().all(|(a, p)| {
            family[a + 1..]
                .iter()
                .all(|q| p.l1_distance(q) >= MIN_RANDOM_SEPARATION)
        });
        if separated {
            return family;
        }
    }
}

/// Random model with uniform prior: `f` and every `g_i` drawn uniformly from
/// the simplex, redrawn until all pairwise L1 distances reach 1e-6.
pub fn random_instance(alphabet_size: usize, num_post: usize, seed: u64) -> Result<SignalModel> {
    if alphabet_size < 2 {
        return Err(Error::InvalidArgument("alphabet_size must be at least 2".into()));
    }
    if num_post < 1 {
        return Err(Error::InvalidArgument("num_post must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut family = random_family(&mut rng, alphabet_size, num_post + 1);
    let pre = family.remove(0);
    SignalModel::new(pre, family, Pmf::uniform(num_post))
}

/// Random decentralized model. With `identical` every sensor shares the same
/// `f` and `G`; otherwise each sensor is drawn independently.
pub fn random_decentralized(
    alphabet_size: usize,
    num_post: usize,
    sensors: usize,
    identical: bool,
    seed: u64,
) -> Result<DecentralizedModel> {
    if sensors == 0 {
        return Err(Error::InvalidArgument("at least one sensor required".into()));
    }
    let models = if identical {
        vec![random_instance(alphabet_size, num_post, seed)?; sensors]
    } else {
        (0..sensors as u64)
            .map(|k| random_instance(alphabet_size, num_post, seed.wrapping_add(k.wrapping_mul(0x9E37_79B9))))
            .collect::<Result<_>>()?
    };
    DecentralizedModel::new(models)
}

/// How raw observations are released: one fixed channel, or a channel drawn
/// i.i.d. per time step from a finite set with its index released.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sanitizer {
    Channel(Channel),
    Mixture(ChannelMixture),
}

impl Sanitizer {
    /// `(weight, channel)` arms; a plain channel is a single arm of weight 1.
    pub fn arms(&self) -> Vec<(f64, &Channel)> {
        match self {
            Sanitizer::Channel(c) => vec![(1.0, c)],
            Sanitizer::Mixture(m) => m
                .weights()
                .probs()
                .iter()
                .copied()
                .zip(m.channels())
                .collect(),
        }
    }

    pub fn in_size(&self) -> usize {
        match self {
            Sanitizer::Channel(c) => c.in_size(),
            Sanitizer::Mixture(m) => m.channels()[0].in_size(),
        }
    }
}

/// One released observation: the index of the channel used (always 0 for a
/// plain channel) and the sanitized symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub channel: usize,
    pub symbol: usize,
}

/// Inverse-CDF sampler for tiny alphabets.
#[derive(Debug, Clone)]
pub(crate) struct Categorical {
    cdf: Vec<f64>,
}

impl Categorical {
    pub(crate) fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Categorical { cdf }
    }

    #[inline]
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        // Skip zero-probability symbols even when u lands exactly on a cdf step.
        self.cdf.iter().position(|&c| u < c).unwrap_or_else(|| {
            self.cdf
                .iter()
                .rposition(|&c| c > 0.0)
                .map(|i| {
                    let mut j = i;
                    while j > 0 && self.cdf[j - 1] == self.cdf[j] {
                        j -= 1;
                    }
                    j
                })
                .unwrap_or(0)
        })
    }
}

/// Samplers for the sanitized law of one regime (pre-change or one `g_i`).
#[derive(Debug, Clone)]
pub(crate) struct RegimeSampler {
    arm: Categorical,
    symbol: Vec<Categorical>,
}

impl RegimeSampler {
    pub(crate) fn new(sanitizer: &Sanitizer, law: &Pmf) -> Self {
        let arms = sanitizer.arms();
        let weights: Vec<f64> = arms.iter().map(|(w, _)| *w).collect();
        let symbol = arms
            .iter()
            .map(|(_, c)| Categorical::new(&c.apply_raw(law.probs())))
            .collect();
        RegimeSampler { arm: Categorical::new(&weights), symbol }
    }

    #[inline]
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Observation {
        let channel = if self.symbol.len() == 1 { 0 } else { self.arm.sample(rng) };
        Observation { channel, symbol: self.symbol[channel].sample(rng) }
    }
}

fn check_sanitizer(model: &SignalModel, sanitizer: &Sanitizer) -> Result<()> {
    if sanitizer.in_size() != model.alphabet_size() {
        return Err(Error::DimensionMismatch(format!(
            "sanitizer takes {} symbols, model alphabet is {}",
            sanitizer.in_size(),
            model.alphabet_size()
        )));
    }
    Ok(())
}

/// Draws `horizon` sanitized observations. Times `t < ν` follow the
/// pre-change law, times `t >= ν` follow `g_{post_index}`.
pub fn sample_path(
    model: &SignalModel,
    sanitizer: &Sanitizer,
    post_index: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Observation>> {
    check_sanitizer(model, sanitizer)?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if post_index >= model.num_post() {
        return Err(Error::InvalidArgument(format!(
            "post-change index {post_index} out of range for {} pmfs",
            model.num_post()
        )));
    }
    let pre = RegimeSampler::new(sanitizer, &model.pre);
    let post = RegimeSampler::new(sanitizer, &model.post[post_index]);
    let mut rng = stream_rng(seed, 0);
    let path = (1..=horizon as u64)
        .map(|t| {
            let is_post = match model.change_point {
                ChangePoint::Never => false,
                ChangePoint::At(nu) => t >= nu,
            };
            if is_post {
                post.sample(&mut rng)
            } else {
                pre.sample(&mut rng)
            }
        })
        .collect();
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pmf(v: &[f64]) -> Pmf {
        Pmf::new(v.to_vec()).unwrap()
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&pmf(&[0.5, 0.5]), &pmf(&[0.5, 0.5])).unwrap(), 0.0);
        let v = kl_divergence(&pmf(&[0.5, 0.5]), &pmf(&[0.25, 0.75])).unwrap();
        assert!((v - 0.143841).abs() < 1e-6);
        assert!(kl_divergence(&pmf(&[1.0, 0.0]), &pmf(&[0.0, 1.0])).unwrap().is_infinite());
        assert!(kl_divergence(&pmf(&[1.0, 0.0]), &pmf(&[0.2, 0.3, 0.5])).is_err());
    }

    #[test]
    fn apply_channel_examples() {
        let p = pmf(&[0.3, 0.7]);
        assert_eq!(apply_channel(&Channel::identity(2), &p).unwrap(), p);
        let c = Channel::from_rows(vec![vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(apply_channel(&c, &p).unwrap().probs(), &[1.0, 0.0]);
        let t = Channel::from_rows(vec![vec![0.9, 0.2], vec![0.1, 0.8]]).unwrap();
        let out = apply_channel(&t, &pmf(&[0.5, 0.5])).unwrap();
        assert!((out[0] - 0.55).abs() < 1e-15 && (out[1] - 0.45).abs() < 1e-15);
        assert!(apply_channel(&t, &pmf(&[0.2, 0.3, 0.5])).is_err());
    }

    #[test]
    fn objective_examples() {
        let f = pmf(&[0.5, 0.5]);
        let g1 = pmf(&[0.25, 0.75]);
        let g2 = pmf(&[0.9, 0.1]);
        let m = SignalModel::new(f.clone(), vec![g1.clone()], Pmf::uniform(1)).unwrap();
        let v = expected_kl_objective(&Channel::identity(2), &m).unwrap();
        assert!((v - 0.130812).abs() < 1e-6);

        let m2 = SignalModel::new(f.clone(), vec![g1.clone(), g2.clone()], Pmf::uniform(2)).unwrap();
        let want = (kl_divergence(&g1, &f).unwrap() + kl_divergence(&g2, &f).unwrap()) / 2.0;
        assert!((expected_kl_objective(&Channel::identity(2), &m2).unwrap() - want).abs() < 1e-15);
        assert_eq!(expected_kl_objective(&Channel::constant(2, 2, 1), &m2).unwrap(), 0.0);
    }

    #[test]
    fn channel_validation() {
        assert!(Channel::from_rows(vec![vec![0.5, 1.0], vec![0.4, 0.0]]).is_err());
        assert!(Channel::from_rows(vec![vec![1.0], vec![0.0]]).is_err()); // |Y| > |X|
        assert!(Channel::from_rows(vec![vec![1.5, 1.0], vec![-0.5, 0.0]]).is_err());
        assert!(Pmf::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn model_rejects_post_equal_to_pre() {
        let f = pmf(&[0.5, 0.5]);
        assert!(SignalModel::new(f.clone(), vec![f.clone()], Pmf::uniform(1)).is_err());
        assert!(SignalModel::new(f.clone(), vec![pmf(&[0.2, 0.8])], Pmf::uniform(2)).is_err());
    }

    #[test]
    fn random_instances_are_reproducible() {
        let a = random_instance(7, 5, 11).unwrap();
        assert_eq!(a.alphabet_size(), 7);
        assert_eq!(a.num_post(), 5);
        assert_eq!(a, random_instance(7, 5, 11).unwrap());
        assert_ne!(a, random_instance(7, 5, 12).unwrap());
        let small = random_instance(2, 1, 3).unwrap();
        assert_eq!((small.alphabet_size(), small.num_post()), (2, 1));
        assert!(random_instance(1, 1, 0).is_err());
    }

    #[test]
    fn sample_path_regimes() {
        // f and g have disjoint supports, so the regime of every sample is visible.
        let m = SignalModel::new(pmf(&[1.0, 0.0]), vec![pmf(&[0.0, 1.0])], Pmf::uniform(1)).unwrap();
        let san = Sanitizer::Channel(Channel::identity(2));
        let never = sample_path(&m, &san, 0, 50, 1).unwrap();
        assert!(never.iter().all(|o| o.symbol == 0));
        let m1 = m.clone().with_change_point(ChangePoint::At(1));
        assert!(sample_path(&m1, &san, 0, 50, 1).unwrap().iter().all(|o| o.symbol == 1));
        let m5 = m.clone().with_change_point(ChangePoint::At(5));
        let p = sample_path(&m5, &san, 0, 10, 1).unwrap();
        assert!(p[..4].iter().all(|o| o.symbol == 0) && p[4..].iter().all(|o| o.symbol == 1));
        assert!(sample_path(&m, &san, 0, 0, 1).is_err());
    }

    #[test]
    fn sample_path_is_deterministic() {
        let m = random_instance(4, 2, 9).unwrap().with_change_point(ChangePoint::At(20));
        let san = Sanitizer::Channel(Channel::identity(4));
        assert_eq!(sample_path(&m, &san, 1, 100, 5).unwrap(), sample_path(&m, &san, 1, 100, 5).unwrap());
    }

    #[test]
    fn empirical_frequencies_converge() {
        let m = random_instance(5, 2, 21).unwrap();
        let t = Channel::from_rows(vec![
            vec![0.6, 0.1, 0.0, 0.3, 0.2],
            vec![0.2, 0.5, 0.1, 0.3, 0.2],
            vec![0.1, 0.2, 0.8, 0.1, 0.2],
            vec![0.1, 0.1, 0.05, 0.2, 0.2],
            vec![0.0, 0.1, 0.05, 0.1, 0.2],
        ])
        .unwrap();
        let san = Sanitizer::Channel(t.clone());
        let n = 100_000;
        let path = sample_path(&m, &san, 0, n, 77).unwrap();
        let mut counts = vec![0.0; 5];
        for o in &path {
            counts[o.symbol] += 1.0 / n as f64;
        }
        let want = apply_channel(&t, m.pre()).unwrap();
        assert!(l1(&counts, want.probs()) < 0.02);
    }

    #[test]
    fn categorical_never_returns_zero_mass_symbol() {
        let c = Categorical::new(&[0.0, 0.5, 0.5, 0.0]);
        let mut rng = stream_rng(1, 0);
        for _ in 0..10_000 {
            let s = c.sample(&mut rng);
            assert!(s == 1 || s == 2);
        }
    }
}
