//! GLR CuSum detection on sanitized observations and Monte Carlo estimates
//! of its average run length and worst-case detection delay.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{l1, stream_rng, DecentralizedModel, Pmf, RegimeSampler, Sanitizer, SignalModel};
use crate::privacy::IMAGE_GROUPING_TOL;

/// Saturation of a single log-likelihood ratio, nats.
pub const LLR_CLAMP: f64 = 50.0;
pub const DEFAULT_HORIZON: u64 = 1_000_000;

/// `log(g(y) / f(y))` with zero probabilities saturated at `±LLR_CLAMP`.
pub fn clamped_llr(g: f64, f: f64) -> f64 {
    if g <= 0.0 {
        -LLR_CLAMP
    } else if f <= 0.0 {
        LLR_CLAMP
    } else {
        (g / f).ln().clamp(-LLR_CLAMP, LLR_CLAMP)
    }
}

/// CuSum statistics, one per distinct post-change law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlrState {
    stats: Vec<f64>,
    threshold: f64,
    stopped: bool,
    time: u64,
}

impl GlrState {
    pub fn new(num_hypotheses: usize, threshold: f64) -> Self {
        GlrState { stats: vec![0.0; num_hypotheses], threshold, stopped: false, time: 0 }
    }

    /// `S(t) = max_j S_j(t)`.
    pub fn statistic(&self) -> f64 {
        self.stats.iter().copied().fold(0.0, f64::max)
    }

    pub fn stats(&self) -> &[f64] {
        &self.stats
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Adds one log-likelihood ratio per hypothesis.
    #[inline]
    pub fn push_llrs(&mut self, llrs: &[f64]) {
        for (s, l) in self.stats.iter_mut().zip(llrs) {
            *s = (*s + l).max(0.0);
        }
        self.time += 1;
        if self.statistic() >= self.threshold {
            self.stopped = true;
        }
    }
}

/// One recursion step for the observation `y`.
pub fn glr_step(state: &mut GlrState, y: usize, f: &Pmf, g: &[Pmf]) -> Result<()> {
    if g.len() != state.stats.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} laws for {} statistics",
            g.len(),
            state.stats.len()
        )));
    }
    if y >= f.alphabet_size() || g.iter().any(|p| p.alphabet_size() != f.alphabet_size()) {
        return Err(Error::InvalidArgument(format!("observation {y} outside the alphabet")));
    }
    if f[y] == 0.0 && g.iter().all(|p| p[y] == 0.0) {
        return Err(Error::InvalidModel(format!("observation {y} has probability zero under every law")));
    }
    let llrs: Vec<f64> = g.iter().map(|p| clamped_llr(p[y], f[y])).collect();
    state.push_llrs(&llrs);
    Ok(())
}

/// Which law generates the simulated observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    PreChange,
    /// Change at time 1 to post-change index `i`.
    PostChange(usize),
}

struct SensorTables {
    /// `llr[arm][symbol][hypothesis]`
    llr: Vec<Vec<Vec<f64>>>,
    pre: RegimeSampler,
    post: Vec<RegimeSampler>,
}

/// Precomputed log-likelihood tables and samplers for one or more sensors.
/// Hypotheses are the distinct joint sanitized post-change laws.
pub struct DetectionSystem {
    sensors: Vec<SensorTables>,
    hypothesis_of: Vec<usize>,
    num_hypotheses: usize,
    prior: Pmf,
}

fn sanitized_laws(model: &SignalModel, sanitizer: &Sanitizer) -> Result<(Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>)> {
    if sanitizer.in_size() != model.alphabet_size() {
        return Err(Error::DimensionMismatch(format!(
            "sanitizer takes {} symbols, model alphabet is {}",
            sanitizer.in_size(),
            model.alphabet_size()
        )));
    }
    let arms = sanitizer.arms();
    let pre = arms.iter().map(|(_, c)| c.apply_raw(model.pre().probs())).collect();
    let post = model
        .post()
        .iter()
        .map(|g| arms.iter().map(|(_, c)| c.apply_raw(g.probs())).collect())
        .collect();
    Ok((pre, post))
}

impl DetectionSystem {
    pub fn new(model: &SignalModel, sanitizer: &Sanitizer) -> Result<Self> {
        Self::build(&[(model, sanitizer)], model.prior().clone())
    }

    /// Independent sensors; the joint ratio is the sum of per-sensor ratios.
    pub fn decentralized(dmodel: &DecentralizedModel, sanitizers: &[Sanitizer]) -> Result<Self> {
        if sanitizers.len() != dmodel.num_sensors() {
            return Err(Error::DimensionMismatch(format!(
                "{} sanitizers for {} sensors",
                sanitizers.len(),
                dmodel.num_sensors()
            )));
        }
        let pairs: Vec<(&SignalModel, &Sanitizer)> = dmodel.sensors().iter().zip(sanitizers).collect();
        Self::build(&pairs, dmodel.prior().clone())
    }

    fn build(pairs: &[(&SignalModel, &Sanitizer)], prior: Pmf) -> Result<Self> {
        let laws: Vec<_> = pairs.iter().map(|(m, s)| sanitized_laws(m, s)).collect::<Result<_>>()?;
        let num_post = prior.alphabet_size();
        // Post indices share a hypothesis when every sensor and arm agrees.
        let mut hypothesis_of = vec![0usize; num_post];
        let mut reps: Vec<usize> = Vec::new();
        for i in 0..num_post {
            let same = |r: usize| {
                laws.iter().all(|(_, post)| {
                    post[i].iter().zip(&post[r]).all(|(a, b)| l1(a, b) <= IMAGE_GROUPING_TOL)
                })
            };
            match reps.iter().position(|&r| same(r)) {
                Some(h) => hypothesis_of[i] = h,
                None => {
                    hypothesis_of[i] = reps.len();
                    reps.push(i);
                }
            }
        }
        let sensors = pairs
            .iter()
            .zip(&laws)
            .map(|((model, sanitizer), (pre, post))| {
                let llr = pre
                    .iter()
                    .enumerate()
                    .map(|(a, f)| {
                        (0..f.len())
                            .map(|y| reps.iter().map(|&r| clamped_llr(post[r][a][y], f[y])).collect())
                            .collect()
                    })
                    .collect();
                SensorTables {
                    llr,
                    pre: RegimeSampler::new(sanitizer, model.pre()),
                    post: model.post().iter().map(|g| RegimeSampler::new(sanitizer, g)).collect(),
                }
            })
            .collect();
        Ok(DetectionSystem { sensors, hypothesis_of, num_hypotheses: reps.len(), prior })
    }

    pub fn num_hypotheses(&self) -> usize {
        self.num_hypotheses
    }

    /// Hypothesis index of each post-change index.
    pub fn hypothesis_of(&self) -> &[usize] {
        &self.hypothesis_of
    }

    pub fn prior(&self) -> &Pmf {
        &self.prior
    }

    fn check_regime(&self, regime: Regime) -> Result<()> {
        match regime {
            Regime::PostChange(i) if i >= self.prior.alphabet_size() => Err(Error::InvalidArgument(format!(
                "post-change index {i} out of range for {} pmfs",
                self.prior.alphabet_size()
            ))),
            _ => Ok(()),
        }
    }

    #[inline]
    fn step<R: Rng>(&self, regime: Regime, rng: &mut R, llrs: &mut [f64]) {
        llrs.iter_mut().for_each(|l| *l = 0.0);
        for s in &self.sensors {
            let obs = match regime {
                Regime::PreChange => s.pre.sample(rng),
                Regime::PostChange(i) => s.post[i].sample(rng),
            };
            for (acc, l) in llrs.iter_mut().zip(&s.llr[obs.channel][obs.symbol]) {
                *acc += l;
            }
        }
    }

    /// Stopping time of one simulated path and whether the horizon cut it.
    pub fn stopping_time(&self, b: f64, regime: Regime, horizon: u64, seed: u64, stream: u64) -> Result<(u64, bool)> {
        self.check_regime(regime)?;
        Ok(self.run(b, regime, horizon, seed, stream))
    }

    fn run(&self, b: f64, regime: Regime, horizon: u64, seed: u64, stream: u64) -> (u64, bool) {
        let mut rng = stream_rng(seed, stream);
        let mut state = GlrState::new(self.num_hypotheses, b);
        let mut llrs = vec![0.0; self.num_hypotheses];
        while state.time < horizon {
            self.step(regime, &mut rng, &mut llrs);
            state.push_llrs(&llrs);
            if state.stopped {
                return (state.time, false);
            }
        }
        (horizon, true)
    }

    /// `S_j(t)` for `t = 1..=len` on one path, ignoring any threshold.
    pub fn statistic_path(&self, regime: Regime, len: u64, seed: u64, stream: u64) -> Result<Vec<Vec<f64>>> {
        self.check_regime(regime)?;
        let mut rng = stream_rng(seed, stream);
        let mut state = GlrState::new(self.num_hypotheses, f64::INFINITY);
        let mut llrs = vec![0.0; self.num_hypotheses];
        Ok((0..len)
            .map(|_| {
                self.step(regime, &mut rng, &mut llrs);
                state.push_llrs(&llrs);
                state.stats.clone()
            })
            .collect())
    }
}

/// Neumaier-compensated sum, taken in slice order.
pub(crate) fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Sample mean with a normal-approximation 95% halfwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub halfwidth: f64,
    /// Runs stopped by the horizon; the mean is then a lower bound.
    pub censored: u64,
    pub trials: u64,
}

impl Estimate {
    fn from_runs(runs: &[(u64, bool)]) -> Self {
        let n = runs.len() as f64;
        let mean = compensated_sum(runs.iter().map(|r| r.0 as f64)) / n;
        let var = if runs.len() > 1 {
            compensated_sum(runs.iter().map(|r| (r.0 as f64 - mean).powi(2))) / (n - 1.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            halfwidth: 1.96 * (var / n).sqrt(),
            censored: runs.iter().filter(|r| r.1).count() as u64,
            trials: runs.len() as u64,
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.halfwidth / 1.96
    }
}

fn check_trials(trials: u64, horizon: u64) -> Result<()> {
    if trials == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("trials and horizon must be at least 1".into()));
    }
    Ok(())
}

const POST_STREAM_BASE: u64 = 1 << 32;

fn simulate(system: &DetectionSystem, b: f64, regime: Regime, trials: u64, horizon: u64, seed: u64) -> Estimate {
    let base = match regime {
        Regime::PreChange => 0,
        Regime::PostChange(i) => (i as u64 + 1) * POST_STREAM_BASE,
    };
    let runs: Vec<(u64, bool)> = (0..trials)
        .into_par_iter()
        .map(|k| system.run(b, regime, horizon, seed, base + k))
        .collect();
    Estimate::from_runs(&runs)
}

/// `E_∞[τ]` from `trials` pre-change paths.
pub fn estimate_arl(system: &DetectionSystem, b: f64, trials: u64, horizon: u64, seed: u64) -> Result<Estimate> {
    check_trials(trials, horizon)?;
    Ok(simulate(system, b, Regime::PreChange, trials, horizon, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub threshold: f64,
    pub trials: u64,
    pub horizon: u64,
    pub seed: u64,
    pub arl: Option<Estimate>,
    /// Per post-change index, change at time 1 from a zero statistic.
    pub wadd: Vec<Estimate>,
    /// `Σ_i p_I(i) wadd_i`.
    pub ewadd: f64,
    pub ewadd_halfwidth: f64,
}

/// WADD of every post-change index and their prior-weighted mean.
pub fn estimate_ewadd(system: &DetectionSystem, b: f64, trials: u64, horizon: u64, seed: u64) -> Result<DetectionReport> {
    check_trials(trials, horizon)?;
    let prior = system.prior.probs();
    let wadd: Vec<Estimate> = (0..prior.len())
        .map(|i| simulate(system, b, Regime::PostChange(i), trials, horizon, seed))
        .collect();
    let ewadd = prior.iter().zip(&wadd).map(|(p, w)| p * w.mean).sum();
    let ewadd_halfwidth = prior
        .iter()
        .zip(&wadd)
        .map(|(p, w)| (p * w.halfwidth).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(DetectionReport { threshold: b, trials, horizon, seed, arl: None, wadd, ewadd, ewadd_halfwidth })
}

/// ARL and EWADD at one threshold.
pub fn evaluate(system: &DetectionSystem, b: f64, trials: u64, horizon: u64, seed: u64) -> Result<DetectionReport> {
    let mut report = estimate_ewadd(system, b, trials, horizon, seed)?;
    report.arl = Some(estimate_arl(system, b, trials, horizon, seed)?);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub arl: Estimate,
    /// `(b, ARL estimate)` for every evaluated threshold.
    pub trace: Vec<(f64, f64)>,
}

/// Bisection on `b` for an ARL estimate in `[γ, 1.2 γ]`, starting from the
/// bracket `[ln γ - 2, ln γ + 4]`. With common random numbers the estimate
/// is nondecreasing in `b`, so the search is well posed.
pub fn calibrate_threshold(
    system: &DetectionSystem,
    gamma: f64,
    tol: f64,
    trials: u64,
    horizon: u64,
    seed: u64,
) -> Result<Calibration> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("ARL target {gamma} must exceed 1")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("bisection tolerance must be positive".into()));
    }
    check_trials(trials, horizon)?;
    let mut trace = Vec::new();
    let arl_at = |b: f64, trace: &mut Vec<(f64, f64)>| {
        let e = simulate(system, b, Regime::PreChange, trials, horizon, seed);
        trace.push((b, e.mean));
        e
    };
    let in_band = |e: &Estimate| e.mean >= gamma && e.mean <= 1.2 * gamma;
    let fail = |message: String, trace: Vec<(f64, f64)>| Err(Error::Calibration { message, trace });

    let mut lo = (gamma.ln() - 2.0).max(0.0);
    let mut hi = gamma.ln() + 4.0;
    while arl_at(lo, &mut trace).mean >= gamma {
        if lo == 0.0 {
            return fail("ARL at b = 0 already exceeds the target".into(), trace);
        }
        lo = (lo - 2.0).max(0.0);
    }
    let mut hi_est = arl_at(hi, &mut trace);
    let mut expansions = 0;
    while hi_est.mean < gamma {
        if hi_est.censored > 0 || expansions == 10 {
            return fail(format!("could not bracket ARL {gamma} below b = {hi}"), trace);
        }
        lo = hi;
        hi += 4.0;
        expansions += 1;
        hi_est = arl_at(hi, &mut trace);
    }
    if in_band(&hi_est) && hi - lo < tol {
        return Ok(Calibration { threshold: hi, arl: hi_est, trace });
    }
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        let e = arl_at(mid, &mut trace);
        if e.mean >= gamma {
            hi = mid;
            hi_est = e;
            if in_band(&hi_est) {
                return Ok(Calibration { threshold: hi, arl: hi_est, trace });
            }
        } else {
            lo = mid;
        }
    }
    if in_band(&hi_est) {
        Ok(Calibration { threshold: hi, arl: hi_est, trace })
    } else {
        fail(
            format!("ARL jumps past [{gamma}, {}] between b = {lo} and b = {hi}", 1.2 * gamma),
            trace,
        )
    }
}
