//! Experiment orchestration: budget sweeps, sensor scaling and detection
//! trade-offs, emitted as CSV tables with optional SVG line charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{calibrate_threshold, estimate_ewadd, DetectionSystem, DEFAULT_HORIZON};
use crate::error::{Error, Result};
use crate::exact::{exact_design_ml, local_exact_decentralized, ExactOptions};
use crate::io::{load_model, LoadedModel};
use crate::milp::{branch_and_bound, build_milp_sht, deterministic_channel_set, SensorChannels, DEFAULT_NODE_LIMIT};
use crate::model::{random_decentralized, random_instance, Channel, DecentralizedModel, Sanitizer, SignalModel};
use crate::privacy::max_blocks;
use crate::smooth::{auglag_design_ml, SmoothParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MlTradeoff,
    MlTiming,
    ShtTradeoff,
    DecentralizedMlScaling,
    DecentralizedShtScaling,
    Detect,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MlTradeoff => "ml-tradeoff",
            ExperimentKind::MlTiming => "ml-timing",
            ExperimentKind::ShtTradeoff => "sht-tradeoff",
            ExperimentKind::DecentralizedMlScaling => "decentralized-ml-scaling",
            ExperimentKind::DecentralizedShtScaling => "decentralized-sht-scaling",
            ExperimentKind::Detect => "detect",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", deny_unknown_fields)]
pub enum ModelSource {
    File { path: PathBuf },
    Random { alphabet_size: usize, num_post: usize, seed: u64 },
}

fn default_trials() -> u64 {
    2000
}
fn default_horizon() -> u64 {
    DEFAULT_HORIZON
}
fn default_restarts() -> usize {
    10
}
fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelSource,
    /// Maximal-leakage budgets, bits.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub eps1: Vec<f64>,
    #[serde(default)]
    pub eps2: Vec<f64>,
    #[serde(default)]
    pub private: Vec<usize>,
    #[serde(default)]
    pub public: Vec<usize>,
    /// Sensor counts for the scaling experiments.
    #[serde(default)]
    pub sensors: Vec<usize>,
    #[serde(default)]
    pub identical_sensors: bool,
    /// ARL targets for `detect`.
    #[serde(default)]
    pub gammas: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Random instances per budget in `ml-timing`.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub smooth: SmoothParams,
    /// Seed for simulations and solver restarts.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_size: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, model: ModelSource) -> Self {
        ExperimentConfig {
            kind,
            model,
            epsilons: Vec::new(),
            eps1: Vec::new(),
            eps2: Vec::new(),
            private: Vec::new(),
            public: Vec::new(),
            sensors: Vec::new(),
            identical_sensors: false,
            gammas: Vec::new(),
            trials: default_trials(),
            horizon: default_horizon(),
            restarts: default_restarts(),
            repeats: default_repeats(),
            smooth: SmoothParams::default(),
            seed: 0,
            out_size: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{} needs a nonempty {what}", self.kind.name())))
            }
        };
        match self.kind {
            ExperimentKind::MlTradeoff | ExperimentKind::MlTiming => need(!self.epsilons.is_empty(), "epsilon grid"),
            ExperimentKind::ShtTradeoff => {
                need(!self.eps1.is_empty() && !self.eps2.is_empty(), "eps1 and eps2 grid")?;
                need(self.private.len() > 1 && !self.public.is_empty(), "private and public set")
            }
            ExperimentKind::DecentralizedMlScaling => {
                need(!self.sensors.is_empty(), "sensor-count list")?;
                need(!self.epsilons.is_empty(), "epsilon grid")
            }
            ExperimentKind::DecentralizedShtScaling => {
                need(!self.sensors.is_empty(), "sensor-count list")?;
                need(!self.eps1.is_empty() && !self.eps2.is_empty(), "eps1 and eps2 grid")?;
                need(self.private.len() > 1 && !self.public.is_empty(), "private and public set")
            }
            ExperimentKind::Detect => {
                need(!self.gammas.is_empty(), "gamma grid")?;
                need(!self.epsilons.is_empty(), "epsilon grid")
            }
        }?;
        if self.trials == 0 || self.horizon == 0 || self.restarts == 0 || self.repeats == 0 {
            return Err(Error::InvalidArgument("trials, horizon, restarts and repeats must be positive".into()));
        }
        Ok(())
    }

    fn model_seed(&self) -> u64 {
        match self.model {
            ModelSource::Random { seed, .. } => seed,
            ModelSource::File { .. } => self.seed,
        }
    }

    fn centralized(&self) -> Result<SignalModel> {
        match &self.model {
            ModelSource::Random { alphabet_size, num_post, seed } => random_instance(*alphabet_size, *num_post, *seed),
            ModelSource::File { path } => match load_model(path)? {
                LoadedModel::Centralized(m) => Ok(m),
                LoadedModel::Decentralized(_) => {
                    Err(Error::InvalidModel("this experiment needs a single-sensor model".into()))
                }
            },
        }
    }

    /// The first `k` sensors. A single-sensor file is replicated `k` times.
    fn decentralized(&self, k: usize) -> Result<DecentralizedModel> {
        match &self.model {
            ModelSource::Random { alphabet_size, num_post, seed } => {
                random_decentralized(*alphabet_size, *num_post, k, self.identical_sensors, *seed)
            }
            ModelSource::File { path } => match load_model(path)? {
                LoadedModel::Centralized(m) => DecentralizedModel::new(vec![m; k]),
                LoadedModel::Decentralized(d) => {
                    if k > d.num_sensors() {
                        return Err(Error::InvalidArgument(format!(
                            "model file has {} sensors, {k} requested",
                            d.num_sensors()
                        )));
                    }
                    DecentralizedModel::new(d.sensors()[..k].to_vec())
                }
            },
        }
    }
}

/// A CSV table kept as strings so that output formatting is fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parsed numeric values of a column; blanks and non-numbers are `None`.
    pub fn numbers(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let c = self.column(name)?;
        Some(self.rows.iter().map(|r| r[c].parse().ok()).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Numerical(format!("non-UTF-8 CSV output: {e}")))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Table { header, rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    /// Copy without wall-time columns (headers ending in `_ms`).
    pub fn without_timing(&self) -> Table {
        let keep: Vec<usize> = (0..self.header.len()).filter(|&c| !self.header[c].ends_with("_ms")).collect();
        Table {
            header: keep.iter().map(|&c| self.header[c].clone()).collect(),
            rows: self.rows.iter().map(|r| keep.iter().map(|&c| r[c].clone()).collect()).collect(),
        }
    }
}

/// Removes wall-time columns from CSV text.
pub fn strip_timing_columns(csv_text: &str) -> Result<String> {
    Table::from_csv(csv_text)?.without_timing().to_csv()
}

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

fn ms(start: Instant) -> String {
    format!("{:.3}", start.elapsed().as_secs_f64() * 1e3)
}

fn status_of(e: &Error) -> String {
    match e {
        Error::Refused(_) => "refused".into(),
        Error::Infeasible(_) => "infeasible".into(),
        Error::NodeLimit { .. } => "node-limit".into(),
        Error::NoFeasibleRounding { .. } => "no-feasible-rounding".into(),
        Error::Calibration { .. } => "calibration-failed".into(),
        _ => "error".into(),
    }
}

/// Result of one experiment: the main table and an optional chart.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: Table,
    pub chart: Option<Chart>,
}

/// Exact and augmented-Lagrangian values and wall times per budget.
pub fn run_ml_tradeoff(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let model = cfg.centralized()?;
    let mut table = Table::new(&[
        "seed", "epsilon", "max_blocks", "exact_status", "exact_value", "exact_partitions", "exact_vertices",
        "auglag_status", "auglag_value", "exact_ms", "auglag_ms",
    ]);
    let exact_opts = ExactOptions { out_size: cfg.out_size, ..ExactOptions::default() };
    let smooth = SmoothParams { out_size: cfg.out_size, ..cfg.smooth };
    let (mut exact_pts, mut al_pts) = (Vec::new(), Vec::new());
    for &eps in &cfg.epsilons {
        let t0 = Instant::now();
        let exact = exact_design_ml(&model, eps, &exact_opts);
        let exact_ms = ms(t0);
        let t1 = Instant::now();
        let al = auglag_design_ml(&model, eps, &smooth, cfg.restarts, cfg.seed);
        let al_ms = ms(t1);
        let (es, ev, ep, evx) = match &exact {
            Ok(r) => {
                exact_pts.push((eps, r.value));
                ("ok".into(), num(r.value), r.solver_stats.partitions.to_string(), r.solver_stats.vertices.to_string())
            }
            Err(e) => (status_of(e), String::new(), String::new(), String::new()),
        };
        let (als, alv) = match &al {
            Ok(r) => {
                al_pts.push((eps, r.result.value));
                ("ok".into(), num(r.result.value))
            }
            Err(e) => (status_of(e), String::new()),
        };
        table.rows.push(vec![
            cfg.seed.to_string(),
            num(eps),
            max_blocks(eps).to_string(),
            es,
            ev,
            ep,
            evx,
            als,
            alv,
            exact_ms,
            al_ms,
        ]);
    }
    let chart = Chart {
        title: "Privacy budget vs expected KL divergence".into(),
        x_label: "epsilon (bits)".into(),
        y_label: "E[KL] (nats)".into(),
        series: vec![("exact".into(), exact_pts), ("augmented Lagrangian".into(), al_pts)],
    };
    Ok(ExperimentOutput { table, chart: Some(chart) })
}

/// Wall time of both solvers against the block budget, over `repeats`
/// random instances seeded from the model seed upward.
pub fn run_ml_timing(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut table = Table::new(&[
        "seed", "instance_seed", "epsilon", "max_blocks", "exact_value", "auglag_value", "exact_ms", "auglag_ms",
    ]);
    let (mut exact_pts, mut al_pts) = (Vec::new(), Vec::new());
    let exact_opts = ExactOptions { out_size: cfg.out_size, ..ExactOptions::default() };
    let smooth = SmoothParams { out_size: cfg.out_size, ..cfg.smooth };
    for r in 0..cfg.repeats as u64 {
        let model = match &cfg.model {
            ModelSource::Random { alphabet_size, num_post, seed } => {
                random_instance(*alphabet_size, *num_post, seed + r)?
            }
            ModelSource::File { .. } => cfg.centralized()?,
        };
        for &eps in &cfg.epsilons {
            let t0 = Instant::now();
            let exact = exact_design_ml(&model, eps, &exact_opts);
            let exact_secs = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let al = auglag_design_ml(&model, eps, &smooth, cfg.restarts, cfg.seed);
            let al_secs = t1.elapsed().as_secs_f64();
            if r == 0 {
                exact_pts.push((max_blocks(eps) as f64, exact_secs * 1e3));
                al_pts.push((max_blocks(eps) as f64, al_secs * 1e3));
            }
            table.rows.push(vec![
                cfg.seed.to_string(),
                (cfg.model_seed() + r).to_string(),
                num(eps),
                max_blocks(eps).to_string(),
                exact.map(|x| num(x.value)).unwrap_or_default(),
                al.map(|x| num(x.result.value)).unwrap_or_default(),
                format!("{:.3}", exact_secs * 1e3),
                format!("{:.3}", al_secs * 1e3),
            ]);
        }
    }
    let chart = Chart {
        title: "Solver wall time vs block budget".into(),
        x_label: "m".into(),
        y_label: "time (ms)".into(),
        series: vec![("exact".into(), exact_pts), ("augmented Lagrangian".into(), al_pts)],
    };
    Ok(ExperimentOutput { table, chart: Some(chart) })
}

fn sht_grid(cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    cfg.eps1.iter().flat_map(|&a| cfg.eps2.iter().map(move |&b| (a, b))).collect()
}

/// MILP value over the `(eps1, eps2)` grid with deterministic channels.
pub fn run_sht_tradeoff(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let model = cfg.centralized()?;
    let out = cfg.out_size.unwrap_or(model.alphabet_size());
    let channels = deterministic_channel_set(model.alphabet_size(), out)?;
    let sensors = [SensorChannels { model: &model, channels: &channels }];
    let rows: Vec<Vec<String>> = sht_grid(cfg)
        .into_par_iter()
        .map(|(e1, e2)| {
            let t0 = Instant::now();
            let res = build_milp_sht(&sensors, &cfg.private, &cfg.public, e1, e2)
                .and_then(|milp| branch_and_bound(&milp, &sensors, DEFAULT_NODE_LIMIT));
            let t = ms(t0);
            let (status, value, k1, k2, nodes) = match res {
                Ok(s) => ("ok".into(), num(s.value), num(s.k1), num(s.k2), s.nodes.to_string()),
                Err(e) => (status_of(&e), String::new(), String::new(), String::new(), String::new()),
            };
            vec![cfg.seed.to_string(), num(e1), num(e2), status, value, k1, k2, nodes, t]
        })
        .collect();
    let mut table = Table::new(&["seed", "eps1", "eps2", "status", "value", "k1", "k2", "nodes", "milp_ms"]);
    table.rows = rows;
    let series = cfg
        .eps2
        .iter()
        .map(|&e2| {
            let pts = table
                .rows
                .iter()
                .filter(|r| r[2] == num(e2) && r[3] == "ok")
                .map(|r| (r[1].parse().unwrap(), r[4].parse().unwrap()))
                .collect();
            (format!("eps2 = {e2}"), pts)
        })
        .collect();
    let chart = Chart {
        title: "Privacy budget eps1 vs expected KL divergence".into(),
        x_label: "eps1 (nats)".into(),
        y_label: "E[KL] (nats)".into(),
        series,
    };
    Ok(ExperimentOutput { table, chart: Some(chart) })
}

/// Least-squares slope of `value` against `K`.
fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 { f64::NAN } else { sxy / sxx }
}

/// Decentralized design value against the number of sensors.
pub fn run_decentralized_scaling(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let sht = cfg.kind == ExperimentKind::DecentralizedShtScaling;
    let mut table = Table::new(&[
        "seed", "sensors", "budget", "status", "value", "value_per_sensor", "linear_fit_slope", "solve_ms",
    ]);
    let mut pts = Vec::new();
    let mut budget_label = String::new();
    for &k in &cfg.sensors {
        let dmodel = cfg.decentralized(k)?;
        let t0 = Instant::now();
        let res: Result<f64> = if sht {
            let (e1, e2) = (cfg.eps1[0], cfg.eps2[0]);
            budget_label = format!("eps1={e1};eps2={e2}");
            let sets: Vec<Vec<Channel>> = dmodel
                .sensors()
                .iter()
                .map(|m| deterministic_channel_set(m.alphabet_size(), cfg.out_size.unwrap_or(m.alphabet_size())))
                .collect::<Result<_>>()?;
            let sensors: Vec<SensorChannels<'_>> = dmodel
                .sensors()
                .iter()
                .zip(&sets)
                .map(|(model, channels)| SensorChannels { model, channels })
                .collect();
            build_milp_sht(&sensors, &cfg.private, &cfg.public, e1, e2)
                .and_then(|milp| branch_and_bound(&milp, &sensors, DEFAULT_NODE_LIMIT))
                .map(|s| s.value)
        } else {
            let eps = cfg.epsilons[0];
            budget_label = format!("epsilon={eps}");
            let opts = ExactOptions { out_size: cfg.out_size, ..ExactOptions::default() };
            local_exact_decentralized(&dmodel, eps, &opts).map(|d| d.value)
        };
        let t = ms(t0);
        let (status, value, per) = match res {
            Ok(v) => {
                pts.push((k as f64, v));
                ("ok".to_string(), num(v), num(v / k as f64))
            }
            Err(e) => (status_of(&e), String::new(), String::new()),
        };
        table.rows.push(vec![cfg.seed.to_string(), k.to_string(), budget_label.clone(), status, value, per, String::new(), t]);
    }
    let slope = if pts.len() >= 2 { num(fit_slope(&pts)) } else { String::new() };
    for r in &mut table.rows {
        r[6] = slope.clone();
    }
    let chart = Chart {
        title: "Number of sensors vs expected KL divergence".into(),
        x_label: "K".into(),
        y_label: "E[KL] (nats)".into(),
        series: vec![(budget_label, pts)],
    };
    Ok(ExperimentOutput { table, chart: Some(chart) })
}

/// Calibrated threshold, ARL and EWADD per ARL target, for the unsanitized
/// identity channel and for the exact design at each budget.
pub fn run_detect(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let model = cfg.centralized()?;
    let mut sanitizers = vec![("identity".to_string(), Sanitizer::Channel(Channel::identity(model.alphabet_size())))];
    for &eps in &cfg.epsilons {
        let opts = ExactOptions { out_size: cfg.out_size, ..ExactOptions::default() };
        let design = exact_design_ml(&model, eps, &opts)?;
        sanitizers.push((format!("exact-eps={eps}"), Sanitizer::Channel(design.channel)));
    }
    detection_table(&model, &sanitizers, cfg)
}

/// Detection trade-off rows for explicit sanitizers.
pub fn detection_table(
    model: &SignalModel,
    sanitizers: &[(String, Sanitizer)],
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    let mut table = Table::new(&[
        "seed", "sanitizer", "gamma", "threshold", "arl", "arl_halfwidth", "arl_censored", "ewadd",
        "ewadd_halfwidth", "expected_kl", "calibrate_ms",
    ]);
    let mut series = Vec::new();
    for (label, sanitizer) in sanitizers {
        let system = DetectionSystem::new(model, sanitizer)?;
        let expected_kl = match sanitizer {
            Sanitizer::Channel(c) => crate::model::expected_kl_objective(c, model)?,
            Sanitizer::Mixture(m) => m.objective(model)?,
        };
        let mut pts = Vec::new();
        for &gamma in &cfg.gammas {
            let t0 = Instant::now();
            let cal = calibrate_threshold(&system, gamma, 1e-3, cfg.trials, cfg.horizon, cfg.seed);
            let t = ms(t0);
            match cal {
                Ok(cal) => {
                    let rep = estimate_ewadd(&system, cal.threshold, cfg.trials, cfg.horizon, cfg.seed)?;
                    pts.push((gamma.ln(), rep.ewadd));
                    table.rows.push(vec![
                        cfg.seed.to_string(),
                        label.clone(),
                        num(gamma),
                        num(cal.threshold),
                        num(cal.arl.mean),
                        num(cal.arl.halfwidth),
                        cal.arl.censored.to_string(),
                        num(rep.ewadd),
                        num(rep.ewadd_halfwidth),
                        num(expected_kl),
                        t,
                    ]);
                }
                Err(e) => table.rows.push(vec![
                    cfg.seed.to_string(),
                    label.clone(),
                    num(gamma),
                    status_of(&e),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    num(expected_kl),
                    t,
                ]),
            }
        }
        series.push((label.clone(), pts));
    }
    let chart = Chart {
        title: "ARL vs EWADD".into(),
        x_label: "log ARL".into(),
        y_label: "EWADD".into(),
        series,
    };
    Ok(ExperimentOutput { table, chart: Some(chart) })
}

/// Dispatches on the experiment kind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.kind {
        ExperimentKind::MlTradeoff => run_ml_tradeoff(cfg),
        ExperimentKind::MlTiming => run_ml_timing(cfg),
        ExperimentKind::ShtTradeoff => run_sht_tradeoff(cfg),
        ExperimentKind::DecentralizedMlScaling | ExperimentKind::DecentralizedShtScaling => {
            run_decentralized_scaling(cfg)
        }
        ExperimentKind::Detect => run_detect(cfg),
    }
}

/// Line chart data.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    /// Minimal standalone SVG line plot.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 420.0, 60.0);
        let pts = self.series.iter().flat_map(|s| s.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y1 = y0 + 1.0;
        }
        let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
        let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<path d="M{pad},{pad} V{} H{}" fill="none" stroke="black"/>"#,
            h - pad,
            w - pad
        );
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{fx:.3}</text>"#, sx(fx), h - pad + 18.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{fy:.3}</text>"#, pad - 6.0, sy(fy) + 4.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 16.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            h / 2.0,
            h / 2.0,
            escape(&self.y_label)
        );
        for (k, (name, pts)) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let path: Vec<String> = pts
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if !path.is_empty() {
                let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
                for p in &path {
                    let (cx, cy) = p.split_once(',').unwrap();
                    let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
                }
            }
            let ly = pad + 16.0 * k as f64;
            let _ = writeln!(s, r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/>"#, w - pad - 150.0, ly - 4.0);
            let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, w - pad - 132.0, escape(name));
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Writes `<kind>.csv` (and `<kind>.svg` when asked) into `dir`.
pub fn write_outputs(cfg: &ExperimentConfig, out: &ExperimentOutput, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv_path = dir.join(format!("{}.csv", cfg.kind.name()));
    out.table.write_csv(&csv_path)?;
    written.push(csv_path);
    if svg {
        if let Some(chart) = &out.chart {
            let p = dir.join(format!("{}.svg", cfg.kind.name()));
            std::fs::write(&p, chart.to_svg())?;
            written.push(p);
        }
    }
    Ok(written)
}
