use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use privqcd::detection::evaluate;
use privqcd::harness::{detection_table, run_experiment, write_outputs};
use privqcd::milp::DEFAULT_NODE_LIMIT;
use privqcd::*;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "privqcd", version, about = "Privacy-aware quickest change detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact maximal-leakage channel design, one per budget.
    DesignMlExact(MlArgs),
    /// Augmented-Lagrangian maximal-leakage design, one per budget.
    DesignMlAuglag(MlArgs),
    /// Channel-mixture design under K1/K2 privacy by branch and bound.
    DesignShtMilp(ShtArgs),
    /// Per-sensor designs for a decentralized model.
    DesignDecentralized(DecentralizedArgs),
    /// Calibrate thresholds and estimate ARL and EWADD for a sanitizer.
    Simulate(SimulateArgs),
    /// Run an experiment sweep and write CSV (and SVG) output.
    Tradeoff(TradeoffArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// JSON model file.
    #[arg(long, conflicts_with = "random")]
    model: Option<PathBuf>,
    /// Random model with N_X symbols and N_G post-change laws.
    #[arg(long, num_args = 2, value_names = ["N_X", "N_G"])]
    random: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn source(&self) -> Result<ModelSource> {
        match (&self.model, &self.random) {
            (Some(path), None) => Ok(ModelSource::File { path: path.clone() }),
            (None, Some(r)) => Ok(ModelSource::Random { alphabet_size: r[0], num_post: r[1], seed: self.seed }),
            _ => bail!("give --model FILE or --random N_X N_G"),
        }
    }

    fn centralized(&self) -> Result<SignalModel> {
        match self.source()? {
            ModelSource::Random { alphabet_size, num_post, seed } => Ok(random_instance(alphabet_size, num_post, seed)?),
            ModelSource::File { path } => match load_model(&path).with_context(|| format!("reading {}", path.display()))? {
                LoadedModel::Centralized(m) => Ok(m),
                LoadedModel::Decentralized(_) => bail!("{} holds a decentralized model", path.display()),
            },
        }
    }
}

#[derive(Args)]
struct OutArgs {
    /// Directory for output files; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MlArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Leakage budgets in bits.
    #[arg(long, value_delimiter = ',', required = true)]
    epsilon: Vec<f64>,
    /// Output alphabet size (defaults to the input alphabet).
    #[arg(long)]
    out_size: Option<usize>,
    /// Random restarts for the smooth solver.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ShtArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    eps1: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    eps2: Vec<f64>,
    /// Protected post-change indices (at least two).
    #[arg(long, value_delimiter = ',', required = true)]
    private: Vec<usize>,
    /// Public post-change indices.
    #[arg(long, value_delimiter = ',', required = true)]
    public: Vec<usize>,
    #[arg(long)]
    out_size: Option<usize>,
    /// Write the first grid point's MILP in LP format to this file.
    #[arg(long)]
    lp_export: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct DecentralizedArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of sensors for a random model.
    #[arg(long, default_value_t = 2)]
    sensors: usize,
    #[arg(long)]
    identical_sensors: bool,
    /// Leakage budget; selects the maximal-leakage design.
    #[arg(long, conflicts_with_all = ["eps1", "eps2"])]
    epsilon: Option<f64>,
    #[arg(long, requires = "eps2")]
    eps1: Option<f64>,
    #[arg(long, requires = "eps1")]
    eps2: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    private: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    public: Vec<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Sanitizer JSON: a design record, `{"channel": rows}` or
    /// `{"mixture": {...}}`. Identity when absent.
    #[arg(long)]
    sanitizer: Option<PathBuf>,
    /// ARL targets to calibrate against.
    #[arg(long, value_delimiter = ',', conflicts_with = "threshold")]
    gamma: Vec<f64>,
    /// Fixed thresholds instead of calibration.
    #[arg(long, value_delimiter = ',')]
    threshold: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    trials: u64,
    #[arg(long, default_value_t = 1_000_000)]
    horizon: u64,
    #[arg(long)]
    svg: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct TradeoffArgs {
    /// JSON experiment config; other experiment flags are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ml-tradeoff, ml-timing, sht-tradeoff, decentralized-ml-scaling,
    /// decentralized-sht-scaling or detect.
    #[arg(long, required_unless_present = "config")]
    kind: Option<String>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    eps1: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    eps2: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    private: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    public: Vec<usize>,
    /// Sensor counts for the scaling experiments.
    #[arg(long, value_delimiter = ',')]
    sensors: Vec<usize>,
    #[arg(long)]
    identical_sensors: bool,
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    out_size: Option<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    svg: bool,
}

fn emit(out: &OutArgs, name: &str, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match &out.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(format!("{name}.json"));
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn design_record(eps: f64, d: &DesignResult) -> Value {
    json!({
        "epsilon": eps,
        "max_blocks": max_blocks(eps),
        "value": d.value,
        "channel": d.channel,
        "partition": d.partition.block_of(),
        "solver_stats": d.solver_stats,
    })
}

fn failure_record(key: &str, budget: Value, err: &Error) -> Value {
    json!({ key: budget, "error": err.to_string() })
}

fn design_ml(args: &MlArgs, smooth: bool) -> Result<()> {
    let model = args.model.centralized()?;
    let mut records = Vec::new();
    for &eps in &args.epsilon {
        let res = if smooth {
            let params = SmoothParams { out_size: args.out_size, ..SmoothParams::default() };
            auglag_design_ml(&model, eps, &params, args.restarts, args.model.seed).map(|o| o.result)
        } else {
            exact_design_ml(&model, eps, &ExactOptions { out_size: args.out_size, ..ExactOptions::default() })
        };
        records.push(match res {
            Ok(d) => design_record(eps, &d),
            Err(e) => failure_record("epsilon", json!(eps), &e),
        });
    }
    emit(&args.out, if smooth { "design-ml-auglag" } else { "design-ml-exact" }, &Value::Array(records))
}

fn design_sht(args: &ShtArgs) -> Result<()> {
    let model = args.model.centralized()?;
    let x = model.alphabet_size();
    let channels = deterministic_channel_set(x, args.out_size.unwrap_or(x))?;
    let sensors = [SensorChannels { model: &model, channels: &channels }];
    if let Some(path) = &args.lp_export {
        let milp = build_milp_sht(&sensors, &args.private, &args.public, args.eps1[0], args.eps2[0])?;
        fs::write(path, milp.to_lp_format()).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut records = Vec::new();
    for &e1 in &args.eps1 {
        for &e2 in &args.eps2 {
            let budget = json!({ "eps1": e1, "eps2": e2 });
            let res = build_milp_sht(&sensors, &args.private, &args.public, e1, e2)
                .and_then(|milp| branch_and_bound(&milp, &sensors, DEFAULT_NODE_LIMIT))
                .and_then(|sol| Ok((sol.mixtures(&sensors)?.remove(0), sol)));
            records.push(match res {
                Ok((mixture, sol)) => json!({
                    "budget": budget,
                    "value": sol.value,
                    "k1": sol.k1,
                    "k2": sol.k2,
                    "nodes": sol.nodes,
                    "mixture": mixture,
                }),
                Err(e) => failure_record("budget", budget, &e),
            });
        }
    }
    emit(&args.out, "design-sht-milp", &Value::Array(records))
}

fn design_decentralized(args: &DecentralizedArgs) -> Result<()> {
    let dmodel = match args.model.source()? {
        ModelSource::Random { alphabet_size, num_post, seed } => {
            random_decentralized(alphabet_size, num_post, args.sensors, args.identical_sensors, seed)?
        }
        ModelSource::File { path } => match load_model(&path)? {
            LoadedModel::Decentralized(d) => d,
            LoadedModel::Centralized(m) => DecentralizedModel::new(vec![m; args.sensors])?,
        },
    };
    let record = match (args.epsilon, args.eps1, args.eps2) {
        (Some(eps), None, None) => {
            let d = local_exact_decentralized(&dmodel, eps, &ExactOptions::default())?;
            json!({
                "epsilon": eps,
                "value": d.value,
                "partition": d.partition.block_of(),
                "sensors": d.sensors.iter().map(|s| design_record(eps, s)).collect::<Vec<_>>(),
                "solver_stats": d.solver_stats,
            })
        }
        (None, Some(e1), Some(e2)) => {
            let sets: Vec<Vec<Channel>> = dmodel
                .sensors()
                .iter()
                .map(|m| deterministic_channel_set(m.alphabet_size(), m.alphabet_size()))
                .collect::<privqcd::Result<_>>()?;
            let sensors: Vec<SensorChannels> = dmodel
                .sensors()
                .iter()
                .zip(&sets)
                .map(|(model, channels)| SensorChannels { model, channels })
                .collect();
            let milp = build_milp_sht(&sensors, &args.private, &args.public, e1, e2)?;
            let sol = branch_and_bound(&milp, &sensors, DEFAULT_NODE_LIMIT)?;
            json!({
                "budget": { "eps1": e1, "eps2": e2 },
                "value": sol.value,
                "k1": sol.k1,
                "k2": sol.k2,
                "nodes": sol.nodes,
                "mixtures": sol.mixtures(&sensors)?,
            })
        }
        _ => bail!("give --epsilon, or both --eps1 and --eps2"),
    };
    emit(&args.out, "design-decentralized", &record)
}

fn load_sanitizer(path: &Path, alphabet: usize) -> Result<Sanitizer> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    // a design command's output array: take its first successful record
    if let Value::Array(items) = v {
        v = items
            .into_iter()
            .find(|r| r.get("channel").is_some() || r.get("mixture").is_some())
            .context("no design record with a channel or mixture")?;
    }
    let sanitizer = if let Some(m) = v.get("mixture") {
        Sanitizer::Mixture(serde_json::from_value(m.clone()).context("invalid mixture")?)
    } else if let Some(c) = v.get("channel") {
        Sanitizer::Channel(serde_json::from_value(c.clone()).context("invalid channel")?)
    } else {
        bail!("{} has neither a \"channel\" nor a \"mixture\" entry", path.display());
    };
    if sanitizer.in_size() != alphabet {
        bail!("sanitizer takes {} symbols, model alphabet is {alphabet}", sanitizer.in_size());
    }
    Ok(sanitizer)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let model = args.model.centralized()?;
    let (label, sanitizer) = match &args.sanitizer {
        Some(p) => (p.display().to_string(), load_sanitizer(p, model.alphabet_size())?),
        None => ("identity".to_string(), Sanitizer::Channel(Channel::identity(model.alphabet_size()))),
    };
    if !args.threshold.is_empty() {
        let system = DetectionSystem::new(&model, &sanitizer)?;
        let reports = args
            .threshold
            .iter()
            .map(|&b| evaluate(&system, b, args.trials, args.horizon, args.model.seed))
            .collect::<privqcd::Result<Vec<_>>>()?;
        return emit(&args.out, "simulate", &serde_json::to_value(reports)?);
    }
    if args.gamma.is_empty() {
        bail!("give --gamma targets or fixed --threshold values");
    }
    let mut cfg = ExperimentConfig::new(ExperimentKind::Detect, args.model.source()?);
    cfg.gammas = args.gamma.clone();
    cfg.trials = args.trials;
    cfg.horizon = args.horizon;
    cfg.seed = args.model.seed;
    let out = detection_table(&model, &[(label, sanitizer)], &cfg)?;
    match &args.out.out {
        Some(dir) => {
            for p in write_outputs(&cfg, &out, dir, args.svg)? {
                println!("wrote {}", p.display());
            }
        }
        None => print!("{}", out.table.to_csv()?),
    }
    Ok(())
}

fn tradeoff_config(args: &TradeoffArgs) -> Result<ExperimentConfig> {
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    let kind_name = args.kind.as_deref().unwrap_or_default();
    let kind: ExperimentKind =
        serde_json::from_value(json!(kind_name)).with_context(|| format!("unknown experiment kind {kind_name:?}"))?;
    let mut cfg = ExperimentConfig::new(kind, args.model.source()?);
    cfg.epsilons = args.epsilon.clone();
    cfg.eps1 = args.eps1.clone();
    cfg.eps2 = args.eps2.clone();
    cfg.private = args.private.clone();
    cfg.public = args.public.clone();
    cfg.sensors = args.sensors.clone();
    cfg.identical_sensors = args.identical_sensors;
    cfg.gammas = args.gamma.clone();
    cfg.seed = args.model.seed;
    cfg.out_size = args.out_size;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    if let Some(r) = args.restarts {
        cfg.restarts = r;
    }
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    Ok(cfg)
}

fn tradeoff(args: &TradeoffArgs) -> Result<()> {
    let cfg = tradeoff_config(args)?;
    cfg.validate()?;
    let out = run_experiment(&cfg).with_context(|| format!("running {}", cfg.kind.name()))?;
    for p in write_outputs(&cfg, &out, &args.out, args.svg)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::DesignMlExact(a) => design_ml(&a, false),
        Command::DesignMlAuglag(a) => design_ml(&a, true),
        Command::DesignShtMilp(a) => design_sht(&a),
        Command::DesignDecentralized(a) => design_decentralized(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Tradeoff(a) => tradeoff(&a),
    }
}
