use privqcd::harness::{run_experiment, strip_timing_columns, write_outputs};
use privqcd::io::model_to_json;
use privqcd::*;

fn random(x: usize, g: usize, seed: u64) -> ModelSource {
    ModelSource::Random { alphabet_size: x, num_post: g, seed }
}

fn header(cfg: &ExperimentConfig) -> Vec<String> {
    run_experiment(cfg).unwrap().table.header
}

#[test]
fn ml_tradeoff_rows_follow_the_grid() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::MlTradeoff, random(4, 3, 1));
    cfg.epsilons = vec![0.0, 0.5, 1.0, 3f64.log2()];
    cfg.restarts = 2;
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(
        out.table.header,
        [
            "seed", "epsilon", "max_blocks", "exact_status", "exact_value", "exact_partitions", "exact_vertices",
            "auglag_status", "auglag_value", "exact_ms", "auglag_ms"
        ]
    );
    assert_eq!(out.table.rows.len(), 4);
    let blocks: Vec<String> = out.table.rows.iter().map(|r| r[2].clone()).collect();
    assert_eq!(blocks, ["1", "1", "2", "3"]);
    let exact = out.table.numbers("exact_value").unwrap();
    let al = out.table.numbers("auglag_value").unwrap();
    for w in exact.windows(2) {
        assert!(w[1].unwrap() >= w[0].unwrap() - 1e-12);
    }
    for (e, a) in exact.iter().zip(&al) {
        assert!(a.unwrap() <= e.unwrap() + 1e-6);
    }
    assert!(out.chart.is_some());
}

#[test]
fn table_headers_of_every_kind() {
    let mut c = ExperimentConfig::new(ExperimentKind::ShtTradeoff, random(3, 3, 2));
    c.eps1 = vec![0.1];
    c.eps2 = vec![0.01];
    c.private = vec![0, 1];
    c.public = vec![2];
    assert_eq!(header(&c), ["seed", "eps1", "eps2", "status", "value", "k1", "k2", "nodes", "milp_ms"]);

    let mut c = ExperimentConfig::new(ExperimentKind::MlTiming, random(3, 3, 2));
    c.epsilons = vec![1.0];
    c.restarts = 1;
    assert_eq!(
        header(&c),
        ["seed", "instance_seed", "epsilon", "max_blocks", "exact_value", "auglag_value", "exact_ms", "auglag_ms"]
    );

    let mut c = ExperimentConfig::new(ExperimentKind::DecentralizedShtScaling, random(3, 3, 2));
    c.sensors = vec![1, 2];
    c.eps1 = vec![0.2];
    c.eps2 = vec![0.01];
    c.private = vec![0, 1];
    c.public = vec![2];
    assert_eq!(
        header(&c),
        ["seed", "sensors", "budget", "status", "value", "value_per_sensor", "linear_fit_slope", "solve_ms"]
    );

    let mut c = ExperimentConfig::new(ExperimentKind::Detect, random(3, 2, 2));
    c.gammas = vec![10.0];
    c.epsilons = vec![0.0];
    c.trials = 100;
    let h = header(&c);
    assert_eq!(&h[..4], ["seed", "sanitizer", "gamma", "threshold"]);
    assert!(h.contains(&"ewadd".to_string()));
}

#[test]
fn identical_sensor_scaling_is_linear() {
    let mut c = ExperimentConfig::new(ExperimentKind::DecentralizedMlScaling, random(3, 3, 4));
    c.sensors = vec![1, 2, 3, 4];
    c.epsilons = vec![1.0];
    c.identical_sensors = true;
    let t = run_experiment(&c).unwrap().table;
    let per: Vec<f64> = t.numbers("value_per_sensor").unwrap().into_iter().map(Option::unwrap).collect();
    assert!(per.iter().all(|v| (v - per[0]).abs() < 1e-9));
}

#[test]
fn outputs_are_written_with_unix_newlines() {
    let dir = tempfile::tempdir().unwrap();
    let model = random_instance(3, 2, 6).unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(&path, model_to_json(&model).unwrap()).unwrap();
    let mut cfg = ExperimentConfig::new(ExperimentKind::MlTradeoff, ModelSource::File { path: path.clone() });
    cfg.epsilons = vec![0.0, 1.0];
    cfg.restarts = 1;
    let out = run_experiment(&cfg).unwrap();
    let written = write_outputs(&cfg, &out, &dir.path().join("out"), true).unwrap();
    assert_eq!(written.len(), 2);
    let csv = std::fs::read_to_string(&written[0]).unwrap();
    assert!(!csv.contains('\r') && csv.ends_with('\n'));
    assert_eq!(csv.lines().count(), 3);
    let stripped = strip_timing_columns(&csv).unwrap();
    assert!(!stripped.contains("_ms"));
    let svg = std::fs::read_to_string(&written[1]).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn config_files_parse_and_validate() {
    let json = r#"{"kind":"sht-tradeoff","model":{"source":"random","alphabet_size":3,"num_post":3,"seed":1},
        "eps1":[0.1],"eps2":[0.01],"private":[0,1],"public":[2],"seed":5}"#;
    let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
    assert!(cfg.validate().is_ok());
    let mut bad = cfg.clone();
    bad.private = vec![0];
    assert!(bad.validate().is_err());
    let mut bad = cfg;
    bad.trials = 0;
    assert!(bad.validate().is_err());
}
