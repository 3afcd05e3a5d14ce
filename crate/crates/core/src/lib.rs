//! Privacy-aware quickest change detection.
//!
//! Raw observations pass through a sanitization channel before release. The
//! crate designs channels that keep the post-change distribution detectable
//! while bounding what the released stream reveals about which post-change
//! distribution occurred, and evaluates the resulting GLR CuSum detector.
//!
//! * [`exact`] and [`smooth`] design channels under a maximal-leakage budget.
//! * [`milp`] designs channel mixtures under sequential-hypothesis-testing
//!   privacy (K1/K2 constraints).
//! * [`detection`] simulates the detector; [`harness`] runs the sweeps.

pub mod detection;
pub mod error;
pub mod exact;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod milp;
pub mod model;
pub mod partitions;
pub mod privacy;
pub mod smooth;

pub use detection::{
    calibrate_threshold, estimate_arl, estimate_ewadd, glr_step, DetectionReport, DetectionSystem, Estimate,
    GlrState, Regime,
};
pub use error::{Error, Result};
pub use exact::{
    exact_design_ml, local_exact_decentralized, solve_partition_subproblem, vertex_enumerate, DecentralizedDesign,
    DesignResult, ExactOptions, MergePolytope, SolverStats,
};
pub use harness::{ExperimentConfig, ExperimentKind, ModelSource, Table};
pub use io::{load_model, parse_model, LoadedModel};
pub use lp::{simplex_solve, LinearProgram, LpSolution, LpStatus, Relation};
pub use milp::{
    branch_and_bound, build_milp_sht, deterministic_channel_set, ChannelMixture, MilpProblem, MilpSolution,
    SensorChannels,
};
pub use model::{
    apply_channel, expected_kl_objective, kl_divergence, random_decentralized, random_instance, ChangePoint, Channel,
    DecentralizedModel, Observation, Pmf, Sanitizer, SignalModel,
};
pub use partitions::{enumerate_partitions, stirling2};
pub use privacy::{k1_metric, k2_metric, max_blocks, mixture_k_metrics, Partition, PrivacyBudget};
pub use smooth::{auglag_design_ml, smoothed_distinct_count, SmoothParams};
