//! Active weighted adaptation regularization (AwAR) for transferring a binary
//! classifier from a labeled source domain to a shifted target domain with a
//! small labeling budget.
//!
//! The crate is organized bottom-up:
//!
//! - [`data`]: datasets, the canonical row ordering and class-balancing weights.
//! - [`kernel`]: Gram matrices and marginal / conditional MMD matrices.
//! - [`qp`]: a dense interior-point QP solver.
//! - [`war`]: the wAR-RLS and wAR-SVM learners and one AwAR step.
//! - [`active`]: volatility + uncertainty sample selection.
//! - [`baselines`]: weighted linear SVM and the BL / TL / ATL strategies.
//! - [`pipeline`]: feature pipeline, synthetic shift generator, metrics and the
//!   iterative evaluation harness.
//! - [`stats`]: Friedman test, Dunn comparisons and Benjamini-Hochberg FDR.

pub mod active;
pub mod baselines;
pub mod data;
pub mod error;
pub mod kernel;
pub mod pipeline;
pub mod qp;
pub mod stats;
pub mod war;

pub use data::{assemble_task, build_e, class_weights, ClassCounts, Dataset, Label, TransferTask, WeightSpec};
pub use error::{AwarError, Result};
pub use kernel::{gram, KernelSpec, MmdMatrices, MmdMatrix};
pub use qp::{solve_qp, QpProblem, QpSolution, QpStatus};
pub use active::{select_common, select_extra, ExtraScorer, SelectionInput};
pub use baselines::{fit_weighted_svm, grid_search_c, strategy_step, Strategy, SvmConfig, SvmModel};
pub use war::{
    awar_step, fit_war_rls, fit_war_svm, init_pseudo_labels, predict, PseudoLabels, Selector, SvmSolver, WarModel,
    WarParams, WarVariant,
};
pub use pipeline::{
    run_experiment, run_sweep, Algorithm, CurvePoint, ExperimentManifest, ExperimentOutput, Metrics, PerformanceCurve,
    ShiftSpec, SweepParam,
};
pub use stats::{compare, dunn_pairwise, fdr_adjust, friedman, ScoreTable, StatsReport};
