//! The iterative labeling protocol.
//!
//! Each repeat subsamples the source domain, starts every algorithm with no
//! labeled target rows, and alternates between predicting on the remaining
//! target pool (scored against ground truth held only by the harness) and
//! revealing `k` more labels. Randomly labeling algorithms share one random
//! order per repeat, so they always hold the same labeled set.

use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::fit_extra_classifier;
use crate::baselines::{strategy_step, Strategy, StrategyInput};
use crate::data::{assemble_task, ClassCounts, Dataset, Label};
use crate::error::{AwarError, Result};
use crate::pipeline::features::{fit_feature_pipeline, fit_matrix};
use crate::pipeline::io::read_dataset_csv;
use crate::pipeline::manifest::{Algorithm, ExperimentManifest};
use crate::pipeline::metrics::{metrics, CurvePoint, PerformanceCurve};
use crate::war::{awar_step, init_pseudo_labels, PseudoLabels, Selector, WarVariant};

/// Datasets as read from disk.
#[derive(Debug, Clone)]
pub struct RawData {
    pub source: Dataset,
    pub target: Dataset,
    pub target_all: Option<Dataset>,
}

impl RawData {
    pub fn new(source: Dataset, target: Dataset, target_all: Option<Dataset>) -> Result<Self> {
        source.require_labels("source dataset")?;
        target.require_labels("target dataset (ground truth for evaluation)")?;
        if let Some(all) = &target_all {
            if all.n_rows() != target.n_rows() {
                return Err(AwarError::DimensionMismatch {
                    expected: target.n_rows(),
                    found: all.n_rows(),
                    context: "all-channel target rows",
                });
            }
        }
        Ok(RawData {
            source,
            target,
            target_all,
        })
    }

    pub fn load(manifest: &ExperimentManifest) -> Result<Self> {
        let source = read_dataset_csv(&manifest.source, "source")?;
        let target = read_dataset_csv(&manifest.target, "target")?;
        let target_all = match &manifest.target_all {
            Some(p) => Some(read_dataset_csv(p, "target_all")?),
            None => None,
        };
        RawData::new(source, target, target_all)
    }
}

/// Features after PCA and scaling.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub source: Dataset,
    /// Labels here are the hidden ground truth.
    pub target: Dataset,
    /// All-channel target features, with their own PCA.
    pub target_all: Option<DMatrix<f64>>,
}

impl ExperimentData {
    /// The all-channel block gets its own PCA, capped at its raw dimension.
    pub fn prepare(raw: &RawData, pca_dim: usize) -> Result<Self> {
        let transform = fit_feature_pipeline(&raw.source, &raw.target, pca_dim)?;
        let target_all = match &raw.target_all {
            Some(all) => {
                let t = fit_matrix(all.features(), pca_dim.min(all.dim()))?;
                Some(t.apply(all.features())?)
            }
            None => None,
        };
        Ok(ExperimentData {
            source: transform.apply_dataset(&raw.source)?,
            target: transform.apply_dataset(&raw.target)?,
            target_all,
        })
    }
}

/// Labels revealed to one algorithm at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub repeat: usize,
    pub algorithm: String,
    pub iteration: usize,
    /// Labeled target rows before this batch.
    pub m_l: usize,
    /// Target row indices, in the order they were chosen.
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub curves: Vec<PerformanceCurve>,
    pub selections: Vec<SelectionRecord>,
}

/// Load, preprocess and run everything a manifest describes.
///
/// `jobs` caps the number of repeats run in parallel; 0 uses every core.
pub fn run_experiment(manifest: &ExperimentManifest, jobs: usize) -> Result<ExperimentOutput> {
    manifest.validate()?;
    let raw = RawData::load(manifest)?;
    let data = ExperimentData::prepare(&raw, manifest.pca_dim)?;
    run_prepared(&data, manifest, jobs)
}

pub fn run_prepared(data: &ExperimentData, manifest: &ExperimentManifest, jobs: usize) -> Result<ExperimentOutput> {
    manifest.validate()?;
    let pool = data.target.n_rows();
    if manifest.label_budget() >= pool {
        return Err(AwarError::InvalidParameter(format!(
            "labeling budget k * max_iterations = {} must stay below the target pool size {pool}",
            manifest.label_budget()
        )));
    }
    if manifest.algorithms.iter().any(|a| a.needs_all_channels()) && data.target_all.is_none() {
        return Err(AwarError::InvalidParameter("extra-channel algorithms need all-channel target data".into()));
    }
    if data.source.n_rows() < manifest.source_subsample {
        log::warn!(
            "source has {} rows, fewer than the requested subsample of {}; using all of them",
            data.source.n_rows(),
            manifest.source_subsample
        );
    }
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AwarError::InvalidParameter(format!("thread pool: {e}")))?;
    let per_repeat: Vec<ExperimentOutput> = threads.install(|| {
        (0..manifest.repeats)
            .into_par_iter()
            .map(|r| run_repeat(data, manifest, r))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = ExperimentOutput::default();
    for r in per_repeat {
        out.curves.extend(r.curves);
        out.selections.extend(r.selections);
    }
    Ok(out)
}

/// Ground truth for the target pool. Only the harness holds one.
struct Oracle<'a> {
    labels: &'a [Label],
}

impl Oracle<'_> {
    fn reveal(&self, rows: &[usize]) -> Vec<Label> {
        rows.iter().map(|&i| self.labels[i]).collect()
    }
}

struct AlgoState {
    algorithm: Algorithm,
    labeled: Vec<usize>,
    is_labeled: Vec<bool>,
    /// Current pseudo label of each target row still in the pool.
    pseudo: Vec<Option<Label>>,
    points: Vec<CurvePoint>,
}

/// Output of one algorithm at one iteration, in pool coordinates.
struct Prediction {
    labels: Option<Vec<Label>>,
    selected: Vec<usize>,
}

fn run_repeat(data: &ExperimentData, manifest: &ExperimentManifest, repeat: usize) -> Result<ExperimentOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    rng.set_stream(repeat as u64);

    let n_src = data.source.n_rows();
    let take = manifest.source_subsample.min(n_src);
    let mut rows = rand::seq::index::sample(&mut rng, n_src, take).into_vec();
    rows.sort_unstable();
    let source = data.source.select_rows(&rows);

    let m = data.target.n_rows();
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let oracle = Oracle {
        labels: data.target.labels().expect("target labels checked on load"),
    };

    let k = manifest.k;
    let last = manifest.max_iterations;
    let mut states: Vec<AlgoState> = manifest
        .algorithms
        .iter()
        .map(|&algorithm| AlgoState {
            algorithm,
            labeled: Vec::new(),
            is_labeled: vec![false; m],
            pseudo: vec![None; m],
            points: Vec::with_capacity(last + 1),
        })
        .collect();
    // Every wAR learner starts from the same task, so the initial pseudo labels are shared.
    let mut initial_pseudo: Option<PseudoLabels> = None;
    let mut selections = Vec::new();

    for t in 0..=last {
        for st in states.iter_mut() {
            let pool: Vec<usize> = (0..m).filter(|&i| !st.is_labeled[i]).collect();
            let choose = t < last && !st.algorithm.labels_randomly();
            let ctx = StepContext {
                data,
                source: &source,
                oracle: &oracle,
                manifest,
                pool: &pool,
                choose,
            };
            let pred = ctx.predict(st, &mut initial_pseudo)?;

            let truth = oracle.reveal(&pool);
            let point = match &pred.labels {
                Some(p) if ClassCounts::of(&truth).has_both() => Some(metrics(&truth, p)?),
                _ => None,
            };
            st.points.push(CurvePoint {
                m_l: st.labeled.len(),
                metrics: point,
            });

            if t == last {
                continue;
            }
            let batch: Vec<usize> = if st.algorithm.labels_randomly() || pred.selected.is_empty() {
                // Random labelers follow the shared order; an active learner
                // without a model falls back to it too.
                order.iter().copied().filter(|&i| !st.is_labeled[i]).take(k).collect()
            } else {
                pred.selected.iter().map(|&j| pool[j]).collect()
            };
            selections.push(SelectionRecord {
                repeat,
                algorithm: st.algorithm.name().to_string(),
                iteration: t,
                m_l: st.labeled.len(),
                selected: batch.clone(),
            });
            for i in batch {
                st.is_labeled[i] = true;
                st.pseudo[i] = None;
                st.labeled.push(i);
            }
        }
    }
    log::info!("repeat {repeat} finished");

    Ok(ExperimentOutput {
        curves: states
            .into_iter()
            .map(|st| PerformanceCurve::new(st.algorithm.name(), repeat, st.points))
            .collect(),
        selections,
    })
}

struct StepContext<'a> {
    data: &'a ExperimentData,
    source: &'a Dataset,
    oracle: &'a Oracle<'a>,
    manifest: &'a ExperimentManifest,
    pool: &'a [usize],
    /// Whether this algorithm must pick the next batch itself.
    choose: bool,
}

impl StepContext<'_> {
    fn labeled_target(&self, st: &AlgoState, features: &DMatrix<f64>) -> Result<Dataset> {
        Dataset::labeled(
            "target_labeled",
            features.select_rows(&st.labeled),
            self.oracle.reveal(&st.labeled),
        )
    }

    fn predict(&self, st: &mut AlgoState, initial_pseudo: &mut Option<PseudoLabels>) -> Result<Prediction> {
        let manifest = self.manifest;
        let k = manifest.k;
        let common = self.data.target.features();
        match st.algorithm {
            Algorithm::Bl | Algorithm::Tl | Algorithm::Atl | Algorithm::BlEc => {
                let (kind, features) = match st.algorithm {
                    Algorithm::Bl => (Strategy::Bl, common),
                    Algorithm::Tl => (Strategy::Tl, common),
                    Algorithm::Atl => (Strategy::Atl, common),
                    _ => (Strategy::Bl, self.all_channels()?),
                };
                let tl = self.labeled_target(st, features)?;
                let pool_x = features.select_rows(self.pool);
                let empty = Dataset::empty("source", features.ncols());
                let source = if kind == Strategy::Bl { &empty } else { self.source };
                let out = strategy_step(
                    kind,
                    &StrategyInput {
                        source,
                        target_labeled: &tl,
                        pool: &pool_x,
                        k: k.min(self.pool.len()),
                        svm: &manifest.svm,
                    },
                )?;
                Ok(Prediction {
                    labels: out.predictions,
                    selected: if self.choose { out.selected } else { Vec::new() },
                })
            }
            alg => {
                let variant = match alg {
                    Algorithm::WarRls | Algorithm::AwarRls | Algorithm::AwarRlsEc => WarVariant::Rls,
                    _ => WarVariant::Svm,
                };
                let tl = self.labeled_target(st, common)?;
                let pool_ds = Dataset::unlabeled("pool", common.select_rows(self.pool))?;
                let task = assemble_task(self.source, &tl, &pool_ds)?;

                let carried: Option<Vec<Label>> = self.pool.iter().map(|&i| st.pseudo[i]).collect();
                let pseudo = match carried {
                    Some(p) => PseudoLabels::new(p),
                    None => match initial_pseudo {
                        Some(p) if st.labeled.is_empty() => p.clone(),
                        _ => {
                            let p = init_pseudo_labels(&task, &manifest.war, &manifest.svm)?;
                            if st.labeled.is_empty() {
                                *initial_pseudo = Some(p.clone());
                            }
                            p
                        }
                    },
                };

                let g_scores;
                let selector = match alg {
                    _ if !self.choose => Selector::None,
                    Algorithm::AwarRls | Algorithm::AwarSvm => Selector::Common,
                    Algorithm::AwarRlsEc | Algorithm::AwarSvmEc => {
                        let all = self.all_channels()?;
                        let labels = self.oracle.reveal(&st.labeled);
                        let scorer = fit_extra_classifier(&all.select_rows(&st.labeled), &labels, None, &manifest.svm)?;
                        g_scores = scorer.scores(&all.select_rows(self.pool))?;
                        Selector::Extra(g_scores.as_slice())
                    }
                    _ => Selector::None,
                };
                let step = awar_step(&task, &manifest.war, variant, &pseudo, k, selector)?;
                for (j, &i) in self.pool.iter().enumerate() {
                    st.pseudo[i] = Some(step.pseudo.as_slice()[j]);
                }
                Ok(Prediction {
                    labels: Some(step.predictions),
                    selected: step.selected,
                })
            }
        }
    }

    fn all_channels(&self) -> Result<&DMatrix<f64>> {
        self.data
            .target_all
            .as_ref()
            .ok_or_else(|| AwarError::InvalidParameter("all-channel target data missing".into()))
    }
}

/// Parameter varied by [`run_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Sigma,
    /// Sets both MMD weights to the same value.
    Lambda,
    /// Number of principal components.
    Pcs,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Sigma => "sigma",
            SweepParam::Lambda => "lambda",
            SweepParam::Pcs => "pcs",
        }
    }
}

impl FromStr for SweepParam {
    type Err = AwarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(SweepParam::Sigma),
            "lambda" => Ok(SweepParam::Lambda),
            "pcs" => Ok(SweepParam::Pcs),
            _ => Err(AwarError::InvalidParameter(format!(
                "unknown sweep parameter {s:?} (expected sigma, lambda or pcs)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub output: ExperimentOutput,
}

/// Rerun the manifest once per value of `param`.
pub fn run_sweep(manifest: &ExperimentManifest, param: SweepParam, values: &[f64], jobs: usize) -> Result<Vec<SweepPoint>> {
    manifest.validate()?;
    if values.is_empty() {
        return Err(AwarError::InvalidParameter("sweep needs at least one value".into()));
    }
    let raw = RawData::load(manifest)?;
    sweep_prepared(&raw, manifest, param, values, jobs)
}

pub fn sweep_prepared(
    raw: &RawData,
    manifest: &ExperimentManifest,
    param: SweepParam,
    values: &[f64],
    jobs: usize,
) -> Result<Vec<SweepPoint>> {
    let base = if param == SweepParam::Pcs {
        None
    } else {
        Some(ExperimentData::prepare(raw, manifest.pca_dim)?)
    };
    values
        .iter()
        .map(|&value| {
            let mut m = manifest.clone();
            match param {
                SweepParam::Sigma => m.war.sigma = value,
                SweepParam::Lambda => {
                    m.war.lambda_p = value;
                    m.war.lambda_q = value;
                }
                SweepParam::Pcs => {
                    if !(value >= 1.0 && value.fract() == 0.0) {
                        return Err(AwarError::InvalidParameter(format!(
                            "principal component count must be a positive integer, got {value}"
                        )));
                    }
                    m.pca_dim = value as usize;
                }
            }
            m.validate()?;
            let output = match &base {
                Some(data) => run_prepared(data, &m, jobs)?,
                None => run_prepared(&ExperimentData::prepare(raw, m.pca_dim)?, &m, jobs)?,
            };
            Ok(SweepPoint { value, output })
        })
        .collect()
}

/// Mean area under the curve per algorithm, over curves that have one.
pub fn mean_aupc(curves: &[PerformanceCurve], algorithm: &str) -> Option<f64> {
    let vals: Vec<f64> = curves
        .iter()
        .filter(|c| c.algorithm == algorithm)
        .filter_map(|c| c.aupc)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synth::{gen_synthetic, ShiftSpec};

    fn small_data(extra: bool) -> RawData {
        let spec = ShiftSpec {
            dim: 6,
            informative_dims: 2,
            separation: 3.0,
            p_pos: 0.3,
            rotation_deg: vec![20.0],
            n_source: 60,
            n_target: 50,
            extra_dims: if extra { 3 } else { 0 },
            extra_separation: 3.0,
            ..Default::default()
        };
        let d = gen_synthetic(&spec, 5).unwrap();
        RawData::new(d.source, d.target, d.target_all).unwrap()
    }

    fn manifest(algorithms: Vec<Algorithm>) -> ExperimentManifest {
        ExperimentManifest {
            k: 3,
            max_iterations: 2,
            repeats: 2,
            source_subsample: 40,
            pca_dim: 4,
            target_all: Some("unused".into()),
            ..ExperimentManifest::new("s", "t", algorithms)
        }
    }

    #[test]
    fn protocol_shape() {
        let raw = small_data(false);
        let m = ExperimentManifest {
            repeats: 1,
            max_iterations: 1,
            ..manifest(vec![Algorithm::WarRls])
        };
        let data = ExperimentData::prepare(&raw, m.pca_dim).unwrap();
        let out = run_prepared(&data, &m, 1).unwrap();
        assert_eq!(out.curves.len(), 1);
        let ms: Vec<usize> = out.curves[0].points.iter().map(|p| p.m_l).collect();
        assert_eq!(ms, vec![0, 3]);
    }

    #[test]
    fn all_algorithms_run_and_are_reproducible() {
        let raw = small_data(true);
        let m = manifest(Algorithm::ALL.to_vec());
        let data = ExperimentData::prepare(&raw, m.pca_dim).unwrap();
        let a = run_prepared(&data, &m, 1).unwrap();
        let b = run_prepared(&data, &m, 2).unwrap();
        assert_eq!(a.curves, b.curves);
        assert_eq!(a.selections, b.selections);
        assert_eq!(a.curves.len(), 2 * Algorithm::ALL.len());

        for c in &a.curves {
            let ms: Vec<usize> = c.points.iter().map(|p| p.m_l).collect();
            assert_eq!(ms, vec![0, 3, 6]);
            for p in c.points.iter().filter_map(|p| p.metrics) {
                assert!((p.bca - (1.0 - (p.fpr + p.fnr) / 2.0)).abs() < 1e-15);
            }
            if let Some(v) = c.aupc {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        // BL has no model before any label is revealed.
        let bl = a.curves.iter().find(|c| c.algorithm == "BL").unwrap();
        assert!(bl.points[0].metrics.is_none());
        let war = a.curves.iter().find(|c| c.algorithm == "wAR-RLS").unwrap();
        assert!(war.points[0].metrics.is_some());
    }

    #[test]
    fn random_labelers_share_batches() {
        let raw = small_data(true);
        let m = manifest(vec![Algorithm::Bl, Algorithm::Tl, Algorithm::WarSvm, Algorithm::BlEc, Algorithm::AwarRls]);
        let data = ExperimentData::prepare(&raw, m.pca_dim).unwrap();
        let out = run_prepared(&data, &m, 1).unwrap();
        for repeat in 0..2 {
            for it in 0..2 {
                let batches: Vec<&Vec<usize>> = out
                    .selections
                    .iter()
                    .filter(|s| s.repeat == repeat && s.iteration == it && s.algorithm != "AwAR-RLS")
                    .map(|s| &s.selected)
                    .collect();
                assert_eq!(batches.len(), 4);
                assert!(batches.iter().all(|b| *b == batches[0]));
            }
        }
        // Different repeats use different random streams.
        let first = |r: usize| out.selections.iter().find(|s| s.repeat == r).unwrap().selected.clone();
        assert_ne!(first(0), first(1));
    }

    #[test]
    fn budget_must_fit_pool() {
        let raw = small_data(false);
        let m = ExperimentManifest { k: 10, max_iterations: 5, ..manifest(vec![Algorithm::Bl]) };
        let data = ExperimentData::prepare(&raw, m.pca_dim).unwrap();
        assert!(run_prepared(&data, &m, 1).is_err());
    }

    #[test]
    fn sweep_changes_only_the_swept_value() {
        let raw = small_data(false);
        let m = ExperimentManifest { repeats: 1, ..manifest(vec![Algorithm::AwarRls]) };
        let pts = sweep_prepared(&raw, &m, SweepParam::Pcs, &[2.0, 4.0], 1).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(sweep_prepared(&raw, &m, SweepParam::Pcs, &[2.5], 1).is_err());
        let s = sweep_prepared(&raw, &m, SweepParam::Sigma, &[0.1], 1).unwrap();
        let data = ExperimentData::prepare(&raw, m.pca_dim).unwrap();
        assert_eq!(s[0].output.curves, run_prepared(&data, &m, 1).unwrap().curves);
        assert!(mean_aupc(&s[0].output.curves, "AwAR-RLS").is_some());
        assert!(mean_aupc(&s[0].output.curves, "BL").is_none());
    }
}
