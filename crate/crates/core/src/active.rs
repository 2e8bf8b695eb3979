//! Choosing which unlabeled target samples to query.
//!
//! Samples whose predicted label flipped since the previous round (the
//! volatile set) come first; within the volatile and stable groups, samples
//! closest to the decision boundary come first. Equal keys fall back to the
//! original index.

use nalgebra::{DMatrix, DVector};

use crate::baselines::{self, SvmConfig, SvmModel};
use crate::data::{balance_weights, ClassCounts, Label};
use crate::error::{AwarError, Result};

/// Inputs for one selection round. All slices are indexed by unlabeled row.
#[derive(Debug, Clone, Copy)]
pub struct SelectionInput<'a> {
    pub y_prev: &'a [Label],
    pub y_new: &'a [Label],
    pub f_scores: &'a [f64],
    pub g_scores: Option<&'a [f64]>,
    pub k: usize,
}

impl SelectionInput<'_> {
    fn validate(&self) -> Result<usize> {
        let m_u = self.f_scores.len();
        for (len, context) in [
            (self.y_prev.len(), "previous pseudo labels"),
            (self.y_new.len(), "new predictions"),
            (self.g_scores.map_or(m_u, <[f64]>::len), "auxiliary scores"),
        ] {
            if len != m_u {
                return Err(AwarError::DimensionMismatch {
                    expected: m_u,
                    found: len,
                    context,
                });
            }
        }
        if self.k == 0 || self.k > m_u {
            return Err(AwarError::InvalidParameter(format!(
                "cannot select k = {} of {m_u} unlabeled samples",
                self.k
            )));
        }
        Ok(m_u)
    }
}

/// Volatile samples first, each group ascending by `|f|`.
///
/// `g_scores` is ignored.
pub fn select_common(input: &SelectionInput<'_>) -> Result<Vec<usize>> {
    input.validate()?;
    let keys: Vec<f64> = input.f_scores.iter().map(|f| f.abs()).collect();
    Ok(rank(input, &keys))
}

/// Volatile samples first, each group ascending by `|f + g|`.
pub fn select_extra(input: &SelectionInput<'_>) -> Result<Vec<usize>> {
    input.validate()?;
    let g = input
        .g_scores
        .ok_or_else(|| AwarError::InvalidParameter("extra-channel selection needs auxiliary scores".into()))?;
    let keys: Vec<f64> = input
        .f_scores
        .iter()
        .zip(g)
        .map(|(f, g)| (f + g).abs())
        .collect();
    Ok(rank(input, &keys))
}

fn rank(input: &SelectionInput<'_>, keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| {
        let volatile_a = input.y_prev[a] != input.y_new[a];
        let volatile_b = input.y_prev[b] != input.y_new[b];
        volatile_b
            .cmp(&volatile_a)
            .then(keys[a].total_cmp(&keys[b]))
            .then(a.cmp(&b))
    });
    order.truncate(input.k);
    order
}

/// Auxiliary decision function trained on the labeled target rows using all
/// target-side features.
#[derive(Debug, Clone)]
pub enum ExtraScorer {
    /// No classifier could be trained yet; scores are identically zero.
    Zero,
    Svm(SvmModel),
}

impl ExtraScorer {
    pub fn scores(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            ExtraScorer::Zero => Ok(DVector::zeros(x.nrows())),
            ExtraScorer::Svm(model) => model.decision(x),
        }
    }
}

/// Fit the auxiliary classifier on labeled target rows (all-channel features).
///
/// Falls back to [`ExtraScorer::Zero`] while the labeled set is empty or
/// holds a single class. `weights` defaults to class-balancing weights.
pub fn fit_extra_classifier(
    x_labeled: &DMatrix<f64>,
    labels: &[Label],
    weights: Option<&[f64]>,
    config: &SvmConfig,
) -> Result<ExtraScorer> {
    if labels.len() != x_labeled.nrows() {
        return Err(AwarError::DimensionMismatch {
            expected: x_labeled.nrows(),
            found: labels.len(),
            context: "extra-channel label count",
        });
    }
    if !ClassCounts::of(labels).has_both() {
        return Ok(ExtraScorer::Zero);
    }
    let weights = match weights {
        Some(w) => w.to_vec(),
        None => balance_weights(labels).expect("both classes present"),
    };
    let c = baselines::grid_search_c(x_labeled, labels, &weights, &config.c_grid, config.folds);
    Ok(ExtraScorer::Svm(baselines::fit_weighted_svm(x_labeled, labels, &weights, c)?))
}
