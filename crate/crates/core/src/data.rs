//! Datasets, the source / labeled-target / unlabeled-target ordering, and the
//! class-balancing sample weights.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AwarError, Result};

/// Binary class label. `Pos` is class 1 (encoded `+1`), `Neg` is class 2
/// (encoded `-1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Pos,
    Neg,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    /// Sign of a decision value, with `sign(0) = +1`.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "1" | "+1" | "1.0" => Some(Label::Pos),
            "-1" | "\u{2212}1" | "-1.0" => Some(Label::Neg),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Pos => f.write_str("1"),
            Label::Neg => f.write_str("-1"),
        }
    }
}

/// Per-class sample counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub pos: usize,
    pub neg: usize,
}

impl ClassCounts {
    pub fn of(labels: &[Label]) -> Self {
        let pos = labels.iter().filter(|&&l| l == Label::Pos).count();
        ClassCounts {
            pos,
            neg: labels.len() - pos,
        }
    }

    pub fn total(&self) -> usize {
        self.pos + self.neg
    }

    pub fn has_both(&self) -> bool {
        self.pos > 0 && self.neg > 0
    }

    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Pos => self.pos,
            Label::Neg => self.neg,
        }
    }
}

/// A feature matrix (rows are samples) with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    id: String,
    features: DMatrix<f64>,
    labels: Option<Vec<Label>>,
}

impl Dataset {
    pub fn new(
        id: impl Into<String>,
        features: DMatrix<f64>,
        labels: Option<Vec<Label>>,
    ) -> Result<Self> {
        if features.ncols() == 0 {
            return Err(AwarError::InvalidData("dataset must have at least one feature".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != features.nrows() {
                return Err(AwarError::DimensionMismatch {
                    expected: features.nrows(),
                    found: labels.len(),
                    context: "label count vs. row count",
                });
            }
        }
        if let Some((row, col)) = first_non_finite(&features) {
            return Err(AwarError::InvalidData(format!(
                "non-finite feature at row {row}, column {col}"
            )));
        }
        Ok(Dataset {
            id: id.into(),
            features,
            labels,
        })
    }

    pub fn labeled(id: impl Into<String>, features: DMatrix<f64>, labels: Vec<Label>) -> Result<Self> {
        Self::new(id, features, Some(labels))
    }

    pub fn unlabeled(id: impl Into<String>, features: DMatrix<f64>) -> Result<Self> {
        Self::new(id, features, None)
    }

    /// A labeled dataset with zero rows.
    pub fn empty(id: impl Into<String>, dim: usize) -> Self {
        Dataset {
            id: id.into(),
            features: DMatrix::zeros(0, dim.max(1)),
            labels: Some(Vec::new()),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn class_counts(&self) -> Option<ClassCounts> {
        self.labels.as_deref().map(ClassCounts::of)
    }

    /// Labels, or an error naming `what` when the dataset is unlabeled.
    pub fn require_labels(&self, what: &'static str) -> Result<&[Label]> {
        match &self.labels {
            Some(l) => Ok(l),
            None if self.is_empty() => Ok(&[]),
            None => Err(AwarError::InvalidData(format!("{what} must be labeled"))),
        }
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            id: self.id.clone(),
            features: self.features.select_rows(rows),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
        }
    }

    pub fn without_labels(&self) -> Dataset {
        Dataset {
            id: self.id.clone(),
            features: self.features.clone(),
            labels: None,
        }
    }

    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Dataset> {
        Dataset::new(self.id.clone(), features, self.labels.clone())
    }
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Some((r, c));
            }
        }
    }
    None
}

/// Training rows stacked as `[source; labeled target; unlabeled target]`.
///
/// Only the labels of the first `n + m_l` rows are held here; ground truth for
/// the unlabeled rows never enters a task.
#[derive(Debug, Clone)]
pub struct TransferTask {
    x: DMatrix<f64>,
    y_source: Vec<Label>,
    y_target_labeled: Vec<Label>,
    m_u: usize,
}

impl TransferTask {
    pub fn n(&self) -> usize {
        self.y_source.len()
    }

    pub fn m_l(&self) -> usize {
        self.y_target_labeled.len()
    }

    pub fn m_u(&self) -> usize {
        self.m_u
    }

    /// Number of labeled rows, `n + m_l`.
    pub fn n_labeled(&self) -> usize {
        self.n() + self.m_l()
    }

    /// Total row count `n + m_l + m_u`.
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y_source(&self) -> &[Label] {
        &self.y_source
    }

    pub fn y_target_labeled(&self) -> &[Label] {
        &self.y_target_labeled
    }

    /// Labels of the first `n + m_l` rows.
    pub fn labeled_labels(&self) -> Vec<Label> {
        self.y_source
            .iter()
            .chain(&self.y_target_labeled)
            .copied()
            .collect()
    }

    pub fn source_counts(&self) -> ClassCounts {
        ClassCounts::of(&self.y_source)
    }

    pub fn target_labeled_counts(&self) -> ClassCounts {
        ClassCounts::of(&self.y_target_labeled)
    }

    /// Row range of the unlabeled target block.
    pub fn unlabeled_range(&self) -> std::ops::Range<usize> {
        self.n_labeled()..self.len()
    }

    pub fn unlabeled_features(&self) -> DMatrix<f64> {
        self.x.rows(self.n_labeled(), self.m_u).into_owned()
    }

    pub fn labeled_features(&self) -> DMatrix<f64> {
        self.x.rows(0, self.n_labeled()).into_owned()
    }
}

/// Stack source, labeled-target and unlabeled-target rows in canonical order.
pub fn assemble_task(
    source: &Dataset,
    target_labeled: &Dataset,
    target_unlabeled: &Dataset,
) -> Result<TransferTask> {
    if source.is_empty() {
        return Err(AwarError::Empty("source domain"));
    }
    if target_unlabeled.is_empty() && target_labeled.is_empty() {
        return Err(AwarError::Empty("target domain"));
    }
    let d = source.dim();
    if !target_unlabeled.is_empty() && target_unlabeled.dim() != d {
        return Err(AwarError::DimensionMismatch {
            expected: d,
            found: target_unlabeled.dim(),
            context: "unlabeled target dimension",
        });
    }
    // A zero-row block carries no dimension information.
    if !target_labeled.is_empty() && target_labeled.dim() != d {
        return Err(AwarError::DimensionMismatch {
            expected: d,
            found: target_labeled.dim(),
            context: "labeled target dimension",
        });
    }
    let y_source = source.require_labels("source domain")?.to_vec();
    let y_target_labeled = target_labeled.require_labels("labeled target")?.to_vec();

    let (n, m_l, m_u) = (source.n_rows(), target_labeled.n_rows(), target_unlabeled.n_rows());
    let mut x = DMatrix::zeros(n + m_l + m_u, d);
    x.rows_mut(0, n).copy_from(source.features());
    if m_l > 0 {
        x.rows_mut(n, m_l).copy_from(target_labeled.features());
    }
    if m_u > 0 {
        x.rows_mut(n + m_l, m_u).copy_from(target_unlabeled.features());
    }

    Ok(TransferTask {
        x,
        y_source,
        y_target_labeled,
        m_u,
    })
}

/// Class-balancing weights: `Pos` rows get 1, `Neg` rows get `n_pos / n_neg`.
///
/// Returns `None` when either class is absent.
pub fn balance_weights(labels: &[Label]) -> Option<Vec<f64>> {
    let counts = ClassCounts::of(labels);
    if !counts.has_both() {
        return None;
    }
    let neg_weight = counts.pos as f64 / counts.neg as f64;
    Some(
        labels
            .iter()
            .map(|&l| match l {
                Label::Pos => 1.0,
                Label::Neg => neg_weight,
            })
            .collect(),
    )
}

/// Overall target weight plus per-sample balancing weights for the source and
/// labeled-target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub w_t: f64,
    pub source: Vec<f64>,
    pub target: Vec<f64>,
}

pub fn class_weights(task: &TransferTask, w_t: f64) -> Result<WeightSpec> {
    if !(w_t > 0.0 && w_t.is_finite()) {
        return Err(AwarError::InvalidParameter(format!(
            "target weight w_t must be positive, got {w_t}"
        )));
    }
    if w_t < 1.0 {
        log::warn!("target weight w_t = {w_t} is below 1; target rows get less emphasis than source rows");
    }
    let source = balance_weights(task.y_source()).ok_or(AwarError::SingleClass("source domain"))?;
    // A single-class labeled target (common in early labeling rounds) keeps unit weights.
    let target = balance_weights(task.y_target_labeled())
        .unwrap_or_else(|| vec![1.0; task.m_l()]);
    Ok(WeightSpec { w_t, source, target })
}

/// Diagonal of the loss weighting matrix `E`.
pub fn build_e(task: &TransferTask, weights: &WeightSpec) -> Result<DVector<f64>> {
    if weights.source.len() != task.n() {
        return Err(AwarError::DimensionMismatch {
            expected: task.n(),
            found: weights.source.len(),
            context: "source weight count",
        });
    }
    if weights.target.len() != task.m_l() {
        return Err(AwarError::DimensionMismatch {
            expected: task.m_l(),
            found: weights.target.len(),
            context: "labeled-target weight count",
        });
    }
    let mut e = DVector::zeros(task.len());
    for (i, &w) in weights.source.iter().enumerate() {
        e[i] = w;
    }
    for (j, &w) in weights.target.iter().enumerate() {
        e[task.n() + j] = weights.w_t * w;
    }
    Ok(e)
}
