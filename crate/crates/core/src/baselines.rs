//! Weighted linear soft-margin SVM and the BL / TL / ATL comparison strategies.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::active::{select_common, SelectionInput};
use crate::data::{balance_weights, ClassCounts, Dataset, Label};
use crate::error::{AwarError, Result};
use crate::pipeline::metrics::metrics;
use crate::qp::{solve_qp, QpProblem, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Linear decision function `w·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub w: DVector<f64>,
    pub b: f64,
    /// Penalty the model was trained with.
    pub c: f64,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn decision(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.dim() {
            return Err(AwarError::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
                context: "svm query dimension",
            });
        }
        Ok((x * &self.w).add_scalar(self.b))
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<Label>> {
        Ok(self.decision(x)?.iter().map(|&s| Label::from_score(s)).collect())
    }
}

/// Minimize `½‖w‖² + C Σ sᵢ max(0, 1 − yᵢ(w·xᵢ + b))`.
pub fn fit_weighted_svm(x: &DMatrix<f64>, y: &[Label], weights: &[f64], c: f64) -> Result<SvmModel> {
    let (n, d) = x.shape();
    if y.len() != n || weights.len() != n {
        return Err(AwarError::DimensionMismatch {
            expected: n,
            found: if y.len() != n { y.len() } else { weights.len() },
            context: "svm training rows",
        });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(AwarError::InvalidParameter(format!("svm penalty must be positive, got {c}")));
    }
    if weights.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
        return Err(AwarError::InvalidParameter("svm sample weights must be finite and non-negative".into()));
    }
    if !ClassCounts::of(y).has_both() {
        return Err(AwarError::SingleClass("svm training set"));
    }

    // Variables: [w (d); b; ξ (n)].
    let nv = d + 1 + n;
    let mut p = DMatrix::zeros(nv, nv);
    for i in 0..d {
        p[(i, i)] = 1.0;
    }
    let mut q = DVector::zeros(nv);
    for i in 0..n {
        q[d + 1 + i] = c * weights[i];
    }
    let mut g = DMatrix::zeros(2 * n, nv);
    let mut h = DVector::zeros(2 * n);
    for i in 0..n {
        let yi = y[i].value();
        for j in 0..d {
            g[(i, j)] = -yi * x[(i, j)];
        }
        g[(i, d)] = -yi;
        g[(i, d + 1 + i)] = -1.0;
        h[i] = -1.0;
        g[(n + i, d + 1 + i)] = -1.0;
    }
    let prob = QpProblem::new(p, q)?.with_inequalities(g, h)?;
    let sol = solve_qp(&prob, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    sol.ensure_usable()?;
    Ok(SvmModel {
        w: sol.x.rows(0, d).into_owned(),
        b: sol.x[d],
        c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c_grid: [-5, -3, -1, 1, 3, 5].iter().map(|&e| 2f64.powi(e)).collect(),
            folds: 5,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() || self.c_grid.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(AwarError::InvalidParameter("svm C grid must be non-empty and positive".into()));
        }
        if self.folds < 2 {
            return Err(AwarError::InvalidParameter(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }

    /// Grid search followed by a fit on all rows.
    pub fn fit(&self, x: &DMatrix<f64>, y: &[Label], weights: &[f64]) -> Result<SvmModel> {
        let c = grid_search_c(x, y, weights, &self.c_grid, self.folds);
        fit_weighted_svm(x, y, weights, c)
    }
}

/// Penalty maximizing mean cross-validated balanced accuracy.
///
/// Folds are stratified deterministically: the i-th row of each class goes
/// to fold `i mod folds`. The fold count shrinks to the minority-class
/// count; with fewer than two rows in a class the search is skipped and the
/// middle grid value is returned. Ties go to the smallest C.
pub fn grid_search_c(x: &DMatrix<f64>, y: &[Label], weights: &[f64], grid: &[f64], folds: usize) -> f64 {
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let counts = ClassCounts::of(y);
    let minority = counts.pos.min(counts.neg);
    if grid.is_empty() {
        return 1.0;
    }
    if minority < 2 || grid.len() == 1 {
        return grid[(grid.len() - 1) / 2];
    }
    let folds = folds.clamp(2, minority);
    let mut seen = [0usize; 2];
    let fold_of: Vec<usize> = y
        .iter()
        .map(|&l| {
            let slot = &mut seen[(l == Label::Neg) as usize];
            *slot += 1;
            (*slot - 1) % folds
        })
        .collect();
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
        .map(|f| (0..y.len()).partition(|&i| fold_of[i] != f))
        .collect();

    let mut best = (grid[0], f64::NEG_INFINITY);
    for &c in &grid {
        let mut total = 0.0;
        for (train, test) in &splits {
            total += fold_bca(x, y, weights, c, train, test).unwrap_or_else(|e| {
                log::debug!("cross-validation fold failed at C = {c}: {e}");
                0.0
            });
        }
        let score = total / folds as f64;
        if score > best.1 + 1e-12 {
            best = (c, score);
        }
    }
    best.0
}

fn fold_bca(x: &DMatrix<f64>, y: &[Label], weights: &[f64], c: f64, train: &[usize], test: &[usize]) -> Result<f64> {
    let pick = |rows: &[usize]| -> Vec<Label> { rows.iter().map(|&i| y[i]).collect() };
    let w: Vec<f64> = train.iter().map(|&i| weights[i]).collect();
    let model = fit_weighted_svm(&x.select_rows(train), &pick(train), &w, c)?;
    let pred = model.predict(&x.select_rows(test))?;
    Ok(metrics(&pick(test), &pred)?.bca)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Target-only SVM on randomly labeled samples.
    Bl,
    /// Source plus labeled target, randomly labeled samples.
    Tl,
    /// Source plus labeled target, queries the samples nearest the boundary.
    Atl,
}

/// What a baseline sees at one iteration: no ground truth for the pool.
#[derive(Debug, Clone, Copy)]
pub struct StrategyInput<'a> {
    /// Labeled source rows; may be empty.
    pub source: &'a Dataset,
    /// Labeled target rows revealed so far; may be empty.
    pub target_labeled: &'a Dataset,
    pub pool: &'a DMatrix<f64>,
    pub k: usize,
    pub svm: &'a SvmConfig,
}

#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    /// `None` when no classifier could be built.
    pub model: Option<SvmModel>,
    pub scores: Option<DVector<f64>>,
    pub predictions: Option<Vec<Label>>,
    /// Pool indices to label next (ATL only).
    pub selected: Vec<usize>,
}

pub fn strategy_step(kind: Strategy, input: &StrategyInput<'_>) -> Result<StrategyOutcome> {
    let target_labels = input.target_labeled.require_labels("labeled target")?;
    let (x, y, w) = match kind {
        Strategy::Bl => {
            let w = balance_weights(target_labels).unwrap_or_else(|| vec![1.0; target_labels.len()]);
            (input.target_labeled.features().clone(), target_labels.to_vec(), w)
        }
        Strategy::Tl | Strategy::Atl => stack_domains(input.source, input.target_labeled)?,
    };
    if !ClassCounts::of(&y).has_both() {
        return Ok(StrategyOutcome {
            model: None,
            scores: None,
            predictions: None,
            selected: Vec::new(),
        });
    }
    let model = input.svm.fit(&x, &y, &w)?;
    let scores = model.decision(input.pool)?;
    let predictions: Vec<Label> = scores.iter().map(|&s| Label::from_score(s)).collect();
    let selected = if kind == Strategy::Atl {
        select_common(&SelectionInput {
            y_prev: &predictions,
            y_new: &predictions,
            f_scores: scores.as_slice(),
            g_scores: None,
            k: input.k,
        })?
    } else {
        Vec::new()
    };
    Ok(StrategyOutcome {
        model: Some(model),
        scores: Some(scores),
        predictions: Some(predictions),
        selected,
    })
}

/// Row-stack source and labeled target, each domain balanced on its own.
fn stack_domains(source: &Dataset, target: &Dataset) -> Result<(DMatrix<f64>, Vec<Label>, Vec<f64>)> {
    let ys = source.require_labels("source")?;
    let yt = target.require_labels("labeled target")?;
    let (ns, nt) = (ys.len(), yt.len());
    let d = if ns > 0 { source.dim() } else { target.dim() };
    if ns > 0 && nt > 0 && source.dim() != target.dim() {
        return Err(AwarError::DimensionMismatch {
            expected: source.dim(),
            found: target.dim(),
            context: "target feature dimension",
        });
    }
    let mut x = DMatrix::zeros(ns + nt, d);
    if ns > 0 {
        x.rows_mut(0, ns).copy_from(source.features());
    }
    if nt > 0 {
        x.rows_mut(ns, nt).copy_from(target.features());
    }
    let mut y = ys.to_vec();
    y.extend_from_slice(yt);
    let mut w = balance_weights(ys).unwrap_or_else(|| vec![1.0; ns]);
    w.extend(balance_weights(yt).unwrap_or_else(|| vec![1.0; nt]));
    Ok((x, y, w))
}
