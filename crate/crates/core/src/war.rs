//! Weighted adaptation regularization learners.
//!
//! Both learners fit a kernel expansion `f(x) = Σ αᵢ k(xᵢ, x) + b` over all
//! training rows, minimizing a class-weighted loss on the labeled rows plus
//! `σ‖f‖²` and MMD penalties `λ_P fᵀM₀f + λ_Q fᵀMf` that pull the source
//! and target score distributions together. The squared-loss learner has a
//! closed form; the hinge-loss learner solves a QP.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::active::{select_common, select_extra, SelectionInput};
use crate::baselines::SvmConfig;
use crate::data::{build_e, class_weights, Label, TransferTask};
use crate::error::{AwarError, Result};
use crate::kernel::{cross_gram, gram, KernelSpec, MmdMatrices};
use crate::qp::{solve_qp, QpProblem, QpSolution, QpStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// How the hinge-loss QP is posed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmSolver {
    /// Feature space for the linear kernel, coefficient space otherwise.
    #[default]
    Auto,
    /// Variables `[α; ξ; b]` with a dense kernel block.
    Primal,
    /// Linear kernel only: variables `[w; b; ξ]`, with α recovered from the
    /// hinge multipliers afterwards.
    FeatureSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarParams {
    /// Overall weight of labeled target rows relative to source rows.
    pub w_t: f64,
    /// Norm penalty.
    pub sigma: f64,
    /// Marginal MMD weight.
    pub lambda_p: f64,
    /// Conditional MMD weight.
    pub lambda_q: f64,
    pub kernel: KernelSpec,
    pub svm_solver: SvmSolver,
}

impl Default for WarParams {
    fn default() -> Self {
        WarParams {
            w_t: 2.0,
            sigma: 0.1,
            lambda_p: 10.0,
            lambda_q: 10.0,
            kernel: KernelSpec::Linear,
            svm_solver: SvmSolver::Auto,
        }
    }
}

impl WarParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(AwarError::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        for (name, v) in [("lambda_p", self.lambda_p), ("lambda_q", self.lambda_q)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(AwarError::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.w_t > 0.0 && self.w_t.is_finite()) {
            return Err(AwarError::InvalidParameter(format!("w_t must be positive, got {}", self.w_t)));
        }
        if self.svm_solver == SvmSolver::FeatureSpace && self.kernel != KernelSpec::Linear {
            return Err(AwarError::InvalidParameter(
                "the feature-space svm solver needs the linear kernel".into(),
            ));
        }
        self.kernel.validate()
    }

    fn resolved_solver(&self) -> SvmSolver {
        match (self.svm_solver, self.kernel) {
            (SvmSolver::Auto, KernelSpec::Linear) => SvmSolver::FeatureSpace,
            (SvmSolver::Auto, _) => SvmSolver::Primal,
            (s, _) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WarVariant {
    Rls,
    Svm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpReport {
    pub status: QpStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl From<&QpSolution> for QpReport {
    fn from(s: &QpSolution) -> Self {
        QpReport {
            status: s.status,
            kkt_residual: s.kkt_residual,
            iterations: s.iterations,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WarModel {
    /// One coefficient per training row, `n + m_l + m_u`.
    pub alpha: DVector<f64>,
    pub bias: f64,
    pub x_train: DMatrix<f64>,
    pub kernel: KernelSpec,
    pub variant: WarVariant,
    /// Hinge slacks of the `n + m_l` labeled rows; empty for the squared loss.
    pub slack: DVector<f64>,
    pub qp: Option<QpReport>,
}

impl WarModel {
    pub fn decision(&self, x_query: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x_query.ncols() != self.x_train.ncols() {
            return Err(AwarError::DimensionMismatch {
                expected: self.x_train.ncols(),
                found: x_query.ncols(),
                context: "query feature dimension",
            });
        }
        let scores = match self.kernel {
            KernelSpec::Linear => x_query * (self.x_train.transpose() * &self.alpha),
            _ => cross_gram(&self.x_train, x_query, &self.kernel) * &self.alpha,
        };
        Ok(scores.add_scalar(self.bias))
    }

    pub fn predict_labels(&self, x_query: &DMatrix<f64>) -> Result<Vec<Label>> {
        Ok(self.decision(x_query)?.iter().map(|&s| Label::from_score(s)).collect())
    }
}

/// Decision scores `f(x)`; labels follow as `sign(f)` with `sign(0) = +1`.
pub fn predict(model: &WarModel, x_query: &DMatrix<f64>) -> Result<DVector<f64>> {
    model.decision(x_query)
}

/// Current label guesses for the unlabeled rows of a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabels(Vec<Label>);

impl PseudoLabels {
    pub fn new(labels: Vec<Label>) -> Self {
        PseudoLabels(labels)
    }

    pub fn as_slice(&self) -> &[Label] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<Label> {
        self.0
    }
}

/// Pseudo labels from a weighted linear SVM trained on every labeled row.
pub fn init_pseudo_labels(task: &TransferTask, params: &WarParams, svm: &SvmConfig) -> Result<PseudoLabels> {
    let e = build_e(task, &class_weights(task, params.w_t)?)?;
    let l = task.n_labeled();
    let weights: Vec<f64> = e.rows(0, l).iter().copied().collect();
    let model = svm.fit(&task.labeled_features(), &task.labeled_labels(), &weights)?;
    if task.m_u() == 0 {
        return Ok(PseudoLabels(Vec::new()));
    }
    Ok(PseudoLabels(model.predict(&task.unlabeled_features())?))
}

/// Everything a fit needs besides the kernel matrix.
struct Setup {
    y: DVector<f64>,
    mmd: MmdMatrices,
}

impl Setup {
    fn new(task: &TransferTask, params: &WarParams, e: &DVector<f64>, pseudo: &PseudoLabels) -> Result<Self> {
        params.validate()?;
        if e.len() != task.len() {
            return Err(AwarError::DimensionMismatch {
                expected: task.len(),
                found: e.len(),
                context: "loss weight count",
            });
        }
        if pseudo.len() != task.m_u() {
            return Err(AwarError::DimensionMismatch {
                expected: task.m_u(),
                found: pseudo.len(),
                context: "pseudo label count",
            });
        }
        let mut y_full = task.labeled_labels();
        y_full.extend_from_slice(pseudo.as_slice());
        let mmd = MmdMatrices::new(task, &y_full)?;
        let y = DVector::from_iterator(y_full.len(), y_full.iter().map(|l| l.value()));
        Ok(Setup { y, mmd })
    }

    /// `(λ_t, v_t)` with `λ_P M₀ + λ_Q M = Σ λ_t v_t v_tᵀ`, zero weights dropped.
    fn penalty_terms(&self, params: &WarParams) -> Vec<(f64, &DVector<f64>)> {
        let marginal = self.mmd.m0.terms().iter().map(|v| (params.lambda_p, v));
        let conditional = self.mmd.m.terms().iter().map(|v| (params.lambda_q, v));
        marginal.chain(conditional).filter(|(l, _)| *l > 0.0).collect()
    }
}

/// Squared-loss learner: `α = [(E + λ_P M₀ + λ_Q M) K + σI]⁻¹ E y`.
pub fn fit_war_rls(task: &TransferTask, params: &WarParams, e: &DVector<f64>, pseudo: &PseudoLabels) -> Result<WarModel> {
    let setup = Setup::new(task, params, e, pseudo)?;
    let k = gram(task.x(), &params.kernel);
    let n = task.len();

    let mut a = k.clone();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row.scale_mut(e[i]);
    }
    for (lambda, v) in setup.penalty_terms(params) {
        let kv = &k * v;
        a.ger(lambda, v, &kv, 1.0);
    }
    for i in 0..n {
        a[(i, i)] += params.sigma;
    }
    let rhs = e.component_mul(&setup.y);
    let lu = a.lu();
    let alpha = lu.solve(&rhs).ok_or_else(|| {
        let u = lu.u();
        let diag = u.diagonal().map(f64::abs);
        AwarError::Singular(format!(
            "squared-loss system, pivot ratio {:.2e}",
            diag.min() / diag.max().max(f64::MIN_POSITIVE)
        ))
    })?;
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(AwarError::Singular("squared-loss system produced non-finite coefficients".into()));
    }
    Ok(WarModel {
        alpha,
        bias: 0.0,
        x_train: task.x().clone(),
        kernel: params.kernel,
        variant: WarVariant::Rls,
        slack: DVector::zeros(0),
        qp: None,
    })
}

/// Hinge-loss learner with an unregularized bias.
pub fn fit_war_svm(task: &TransferTask, params: &WarParams, e: &DVector<f64>, pseudo: &PseudoLabels) -> Result<WarModel> {
    let setup = Setup::new(task, params, e, pseudo)?;
    match params.resolved_solver() {
        SvmSolver::FeatureSpace => svm_feature_space(task, params, e, &setup),
        _ => svm_primal(task, params, e, &setup),
    }
}

fn svm_primal(task: &TransferTask, params: &WarParams, e: &DVector<f64>, setup: &Setup) -> Result<WarModel> {
    let k = gram(task.x(), &params.kernel);
    let (n, l) = (task.len(), task.n_labeled());
    let nv = n + l + 1;
    let bias = n + l;

    // Quadratic term: 2(σK + K L K) on the α block, with K L K = Σ λ (Kv)(Kv)ᵀ.
    let mut h = &k * params.sigma;
    for (lambda, v) in setup.penalty_terms(params) {
        let kv = &k * v;
        h.ger(lambda, &kv, &kv, 1.0);
    }
    let mut p = DMatrix::zeros(nv, nv);
    p.view_mut((0, 0), (n, n)).copy_from(&(h * 2.0));
    let mut q = DVector::zeros(nv);
    q.rows_mut(n, l).copy_from(&e.rows(0, l));

    let mut g = DMatrix::zeros(2 * l, nv);
    let mut rhs = DVector::zeros(2 * l);
    for i in 0..l {
        let yi = setup.y[i];
        for j in 0..n {
            g[(i, j)] = -yi * k[(i, j)];
        }
        g[(i, n + i)] = -1.0;
        g[(i, bias)] = -yi;
        rhs[i] = -1.0;
        g[(l + i, n + i)] = -1.0;
    }
    let sol = solve_qp(&QpProblem::new(p, q)?.with_inequalities(g, rhs)?, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    sol.ensure_usable()?;
    Ok(WarModel {
        alpha: sol.x.rows(0, n).into_owned(),
        bias: sol.x[bias],
        x_train: task.x().clone(),
        kernel: params.kernel,
        variant: WarVariant::Svm,
        slack: sol.x.rows(n, l).into_owned(),
        qp: Some(QpReport::from(&sol)),
    })
}

fn svm_feature_space(task: &TransferTask, params: &WarParams, e: &DVector<f64>, setup: &Setup) -> Result<WarModel> {
    let x = task.x();
    let (n, d) = x.shape();
    let l = task.n_labeled();
    let nv = d + 1 + l;
    let terms = setup.penalty_terms(params);

    // With w = Xᵀα the α-space quadratic becomes σ‖w‖² + wᵀ XᵀLX w.
    let projected: Vec<DVector<f64>> = terms.iter().map(|(_, v)| x.tr_mul(v)).collect();
    let mut pw = DMatrix::identity(d, d) * params.sigma;
    for ((lambda, _), xv) in terms.iter().zip(&projected) {
        pw.ger(*lambda, xv, xv, 1.0);
    }
    let mut p = DMatrix::zeros(nv, nv);
    p.view_mut((0, 0), (d, d)).copy_from(&(pw * 2.0));
    let mut q = DVector::zeros(nv);
    q.rows_mut(d + 1, l).copy_from(&e.rows(0, l));

    let mut g = DMatrix::zeros(2 * l, nv);
    let mut rhs = DVector::zeros(2 * l);
    for i in 0..l {
        let yi = setup.y[i];
        for j in 0..d {
            g[(i, j)] = -yi * x[(i, j)];
        }
        g[(i, d)] = -yi;
        g[(i, d + 1 + i)] = -1.0;
        rhs[i] = -1.0;
        g[(l + i, d + 1 + i)] = -1.0;
    }
    let sol = solve_qp(&QpProblem::new(p, q)?.with_inequalities(g, rhs)?, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    sol.ensure_usable()?;

    // Stationarity in α: 2(σI + LK) α = Jᵀ Y μ, with μ the hinge multipliers.
    // L K = U Wᵀ with U = [λ_t v_t], W = [K v_t]; apply Woodbury.
    let mut r = DVector::zeros(n);
    for i in 0..l {
        r[i] = setup.y[i] * sol.z[i] / 2.0;
    }
    let t = terms.len();
    let mut alpha = r.clone();
    if t > 0 {
        let u = DMatrix::from_columns(&terms.iter().map(|(lambda, v)| *v * *lambda).collect::<Vec<_>>());
        let w = DMatrix::from_columns(&projected.iter().map(|xv| x * xv).collect::<Vec<_>>());
        let small = DMatrix::identity(t, t) * params.sigma + w.tr_mul(&u);
        let coef = small
            .lu()
            .solve(&w.tr_mul(&r))
            .ok_or_else(|| AwarError::Singular("woodbury correction".into()))?;
        alpha.gemv(-1.0, &u, &coef, 1.0);
    }
    alpha /= params.sigma;

    Ok(WarModel {
        alpha,
        bias: sol.x[d],
        x_train: x.clone(),
        kernel: params.kernel,
        variant: WarVariant::Svm,
        slack: sol.x.rows(d + 1, l).into_owned(),
        qp: Some(QpReport::from(&sol)),
    })
}

pub fn fit_war(
    task: &TransferTask,
    params: &WarParams,
    variant: WarVariant,
    e: &DVector<f64>,
    pseudo: &PseudoLabels,
) -> Result<WarModel> {
    match variant {
        WarVariant::Rls => fit_war_rls(task, params, e, pseudo),
        WarVariant::Svm => fit_war_svm(task, params, e, pseudo),
    }
}

/// How (and whether) to pick samples to label after a fit.
#[derive(Debug, Clone, Copy)]
pub enum Selector<'a> {
    None,
    Common,
    /// Extra-channel selection with auxiliary scores for each unlabeled row.
    Extra(&'a [f64]),
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub model: WarModel,
    /// Decision values on the unlabeled rows.
    pub scores: DVector<f64>,
    pub predictions: Vec<Label>,
    /// Pseudo labels for the next iteration (equal to `predictions`).
    pub pseudo: PseudoLabels,
    /// Unlabeled-row indices to query, in priority order.
    pub selected: Vec<usize>,
}

/// One fit plus optional sample selection.
pub fn awar_step(
    task: &TransferTask,
    params: &WarParams,
    variant: WarVariant,
    pseudo: &PseudoLabels,
    k: usize,
    selector: Selector<'_>,
) -> Result<StepOutcome> {
    if !matches!(selector, Selector::None) && (k == 0 || k > task.m_u()) {
        return Err(AwarError::InvalidParameter(format!(
            "cannot select k = {k} of {} unlabeled samples",
            task.m_u()
        )));
    }
    let e = build_e(task, &class_weights(task, params.w_t)?)?;
    let model = fit_war(task, params, variant, &e, pseudo)?;
    let scores = model.decision(&task.unlabeled_features())?;
    let predictions: Vec<Label> = scores.iter().map(|&s| Label::from_score(s)).collect();
    let input = |g| SelectionInput {
        y_prev: pseudo.as_slice(),
        y_new: &predictions,
        f_scores: scores.as_slice(),
        g_scores: g,
        k,
    };
    let selected = match selector {
        Selector::None => Vec::new(),
        Selector::Common => select_common(&input(None))?,
        Selector::Extra(g) => select_extra(&input(Some(g)))?,
    };
    Ok(StepOutcome {
        model,
        scores,
        pseudo: PseudoLabels(predictions.clone()),
        predictions,
        selected,
    })
}
