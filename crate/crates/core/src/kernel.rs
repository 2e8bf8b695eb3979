//! Kernel Gram matrices and the marginal / conditional MMD matrices.
//!
//! Every MMD matrix used here is a sum of at most two rank-one terms `v vᵀ`,
//! so [`MmdMatrix`] keeps the vectors and only materializes the dense form on
//! request.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Label, TransferTask};
use crate::error::{AwarError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    #[default]
    Linear,
    Rbf {
        gamma: f64,
    },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        let k = KernelSpec::Rbf { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            KernelSpec::Rbf { gamma } => Err(AwarError::InvalidParameter(format!(
                "rbf gamma must be positive, got {gamma}"
            ))),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Symmetric Gram matrix `K_ij = k(x_i, x_j)` over the rows of `x`.
pub fn gram(x: &DMatrix<f64>, spec: &KernelSpec) -> DMatrix<f64> {
    let mut k = x * x.transpose();
    if let KernelSpec::Rbf { gamma } = *spec {
        let sq: Vec<f64> = (0..x.nrows()).map(|i| x.row(i).norm_squared()).collect();
        let n = x.nrows();
        for j in 0..n {
            k[(j, j)] = 1.0;
            for i in (j + 1)..n {
                let d2 = (sq[i] + sq[j] - 2.0 * k[(i, j)]).max(0.0);
                let v = (-gamma * d2).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
    } else {
        // Exact symmetry regardless of gemm summation order.
        let n = k.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                k[(j, i)] = k[(i, j)];
            }
        }
    }
    k
}

/// Rectangular kernel matrix with `out[(q, i)] = k(query_q, train_i)`.
pub fn cross_gram(train: &DMatrix<f64>, query: &DMatrix<f64>, spec: &KernelSpec) -> DMatrix<f64> {
    let mut k = query * train.transpose();
    if let KernelSpec::Rbf { gamma } = *spec {
        let sq_t: Vec<f64> = (0..train.nrows()).map(|i| train.row(i).norm_squared()).collect();
        for q in 0..query.nrows() {
            let sq_q = query.row(q).norm_squared();
            for i in 0..train.nrows() {
                let d2 = (sq_q + sq_t[i] - 2.0 * k[(q, i)]).max(0.0);
                k[(q, i)] = (-gamma * d2).exp();
            }
        }
    }
    k
}

/// A PSD matrix of the form `Σ_t v_t v_tᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmdMatrix {
    size: usize,
    terms: Vec<DVector<f64>>,
}

impl MmdMatrix {
    pub fn zero(size: usize) -> Self {
        MmdMatrix {
            size,
            terms: Vec::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// The rank-one factors `v_t`.
    pub fn terms(&self) -> &[DVector<f64>] {
        &self.terms
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for v in &self.terms {
            m.ger(1.0, v, v, 1.0);
        }
        m
    }

    /// `fᵀ M f`.
    pub fn quad_form(&self, f: &DVector<f64>) -> f64 {
        self.terms.iter().map(|v| v.dot(f).powi(2)).sum()
    }

    /// `M f`.
    pub fn apply(&self, f: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.size);
        for v in &self.terms {
            out.axpy(v.dot(f), v, 1.0);
        }
        out
    }
}

/// Marginal and conditional MMD matrices of one task.
#[derive(Debug, Clone)]
pub struct MmdMatrices {
    pub m0: MmdMatrix,
    pub m: MmdMatrix,
}

impl MmdMatrices {
    pub fn new(task: &TransferTask, y_full: &[Label]) -> Result<Self> {
        Ok(MmdMatrices {
            m0: marginal_mmd(task.n(), task.m_l() + task.m_u())?,
            m: conditional_mmd(task, y_full)?,
        })
    }
}

/// Marginal MMD matrix for `n` source rows followed by `m` target rows.
pub fn marginal_mmd(n: usize, m: usize) -> Result<MmdMatrix> {
    if n == 0 || m == 0 {
        return Err(AwarError::Empty("marginal MMD needs both domains"));
    }
    let a = DVector::from_fn(n + m, |i, _| {
        if i < n {
            1.0 / n as f64
        } else {
            -1.0 / m as f64
        }
    });
    Ok(MmdMatrix {
        size: n + m,
        terms: vec![a],
    })
}

/// Conditional MMD matrix `M = M_1 + M_2`.
///
/// `y_full` carries labels for every row: true labels for the source and
/// labeled-target rows and pseudo labels for the unlabeled rows. Target class
/// counts therefore include pseudo-labeled rows. A class missing from either
/// domain contributes no term.
pub fn conditional_mmd(task: &TransferTask, y_full: &[Label]) -> Result<MmdMatrix> {
    if y_full.len() != task.len() {
        return Err(AwarError::DimensionMismatch {
            expected: task.len(),
            found: y_full.len(),
            context: "full label vector length",
        });
    }
    let n = task.n();
    let mut terms = Vec::with_capacity(2);
    for class in [Label::Pos, Label::Neg] {
        let n_c = y_full[..n].iter().filter(|&&l| l == class).count();
        let m_c = y_full[n..].iter().filter(|&&l| l == class).count();
        if n_c == 0 || m_c == 0 {
            continue;
        }
        let v = DVector::from_fn(task.len(), |i, _| match (i < n, y_full[i] == class) {
            (_, false) => 0.0,
            (true, true) => 1.0 / n_c as f64,
            (false, true) => -1.0 / m_c as f64,
        });
        terms.push(v);
    }
    Ok(MmdMatrix {
        size: task.len(),
        terms,
    })
}
