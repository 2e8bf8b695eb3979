//! PCA on the pooled domains followed by per-dimension min-max scaling.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::Dataset;
use crate::error::{AwarError, Result};

/// Projection onto leading principal components, then scaling to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTransform {
    mean: DVector<f64>,
    /// `d_in × d_out`, one unit-norm component per column.
    components: DMatrix<f64>,
    min: DVector<f64>,
    range: DVector<f64>,
}

impl FeatureTransform {
    pub fn d_in(&self) -> usize {
        self.components.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.components.ncols()
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.d_in() {
            return Err(AwarError::DimensionMismatch {
                expected: self.d_in(),
                found: x.ncols(),
                context: "feature transform input",
            });
        }
        let mut z = self.project(x);
        for (j, mut col) in z.column_iter_mut().enumerate() {
            if self.range[j] > 0.0 {
                col.apply(|v| *v = (*v - self.min[j]) / self.range[j]);
            } else {
                col.fill(0.5);
            }
        }
        Ok(z)
    }

    pub fn apply_dataset(&self, data: &Dataset) -> Result<Dataset> {
        data.with_features(self.apply(data.features())?)
    }

    fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        centered * &self.components
    }
}

/// Fit PCA with `d_out` components and min-max scaling on the union of rows.
///
/// Components are ordered by decreasing eigenvalue (equal eigenvalues keep
/// their eigensolver index order) and signed so that their largest-magnitude
/// entry is positive.
pub fn fit_feature_pipeline(source: &Dataset, target: &Dataset, d_out: usize) -> Result<FeatureTransform> {
    if !source.is_empty() && !target.is_empty() && source.dim() != target.dim() {
        return Err(AwarError::DimensionMismatch {
            expected: source.dim(),
            found: target.dim(),
            context: "target raw dimension",
        });
    }
    let d_in = if source.is_empty() { target.dim() } else { source.dim() };
    let rows = source.n_rows() + target.n_rows();
    let mut x = DMatrix::zeros(rows, d_in);
    if source.n_rows() > 0 {
        x.rows_mut(0, source.n_rows()).copy_from(source.features());
    }
    if target.n_rows() > 0 {
        x.rows_mut(source.n_rows(), target.n_rows()).copy_from(target.features());
    }
    fit_matrix(&x, d_out)
}

/// Same as [`fit_feature_pipeline`] on a single row-stacked matrix.
pub fn fit_matrix(x: &DMatrix<f64>, d_out: usize) -> Result<FeatureTransform> {
    let (rows, d_in) = x.shape();
    if d_out == 0 || d_out > d_in {
        return Err(AwarError::InvalidParameter(format!(
            "cannot keep {d_out} principal components of {d_in}-dimensional data"
        )));
    }
    if rows < 2 {
        return Err(AwarError::Empty("feature pipeline needs at least two rows"));
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / (rows - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d_in).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = DMatrix::zeros(d_in, d_out);
    for (k, &idx) in order.iter().take(d_out).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let lead = v.iter().enumerate().fold(0, |best, (i, x)| if x.abs() > v[best].abs() + 1e-12 { i } else { best });
        if v[lead] < 0.0 {
            v.neg_mut();
        }
        components.set_column(k, &v);
    }

    let mut t = FeatureTransform {
        mean,
        components,
        min: DVector::zeros(d_out),
        range: DVector::zeros(d_out),
    };
    let z = t.project(x);
    for j in 0..d_out {
        let col = z.column(j);
        let (lo, hi) = (col.min(), col.max());
        let scale = lo.abs().max(hi.abs()).max(1.0);
        t.min[j] = lo;
        // Constant (up to rounding) directions map to 0.5.
        t.range[j] = if hi - lo > 1e-12 * scale { hi - lo } else { 0.0 };
    }
    Ok(t)
}
