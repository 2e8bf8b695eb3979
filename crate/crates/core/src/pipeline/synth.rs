//! Synthetic two-domain data with covariate and label-conditional shift.
//!
//! Target rows are drawn from two Gaussian classes. Source rows start from
//! the same class-conditional distribution and are then pushed through an
//! affine map (Givens rotations, per-axis scaling, translation), a shift of
//! the positive class, and extra isotropic noise.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{AwarError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftSpec {
    pub dim: usize,
    /// Distance between the two class means.
    pub separation: f64,
    /// Number of leading axes the class-mean difference is spread over.
    pub informative_dims: usize,
    /// Prior probability of the positive class.
    pub p_pos: f64,
    /// Rotation angles in degrees for the axis pairs (0,1), (2,3), ...
    pub rotation_deg: Vec<f64>,
    /// Per-axis scale factors; missing trailing axes use 1.
    pub scale: Vec<f64>,
    /// Per-axis translation; missing trailing axes use 0.
    pub translation: Vec<f64>,
    /// Extra displacement of positive source rows along the first
    /// non-informative axis.
    pub label_offset: f64,
    /// Standard deviation of isotropic noise added to source rows.
    pub noise: f64,
    pub n_source: usize,
    pub n_target: usize,
    /// Additional target-only channels for the all-channel companion file.
    pub extra_dims: usize,
    /// Class-mean distance carried by the extra channels.
    pub extra_separation: f64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            dim: 24,
            separation: 2.0,
            informative_dims: 4,
            p_pos: 0.12,
            rotation_deg: vec![30.0; 6],
            scale: Vec::new(),
            translation: Vec::new(),
            label_offset: 0.0,
            noise: 0.0,
            n_source: 400,
            n_target: 250,
            extra_dims: 0,
            extra_separation: 0.0,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AwarError::InvalidParameter(msg));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if !(self.p_pos > 0.0 && self.p_pos < 1.0) {
            return bad(format!("p_pos must lie in (0, 1), got {}", self.p_pos));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if self.informative_dims == 0 || self.informative_dims > self.dim {
            return bad(format!("informative_dims must lie in 1..={}", self.dim));
        }
        if self.rotation_deg.len() > self.dim / 2 {
            return bad(format!("at most {} rotation angles for dim {}", self.dim / 2, self.dim));
        }
        if self.scale.len() > self.dim || self.translation.len() > self.dim {
            return bad("scale and translation may not be longer than dim".into());
        }
        let finite = [self.separation, self.label_offset, self.extra_separation]
            .iter()
            .chain(&self.rotation_deg)
            .chain(&self.scale)
            .chain(&self.translation)
            .all(|v| v.is_finite());
        if !finite {
            return bad("shift parameters must be finite".into());
        }
        if self.n_source == 0 || self.n_target == 0 {
            return bad("both domains need at least one row".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub source: Dataset,
    pub target: Dataset,
    /// Target rows with the extra channels appended, when requested.
    pub target_all: Option<Dataset>,
}

/// Deterministic for a given spec and seed.
pub fn gen_synthetic(spec: &ShiftSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim;
    let direction = {
        let k = spec.informative_dims as f64;
        DVector::from_fn(d, |i, _| if i < spec.informative_dims { 1.0 / k.sqrt() } else { 0.0 })
    };

    let draw_class = |rng: &mut ChaCha8Rng, rows: usize| -> (DMatrix<f64>, Vec<Label>) {
        let labels: Vec<Label> = (0..rows)
            .map(|_| if rng.random_bool(spec.p_pos) { Label::Pos } else { Label::Neg })
            .collect();
        let mut x = DMatrix::zeros(rows, d);
        for (i, l) in labels.iter().enumerate() {
            let shift = l.value() * spec.separation / 2.0;
            for j in 0..d {
                let noise: f64 = StandardNormal.sample(rng);
                x[(i, j)] = noise + shift * direction[j];
            }
        }
        (x, labels)
    };

    let (xt, yt) = draw_class(&mut rng, spec.n_target);
    let (mut xs, ys) = draw_class(&mut rng, spec.n_source);

    let map = affine_map(spec);
    xs = &xs * map.transpose();
    let offset_axis = spec.informative_dims % d;
    for i in 0..spec.n_source {
        for j in 0..d {
            let t = spec.translation.get(j).copied().unwrap_or(0.0);
            let noise: f64 = if spec.noise > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                spec.noise * z
            } else {
                0.0
            };
            xs[(i, j)] += t + noise;
        }
        if ys[i] == Label::Pos {
            xs[(i, offset_axis)] += spec.label_offset;
        }
    }

    let target_all = if spec.extra_dims > 0 {
        let e = spec.extra_dims;
        let mut all = DMatrix::zeros(spec.n_target, d + e);
        all.columns_mut(0, d).copy_from(&xt);
        let per_axis = spec.extra_separation / 2.0 / (e as f64).sqrt();
        for i in 0..spec.n_target {
            for j in 0..e {
                let noise: f64 = StandardNormal.sample(&mut rng);
                all[(i, d + j)] = noise + yt[i].value() * per_axis;
            }
        }
        Some(Dataset::labeled("target_all", all, yt.clone())?)
    } else {
        None
    };

    Ok(SyntheticData {
        source: Dataset::labeled("source", xs, ys)?,
        target: Dataset::labeled("target", xt, yt)?,
        target_all,
    })
}

/// Linear part of the source transform: rotations applied after scaling.
fn affine_map(spec: &ShiftSpec) -> DMatrix<f64> {
    let d = spec.dim;
    let mut m = DMatrix::from_diagonal(&DVector::from_fn(d, |i, _| spec.scale.get(i).copied().unwrap_or(1.0)));
    for (p, deg) in spec.rotation_deg.iter().enumerate() {
        let (a, b) = (2 * p, 2 * p + 1);
        let (s, c) = deg.to_radians().sin_cos();
        let mut rot = DMatrix::identity(d, d);
        rot[(a, a)] = c;
        rot[(a, b)] = -s;
        rot[(b, a)] = s;
        rot[(b, b)] = c;
        m = rot * m;
    }
    m
}
