//! Classification metrics and learning-curve summaries.

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{AwarError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fpr: f64,
    pub fnr: f64,
    pub bca: f64,
}

/// False positive rate, false negative rate and balanced accuracy.
pub fn metrics(y_true: &[Label], y_pred: &[Label]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(AwarError::DimensionMismatch {
            expected: y_true.len(),
            found: y_pred.len(),
            context: "prediction count",
        });
    }
    let (mut pos, mut neg, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (Label::Pos, Label::Neg) => {
                pos += 1;
                fn_ += 1;
            }
            (Label::Pos, Label::Pos) => pos += 1,
            (Label::Neg, Label::Pos) => {
                neg += 1;
                fp += 1;
            }
            (Label::Neg, Label::Neg) => neg += 1,
        }
    }
    if pos == 0 || neg == 0 {
        return Err(AwarError::SingleClass("ground truth for metrics"));
    }
    let fpr = fp as f64 / neg as f64;
    let fnr = fn_ as f64 / pos as f64;
    Ok(Metrics {
        fpr,
        fnr,
        bca: 1.0 - (fpr + fnr) / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m_l: usize,
    /// `None` when the algorithm had no model at this budget.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCurve {
    pub algorithm: String,
    pub repeat: usize,
    pub points: Vec<CurvePoint>,
    /// Area under the present points, `None` with fewer than two of them.
    pub aupc: Option<f64>,
}

impl PerformanceCurve {
    pub fn new(algorithm: impl Into<String>, repeat: usize, points: Vec<CurvePoint>) -> Self {
        let present: Vec<(f64, f64)> = points
            .iter()
            .filter_map(|p| p.metrics.map(|m| (p.m_l as f64, m.bca)))
            .collect();
        let aupc = aupc(&present).ok();
        PerformanceCurve {
            algorithm: algorithm.into(),
            repeat,
            points,
            aupc,
        }
    }
}

/// Trapezoidal area under `(m_l, bca)` points divided by the covered m_l range.
pub fn aupc(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(AwarError::InvalidData(format!(
            "area under a curve needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(AwarError::InvalidData("curve m_l values must increase strictly".into()));
    }
    let area: f64 = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    let range = points[points.len() - 1].0 - points[0].0;
    Ok((area / range).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use Label::{Neg, Pos};

    #[test]
    fn identity_example() {
        let truth = [Neg, Neg, Neg, Neg, Neg, Pos, Pos, Pos, Pos, Pos];
        let pred = [Pos, Neg, Neg, Neg, Neg, Neg, Neg, Pos, Pos, Pos];
        let m = metrics(&truth, &pred).unwrap();
        assert_relative_eq!(m.fpr, 0.2);
        assert_relative_eq!(m.fnr, 0.4);
        assert_relative_eq!(m.bca, 0.7);
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let truth = [Pos, Neg, Neg];
        let m = metrics(&truth, &truth).unwrap();
        assert_eq!((m.fpr, m.fnr, m.bca), (0.0, 0.0, 1.0));
        let m = metrics(&truth, &[Pos; 3]).unwrap();
        assert_eq!((m.fpr, m.fnr, m.bca), (1.0, 0.0, 0.5));
        assert!(metrics(&[Pos, Pos], &[Pos, Neg]).is_err());
    }

    #[test]
    fn area_shapes() {
        assert_relative_eq!(aupc(&[(0.0, 0.8), (5.0, 0.8), (10.0, 0.8)]).unwrap(), 0.8);
        assert_relative_eq!(aupc(&[(0.0, 0.0), (5.0, 0.5), (10.0, 1.0)]).unwrap(), 0.5);
        assert!(aupc(&[(0.0, 1.0)]).is_err());
    }

    #[test]
    fn missing_points_are_skipped() {
        let m = |bca| Some(Metrics { fpr: 1.0 - bca, fnr: 1.0 - bca, bca });
        let curve = PerformanceCurve::new(
            "BL",
            0,
            vec![
                CurvePoint { m_l: 0, metrics: None },
                CurvePoint { m_l: 5, metrics: m(0.6) },
                CurvePoint { m_l: 10, metrics: m(0.8) },
            ],
        );
        assert_relative_eq!(curve.aupc.unwrap(), 0.7);
        let lone = PerformanceCurve::new("BL", 0, vec![CurvePoint { m_l: 0, metrics: m(0.6) }]);
        assert_eq!(lone.aupc, None);
    }

    proptest! {
        #[test]
        fn area_in_unit_interval(bcas in proptest::collection::vec(0.0f64..=1.0, 2..25)) {
            let pts: Vec<(f64, f64)> = bcas.iter().enumerate().map(|(i, &b)| (5.0 * i as f64, b)).collect();
            let a = aupc(&pts).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn bca_identity(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 2..40)) {
            let truth: Vec<Label> = pairs.iter().map(|p| if p.0 { Pos } else { Neg }).collect();
            let pred: Vec<Label> = pairs.iter().map(|p| if p.1 { Pos } else { Neg }).collect();
            if let Ok(m) = metrics(&truth, &pred) {
                prop_assert!((m.bca - (1.0 - (m.fpr + m.fnr) / 2.0)).abs() < 1e-15);
            }
        }
    }
}
