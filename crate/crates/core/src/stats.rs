//! Rank-based comparison of algorithms over repeated blocks: the Friedman
//! omnibus test, Dunn's pairwise follow-up and Benjamini-Hochberg adjustment.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{AwarError, Result};
use crate::pipeline::io::{write_atomic, CurveRow, SummaryRow};
use crate::pipeline::metrics::aupc;

/// Significance level used in reports.
pub const ALPHA: f64 = 0.05;

/// Blocks in rows, algorithms in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    algorithms: Vec<String>,
    scores: DMatrix<f64>,
}

impl ScoreTable {
    pub fn new(algorithms: Vec<String>, scores: DMatrix<f64>) -> Result<Self> {
        if algorithms.len() != scores.ncols() {
            return Err(AwarError::DimensionMismatch {
                expected: scores.ncols(),
                found: algorithms.len(),
                context: "score table column names",
            });
        }
        if scores.ncols() < 2 || scores.nrows() < 2 {
            return Err(AwarError::InvalidData(format!(
                "score table needs at least 2 blocks and 2 algorithms, got {} x {}",
                scores.nrows(),
                scores.ncols()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(AwarError::InvalidData("score table has non-finite entries".into()));
        }
        Ok(ScoreTable { algorithms, scores })
    }

    /// One block per repeat. Repeats missing any algorithm are dropped.
    pub fn from_summary(rows: &[SummaryRow]) -> Result<Self> {
        let mut algorithms: Vec<String> = Vec::new();
        let mut cells: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();
        for r in rows {
            if !algorithms.contains(&r.algorithm) {
                algorithms.push(r.algorithm.clone());
            }
            if cells.entry(r.repeat).or_default().insert(r.algorithm.clone(), r.aupc).is_some() {
                return Err(AwarError::InvalidData(format!(
                    "duplicate score for {} in repeat {}",
                    r.algorithm, r.repeat
                )));
            }
        }
        let complete: Vec<&BTreeMap<String, f64>> = cells
            .iter()
            .filter_map(|(repeat, row)| {
                if row.len() == algorithms.len() {
                    Some(row)
                } else {
                    log::warn!("repeat {repeat} lacks a score for some algorithm; dropping it");
                    None
                }
            })
            .collect();
        let scores = DMatrix::from_fn(complete.len(), algorithms.len(), |i, j| complete[i][&algorithms[j]]);
        ScoreTable::new(algorithms, scores)
    }

    /// Area under each (algorithm, repeat) curve, then as [`ScoreTable::from_summary`].
    pub fn from_curves(rows: &[CurveRow]) -> Result<Self> {
        let mut order: Vec<(String, usize)> = Vec::new();
        let mut points: BTreeMap<(String, usize), Vec<(f64, f64)>> = BTreeMap::new();
        for r in rows {
            let key = (r.algorithm.clone(), r.repeat);
            if !points.contains_key(&key) {
                order.push(key.clone());
            }
            points.entry(key).or_default().push((r.m_l as f64, r.bca));
        }
        let mut summary = Vec::new();
        for key in order {
            let mut pts = points.remove(&key).expect("key recorded");
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pts.len() >= 2 {
                summary.push(SummaryRow {
                    algorithm: key.0,
                    repeat: key.1,
                    aupc: aupc(&pts)?,
                });
            }
        }
        ScoreTable::from_summary(&summary)
    }

    pub fn algorithms(&self) -> &[String] {
        &self.algorithms
    }

    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    pub fn n_blocks(&self) -> usize {
        self.scores.nrows()
    }

    /// Within-row ranks, 1 = smallest, ties share their mean rank.
    pub fn ranks(&self) -> DMatrix<f64> {
        let (n, k) = self.scores.shape();
        let mut ranks = DMatrix::zeros(n, k);
        for i in 0..n {
            let row: Vec<f64> = self.scores.row(i).iter().copied().collect();
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
            let mut start = 0;
            while start < k {
                let mut end = start + 1;
                while end < k && row[order[end]] == row[order[start]] {
                    end += 1;
                }
                let mid = (start + end + 1) as f64 / 2.0;
                for &j in &order[start..end] {
                    ranks[(i, j)] = mid;
                }
                start = end;
            }
        }
        ranks
    }

    pub fn rank_sums(&self) -> Vec<f64> {
        self.ranks().row_sum().iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Tie-corrected Friedman chi-square test.
pub fn friedman(table: &ScoreTable) -> Result<FriedmanResult> {
    let ranks = table.ranks();
    let (n, k) = ranks.shape();
    let (nf, kf) = (n as f64, k as f64);
    let expected = nf * (kf + 1.0) / 2.0;
    let between: f64 = ranks.row_sum().iter().map(|r| (r - expected).powi(2)).sum();
    let total = ranks.iter().map(|r| r * r).sum::<f64>() - nf * kf * (kf + 1.0).powi(2) / 4.0;
    let df = k - 1;
    // Every row fully tied: no column effect can be observed.
    if total <= 1e-12 * nf * kf * kf * kf {
        return Ok(FriedmanResult { statistic: 0.0, df, p_value: 1.0 });
    }
    let statistic = (kf - 1.0) * between / total;
    let chi = ChiSquared::new(df as f64).map_err(|e| AwarError::InvalidParameter(e.to_string()))?;
    Ok(FriedmanResult {
        statistic,
        df,
        p_value: chi.sf(statistic).clamp(0.0, 1.0),
    })
}

/// Pairwise z statistics and two-sided p-values from rank-sum differences.
#[derive(Debug, Clone, PartialEq)]
pub struct DunnResult {
    /// `z[(i, j)] = (R_i - R_j) / se`.
    pub z: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

pub fn dunn_pairwise(table: &ScoreTable) -> Result<DunnResult> {
    let ranks = table.ranks();
    let (n, k) = ranks.shape();
    let mid = (k as f64 + 1.0) / 2.0;
    let spread: f64 = ranks.iter().map(|r| (r - mid).powi(2)).sum();
    let sums: Vec<f64> = ranks.row_sum().iter().copied().collect();
    let mut z = DMatrix::zeros(k, k);
    let mut p = DMatrix::from_element(k, k, 1.0);
    if spread <= 1e-12 * (n * k * k * k) as f64 {
        return Ok(DunnResult { z, p });
    }
    let se = (2.0 * spread / (k as f64 - 1.0)).sqrt();
    for i in 0..k {
        for j in 0..k {
            if i != j {
                let zij = (sums[i] - sums[j]) / se;
                z[(i, j)] = zij;
                p[(i, j)] = erfc(zij.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
            }
        }
    }
    Ok(DunnResult { z, p })
}

/// Benjamini-Hochberg step-up adjustment, in input order.
pub fn fdr_adjust(pvals: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(AwarError::InvalidParameter(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for (rank, &idx) in order.iter().enumerate().rev() {
        running = running.min(m as f64 / (rank + 1) as f64 * pvals[idx]);
        adjusted[idx] = running.clamp(0.0, 1.0);
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    pub algorithm_a: String,
    pub algorithm_b: String,
    pub mean_rank_a: f64,
    pub mean_rank_b: f64,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub friedman: FriedmanResult,
    pub blocks: usize,
    /// One row per unordered pair, adjusted over all pairs together.
    pub pairs: Vec<PairwiseRow>,
}

pub fn compare(table: &ScoreTable) -> Result<StatsReport> {
    let fr = friedman(table)?;
    let dunn = dunn_pairwise(table)?;
    let k = table.algorithms.len();
    let n = table.n_blocks() as f64;
    let sums = table.rank_sums();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let raw: Vec<f64> = pairs.iter().map(|&(i, j)| dunn.p[(i, j)]).collect();
    let adjusted = fdr_adjust(&raw)?;
    let rows = pairs
        .iter()
        .zip(raw.iter().zip(&adjusted))
        .map(|(&(i, j), (&p_raw, &p_adjusted))| PairwiseRow {
            algorithm_a: table.algorithms[i].clone(),
            algorithm_b: table.algorithms[j].clone(),
            mean_rank_a: sums[i] / n,
            mean_rank_b: sums[j] / n,
            z: dunn.z[(i, j)],
            p_raw,
            p_adjusted,
            significant: p_adjusted < ALPHA,
        })
        .collect();
    Ok(StatsReport {
        friedman: fr,
        blocks: table.n_blocks(),
        pairs: rows,
    })
}

/// Pairwise table as CSV.
pub fn write_pairwise_csv(path: &Path, report: &StatsReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |source: csv::Error| AwarError::Csv {
        path: path.display().to_string(),
        source,
    };
    for row in &report.pairs {
        w.serialize(row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| AwarError::Io {
        path: path.display().to_string(),
        source: e.into_error(),
    })?;
    write_atomic(path, &bytes)
}
