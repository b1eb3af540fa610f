//! Clustering evaluation: optimally matched accuracy and pairwise Fscore.

use crate::error::{invalid, Result};
use crate::spectral::ClusterLabels;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub fscore: f64,
    pub pair_precision: f64,
    pub pair_recall: f64,
}

/// Minimum-cost perfect assignment on a square cost matrix.
///
/// Returns `assignment[row] = column`. Runs the potential-based Hungarian
/// method in `O(k³)`.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let k = cost.len();
    if cost.iter().any(|r| r.len() != k) {
        return invalid("assignment cost matrix must be square");
    }
    if cost.iter().flatten().any(|v| !v.is_finite()) {
        return invalid("assignment cost matrix has non-finite entries");
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut owner = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for row in 1..=k {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_v = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=k {
                if used[col] {
                    continue;
                }
                let reduced = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if reduced < min_v[col] {
                    min_v[col] = reduced;
                    way[col] = col0;
                }
                if min_v[col] < delta {
                    delta = min_v[col];
                    col1 = col;
                }
            }
            for col in 0..=k {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_v[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; k];
    for col in 1..=k {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    Ok(assignment)
}

fn label_span(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

fn contingency(pred: &[usize], truth: &[usize]) -> Vec<Vec<usize>> {
    let mut table = vec![vec![0usize; label_span(truth)]; label_span(pred)];
    for (&p, &t) in pred.iter().zip(truth) {
        table[p][t] += 1;
    }
    table
}

fn check_lengths(pred: &ClusterLabels, truth: &ClusterLabels, min: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return invalid(format!(
            "prediction has {} labels but truth has {}",
            pred.len(),
            truth.len()
        ));
    }
    if pred.len() < min {
        return invalid(format!("need at least {min} samples, got {}", pred.len()));
    }
    Ok(())
}

/// Fraction of samples matched under the best one-to-one relabeling of clusters.
pub fn clustering_accuracy(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<f64> {
    check_lengths(pred, truth, 1)?;
    let table = contingency(pred.as_slice(), truth.as_slice());
    let size = table.len().max(table.first().map_or(0, Vec::len));
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|p| {
            (0..size)
                .map(|t| -(table.get(p).and_then(|r| r.get(t)).copied().unwrap_or(0) as f64))
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost)?;
    let matched: f64 = assignment.iter().enumerate().map(|(p, &t)| -cost[p][t]).sum();
    Ok(matched / pred.len() as f64)
}

fn pairs(count: usize) -> u64 {
    let c = count as u64;
    c * c.saturating_sub(1) / 2
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Pair-counting precision, recall and their harmonic mean.
///
/// `acc` in the returned report is left at zero; [`evaluate`] fills it.
pub fn pairwise_fscore(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<MetricsReport> {
    check_lengths(pred, truth, 2)?;
    let table = contingency(pred.as_slice(), truth.as_slice());
    let together: u64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let pred_pairs: u64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let width = table.first().map_or(0, Vec::len);
    let truth_pairs: u64 = (0..width).map(|t| pairs(table.iter().map(|r| r[t]).sum())).sum();
    let precision = ratio(together, pred_pairs);
    let recall = ratio(together, truth_pairs);
    let fscore = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsReport {
        acc: 0.0,
        fscore,
        pair_precision: precision,
        pair_recall: recall,
    })
}

pub fn evaluate(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<MetricsReport> {
    let mut report = pairwise_fscore(pred, truth)?;
    report.acc = clustering_accuracy(pred, truth)?;
    Ok(report)
}
