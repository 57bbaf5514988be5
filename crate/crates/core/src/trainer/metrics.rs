//! Classification metrics: accuracy, ROC AUC (trapezoidal) and average
//! precision, with the per-class / per-clip averages used for tagging.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fraction of rows of `[batch, classes]` logits whose argmax is the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if logits.rank() != 2 || logits.dim(0) != labels.len() {
        return Err(Error::dim("accuracy", "batch", labels.len(), format!("{:?}", logits.shape())));
    }
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    let k = logits.dim(1);
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| {
            let row = &logits.data()[i * k..(i + 1) * k];
            let arg = (0..k).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            arg == y
        })
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Indices sorted by descending score, grouped into runs of equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

fn counts(labels: &[bool]) -> (usize, usize) {
    let p = labels.iter().filter(|&&l| l).count();
    (p, labels.len() - p)
}

/// Area under the ROC curve by trapezoidal integration over all distinct
/// thresholds (ties contribute a diagonal segment).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim("roc_auc", "samples", labels.len(), scores.len()));
    }
    let (p, n) = counts(labels);
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric("ROC AUC needs both positive and negative labels".into()));
    }
    let (mut tp, mut fp, mut area) = (0usize, 0usize, 0.0);
    for g in tie_groups(scores) {
        let (dp, dn) = counts(&g.iter().map(|&i| labels[i]).collect::<Vec<_>>());
        area += dn as f64 * (2 * tp + dp) as f64 / 2.0;
        tp += dp;
        fp += dn;
    }
    debug_assert_eq!((tp, fp), (p, n));
    Ok(area / (p * n) as f64)
}

/// `Σ (R_k − R_{k−1}) P_k` over distinct thresholds.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim("average_precision", "samples", labels.len(), scores.len()));
    }
    let (p, _) = counts(labels);
    if p == 0 {
        return Err(Error::UndefinedMetric("average precision needs a positive label".into()));
    }
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    for g in tie_groups(scores) {
        let (dp, _) = counts(&g.iter().map(|&i| labels[i]).collect::<Vec<_>>());
        tp += dp;
        seen += g.len();
        ap += dp as f64 / p as f64 * (tp as f64 / seen as f64);
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TaggingMetrics {
    pub auc_per_class: f64,
    pub auc_per_clip: f64,
    pub map: f64,
}

fn column(t: &Tensor, j: usize) -> Vec<f64> {
    let k = t.dim(1);
    (0..t.dim(0)).map(|i| t.data()[i * k + j]).collect()
}

fn mean_defined(vals: impl Iterator<Item = Result<f64>>, what: &str) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for v in vals {
        match v {
            Ok(x) => {
                sum += x;
                n += 1;
            }
            Err(Error::UndefinedMetric(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric(format!("{what}: no row or column has both label values")));
    }
    Ok(sum / n as f64)
}

/// Per-class and per-clip AUC and mean average precision of `[batch, classes]`
/// scores against {0, 1} targets. Classes (clips) lacking one label value
/// are left out of the respective average.
pub fn tagging_metrics(scores: &Tensor, targets: &Tensor) -> Result<TaggingMetrics> {
    if scores.shape() != targets.shape() || scores.rank() != 2 {
        return Err(Error::dim(
            "tagging_metrics",
            "shape",
            format!("{:?}", targets.shape()),
            format!("{:?}", scores.shape()),
        ));
    }
    let (b, k) = (scores.dim(0), scores.dim(1));
    let bools = |v: Vec<f64>| v.into_iter().map(|x| x > 0.5).collect::<Vec<_>>();
    let auc_per_class = mean_defined(
        (0..k).map(|j| roc_auc(&column(scores, j), &bools(column(targets, j)))),
        "per-class AUC",
    )?;
    let auc_per_clip = mean_defined(
        (0..b).map(|i| {
            roc_auc(
                &scores.data()[i * k..(i + 1) * k],
                &bools(targets.data()[i * k..(i + 1) * k].to_vec()),
            )
        }),
        "per-clip AUC",
    )?;
    let map = mean_defined(
        (0..k).map(|j| average_precision(&column(scores, j), &bools(column(targets, j)))),
        "MAP",
    )?;
    Ok(TaggingMetrics {
        auc_per_class,
        auc_per_clip,
        map,
    })
}
