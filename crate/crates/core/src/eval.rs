//! Classification metrics (AUC, F-score) and NMI for clusterings.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the AUC is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucSource {
    /// The fused class distributions.
    #[default]
    Scores,
    /// One-hot rows of the predicted labels.
    HardLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmiNormalization {
    /// `I / sqrt(H(C) H(T))`
    #[default]
    Geometric,
    /// `2 I / (H(C) + H(T))`
    Arithmetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    pub f_score: f64,
    pub per_class_f: Vec<f64>,
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FScores {
    /// Class-2 F1 for binary problems, macro average otherwise.
    pub f_score: f64,
    pub per_class_f: Vec<f64>,
    pub support: Vec<usize>,
}

fn check_truth(truth: &[usize], n: usize, l: usize) -> Result<()> {
    if truth.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} score rows against {} truth labels",
            truth.len()
        )));
    }
    if let Some((i, &t)) = truth.iter().enumerate().find(|(_, &t)| t == 0 || t > l) {
        return Err(Error::Metric(format!(
            "truth label {t} of object {i} outside 1..={l}"
        )));
    }
    Ok(())
}

/// Mann-Whitney AUC: the fraction of positive/negative pairs ordered
/// correctly, with ties counting one half.
pub fn binary_auc(scores: ArrayView1<f64>, positive: &[bool]) -> Result<f64> {
    let n = scores.len();
    if positive.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} scores against {} labels",
            positive.len()
        )));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUC needs positive and negative examples".into()));
    }
    if scores.iter().any(|x| x.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of (1-based, tie-averaged) ranks of the positives, kept doubled so
    // it stays an exact integer.
    let mut rank_sum2: u64 = 0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let pos_in_run = order[start..end].iter().filter(|&&i| positive[i]).count() as u64;
        // Average rank of the run is (start + 1 + end) / 2.
        rank_sum2 += pos_in_run * (start as u64 + 1 + end as u64);
        start = end;
    }
    let p = n_pos as u64;
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / 2.0 / (n_pos as f64 * n_neg as f64))
}

/// Binary problems use the class-2 column; otherwise the unweighted mean of
/// one-vs-rest AUCs over the classes present in `truth`.
pub fn auc(scores: ArrayView2<f64>, truth: &[usize]) -> Result<f64> {
    let (n, l) = scores.dim();
    check_truth(truth, n, l)?;
    if l < 2 {
        return Err(Error::Metric("AUC needs at least two classes".into()));
    }
    if truth.iter().all(|&t| t == truth[0]) {
        return Err(Error::Metric(format!(
            "every truth label is {}; AUC is undefined",
            truth.first().copied().unwrap_or(0)
        )));
    }
    if l == 2 {
        let pos: Vec<bool> = truth.iter().map(|&t| t == 2).collect();
        return binary_auc(scores.column(1), &pos);
    }
    let mut total = 0.0;
    let mut used = 0;
    for c in 1..=l {
        let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        if !pos.contains(&true) {
            log::warn!("class {c} does not occur in the truth labels; left out of the macro AUC");
            continue;
        }
        total += binary_auc(scores.column(c - 1), &pos)?;
        used += 1;
    }
    Ok(total / used as f64)
}

pub fn one_hot(labels: &[usize], l: usize) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((labels.len(), l));
    for (i, &c) in labels.iter().enumerate() {
        if c == 0 || c > l {
            return Err(Error::Metric(format!("label {c} of object {i} outside 1..={l}")));
        }
        m[[i, c - 1]] = 1.0;
    }
    Ok(m)
}

pub fn auc_from(
    source: AucSource,
    scores: ArrayView2<f64>,
    predicted: &[usize],
    truth: &[usize],
) -> Result<f64> {
    match source {
        AucSource::Scores => auc(scores, truth),
        AucSource::HardLabels => auc(one_hot(predicted, scores.ncols())?.view(), truth),
    }
}

pub fn f_score(pred: &[usize], truth: &[usize], l: usize) -> Result<FScores> {
    check_truth(truth, pred.len(), l)?;
    let mut tp = vec![0usize; l];
    let mut fp = vec![0usize; l];
    let mut support = vec![0usize; l];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == 0 || p > l {
            return Err(Error::Metric(format!("predicted label {p} outside 1..={l}")));
        }
        support[t - 1] += 1;
        if p == t {
            tp[p - 1] += 1;
        } else {
            fp[p - 1] += 1;
        }
    }
    let per_class_f: Vec<f64> = (0..l)
        .map(|c| {
            // 2PR / (P + R) = 2 tp / (2 tp + fp + fn)
            let den = 2 * tp[c] + fp[c] + (support[c] - tp[c]);
            if den == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / den as f64
            }
        })
        .collect();
    let f = if l == 2 {
        per_class_f[1]
    } else {
        per_class_f.iter().sum::<f64>() / l as f64
    };
    Ok(FScores {
        f_score: f,
        per_class_f,
        support,
    })
}

pub fn evaluate(scores: ArrayView2<f64>, truth: &[usize], source: AucSource) -> Result<MetricReport> {
    let pred = crate::solver::predict_labels(&scores.to_owned());
    let auc = auc_from(source, scores, &pred, truth)?;
    let f = f_score(&pred, truth, scores.ncols())?;
    Ok(MetricReport {
        auc,
        f_score: f.f_score,
        per_class_f: f.per_class_f,
        support: f.support,
    })
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn nmi(clusters: &[usize], truth: &[usize]) -> Result<f64> {
    nmi_with(clusters, truth, NmiNormalization::Geometric)
}

pub fn nmi_with(clusters: &[usize], truth: &[usize], norm: NmiNormalization) -> Result<f64> {
    if clusters.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} cluster ids against {} labels",
            clusters.len(),
            truth.len()
        )));
    }
    if clusters.is_empty() {
        return Err(Error::Metric("NMI of empty partitions".into()));
    }
    let n = clusters.len() as f64;
    let mut a = BTreeMap::new();
    let mut b = BTreeMap::new();
    let mut joint = BTreeMap::new();
    for (&c, &t) in clusters.iter().zip(truth) {
        *a.entry(c).or_insert(0usize) += 1;
        *b.entry(t).or_insert(0usize) += 1;
        *joint.entry((c, t)).or_insert(0usize) += 1;
    }
    let ha = entropy(a.values().copied(), n);
    let hb = entropy(b.values().copied(), n);
    if ha == 0.0 || hb == 0.0 {
        // Both trivial means identical partitions.
        return Ok(if ha == 0.0 && hb == 0.0 { 1.0 } else { 0.0 });
    }
    // Pair terms are summed in an order independent of argument order so the
    // result is exactly symmetric.
    let mut terms: Vec<f64> = joint
        .iter()
        .map(|(&(c, t), &nij)| {
            let nij = nij as f64;
            nij / n * (n * nij / (a[&c] as f64 * b[&t] as f64)).ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum::<f64>().max(0.0);
    let v = match norm {
        NmiNormalization::Geometric => mi / (ha * hb).sqrt(),
        NmiNormalization::Arithmetic => 2.0 * mi / (ha + hb),
    };
    Ok(v.clamp(0.0, 1.0))
}
