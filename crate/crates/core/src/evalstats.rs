//! Classification metrics, distribution summaries and rank statistics.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Studentized range statistic divided by sqrt(2) at alpha = 0.05, for
/// k = 2..=10 models (infinite degrees of freedom), as used by the Nemenyi test.
pub const NEMENYI_Q05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];

pub fn nemenyi_q05(k: usize) -> Result<f64> {
    if (2..=10).contains(&k) {
        Ok(NEMENYI_Q05[k - 2])
    } else {
        Err(Error::Config(format!(
            "Nemenyi critical values are tabulated for 2..=10 models, got {k}"
        )))
    }
}

fn check_pair(preds: &[usize], labels: &[usize]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Data("metric of an empty prediction set".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    Ok(())
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Per-class F1 over classes `0..m`; a class never predicted and never
/// present scores 0.
pub fn per_class_f1(preds: &[usize], labels: &[usize], m: usize) -> Result<Vec<f64>> {
    check_pair(preds, labels)?;
    if let Some(bad) = preds.iter().chain(labels).find(|&&c| c >= m) {
        return Err(Error::Data(format!("class {bad} out of range for {m} classes")));
    }
    let mut tp = vec![0usize; m];
    let mut fp = vec![0usize; m];
    let mut fn_ = vec![0usize; m];
    for (&p, &l) in preds.iter().zip(labels) {
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }
    Ok((0..m)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect())
}

pub fn macro_f1(preds: &[usize], labels: &[usize], m: usize) -> Result<f64> {
    let f1 = per_class_f1(preds, labels, m)?;
    Ok(f1.iter().sum::<f64>() / m as f64)
}

/// Per-class F1 weighted by true class frequency.
pub fn weighted_f1(preds: &[usize], labels: &[usize], m: usize) -> Result<f64> {
    let f1 = per_class_f1(preds, labels, m)?;
    let mut support = vec![0usize; m];
    for &l in labels {
        support[l] += 1;
    }
    Ok(f1.iter().zip(&support).map(|(f, &s)| f * s as f64).sum::<f64>() / labels.len() as f64)
}

/// Linear-interpolation quantiles of the sorted sample (NaNs are rejected).
pub fn quantiles(values: &[f64], qs: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Data("quantiles of an empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("quantiles of a sample containing NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    qs.iter()
        .map(|&q| {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("quantile {q} outside [0, 1]")));
            }
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            Ok(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
        })
        .collect()
}

pub fn median(values: &[f64]) -> Result<f64> {
    Ok(quantiles(values, &[0.5])?[0])
}

/// `M[r][c]` counts datasets on which config `r` scores at least as well as config `c`.
///
/// `acc[r][i]` is config `r`'s accuracy on dataset `i`.
pub fn pairwise_geq_counts(acc: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
    let Some(first) = acc.first() else {
        return Err(Error::Data("no configurations to compare".into()));
    };
    let n = first.len();
    if acc.iter().any(|row| row.len() != n) {
        return Err(Error::Data(
            "configurations were evaluated on different numbers of datasets".into(),
        ));
    }
    Ok(acc
        .iter()
        .map(|r| {
            acc.iter()
                .map(|c| r.iter().zip(c).filter(|(a, b)| a >= b).count())
                .collect()
        })
        .collect())
}

/// Ranks (1 = largest value) with ties sharing their average rank.
pub fn rank_desc(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub n_datasets: usize,
    pub k: usize,
    /// Mean rank per model, 1 = best.
    pub mean_ranks: Vec<f64>,
    /// The same ranks flipped so that higher is better (`k + 1 - r`).
    pub mean_ranks_higher_better: Vec<f64>,
    pub friedman_chi2: f64,
    pub critical_difference: f64,
    pub q_alpha: f64,
    pub posthoc: String,
}

/// Friedman mean ranks and the Nemenyi critical difference at alpha = 0.05.
///
/// `acc[i][j]` is model `j`'s score on dataset `i`; higher scores rank better.
pub fn friedman_ranks(acc: &[Vec<f64>]) -> Result<RankSummary> {
    let n = acc.len();
    let k = acc.first().map_or(0, |r| r.len());
    if n < 2 || k < 2 {
        return Err(Error::Config(format!(
            "rank statistics need at least 2 datasets and 2 models, got {n} x {k}"
        )));
    }
    if acc.iter().any(|r| r.len() != k) {
        return Err(Error::Data("ragged score matrix".into()));
    }
    if acc.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::Data("score matrix contains NaN".into()));
    }
    let mut mean = vec![0.0; k];
    for row in acc {
        for (m, r) in mean.iter_mut().zip(rank_desc(row)) {
            *m += r;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = mean.iter().map(|r| r * r).sum();
    let chi2 = 12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0) * (kf + 1.0) / 4.0);
    let q = nemenyi_q05(k)?;
    let cd = q * (kf * (kf + 1.0) / (6.0 * nf)).sqrt();
    Ok(RankSummary {
        n_datasets: n,
        k,
        mean_ranks_higher_better: mean.iter().map(|r| kf + 1.0 - r).collect(),
        mean_ranks: mean,
        friedman_chi2: chi2,
        critical_difference: cd,
        q_alpha: q,
        posthoc: "nemenyi".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Uniform bins over `range`; values outside are counted in the edge bins.
pub fn histogram(values: &[f64], n_bins: usize, range: (f64, f64)) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::Data("histogram of an empty sample".into()));
    }
    let (lo, hi) = range;
    if n_bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!(
            "histogram needs n_bins >= 1 and a finite range lo < hi, got {n_bins} bins over [{lo}, {hi}]"
        )));
    }
    let width = (hi - lo) / n_bins as f64;
    let edges = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let b = ((v - lo) / width).floor();
        let b = if b.is_nan() || b < 0.0 { 0 } else { (b as usize).min(n_bins - 1) };
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Histogram over the sample's own min..max (widened slightly when constant).
pub fn histogram_auto(values: &[f64], n_bins: usize) -> Result<Histogram> {
    let lo = values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return histogram(values, n_bins, (0.0, 1.0));
    }
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    histogram(values, n_bins, (lo, hi))
}
