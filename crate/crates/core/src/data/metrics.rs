//! Segmentation and depth metrics. Every node contributes with the weight of
//! its pixel count.

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SegMetrics {
    pub pixel_acc: f64,
    pub class_acc: f64,
    pub avg_jaccard: f64,
    pub freq_jaccard: f64,
    /// `None` for classes absent from both prediction and truth.
    pub per_class_jaccard: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMetrics {
    pub rel: f64,
    pub log10: f64,
    pub rms: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

pub fn seg_metrics(pred: &[usize], truth: &[usize], pixel_counts: &[usize], classes: usize) -> Result<SegMetrics> {
    if pred.len() != truth.len() || pred.len() != pixel_counts.len() {
        return shape_err("prediction, truth and pixel counts differ in length");
    }
    let mut tp = vec![0.0; classes];
    let mut fp = vec![0.0; classes];
    let mut fn_ = vec![0.0; classes];
    let mut gt = vec![0.0; classes];
    let mut total = 0.0;
    for ((&p, &t), &w) in pred.iter().zip(truth).zip(pixel_counts) {
        if p >= classes || t >= classes {
            return Err(Error::InvalidArgument(format!("label {} out of range for {classes} classes", p.max(t))));
        }
        let w = w as f64;
        total += w;
        gt[t] += w;
        if p == t {
            tp[t] += w;
        } else {
            fp[p] += w;
            fn_[t] += w;
        }
    }
    if total == 0.0 {
        return Err(Error::InvalidArgument("no pixels to evaluate".into()));
    }
    let per_class_jaccard: Vec<Option<f64>> = (0..classes)
        .map(|j| {
            let denom = tp[j] + fp[j] + fn_[j];
            (denom > 0.0).then(|| tp[j] / denom)
        })
        .collect();
    let present: Vec<usize> = (0..classes).filter(|&j| gt[j] > 0.0).collect();
    let k = present.len() as f64;
    let class_acc = present.iter().map(|&j| tp[j] / gt[j]).sum::<f64>() / k;
    let avg_jaccard = present.iter().map(|&j| per_class_jaccard[j].unwrap_or(0.0)).sum::<f64>() / k;
    let freq_jaccard = present
        .iter()
        .map(|&j| gt[j] / total * per_class_jaccard[j].unwrap_or(0.0))
        .sum::<f64>();
    Ok(SegMetrics {
        pixel_acc: tp.iter().sum::<f64>() / total,
        class_acc,
        avg_jaccard,
        freq_jaccard,
        per_class_jaccard,
    })
}

/// Depth metrics. `shift` is added to both prediction and truth before the
/// ratio and log metrics (use a small positive value when depths can touch 0);
/// shifted predictions are floored at `max(shift, 1e-6)`. The rms is computed on
/// the raw values.
pub fn depth_metrics(pred: &[f64], truth: &[f64], pixel_counts: &[usize], shift: f64) -> Result<DepthMetrics> {
    if pred.len() != truth.len() || pred.len() != pixel_counts.len() {
        return shape_err("prediction, truth and pixel counts differ in length");
    }
    let floor = shift.max(1e-6);
    let (mut rel, mut log10, mut sq, mut d1, mut d2, mut d3, mut total) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&p, &t), &w) in pred.iter().zip(truth).zip(pixel_counts) {
        let w = w as f64;
        let ts = t + shift;
        if !(ts > 0.0) {
            return Err(Error::InvalidArgument(format!("nonpositive depth {t} after shift {shift}")));
        }
        let ps = (p + shift).max(floor);
        total += w;
        rel += w * (ts - ps).abs() / ts;
        log10 += w * (ts.log10() - ps.log10()).abs();
        sq += w * (t - p) * (t - p);
        let ratio = (ts / ps).max(ps / ts);
        if ratio < 1.25 {
            d1 += w;
        }
        if ratio < 1.25f64.powi(2) {
            d2 += w;
        }
        if ratio < 1.25f64.powi(3) {
            d3 += w;
        }
    }
    if total == 0.0 {
        return Err(Error::InvalidArgument("no pixels to evaluate".into()));
    }
    Ok(DepthMetrics {
        rel: rel / total,
        log10: log10 / total,
        rms: (sq / total).sqrt(),
        delta1: d1 / total,
        delta2: d2 / total,
        delta3: d3 / total,
    })
}
