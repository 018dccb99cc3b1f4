//! Label corruption: additive Gaussian noise or large outliers on a uniformly
//! sampled subset of node targets.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;
pub const DEFAULT_OUTLIER_MAGNITUDE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorruptionKind {
    GaussianNoise { sigma: f64 },
    Outlier { magnitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub fraction: f64,
}

impl CorruptionSpec {
    pub fn apply<R: Rng + ?Sized>(&self, targets: &Array2<f64>, rng: &mut R) -> Result<Array2<f64>> {
        match self.kind {
            CorruptionKind::GaussianNoise { sigma } => inject_gaussian_noise(targets, self.fraction, sigma, rng),
            CorruptionKind::Outlier { magnitude } => inject_outliers(targets, self.fraction, magnitude, rng),
        }
    }

    pub fn label(&self) -> String {
        let pct = (self.fraction * 100.0).round() as u32;
        match self.kind {
            _ if self.fraction == 0.0 => "0%".to_string(),
            CorruptionKind::GaussianNoise { .. } => format!("{pct}% noise"),
            CorruptionKind::Outlier { .. } => format!("{pct}% outlier"),
        }
    }
}

/// Number of corrupted nodes: `fraction * n` rounded to nearest, ties up.
pub fn corrupted_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) + 0.5).floor().min(n as f64) as usize
}

/// Sample `k` distinct indices from `0..n` uniformly (partial Fisher-Yates),
/// returned in sorted order.
pub fn sample_without_replacement<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut chosen = idx[..k.min(n)].to_vec();
    chosen.sort_unstable();
    chosen
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside [0, 1]")));
    }
    Ok(())
}

/// Add `N(0, σ²)` to a uniformly sampled `fraction` of the rows. No clipping.
pub fn inject_gaussian_noise<R: Rng + ?Sized>(
    targets: &Array2<f64>,
    fraction: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<Array2<f64>> {
    check_fraction(fraction)?;
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument("sigma must be >= 0".into()));
    }
    let n = targets.nrows();
    let chosen = sample_without_replacement(n, corrupted_count(n, fraction), rng);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = targets.clone();
    for p in chosen {
        out.row_mut(p).iter_mut().for_each(|v| *v += normal.sample(rng));
    }
    Ok(out)
}

/// Add `magnitude` to a uniformly sampled `fraction` of the rows.
pub fn inject_outliers<R: Rng + ?Sized>(
    targets: &Array2<f64>,
    fraction: f64,
    magnitude: f64,
    rng: &mut R,
) -> Result<Array2<f64>> {
    check_fraction(fraction)?;
    if !(magnitude > 0.0) {
        return Err(Error::InvalidArgument("outlier magnitude must be > 0".into()));
    }
    let n = targets.nrows();
    let chosen = sample_without_replacement(n, corrupted_count(n, fraction), rng);
    let mut out = targets.clone();
    for p in chosen {
        out.row_mut(p).iter_mut().for_each(|v| *v += magnitude);
    }
    Ok(out)
}
