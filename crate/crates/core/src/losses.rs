//! Task losses evaluated on the MAP estimate, and label decoding.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{shape_err, Error, Result};

pub const DEFAULT_TUKEY_C: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskLossKind {
    /// Multi-class cross-entropy over `softmax(+Yhat)`. With `negate` the
    /// scores are negated first, i.e. `softmax(-Yhat)`.
    Softmax { negate: bool },
    /// Tukey biweight with threshold `c`.
    Tukey { c: f64 },
    LeastSquares,
    /// Maximum-likelihood training on the CRF's own negative log-likelihood.
    LogLikelihood,
}

impl TaskLossKind {
    pub const SOFTMAX: Self = Self::Softmax { negate: false };

    pub fn is_regression(&self) -> bool {
        matches!(self, Self::Tukey { .. } | Self::LeastSquares)
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Self::Softmax { .. })
    }

    /// Loss and gradient with respect to `Yhat`. Not defined for `LogLikelihood`,
    /// whose objective depends on the full system rather than the MAP estimate.
    pub fn evaluate(&self, yhat: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
        match *self {
            Self::Softmax { negate } => softmax_loss_signed(yhat, y, negate),
            Self::Tukey { c } => tukey_loss(yhat, y, c),
            Self::LeastSquares => ls_loss(yhat, y),
            Self::LogLikelihood => Err(Error::InvalidArgument(
                "log-likelihood is not a loss on the MAP estimate".into(),
            )),
        }
    }
}

impl fmt::Display for TaskLossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Softmax { negate: false } => f.write_str("softmax"),
            Self::Softmax { negate: true } => f.write_str("softmax_neg"),
            Self::Tukey { c } if *c == DEFAULT_TUKEY_C => f.write_str("tukey"),
            Self::Tukey { c } => write!(f, "tukey:{c}"),
            Self::LeastSquares => f.write_str("ls"),
            Self::LogLikelihood => f.write_str("loglik"),
        }
    }
}

impl FromStr for TaskLossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(c) = s.strip_prefix("tukey:") {
            let c: f64 = c.parse().map_err(|_| Error::InvalidArgument(format!("bad tukey constant {c:?}")))?;
            if !(c > 0.0) {
                return Err(Error::InvalidArgument("tukey constant must be > 0".into()));
            }
            return Ok(Self::Tukey { c });
        }
        match s {
            "softmax" => Ok(Self::SOFTMAX),
            "softmax_neg" => Ok(Self::Softmax { negate: true }),
            "tukey" | "robust" => Ok(Self::Tukey { c: DEFAULT_TUKEY_C }),
            "ls" | "least_squares" => Ok(Self::LeastSquares),
            "loglik" | "log_likelihood" | "log" => Ok(Self::LogLikelihood),
            other => Err(Error::InvalidArgument(format!("unknown loss {other:?}"))),
        }
    }
}

fn check_same(yhat: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if yhat.dim() != y.dim() {
        return shape_err(format!("prediction {:?} vs target {:?}", yhat.dim(), y.dim()));
    }
    Ok(())
}

/// Index of the hot entry, or an error if the row is not one-hot.
fn hot_index(row: ndarray::ArrayView1<'_, f64>) -> Result<usize> {
    let mut hot = None;
    for (j, &v) in row.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(Error::InvalidArgument("target row has more than one hot entry".into()));
            }
            hot = Some(j);
        } else if v != 0.0 {
            return Err(Error::InvalidArgument(format!("target entry {v} is not 0/1")));
        }
    }
    hot.ok_or_else(|| Error::InvalidArgument("target row has no hot entry".into()))
}

/// Cross-entropy of one-hot targets under a row-wise softmax of `Yhat`.
pub fn softmax_loss(yhat: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
    softmax_loss_signed(yhat, y, false)
}

pub fn softmax_loss_signed(
    yhat: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    negate: bool,
) -> Result<(f64, Array2<f64>)> {
    check_same(yhat, y)?;
    let sign = if negate { -1.0 } else { 1.0 };
    let mut grad = Array2::zeros(yhat.raw_dim());
    let mut loss = 0.0;
    for (p, (scores, target)) in yhat.outer_iter().zip(y.outer_iter()).enumerate() {
        let t = hot_index(target)?;
        let max = scores.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(sign * v));
        let exps: Array1<f64> = scores.mapv(|v| (sign * v - max).exp());
        let total = exps.sum();
        loss += total.ln() - (sign * scores[t] - max);
        for j in 0..scores.len() {
            let prob = exps[j] / total;
            grad[[p, j]] = sign * (prob - if j == t { 1.0 } else { 0.0 });
        }
    }
    Ok((loss, grad))
}

/// Per-row argmax; ties resolve to the lowest index.
pub fn predict_labels(yhat: ArrayView2<'_, f64>) -> Vec<usize> {
    yhat.outer_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Tukey biweight penalty `ρ(r)`.
pub fn tukey_rho(r: f64, c: f64) -> f64 {
    let c2 = c * c;
    if r.abs() < c {
        let u = 1.0 - r * r / c2;
        c2 / 6.0 * (1.0 - u * u * u)
    } else {
        c2 / 6.0
    }
}

/// `dρ/dr = r (1 - r²/c²)²` inside the threshold, 0 outside.
pub fn tukey_psi(r: f64, c: f64) -> f64 {
    if r.abs() < c {
        let u = 1.0 - r * r / (c * c);
        r * u * u
    } else {
        0.0
    }
}

/// `Σ ρ(y - ŷ)`; the gradient is with respect to `ŷ`, i.e. `-ψ(r)`.
pub fn tukey_loss(yhat: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, c: f64) -> Result<(f64, Array2<f64>)> {
    check_same(yhat, y)?;
    if !(c > 0.0) {
        return Err(Error::InvalidArgument("tukey constant must be > 0".into()));
    }
    let mut grad = Array2::zeros(yhat.raw_dim());
    let mut loss = 0.0;
    ndarray::Zip::from(&mut grad).and(yhat).and(y).for_each(|g, &p, &t| {
        let r = t - p;
        loss += tukey_rho(r, c);
        *g = -tukey_psi(r, c);
    });
    Ok((loss, grad))
}

/// `Σ (y - ŷ)²` with gradient `-2 (y - ŷ)`.
pub fn ls_loss(yhat: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
    check_same(yhat, y)?;
    let r = &y - &yhat;
    Ok((r.iter().map(|v| v * v).sum(), r * -2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn uniform_softmax() {
        let yhat = Array2::from_elem((5, 4), 0.3);
        let mut y = Array2::zeros((5, 4));
        for p in 0..5 {
            y[[p, p % 4]] = 1.0;
        }
        let (loss, _) = softmax_loss(yhat.view(), y.view()).unwrap();
        assert_abs_diff_eq!(loss, 5.0 * 4.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn softmax_saturates() {
        let (loss, grad) = softmax_loss(array![[50.0, 0.0, 0.0]].view(), array![[1.0, 0.0, 0.0]].view()).unwrap();
        assert!(loss < 1e-20);
        assert!(grad.iter().all(|g| g.abs() < 1e-20));
    }

    #[test]
    fn softmax_two_class_value() {
        // truth is class index 0 ("class 1" counting from one) with scores (1, 0)
        let (loss, grad) = softmax_loss(array![[1.0, 0.0]].view(), array![[1.0, 0.0]].view()).unwrap();
        assert_abs_diff_eq!(loss, (1.0 + (-1.0f64).exp()).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(loss, 0.313261687518223, epsilon = 1e-12);
        assert_abs_diff_eq!(grad[[0, 0]] + grad[[0, 1]], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn negated_softmax_prefers_small_scores() {
        let y = array![[1.0, 0.0]];
        let (plain, _) = softmax_loss_signed(array![[0.0, 1.0]].view(), y.view(), false).unwrap();
        let (neg, _) = softmax_loss_signed(array![[0.0, 1.0]].view(), y.view(), true).unwrap();
        assert!(neg < plain);
    }

    #[test]
    fn softmax_rejects_soft_targets() {
        let yhat = Array2::zeros((1, 2));
        assert!(softmax_loss(yhat.view(), array![[0.5, 0.5]].view()).is_err());
        assert!(softmax_loss(yhat.view(), array![[1.0, 1.0]].view()).is_err());
        assert!(softmax_loss(yhat.view(), array![[0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn argmax_decoding() {
        let yhat = array![[0.0, 1.0, 0.0], [0.2, 0.9, 0.1], [0.5, 0.5, 0.0]];
        assert_eq!(predict_labels(yhat.view()), vec![1, 1, 0]);
    }

    #[test]
    fn tukey_points() {
        assert_eq!(tukey_rho(0.0, 1.0), 0.0);
        assert_abs_diff_eq!(tukey_rho(0.5, 1.0), (1.0 - 0.75f64.powi(3)) / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tukey_rho(0.5, 1.0), 0.0963541666666667, epsilon = 1e-14);
        for r in [1.0, -1.0, 2.0, -7.5] {
            assert_eq!(tukey_rho(r, 1.0), 1.0 / 6.0);
            assert_eq!(tukey_psi(r, 1.0), 0.0);
        }
        let (loss, grad) = tukey_loss(array![[0.0], [0.0]].view(), array![[0.5], [3.0]].view(), 1.0).unwrap();
        assert_abs_diff_eq!(loss, 0.0963541666666667 + 1.0 / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(grad[[0, 0]], -0.5 * 0.75 * 0.75, epsilon = 1e-15);
        assert_eq!(grad[[1, 0]], 0.0);
    }

    #[test]
    fn least_squares() {
        let (loss, grad) = ls_loss(array![[0.0], [0.0]].view(), array![[1.0], [-2.0]].view()).unwrap();
        assert_eq!(loss, 5.0);
        assert_eq!(grad, array![[-2.0], [4.0]]);
        let y = array![[0.3], [0.7]];
        assert_eq!(ls_loss(y.view(), y.view()).unwrap().0, 0.0);
    }

    #[test]
    fn ls_gradient_matches_finite_differences() {
        let yhat = array![[0.3], [-1.2], [2.0]];
        let y = array![[0.1], [0.4], [-0.5]];
        let (_, grad) = ls_loss(yhat.view(), y.view()).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut plus = yhat.clone();
            plus[[i, 0]] += h;
            let mut minus = yhat.clone();
            minus[[i, 0]] -= h;
            let fd = (ls_loss(plus.view(), y.view()).unwrap().0 - ls_loss(minus.view(), y.view()).unwrap().0) / (2.0 * h);
            assert!((fd - grad[[i, 0]]).abs() <= 1e-8 * grad[[i, 0]].abs().max(1.0));
        }
    }

    #[test]
    fn loss_kind_parsing() {
        for s in ["softmax", "softmax_neg", "tukey", "ls", "loglik", "tukey:0.5"] {
            let kind: TaskLossKind = s.parse().unwrap();
            assert_eq!(kind.to_string(), s);
        }
        assert!("hinge".parse::<TaskLossKind>().is_err());
        assert!("tukey:-1".parse::<TaskLossKind>().is_err());
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(row in prop::collection::vec(-20.0f64..20.0, 2..6), shift in -100.0f64..100.0, hot in 0usize..6) {
            let m = row.len();
            let yhat = Array2::from_shape_vec((1, m), row.clone()).unwrap();
            let shifted = yhat.mapv(|v| v + shift);
            let mut y = Array2::zeros((1, m));
            y[[0, hot % m]] = 1.0;
            let a = softmax_loss(yhat.view(), y.view()).unwrap().0;
            let b = softmax_loss(shifted.view(), y.view()).unwrap().0;
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn argmax_invariant_under_monotone_maps(row in prop::collection::vec(-5.0f64..5.0, 2..8)) {
            let m = row.len();
            let yhat = Array2::from_shape_vec((1, m), row).unwrap();
            let mapped = yhat.mapv(|v| (2.0 * v).exp() + 3.0 * v);
            prop_assert_eq!(predict_labels(yhat.view()), predict_labels(mapped.view()));
        }

        #[test]
        fn tukey_monotone_and_bounded(a in 0.0f64..3.0, b in 0.0f64..3.0, c in 0.2f64..2.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(tukey_rho(lo, c) <= tukey_rho(hi, c) + 1e-15);
            prop_assert!(tukey_rho(hi, c) <= c * c / 6.0 + 1e-15);
            prop_assert_eq!(tukey_rho(-hi, c), tukey_rho(hi, c));
        }
    }

    #[test]
    fn tukey_gradient_continuous_and_peaks_inside() {
        let c = 1.0;
        assert!(tukey_psi(c - 1e-9, c).abs() < 1e-15);
        assert_eq!(tukey_psi(c + 1e-9, c), 0.0);
        let samples: Vec<(f64, f64)> = (0..=4000).map(|i| {
            let r = i as f64 * 2.0 / 4000.0;
            (r, tukey_psi(r, c).abs())
        }).collect();
        let (arg, sup) = samples.iter().cloned().fold((0.0, 0.0), |best, s| if s.1 > best.1 { s } else { best });
        assert!(sup.is_finite() && arg > 0.0 && arg < c);
        // the analytic maximiser is c / sqrt(5)
        assert!((arg - c / 5f64.sqrt()).abs() < 1e-3);
    }
}
