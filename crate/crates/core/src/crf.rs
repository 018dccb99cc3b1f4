//! Continuous CRF core.
//!
//! With unary scores `Z` (n x m) and symmetric affinities `R` (n x n), the energy
//!
//! ```text
//! E(Y) = Σ_p |y_p - z_p|² + ½ Σ_{p≠q} R_pq |y_p - y_q|²
//!      = tr(Yᵀ A0 Y) - 2 tr(Zᵀ Y) + tr(Zᵀ Z),   A0 = I + D - R,  D_pp = Σ_q R_pq
//! ```
//!
//! is a convex quadratic. The full precision over the stacked labels is `A0 ⊗ I_m`,
//! so every operation here works on the `n x n` block and handles the `m` label
//! columns independently.
//!
//! Gradients with respect to `R` follow one convention throughout: `dR[p][q]` is
//! the derivative with respect to the shared value of the symmetric pair
//! `R_pq = R_qp`. The matrix is symmetric with a zero diagonal.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{shape_err, Error, Result};
use crate::linalg::Cholesky;

/// Largest allowed asymmetry `|R_pq - R_qp|`, relative to `1 + max |R|`.
const SYMMETRY_TOL: f64 = 1e-12;

/// `A0 = I + D - R` together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct PrecisionSystem {
    a0: Array2<f64>,
    chol: Cholesky,
    logdet_a0: f64,
    degree: Vec<f64>,
}

/// Result of a full inference: MAP scores, the system that produced them and the unary input.
#[derive(Debug, Clone)]
pub struct CrfOutput {
    pub yhat: Array2<f64>,
    pub system: PrecisionSystem,
    pub z: Array2<f64>,
}

impl PrecisionSystem {
    pub fn n(&self) -> usize {
        self.a0.nrows()
    }

    pub fn a0(&self) -> &Array2<f64> {
        &self.a0
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn logdet_a0(&self) -> f64 {
        self.logdet_a0
    }

    /// Row sums of `R`, i.e. the diagonal of `D`.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    fn check_rows(&self, what: &str, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.nrows() != self.n() {
            return shape_err(format!("{what} has {} rows, system has {}", x.nrows(), self.n()));
        }
        Ok(())
    }
}

/// Build and factor `A0 = I + D - R`.
pub fn assemble(r: ArrayView2<'_, f64>) -> Result<PrecisionSystem> {
    let n = r.nrows();
    if r.ncols() != n {
        return shape_err(format!("R must be square, got {}x{}", n, r.ncols()));
    }
    let scale = 1.0 + r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for p in 0..n {
        if r[[p, p]] != 0.0 {
            return Err(Error::InvalidPrecision(format!("R[{p},{p}] = {} must be 0", r[[p, p]])));
        }
        for q in (p + 1)..n {
            let (a, b) = (r[[p, q]], r[[q, p]]);
            if !(a >= 0.0 && b >= 0.0) || !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidPrecision(format!("R[{p},{q}] must be finite and nonnegative")));
            }
            if (a - b).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidPrecision(format!("R is not symmetric at ({p},{q})")));
            }
        }
    }
    let degree: Vec<f64> = r.rows().into_iter().map(|row| row.sum()).collect();
    let mut a0 = r.mapv(|v| -v);
    for p in 0..n {
        a0[[p, p]] = 1.0 + degree[p];
    }
    let chol = Cholesky::factor(a0.view())?;
    let logdet_a0 = chol.log_det();
    Ok(PrecisionSystem { a0, chol, logdet_a0, degree })
}

/// Closed-form MAP estimate: solve `A0 Yhat = Z` column by column.
pub fn map_infer(system: &PrecisionSystem, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    system.check_rows("Z", z)?;
    system.chol.solve(z)
}

/// Assemble and solve in one step.
pub fn infer(r: ArrayView2<'_, f64>, z: Array2<f64>) -> Result<CrfOutput> {
    let system = assemble(r)?;
    let yhat = map_infer(&system, z.view())?;
    Ok(CrfOutput { yhat, system, z })
}

fn trace_product(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    // tr(Aᵀ B)
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y)
}

fn check_pair(z: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if z.dim() != y.dim() {
        return shape_err(format!("Z is {:?} but Y is {:?}", z.dim(), y.dim()));
    }
    Ok(())
}

/// `tr(Yᵀ A0 Y) - 2 tr(Zᵀ Y) + tr(Zᵀ Z)`.
pub fn energy(system: &PrecisionSystem, z: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    check_pair(z, y)?;
    system.check_rows("Y", y)?;
    let ay = system.a0.dot(&y);
    Ok(trace_product(y, ay.view()) - 2.0 * trace_product(z, y) + trace_product(z, z))
}

/// Negative conditional log-likelihood of `Y`:
///
/// `tr(Yᵀ A0 Y) - 2 tr(Zᵀ Y) + tr(Zᵀ A0⁻¹ Z) - (m/2) log|A0| + (n m / 2) log π`.
pub fn nll(system: &PrecisionSystem, z: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    check_pair(z, y)?;
    system.check_rows("Y", y)?;
    let yhat = system.chol.solve(z)?;
    Ok(nll_with_map(system, z, y, yhat.view()))
}

fn nll_with_map(system: &PrecisionSystem, z: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, yhat: ArrayView2<'_, f64>) -> f64 {
    let (n, m) = y.dim();
    let ay = system.a0.dot(&y);
    trace_product(y, ay.view()) - 2.0 * trace_product(z, y) + trace_product(z, yhat)
        - 0.5 * m as f64 * system.logdet_a0
        + 0.5 * (n * m) as f64 * PI.ln()
}

/// Map a gradient with respect to `A0` to the pair-value gradient with respect to `R`:
/// `dR_pq = dA0_pp + dA0_qq - dA0_pq - dA0_qp` for `p ≠ q`.
pub fn pair_gradient_from_precision(da0: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = da0.nrows();
    let mut dr = Array2::zeros((n, n));
    for p in 0..n {
        for q in (p + 1)..n {
            let g = da0[[p, p]] + da0[[q, q]] - da0[[p, q]] - da0[[q, p]];
            dr[[p, q]] = g;
            dr[[q, p]] = g;
        }
    }
    dr
}

/// Gradients of [`nll`] with respect to `Z` and `R`.
pub fn nll_backward(
    system: &PrecisionSystem,
    z: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (_, dz, dr) = nll_and_backward(system, z, y)?;
    Ok((dz, dr))
}

/// [`nll`] and its gradients sharing one solve.
pub fn nll_and_backward(
    system: &PrecisionSystem,
    z: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    check_pair(z, y)?;
    system.check_rows("Y", y)?;
    let m = y.ncols() as f64;
    let yhat = system.chol.solve(z)?;
    let loss = nll_with_map(system, z, y, yhat.view());
    let dz = (&yhat - &y) * 2.0;
    let inv = system.chol.inverse();
    let da0 = y.dot(&y.t()) - yhat.dot(&yhat.t()) - inv * (0.5 * m);
    Ok((loss, dz, pair_gradient_from_precision(da0.view())))
}

/// Implicit differentiation through the MAP solve `Yhat = A0⁻¹ Z`.
///
/// With `G = A0⁻¹ dL/dYhat`: `dZ = G` and `dA0 = -G Yhatᵀ`.
pub fn map_backward(
    system: &PrecisionSystem,
    yhat: ArrayView2<'_, f64>,
    d_yhat: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_pair(yhat, d_yhat)?;
    system.check_rows("dYhat", d_yhat)?;
    let g = system.chol.solve(d_yhat)?;
    let da0 = -g.dot(&yhat.t());
    let dr = pair_gradient_from_precision(da0.view());
    Ok((g, dr))
}

/// `max |A0 Yhat - Z|`.
pub fn residual_inf(system: &PrecisionSystem, yhat: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> f64 {
    let res = system.a0.dot(&yhat) - z;
    res.iter().fold(0.0, |m, v| m.max(v.abs()))
}
