//! The criticality measure
//! `chi = | min { g^T d : x + d in F, d in R, ||d|| <= 1 } |`.
//!
//! The ball constraint is dualized: for `lambda > 0` the minimizer of
//! `g^T d + lambda ||d||^2` over the remaining constraints is a shifted
//! subspace projection of `-g / (2 lambda)`, and its norm decreases with
//! `lambda`. Bisection on `log lambda` finds the multiplier that puts the
//! minimizer on the unit sphere, and every iterate yields both a feasible
//! point and a Lagrangian lower bound, so the returned gap is certified.

use nalgebra::{DMatrix, DVector};

use crate::error::{PsarpError, Result};
use crate::feasible::FeasibleSet;

pub const LAMBDA_MIN: f64 = 1e-12;
pub const LAMBDA_MAX: f64 = 1e12;
pub const MAX_BISECTIONS: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ChiResult {
    /// `|g^T d_star|`.
    pub value: f64,
    pub d_star: DVector<f64>,
    /// Multiplier of the ball constraint (zero for an interior optimum).
    pub lambda: f64,
    /// Upper bound on `chi - value`.
    pub gap: f64,
}

impl ChiResult {
    fn zero(n: usize) -> Self {
        Self {
            value: 0.0,
            d_star: DVector::zeros(n),
            lambda: 0.0,
            gap: 0.0,
        }
    }

    /// Certified upper bound on the exact measure.
    pub fn upper(&self) -> f64 {
        self.value + self.gap
    }
}

/// `chi` for gradient `g` at the member `x`, with `basis` spanning `R`.
pub fn chi(
    g: &DVector<f64>,
    x: &DVector<f64>,
    set: &FeasibleSet,
    basis: &DMatrix<f64>,
    tol: f64,
) -> Result<ChiResult> {
    let n = x.len();
    if basis.ncols() == 0 {
        return Ok(ChiResult::zero(n));
    }
    let g_r = basis * (basis.transpose() * g);
    if g_r.norm() == 0.0 {
        return Ok(ChiResult::zero(n));
    }
    let minimizer =
        |lambda: f64| set.project_shifted_subspace(x, basis, &(&g_r * (-0.5 / lambda)));

    let d_min = minimizer(LAMBDA_MIN)?;
    let norm_min = d_min.norm();
    if norm_min <= 1.0 {
        return Ok(ChiResult {
            value: g.dot(&d_min).abs(),
            gap: LAMBDA_MIN * (1.0 - norm_min * norm_min),
            d_star: d_min,
            lambda: 0.0,
        });
    }
    let d_max = minimizer(LAMBDA_MAX)?;
    if d_max.norm() > 1.0 {
        return Err(PsarpError::ChiSolver(format!(
            "no bracket: ||d(lambda_max)|| = {:e} with ||g_R|| = {:e}",
            d_max.norm(),
            g_r.norm()
        )));
    }

    let lagrangian = |d: &DVector<f64>, lambda: f64| g.dot(d) + lambda * (d.norm_squared() - 1.0);
    let (mut lo, mut d_lo) = (LAMBDA_MIN, d_min);
    let (mut hi, mut d_hi) = (LAMBDA_MAX, d_max);
    let mut best = best_primal(g, &d_lo, &d_hi);
    let mut gap = best.0 - lagrangian(&d_lo, lo).max(lagrangian(&d_hi, hi));
    for _ in 0..MAX_BISECTIONS {
        if gap <= tol {
            break;
        }
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let d = minimizer(mid)?;
        if d.norm() > 1.0 {
            lo = mid;
            d_lo = d;
        } else {
            hi = mid;
            d_hi = d;
        }
        best = best_primal(g, &d_lo, &d_hi);
        gap = best.0 - lagrangian(&d_lo, lo).max(lagrangian(&d_hi, hi));
    }
    if gap > tol {
        log::debug!("chi bisection stopped with gap {gap:e} above tolerance {tol:e}");
    }
    Ok(ChiResult {
        value: best.0.abs(),
        d_star: best.1,
        lambda: hi,
        gap: gap.max(0.0),
    })
}

/// Better of `d_hi` (inside the ball) and `d_lo` pulled back onto the
/// sphere, which stays feasible because the set is convex and contains `x`.
fn best_primal(g: &DVector<f64>, d_lo: &DVector<f64>, d_hi: &DVector<f64>) -> (f64, DVector<f64>) {
    let scaled = d_lo / d_lo.norm();
    let v_lo = g.dot(&scaled);
    let v_hi = g.dot(d_hi);
    if v_lo < v_hi {
        (v_lo, scaled)
    } else {
        (v_hi, d_hi.clone())
    }
}

/// `chi_m`: the same measure for a model gradient at `x + s`, over `R^+`.
pub fn chi_model(
    model_gradient: &DVector<f64>,
    x_plus_s: &DVector<f64>,
    set: &FeasibleSet,
    basis_plus: &DMatrix<f64>,
    tol: f64,
) -> Result<ChiResult> {
    chi(model_gradient, x_plus_s, set, basis_plus, tol)
}
