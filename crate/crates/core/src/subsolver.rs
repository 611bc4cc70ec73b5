//! Approximate minimization of `s -> m(x, s)` over `{ s in R : x + s in F }`.
//!
//! Projected gradient with Armijo backtracking. After every accepted inner
//! iterate, singular elements whose value `|U_i (x + s)|` dropped into the
//! `eps`-band are frozen: the rest of the search runs on the affine slice
//! through the current step, parallel to the reduced subspace. The loop ends
//! once the model criticality measure falls below
//! `min(q^2/4 min_i |U_i(x+s)|^r, theta ||s||^p)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::activity::ActivityState;
use crate::criticality::chi_model;
use crate::error::{PsarpError, Result};
use crate::models::{Assembled, ModelState, ModelValues};
use crate::problem::{ElementIndex, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsolverConfig {
    /// Exponent `r > 1` of the singular term in the stopping rule.
    pub r: f64,
    /// `theta >= 0` in the stopping rule.
    pub theta: f64,
    pub armijo: f64,
    pub max_inner: usize,
    pub initial_step: f64,
    pub max_step: f64,
}

impl Default for SubsolverConfig {
    fn default() -> Self {
        Self {
            r: 2.0,
            theta: 100.0,
            armijo: 1e-4,
            max_inner: 5000,
            initial_step: 1.0,
            max_step: 1e6,
        }
    }
}

impl SubsolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 1.0) {
            return Err(PsarpError::InvalidConfig(format!("r must exceed 1, got {}", self.r)));
        }
        if !(self.theta >= 0.0) {
            return Err(PsarpError::InvalidConfig("theta must be non-negative".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(PsarpError::InvalidConfig("Armijo parameter must lie in (0, 1)".into()));
        }
        if self.max_inner == 0 || !(self.initial_step > 0.0) || self.max_step < self.initial_step {
            return Err(PsarpError::InvalidConfig("invalid inner iteration limits".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub s: DVector<f64>,
    pub chi_m_value: f64,
    pub rhs_bound: f64,
    pub inner_iters: usize,
    /// Singular elements frozen during this solve, in order.
    pub freezes: Vec<usize>,
    /// Activity at `x + s`: `C_k` plus the frozen elements.
    pub activity: ActivityState,
    /// Model changes of frozen elements at the moment they were frozen.
    pub frozen_values: Vec<Option<f64>>,
    /// `m(x, s) - m(x, 0)` with its per-element parts; the value is negative.
    pub model_at_step: Assembled,
}

impl StepResult {
    pub fn model_changes(&self) -> &ModelValues {
        &self.model_at_step.elements
    }
}

/// `min[q^2/4 min_{i in H ∩ W} |U_i(x+s)|^r, theta ||s||^p]`, with an empty
/// inner minimum treated as `+inf`.
pub fn stopping_bound(
    problem: &Problem,
    activity: &ActivityState,
    x_plus_s: &DVector<f64>,
    step_norm: f64,
    p: usize,
    config: &SubsolverConfig,
) -> f64 {
    let q = problem.q();
    let singular = problem
        .singular()
        .iter()
        .enumerate()
        .filter(|(i, _)| !activity.is_excluded(*i))
        .map(|(_, u)| u.apply_scalar(x_plus_s).abs().powf(config.r))
        .fold(f64::INFINITY, f64::min);
    let singular = 0.25 * q * q * singular;
    singular.min(config.theta * step_norm.powi(p as i32))
}

pub fn compute_step(
    problem: &Problem,
    models: &ModelState,
    activity: &ActivityState,
    x: &DVector<f64>,
    config: &SubsolverConfig,
) -> Result<StepResult> {
    let n = problem.n();
    let p = models.config.p();
    let eps = activity.eps();
    let set = problem.feasible();
    let mut state = activity.clone();
    let mut frozen_values: Vec<Option<f64>> = vec![None; problem.singular_count()];
    let mut freezes = Vec::new();

    let mut anchor = DVector::zeros(n);
    let mut s = DVector::zeros(n);
    let mut current = models.assemble(problem, &state, &s, &frozen_values)?;
    let mut alpha = config.initial_step;
    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    let mut performed = 0;

    for inner in 1..=config.max_inner {
        performed = inner;
        let g = current.gradient.clone();
        let anchor_point = x + &anchor;
        let offset = &s - &anchor;
        let mut accepted = None;
        let mut first_try = true;
        while alpha >= 1e-20 {
            let y = &offset - &g * alpha;
            let d = set.project_shifted_subspace(&anchor_point, state.basis(), &y)?;
            let trial = &anchor + d;
            let move_vec = &trial - &s;
            let slope = g.dot(&move_vec);
            if move_vec.norm() <= 1e-15 * (1.0 + s.norm()) || slope >= 0.0 {
                break;
            }
            let value = models.element_changes(problem, &trial, &frozen_values).total();
            if value <= current.value + config.armijo * slope && value < current.value {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
            first_try = false;
        }
        let progressed = accepted.is_some();
        if let Some(trial) = accepted {
            let previous_s = s.clone();
            s = trial;
            let x_plus_s = x + &s;
            let mut froze = false;
            for (i, u) in problem.singular().iter().enumerate() {
                if state.is_excluded(i) || u.apply_scalar(&x_plus_s).abs() > eps {
                    continue;
                }
                let value = models.singular[i].change(u.apply_scalar(&s));
                frozen_values[i] = Some(value);
                state.freeze(problem, ElementIndex::Singular(i))?;
                freezes.push(i);
                froze = true;
            }
            if froze {
                anchor = s.clone();
                log::debug!("froze singular elements at inner iteration {inner}: {freezes:?}");
            }
            current = models.assemble(problem, &state, &s, &frozen_values)?;
            // spectral (Barzilai-Borwein) step for the next trial, falling
            // back to doubling when the curvature estimate is unusable
            let ds = &s - &previous_s;
            let dg = &current.gradient - &g;
            let curvature = ds.dot(&dg);
            alpha = if curvature > 0.0 && !froze {
                (ds.norm_squared() / curvature).clamp(1e-12, config.max_step)
            } else if first_try {
                (2.0 * alpha).min(config.max_step)
            } else {
                alpha
            };
        }

        let x_plus_s = x + &s;
        let step_norm = s.norm();
        if step_norm == 0.0 {
            if !progressed {
                return Err(PsarpError::ContractViolation(
                    "no model decrease available from s = 0".into(),
                ));
            }
            continue;
        }
        let bound = stopping_bound(problem, &state, &x_plus_s, step_norm, p, config);
        let tol = (1e-3 * bound).clamp(1e-15, 1e-8);
        let chi_m = chi_model(&current.gradient, &x_plus_s, set, state.basis(), tol)?;
        log::trace!(
            "inner {inner}: m={:.12e} |s|={:.3e} alpha={alpha:.2e} chi_m={:.3e} bound={bound:.3e} dim_r={}",
            current.value,
            step_norm,
            chi_m.value,
            state.dim_r()
        );
        if best.as_ref().is_none_or(|(c, _, _)| chi_m.value < *c) {
            best = Some((chi_m.value, bound, s.clone()));
        }
        if chi_m.value <= bound && current.value < 0.0 {
            return Ok(StepResult {
                s,
                chi_m_value: chi_m.value,
                rhs_bound: bound,
                inner_iters: inner,
                freezes,
                activity: state,
                frozen_values,
                model_at_step: current,
            });
        }
        if !progressed {
            break;
        }
    }
    let (chi_m, bound, best_step) = best.unwrap_or((f64::INFINITY, 0.0, s));
    Err(PsarpError::StepFailure {
        inner_iters: performed,
        best_step: best_step.iter().copied().collect(),
        chi_m,
        bound,
    })
}
