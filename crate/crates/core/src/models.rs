//! Element models and their assembly into `m(x, s) = sum_i m_i(x_i, s_i)`.
//!
//! Nice elements use the `p`-th order Taylor expansion plus the adaptive
//! term `sigma_i / (p+1)! ||s_i||^(p+1)`. Singular elements `|x_i|^q` use
//! either the odd-degree two-sided expansion, which overestimates on both
//! sides of the origin, or the function itself.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::activity::ActivityState;
use crate::error::{PsarpError, Result};
use crate::problem::{ElementValues, IndexSet, Problem};
use crate::tensor::SymTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HModel {
    TwoSided,
    True,
}

impl std::str::FromStr for HModel {
    type Err = PsarpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-sided" => Ok(HModel::TwoSided),
            "true" => Ok(HModel::True),
            other => Err(PsarpError::InvalidConfig(format!(
                "unknown singular model '{other}' (expected two-sided or true)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    p: usize,
    h_model: HModel,
    q: f64,
}

impl ModelConfig {
    /// Two-sided models need an odd degree whenever singular terms exist.
    pub fn new(p: usize, h_model: HModel, q: f64, has_singular: bool) -> Result<Self> {
        if p == 0 {
            return Err(PsarpError::InvalidConfig("model degree p must be at least 1".into()));
        }
        if h_model == HModel::TwoSided && has_singular && p.is_multiple_of(2) {
            return Err(PsarpError::InvalidConfig(format!(
                "two-sided singular models require odd p, got p = {p} (or allow the general-set mode)"
            )));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(PsarpError::InvalidConfig(format!("q must lie in (0, 1), got {q}")));
        }
        Ok(Self { p, h_model, q })
    }

    /// Like [`ModelConfig::new`] but accepts even two-sided degrees, whose
    /// models need not overestimate `|x + s|^q`.
    pub fn without_parity_check(p: usize, h_model: HModel, q: f64) -> Result<Self> {
        Self::new(p, h_model, q, false).map(|c| Self { h_model, ..c })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn h_model(&self) -> HModel {
        self.h_model
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

/// Displacement that maps a sign-crossing step onto the mirrored branch.
pub fn mu(x: f64, s: f64) -> Result<f64> {
    let xs = x + s;
    if x == 0.0 || xs == 0.0 {
        return Err(PsarpError::SingularInput { x, xs });
    }
    Ok(mu_unchecked(x, s))
}

/// `mu` extended continuously to `x + s = 0`, where every branch gives `-|x|`.
fn mu_unchecked(x: f64, s: f64) -> f64 {
    let xs = x + s;
    match (x > 0.0, xs > 0.0) {
        (true, true) => s,
        (false, false) if xs < 0.0 => -s,
        (true, false) if xs < 0.0 => -(2.0 * x + s),
        (false, true) => 2.0 * x + s,
        _ => -x.abs(),
    }
}

/// Two-sided expansion of `|t|^q` anchored at `x_i != 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSidedBranch {
    pub x: f64,
    pub anchor: f64,
    /// `c_j = q/j! prod_{l=1}^{j-1} (q - l) |x|^(q-j)` for `j = 1..=p`.
    pub coefficients: Vec<f64>,
    pub base: f64,
}

impl TwoSidedBranch {
    pub fn new(x: f64, q: f64, p: usize) -> Result<Self> {
        if x == 0.0 {
            return Err(PsarpError::SingularInput { x, xs: x });
        }
        let anchor = x.abs();
        let mut coefficients = Vec::with_capacity(p);
        let mut c = q * anchor.powf(q - 1.0);
        for j in 1..=p {
            if j > 1 {
                c *= (q - (j - 1) as f64) / (j as f64 * anchor);
            }
            coefficients.push(c);
        }
        Ok(Self {
            x,
            anchor,
            coefficients,
            base: anchor.powf(q),
        })
    }

    pub fn value(&self, s: f64) -> f64 {
        self.base + self.change(s)
    }

    /// `m(x, s) - m(x, 0)`, free of the cancellation in `value(s) - base`.
    pub fn change(&self, s: f64) -> f64 {
        let m = mu_unchecked(self.x, s);
        horner(&self.coefficients, m) * m
    }

    /// Value and derivative in `s`; the derivative needs `x + s != 0`.
    pub fn eval(&self, s: f64) -> Result<(f64, f64)> {
        let (change, slope) = self.eval_change(s)?;
        Ok((self.base + change, slope))
    }

    /// `change(s)` and its derivative.
    pub fn eval_change(&self, s: f64) -> Result<(f64, f64)> {
        let m = mu(self.x, s)?;
        let value = horner(&self.coefficients, m) * m;
        let dmu = if self.x + s > 0.0 { 1.0 } else { -1.0 };
        let slope: f64 = self
            .coefficients
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, c)| acc * m + (k + 1) as f64 * c);
        Ok((value, slope * dmu))
    }
}

/// `sum_j c_j m^(j-1)` for `c = [c_1, ..., c_p]`.
fn horner(coefficients: &[f64], m: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * m + c)
}

pub fn eval_two_sided(x: f64, s: f64, q: f64, p: usize) -> Result<(f64, f64)> {
    TwoSidedBranch::new(x, q, p)?.eval(s)
}

/// `|x + s|^q` and its derivative, defined for `x + s != 0`.
pub fn eval_true_h(x: f64, s: f64, q: f64) -> Result<(f64, f64)> {
    let t = x + s;
    if t == 0.0 {
        return Err(PsarpError::SingularInput { x, xs: t });
    }
    Ok((t.abs().powf(q), q * t.abs().powf(q - 1.0) * t.signum()))
}

/// `|x + s|^q - |x|^q`, accurate for small `|s|` on the side of `x`.
pub fn true_h_change(x: f64, s: f64, q: f64) -> f64 {
    let t = x + s;
    if x != 0.0 && t != 0.0 && (t > 0.0) == (x > 0.0) {
        x.abs().powf(q) * (q * (s / x).ln_1p()).exp_m1()
    } else {
        t.abs().powf(q) - x.abs().powf(q)
    }
}

/// Taylor data of one nice element at the current iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorData {
    pub base: f64,
    /// `tensors[j - 1]` is the order-`j` derivative, `j = 1..=p`.
    pub tensors: Vec<SymTensor>,
    pub sigma: f64,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Regularized Taylor model of a nice element and its gradient in `s_i`.
pub fn eval_nice_model(data: &TaylorData, s: &[f64]) -> (f64, DVector<f64>) {
    let (change, gradient) = eval_nice_change(data, s);
    (data.base + change, gradient)
}

/// `m_i(x_i, s_i) - m_i(x_i, 0)` and its gradient.
pub fn eval_nice_change(data: &TaylorData, s: &[f64]) -> (f64, DVector<f64>) {
    let p = data.tensors.len();
    let mut value = 0.0;
    let mut gradient = DVector::zeros(s.len());
    for (k, t) in data.tensors.iter().enumerate() {
        let j = k + 1;
        let partial = t.contract_all_but_one(s);
        let full: f64 = partial.iter().zip(s).map(|(a, b)| a * b).sum();
        value += full / factorial(j);
        gradient += partial / factorial(j - 1);
    }
    let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    value += data.sigma / factorial(p + 1) * norm.powi(p as i32 + 1);
    if norm > 0.0 {
        let scale = data.sigma / factorial(p) * norm.powi(p as i32 - 1);
        for (g, v) in gradient.iter_mut().zip(s) {
            *g += scale * v;
        }
    }
    (value, gradient)
}

/// Model value of a nice element without the regularization term.
pub fn taylor_value(data: &TaylorData, s: &[f64]) -> f64 {
    let p = data.tensors.len();
    let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    eval_nice_model(data, s).0 - data.sigma / factorial(p + 1) * norm.powi(p as i32 + 1)
}

/// Singular element model at the current iterate.
#[derive(Debug, Clone, PartialEq)]
pub enum SingularModel {
    TwoSided(TwoSidedBranch),
    True { x: f64, q: f64 },
    /// Element in `C_k`: it never moves during this iteration.
    Fixed { value: f64 },
}

impl SingularModel {
    pub fn value(&self, s: f64) -> f64 {
        match self {
            SingularModel::TwoSided(b) => b.value(s),
            SingularModel::True { x, q } => (x + s).abs().powf(*q),
            SingularModel::Fixed { value } => *value,
        }
    }

    pub fn eval(&self, s: f64) -> Result<(f64, f64)> {
        match self {
            SingularModel::TwoSided(b) => b.eval(s),
            SingularModel::True { x, q } => eval_true_h(*x, s, *q),
            SingularModel::Fixed { value } => Ok((*value, 0.0)),
        }
    }

    /// `value(s) - value(0)`.
    pub fn change(&self, s: f64) -> f64 {
        match self {
            SingularModel::TwoSided(b) => b.change(s),
            SingularModel::True { x, q } => true_h_change(*x, s, *q),
            SingularModel::Fixed { .. } => 0.0,
        }
    }

    /// `change(s)` and its derivative; needs `x + s != 0`.
    pub fn eval_change(&self, s: f64) -> Result<(f64, f64)> {
        match self {
            SingularModel::TwoSided(b) => b.eval_change(s),
            SingularModel::True { x, q } => {
                let (_, g) = eval_true_h(*x, s, *q)?;
                Ok((true_h_change(*x, s, *q), g))
            }
            SingularModel::Fixed { .. } => Ok((0.0, 0.0)),
        }
    }
}

/// Per-element model changes `m_i(x_i, s_i) - m_i(x_i, 0)` at a step.
///
/// Working with changes rather than values keeps small model decreases
/// resolvable when the element values themselves are large.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelValues {
    pub nice: Vec<f64>,
    pub singular: Vec<f64>,
}

impl ModelValues {
    pub fn total(&self) -> f64 {
        self.nice.iter().chain(&self.singular).sum()
    }
}

/// Model change `m(x, s) - m(x, 0)`, gradient on `R` and per-element
/// changes at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub elements: ModelValues,
}

/// All element models built at `x_k`.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    pub x: DVector<f64>,
    pub nice: Vec<TaylorData>,
    pub singular: Vec<SingularModel>,
}

impl ModelState {
    /// Builds the models from Taylor data of the nice elements. Singular
    /// elements in `C_k` become constants.
    pub fn new(
        problem: &Problem,
        config: ModelConfig,
        x: &DVector<f64>,
        nice: Vec<TaylorData>,
        activity: &ActivityState,
    ) -> Result<Self> {
        if nice.len() != problem.nice_count() {
            return Err(PsarpError::ContractViolation(
                "one Taylor data entry per nice element is required".into(),
            ));
        }
        if nice.iter().any(|d| d.tensors.len() != config.p()) {
            return Err(PsarpError::ContractViolation(format!(
                "Taylor data must hold derivatives of orders 1..={}",
                config.p()
            )));
        }
        let singular = problem
            .singular()
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let xi = u.apply_scalar(x);
                if activity.in_c(i) {
                    return Ok(SingularModel::Fixed {
                        value: xi.abs().powf(config.q()),
                    });
                }
                Ok(match config.h_model() {
                    HModel::TwoSided => {
                        SingularModel::TwoSided(TwoSidedBranch::new(xi, config.q(), config.p())?)
                    }
                    HModel::True => SingularModel::True { x: xi, q: config.q() },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            x: x.clone(),
            nice,
            singular,
        })
    }

    /// Per-element model changes at step `s`. Frozen elements report their
    /// frozen change when one is supplied.
    pub fn element_changes(
        &self,
        problem: &Problem,
        s: &DVector<f64>,
        frozen: &[Option<f64>],
    ) -> ModelValues {
        let nice = self
            .nice
            .iter()
            .zip(problem.nice())
            .map(|(d, e)| eval_nice_change(d, e.map.apply(s).as_slice()).0)
            .collect();
        let singular = self
            .singular
            .iter()
            .zip(problem.singular())
            .enumerate()
            .map(|(i, (m, u))| match frozen.get(i).copied().flatten() {
                Some(v) => v,
                None => m.change(u.apply_scalar(s)),
            })
            .collect();
        ModelValues { nice, singular }
    }

    /// `m(x, s)` over all of `M` with the gradient of `m_W` projected onto
    /// `R`, where `W` and `R` come from `activity` (frozen elements included).
    pub fn assemble(
        &self,
        problem: &Problem,
        activity: &ActivityState,
        s: &DVector<f64>,
        frozen: &[Option<f64>],
    ) -> Result<Assembled> {
        let mut gradient = DVector::zeros(problem.n());
        let mut nice_values = Vec::with_capacity(self.nice.len());
        for (d, e) in self.nice.iter().zip(problem.nice()) {
            let (v, g) = eval_nice_change(d, e.map.apply(s).as_slice());
            nice_values.push(v);
            gradient += e.map.apply_transpose(&g);
        }
        let mut singular_values = Vec::with_capacity(self.singular.len());
        for (i, (m, u)) in self.singular.iter().zip(problem.singular()).enumerate() {
            if activity.is_excluded(i) {
                let v = match frozen.get(i).copied().flatten() {
                    Some(v) => v,
                    None => m.change(u.apply_scalar(s)),
                };
                singular_values.push(v);
                continue;
            }
            let si = u.apply_scalar(s);
            let (v, g) = m.eval_change(si).map_err(|_| {
                PsarpError::ContractViolation(format!(
                    "singular element {i} reached x_i + s_i = 0 without being frozen"
                ))
            })?;
            singular_values.push(v);
            gradient += u.row_vector() * g;
        }
        let elements = ModelValues {
            nice: nice_values,
            singular: singular_values,
        };
        Ok(Assembled {
            value: elements.total(),
            gradient: activity.project_onto_r(&gradient),
            elements,
        })
    }

    /// `1/(p+1)! sum_{i in N} sigma_i ||U_i s||^(p+1)`.
    pub fn regularization(&self, problem: &Problem, s: &DVector<f64>) -> f64 {
        let p = self.config.p();
        self.nice
            .iter()
            .zip(problem.nice())
            .map(|(d, e)| d.sigma * e.map.apply(s).norm().powi(p as i32 + 1))
            .sum::<f64>()
            / factorial(p + 1)
    }
}

/// Achieved and predicted decreases over one index set.
#[derive(Debug, Clone, PartialEq)]
pub struct Decrements {
    pub delta_f: f64,
    pub delta_m: f64,
    pub delta_t: f64,
    /// `f_i(x_i) - f_i(x_i + s_i)` per nice element.
    pub delta_f_nice: Vec<f64>,
    /// `m_i(x_i, 0) - m_i(x_i, s_i)` per nice element.
    pub delta_m_nice: Vec<f64>,
}

/// `delta f`, `delta m` and `delta T = delta m + regularization` over `set`,
/// from the model changes at the step.
pub fn decrements(
    f_before: &ElementValues,
    f_after: &ElementValues,
    m_change: &ModelValues,
    set: &IndexSet,
    regularization: f64,
) -> Decrements {
    let delta_f = f_before.total_over(set) - f_after.total_over(set);
    let mut delta_m = 0.0;
    for (i, on) in set.nice.iter().enumerate() {
        if *on {
            delta_m -= m_change.nice[i];
        }
    }
    for (i, on) in set.singular.iter().enumerate() {
        if *on {
            delta_m -= m_change.singular[i];
        }
    }
    let delta_f_nice = f_before
        .nice
        .iter()
        .zip(&f_after.nice)
        .map(|(a, b)| a.unwrap_or(0.0) - b.unwrap_or(0.0))
        .collect();
    let delta_m_nice = m_change.nice.iter().map(|c| -c).collect();
    Decrements {
        delta_f,
        delta_m,
        delta_t: delta_m + regularization,
        delta_f_nice,
        delta_m_nice,
    }
}
