//! The outer loop: termination test, step computation, acceptance ratio and
//! the per-element regularization update.

use std::io::{BufRead, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::activity::ActivityState;
use crate::criticality::chi;
use crate::error::{PsarpError, Result};
use crate::feasible::KernelStatus;
use crate::ledger::EvaluationLedger;
use crate::models::{decrements, HModel, ModelConfig, ModelState, TaylorData};
use crate::problem::{ElementDerivatives, IndexSet, Problem};
use crate::subsolver::{compute_step, SubsolverConfig};
use crate::tensor::SymTensor;

pub const TRACE_SCHEMA: &str = "psarp-trace/1";

/// Slack on the overestimation test `f_i(x_i + s_i) > m_i(x_i, s_i)`, in
/// units of the rounding error of either side.
const UP_COND_ULPS: f64 = 64.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub eps: f64,
    pub p: usize,
    pub h_model: HModel,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub eta: f64,
    pub kappa_big: f64,
    pub sigma_min: f64,
    /// Initial regularization weight of every nice element.
    pub sigma0: f64,
    pub max_outer: usize,
    /// Run the two-sided model on sets that are not kernel-centered, giving
    /// up the better complexity bound.
    pub allow_general_set: bool,
    pub subsolver: SubsolverConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            p: 3,
            h_model: HModel::TwoSided,
            gamma0: 0.5,
            gamma1: 2.0,
            gamma2: 10.0,
            eta: 0.1,
            kappa_big: 100.0,
            sigma_min: 1e-8,
            sigma0: 1.0,
            max_outer: 10_000,
            allow_general_set: false,
            subsolver: SubsolverConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PsarpError::InvalidConfig(m.into()));
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad("eps must lie in (0, 1]");
        }
        if self.p == 0 {
            return bad("p must be at least 1");
        }
        if !(self.gamma0 > 0.0 && self.gamma0 < 1.0) {
            return bad("gamma0 must lie in (0, 1)");
        }
        if !(self.gamma1 > 1.0 && self.gamma1 <= self.gamma2) {
            return bad("need 1 < gamma1 <= gamma2");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if !(self.kappa_big > 1.0) {
            return bad("kappa_big must exceed 1");
        }
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma0) || !self.sigma0.is_finite() {
            return bad("need 0 < sigma_min <= sigma0 < inf");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be positive");
        }
        self.subsolver.validate()
    }

    /// Accuracy for the criticality solves used in the termination test.
    fn chi_tol(&self) -> f64 {
        1e-8 * self.eps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Successful,
    Unsuccessful,
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaChange {
    Increased,
    Decreased,
    Kept,
}

/// One outer iteration, or the final termination test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub chi: f64,
    /// Weights used to build this iteration's models.
    pub sigma: Vec<f64>,
    pub rho: Option<f64>,
    pub step_norm: Option<f64>,
    pub outcome: Outcome,
    /// Cumulative counts at the end of the iteration.
    pub ledger: EvaluationLedger,
    pub dim_r: usize,
    pub dim_r_plus: Option<usize>,
    pub freezes: Vec<usize>,
    pub inner_iters: Option<usize>,
    pub chi_m: Option<f64>,
    pub rhs_bound: Option<f64>,
    pub delta_f: Option<f64>,
    pub delta_t: Option<f64>,
    pub sigma_changes: Vec<SigmaChange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Terminated,
    MaxOuterReached,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x: DVector<f64>,
    pub f: f64,
    /// Criticality at `x`; `NaN` when the iteration limit stopped the run
    /// right after a successful step.
    pub chi: f64,
    pub status: SolveStatus,
    pub trace: Vec<IterateRecord>,
    pub ledger: EvaluationLedger,
    /// The problem actually solved, after kernel transfers.
    pub problem: Problem,
    /// Singular elements moved to the smooth part (original indices).
    pub transferred: Vec<usize>,
    pub worse_complexity: bool,
}

impl SolveReport {
    pub fn successful_iterations(&self) -> usize {
        self.count(Outcome::Successful)
    }

    pub fn unsuccessful_iterations(&self) -> usize {
        self.count(Outcome::Unsuccessful)
    }

    pub fn total_iterations(&self) -> usize {
        self.successful_iterations() + self.unsuccessful_iterations()
    }

    fn count(&self, outcome: Outcome) -> usize {
        self.trace.iter().filter(|r| r.outcome == outcome).count()
    }
}

/// A problem checked against a configuration and ready to solve.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub problem: Problem,
    pub model: ModelConfig,
    pub transferred: Vec<usize>,
    pub worse_complexity: bool,
}

/// Validates `config` against `problem`. With the two-sided model, singular
/// elements whose kernel misses the feasible set are moved to the smooth
/// part, and an even degree or a set certified not kernel-centered is
/// refused unless `allow_general_set` is set.
pub fn prepare(problem: &Problem, config: &SolverConfig) -> Result<Prepared> {
    config.validate()?;
    let mut problem = problem.clone();
    let has_singular = problem.singular_count() > 0;
    let mut worse_complexity = false;
    let even_two_sided = config.h_model == HModel::TwoSided && has_singular && config.p.is_multiple_of(2);
    let model = if even_two_sided && config.allow_general_set {
        log::warn!("two-sided model of even degree p = {}: worse complexity bound applies", config.p);
        worse_complexity = true;
        ModelConfig::without_parity_check(config.p, config.h_model, problem.q())?
    } else {
        ModelConfig::new(config.p, config.h_model, problem.q(), has_singular)?
    };
    let mut transferred = Vec::new();
    if config.h_model == HModel::TwoSided && has_singular {
        let cert = problem.feasible().check_kernel_centered(&problem.singular_rows());
        transferred = cert.transferable().into_iter().map(|(i, _)| i).collect();
        let violations = cert.violations();
        if !violations.is_empty() {
            if !config.allow_general_set {
                return Err(PsarpError::InvalidConfig(format!(
                    "feasible set is not kernel-centered for singular elements {violations:?}; \
                     use the true model or allow the general-set mode"
                )));
            }
            log::warn!("two-sided model on a non kernel-centered set: worse complexity bound applies");
            worse_complexity = true;
        }
        if cert.entries.contains(&KernelStatus::Unknown) {
            log::warn!("kernel-centered property could not be certified; proceeding");
        }
        if !transferred.is_empty() {
            log::info!("moving singular elements {transferred:?} to the smooth part: their kernels miss the set");
            problem.transfer_singular_to_nice(&transferred);
        }
    }
    let model = if problem.singular_count() == 0 && has_singular {
        ModelConfig::without_parity_check(config.p, config.h_model, problem.q())?
    } else {
        model
    };
    Ok(Prepared {
        problem,
        model,
        transferred,
        worse_complexity,
    })
}

/// `rho = delta_f / delta_T`.
pub fn acceptance_ratio(delta_f: f64, delta_t: f64) -> Result<f64> {
    if !(delta_t > 0.0) {
        return Err(PsarpError::ContractViolation(format!(
            "predicted decrease must be positive, got {delta_t:e}"
        )));
    }
    Ok(delta_f / delta_t)
}

/// What the regularization update needs to know about one nice element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementUpdate {
    pub sigma: f64,
    /// `f_i(x_i + s_i)`.
    pub f_trial: f64,
    /// `m_i(x_i, s_i)`.
    pub m_trial: f64,
    /// `f_i(x_i) - f_i(x_i + s_i)`.
    pub delta_f: f64,
    /// `m_i(x_i, 0) - m_i(x_i, s_i)`.
    pub delta_m: f64,
}

/// New weights for the nice elements. Increases pick the midpoint of
/// `[gamma1 sigma, gamma2 sigma]`, decreases the lower end of
/// `[max(sigma_min, gamma0 sigma), sigma]`.
pub fn update_sigmas(
    elements: &[ElementUpdate],
    rho: f64,
    delta_f: f64,
    config: &SolverConfig,
) -> (Vec<f64>, Vec<SigmaChange>) {
    elements
        .iter()
        .map(|e| {
            let slack = UP_COND_ULPS * f64::EPSILON * e.f_trial.abs().max(e.m_trial.abs()).max(1.0);
            if e.f_trial > e.m_trial + slack {
                let sigma = 0.5 * (config.gamma1 + config.gamma2) * e.sigma;
                return (sigma, SigmaChange::Increased);
            }
            let margin = config.kappa_big * delta_f.abs();
            let over_neg = e.delta_f <= 0.0 && e.delta_f < e.delta_m - margin;
            let over_pos = e.delta_f > 0.0 && e.delta_f > e.delta_m + margin;
            if rho >= config.eta && (over_neg || over_pos) {
                let sigma = config.sigma_min.max(config.gamma0 * e.sigma);
                let change = if sigma < e.sigma {
                    SigmaChange::Decreased
                } else {
                    SigmaChange::Kept
                };
                return (sigma, change);
            }
            (e.sigma, SigmaChange::Kept)
        })
        .unzip()
}

fn taylor_data(
    values: &[Option<f64>],
    first: &ElementDerivatives,
    higher: &[ElementDerivatives],
    sigma: &[f64],
) -> Result<Vec<TaylorData>> {
    let missing = || PsarpError::ContractViolation("nice element derivative missing".into());
    (0..sigma.len())
        .map(|i| {
            let mut tensors: Vec<SymTensor> = vec![first.nice[i].clone().ok_or_else(missing)?];
            for d in higher {
                tensors.push(d.nice[i].clone().ok_or_else(missing)?);
            }
            Ok(TaylorData {
                base: values[i].ok_or_else(missing)?,
                tensors,
                sigma: sigma[i],
            })
        })
        .collect()
}

/// Runs the algorithm from the problem's start point (the origin when none
/// is given), projected onto the feasible set.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<SolveReport> {
    let prepared = prepare(problem, config)?;
    let x0 = problem
        .start()
        .cloned()
        .unwrap_or_else(|| DVector::zeros(problem.n()));
    solve_prepared(prepared, x0, config)
}

pub fn solve_from(problem: &Problem, x0: &DVector<f64>, config: &SolverConfig) -> Result<SolveReport> {
    let prepared = prepare(problem, config)?;
    solve_prepared(prepared, x0.clone(), config)
}

fn solve_prepared(prepared: Prepared, x0: DVector<f64>, config: &SolverConfig) -> Result<SolveReport> {
    let Prepared {
        problem,
        model,
        transferred,
        worse_complexity,
    } = prepared;
    if x0.len() != problem.n() {
        return Err(PsarpError::InvalidProblem("starting point has wrong length".into()));
    }
    let set = problem.feasible();
    let mut x = if set.contains(&x0, 1e-12) {
        x0
    } else {
        log::info!("projecting the starting point onto the feasible set");
        set.project(&x0)?
    };
    let p = config.p;
    let all = IndexSet::all(&problem);
    let mut ledger = EvaluationLedger::new(p);
    let mut trace: Vec<IterateRecord> = Vec::new();
    let abort = |iteration: usize, err: PsarpError, trace: &[IterateRecord]| PsarpError::SolveAborted {
        iteration,
        source: Box::new(err),
        trace: trace.to_vec(),
    };

    let mut values = problem
        .eval_elements(&x, &all, &mut ledger)
        .map_err(|e| abort(0, e, &trace))?;
    let mut sigma = vec![config.sigma0; problem.nice_count()];
    let mut higher: Option<Vec<ElementDerivatives>> = None;

    for k in 0..config.max_outer {
        let f = values.total();
        let step = (|| -> Result<Option<IterateRecord>> {
            let activity = ActivityState::classify(&problem, &x, config.eps)?;
            let working = activity.working_set(&problem);
            let first = problem.eval_derivative(&x, 1, &working, &mut ledger)?;
            let g = problem.assemble_gradient(&first);
            let chi_f = chi(&g, &x, set, activity.basis(), config.chi_tol())?;
            let mut record = IterateRecord {
                k,
                x: x.iter().copied().collect(),
                f,
                chi: chi_f.value,
                sigma: sigma.clone(),
                rho: None,
                step_norm: None,
                outcome: Outcome::Terminated,
                ledger: ledger.snapshot(),
                dim_r: activity.dim_r(),
                dim_r_plus: None,
                freezes: Vec::new(),
                inner_iters: None,
                chi_m: None,
                rhs_bound: None,
                delta_f: None,
                delta_t: None,
                sigma_changes: Vec::new(),
            };
            if chi_f.upper() <= config.eps {
                return Ok(Some(record));
            }
            if higher.is_none() {
                let derivs = (2..=p)
                    .map(|j| problem.eval_derivative(&x, j, &working, &mut ledger))
                    .collect::<Result<Vec<_>>>()?;
                higher = Some(derivs);
            }
            let data = taylor_data(&values.nice, &first, higher.as_deref().unwrap_or(&[]), &sigma)?;
            let models = ModelState::new(&problem, model, &x, data, &activity)?;
            let result = compute_step(&problem, &models, &activity, &x, &config.subsolver)?;
            let x_trial = &x + &result.s;
            let trial = problem.eval_elements(&x_trial, &all, &mut ledger)?;

            // Over W_k rather than W_k^+: the two differ only when the step froze
            // an element, and its decrease must then still count.
            let m_change = result.model_changes();
            let reg = models.regularization(&problem, &result.s);
            let dec = decrements(&values, &trial, m_change, &working, reg);
            let rho = acceptance_ratio(dec.delta_f, dec.delta_t)?;

            let elements: Vec<ElementUpdate> = (0..sigma.len())
                .map(|i| ElementUpdate {
                    sigma: sigma[i],
                    f_trial: trial.nice[i].unwrap_or(0.0),
                    m_trial: values.nice[i].unwrap_or(0.0) + m_change.nice[i],
                    delta_f: dec.delta_f_nice[i],
                    delta_m: dec.delta_m_nice[i],
                })
                .collect();
            let (new_sigma, changes) = update_sigmas(&elements, rho, dec.delta_f, config);

            record.rho = Some(rho);
            record.step_norm = Some(result.s.norm());
            record.dim_r_plus = Some(result.activity.dim_r());
            record.freezes = result.freezes.clone();
            record.inner_iters = Some(result.inner_iters);
            record.chi_m = Some(result.chi_m_value);
            record.rhs_bound = Some(result.rhs_bound);
            record.delta_f = Some(dec.delta_f);
            record.delta_t = Some(dec.delta_t);
            record.sigma_changes = changes;
            if rho >= config.eta {
                record.outcome = Outcome::Successful;
                x = x_trial;
                values = trial;
                higher = None;
            } else {
                record.outcome = Outcome::Unsuccessful;
            }
            sigma = new_sigma;
            record.ledger = ledger.snapshot();
            log::debug!(
                "k={k} f={f:.6e} chi={:.3e} rho={rho:.3e} |s|={:.3e} {:?}",
                record.chi,
                record.step_norm.unwrap_or(0.0),
                record.outcome
            );
            Ok(Some(record))
        })()
        .map_err(|e| abort(k, e, &trace))?;

        let record = step.expect("every iteration yields a record");
        let done = record.outcome == Outcome::Terminated;
        let chi_value = record.chi;
        trace.push(record);
        if done {
            return Ok(SolveReport {
                f: values.total(),
                x,
                chi: chi_value,
                status: SolveStatus::Terminated,
                trace,
                ledger,
                problem,
                transferred,
                worse_complexity,
            });
        }
    }
    log::warn!("iteration limit {} reached", config.max_outer);
    // after a successful last step x has moved and has no measured chi
    let chi_value = match trace.last() {
        Some(r) if r.outcome == Outcome::Unsuccessful => r.chi,
        _ => f64::NAN,
    };
    Ok(SolveReport {
        f: values.total(),
        x,
        chi: chi_value,
        status: SolveStatus::MaxOuterReached,
        trace,
        ledger,
        problem,
        transferred,
        worse_complexity,
    })
}

/// Evaluation counts implied by a trace alone: one objective evaluation at
/// the start plus one per step, a gradient at every termination test, and
/// orders `2..=p` once per distinct iterate at which a step was computed.
pub fn replay_ledger(trace: &[IterateRecord], p: usize) -> EvaluationLedger {
    let mut ledger = EvaluationLedger::new(p);
    ledger.record_objective();
    let mut fresh_point = true;
    for r in trace {
        ledger.record_derivative(1);
        if r.outcome == Outcome::Terminated {
            break;
        }
        if fresh_point {
            for j in 2..=p {
                ledger.record_derivative(j);
            }
        }
        ledger.record_objective();
        fresh_point = r.outcome == Outcome::Successful;
    }
    ledger
}

#[derive(Serialize, Deserialize)]
struct TraceLine {
    schema: String,
    #[serde(flatten)]
    record: IterateRecord,
}

/// Writes one JSON object per record.
pub fn write_trace<W: Write>(mut out: W, trace: &[IterateRecord]) -> Result<()> {
    for record in trace {
        let line = TraceLine {
            schema: TRACE_SCHEMA.to_string(),
            record: record.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<IterateRecord>> {
    let mut trace = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&line)
            .map_err(|e| PsarpError::parse(format!("line {}", n + 1), e.to_string()))?;
        if parsed.schema != TRACE_SCHEMA {
            return Err(PsarpError::parse(
                format!("line {}", n + 1),
                format!("unknown schema {:?}", parsed.schema),
            ));
        }
        trace.push(parsed.record);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn element(sigma: f64, f_trial: f64, m_trial: f64, delta_f: f64, delta_m: f64) -> ElementUpdate {
        ElementUpdate {
            sigma,
            f_trial,
            m_trial,
            delta_f,
            delta_m,
        }
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(acceptance_ratio(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(acceptance_ratio(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(acceptance_ratio(2.0, 1.0).unwrap(), 2.0);
        assert!(matches!(acceptance_ratio(1.0, 0.0), Err(PsarpError::ContractViolation(_))));
    }

    #[test]
    fn increase_takes_midpoint() {
        let c = SolverConfig::default();
        let (s, ch) = update_sigmas(&[element(1.0, 2.0, 1.0, -1.0, 0.0)], 0.5, 1.0, &c);
        assert_eq!(s, vec![6.0]);
        assert_eq!(ch, vec![SigmaChange::Increased]);
    }

    #[test]
    fn decrease_needs_success() {
        let c = SolverConfig::default();
        // large positive overachievement relative to the total decrease
        let e = element(1.0, 0.0, 1.0, 1.0, 0.0);
        let (s, _) = update_sigmas(&[e], 0.05, 1e-4, &c);
        assert_eq!(s, vec![1.0]);
        let (s, ch) = update_sigmas(&[e], 0.5, 1e-4, &c);
        assert_eq!(s, vec![0.5]);
        assert_eq!(ch, vec![SigmaChange::Decreased]);
    }

    #[test]
    fn decrease_is_floored() {
        let c = SolverConfig {
            sigma_min: 0.9,
            ..SolverConfig::default()
        };
        let (s, _) = update_sigmas(&[element(1.0, 0.0, 1.0, 1.0, 0.0)], 0.5, 1e-4, &c);
        assert_eq!(s, vec![0.9]);
    }

    #[test]
    fn negative_branch_requires_non_positive_decrease() {
        let c = SolverConfig::default();
        // delta_f_i < delta_m_i - kappa |delta_f| with delta_f_i > 0 is not a decrease case
        let (s, _) = update_sigmas(&[element(1.0, 0.0, 0.0, 0.5, 2.0)], 0.5, 1e-3, &c);
        assert_eq!(s, vec![1.0]);
        let (s, _) = update_sigmas(&[element(1.0, 0.0, 0.0, -0.5, 2.0)], 0.5, 1e-3, &c);
        assert_eq!(s, vec![0.5]);
    }

    #[test]
    fn config_intervals_enforced() {
        assert!(SolverConfig::default().validate().is_ok());
        for bad in [
            SolverConfig { gamma0: 1.0, ..Default::default() },
            SolverConfig { gamma1: 1.0, ..Default::default() },
            SolverConfig { gamma1: 11.0, ..Default::default() },
            SolverConfig { eta: 0.0, ..Default::default() },
            SolverConfig { kappa_big: 1.0, ..Default::default() },
            SolverConfig { sigma_min: 2.0, ..Default::default() },
            SolverConfig { eps: 0.0, ..Default::default() },
            SolverConfig { eps: 1.5, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn replay_of_synthetic_trace() {
        let mk = |outcome| IterateRecord {
            k: 0,
            x: vec![],
            f: 0.0,
            chi: 0.0,
            sigma: vec![],
            rho: None,
            step_norm: None,
            outcome,
            ledger: EvaluationLedger::default(),
            dim_r: 0,
            dim_r_plus: None,
            freezes: vec![],
            inner_iters: None,
            chi_m: None,
            rhs_bound: None,
            delta_f: None,
            delta_t: None,
            sigma_changes: vec![],
        };
        use Outcome::*;
        let trace: Vec<_> = [Successful, Unsuccessful, Unsuccessful, Successful, Terminated]
            .into_iter()
            .map(mk)
            .collect();
        let l = replay_ledger(&trace, 3);
        assert_eq!(l.objective_evals(), 5);
        assert_eq!(l.derivative_evals(1), 5);
        assert_eq!(l.derivative_evals(2), 2);
        assert_eq!(l.derivative_evals(3), 2);
    }
}
