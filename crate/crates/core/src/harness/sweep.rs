//! Independent solves over a list of tolerances, with evaluation counts.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::driver::{replay_ledger, solve, SolveStatus, SolverConfig};
use crate::error::{PsarpError, Result};
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub eps: f64,
    pub succ_iters: usize,
    pub total_iters: usize,
    pub f_evals: u64,
    /// `derivative_evals[j - 1]` counts order-`j` evaluations.
    pub derivative_evals: Vec<u64>,
    pub final_chi: f64,
    pub final_f: f64,
    pub status: String,
    /// Whether the counts agree with those replayed from the trace.
    pub consistent: bool,
}

impl SweepPoint {
    fn failed(eps: f64, p: usize, err: &PsarpError) -> Self {
        Self {
            eps,
            succ_iters: 0,
            total_iters: 0,
            f_evals: 0,
            derivative_evals: vec![0; p],
            final_chi: f64::NAN,
            final_f: f64::NAN,
            status: format!("error: {err}"),
            consistent: true,
        }
    }

    pub fn terminated(&self) -> bool {
        self.status == "terminated"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub p: usize,
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `log(successful iterations)` against
    /// `log(1/eps)`; `None` with fewer than two distinct tolerances.
    pub slope: Option<f64>,
}

pub fn run_sweep(problem: &Problem, eps_list: &[f64], config: &SolverConfig) -> Result<SweepReport> {
    if eps_list.is_empty() {
        return Err(PsarpError::InvalidConfig("empty tolerance list".into()));
    }
    if let Some(bad) = eps_list.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        return Err(PsarpError::InvalidConfig(format!("eps must lie in (0, 1], got {bad}")));
    }
    let p = config.p;
    let points: Vec<SweepPoint> = eps_list
        .par_iter()
        .map(|&eps| {
            let cfg = SolverConfig { eps, ..config.clone() };
            match solve(problem, &cfg) {
                Ok(report) => {
                    let consistent = replay_ledger(&report.trace, p) == report.ledger;
                    SweepPoint {
                        eps,
                        succ_iters: report.successful_iterations(),
                        total_iters: report.total_iterations(),
                        f_evals: report.ledger.objective_evals(),
                        derivative_evals: (1..=p).map(|j| report.ledger.derivative_evals(j)).collect(),
                        final_chi: report.chi,
                        final_f: report.f,
                        status: match report.status {
                            SolveStatus::Terminated => "terminated".into(),
                            SolveStatus::MaxOuterReached => "max-outer".into(),
                        },
                        consistent,
                    }
                }
                Err(err) => {
                    log::warn!("solve at eps = {eps:e} failed: {err}");
                    SweepPoint::failed(eps, p, &err)
                }
            }
        })
        .collect();
    let slope = fit_slope(&points);
    Ok(SweepReport { p, points, slope })
}

/// Slope over terminated points; iteration counts are clamped to at least
/// one so that zero-iteration solves stay on the log scale.
pub fn fit_slope(points: &[SweepPoint]) -> Option<f64> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.terminated())
        .map(|p| ((1.0 / p.eps).ln(), (p.succ_iters.max(1) as f64).ln()))
        .collect();
    least_squares_slope(&data)
}

pub fn least_squares_slope(data: &[(f64, f64)]) -> Option<f64> {
    let n = data.len() as f64;
    let mx = data.iter().map(|d| d.0).sum::<f64>() / n;
    let my = data.iter().map(|d| d.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|d| (d.0 - mx).powi(2)).sum();
    if data.len() < 2 || sxx <= 1e-12 {
        return None;
    }
    let sxy: f64 = data.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
    Some(sxy / sxx)
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "eps".to_string(),
            "succ_iters".into(),
            "total_iters".into(),
            "f_evals".into(),
            "g_evals".into(),
        ];
        header.extend((2..=self.p).map(|j| format!("d{j}_evals")));
        header.extend(["final_chi".into(), "final_f".into(), "status".into()]);
        w.write_record(&header)?;
        for pt in &self.points {
            let mut row = vec![
                pt.eps.to_string(),
                pt.succ_iters.to_string(),
                pt.total_iters.to_string(),
                pt.f_evals.to_string(),
            ];
            row.extend(pt.derivative_evals.iter().map(u64::to_string));
            row.extend([pt.final_chi.to_string(), pt.final_f.to_string(), pt.status.clone()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
