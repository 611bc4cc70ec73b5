use serde::{Deserialize, Serialize};

/// Counts objective and derivative evaluations made during one run.
///
/// Counters only go up; a run owns its ledger privately while the problem it
/// evaluates stays shared.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationLedger {
    objective_evals: u64,
    /// `derivative_evals[j - 1]` counts evaluations of order `j`.
    derivative_evals: Vec<u64>,
}

impl EvaluationLedger {
    pub fn new(max_order: usize) -> Self {
        Self {
            objective_evals: 0,
            derivative_evals: vec![0; max_order],
        }
    }

    pub fn record_objective(&mut self) {
        self.objective_evals += 1;
    }

    pub fn record_derivative(&mut self, order: usize) {
        assert!(order >= 1, "derivative orders start at 1");
        if self.derivative_evals.len() < order {
            self.derivative_evals.resize(order, 0);
        }
        self.derivative_evals[order - 1] += 1;
    }

    pub fn objective_evals(&self) -> u64 {
        self.objective_evals
    }

    pub fn derivative_evals(&self, order: usize) -> u64 {
        self.derivative_evals.get(order - 1).copied().unwrap_or(0)
    }

    pub fn max_order(&self) -> usize {
        self.derivative_evals.len()
    }

    pub fn snapshot(&self) -> EvaluationLedger {
        self.clone()
    }

    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: &EvaluationLedger) -> EvaluationLedger {
        let orders = self.max_order().max(earlier.max_order());
        EvaluationLedger {
            objective_evals: self.objective_evals - earlier.objective_evals,
            derivative_evals: (1..=orders)
                .map(|j| self.derivative_evals(j) - earlier.derivative_evals(j))
                .collect(),
        }
    }
}
