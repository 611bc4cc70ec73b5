//! Near-singular index sets `C(x, eps)`, the subspace `R(x, eps)` and the
//! working set `W(x, eps)`, plus the freezing of singular elements that
//! enter the `eps`-band during a step computation.

use nalgebra::{DMatrix, DVector};

use crate::error::{PsarpError, Result};
use crate::linalg::null_space_basis;
use crate::problem::{ElementIndex, IndexSet, Problem};

const NULL_SPACE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityState {
    eps: f64,
    /// `|U_i x| <= eps`, per singular element.
    active_c: Vec<bool>,
    /// Fixed during the current step computation.
    frozen: Vec<bool>,
    basis_r: DMatrix<f64>,
}

impl ActivityState {
    /// `C(x, eps)`, an orthonormal basis of `R(x, eps)`, nothing frozen.
    pub fn classify(problem: &Problem, x: &DVector<f64>, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(PsarpError::ContractViolation(format!(
                "eps must be non-negative, got {eps}"
            )));
        }
        let active_c: Vec<bool> = problem
            .singular()
            .iter()
            .map(|u| u.apply_scalar(x).abs() <= eps)
            .collect();
        let frozen = vec![false; active_c.len()];
        let mut state = Self {
            eps,
            active_c,
            frozen,
            basis_r: DMatrix::zeros(0, 0),
        };
        state.rebuild_basis(problem);
        Ok(state)
    }

    fn rebuild_basis(&mut self, problem: &Problem) {
        let excluded: Vec<usize> = (0..self.active_c.len())
            .filter(|&i| self.is_excluded(i))
            .collect();
        let n = problem.n();
        let mut rows = DMatrix::zeros(excluded.len(), n);
        for (r, &i) in excluded.iter().enumerate() {
            rows.set_row(r, &problem.singular()[i].rows().row(0));
        }
        self.basis_r = null_space_basis(&rows, n, NULL_SPACE_TOL);
    }

    /// Fixes singular element `i` at its current value. Returns `false` when
    /// it was already excluded from the working set.
    pub fn freeze(&mut self, problem: &Problem, idx: ElementIndex) -> Result<bool> {
        let i = match idx {
            ElementIndex::Singular(i) if i < self.active_c.len() => i,
            ElementIndex::Singular(i) => {
                return Err(PsarpError::ContractViolation(format!(
                    "singular index {i} out of range"
                )))
            }
            ElementIndex::Nice(i) => {
                return Err(PsarpError::ContractViolation(format!(
                    "cannot freeze nice element {i}"
                )))
            }
        };
        if self.is_excluded(i) {
            return Ok(false);
        }
        self.frozen[i] = true;
        self.rebuild_basis(problem);
        Ok(true)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn in_c(&self, i: usize) -> bool {
        self.active_c[i]
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    /// In `C` or frozen: the element no longer varies along steps.
    pub fn is_excluded(&self, i: usize) -> bool {
        self.active_c[i] || self.frozen[i]
    }

    pub fn c_indices(&self) -> Vec<usize> {
        (0..self.active_c.len()).filter(|&i| self.active_c[i]).collect()
    }

    pub fn frozen_indices(&self) -> Vec<usize> {
        (0..self.frozen.len()).filter(|&i| self.frozen[i]).collect()
    }

    /// Orthonormal basis of `R`, one column per direction.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis_r
    }

    pub fn dim_r(&self) -> usize {
        self.basis_r.ncols()
    }

    /// `W = N ∪ (H \ (C ∪ frozen))`.
    pub fn working_set(&self, problem: &Problem) -> IndexSet {
        IndexSet::with_singular(
            problem,
            (0..self.active_c.len()).map(|i| !self.is_excluded(i)).collect(),
        )
    }

    /// Orthogonal projection of `v` onto `R`.
    pub fn project_onto_r(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis_r * (self.basis_r.transpose() * v)
    }
}
