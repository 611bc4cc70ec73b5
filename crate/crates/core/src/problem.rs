//! The partially separable objective
//! `f(x) = sum_{i in N} f_i(U_i x) + sum_{i in H} |U_i x|^q` over a convex set.

use nalgebra::{DMatrix, DVector};

use crate::element::{abs_power_derivative, ElementFunction, SmoothElement};
use crate::error::{PsarpError, Result};
use crate::feasible::FeasibleSet;
use crate::ledger::EvaluationLedger;
use crate::linalg;
use crate::tensor::SymTensor;

const NORM_TOL: f64 = 1e-10;
const SPAN_TOL: f64 = 1e-8;

/// A fixed linear map `x -> U_i x` with unit operator norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMap {
    rows: DMatrix<f64>,
}

impl ElementMap {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(PsarpError::InvalidProblem("empty element map".into()));
        }
        let norm = rows.clone().svd(false, false).singular_values.max();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(PsarpError::InvalidProblem(format!(
                "element map must have operator norm 1, got {norm}"
            )));
        }
        Ok(Self { rows })
    }

    /// `U = row / ||row||`, returning the scale that was divided out.
    pub fn normalized_row(row: &DVector<f64>) -> Result<(Self, f64)> {
        let scale = row.norm();
        if scale == 0.0 {
            return Err(PsarpError::InvalidProblem("zero map row".into()));
        }
        let rows = DMatrix::from_row_slice(1, row.len(), (row / scale).as_slice());
        Ok((Self { rows }, scale))
    }

    /// The coordinate selector `e_j^T` in `R^n`.
    pub fn coordinate(n: usize, j: usize) -> Self {
        let mut rows = DMatrix::zeros(1, n);
        rows[(0, j)] = 1.0;
        Self { rows }
    }

    /// Selects the listed coordinates, in order.
    pub fn coordinates(n: usize, js: &[usize]) -> Self {
        let mut rows = DMatrix::zeros(js.len(), n);
        for (r, &j) in js.iter().enumerate() {
            rows[(r, j)] = 1.0;
        }
        Self { rows }
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn element_dim(&self) -> usize {
        self.rows.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.rows * x
    }

    /// `U^T v`.
    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        self.rows.transpose() * v
    }

    /// The single row `u` of a one-dimensional map, as a column vector.
    pub fn row_vector(&self) -> DVector<f64> {
        self.rows.row(0).transpose()
    }

    /// `u^T x` for a one-dimensional map.
    pub fn apply_scalar(&self, x: &DVector<f64>) -> f64 {
        self.rows.row(0).transpose().dot(x)
    }
}

#[derive(Debug, Clone)]
pub struct NiceElement {
    pub function: ElementFunction,
    pub map: ElementMap,
}

/// Identifies an element of `M = N ∪ H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElementIndex {
    Nice(usize),
    Singular(usize),
}

/// A subset of `M`, stored as membership flags per family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    pub nice: Vec<bool>,
    pub singular: Vec<bool>,
}

impl IndexSet {
    pub fn all(problem: &Problem) -> Self {
        Self {
            nice: vec![true; problem.nice.len()],
            singular: vec![true; problem.singular.len()],
        }
    }

    /// `N` together with the singular elements flagged `true` in `singular`.
    pub fn with_singular(problem: &Problem, singular: Vec<bool>) -> Self {
        debug_assert_eq!(singular.len(), problem.singular.len());
        Self {
            nice: vec![true; problem.nice.len()],
            singular,
        }
    }

    pub fn contains(&self, idx: ElementIndex) -> bool {
        match idx {
            ElementIndex::Nice(i) => self.nice.get(i).copied().unwrap_or(false),
            ElementIndex::Singular(i) => self.singular.get(i).copied().unwrap_or(false),
        }
    }

    pub fn singular_members(&self) -> impl Iterator<Item = usize> + '_ {
        self.singular
            .iter()
            .enumerate()
            .filter(|(_, on)| **on)
            .map(|(i, _)| i)
    }
}

/// Per-element function values; `None` for elements outside the active set.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementValues {
    pub nice: Vec<Option<f64>>,
    pub singular: Vec<Option<f64>>,
}

impl ElementValues {
    pub fn total(&self) -> f64 {
        self.nice.iter().chain(&self.singular).flatten().sum()
    }

    /// Sum over the members of `set` only.
    pub fn total_over(&self, set: &IndexSet) -> f64 {
        let nice: f64 = self
            .nice
            .iter()
            .zip(&set.nice)
            .filter(|(_, on)| **on)
            .filter_map(|(v, _)| *v)
            .sum();
        let singular: f64 = self
            .singular
            .iter()
            .zip(&set.singular)
            .filter(|(_, on)| **on)
            .filter_map(|(v, _)| *v)
            .sum();
        nice + singular
    }
}

/// Derivatives of one order for every active element.
#[derive(Debug, Clone)]
pub struct ElementDerivatives {
    pub order: usize,
    pub nice: Vec<Option<SymTensor>>,
    /// `d^j/dt^j |t|^q` at `t = U_i x`.
    pub singular: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct Problem {
    n: usize,
    q: f64,
    pub(crate) nice: Vec<NiceElement>,
    pub(crate) singular: Vec<ElementMap>,
    feasible: FeasibleSet,
    raw_nice_count: usize,
    start: Option<DVector<f64>>,
}

impl Problem {
    /// Validates the problem and appends a zero element when the nice maps do
    /// not span `R^n`.
    pub fn new(
        n: usize,
        nice: Vec<NiceElement>,
        singular: Vec<ElementMap>,
        q: f64,
        feasible: FeasibleSet,
    ) -> Result<Self> {
        if n == 0 {
            return Err(PsarpError::InvalidProblem("dimension must be positive".into()));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(PsarpError::InvalidProblem(format!(
                "q must lie strictly inside (0, 1), got {q}"
            )));
        }
        if feasible.dim() != n {
            return Err(PsarpError::InvalidProblem(format!(
                "feasible set has dimension {}, expected {n}",
                feasible.dim()
            )));
        }
        for (i, e) in nice.iter().enumerate() {
            if e.map.ambient_dim() != n {
                return Err(PsarpError::InvalidProblem(format!(
                    "nice element {i} maps from R^{}, expected R^{n}",
                    e.map.ambient_dim()
                )));
            }
            if e.function.dim() != e.map.element_dim() {
                return Err(PsarpError::InvalidProblem(format!(
                    "nice element {i}: function dimension {} differs from map rows {}",
                    e.function.dim(),
                    e.map.element_dim()
                )));
            }
        }
        for (i, u) in singular.iter().enumerate() {
            if u.element_dim() != 1 || u.ambient_dim() != n {
                return Err(PsarpError::InvalidProblem(format!(
                    "singular element {i} must be a single row in R^{n}"
                )));
            }
        }
        let raw_nice_count = nice.len();
        let mut problem = Self {
            n,
            q,
            nice,
            singular,
            feasible,
            raw_nice_count,
            start: None,
        };
        problem.repair_span();
        Ok(problem)
    }

    fn repair_span(&mut self) {
        let stacked = self.stacked_nice_rows();
        if linalg::rank(&stacked, SPAN_TOL) == self.n {
            return;
        }
        let missing = linalg::null_space_basis(&stacked, self.n, SPAN_TOL);
        let k = missing.ncols();
        log::info!(
            "nice element maps span only {} of {} dimensions; appending a zero element over the missing subspace",
            self.n - k,
            self.n
        );
        self.nice.push(NiceElement {
            function: ElementFunction::Zero { dim: k },
            map: ElementMap {
                rows: missing.transpose(),
            },
        });
    }

    fn stacked_nice_rows(&self) -> DMatrix<f64> {
        let total: usize = self.nice.iter().map(|e| e.map.element_dim()).sum();
        let mut stacked = DMatrix::zeros(total, self.n);
        let mut r = 0;
        for e in &self.nice {
            let k = e.map.element_dim();
            stacked.rows_mut(r, k).copy_from(e.map.rows());
            r += k;
        }
        stacked
    }

    pub fn with_start(mut self, x0: DVector<f64>) -> Result<Self> {
        if x0.len() != self.n {
            return Err(PsarpError::InvalidProblem("starting point has wrong length".into()));
        }
        self.start = Some(x0);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn nice(&self) -> &[NiceElement] {
        &self.nice
    }

    pub fn singular(&self) -> &[ElementMap] {
        &self.singular
    }

    pub fn feasible(&self) -> &FeasibleSet {
        &self.feasible
    }

    pub fn start(&self) -> Option<&DVector<f64>> {
        self.start.as_ref()
    }

    /// `|N|` as given, before any span repair.
    pub fn raw_nice_count(&self) -> usize {
        self.raw_nice_count
    }

    /// `|N|` after span repair.
    pub fn nice_count(&self) -> usize {
        self.nice.len()
    }

    pub fn singular_count(&self) -> usize {
        self.singular.len()
    }

    pub fn singular_rows(&self) -> Vec<DVector<f64>> {
        self.singular.iter().map(|u| u.row_vector()).collect()
    }

    /// Moves singular element `j` into `N` as the smooth element `|t|^q`.
    pub(crate) fn transfer_singular_to_nice(&mut self, indices: &[usize]) {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        for &j in sorted.iter().rev() {
            let map = self.singular.remove(j);
            self.nice.push(NiceElement {
                function: ElementFunction::AbsPower { q: self.q },
                map,
            });
        }
    }

    /// Element values at `x` over `active`; one objective evaluation.
    pub fn eval_elements(
        &self,
        x: &DVector<f64>,
        active: &IndexSet,
        ledger: &mut EvaluationLedger,
    ) -> Result<ElementValues> {
        ledger.record_objective();
        let nice = self
            .nice
            .iter()
            .zip(&active.nice)
            .enumerate()
            .map(|(i, (e, on))| {
                if !*on {
                    return Ok(None);
                }
                let z = e.map.apply(x);
                let v = e.function.value(z.as_slice());
                if !v.is_finite() {
                    return Err(PsarpError::EvaluationFailure {
                        element: format!("nice {i}"),
                    });
                }
                Ok(Some(v))
            })
            .collect::<Result<Vec<_>>>()?;
        let singular = self
            .singular
            .iter()
            .zip(&active.singular)
            .enumerate()
            .map(|(i, (u, on))| {
                if !*on {
                    return Ok(None);
                }
                let v = u.apply_scalar(x).abs().powf(self.q);
                if !v.is_finite() {
                    return Err(PsarpError::EvaluationFailure {
                        element: format!("singular {i}"),
                    });
                }
                Ok(Some(v))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ElementValues { nice, singular })
    }

    /// `sum_{i in active} f_i(U_i x)`; one objective evaluation.
    pub fn eval_f(
        &self,
        x: &DVector<f64>,
        active: &IndexSet,
        ledger: &mut EvaluationLedger,
    ) -> Result<f64> {
        Ok(self.eval_elements(x, active, ledger)?.total())
    }

    /// Order-`order` derivatives of every active element at `x`.
    pub fn eval_derivative(
        &self,
        x: &DVector<f64>,
        order: usize,
        active: &IndexSet,
        ledger: &mut EvaluationLedger,
    ) -> Result<ElementDerivatives> {
        if order == 0 {
            return Err(PsarpError::ContractViolation(
                "derivative order must be at least 1".into(),
            ));
        }
        ledger.record_derivative(order);
        let nice = self
            .nice
            .iter()
            .zip(&active.nice)
            .enumerate()
            .map(|(i, (e, on))| {
                if !*on {
                    return Ok(None);
                }
                let z = e.map.apply(x);
                let t = e.function.derivative(z.as_slice(), order);
                if !t.is_finite() {
                    return Err(PsarpError::EvaluationFailure {
                        element: format!("nice {i} (order {order})"),
                    });
                }
                Ok(Some(t))
            })
            .collect::<Result<Vec<_>>>()?;
        let singular = self
            .singular
            .iter()
            .zip(&active.singular)
            .enumerate()
            .map(|(i, (u, on))| {
                if !*on {
                    return Ok(None);
                }
                let t = u.apply_scalar(x);
                if t == 0.0 {
                    return Err(PsarpError::SingularDerivative { element: i });
                }
                Ok(Some(abs_power_derivative(t, self.q, order)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ElementDerivatives {
            order,
            nice,
            singular,
        })
    }

    /// `sum_i U_i^T grad f_i(U_i x)` from first-order element derivatives.
    pub fn assemble_gradient(&self, first: &ElementDerivatives) -> DVector<f64> {
        assert_eq!(first.order, 1, "gradient assembly needs first derivatives");
        let mut g = DVector::zeros(self.n);
        for (e, t) in self.nice.iter().zip(&first.nice) {
            if let Some(t) = t {
                g += e.map.apply_transpose(&DVector::from_column_slice(t.data()));
            }
        }
        for (u, d) in self.singular.iter().zip(&first.singular) {
            if let Some(d) = d {
                g += u.row_vector() * *d;
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn square_1d() -> Problem {
        Problem::new(
            1,
            vec![NiceElement {
                function: ElementFunction::square(0.0),
                map: ElementMap::coordinate(1, 0),
            }],
            vec![],
            0.5,
            FeasibleSet::free(1),
        )
        .unwrap()
    }

    fn zero_plus_sqrt() -> Problem {
        Problem::new(
            2,
            vec![NiceElement {
                function: ElementFunction::Zero { dim: 1 },
                map: ElementMap::coordinate(2, 0),
            }],
            vec![ElementMap::coordinate(2, 1)],
            0.5,
            FeasibleSet::free(2),
        )
        .unwrap()
    }

    #[test]
    fn quadratic_value() {
        let p = square_1d();
        let mut ledger = EvaluationLedger::new(2);
        let v = p.eval_f(&dvector![0.5], &IndexSet::all(&p), &mut ledger).unwrap();
        assert_eq!(v, 0.25);
        assert_eq!(ledger.objective_evals(), 1);
    }

    #[test]
    fn singular_term_and_exclusion() {
        let p = zero_plus_sqrt();
        // the nice map covers only e_1, so a zero element is appended for e_2
        assert_eq!(p.raw_nice_count(), 1);
        assert_eq!(p.nice_count(), 2);
        let mut ledger = EvaluationLedger::new(1);
        let all = IndexSet::all(&p);
        assert_eq!(p.eval_f(&dvector![3.0, 4.0], &all, &mut ledger).unwrap(), 2.0);
        let working = IndexSet::with_singular(&p, vec![false]);
        assert_eq!(p.eval_f(&dvector![3.0, 1e-9], &working, &mut ledger).unwrap(), 0.0);
        assert_eq!(ledger.objective_evals(), 2);
    }

    #[test]
    fn derivatives_and_singular_error() {
        let p = square_1d();
        let mut ledger = EvaluationLedger::new(2);
        let d = p.eval_derivative(&dvector![0.5], 1, &IndexSet::all(&p), &mut ledger).unwrap();
        assert_eq!(d.nice[0].as_ref().unwrap().data(), &[1.0]);
        assert_eq!(ledger.derivative_evals(1), 1);

        let h = zero_plus_sqrt();
        let all = IndexSet::all(&h);
        let d1 = h.eval_derivative(&dvector![0.0, 4.0], 1, &all, &mut ledger).unwrap();
        assert!((d1.singular[0].unwrap() - 0.25).abs() < 1e-15);
        let d2 = h.eval_derivative(&dvector![0.0, 1.0], 2, &all, &mut ledger).unwrap();
        assert!((d2.singular[0].unwrap() + 0.25).abs() < 1e-15);
        let err = h.eval_derivative(&dvector![1.0, 0.0], 1, &all, &mut ledger);
        assert!(matches!(err, Err(PsarpError::SingularDerivative { element: 0 })));
    }

    #[test]
    fn map_norm_is_enforced() {
        assert!(ElementMap::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).is_err());
        let (m, scale) = ElementMap::normalized_row(&dvector![3.0, 4.0]).unwrap();
        assert_eq!(scale, 5.0);
        assert!((m.apply_scalar(&dvector![3.0, 4.0]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn q_outside_unit_interval_is_rejected() {
        for q in [0.0, 1.0, 1.5] {
            assert!(Problem::new(1, vec![], vec![], q, FeasibleSet::free(1)).is_err());
        }
    }

    #[test]
    fn non_finite_element_value_names_the_element() {
        let p = Problem::new(
            1,
            vec![NiceElement {
                function: ElementFunction::ResidualPower {
                    weights: dvector![1.0],
                    offset: 0.0,
                    power: 400,
                },
                map: ElementMap::coordinate(1, 0),
            }],
            vec![],
            0.5,
            FeasibleSet::free(1),
        )
        .unwrap();
        let mut ledger = EvaluationLedger::new(1);
        let err = p.eval_f(&dvector![1e3], &IndexSet::all(&p), &mut ledger).unwrap_err();
        assert!(err.to_string().contains("nice 0"));
    }
}
