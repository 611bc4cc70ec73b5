//! Element functions `f_i` acting on `x_i = U_i x`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::tensor::SymTensor;

/// A smooth element function with dense derivative tensors.
///
/// `derivative(z, j)` must return the symmetric tensor of order `j` for every
/// `1 <= j <= p` the solver asks for; orders beyond the polynomial degree are
/// simply zero.
pub trait SmoothElement: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, z: &[f64]) -> f64;
    fn derivative(&self, z: &[f64], order: usize) -> SymTensor;
}

/// Built-in element library plus an escape hatch for user closures.
#[derive(Debug, Clone)]
pub enum ElementFunction {
    /// `c + g^T z + 0.5 z^T H z`.
    Quadratic {
        hessian: DMatrix<f64>,
        gradient: DVector<f64>,
        constant: f64,
    },
    /// `(w^T z - b)^k` for an integer power `k >= 1`.
    ResidualPower {
        weights: DVector<f64>,
        offset: f64,
        power: u32,
    },
    /// `(a - z_1)^2 + b (z_2 - z_1^2)^2`.
    Rosenbrock { a: f64, b: f64 },
    /// Identically zero, used to repair the span of the nice maps.
    Zero { dim: usize },
    /// `|t|^q` on a set that stays away from `t = 0`.
    AbsPower { q: f64 },
    Custom(Arc<dyn SmoothElement>),
}

impl ElementFunction {
    pub fn quadratic(hessian: DMatrix<f64>, gradient: DVector<f64>, constant: f64) -> Self {
        ElementFunction::Quadratic {
            hessian,
            gradient,
            constant,
        }
    }

    /// Scalar `(t - center)^2`.
    pub fn square(center: f64) -> Self {
        ElementFunction::ResidualPower {
            weights: DVector::from_element(1, 1.0),
            offset: center,
            power: 2,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ElementFunction::Quadratic { .. } => "quadratic",
            ElementFunction::ResidualPower { .. } => "residual-power",
            ElementFunction::Rosenbrock { .. } => "rosenbrock",
            ElementFunction::Zero { .. } => "zero",
            ElementFunction::AbsPower { .. } => "abs-power",
            ElementFunction::Custom(_) => "custom",
        }
    }

    /// Largest derivative order that can be non-zero, if finite.
    pub fn polynomial_degree(&self) -> Option<usize> {
        match self {
            ElementFunction::Quadratic { .. } => Some(2),
            ElementFunction::ResidualPower { power, .. } => Some(*power as usize),
            ElementFunction::Rosenbrock { .. } => Some(4),
            ElementFunction::Zero { .. } => Some(0),
            ElementFunction::AbsPower { .. } | ElementFunction::Custom(_) => None,
        }
    }
}

impl SmoothElement for ElementFunction {
    fn dim(&self) -> usize {
        match self {
            ElementFunction::Quadratic { gradient, .. } => gradient.len(),
            ElementFunction::ResidualPower { weights, .. } => weights.len(),
            ElementFunction::Rosenbrock { .. } => 2,
            ElementFunction::Zero { dim } => *dim,
            ElementFunction::AbsPower { .. } => 1,
            ElementFunction::Custom(f) => f.dim(),
        }
    }

    fn value(&self, z: &[f64]) -> f64 {
        match self {
            ElementFunction::Quadratic {
                hessian,
                gradient,
                constant,
            } => {
                let zv = DVector::from_column_slice(z);
                constant + gradient.dot(&zv) + 0.5 * zv.dot(&(hessian * &zv))
            }
            ElementFunction::ResidualPower {
                weights,
                offset,
                power,
            } => {
                let r = residual(weights, *offset, z);
                r.powi(*power as i32)
            }
            ElementFunction::Rosenbrock { a, b } => {
                let (u, v) = (z[0], z[1]);
                (a - u).powi(2) + b * (v - u * u).powi(2)
            }
            ElementFunction::Zero { .. } => 0.0,
            ElementFunction::AbsPower { q } => z[0].abs().powf(*q),
            ElementFunction::Custom(f) => f.value(z),
        }
    }

    fn derivative(&self, z: &[f64], order: usize) -> SymTensor {
        assert!(order >= 1, "derivative order starts at 1");
        let dim = self.dim();
        match self {
            ElementFunction::Quadratic {
                hessian, gradient, ..
            } => match order {
                1 => {
                    let zv = DVector::from_column_slice(z);
                    SymTensor::from_vector(&(gradient + hessian * zv))
                }
                2 => SymTensor::from_fn(2, dim, |idx| hessian[(idx[0], idx[1])]),
                _ => SymTensor::zeros(order, dim),
            },
            ElementFunction::ResidualPower {
                weights,
                offset,
                power,
            } => {
                let k = *power as usize;
                if order > k {
                    return SymTensor::zeros(order, dim);
                }
                let r = residual(weights, *offset, z);
                let falling: f64 = (0..order).map(|l| (k - l) as f64).product();
                let scale = falling * r.powi((k - order) as i32);
                SymTensor::from_fn(order, dim, |idx| {
                    scale * idx.iter().map(|&i| weights[i]).product::<f64>()
                })
            }
            ElementFunction::Rosenbrock { a, b } => rosenbrock_derivative(*a, *b, z, order),
            ElementFunction::Zero { .. } => SymTensor::zeros(order, dim),
            ElementFunction::AbsPower { q } => {
                SymTensor::from_fn(order, 1, |_| abs_power_derivative(z[0], *q, order))
            }
            ElementFunction::Custom(f) => f.derivative(z, order),
        }
    }
}

fn residual(weights: &DVector<f64>, offset: f64, z: &[f64]) -> f64 {
    weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() - offset
}

/// `d^j/dt^j |t|^q = q (q-1)...(q-j+1) |t|^(q-j) sign(t)^j`, finite for `t != 0`.
pub fn abs_power_derivative(t: f64, q: f64, order: usize) -> f64 {
    let falling: f64 = (0..order).map(|l| q - l as f64).product();
    let sign = if t < 0.0 && order % 2 == 1 { -1.0 } else { 1.0 };
    falling * t.abs().powf(q - order as f64) * sign
}

fn rosenbrock_derivative(a: f64, b: f64, z: &[f64], order: usize) -> SymTensor {
    let (u, v) = (z[0], z[1]);
    SymTensor::from_fn(order, 2, |idx| {
        let ones = idx.iter().filter(|&&i| i == 0).count();
        let twos = order - ones;
        match (ones, twos) {
            (1, 0) => -2.0 * (a - u) - 4.0 * b * u * (v - u * u),
            (0, 1) => 2.0 * b * (v - u * u),
            (2, 0) => 2.0 - 4.0 * b * v + 12.0 * b * u * u,
            (1, 1) => -4.0 * b * u,
            (0, 2) => 2.0 * b,
            (3, 0) => 24.0 * b * u,
            (2, 1) => -4.0 * b,
            (4, 0) => 24.0 * b,
            _ => 0.0,
        }
    })
}
