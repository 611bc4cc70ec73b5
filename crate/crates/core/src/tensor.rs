//! Dense symmetric derivative tensors of small element functions.
//!
//! A tensor of order `j` over an element of dimension `d` stores all `d^j`
//! entries in row-major order. Element dimensions are tiny, so the dense
//! layout is cheaper than tracking symmetry classes.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl SymTensor {
    pub fn zeros(order: usize, dim: usize) -> Self {
        Self {
            order,
            dim,
            data: vec![0.0; dim.pow(order as u32)],
        }
    }

    /// Builds a tensor by evaluating `entry` at every multi-index.
    pub fn from_fn(order: usize, dim: usize, mut entry: impl FnMut(&[usize]) -> f64) -> Self {
        let len = dim.pow(order as u32);
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; order];
        for flat in 0..len {
            unflatten(flat, dim, &mut idx);
            data.push(entry(&idx));
        }
        Self { order, dim, data }
    }

    /// Order-1 tensor from a gradient vector.
    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self {
            order: 1,
            dim: v.len(),
            data: v.iter().copied().collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.order);
        self.data[flatten(idx, self.dim)]
    }

    /// `T[s]^order`.
    pub fn contract_full(&self, s: &[f64]) -> f64 {
        let v = self.contract_times(s, self.order);
        v[0]
    }

    /// `T[s]^(order-1)`, a vector of length `dim`.
    pub fn contract_all_but_one(&self, s: &[f64]) -> DVector<f64> {
        assert!(self.order >= 1);
        DVector::from_vec(self.contract_times(s, self.order - 1))
    }

    fn contract_times(&self, s: &[f64], times: usize) -> Vec<f64> {
        debug_assert_eq!(s.len(), self.dim);
        let mut cur = self.data.clone();
        for _ in 0..times {
            let next_len = cur.len() / self.dim;
            let mut next = vec![0.0; next_len];
            for (k, out) in next.iter_mut().enumerate() {
                let base = k * self.dim;
                *out = cur[base..base + self.dim]
                    .iter()
                    .zip(s)
                    .map(|(a, b)| a * b)
                    .sum();
            }
            cur = next;
        }
        cur
    }

    /// Largest deviation between an entry and the entry at its sorted index.
    pub fn symmetry_defect(&self) -> f64 {
        let mut idx = vec![0usize; self.order];
        let mut worst: f64 = 0.0;
        for flat in 0..self.data.len() {
            unflatten(flat, self.dim, &mut idx);
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            let a = self.data[flat];
            let b = self.data[flatten(&sorted, self.dim)];
            worst = worst.max((a - b).abs());
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn flatten(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

fn unflatten(mut flat: usize, dim: usize, idx: &mut [usize]) {
    for slot in idx.iter_mut().rev() {
        *slot = flat % dim;
        flat /= dim;
    }
}
