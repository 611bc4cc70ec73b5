//! Self-checks of the model and criticality machinery on random samples.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::criticality::chi;
use crate::error::{PsarpError, Result};
use crate::feasible::FeasibleSet;
use crate::models::{eval_two_sided, TwoSidedBranch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Overestimate,
    Gradients,
    ChiOracle,
}

impl std::str::FromStr for Suite {
    type Err = PsarpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overestimate" => Ok(Suite::Overestimate),
            "gradients" => Ok(Suite::Gradients),
            "chi-oracle" => Ok(Suite::ChiOracle),
            other => Err(PsarpError::InvalidConfig(format!(
                "unknown suite {other:?}; expected overestimate, gradients or chi-oracle"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub suite: String,
    pub samples: usize,
    pub failures: usize,
    /// Largest amount by which a sample missed its bound (0 when none did).
    pub worst: f64,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

pub const PS: [usize; 3] = [1, 3, 5];
pub const QS: [f64; 3] = [0.1, 0.5, 0.9];

pub fn run(suite: Suite, samples: usize, seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    let (name, failures, worst, total) = match suite {
        Suite::Overestimate => {
            let (f, w, t) = overestimate(samples, seed);
            ("overestimate", f, w, t)
        }
        Suite::Gradients => {
            let (f, w, t) = gradients(samples, seed, 1e-3)?;
            ("gradients", f, w, t)
        }
        Suite::ChiOracle => {
            let (f, w, t) = chi_oracle(samples, seed)?;
            ("chi-oracle", f, w, t)
        }
    };
    Ok(CheckReport {
        suite: name.into(),
        samples: total,
        failures,
        worst,
        elapsed: start.elapsed(),
    })
}

fn nonzero(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    loop {
        let v = rng.random_range(lo..=hi);
        if v != 0.0 {
            return v;
        }
    }
}

/// `m(x, s) >= |x + s|^q - 1e-10` for odd `p`.
fn overestimate(samples: usize, seed: u64) -> (usize, f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut failures, mut worst, mut total) = (0, 0.0f64, 0);
    for p in PS {
        for q in QS {
            for _ in 0..samples {
                let x = nonzero(&mut rng, -1.0, 1.0);
                let s = rng.random_range(-2.0..=2.0);
                let branch = TwoSidedBranch::new(x, q, p).expect("x is non-zero");
                let miss = (x + s).abs().powf(q) - branch.value(s);
                total += 1;
                if miss > 1e-10 {
                    failures += 1;
                }
                worst = worst.max(miss.max(0.0));
            }
        }
    }
    (failures, worst, total)
}

/// `|grad m(x, s)| > q/2 |grad m(x, 0)|` for `|x| in (eps, 1]`, `|x + s| >= eps`.
fn gradients(samples: usize, seed: u64, eps: f64) -> Result<(usize, f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut failures, mut worst, mut total) = (0, 0.0f64, 0);
    for p in PS {
        for q in QS {
            let mut done = 0;
            while done < samples {
                let x = rng.random_range(eps..=1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                let s = rng.random_range(-2.0..=2.0);
                if x.abs() <= eps || (x + s).abs() < eps {
                    continue;
                }
                done += 1;
                let (_, g) = eval_two_sided(x, s, q, p)?;
                let bound = 0.5 * q * q * x.abs().powf(q - 1.0);
                total += 1;
                if g.abs() <= bound {
                    failures += 1;
                    worst = worst.max(bound - g.abs());
                }
            }
        }
    }
    Ok((failures, worst, total))
}

/// `chi` against a search over the boundary of
/// `{d : x + d in F, ||d|| <= 1}` on a 1e-3 grid.
fn chi_oracle(samples: usize, seed: u64) -> Result<(usize, f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst = 0.0f64;
    let mut total = 0;
    for case in 0..4 {
        let dim = if case < 2 { 1 } else { 2 };
        let ball = case % 2 == 1;
        let set = if ball {
            FeasibleSet::ball(DVector::zeros(dim), 1.0)?
        } else {
            FeasibleSet::uniform_box(dim, -1.0, 1.0)?
        };
        for _ in 0..samples {
            let x = loop {
                let x = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0));
                if set.contains(&x, 0.0) {
                    break x;
                }
            };
            let g = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0));
            let value = chi(&g, &x, &set, &DMatrix::identity(dim, dim), 1e-10)?.value;
            let reference = boundary_search(&g, &x, ball);
            let diff = (value - reference).abs();
            total += 1;
            worst = worst.max(diff);
            if diff > 5e-3 {
                failures += 1;
            }
        }
    }
    Ok((failures, worst, total))
}

/// Largest `t <= 1` with `x + t u` in the unit box or ball.
fn reach(x: &DVector<f64>, u: &DVector<f64>, ball: bool) -> f64 {
    if ball {
        let b = x.dot(u);
        let c = x.norm_squared() - 1.0;
        let disc = (b * b - c).max(0.0);
        return (-b + disc.sqrt()).clamp(0.0, 1.0);
    }
    let mut t = 1.0f64;
    for (xi, ui) in x.iter().zip(u.iter()) {
        if *ui > 0.0 {
            t = t.min((1.0 - xi) / ui);
        } else if *ui < 0.0 {
            t = t.min((-1.0 - xi) / ui);
        }
    }
    t.max(0.0)
}

fn boundary_search(g: &DVector<f64>, x: &DVector<f64>, ball: bool) -> f64 {
    let mut best = 0.0f64;
    if x.len() == 1 {
        let mut d = -1.0;
        while d <= 1.0 + 1e-12 {
            let y = x[0] + d;
            let inside = if ball { y.abs() <= 1.0 } else { (-1.0..=1.0).contains(&y) };
            if inside {
                best = best.min(g[0] * d);
            }
            d += 1e-3;
        }
        return best.abs();
    }
    let steps = (std::f64::consts::TAU / 1e-3).ceil() as usize;
    for k in 0..steps {
        let theta = k as f64 * 1e-3;
        let u = DVector::from_vec(vec![theta.cos(), theta.sin()]);
        let t = reach(x, &u, ball);
        best = best.min(t * g.dot(&u));
    }
    best.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_small_samples() {
        for suite in [Suite::Overestimate, Suite::Gradients, Suite::ChiOracle] {
            let r = run(suite, 20, 1).unwrap();
            assert!(r.passed(), "{r:?}");
            assert!(r.samples > 0);
        }
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("chi-oracle".parse::<Suite>().unwrap(), Suite::ChiOracle);
        assert!("nope".parse::<Suite>().is_err());
    }
}
