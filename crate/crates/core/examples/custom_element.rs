//! A user-defined smooth element: `log(1 + z^2)` on each coordinate pair
//! difference, plus `|x_i|^q` terms.

use std::sync::Arc;

use nalgebra::DVector;
use psarp::element::{ElementFunction, SmoothElement};
use psarp::tensor::SymTensor;
use psarp::{solve, ElementMap, FeasibleSet, NiceElement, Problem, SolverConfig};

/// `log(1 + (z_1 - z_2 - 1)^2)`.
#[derive(Debug)]
struct LogCauchy;

impl SmoothElement for LogCauchy {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, z: &[f64]) -> f64 {
        let t = z[0] - z[1] - 1.0;
        (t * t).ln_1p()
    }

    fn derivative(&self, z: &[f64], order: usize) -> SymTensor {
        let t = z[0] - z[1] - 1.0;
        let u = 1.0 + t * t;
        // d^j/dt^j log(1 + t^2) for j = 1, 2, 3
        let scalar = match order {
            1 => 2.0 * t / u,
            2 => 2.0 * (1.0 - t * t) / (u * u),
            3 => 4.0 * t * (t * t - 3.0) / (u * u * u),
            _ => unimplemented!("orders above 3 are not used with p = 3"),
        };
        // chain rule through t = z_1 - z_2
        SymTensor::from_fn(order, 2, |idx| {
            let sign: f64 = idx.iter().map(|&i| if i == 0 { 1.0 } else { -1.0 }).product();
            sign * scalar
        })
    }
}

fn main() -> psarp::Result<()> {
    let n = 4;
    let nice = (0..n - 1)
        .map(|i| NiceElement {
            function: ElementFunction::Custom(Arc::new(LogCauchy)),
            map: ElementMap::coordinates(n, &[i, i + 1]),
        })
        .collect();
    let singular = (0..n).map(|i| ElementMap::coordinate(n, i)).collect();
    let problem = Problem::new(n, nice, singular, 0.3, FeasibleSet::uniform_box(n, -3.0, 3.0)?)?
        .with_start(DVector::from_element(n, 0.5))?;

    let report = solve(&problem, &SolverConfig { eps: 1e-5, ..Default::default() })?;
    println!(
        "{:?}: x = {:.4?}, f = {:.6}, {} iterations",
        report.status,
        report.x.as_slice(),
        report.f,
        report.total_iterations()
    );
    Ok(())
}
