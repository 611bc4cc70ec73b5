//! A smooth quadratic plus `|x|^(1/2)` on an interval, solved with both
//! singular models.

use nalgebra::dvector;
use psarp::element::ElementFunction;
use psarp::{solve, ElementMap, FeasibleSet, HModel, NiceElement, Problem, SolverConfig};

fn main() -> psarp::Result<()> {
    // f(x) = (x - 0.3)^2 + |x|^0.5 on [-1, 1]
    let problem = Problem::new(
        1,
        vec![NiceElement {
            function: ElementFunction::square(0.3),
            map: ElementMap::coordinate(1, 0),
        }],
        vec![ElementMap::coordinate(1, 0)],
        0.5,
        FeasibleSet::uniform_box(1, -1.0, 1.0)?,
    )?
    .with_start(dvector![0.9])?;

    for h_model in [HModel::TwoSided, HModel::True] {
        let config = SolverConfig { eps: 1e-6, p: 3, h_model, ..Default::default() };
        let report = solve(&problem, &config)?;
        println!("{h_model:?}:");
        for r in &report.trace {
            println!(
                "  k={:<2} x={:+.6} f={:.6} chi={:.2e} sigma={:.2e} {:?}",
                r.k, r.x[0], r.f, r.chi, r.sigma[0], r.outcome
            );
        }
        println!("  -> x = {:+.6}, f = {:.6}", report.x[0], report.f);
    }
    Ok(())
}
