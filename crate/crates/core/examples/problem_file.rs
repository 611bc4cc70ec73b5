//! Writes a problem file, reads it back and solves it, streaming the trace
//! as JSON lines.

use nalgebra::{dvector, dmatrix};
use psarp::driver::write_trace;
use psarp::element::ElementFunction;
use psarp::harness::instance;
use psarp::{descriptor, solve, ElementMap, FeasibleSet, NiceElement, Problem, SolverConfig};

fn main() -> psarp::Result<()> {
    let problem = Problem::new(
        2,
        vec![NiceElement {
            function: ElementFunction::quadratic(dmatrix![2.0, 0.5; 0.5, 1.0], dvector![-1.0, 0.3], 0.0),
            map: ElementMap::coordinates(2, &[0, 1]),
        }],
        vec![ElementMap::coordinate(2, 1)],
        0.5,
        FeasibleSet::ball(dvector![0.0, 0.0], 2.0)?,
    )?
    .with_start(dvector![1.0, 1.0])?;

    let text = descriptor::to_string(&problem, Some("quadratic-in-a-ball"))?;
    println!("{text}");

    let path = std::env::temp_dir().join("psarp-example-problem.json");
    std::fs::write(&path, &text)?;
    let inst = instance::load(path.to_str().expect("utf-8 path"))?;
    println!("reloaded {} (sha256 {})", inst.name, inst.digest);

    let report = solve(&inst.problem, &SolverConfig { eps: 1e-6, ..Default::default() })?;
    write_trace(std::io::stdout().lock(), &report.trace)?;
    Ok(())
}
