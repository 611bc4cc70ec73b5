//! On a set that is not kernel-centered the two-sided model is refused; the
//! true model runs as is, and the two-sided model runs once the weaker
//! general-set mode is requested.

use psarp::harness::instance;
use psarp::{solve, HModel, SolverConfig};

fn main() -> psarp::Result<()> {
    // the box of the regression example cut by sum(y) <= -1
    let inst = instance::load("gen:lq-regression n=20 m=30 q=0.5 seed=7 halfspace=-1")?;
    let base = SolverConfig { eps: 1e-2, ..inst.config(&SolverConfig::default()) };

    match solve(&inst.problem, &base) {
        Ok(_) => println!("two-sided: accepted"),
        Err(e) => println!("two-sided: {e}"),
    }

    for (label, config) in [
        ("true model", SolverConfig { h_model: HModel::True, ..base.clone() }),
        ("two-sided, general set", SolverConfig { allow_general_set: true, ..base.clone() }),
    ] {
        let r = solve(&inst.problem, &config)?;
        println!(
            "{label}: {:?} after {} successful / {} total iterations, f = {:.4}, chi = {:.2e}, worse complexity: {}",
            r.status,
            r.successful_iterations(),
            r.total_iterations(),
            r.f,
            r.chi,
            r.worse_complexity
        );
    }
    Ok(())
}
