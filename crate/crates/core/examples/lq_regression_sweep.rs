//! Successful-iteration counts of an `l_q`-regularized least-squares problem
//! over a range of tolerances, written as CSV with the fitted log-log slope.
//!
//! `cargo run --release --example lq_regression_sweep -- "lq-regression n=40 m=60 seed=3"`

use psarp::harness::{instance, run_sweep};
use psarp::SolverConfig;

fn main() -> psarp::Result<()> {
    let spec = std::env::args().nth(1).unwrap_or_else(|| "lq-regression n=20 m=30 q=0.5 seed=7".into());
    let inst = instance::load(&format!("gen:{spec}"))?;
    let config = inst.config(&SolverConfig::default());
    let eps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];

    let report = run_sweep(&inst.problem, &eps, &config)?;
    report.write_csv(std::io::stdout().lock())?;
    match report.slope {
        Some(s) => eprintln!("slope {s:.3} against the order bound (p+1)/p = {:.3}", (config.p + 1) as f64 / config.p as f64),
        None => eprintln!("slope undefined"),
    }
    Ok(())
}
