use nalgebra::{dvector, DVector};
use psarp::driver::{replay_ledger, Outcome, SolveStatus};
use psarp::element::ElementFunction;
use psarp::{solve, ElementMap, FeasibleSet, HModel, NiceElement, Problem, SolverConfig};

fn square_on_interval(x0: f64) -> Problem {
    Problem::new(
        1,
        vec![NiceElement {
            function: ElementFunction::square(0.0),
            map: ElementMap::coordinate(1, 0),
        }],
        vec![],
        0.5,
        FeasibleSet::uniform_box(1, -1.0, 1.0).unwrap(),
    )
    .unwrap()
    .with_start(dvector![x0])
    .unwrap()
}

fn abs_sqrt_on_interval() -> Problem {
    Problem::new(
        1,
        vec![],
        vec![ElementMap::coordinate(1, 0)],
        0.5,
        FeasibleSet::uniform_box(1, -1.0, 1.0).unwrap(),
    )
    .unwrap()
    .with_start(dvector![0.5])
    .unwrap()
}

fn monotone(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + 1e-14)
}

#[test]
fn quadratic_on_interval_reaches_zero() {
    let problem = square_on_interval(0.8);
    let config = SolverConfig { eps: 1e-4, p: 2, ..Default::default() };
    let report = solve(&problem, &config).unwrap();
    assert_eq!(report.status, SolveStatus::Terminated);
    assert!(report.chi <= 1e-4);
    // projected-gradient reference: x* = 0 and chi = 2|x| near it
    assert!(report.x[0].abs() <= 0.5e-4 + 1e-12);
    let f: Vec<f64> = report.trace.iter().map(|r| r.f).collect();
    assert!(monotone(&f));
}

#[test]
fn singular_toy_freezes_at_the_kink() {
    let problem = abs_sqrt_on_interval();
    assert_eq!(problem.nice_count(), 1, "zero element appended for the span");
    for h_model in [HModel::TwoSided, HModel::True] {
        let config = SolverConfig { eps: 1e-3, p: 3, h_model, ..Default::default() };
        let report = solve(&problem, &config).unwrap();
        assert_eq!(report.status, SolveStatus::Terminated, "{h_model:?}");
        assert!(report.x[0].abs() <= 1e-3 || report.chi <= 1e-3);
        assert!(report.f < 0.5f64.sqrt());
        let f: Vec<f64> = report.trace.iter().map(|r| r.f).collect();
        assert!(monotone(&f));
    }
}

#[test]
fn critical_start_needs_no_step() {
    let problem = square_on_interval(0.0);
    let report = solve(&problem, &SolverConfig { p: 2, ..Default::default() }).unwrap();
    assert_eq!(report.trace.len(), 1);
    assert_eq!(report.successful_iterations(), 0);
    assert_eq!(report.trace[0].outcome, Outcome::Terminated);
    assert_eq!(report.ledger.objective_evals(), 1);
    assert_eq!(report.ledger.derivative_evals(1), 1);
    assert_eq!(report.ledger.derivative_evals(2), 0);
}

#[test]
fn infeasible_start_is_projected() {
    let problem = square_on_interval(3.0);
    let report = solve(&problem, &SolverConfig { p: 2, ..Default::default() }).unwrap();
    assert_eq!(report.trace[0].x, vec![1.0]);
}

#[test]
fn ledger_matches_replay() {
    let problem = abs_sqrt_on_interval();
    let config = SolverConfig { eps: 1e-3, p: 3, ..Default::default() };
    let report = solve(&problem, &config).unwrap();
    assert_eq!(replay_ledger(&report.trace, 3), report.ledger);
}

#[test]
fn trace_round_trips() {
    let problem = square_on_interval(0.8);
    let report = solve(&problem, &SolverConfig { p: 2, ..Default::default() }).unwrap();
    let mut buf = Vec::new();
    psarp::driver::write_trace(&mut buf, &report.trace).unwrap();
    let back = psarp::driver::read_trace(buf.as_slice()).unwrap();
    assert_eq!(back, report.trace);
    let x: DVector<f64> = DVector::from_vec(back.last().unwrap().x.clone());
    assert_eq!(x, report.x);
}
