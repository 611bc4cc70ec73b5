use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use psarp::criticality::chi;
use psarp::driver::{acceptance_ratio, update_sigmas, ElementUpdate, SigmaChange};
use psarp::harness::{instance, run_sweep};
use psarp::models::{true_h_change, TwoSidedBranch};
use psarp::{FeasibleSet, SolverConfig};

fn vector(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-3.0f64..3.0, n).prop_map(DVector::from_vec)
}

fn polytope() -> FeasibleSet {
    let b = FeasibleSet::uniform_box(3, -1.0, 1.0).unwrap();
    let h = FeasibleSet::halfspaces(
        vec![DVector::from_vec(vec![1.0, 1.0, 0.0]), DVector::from_vec(vec![0.0, -1.0, 2.0])],
        vec![0.5, 1.0],
    )
    .unwrap();
    FeasibleSet::intersection(vec![b, h]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_feasible_and_idempotent(y in vector(3)) {
        let set = polytope();
        let p = set.project(&y).unwrap();
        prop_assert!(set.contains(&p, 1e-8));
        let again = set.project(&p).unwrap();
        prop_assert!((&again - &p).norm() < 1e-8);
    }

    #[test]
    fn projection_satisfies_the_variational_inequality(y in vector(3), others in prop::collection::vec(vector(3), 20)) {
        let set = polytope();
        let p = set.project(&(&y * 1e3)).unwrap();
        for z in others {
            let z = set.project(&z).unwrap();
            prop_assert!((&y * 1e3 - &p).dot(&(z - &p)) <= 1e-6 * (1.0 + 1e3 * y.norm()));
        }
    }

    #[test]
    fn projection_is_nonexpansive(a in vector(3), b in vector(3)) {
        let set = polytope();
        let (pa, pb) = (set.project(&a).unwrap(), set.project(&b).unwrap());
        prop_assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-7);
    }

    #[test]
    fn ball_slice_projection_stays_in_the_slice(y in vector(3), t in -0.5f64..0.5) {
        let set = FeasibleSet::ball(DVector::zeros(3), 1.0).unwrap();
        let x = DVector::from_vec(vec![t, 0.2, -0.1]);
        let basis = DMatrix::from_columns(&[
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.6, 0.8]),
        ]);
        let y = &basis * (basis.transpose() * y);
        let d = set.project_shifted_subspace(&x, &basis, &y).unwrap();
        prop_assert!(set.contains(&(&x + &d), 1e-9));
        prop_assert!((&d - &basis * (basis.transpose() * &d)).norm() < 1e-12);
    }

    #[test]
    fn chi_is_positively_homogeneous_in_the_gradient(g in vector(3), scale in 0.1f64..10.0) {
        let set = polytope();
        let x = set.project(&DVector::from_vec(vec![0.1, -0.3, 0.2])).unwrap();
        let id = DMatrix::identity(3, 3);
        let a = chi(&g, &x, &set, &id, 1e-10).unwrap().value;
        let b = chi(&(&g * scale), &x, &set, &id, 1e-10).unwrap().value;
        prop_assert!((b - scale * a).abs() <= 1e-6 * (1.0 + b));
    }

    #[test]
    fn chi_is_bounded_by_the_gradient_norm(g in vector(3)) {
        let set = polytope();
        let x = set.witness().clone();
        let c = chi(&g, &x, &set, &DMatrix::identity(3, 3), 1e-10).unwrap();
        prop_assert!(c.value >= 0.0);
        prop_assert!(c.value <= g.norm() + 1e-9);
    }

    #[test]
    fn two_sided_model_matches_value_and_overestimates(
        x in prop_oneof![-1.0f64..-1e-3, 1e-3f64..1.0],
        s in -2.0f64..2.0,
        q in 0.05f64..0.95,
        p in prop_oneof![Just(1usize), Just(3), Just(5), Just(7)],
    ) {
        let branch = TwoSidedBranch::new(x, q, p).unwrap();
        prop_assert!((branch.value(0.0) - x.abs().powf(q)).abs() < 1e-14);
        prop_assert!(branch.value(s) >= (x + s).abs().powf(q) - 1e-10);
    }

    #[test]
    fn true_change_is_a_difference_of_powers(x in 0.01f64..2.0, s in -1.0f64..1.0, q in 0.1f64..0.9) {
        let direct = (x + s).abs().powf(q) - x.powf(q);
        prop_assert!((true_h_change(x, s, q) - direct).abs() < 1e-12);
    }

    #[test]
    fn sigma_update_respects_the_floor(sigma in 1e-9f64..1e3, rho in -1.0f64..2.0) {
        let config = SolverConfig::default();
        let update = ElementUpdate { sigma, f_trial: 1.0, m_trial: 1.0, delta_f: 0.0, delta_m: 0.0 };
        let (next, changes) = update_sigmas(&[update], rho, 0.0, &config);
        prop_assert!(next[0] >= config.sigma_min);
        if changes[0] == SigmaChange::Increased {
            prop_assert!(next[0] >= config.gamma1 * sigma && next[0] <= config.gamma2 * sigma);
        }
    }
}

#[test]
fn ratio_rejects_a_non_positive_prediction() {
    assert!(acceptance_ratio(1.0, 0.0).is_err());
    assert!((acceptance_ratio(0.5, 1.0).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn generator_digest_is_reproducible() {
    let spec = "gen:lq-regression n=20 m=30 q=0.5 seed=7";
    let a = instance::load(spec).unwrap();
    let b = instance::load(spec).unwrap();
    assert_eq!(a.digest, b.digest);
    let other = instance::load("gen:lq-regression n=20 m=30 q=0.5 seed=8").unwrap();
    assert_ne!(a.digest, other.digest);
}

#[test]
fn sweep_csv_is_bitwise_reproducible() {
    let inst = instance::load("gen:lq-regression n=10 m=15 seed=3").unwrap();
    let config = inst.config(&SolverConfig::default());
    let render = || {
        let report = run_sweep(&inst.problem, &[1e-1, 1e-2], &config).unwrap();
        assert!(report.points.iter().all(|p| p.consistent));
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        out
    };
    assert_eq!(render(), render());
}

#[test]
fn single_tolerance_sweep_has_no_slope() {
    let inst = instance::load("gen:toy1d").unwrap();
    let report = run_sweep(&inst.problem, &[1e-2], &inst.config(&SolverConfig::default())).unwrap();
    assert_eq!(report.slope, None);
}

#[test]
fn out_of_range_tolerances_are_refused() {
    let inst = instance::load("gen:toy1d").unwrap();
    let config = SolverConfig::default();
    assert!(run_sweep(&inst.problem, &[0.0], &config).is_err());
    assert!(run_sweep(&inst.problem, &[2.0], &config).is_err());
    assert!(run_sweep(&inst.problem, &[], &config).is_err());
}
