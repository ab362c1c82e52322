use globid::bnb::{landscape, solve_fixed_p, Termination};
use globid::bound::lower_bound;
use globid::identify::{default_box, identify, IdentifyConfig, Protocol};
use globid::numerics::ScalarSearch;
use globid::pkpd::{synthesize_dataset, table1_patient, Dataset, PatientRecord};
use globid::wiener::WienerProblem;
use globid::ParamBox;

fn patient(id: u32) -> (PatientRecord, Dataset) {
    let p = table1_patient(id).unwrap();
    let proto = Protocol::default();
    let data = synthesize_dataset(&p, &proto.input, proto.period, proto.horizon).unwrap();
    (p, data)
}

#[test]
fn root_bound_is_below_objective_at_truth() {
    let (p, data) = patient(1);
    let problem = WienerProblem::new(&data, data.y[0], 2, 2).unwrap();
    let (root, changed) = problem.admissible_box(&default_box()).unwrap();
    assert!(changed);
    let l = lower_bound(&problem, &root, &ScalarSearch::default()).unwrap().lower;
    let f = solve_fixed_p(&problem, &[p.pd.gamma, p.pd.emax]).unwrap().value;
    assert!(l <= f, "{l} > {f}");
}

#[test]
fn certified_fit_on_a_box_around_the_truth() {
    let (p, data) = patient(8);
    let config = IdentifyConfig {
        root: ParamBox::gamma_emax((3.5, 4.5), (70.0, 85.0)).unwrap(),
        ..IdentifyConfig::with_orders(2, 2)
    };
    let id = identify(&data, &config).unwrap();
    assert!(id.result.certified, "{:?}", id.result.termination);
    assert_eq!(id.result.termination, Termination::Exhausted);
    assert!(!id.box_adjusted);
    assert!((id.gamma_hat() - p.pd.gamma).abs() < 0.05, "{}", id.gamma_hat());
    assert!((id.emax_hat() - p.pd.emax).abs() < 3.0, "{}", id.emax_hat());
    assert!(id.result.ub < 1e-7);
    let (alpha, beta) = id.arx(2);
    assert_eq!((alpha.len(), beta.len()), (2, 2));
}

#[test]
fn exact_order_fit_lands_on_the_truth() {
    let (p, data) = patient(13);
    let config = IdentifyConfig {
        root: ParamBox::gamma_emax((2.8, 3.2), (90.0, 100.0)).unwrap(),
        solver: globid::bnb::SolverConfig { max_nodes: 20_000, ..Default::default() },
        ..IdentifyConfig::with_orders(3, 3)
    };
    let id = identify(&data, &config).unwrap();
    let err = ((id.gamma_hat() - p.pd.gamma).powi(2) + (id.emax_hat() - p.pd.emax).powi(2)).sqrt();
    assert!(err < 0.5, "({}, {})", id.gamma_hat(), id.emax_hat());
    assert!(id.result.ub < 1e-9);
}

#[test]
fn landscape_minimum_sits_near_the_truth() {
    let (p, data) = patient(1);
    let problem = WienerProblem::new(&data, data.y[0], 2, 2).unwrap();
    let land = landscape(&problem, &default_box(), 50, 50).unwrap();
    let (i, j, h) = land.argmin().unwrap();
    assert!((land.gammas[i] - p.pd.gamma).abs() <= 2.0 * 7.0 / 49.0);
    assert!((land.emaxes[j] - p.pd.emax).abs() <= 2.0 * 120.0 / 49.0);
    assert!(h < (1e-6f64).ln());
    // Below the invertibility limit the objective is undefined.
    assert!(land.h[0][0].is_none());
}
