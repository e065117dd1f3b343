mod common;

use common::{random_plant, random_vector, rel_diff, rng};
use rand::Rng;
use sls_core::linalg::{null_space_basis, subspace_distance};
use sls_core::{
    backward_step_pinv, backward_step_stable, build_vectorized, solve, solve_approx, stochastic_chain,
    verify_response, Allowance, CostToGoModel, H2Weights, LQWeights, NullCert, Objective, Plant,
    SlsError, Synthesis, Tolerance,
};

fn tol() -> Tolerance {
    Tolerance::default()
}

fn check_rollout(plant: &Plant, obj: &dyn CostToGoModel, syn: &Synthesis) {
    let sys = build_vectorized(plant);
    let horizon = syn.gains.len();
    for tau in 1..=horizon {
        let x = &syn.states[tau];
        let cert = syn.certificates[tau - 1].as_ref().unwrap();
        let v = cert.violation(x.as_ref());
        assert!(v <= 1e-7 * (1.0 + x.norm_l2()), "cert violation {v:.3e} at tau={tau}");
        let t = (sys.a_eq() * x).norm_l2();
        assert!(t <= 1e-7, "transition violation {t:.3e} at tau={tau}");
    }
    assert!(syn.termination_residual <= 1e-6);
    let recomputed: f64 = syn
        .states
        .iter()
        .zip(&syn.inputs)
        .map(|(x, u)| obj.step_cost(x.as_ref(), u.as_ref()))
        .sum();
    assert!(rel_diff(syn.objective_value, recomputed) <= 1e-9);
    let report = verify_response(plant, &syn.response).unwrap();
    assert!(report.max() <= 1e-6, "worst residual {:?}", report.worst());
}

#[test]
fn chain_rollouts_satisfy_certificates() {
    for (nx, nu, ny, horizon) in [(2, 2, 2, 4), (3, 3, 3, 6), (4, 2, 3, 12), (3, 1, 1, 10), (5, 5, 5, 10)] {
        let plant = stochastic_chain(nx, nu, ny, 0.2).unwrap();
        let dims = plant.dims();
        for obj in [Objective::H2(H2Weights::identity(dims)), Objective::Lq(LQWeights::identity(dims))] {
            let syn = solve(&plant, &obj, horizon, &tol()).unwrap();
            check_rollout(&plant, &obj, &syn);
        }
    }
}

#[test]
fn random_plant_rollouts_satisfy_certificates() {
    let mut g = rng(3);
    let mut accepted = 0;
    for _ in 0..60 {
        let plant = random_plant(&mut g, 3);
        let horizon = g.gen_range(2..=6);
        let obj = H2Weights::identity(plant.dims());
        match solve(&plant, &obj, horizon, &tol()) {
            Ok(syn) => {
                check_rollout(&plant, &obj, &syn);
                accepted += 1;
            }
            Err(SlsError::Infeasible { .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    assert!(accepted >= 10, "only {accepted} random instances were feasible");
}

#[test]
fn admissible_inputs_keep_next_state_certified() {
    let mut g = rng(5);
    for _ in 0..30 {
        let plant = random_plant(&mut g, 3);
        let sys = build_vectorized(&plant);
        let mut cert = NullCert::identity(sys.n_state());
        for _ in 0..4 {
            let (adm, cert_tau) = backward_step_stable(&cert, &sys, &tol()).unwrap();
            let gamma_b = cert.psi() * sys.b_tilde();
            assert!((&gamma_b * &adm.h_lambda).norm_l2() <= 1e-9);
            let basis = null_space_basis(cert_tau.psi(), &tol()).unwrap();
            for _ in 0..5 {
                let x = &basis * random_vector(&mut g, basis.ncols());
                let lambda = random_vector(&mut g, adm.free_dim());
                let u = &adm.h_x * &x + &adm.h_lambda * &lambda;
                let next = sys.step(x.as_ref(), u.as_ref());
                assert!(cert.violation(next.as_ref()) <= 1e-8 * (1.0 + x.norm_l2() + lambda.norm_l2()));
            }
            cert = cert_tau;
        }
    }
}

#[test]
fn pinv_and_stable_steps_agree() {
    let mut g = rng(17);
    for _ in 0..50 {
        let plant = random_plant(&mut g, 3);
        let sys = build_vectorized(&plant);
        let horizon = g.gen_range(2..=5);
        let mut cert = NullCert::identity(sys.n_state());
        for _ in 0..horizon {
            let (s_adm, s_cert) = backward_step_stable(&cert, &sys, &tol()).unwrap();
            let (p_adm, p_cert) = backward_step_pinv(&cert, &sys, &tol()).unwrap();
            assert!(subspace_distance(s_adm.h_lambda.as_ref(), p_adm.h_lambda.as_ref()) <= 1e-7);
            let ns = null_space_basis(s_cert.psi(), &tol()).unwrap();
            let np = null_space_basis(p_cert.psi(), &tol()).unwrap();
            assert!(subspace_distance(ns.as_ref(), np.as_ref()) <= 1e-7);
            let gamma_b = cert.psi() * sys.b_tilde();
            let gap = &gamma_b * (&s_adm.h_x - &p_adm.h_x) * &ns;
            assert!(gap.norm_l2() <= 1e-7);
            cert = s_cert;
        }
    }
}

#[test]
fn unit_allowance_reduces_to_full_solve() {
    for (nx, horizon) in [(3, 6), (5, 10)] {
        let plant = stochastic_chain(nx, nx, nx, 0.2).unwrap();
        let obj = H2Weights::identity(plant.dims());
        let full = solve(&plant, &obj, horizon, &tol()).unwrap();
        let approx = solve_approx(&plant, &obj, horizon, Allowance::new(1, horizon).unwrap(), &tol()).unwrap();
        for (a, b) in full.gains.iter().zip(&approx.gains) {
            assert!((a - b).norm_l2() <= 1e-8);
        }
        for (a, b) in full.states.iter().zip(&approx.states) {
            assert!((a - b).norm_l2() <= 1e-8);
        }
        assert!((full.objective_value - approx.objective_value).abs() <= 1e-8);
    }
}

#[test]
fn approximation_marks_skipped_certificates() {
    let plant = stochastic_chain(3, 3, 3, 0.2).unwrap();
    let obj = H2Weights::identity(plant.dims());
    let syn = solve_approx(&plant, &obj, 8, Allowance::new(6, 8).unwrap(), &tol()).unwrap();
    let computed: Vec<bool> = syn.certificates.iter().map(Option::is_some).collect();
    assert_eq!(computed, [false, false, false, false, false, true, true, true]);
}

#[test]
fn full_allowance_loses_termination_on_chain() {
    let plant = stochastic_chain(5, 5, 5, 0.2).unwrap();
    let obj = H2Weights::identity(plant.dims());
    let syn = solve_approx(&plant, &obj, 10, Allowance::new(10, 10).unwrap(), &tol()).unwrap();
    assert!(syn.termination_residual > 1e-6);
}

#[test]
fn underactuated_short_horizon_is_infeasible() {
    let plant = stochastic_chain(3, 1, 1, 0.2).unwrap();
    let obj = H2Weights::identity(plant.dims());
    assert!(matches!(solve(&plant, &obj, 2, &tol()), Err(SlsError::Infeasible { .. })));
}
