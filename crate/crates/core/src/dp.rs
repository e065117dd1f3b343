//! Two-stage dynamic program over admissible inputs and null-space
//! certificates, plus the forward rollout.

use faer::Mat;

use crate::error::{Result, SlsError};
use crate::linalg::{
    self, frobenius, normalize_nonzero_rows, null_space_basis, range_basis, vstack, DenseMatrix,
    Spectral, Tolerance, Vector,
};
use crate::model::{build_vectorized, Plant, SystemResponse, VectorizedSystem};
use crate::objectives::{CostToGoModel, QuadForm};

/// Inputs `u = H_x x + H_lambda lambda` that keep the next state certified.
#[derive(Clone, Debug)]
pub struct AdmissibleSet {
    pub h_x: DenseMatrix,
    pub h_lambda: DenseMatrix,
}

impl AdmissibleSet {
    /// Every input is admissible: `H_x = 0`, `H_lambda = I`.
    pub fn unconstrained(n_input: usize, n_state: usize) -> Self {
        Self {
            h_x: Mat::zeros(n_input, n_state),
            h_lambda: Mat::identity(n_input, n_input),
        }
    }

    pub fn free_dim(&self) -> usize {
        self.h_lambda.ncols()
    }
}

/// Admissible initial inputs `u[0] = w + H_lambda lambda`.
#[derive(Clone, Debug)]
pub struct InitialSet {
    pub w: Vector,
    pub h_lambda: DenseMatrix,
}

/// Certified constraint `Psi x = 0` with unit-norm rows. Zero rows means no
/// constraint.
#[derive(Clone, Debug, PartialEq)]
pub struct NullCert {
    psi: DenseMatrix,
}

impl NullCert {
    /// Normalizes the rows of `psi`, dropping those that vanish.
    pub fn new(psi: &DenseMatrix, tol: &Tolerance) -> Self {
        Self {
            psi: normalize_nonzero_rows(psi.as_ref(), tol),
        }
    }

    /// `Psi = I`: the state must be exactly zero.
    pub fn identity(n: usize) -> Self {
        Self {
            psi: Mat::identity(n, n),
        }
    }

    pub fn empty(n: usize) -> Self {
        Self {
            psi: Mat::zeros(0, n),
        }
    }

    pub fn psi(&self) -> faer::MatRef<'_, f64> {
        self.psi.as_ref()
    }

    pub fn rows(&self) -> usize {
        self.psi.nrows()
    }

    pub fn cols(&self) -> usize {
        self.psi.ncols()
    }

    /// `||Psi x||`.
    pub fn violation(&self, x: faer::ColRef<'_, f64>) -> f64 {
        (&self.psi * x).norm_l2()
    }

    fn check_cols(&self, sys: &VectorizedSystem) -> Result<()> {
        if self.cols() != sys.n_state() {
            return Err(SlsError::dim(format!(
                "certificate has {} columns, state has {}",
                self.cols(),
                sys.n_state()
            )));
        }
        Ok(())
    }
}

/// Number of leading steps that use unconstrained gains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Allowance(usize);

impl Allowance {
    pub fn new(t_a: usize, horizon: usize) -> Result<Self> {
        if t_a < 1 || t_a > horizon {
            return Err(SlsError::Domain(format!(
                "allowance must lie in [1, {horizon}], got {t_a}"
            )));
        }
        Ok(Self(t_a))
    }

    pub fn get(&self) -> usize {
        self.0
    }
}

/// `Psi B~` is numerically zero when it is a roundoff-level combination;
/// rank decisions are taken relative to the size of its factors.
fn input_coupling(cert: &NullCert, sys: &VectorizedSystem) -> (DenseMatrix, f64) {
    let gamma_b = cert.psi() * sys.b_tilde();
    let scale = frobenius(cert.psi()) * frobenius(sys.b_tilde());
    (gamma_b, scale)
}

fn stack_with_transition(residual: DenseMatrix, sys: &VectorizedSystem, tol: &Tolerance) -> Result<NullCert> {
    let stacked = vstack(&[residual.as_ref(), sys.a_eq()])?;
    Ok(NullCert::new(&stacked, tol))
}

/// One backward step using only least squares and a null-space basis of
/// `Gamma_B = Psi[t+1] B~`.
pub fn backward_step_stable(
    cert_next: &NullCert,
    sys: &VectorizedSystem,
    tol: &Tolerance,
) -> Result<(AdmissibleSet, NullCert)> {
    cert_next.check_cols(sys)?;
    let gamma_a = cert_next.psi() * sys.a_tilde();
    let (gamma_b, scale) = input_coupling(cert_next, sys);
    let sv = Spectral::with_scale(gamma_b.as_ref(), scale, tol)?;
    let h_x = sv.pinv_apply((-&gamma_a).as_ref());
    let h_lambda = sv.null_basis();
    let residual = &gamma_b * &h_x + &gamma_a;
    let cert = stack_with_transition(residual, sys, tol)?;
    Ok((AdmissibleSet { h_x, h_lambda }, cert))
}

/// Reference backward step through the pseudo-inverse of
/// `Gamma = [-B~, Xi]`, `Xi` spanning `null(Psi[t+1])`.
pub fn backward_step_pinv(
    cert_next: &NullCert,
    sys: &VectorizedSystem,
    tol: &Tolerance,
) -> Result<(AdmissibleSet, NullCert)> {
    cert_next.check_cols(sys)?;
    let n_u = sys.n_input();
    let xi = null_space_basis(cert_next.psi(), tol)?;
    let neg_b = -sys.b_tilde().to_owned();
    let gamma = linalg::hstack(&[neg_b.as_ref(), xi.as_ref()])?;
    let sv = Spectral::new(gamma.as_ref(), tol)?;

    let sol = sv.pinv_apply(sys.a_tilde());
    let h_x = sol.subrows(0, n_u).to_owned();
    let kernel = sv.null_basis();
    let h_lambda = range_basis(kernel.subrows(0, n_u), tol)?;
    let residual = -sv.range_residual(sys.a_tilde());
    let cert = stack_with_transition(residual, sys, tol)?;
    Ok((AdmissibleSet { h_x, h_lambda }, cert))
}

/// Initial inputs consistent with `x[1] = [vec(I); B~0 u[0]]` and
/// `Psi[1] x[1] = 0`.
pub fn initial_step(cert1: &NullCert, sys: &VectorizedSystem, tol: &Tolerance) -> Result<InitialSet> {
    cert1.check_cols(sys)?;
    let dims = sys.dims();
    let n_xx = dims.xx_len();
    let psi = cert1.psi();
    let psi_head = psi.subcols(0, n_xx);
    let psi_tail = psi.subcols(n_xx, sys.n_state() - n_xx);
    let vec_i = linalg::vec(Mat::<f64>::identity(dims.nx, dims.nx).as_ref());

    let target = -(psi_head * &vec_i);
    let gamma = psi_tail * sys.b0();
    let scale = frobenius(psi_tail) * frobenius(sys.b0());
    let sv = Spectral::with_scale(gamma.as_ref(), scale, tol)?;
    let w = sv.pinv_apply(target.as_mat()).col(0).to_owned();
    let residual = (&gamma * &w - &target).norm_l2();
    if residual > tol.residual_tol() * (1.0 + target.norm_l2()) {
        return Err(SlsError::Infeasible {
            what: "initial condition".into(),
            residual,
        });
    }
    Ok(InitialSet {
        w,
        h_lambda: sv.null_basis(),
    })
}

/// Result of a synthesis run. Trajectory vectors are indexed by step
/// `0..=T`, gains, values and certificates by step `1..=T` (entry `t - 1`).
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub response: SystemResponse,
    pub objective_value: f64,
    /// `||A~ x[T] + B~ u[T]||`.
    pub termination_residual: f64,
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub gains: Vec<DenseMatrix>,
    pub values: Vec<QuadForm>,
    /// Certificates from constrained backward steps; `None` where the step
    /// was skipped by an allowance.
    pub certificates: Vec<Option<NullCert>>,
    pub initial_set: InitialSet,
}

/// Full dynamic program.
pub fn solve<M: CostToGoModel + ?Sized>(
    plant: &Plant,
    objective: &M,
    horizon: usize,
    tol: &Tolerance,
) -> Result<Synthesis> {
    if horizon < 2 {
        return Err(SlsError::Domain(format!("horizon must be at least 2, got {horizon}")));
    }
    synthesize(plant, objective, horizon, 1, tol)
}

/// Dynamic program that stops propagating certificates at `T_a` and uses
/// unconstrained gains for the earlier steps.
pub fn solve_approx<M: CostToGoModel + ?Sized>(
    plant: &Plant,
    objective: &M,
    horizon: usize,
    allowance: Allowance,
    tol: &Tolerance,
) -> Result<Synthesis> {
    if horizon < 2 {
        return Err(SlsError::Domain(format!("horizon must be at least 2, got {horizon}")));
    }
    if allowance.get() > horizon {
        return Err(SlsError::Domain(format!(
            "allowance {} exceeds horizon {horizon}",
            allowance.get()
        )));
    }
    synthesize(plant, objective, horizon, allowance.get(), tol)
}

fn synthesize<M: CostToGoModel + ?Sized>(
    plant: &Plant,
    objective: &M,
    horizon: usize,
    t_a: usize,
    tol: &Tolerance,
) -> Result<Synthesis> {
    let sys = build_vectorized(plant);
    let (n, m) = (sys.n_state(), sys.n_input());

    let mut gains = vec![Mat::zeros(m, n); horizon];
    let mut values = vec![QuadForm::zeros(n); horizon];
    let mut certificates: Vec<Option<NullCert>> = vec![None; horizon];

    let mut cert = NullCert::identity(n);
    let mut value = objective.terminal_value(&sys);
    for tau in (t_a..=horizon).rev() {
        let (adm, cert_tau) = backward_step_stable(&cert, &sys, tol)?;
        let step = objective.gain(&adm, &value, &sys, tol)?;
        gains[tau - 1] = step.gain;
        values[tau - 1] = step.value.clone();
        value = step.value;
        certificates[tau - 1] = Some(cert_tau.clone());
        cert = cert_tau;
    }
    // The constrained gain at T_a is kept; only earlier steps are free.
    let free = AdmissibleSet::unconstrained(m, n);
    for tau in (1..t_a).rev() {
        let step = objective.gain(&free, &value, &sys, tol)?;
        gains[tau - 1] = step.gain;
        values[tau - 1] = step.value.clone();
        value = step.value;
    }

    let initial_set = initial_step(&cert, &sys, tol)?;
    let u0 = objective.initial_control(&initial_set, &values[0], &sys, tol)?;

    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon + 1);
    states.push(Vector::zeros(n));
    let mut objective_value = objective.step_cost(states[0].as_ref(), u0.as_ref());
    let mut x = sys.initial_state(u0.as_ref());
    inputs.push(u0);
    for gain in &gains {
        let u = gain * &x;
        objective_value += objective.step_cost(x.as_ref(), u.as_ref());
        let next = sys.step(x.as_ref(), u.as_ref());
        states.push(x);
        inputs.push(u);
        x = next;
    }
    let termination_residual = x.norm_l2();
    if !termination_residual.is_finite() || !objective_value.is_finite() {
        return Err(SlsError::Numerical("rollout produced non-finite values".into()));
    }

    let response = SystemResponse::from_trajectory(sys.dims(), &states, &inputs)?;
    Ok(Synthesis {
        response,
        objective_value,
        termination_residual,
        states,
        inputs,
        gains,
        values,
        certificates,
        initial_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::stochastic_chain;
    use faer::mat;

    fn scalar_sys() -> VectorizedSystem {
        let plant = Plant::new(mat![[0.5]], mat![[1.0]], mat![[1.0]]).unwrap();
        build_vectorized(&plant)
    }

    #[test]
    fn stable_step_scalar_example() {
        let sys = scalar_sys();
        let tol = Tolerance::default();
        let (adm, cert) = backward_step_stable(&NullCert::identity(3), &sys, &tol).unwrap();
        let expect_hx = mat![[0.0, -0.25, -0.25]];
        assert!((&adm.h_x - &expect_hx).norm_l2() < 1e-14);
        assert_eq!(adm.free_dim(), 0);

        let raw = mat![
            [0.5, 1.0, 0.0],
            [0.0, 0.25, -0.25],
            [0.0, -0.25, 0.25],
            [0.0, -1.0, 1.0],
        ];
        let expect = normalize_nonzero_rows(raw.as_ref(), &tol);
        assert!((cert.psi() - &expect).norm_l2() < 1e-14);
    }

    #[test]
    fn empty_cert_gives_free_inputs() {
        let sys = scalar_sys();
        let tol = Tolerance::default();
        let (adm, _) = backward_step_stable(&NullCert::empty(3), &sys, &tol).unwrap();
        assert_eq!(adm.h_x.norm_l2(), 0.0);
        assert_eq!(adm.free_dim(), 1);
        assert!((adm.h_lambda[(0, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pinv_step_matches_on_scalar_plant() {
        let sys = scalar_sys();
        let tol = Tolerance::default();
        let (a1, c1) = backward_step_stable(&NullCert::identity(3), &sys, &tol).unwrap();
        let (a2, c2) = backward_step_pinv(&NullCert::identity(3), &sys, &tol).unwrap();
        assert!((&a1.h_x - &a2.h_x).norm_l2() < 1e-12);
        assert_eq!(a2.free_dim(), 0);
        let n1 = null_space_basis(c1.psi(), &tol).unwrap();
        let n2 = null_space_basis(c2.psi(), &tol).unwrap();
        assert!(linalg::subspace_distance(n1.as_ref(), n2.as_ref()) < 1e-10);
    }

    #[test]
    fn initial_step_cases() {
        let sys = scalar_sys();
        let tol = Tolerance::default();
        let free = initial_step(&NullCert::empty(3), &sys, &tol).unwrap();
        assert_eq!(free.w.norm_l2(), 0.0);
        assert_eq!(free.h_lambda.ncols(), 1);

        // Gamma = psi2 * b + psi3 * c = 0.2 + 0.4.
        let psi = mat![[0.3, 0.2, 0.4]];
        let init = initial_step(&NullCert::new(&psi, &tol), &sys, &tol).unwrap();
        let s = psi.row(0).norm_l2();
        let expect = -(0.3 / s) / (0.6 / s);
        assert!((init.w[0] - expect).abs() < 1e-14);
        assert_eq!(init.h_lambda.ncols(), 0);

        let bad = mat![[1.0, 0.0, 0.0]];
        match initial_step(&NullCert::new(&bad, &tol), &sys, &tol) {
            Err(SlsError::Infeasible { residual, .. }) => assert!((residual - 1.0).abs() < 1e-14),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn allowance_bounds() {
        assert!(Allowance::new(0, 5).is_err());
        assert!(Allowance::new(6, 5).is_err());
        assert_eq!(Allowance::new(5, 5).unwrap().get(), 5);
    }

    #[test]
    fn horizon_must_be_at_least_two() {
        let plant = stochastic_chain(2, 2, 2, 0.3).unwrap();
        let w = crate::objectives::H2Weights::identity(plant.dims());
        assert!(matches!(
            solve(&plant, &w, 1, &Tolerance::default()),
            Err(SlsError::Domain(_))
        ));
    }

    #[test]
    fn wrong_cert_width_is_rejected() {
        let sys = scalar_sys();
        let tol = Tolerance::default();
        assert!(backward_step_stable(&NullCert::identity(2), &sys, &tol).is_err());
        assert!(initial_step(&NullCert::identity(4), &sys, &tol).is_err());
    }
}
