//! Quadratic cost-to-go models.
//!
//! Both objectives keep the value function as a symmetric quadratic form
//! `V(x) = x^T P x`. Per-step costs are `||F x + G u||^2` (H2) and
//! `x^T Q x + u^T R u` (LQ).

use faer::{ColRef, Mat, MatRef};
#[cfg(test)]
use faer::Col;

use crate::dp::{AdmissibleSet, InitialSet};
use crate::error::{Result, SlsError};
use crate::linalg::{self, congruence, symmetrize, DenseMatrix, Spectral, Tolerance, Vector};
use crate::model::{Dims, VectorizedSystem};

/// Symmetric matrix parameterizing `x -> x^T P x`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadForm(DenseMatrix);

impl QuadForm {
    /// Stores the symmetric part of `p`.
    pub fn new(p: MatRef<'_, f64>) -> Self {
        Self(symmetrize(p))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Mat::zeros(n, n))
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.0.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn eval(&self, x: ColRef<'_, f64>) -> f64 {
        dot(x, (&self.0 * x).as_ref())
    }

    /// Smallest eigenvalue of `P`.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        if self.dim() == 0 {
            return Ok(0.0);
        }
        let ev = self
            .0
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| SlsError::Numerical(format!("eigenvalues failed: {e:?}")))?;
        Ok(ev.into_iter().fold(f64::INFINITY, f64::min))
    }
}

pub(crate) fn dot(a: ColRef<'_, f64>, b: ColRef<'_, f64>) -> f64 {
    (0..a.nrows()).map(|i| a[i] * b[i]).sum()
}

/// Gain `u = K x` for one step together with the value at that step.
#[derive(Clone, Debug)]
pub struct GainAndValue {
    pub gain: DenseMatrix,
    pub value: QuadForm,
}

/// Joint weight of a per-step cost
/// `h(x, u) = x^T W_xx x + 2 x^T W_xu u + u^T W_uu u`.
#[derive(Clone, Debug)]
pub struct StageWeights {
    pub xx: DenseMatrix,
    pub xu: DenseMatrix,
    pub uu: DenseMatrix,
}

/// Everything the dynamic program needs from an objective.
pub trait CostToGoModel {
    /// Value beyond the horizon.
    fn terminal_value(&self, sys: &VectorizedSystem) -> QuadForm {
        QuadForm::zeros(sys.n_state())
    }

    /// Optimal gain over the admissible set and the resulting value.
    fn gain(
        &self,
        adm: &AdmissibleSet,
        next: &QuadForm,
        sys: &VectorizedSystem,
        tol: &Tolerance,
    ) -> Result<GainAndValue>;

    /// Optimal `u[0]` over the initial set, given the value at step 1.
    fn initial_control(
        &self,
        init: &InitialSet,
        v1: &QuadForm,
        sys: &VectorizedSystem,
        tol: &Tolerance,
    ) -> Result<Vector>;

    fn step_cost(&self, x: ColRef<'_, f64>, u: ColRef<'_, f64>) -> f64;

    fn stage_weights(&self) -> StageWeights;
}

/// `||F x + G u||^2` weights.
#[derive(Clone, Debug)]
pub struct H2Weights {
    f: DenseMatrix,
    g: DenseMatrix,
}

impl H2Weights {
    pub fn new(f: DenseMatrix, g: DenseMatrix, dims: Dims) -> Result<Self> {
        if f.nrows() == 0 || f.nrows() != g.nrows() {
            return Err(SlsError::dim(format!(
                "F and G must share a positive row count, got {} and {}",
                f.nrows(),
                g.nrows()
            )));
        }
        if f.ncols() != dims.state_len() || g.ncols() != dims.input_len() {
            return Err(SlsError::dim(format!(
                "F must have {} columns and G {}, got {} and {}",
                dims.state_len(),
                dims.input_len(),
                f.ncols(),
                g.ncols()
            )));
        }
        if !linalg::all_finite(f.as_ref()) || !linalg::all_finite(g.as_ref()) {
            return Err(SlsError::Domain("H2 weights must be finite".into()));
        }
        Ok(Self { f, g })
    }

    /// `F = [I; 0]`, `G = [0; I]`: penalizes every response entry equally.
    pub fn identity(dims: Dims) -> Self {
        let (n, m) = (dims.state_len(), dims.input_len());
        let f = Mat::from_fn(n + m, n, |i, j| if i == j { 1.0 } else { 0.0 });
        let g = Mat::from_fn(n + m, m, |i, j| if i == n + j { 1.0 } else { 0.0 });
        Self { f, g }
    }

    pub fn f(&self) -> MatRef<'_, f64> {
        self.f.as_ref()
    }

    pub fn g(&self) -> MatRef<'_, f64> {
        self.g.as_ref()
    }
}

/// `x^T Q x + u^T R u` weights.
#[derive(Clone, Debug)]
pub struct LQWeights {
    q: DenseMatrix,
    r: DenseMatrix,
}

impl LQWeights {
    pub fn new(q: DenseMatrix, r: DenseMatrix, dims: Dims) -> Result<Self> {
        let (n, m) = (dims.state_len(), dims.input_len());
        if q.shape() != (n, n) || r.shape() != (m, m) {
            return Err(SlsError::dim(format!(
                "Q must be {n}x{n} and R {m}x{m}, got {:?} and {:?}",
                q.shape(),
                r.shape()
            )));
        }
        for (name, w) in [("Q", &q), ("R", &r)] {
            if !linalg::all_finite(w.as_ref()) {
                return Err(SlsError::Domain(format!("{name} must be finite")));
            }
            let asym = (w - w.transpose()).norm_l2();
            if asym > 1e-10 * (1.0 + w.norm_l2()) {
                return Err(SlsError::Domain(format!(
                    "{name} is not symmetric (asymmetry {asym:.3e})"
                )));
            }
        }
        let q = symmetrize(q.as_ref());
        let r = symmetrize(r.as_ref());
        if QuadForm(q.clone()).min_eigenvalue()? < -1e-8 {
            return Err(SlsError::Domain("Q must be positive semidefinite".into()));
        }
        if r.llt(faer::Side::Lower).is_err() {
            return Err(SlsError::Domain("R must be positive definite".into()));
        }
        Ok(Self { q, r })
    }

    pub fn identity(dims: Dims) -> Self {
        let (n, m) = (dims.state_len(), dims.input_len());
        Self {
            q: Mat::identity(n, n),
            r: Mat::identity(m, m),
        }
    }

    pub fn q(&self) -> MatRef<'_, f64> {
        self.q.as_ref()
    }

    pub fn r(&self) -> MatRef<'_, f64> {
        self.r.as_ref()
    }
}

/// Solves `min_lambda` of a quadratic in `lambda` given its Hessian and
/// gradient at zero, picking the minimum-norm minimizer.
fn min_norm_stationary(
    hess: MatRef<'_, f64>,
    grad: MatRef<'_, f64>,
    scale: f64,
    tol: &Tolerance,
) -> Result<DenseMatrix> {
    let sv = Spectral::with_scale(hess, scale, tol)?;
    Ok(sv.pinv_apply((-grad.to_owned()).as_ref()))
}

/// H2 gain: `K = H_x + H_lambda L` with
/// `L = -pinv(G_l^T G_l + B_l^T P B_l) (G_l^T F_x + B_l^T P A_x)`.
pub fn h2_gain(
    adm: &AdmissibleSet,
    p_next: &QuadForm,
    w: &H2Weights,
    sys: &VectorizedSystem,
    tol: &Tolerance,
) -> Result<GainAndValue> {
    let (a, b) = (sys.a_tilde(), sys.b_tilde());
    let p = p_next.matrix();
    let gain = if adm.free_dim() == 0 {
        adm.h_x.clone()
    } else {
        let a_x = a + b * &adm.h_x;
        let b_l = b * &adm.h_lambda;
        let f_x = w.f() + w.g() * &adm.h_x;
        let g_l = w.g() * &adm.h_lambda;
        let p_bl = p * &b_l;
        let inner = g_l.transpose() * &g_l + b_l.transpose() * &p_bl;
        let rhs = g_l.transpose() * &f_x + p_bl.transpose() * &a_x;
        let scale = w.g().squared_norm_l2() + p.norm_l2() * b.squared_norm_l2();
        let l = min_norm_stationary(inner.as_ref(), rhs.as_ref(), scale, tol)?;
        &adm.h_x + &adm.h_lambda * &l
    };
    let cost = w.f() + w.g() * &gain;
    let closed = a + b * &gain;
    let value = cost.transpose() * &cost + congruence(closed.as_ref(), p);
    Ok(GainAndValue {
        gain,
        value: QuadForm::new(value.as_ref()),
    })
}

/// Minimizes `u^T W_uu u + x1^T V1 x1` over `u = w + H_lambda lambda`, with
/// `x1 = [vec(I); B~0 u]`.
fn initial_control_with(
    init: &InitialSet,
    v1: &QuadForm,
    w_uu: MatRef<'_, f64>,
    sys: &VectorizedSystem,
    tol: &Tolerance,
) -> Result<Vector> {
    if init.h_lambda.ncols() == 0 {
        return Ok(init.w.clone());
    }
    let n_xx = sys.dims().xx_len();
    let n_rest = sys.n_state() - n_xx;
    let p = v1.matrix();
    let p22 = p.submatrix(n_xx, n_xx, n_rest, n_rest);
    let p21 = p.submatrix(n_xx, 0, n_rest, n_xx);
    let b0 = sys.b0();
    let vec_i = linalg::vec(Mat::<f64>::identity(sys.dims().nx, sys.dims().nx).as_ref());

    let hess = w_uu + congruence(b0, p22);
    let lin = b0.transpose() * (p21 * &vec_i);
    let hl = init.h_lambda.as_ref();
    let m = congruence(hl, hess.as_ref());
    let grad = hl.transpose() * (&hess * &init.w + &lin);
    let scale = w_uu.norm_l2() + p22.norm_l2() * b0.squared_norm_l2();
    let lambda = min_norm_stationary(m.as_ref(), grad.as_mat(), scale, tol)?;
    Ok(&init.w + hl * lambda.col(0))
}

pub fn h2_initial_control(
    init: &InitialSet,
    p1: &QuadForm,
    w: &H2Weights,
    sys: &VectorizedSystem,
    tol: &Tolerance,
) -> Result<Vector> {
    let gtg = w.g().transpose() * w.g();
    initial_control_with(init, p1, gtg.as_ref(), sys, tol)
}

/// Value at the last step with nothing beyond it:
/// `Q + Qt^T R Qt`, `Qt = (I - H_l pinv(H_l^T R H_l) H_l^T R) H_x`.
pub fn lq_terminal(adm: &AdmissibleSet, w: &LQWeights, tol: &Tolerance) -> Result<QuadForm> {
    let r = w.r();
    let q_tilde = if adm.free_dim() == 0 {
        adm.h_x.clone()
    } else {
        let hl = adm.h_lambda.as_ref();
        let inner = congruence(hl, r);
        let rhs = hl.transpose() * (r * &adm.h_x);
        let lambda_gain = min_norm_stationary(inner.as_ref(), rhs.as_ref(), r.norm_l2(), tol)?;
        &adm.h_x + hl * &lambda_gain
    };
    let v = w.q() + congruence(q_tilde.as_ref(), r);
    Ok(QuadForm::new(v.as_ref()))
}

/// LQ gain: `K = H_x - H_lambda pinv(L_d) L_n`.
pub fn lq_gain(
    adm: &AdmissibleSet,
    v_next: &QuadForm,
    w: &LQWeights,
    sys: &VectorizedSystem,
    tol: &Tolerance,
) -> Result<GainAndValue> {
    let (a, b, r) = (sys.a_tilde(), sys.b_tilde(), w.r());
    let v = v_next.matrix();
    let gain = if adm.free_dim() == 0 {
        adm.h_x.clone()
    } else {
        let hl = adm.h_lambda.as_ref();
        let b_l = b * hl;
        let v_bl = v * &b_l;
        let l_d = congruence(hl, r) + b_l.transpose() * &v_bl;
        let l_n = hl.transpose() * (r * &adm.h_x) + v_bl.transpose() * (a + b * &adm.h_x);
        let scale = r.norm_l2() + v.norm_l2() * b.squared_norm_l2();
        let l = min_norm_stationary(l_d.as_ref(), l_n.as_ref(), scale, tol)?;
        &adm.h_x + hl * &l
    };
    let closed = a + b * &gain;
    let value = w.q() + congruence(gain.as_ref(), r) + congruence(closed.as_ref(), v);
    Ok(GainAndValue {
        gain,
        value: QuadForm::new(value.as_ref()),
    })
}

pub fn lq_initial_control(
    init: &InitialSet,
    v1: &QuadForm,
    w: &LQWeights,
    sys: &VectorizedSystem,
    tol: &Tolerance,
) -> Result<Vector> {
    initial_control_with(init, v1, w.r(), sys, tol)
}

pub fn step_cost_h2(w: &H2Weights, x: ColRef<'_, f64>, u: ColRef<'_, f64>) -> f64 {
    (w.f() * x + w.g() * u).squared_norm_l2()
}

pub fn step_cost_lq(w: &LQWeights, x: ColRef<'_, f64>, u: ColRef<'_, f64>) -> f64 {
    dot(x, (w.q() * x).as_ref()) + dot(u, (w.r() * u).as_ref())
}

impl CostToGoModel for H2Weights {
    fn gain(
        &self,
        adm: &AdmissibleSet,
        next: &QuadForm,
        sys: &VectorizedSystem,
        tol: &Tolerance,
    ) -> Result<GainAndValue> {
        h2_gain(adm, next, self, sys, tol)
    }

    fn initial_control(
        &self,
        init: &InitialSet,
        v1: &QuadForm,
        sys: &VectorizedSystem,
        tol: &Tolerance,
    ) -> Result<Vector> {
        h2_initial_control(init, v1, self, sys, tol)
    }

    fn step_cost(&self, x: ColRef<'_, f64>, u: ColRef<'_, f64>) -> f64 {
        step_cost_h2(self, x, u)
    }

    fn stage_weights(&self) -> StageWeights {
        let (f, g) = (self.f(), self.g());
        StageWeights {
            xx: symmetrize((f.transpose() * f).as_ref()),
            xu: f.transpose() * g,
            uu: symmetrize((g.transpose() * g).as_ref()),
        }
    }
}

impl CostToGoModel for LQWeights {
    fn gain(
        &self,
        adm: &AdmissibleSet,
        next: &QuadForm,
        sys: &VectorizedSystem,
        tol: &Tolerance,
    ) -> Result<GainAndValue> {
        lq_gain(adm, next, self, sys, tol)
    }

    fn initial_control(
        &self,
        init: &InitialSet,
        v1: &QuadForm,
        sys: &VectorizedSystem,
        tol: &Tolerance,
    ) -> Result<Vector> {
        lq_initial_control(init, v1, self, sys, tol)
    }

    fn step_cost(&self, x: ColRef<'_, f64>, u: ColRef<'_, f64>) -> f64 {
        step_cost_lq(self, x, u)
    }

    fn stage_weights(&self) -> StageWeights {
        StageWeights {
            xx: self.q.clone(),
            xu: Mat::zeros(self.q.nrows(), self.r.nrows()),
            uu: self.r.clone(),
        }
    }
}

/// Objective selector used by the CLI and the benchmarks.
#[derive(Clone, Debug)]
pub enum Objective {
    H2(H2Weights),
    Lq(LQWeights),
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::H2(_) => "h2",
            Objective::Lq(_) => "lq",
        }
    }

    fn model(&self) -> &dyn CostToGoModel {
        match self {
            Objective::H2(w) => w,
            Objective::Lq(w) => w,
        }
    }
}

impl CostToGoModel for Objective {
    fn gain(
        &self,
        adm: &AdmissibleSet,
        next: &QuadForm,
        sys: &VectorizedSystem,
        tol: &Tolerance,
    ) -> Result<GainAndValue> {
        self.model().gain(adm, next, sys, tol)
    }

    fn initial_control(
        &self,
        init: &InitialSet,
        v1: &QuadForm,
        sys: &VectorizedSystem,
        tol: &Tolerance,
    ) -> Result<Vector> {
        self.model().initial_control(init, v1, sys, tol)
    }

    fn step_cost(&self, x: ColRef<'_, f64>, u: ColRef<'_, f64>) -> f64 {
        self.model().step_cost(x, u)
    }

    fn stage_weights(&self) -> StageWeights {
        self.model().stage_weights()
    }
}
