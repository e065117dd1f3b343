//! The synthesis problem as one equality-constrained quadratic program,
//! solved through its KKT system.
//!
//! Decision variables are stacked as `[u0, u1, x2, u2, ..., xT, uT]`. The
//! first state is affine in `u0` (`x1 = [vec(I); B~0 u0]`) and is substituted
//! out, as is `x0 = 0`.

use faer::linalg::solvers::Solve;
use faer::{Col, Mat, MatRef, Side};

use crate::error::{Result, SlsError};
use crate::linalg::{self, frobenius, DenseMatrix, Tolerance, Vector};
use crate::model::{build_vectorized, Plant, SystemResponse, VectorizedSystem};
use crate::objectives::CostToGoModel;

/// Offsets of each trajectory segment inside the stacked variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VariableLayout {
    pub n_state: usize,
    pub n_input: usize,
    pub horizon: usize,
}

impl VariableLayout {
    pub fn len(&self) -> usize {
        self.horizon * self.n_state + (self.horizon + 1) * self.n_input - self.n_state
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_offset(&self, tau: usize) -> usize {
        match tau {
            0 => 0,
            1 => self.n_input,
            _ => self.state_offset(tau) + self.n_state,
        }
    }

    /// Offset of `x[tau]`, defined for `tau >= 2`.
    pub fn state_offset(&self, tau: usize) -> usize {
        assert!(tau >= 2 && tau <= self.horizon, "x[{tau}] is not a decision variable");
        2 * self.n_input + (tau - 2) * (self.n_state + self.n_input)
    }
}

/// `minimize 0.5 z^T H z + f^T z + constant` subject to `E z = e`.
#[derive(Clone, Debug)]
pub struct StackedProgram {
    pub hessian: DenseMatrix,
    pub linear: Vector,
    pub constant: f64,
    pub eq_matrix: DenseMatrix,
    pub eq_rhs: Vector,
    pub layout: VariableLayout,
    sys: VectorizedSystem,
}

impl StackedProgram {
    pub fn system(&self) -> &VectorizedSystem {
        &self.sys
    }

    pub fn objective(&self, z: faer::ColRef<'_, f64>) -> f64 {
        let hz = &self.hessian * z;
        0.5 * dot(z, hz.as_ref()) + dot(self.linear.as_ref(), z) + self.constant
    }

    /// `||E z - e||`.
    pub fn constraint_residual(&self, z: faer::ColRef<'_, f64>) -> f64 {
        (&self.eq_matrix * z - &self.eq_rhs).norm_l2()
    }

    /// Stacks a trajectory (`states[0..=T]`, `inputs[0..=T]`) into `z`.
    pub fn pack(&self, states: &[Vector], inputs: &[Vector]) -> Result<Vector> {
        let l = self.layout;
        if states.len() != l.horizon + 1 || inputs.len() != l.horizon + 1 {
            return Err(SlsError::dim(format!(
                "trajectory must have {} entries",
                l.horizon + 1
            )));
        }
        let mut z = Col::zeros(l.len());
        for (tau, u) in inputs.iter().enumerate() {
            z.subrows_mut(l.input_offset(tau), l.n_input).copy_from(u);
        }
        for (tau, x) in states.iter().enumerate().skip(2) {
            z.subrows_mut(l.state_offset(tau), l.n_state).copy_from(x);
        }
        Ok(z)
    }

    /// Recovers the full trajectory from `z`, reinstating `x0` and `x1`.
    pub fn unpack(&self, z: faer::ColRef<'_, f64>) -> (Vec<Vector>, Vec<Vector>) {
        let l = self.layout;
        let inputs: Vec<Vector> = (0..=l.horizon)
            .map(|tau| z.subrows(l.input_offset(tau), l.n_input).to_owned())
            .collect();
        let mut states = vec![Col::zeros(l.n_state), self.sys.initial_state(inputs[0].as_ref())];
        for tau in 2..=l.horizon {
            states.push(z.subrows(l.state_offset(tau), l.n_state).to_owned());
        }
        (states, inputs)
    }
}

fn dot(a: faer::ColRef<'_, f64>, b: faer::ColRef<'_, f64>) -> f64 {
    (0..a.nrows()).map(|i| a[i] * b[i]).sum()
}

/// `sum_i C_i z[off_i ..] + constant`.
struct Affine {
    terms: Vec<(usize, DenseMatrix)>,
    constant: Vector,
}

impl Affine {
    fn variable(offset: usize, n: usize) -> Self {
        Self {
            terms: vec![(offset, Mat::identity(n, n))],
            constant: Col::zeros(n),
        }
    }

    fn scaled(&self, m: MatRef<'_, f64>) -> Self {
        Self {
            terms: self.terms.iter().map(|(o, c)| (*o, m * c)).collect(),
            constant: m * &self.constant,
        }
    }

    fn sum(parts: &[Affine], rows: usize) -> Self {
        let mut out = Self {
            terms: Vec::new(),
            constant: Col::zeros(rows),
        };
        for p in parts {
            out.terms.extend(p.terms.iter().cloned());
            out.constant += &p.constant;
        }
        out
    }
}

fn state_affine(tau: usize, layout: &VariableLayout, sys: &VectorizedSystem) -> Affine {
    let n = layout.n_state;
    match tau {
        0 => Affine {
            terms: Vec::new(),
            constant: Col::zeros(n),
        },
        1 => {
            let n_xx = sys.dims().xx_len();
            let mut d = Mat::zeros(n, layout.n_input);
            d.submatrix_mut(n_xx, 0, n - n_xx, layout.n_input).copy_from(sys.b0());
            let mut c0 = Col::zeros(n);
            for i in 0..sys.dims().nx {
                c0[i * sys.dims().nx + i] = 1.0;
            }
            Affine {
                terms: vec![(layout.input_offset(0), d)],
                constant: c0,
            }
        }
        _ => Affine::variable(layout.state_offset(tau), n),
    }
}

fn input_affine(tau: usize, layout: &VariableLayout) -> Affine {
    Affine::variable(layout.input_offset(tau), layout.n_input)
}

/// Appends the rows `expr = 0`.
fn push_constraint(rows: &mut Vec<(Affine, usize)>, expr: Affine) {
    let m = expr.constant.nrows();
    rows.push((expr, m));
}

/// Builds the stacked program for horizon `T`.
pub fn assemble<M: CostToGoModel + ?Sized>(
    plant: &Plant,
    objective: &M,
    horizon: usize,
) -> Result<StackedProgram> {
    if horizon < 2 {
        return Err(SlsError::Domain(format!("horizon must be at least 2, got {horizon}")));
    }
    let sys = build_vectorized(plant);
    let layout = VariableLayout {
        n_state: sys.n_state(),
        n_input: sys.n_input(),
        horizon,
    };
    let (n, m) = (layout.n_state, layout.n_input);
    let big_n = layout.len();

    let weights = objective.stage_weights();
    if weights.xx.shape() != (n, n) || weights.xu.shape() != (n, m) || weights.uu.shape() != (m, m)
    {
        return Err(SlsError::dim("stage weights do not match the system".to_string()));
    }
    let mut joint = Mat::zeros(n + m, n + m);
    joint.submatrix_mut(0, 0, n, n).copy_from(&weights.xx);
    joint.submatrix_mut(0, n, n, m).copy_from(&weights.xu);
    joint.submatrix_mut(n, 0, m, n).copy_from(weights.xu.transpose());
    joint.submatrix_mut(n, n, m, m).copy_from(&weights.uu);

    let mut hessian = Mat::zeros(big_n, big_n);
    let mut linear = Col::zeros(big_n);
    let mut constant = 0.0;
    for tau in 0..=horizon {
        let x = state_affine(tau, &layout, &sys);
        let u = input_affine(tau, &layout);
        let lift = |a: &Affine, top: usize, rows: usize| -> Affine {
            let mut e = Mat::zeros(n + m, rows);
            e.submatrix_mut(top, 0, rows, rows)
                .copy_from(Mat::<f64>::identity(rows, rows));
            a.scaled(e.as_ref())
        };
        let y = Affine::sum(&[lift(&x, 0, n), lift(&u, n, m)], n + m);
        let wc = &joint * &y.constant;
        constant += dot(y.constant.as_ref(), wc.as_ref());
        for (oi, ci) in &y.terms {
            let ci_t_w = ci.transpose() * &joint;
            let mut seg = linear.subrows_mut(*oi, ci.ncols());
            seg += faer::Scale(2.0) * (&ci_t_w * &y.constant);
            for (oj, cj) in &y.terms {
                let block = faer::Scale(2.0) * (&ci_t_w * cj);
                let mut dst = hessian.submatrix_mut(*oi, *oj, ci.ncols(), cj.ncols());
                dst += &block;
            }
        }
    }
    let hessian = linalg::symmetrize(hessian.as_ref());

    let mut rows: Vec<(Affine, usize)> = Vec::new();
    for tau in 1..horizon {
        let next = state_affine(tau + 1, &layout, &sys);
        let ax = state_affine(tau, &layout, &sys).scaled((-sys.a_tilde().to_owned()).as_ref());
        let bu = input_affine(tau, &layout).scaled((-sys.b_tilde().to_owned()).as_ref());
        push_constraint(&mut rows, Affine::sum(&[next, ax, bu], n));
    }
    for tau in 1..=horizon {
        let eq = state_affine(tau, &layout, &sys).scaled(sys.a_eq());
        push_constraint(&mut rows, eq);
    }
    let ax = state_affine(horizon, &layout, &sys).scaled(sys.a_tilde());
    let bu = input_affine(horizon, &layout).scaled(sys.b_tilde());
    push_constraint(&mut rows, Affine::sum(&[ax, bu], n));

    let big_m: usize = rows.iter().map(|(_, r)| r).sum();
    let mut eq_matrix = Mat::zeros(big_m, big_n);
    let mut eq_rhs = Col::zeros(big_m);
    let mut r0 = 0;
    for (expr, r) in &rows {
        for (o, c) in &expr.terms {
            let mut dst = eq_matrix.submatrix_mut(r0, *o, *r, c.ncols());
            dst += c;
        }
        eq_rhs.subrows_mut(r0, *r).copy_from(-&expr.constant);
        r0 += r;
    }

    Ok(StackedProgram {
        hessian,
        linear,
        constant,
        eq_matrix,
        eq_rhs,
        layout,
        sys,
    })
}

/// Solution of a stacked program.
#[derive(Clone, Debug)]
pub struct QpSolution {
    pub response: SystemResponse,
    pub objective_value: f64,
    pub z: Vector,
    pub multipliers: Vector,
    /// Rows of `E` kept after redundancy elimination.
    pub kept_rows: Vec<usize>,
}

/// Indices of a maximal linearly independent subset of the rows of `e`,
/// chosen by column-pivoted QR of `e^T`.
fn independent_rows(e: MatRef<'_, f64>, tol: &Tolerance) -> Vec<usize> {
    if e.nrows() == 0 || e.ncols() == 0 {
        return Vec::new();
    }
    let qr = e.transpose().col_piv_qr();
    let r = qr.R();
    let k = r.nrows().min(r.ncols());
    let lead = r[(0, 0)].abs();
    let rank = (0..k)
        .take_while(|&i| r[(i, i)].abs() > tol.rank_tol() * lead)
        .count();
    let (fwd, _) = qr.P().arrays();
    let mut kept: Vec<usize> = fwd[..rank].to_vec();
    kept.sort_unstable();
    kept
}

/// Smallest and largest eigenvalue magnitudes of the block-diagonal factor.
fn pivot_magnitudes(diag: &[f64], subdiag: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    let mut i = 0;
    while i < diag.len() {
        if i + 1 < diag.len() && subdiag[i] != 0.0 {
            let (a, b, d) = (diag[i], subdiag[i], diag[i + 1]);
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            for ev in [mean - rad, mean + rad] {
                lo = lo.min(ev.abs());
                hi = hi.max(ev.abs());
            }
            i += 2;
        } else {
            lo = lo.min(diag[i].abs());
            hi = hi.max(diag[i].abs());
            i += 1;
        }
    }
    (lo, hi)
}

/// Solves `[H E^T; E 0] [z; nu] = [-f; e]` with a symmetric indefinite
/// factorization after dropping redundant equality rows.
pub fn solve_kkt<M: CostToGoModel + ?Sized>(
    prog: &StackedProgram,
    objective: &M,
    tol: &Tolerance,
) -> Result<QpSolution> {
    let z_nu = solve_saddle_point(
        prog.hessian.as_ref(),
        prog.linear.as_ref(),
        prog.eq_matrix.as_ref(),
        prog.eq_rhs.as_ref(),
        tol,
    )?;
    let (states, inputs) = prog.unpack(z_nu.z.as_ref());
    let response = SystemResponse::from_trajectory(prog.sys.dims(), &states, &inputs)?;
    let objective_value = states
        .iter()
        .zip(&inputs)
        .map(|(x, u)| objective.step_cost(x.as_ref(), u.as_ref()))
        .sum();
    Ok(QpSolution {
        response,
        objective_value,
        z: z_nu.z,
        multipliers: z_nu.multipliers,
        kept_rows: z_nu.kept_rows,
    })
}

/// Primal and dual solution of an equality-constrained QP.
#[derive(Clone, Debug)]
pub struct SaddlePoint {
    pub z: Vector,
    /// Multipliers for the kept rows, in `kept_rows` order.
    pub multipliers: Vector,
    pub kept_rows: Vec<usize>,
}

/// Minimizes `0.5 z^T H z + f^T z` subject to `E z = e`.
pub fn solve_saddle_point(
    h: MatRef<'_, f64>,
    f: faer::ColRef<'_, f64>,
    e: MatRef<'_, f64>,
    rhs: faer::ColRef<'_, f64>,
    tol: &Tolerance,
) -> Result<SaddlePoint> {
    let n = h.nrows();
    if h.ncols() != n || f.nrows() != n || e.ncols() != n || rhs.nrows() != e.nrows() {
        return Err(SlsError::dim(format!(
            "KKT blocks disagree: H {:?}, f {}, E {:?}, e {}",
            h.shape(),
            f.nrows(),
            e.shape(),
            rhs.nrows()
        )));
    }
    let kept = independent_rows(e, tol);
    let r = kept.len();
    let e_kept = Mat::from_fn(r, n, |i, j| e[(kept[i], j)]);
    let rhs_kept = Col::from_fn(r, |i| rhs[kept[i]]);

    let mut kkt = Mat::zeros(n + r, n + r);
    kkt.submatrix_mut(0, 0, n, n).copy_from(h);
    kkt.submatrix_mut(n, 0, r, n).copy_from(&e_kept);
    kkt.submatrix_mut(0, n, n, r).copy_from(e_kept.transpose());
    let mut b = Col::zeros(n + r);
    b.subrows_mut(0, n).copy_from(-f.to_owned());
    b.subrows_mut(n, r).copy_from(&rhs_kept);

    let fact = kkt.lblt(Side::Lower);
    let diag: Vec<f64> = {
        let d = fact.B_diag().column_vector();
        (0..d.nrows()).map(|i| d[i]).collect()
    };
    let subdiag: Vec<f64> = {
        let s = fact.B_subdiag().column_vector();
        (0..s.nrows()).map(|i| s[i]).collect()
    };
    let (lo, hi) = pivot_magnitudes(&diag, &subdiag);
    if n + r > 0 && !(lo > tol.rank_tol() * hi) {
        return Err(SlsError::Unbounded(format!(
            "KKT matrix is singular (pivot ratio {:.3e})",
            if hi > 0.0 { lo / hi } else { 0.0 }
        )));
    }
    let sol = fact.solve(&b);
    if !linalg::all_finite(sol.as_mat()) {
        return Err(SlsError::Numerical("KKT solve produced non-finite values".into()));
    }
    let z = sol.subrows(0, n).to_owned();
    let multipliers = sol.subrows(n, r).to_owned();

    let residual = (e * &z - rhs).norm_l2();
    let scale = 1.0 + rhs.norm_l2() + frobenius(e) * z.norm_l2();
    if residual > tol.residual_tol() * scale {
        return Err(SlsError::Infeasible {
            what: "equality constraints".into(),
            residual,
        });
    }
    Ok(SaddlePoint {
        z,
        multipliers,
        kept_rows: kept,
    })
}
