//! Plants, FIR system responses and the vectorized reformulation.
//!
//! The controller-synthesis state at step `tau` is
//! `x[tau] = [vec(Phi_xx[tau]); vec(Phi_xy[tau]); vec(Phi_ux[tau])]` and the
//! input is `u[tau] = vec(Phi_uy[tau])`. The achievability conditions become
//! the linear recursion `x[tau + 1] = A~ x[tau] + B~ u[tau]`, the interior
//! equality `A~eq x[tau] = 0` and the initial pinning
//! `x[1] = [vec(I); B~0 u[0]]`.

use faer::prelude::*;
use faer::{ColRef, Mat, MatRef};

use crate::error::{Result, SlsError};
use crate::linalg::{self, kron, unvec, vec, vstack, DenseMatrix, Vector};

/// Linear time-invariant plant `x+ = A x + B u`, `y = C x` (no feedthrough).
#[derive(Clone, Debug, PartialEq)]
pub struct Plant {
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseMatrix,
}

impl Plant {
    pub fn new(a: DenseMatrix, b: DenseMatrix, c: DenseMatrix) -> Result<Self> {
        let nx = a.nrows();
        if nx == 0 || a.ncols() != nx {
            return Err(SlsError::dim(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != nx || b.ncols() == 0 {
            return Err(SlsError::dim(format!(
                "B must be {nx}xNu with Nu >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.ncols() != nx || c.nrows() == 0 {
            return Err(SlsError::dim(format!(
                "C must be Nyx{nx} with Ny >= 1, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c)] {
            if !linalg::all_finite(m.as_ref()) {
                return Err(SlsError::Domain(format!("{name} has a non-finite entry")));
            }
        }
        Ok(Self { a, b, c })
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn ny(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> MatRef<'_, f64> {
        self.a.as_ref()
    }

    pub fn b(&self) -> MatRef<'_, f64> {
        self.b.as_ref()
    }

    pub fn c(&self) -> MatRef<'_, f64> {
        self.c.as_ref()
    }

    pub fn dims(&self) -> Dims {
        Dims {
            nx: self.nx(),
            nu: self.nu(),
            ny: self.ny(),
        }
    }
}

/// Plant dimensions and the block layout of the vectorized state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
}

impl Dims {
    /// Length of `vec(Phi_xx)`; also the column where the certificate splits
    /// in the initial step.
    pub fn xx_len(&self) -> usize {
        self.nx * self.nx
    }

    pub fn xy_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn ux_len(&self) -> usize {
        self.nu * self.nx
    }

    pub fn state_len(&self) -> usize {
        self.xx_len() + self.xy_len() + self.ux_len()
    }

    pub fn input_len(&self) -> usize {
        self.nu * self.ny
    }
}

/// Tridiagonal row-stochastic chain with mixing rate `alpha`, actuated on
/// the first `nu` states and observed on the first `ny`.
pub fn stochastic_chain(nx: usize, nu: usize, ny: usize, alpha: f64) -> Result<Plant> {
    if nx == 0 || nu == 0 || ny == 0 {
        return Err(SlsError::dim("chain dimensions must be positive"));
    }
    if nu > nx || ny > nx {
        return Err(SlsError::dim(format!(
            "chain requires Nu <= Nx and Ny <= Nx, got Nx={nx}, Nu={nu}, Ny={ny}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SlsError::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let a = Mat::from_fn(nx, nx, |i, j| {
        if i == j {
            let neighbours = usize::from(i > 0) + usize::from(i + 1 < nx);
            1.0 - neighbours as f64 * alpha
        } else if i.abs_diff(j) == 1 {
            alpha
        } else {
            0.0
        }
    });
    let b = Mat::from_fn(nx, nu, |i, j| if i == j { 1.0 } else { 0.0 });
    let c = Mat::from_fn(ny, nx, |i, j| if i == j { 1.0 } else { 0.0 });
    Plant::new(a, b, c)
}

/// Matrices of the vectorized control problem.
#[derive(Clone, Debug)]
pub struct VectorizedSystem {
    dims: Dims,
    a_tilde: DenseMatrix,
    b_tilde: DenseMatrix,
    a_eq: DenseMatrix,
    b0: DenseMatrix,
}

impl VectorizedSystem {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n_state(&self) -> usize {
        self.dims.state_len()
    }

    pub fn n_input(&self) -> usize {
        self.dims.input_len()
    }

    pub fn a_tilde(&self) -> MatRef<'_, f64> {
        self.a_tilde.as_ref()
    }

    pub fn b_tilde(&self) -> MatRef<'_, f64> {
        self.b_tilde.as_ref()
    }

    pub fn a_eq(&self) -> MatRef<'_, f64> {
        self.a_eq.as_ref()
    }

    pub fn b0(&self) -> MatRef<'_, f64> {
        self.b0.as_ref()
    }

    /// `x[1] = [vec(I); B~0 u0]`.
    pub fn initial_state(&self, u0: ColRef<'_, f64>) -> Vector {
        let n_xx = self.dims.xx_len();
        let lower = &self.b0 * u0;
        let nx = self.dims.nx;
        Col::from_fn(self.n_state(), |k| {
            if k < n_xx {
                if k % nx == k / nx {
                    1.0
                } else {
                    0.0
                }
            } else {
                lower[k - n_xx]
            }
        })
    }

    /// `A~ x + B~ u`.
    pub fn step(&self, x: ColRef<'_, f64>, u: ColRef<'_, f64>) -> Vector {
        &self.a_tilde * x + &self.b_tilde * u
    }
}

pub fn build_vectorized(plant: &Plant) -> VectorizedSystem {
    let dims = plant.dims();
    let Dims { nx, nu, ny } = dims;
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let i_nx = Mat::<f64>::identity(nx, nx);
    let i_nu = Mat::<f64>::identity(nu, nu);
    let i_ny = Mat::<f64>::identity(ny, ny);

    let at_inx = kron(a.transpose(), i_nx.as_ref());
    let ct_inx = kron(c.transpose(), i_nx.as_ref());
    let iny_a = kron(i_ny.as_ref(), a);
    let at_inu = kron(a.transpose(), i_nu.as_ref());
    let iny_b = kron(i_ny.as_ref(), b);
    let ct_inu = kron(c.transpose(), i_nu.as_ref());
    let inx_a = kron(i_nx.as_ref(), a);
    let inx_b = kron(i_nx.as_ref(), b);

    let o_xx = dims.xx_len();
    let o_xy = o_xx;
    let o_ux = o_xy + dims.xy_len();
    let n = dims.state_len();

    let mut a_tilde = Mat::<f64>::zeros(n, n);
    a_tilde
        .as_mut()
        .submatrix_mut(0, 0, o_xx, o_xx)
        .copy_from(&at_inx);
    a_tilde
        .as_mut()
        .submatrix_mut(0, o_xy, o_xx, dims.xy_len())
        .copy_from(&ct_inx);
    a_tilde
        .as_mut()
        .submatrix_mut(o_xy, o_xy, dims.xy_len(), dims.xy_len())
        .copy_from(&iny_a);
    a_tilde
        .as_mut()
        .submatrix_mut(o_ux, o_ux, dims.ux_len(), dims.ux_len())
        .copy_from(&at_inu);

    let b0 = vstack(&[iny_b.as_ref(), ct_inu.as_ref()]).expect("conformal blocks");
    let mut b_tilde = Mat::<f64>::zeros(n, dims.input_len());
    b_tilde
        .as_mut()
        .submatrix_mut(o_xy, 0, b0.nrows(), b0.ncols())
        .copy_from(&b0);

    let mut a_eq = Mat::<f64>::zeros(o_xx, n);
    a_eq.as_mut()
        .submatrix_mut(0, 0, o_xx, o_xx)
        .copy_from(&(&inx_a - &at_inx));
    a_eq.as_mut()
        .submatrix_mut(0, o_xy, o_xx, dims.xy_len())
        .copy_from(&(-&ct_inx));
    a_eq.as_mut()
        .submatrix_mut(0, o_ux, o_xx, dims.ux_len())
        .copy_from(&inx_b);

    VectorizedSystem {
        dims,
        a_tilde,
        b_tilde,
        a_eq,
        b0,
    }
}

/// FIR spectral components `Phi_*[0..=T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemResponse {
    pub phi_xx: Vec<DenseMatrix>,
    pub phi_xy: Vec<DenseMatrix>,
    pub phi_ux: Vec<DenseMatrix>,
    pub phi_uy: Vec<DenseMatrix>,
}

impl SystemResponse {
    pub fn zeros(dims: Dims, horizon: usize) -> Self {
        let Dims { nx, nu, ny } = dims;
        let n = horizon + 1;
        Self {
            phi_xx: vec![Mat::zeros(nx, nx); n],
            phi_xy: vec![Mat::zeros(nx, ny); n],
            phi_ux: vec![Mat::zeros(nu, nx); n],
            phi_uy: vec![Mat::zeros(nu, ny); n],
        }
    }

    /// Rebuilds the response from a vectorized trajectory. `states[tau]` and
    /// `inputs[tau]` are indexed from 0 to T; `states[0]` must be zero.
    pub fn from_trajectory(dims: Dims, states: &[Vector], inputs: &[Vector]) -> Result<Self> {
        if states.len() != inputs.len() || states.is_empty() {
            return Err(SlsError::dim(format!(
                "trajectory has {} states but {} inputs",
                states.len(),
                inputs.len()
            )));
        }
        let Dims { nx, nu, ny } = dims;
        let (o_xy, o_ux) = (dims.xx_len(), dims.xx_len() + dims.xy_len());
        let mut resp = Self::zeros(dims, states.len() - 1);
        for (tau, (x, u)) in states.iter().zip(inputs).enumerate() {
            if x.nrows() != dims.state_len() || u.nrows() != dims.input_len() {
                return Err(SlsError::dim(format!(
                    "trajectory entry {tau} has wrong length"
                )));
            }
            let x = x.as_ref();
            resp.phi_xx[tau] = unvec(x.subrows(0, dims.xx_len()), nx, nx)?;
            resp.phi_xy[tau] = unvec(x.subrows(o_xy, dims.xy_len()), nx, ny)?;
            resp.phi_ux[tau] = unvec(x.subrows(o_ux, dims.ux_len()), nu, nx)?;
            resp.phi_uy[tau] = unvec(u.as_ref(), nu, ny)?;
        }
        Ok(resp)
    }

    pub fn horizon(&self) -> usize {
        self.phi_xx.len().saturating_sub(1)
    }

    /// Vectorized state at step `tau`.
    pub fn state(&self, tau: usize) -> Vector {
        let parts = [
            vec(self.phi_xx[tau].as_ref()),
            vec(self.phi_xy[tau].as_ref()),
            vec(self.phi_ux[tau].as_ref()),
        ];
        let n: usize = parts.iter().map(|p| p.nrows()).sum();
        let mut out = Col::zeros(n);
        let mut k = 0;
        for p in &parts {
            for i in 0..p.nrows() {
                out[k] = p[i];
                k += 1;
            }
        }
        out
    }

    pub fn input(&self, tau: usize) -> Vector {
        vec(self.phi_uy[tau].as_ref())
    }

    fn check_dims(&self, dims: Dims) -> Result<()> {
        let Dims { nx, nu, ny } = dims;
        let n = self.phi_xx.len();
        if n < 2 || self.phi_xy.len() != n || self.phi_ux.len() != n || self.phi_uy.len() != n {
            return Err(SlsError::dim(
                "response blocks must all have T + 1 >= 2 spectral components",
            ));
        }
        let ok = |ms: &[DenseMatrix], r: usize, c: usize| ms.iter().all(|m| m.shape() == (r, c));
        if !(ok(&self.phi_xx, nx, nx)
            && ok(&self.phi_xy, nx, ny)
            && ok(&self.phi_ux, nu, nx)
            && ok(&self.phi_uy, nu, ny))
        {
            return Err(SlsError::dim(format!(
                "response blocks do not match plant dimensions Nx={nx}, Nu={nu}, Ny={ny}"
            )));
        }
        Ok(())
    }
}

/// Frobenius-norm violations of every achievability condition.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    /// Index `k` holds the recursion residual at `tau = k + 1`, for `tau = 1..T-1`.
    pub dynamics: Vec<f64>,
    /// Index `k` holds the interior-equality residual at `tau = k + 1`, for `tau = 1..T`.
    pub transition: Vec<f64>,
    /// `Phi_xx[0]`, `Phi_xy[0]`, `Phi_ux[0]`, `Phi_xx[1] - I`,
    /// `Phi_xy[1] - B Phi_uy[0]`, `Phi_ux[1] - Phi_uy[0] C`.
    pub initial: [f64; 6],
    /// Norm of the step past the horizon, which must vanish.
    pub termination: f64,
}

pub const INITIAL_BLOCK_NAMES: [&str; 6] = [
    "phi_xx[0]",
    "phi_xy[0]",
    "phi_ux[0]",
    "phi_xx[1] - I",
    "phi_xy[1] - B phi_uy[0]",
    "phi_ux[1] - phi_uy[0] C",
];

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.worst().1
    }

    /// Name and value of the largest residual.
    pub fn worst(&self) -> (String, f64) {
        let mut best = ("termination".to_string(), self.termination);
        let mut consider = |name: String, v: f64| {
            if v > best.1 || v.is_nan() {
                best = (name, v);
            }
        };
        for (k, &v) in self.dynamics.iter().enumerate() {
            consider(format!("dynamics[tau={}]", k + 1), v);
        }
        for (k, &v) in self.transition.iter().enumerate() {
            consider(format!("transition[tau={}]", k + 1), v);
        }
        for (name, &v) in INITIAL_BLOCK_NAMES.iter().zip(&self.initial) {
            consider(format!("initial[{name}]"), v);
        }
        best
    }
}

struct StepResiduals {
    next_xx: DenseMatrix,
    next_xy: DenseMatrix,
    next_ux: DenseMatrix,
}

fn propagate(plant: &Plant, resp: &SystemResponse, tau: usize) -> StepResiduals {
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    StepResiduals {
        next_xx: &resp.phi_xx[tau] * a + &resp.phi_xy[tau] * c,
        next_xy: a * &resp.phi_xy[tau] + b * &resp.phi_uy[tau],
        next_ux: &resp.phi_ux[tau] * a + &resp.phi_uy[tau] * c,
    }
}

fn norm3(a: MatRef<'_, f64>, b: MatRef<'_, f64>, c: MatRef<'_, f64>) -> f64 {
    (a.squared_norm_l2() + b.squared_norm_l2() + c.squared_norm_l2()).sqrt()
}

/// Evaluates the matrix-form achievability conditions directly, without the
/// Kronecker reformulation.
pub fn verify_response(plant: &Plant, resp: &SystemResponse) -> Result<ResidualReport> {
    resp.check_dims(plant.dims())?;
    let horizon = resp.horizon();
    let (a, b, c) = (plant.a(), plant.b(), plant.c());

    let dynamics = (1..horizon)
        .map(|tau| {
            let p = propagate(plant, resp, tau);
            norm3(
                (&resp.phi_xx[tau + 1] - &p.next_xx).as_ref(),
                (&resp.phi_xy[tau + 1] - &p.next_xy).as_ref(),
                (&resp.phi_ux[tau + 1] - &p.next_ux).as_ref(),
            )
        })
        .collect();

    let transition = (1..=horizon)
        .map(|tau| {
            let lhs = a * &resp.phi_xx[tau] + b * &resp.phi_ux[tau];
            let rhs = &resp.phi_xx[tau] * a + &resp.phi_xy[tau] * c;
            (&lhs - &rhs).norm_l2()
        })
        .collect();

    let nx = plant.nx();
    let initial = [
        resp.phi_xx[0].norm_l2(),
        resp.phi_xy[0].norm_l2(),
        resp.phi_ux[0].norm_l2(),
        (&resp.phi_xx[1] - Mat::<f64>::identity(nx, nx)).norm_l2(),
        (&resp.phi_xy[1] - b * &resp.phi_uy[0]).norm_l2(),
        (&resp.phi_ux[1] - &resp.phi_uy[0] * c).norm_l2(),
    ];

    let p = propagate(plant, resp, horizon);
    let termination = norm3(p.next_xx.as_ref(), p.next_xy.as_ref(), p.next_ux.as_ref());

    Ok(ResidualReport {
        dynamics,
        transition,
        initial,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::mat;

    #[test]
    fn chain_matrices() {
        let p = stochastic_chain(3, 2, 1, 0.2).unwrap();
        let expect = mat![[0.8, 0.2, 0.0], [0.2, 0.6, 0.2], [0.0, 0.2, 0.8]];
        assert!((p.a() - &expect).norm_l2() < 1e-15);
        assert_eq!(p.b().to_owned(), mat![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
        assert_eq!(p.c().to_owned(), mat![[1.0, 0.0, 0.0]]);

        let p = stochastic_chain(2, 1, 1, 0.5).unwrap();
        assert_eq!(p.a().to_owned(), mat![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn chain_rejects_bad_arguments() {
        assert!(matches!(
            stochastic_chain(3, 4, 1, 0.2),
            Err(SlsError::Dimension(_))
        ));
        assert!(matches!(
            stochastic_chain(3, 1, 4, 0.2),
            Err(SlsError::Dimension(_))
        ));
        assert!(matches!(
            stochastic_chain(3, 1, 1, 1.0),
            Err(SlsError::Domain(_))
        ));
        assert!(matches!(
            stochastic_chain(3, 1, 1, 0.0),
            Err(SlsError::Domain(_))
        ));
    }

    #[test]
    fn chain_rows_sum_to_one() {
        for nx in 1..12 {
            let p = stochastic_chain(nx, 1, 1, 0.3).unwrap();
            for i in 0..nx {
                let s: f64 = (0..nx).map(|j| p.a()[(i, j)]).sum();
                assert!((s - 1.0).abs() < 1e-15, "row {i} of Nx={nx} sums to {s}");
            }
        }
    }

    #[test]
    fn scalar_plant_blocks() {
        let (a, b, c) = (0.7, -1.3, 2.1);
        let p = Plant::new(mat![[a]], mat![[b]], mat![[c]]).unwrap();
        let s = build_vectorized(&p);
        assert_eq!(
            s.a_tilde().to_owned(),
            mat![[a, c, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]]
        );
        assert_eq!(s.b_tilde().to_owned(), mat![[0.0], [b], [c]]);
        assert_eq!(s.a_eq().to_owned(), mat![[0.0, -c, b]]);
        assert_eq!(s.b0().to_owned(), mat![[b], [c]]);
    }

    #[test]
    fn vectorized_dimensions() {
        let p = stochastic_chain(5, 3, 2, 0.2).unwrap();
        let s = build_vectorized(&p);
        assert_eq!(s.a_tilde().shape(), (50, 50));
        assert_eq!(s.b_tilde().shape(), (50, 6));
        assert_eq!(s.a_eq().shape(), (25, 50));
        assert_eq!(s.b0().shape(), (25, 6));
    }

    #[test]
    fn b0_is_the_lower_block_of_b_tilde() {
        let p = stochastic_chain(4, 2, 3, 0.2).unwrap();
        let s = build_vectorized(&p);
        let n_xx = s.dims().xx_len();
        let lower = s.b_tilde().subrows(n_xx, s.n_state() - n_xx).to_owned();
        assert_eq!(lower, s.b0().to_owned());
        assert!(s.b_tilde().subrows(0, n_xx).norm_l2() == 0.0);
    }

    #[test]
    fn zero_response_residuals() {
        let p = stochastic_chain(3, 2, 2, 0.2).unwrap();
        let r = verify_response(&p, &SystemResponse::zeros(p.dims(), 4)).unwrap();
        assert!((r.initial[3] - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.max(), r.initial[3]);
        assert!(r.dynamics.iter().chain(&r.transition).all(|&v| v == 0.0));
        assert_eq!(r.termination, 0.0);
        assert_eq!(r.dynamics.len(), 3);
        assert_eq!(r.transition.len(), 4);
        assert_eq!(r.worst().0, "initial[phi_xx[1] - I]");
    }

    #[test]
    fn verify_rejects_mismatched_response() {
        let p = stochastic_chain(3, 2, 2, 0.2).unwrap();
        let other = stochastic_chain(3, 1, 2, 0.2).unwrap();
        let resp = SystemResponse::zeros(other.dims(), 4);
        assert!(matches!(
            verify_response(&p, &resp),
            Err(SlsError::Dimension(_))
        ));
    }

    #[test]
    fn plant_validation() {
        assert!(Plant::new(Mat::zeros(2, 3), Mat::zeros(2, 1), Mat::zeros(1, 2)).is_err());
        assert!(Plant::new(Mat::zeros(2, 2), Mat::zeros(3, 1), Mat::zeros(1, 2)).is_err());
        assert!(Plant::new(Mat::zeros(2, 2), Mat::zeros(2, 1), Mat::zeros(1, 3)).is_err());
        let mut a = Mat::<f64>::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(
            Plant::new(a, Mat::zeros(2, 1), Mat::zeros(1, 2)),
            Err(SlsError::Domain(_))
        ));
    }

    #[test]
    fn trajectory_roundtrip() {
        let p = stochastic_chain(3, 2, 1, 0.2).unwrap();
        let d = p.dims();
        let states: Vec<Vector> = (0..4)
            .map(|t| Col::from_fn(d.state_len(), |k| (t * 100 + k) as f64))
            .collect();
        let inputs: Vec<Vector> = (0..4)
            .map(|t| Col::from_fn(d.input_len(), |k| -((t * 10 + k) as f64)))
            .collect();
        let r = SystemResponse::from_trajectory(d, &states, &inputs).unwrap();
        assert_eq!(r.horizon(), 3);
        for t in 0..4 {
            assert_eq!(r.state(t), states[t]);
            assert_eq!(r.input(t), inputs[t]);
        }
    }
}
