//! Output-feedback System Level Synthesis over finite impulse responses,
//! solved by dynamic programming on the vectorized response dynamics.

pub mod dp;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod objectives;
pub mod oracle;

pub use dp::{
    backward_step_pinv, backward_step_stable, initial_step, solve, solve_approx, AdmissibleSet,
    Allowance, InitialSet, NullCert, Synthesis,
};
pub use error::{Result, SlsError};
pub use linalg::{DenseMatrix, Tolerance, Vector};
pub use model::{
    build_vectorized, stochastic_chain, verify_response, Dims, Plant, ResidualReport,
    SystemResponse, VectorizedSystem,
};
pub use objectives::{
    CostToGoModel, GainAndValue, H2Weights, LQWeights, Objective, QuadForm, StageWeights,
};
pub use oracle::{assemble, solve_kkt, QpSolution, StackedProgram, VariableLayout};
