//! Reconstruction from laterally truncated parallel-beam projections.
//!
//! The crate provides a ray-driven projector with an exact transpose,
//! filtered backprojection, B-spline and data-driven tight frames, and
//! Bregmanized operator splitting solvers that recover an image together
//! with an extrapolated sinogram.

pub mod ddtf;
pub mod error;
pub mod fbp;
pub mod framelet;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod projector;
pub mod solver;

pub use error::{Error, Result};
pub use fbp::{fbp_reconstruct, FbpFilter};
pub use framelet::{BankKind, FilterBank, FrameletCoeffs, FrameletSystem};
pub use grid::{restrict, restrict_complement, Image, Sinogram, SinogramGrid, TruncationMask};
pub use projector::{operator_norm_sq, radon_adjoint, radon_forward, ProjectorGeometry, RadonOperator};
pub use solver::{solve_baseline, solve_joint, JointProblem, SolverParams};
