//! Finite-player solver for a variational mean field game with terminal
//! constraints, plus numerical checks of its optimality identities.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, with `F32*` variants for single precision.

pub mod cli;
pub mod descent;
pub mod ensemble;
pub mod equilibrium;
pub mod error;
pub mod model;
pub mod optimality;
pub mod scalar;
pub mod value;
pub mod variational;

pub use descent::SolverOptions;
pub use equilibrium::{solve_equilibrium, CheckOptions, EquilibriumOptions, VerificationBundle};
pub use ensemble::{PlayerGrid, SinglePath, TimeGrid, TrajectoryGrid};
pub use error::{Error, Result};
pub use model::{LagrangianSpec, PotentialSpec, ProblemSpec};
pub use scalar::Scalar;
pub use variational::{ActionBreakdown, MinimizeResult};

pub type Problem = ProblemSpec<f64>;
pub type Potential = PotentialSpec<f64>;
pub type Lagrangian = LagrangianSpec<f64>;
pub type Trajectory = TrajectoryGrid<f64>;
pub type Path = SinglePath<f64>;
pub type Options = SolverOptions<f64>;
pub type Minimized = MinimizeResult<f64>;

pub type F32Problem = ProblemSpec<f32>;
pub type F32Trajectory = TrajectoryGrid<f32>;
pub type F32Options = SolverOptions<f32>;
