//! Regularized kernel methods: minimizes `F(c) = f(K c) + c^T K c / 2` for
//! several convex losses with a fixed-point (Jacobi) solver and a
//! coordinate-descent solver.

pub mod cli;
pub mod coord_descent;
pub mod data;
pub mod error;
pub mod fixed_point;
pub mod kernel;
pub mod loss;
pub mod model;
pub mod oracle;
pub mod problem;
pub mod reformulation;
pub mod sparse;

pub use data::{DataFormat, Dataset};
pub use error::{Error, Result};
pub use kernel::{AlphaRule, GramOperator, KernelSpec};
pub use loss::{LossKind, LossModel};
pub use model::{Model, StepSize};
pub use problem::{IndexRule, Problem, SolverConfig, SolverResult};
pub use sparse::SparseVector;
