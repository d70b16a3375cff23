//! Numerical toolkit for multivalued stochastic differential equations
//!
//! ```text
//! dX(t) ∈ b(X(t)) dt + √ε σ(X(t)) dW(t) − A(X(t)) dt
//! ```
//!
//! where `A` is a maximal monotone operator (for instance the normal cone of a
//! closed convex set, which turns the equation into a reflected SDE).
//!
//! The crate is `no_std` and only needs `alloc`. It provides
//!
//! * [`monotone_ops`]: convex domains, projections, resolvents, Yosida
//!   approximations and Cépa's interior constants;
//! * [`models`]: the drift / diffusion pairs with their Lipschitz constants;
//! * [`sim`]: resolvent-step Euler paths `(X, K)` and checks of the solution
//!   inequalities;
//! * [`skeleton`]: the controlled zero-noise equation and minimization of the
//!   control action (the Freidlin–Wentzell rate function);
//! * [`ldp`]: Monte Carlo estimators (plain and Girsanov-tilted), ε→0
//!   extrapolation and Laplace functionals.
//!
//! Parallel execution is abstracted behind [`exec::Executor`]; the default
//! [`exec::Sequential`] runs everything on the calling thread, and all
//! reductions are ordered so results do not depend on the executor.
#![no_std]

extern crate alloc;

pub mod error;
pub mod exec;
pub mod ldp;
mod linalg;
pub mod models;
pub mod monotone_ops;
pub mod sim;
pub mod skeleton;
pub mod stats;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};

pub use models::{H2Constants, Model, ModelKind};
pub use sim::{BrownianPath, SolutionPath, TimeGrid};
pub use skeleton::{Control, PathFunctional, RateOptions, RateResult};
pub use monotone_ops::{CepaConstants, ConvexDomain, FilledGraph, LinearMonotoneMap, MonotoneOperator};


