//! Online convex optimization against moving comparators.
//!
//! Projected sub-gradient descent with adaptive, per-coordinate and
//! restart-based learning rates, together with the tools needed to measure
//! dynamic regret: comparator construction under a path-length budget,
//! closed-form upper and lower bounds, and a trace inequality for gradient
//! Gram matrices.

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod optimizer;
pub mod rng;
pub mod scheduler;
pub mod streams;

pub use error::{Error, Result, StreamError};
pub use geometry::{ComparatorPath, ConvexSet, FeasibleSet, Vector};
pub use optimizer::{run, OptimizerState, RunError, StepRate, StepRecord, Trace};
pub use scheduler::{BudgetShape, PathBudget, RatePolicy};
pub use streams::{LossStream, Stream, StreamKind};
