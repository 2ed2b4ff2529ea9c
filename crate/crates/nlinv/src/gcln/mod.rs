//! The gated continuous logic network: a differentiable conjunction of
//! disjunctions of relaxed atomic formulas, trained by gradient descent.
//!
//! The default architecture is a gated t-conorm (OR) layer over literals
//! feeding a gated t-norm (AND) layer: a CNF with `m` clauses of up to `n`
//! literals. Equality literals use the Gaussian activation; inequality
//! bounds are fit as independent single-literal PBQU models over term
//! combinations and pruned by their mean activation.

mod bounds;
mod model;
mod train;

pub use bounds::{fit_bounds, BoundCandidate, BoundsConfig};
pub use model::{Activation, Clause, GatedNode, GclnModel, Literal};
pub use train::{loss_value, train, weight_project, LambdaSchedule, TrainConfig, TrainError, TrainReport};
