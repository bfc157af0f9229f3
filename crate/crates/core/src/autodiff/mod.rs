//! Minimal reverse-mode automatic differentiation and the neural primitives
//! every sub-network is assembled from.

mod graph;
pub mod gradcheck;
pub mod nn;
pub mod optim;
mod tensor;

pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use graph::{backward, Graph, Var};
pub use optim::{AdamConfig, OptimizerState};
pub use tensor::{Param, ParameterSet, Real, Tensor};

/// Mean squared error between `prediction` and `target` (identical shapes).
pub fn mse_loss<T: Real>(g: &mut Graph<T>, prediction: Var, target: Var) -> crate::Result<Var> {
    g.mse(prediction, target)
}
