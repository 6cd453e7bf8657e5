//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{finite_difference_check, GradCheckReport, ParamCheck, REL_FLOOR};
pub use graph::{sigmoid, Graph, Provenance, Var};
pub use params::{ParamId, Parameter, ParameterStore};
pub use tensor::Tensor;
