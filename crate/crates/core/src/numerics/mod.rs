//! Dense matrix math, activations, loss, Adam and the finite-difference oracle.

mod adam;
mod dd;
mod gradcheck;
mod matrix;
mod ops;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON as ADAM_EPSILON};
pub use dd::{DoubleDouble, Scalar};
pub use gradcheck::{check_gradients, relative_error, GradCheckEntry, NamedTensors, ParamSet};
pub use matrix::{dot, matmul, Matrix};
pub use ops::{argmax, cross_entropy, sigmoid, softmax_row, PROBABILITY_FLOOR};
