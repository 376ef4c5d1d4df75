//! Dense network substrate shared by the classifier and the latent transformers.
//!
//! Everything is `f64`. Backpropagation is written out per layer; there is no
//! general computation graph.

mod adam;
mod grad_check;
mod layer;
mod loss;
mod params;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use grad_check::{grad_check, GradCheckReport};
pub use layer::{relu, relu_backward, sigmoid, DenseLayer};
pub use loss::{bce_grad, bce_loss, l2_distance, l2_norm, Penalty, BCE_EPS, NORM_EPS};
pub use params::{Gradient, Parameterized};
