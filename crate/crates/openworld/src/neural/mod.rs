//! Autoencoder embedding model: dense layers, recorded forward traces,
//! exact backpropagation, stepped-SGD updates, and a finite-difference
//! gradient checker that exercises the whole parameter vector.

mod autoencoder;
mod gradcheck;
mod layer;
mod mlp;
mod optim;

pub use autoencoder::{mse_loss, Autoencoder, GradientSet, ReconstructionTrace};
pub use gradcheck::{check_gradients, finite_diff_check, GradCheckReport, NEAR_ZERO};
pub use layer::{Activation, DenseLayer, LayerGradients};
pub use mlp::{LayerTrace, Mlp, StackTrace};
pub use optim::{apply_step, sgd_step, SgdOptimizer};
