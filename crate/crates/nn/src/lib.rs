//! A deliberately small neural-network engine.
//!
//! Supports exactly what the waste-site classifiers need: NHWC convolution,
//! dense layers, max pooling, ReLU/sigmoid, dropout and batch normalization,
//! trained with Adam on binary cross-entropy. Everything is generic over
//! [`Real`] so the same backprop code runs in `f32` for training and in `f64`
//! for finite-difference gradient checks.

mod error;
mod gradcheck;
mod io;
mod layer;
mod network;
mod optim;
mod real;
mod tensor;
mod train;

pub use error::{NnError, Result};
pub use gradcheck::{gradient_check, gradient_check_report, GradCheckReport, GradCheckOptions, Loss};
pub use io::{load_network, read_network, save_network, write_network, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use layer::{LayerSpec, Padding};
pub use network::{build_network, Grads, Mode, Network, Trace};
pub use optim::{Adam, LrSchedule, TrainConfig};
pub use real::Real;
pub use tensor::Tensor;
pub use train::{accuracy, bce_with_logit, evaluate_loss, train, Augment, TrainReport};

/// Seeded counter-based generator used for every random draw in the engine.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Creates the engine RNG from an integer seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
