//! Learning stack for the search-and-rescue simulator: the three-branch
//! convolutional actor-critic, exact reverse-mode gradients, PPO-clip
//! losses, Adam, the step-limit curriculum, and the rollout/update trainer.

pub mod buffer;
pub mod checkpoint;
pub mod curriculum;
pub mod evaluate;
pub mod loss;
pub mod net;
pub mod optim;
pub mod spec;
pub mod trainer;

pub use net::{NetOutput, Network};
pub use spec::LayerSpec;

/// Default-precision aliases.
pub type Network64 = Network<f64>;
pub type Trainer64 = trainer::Trainer<f64>;
