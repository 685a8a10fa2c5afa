//! Simulation core for pheromone-guided, locally-communicating multi-agent
//! search and rescue on grid worlds.
//!
//! The crate is organized around one synchronous tick pipeline
//! ([`dynamics::WorldState::step`]): agents move, targets random-walk,
//! pheromone deposits and evaporates, each agent updates its private
//! knowledge maps, detected targets are removed, nearby agents merge
//! knowledge, and shaped rewards are computed. [`episode::run_episode`]
//! drives the pipeline with any [`episode::AgentPolicy`] and records
//! replays and training transitions.
//!
//! All concentration / reward / observation math is generic over the
//! floating-point scalar via [`scalar::Scalar`]; `f64` aliases are exported
//! at the crate root.

pub mod baselines;
pub mod comms;
pub mod dynamics;
pub mod episode;
pub mod fallback;
pub mod gridmap;
pub mod metrics;
pub mod perception;
pub mod pheromone;
pub mod replay;
pub mod reward;
pub mod scalar;
pub mod seeds;

pub use dynamics::{Action, Done, EpisodeConfig};
pub use gridmap::{CellKind, GridMap, Position};
pub use scalar::Scalar;

/// Default-precision aliases for the generic simulation types.
pub type PheromoneField64 = pheromone::PheromoneField<f64>;
pub type KnowledgeMaps64 = perception::KnowledgeMaps<f64>;
pub type ObservationStack64 = perception::ObservationStack<f64>;
pub type WorldState64 = dynamics::WorldState<f64>;
pub type RewardBreakdown64 = reward::RewardBreakdown<f64>;
pub type EpisodeOutcome64 = episode::EpisodeOutcome<f64>;
